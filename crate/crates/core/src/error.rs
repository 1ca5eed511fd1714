use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("non-finite value in {layer}")]
    NonFinite { layer: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("idx: bad magic bytes {0:02x} {1:02x}")]
    IdxBadMagic(u8, u8),

    #[error("idx: unsupported type code 0x{0:02x}")]
    IdxUnsupportedType(u8),

    #[error("idx: truncated file, need {expected} bytes but found {got}")]
    IdxTruncated { expected: usize, got: usize },

    #[error("idx: {0} trailing bytes after payload")]
    IdxTrailingBytes(usize),

    #[error("data file {} not found", .0.display())]
    MissingDataFile(std::path::PathBuf),

    #[error("partition: {samples} samples cannot cover {clients} clients")]
    NotEnoughSamples { samples: usize, clients: usize },

    #[error("sampling: need {needed} {class} clients, population has {available}")]
    InsufficientPopulation {
        class: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("client {0} has an empty shard")]
    EmptyShard(usize),

    #[error("upload from client {client} for model {model} was not assigned this round")]
    UnassignedUpload { client: usize, model: usize },

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
