//! Experiment configuration: a flat `key = value` file with `[local]`,
//! `[blobs]` and `[mnist]` sections, parsed as TOML.

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;
use toml::{Table, Value};

use crate::federation::{Algorithm, CoefficientMode, FederationConfig, LocalHyper};
use crate::models::{ModelKind, DEFAULT_HIDDEN};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("key `{key}` expects {expected}")]
    WrongType { key: String, expected: &'static str },

    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Mnist,
    Fmnist,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Blobs => "blobs",
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fmnist => "fmnist",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionKind {
    Dirichlet { alpha: f64 },
    Pathological { shards_per_client: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobsConfig {
    pub num_classes: usize,
    pub input_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub class_sep: f64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            input_dim: 16,
            n_train: 10_000,
            n_test: 2_000,
            class_sep: 10.0,
        }
    }
}

/// Optional truncation of the image datasets, for quick runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageConfig {
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub model: ModelKind,
    pub hidden: Vec<usize>,
    pub algos: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Seed for dataset generation; the first run seed when unset.
    pub data_seed: Option<u64>,
    pub num_clients: usize,
    pub hpc_count: usize,
    pub partition: PartitionKind,
    pub threshold: f64,
    pub data_dir: Option<PathBuf>,
    pub blobs: BlobsConfig,
    pub images: ImageConfig,
    /// Per-run federation settings; `algo` is overwritten for each run.
    pub federation: FederationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Blobs,
            model: ModelKind::Logreg,
            hidden: DEFAULT_HIDDEN.to_vec(),
            algos: Algorithm::ALL.to_vec(),
            seeds: (0..10).collect(),
            data_seed: None,
            num_clients: 100,
            hpc_count: 50,
            partition: PartitionKind::Dirichlet { alpha: 0.6 },
            threshold: 0.9,
            data_dir: None,
            blobs: BlobsConfig::default(),
            images: ImageConfig::default(),
            federation: FederationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn data_seed(&self) -> u64 {
        self.data_seed.or_else(|| self.seeds.first().copied()).unwrap_or(0)
    }

    /// Federation settings for one algorithm.
    pub fn federation_for(&self, algo: Algorithm) -> FederationConfig {
        FederationConfig {
            algo,
            ..self.federation.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.algos.is_empty() {
            return invalid("algo list is empty".into());
        }
        if self.seeds.is_empty() {
            return invalid("seed list is empty".into());
        }
        if self.num_clients == 0 {
            return invalid("num_clients must be >= 1".into());
        }
        if self.hpc_count > self.num_clients {
            return invalid(format!(
                "hpc_count ({}) exceeds num_clients ({})",
                self.hpc_count, self.num_clients
            ));
        }
        let f = &self.federation;
        if f.hpc_per_round > self.hpc_count {
            return invalid(format!(
                "hpc_per_round ({}) exceeds hpc_count ({})",
                f.hpc_per_round, self.hpc_count
            ));
        }
        if f.clients_per_round - f.hpc_per_round.min(f.clients_per_round) > self.num_clients - self.hpc_count {
            return invalid("not enough low-power clients for clients_per_round - hpc_per_round".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return invalid(format!("threshold {} outside (0, 1)", self.threshold));
        }
        match self.partition {
            PartitionKind::Dirichlet { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return invalid(format!("alpha {alpha} must be positive"));
            }
            PartitionKind::Pathological { shards_per_client: 0 } => {
                return invalid("shards_per_client must be >= 1".into());
            }
            _ => {}
        }
        if self.model == ModelKind::Mlp && (self.hidden.is_empty() || self.hidden.contains(&0)) {
            return invalid("hidden layer widths must be >= 1".into());
        }
        let b = &self.blobs;
        if b.num_classes < 2 || b.input_dim == 0 || b.n_test == 0 || b.n_train < self.num_clients {
            return invalid(
                "blobs needs >= 2 classes, >= 1 feature, test samples and a train sample per client".into(),
            );
        }
        f.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Parses and validates a config file. Empty text yields the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(1);
        ConfigError::Syntax {
            line,
            message: e.message().to_owned(),
        }
    })?;
    let mut cfg = ExperimentConfig::default();
    let mut partition = None;
    let mut alpha = None;
    let mut shards = None;

    for (key, value) in &table {
        let fed = &mut cfg.federation;
        match key.as_str() {
            "dataset" => {
                cfg.dataset = match str_value(key, value)? {
                    "blobs" => DatasetKind::Blobs,
                    "mnist" => DatasetKind::Mnist,
                    "fmnist" => DatasetKind::Fmnist,
                    other => return Err(ConfigError::Invalid(format!("unknown dataset `{other}`"))),
                }
            }
            "model" => {
                cfg.model = match str_value(key, value)? {
                    "logreg" => ModelKind::Logreg,
                    "mlp" => ModelKind::Mlp,
                    other => return Err(ConfigError::Invalid(format!("unknown model `{other}`"))),
                }
            }
            "hidden" => cfg.hidden = usize_list(key, value)?,
            "algo" => {
                cfg.algos = match value {
                    Value::String(s) => vec![parse_algo(s)?],
                    Value::Array(items) => items
                        .iter()
                        .map(|v| parse_algo(str_value(key, v)?))
                        .collect::<Result<_, _>>()?,
                    _ => return wrong(key, "a string or an array of strings"),
                }
            }
            "rounds" => fed.rounds = usize_value(key, value)?,
            "seeds" => {
                cfg.seeds = usize_list(key, value)?.into_iter().map(|s| s as u64).collect();
            }
            "data_seed" => cfg.data_seed = Some(usize_value(key, value)? as u64),
            "num_clients" => cfg.num_clients = usize_value(key, value)?,
            "hpc_count" => cfg.hpc_count = usize_value(key, value)?,
            "clients_per_round" => fed.clients_per_round = usize_value(key, value)?,
            "hpc_per_round" => fed.hpc_per_round = usize_value(key, value)?,
            "M" | "num_models" => fed.num_models = usize_value(key, value)?,
            "k_frac" => fed.k_frac = float_value(key, value)?,
            "ratio_r" => fed.ratio_r = float_value(key, value)?,
            "partition" => partition = Some(str_value(key, value)?.to_owned()),
            "alpha" => alpha = Some(float_value(key, value)?),
            "shards_per_client" => shards = Some(usize_value(key, value)?),
            "mu" => fed.mu = float_value(key, value)?,
            "coefficients" => {
                fed.coefficients = match str_value(key, value)? {
                    "eq2" => CoefficientMode::Eq2,
                    "balanced" => CoefficientMode::Balanced,
                    other => return Err(ConfigError::Invalid(format!("unknown coefficient mode `{other}`"))),
                }
            }
            "normalize" => fed.normalize = bool_value(key, value)?,
            "wire_quantize" => fed.wire_quantize = bool_value(key, value)?,
            "threshold" => cfg.threshold = float_value(key, value)?,
            "data_dir" => cfg.data_dir = Some(PathBuf::from(str_value(key, value)?)),
            "local" => parse_local(section(key, value)?, &mut fed.local)?,
            "blobs" => parse_blobs(section(key, value)?, &mut cfg.blobs)?,
            "mnist" | "fmnist" => parse_images(key, section(key, value)?, &mut cfg.images)?,
            _ => return Err(ConfigError::UnknownKey(key.clone())),
        }
    }

    cfg.partition = match partition.as_deref().unwrap_or("dirichlet") {
        "dirichlet" => {
            if shards.is_some() {
                return Err(ConfigError::Invalid(
                    "shards_per_client needs partition = \"pathological\"".into(),
                ));
            }
            PartitionKind::Dirichlet {
                alpha: alpha.unwrap_or(0.6),
            }
        }
        "pathological" => {
            if alpha.is_some() {
                return Err(ConfigError::Invalid("alpha needs partition = \"dirichlet\"".into()));
            }
            PartitionKind::Pathological {
                shards_per_client: shards.unwrap_or(4),
            }
        }
        other => return Err(ConfigError::Invalid(format!("unknown partition `{other}`"))),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_local(table: &Table, local: &mut LocalHyper) -> Result<(), ConfigError> {
    for (key, value) in table {
        let full = format!("local.{key}");
        match key.as_str() {
            "lr" => local.lr = float_value(&full, value)?,
            "batch" | "batch_size" => local.batch_size = usize_value(&full, value)?,
            "weight_decay" => local.weight_decay = float_value(&full, value)?,
            "iters" => local.iters = usize_value(&full, value)?,
            "decay" => local.decay = float_value(&full, value)?,
            "decay_every" => local.decay_every = usize_value(&full, value)?,
            _ => return Err(ConfigError::UnknownKey(full)),
        }
    }
    Ok(())
}

fn parse_blobs(table: &Table, blobs: &mut BlobsConfig) -> Result<(), ConfigError> {
    for (key, value) in table {
        let full = format!("blobs.{key}");
        match key.as_str() {
            "num_classes" => blobs.num_classes = usize_value(&full, value)?,
            "input_dim" => blobs.input_dim = usize_value(&full, value)?,
            "n_train" => blobs.n_train = usize_value(&full, value)?,
            "n_test" => blobs.n_test = usize_value(&full, value)?,
            "class_sep" => blobs.class_sep = float_value(&full, value)?,
            _ => return Err(ConfigError::UnknownKey(full)),
        }
    }
    Ok(())
}

fn parse_images(name: &str, table: &Table, images: &mut ImageConfig) -> Result<(), ConfigError> {
    for (key, value) in table {
        let full = format!("{name}.{key}");
        match key.as_str() {
            "train_limit" => images.train_limit = Some(usize_value(&full, value)?),
            "test_limit" => images.test_limit = Some(usize_value(&full, value)?),
            _ => return Err(ConfigError::UnknownKey(full)),
        }
    }
    Ok(())
}

fn parse_algo(s: &str) -> Result<Algorithm, ConfigError> {
    s.parse().map_err(|e: crate::Error| ConfigError::Invalid(e.to_string()))
}

fn wrong<T>(key: &str, expected: &'static str) -> Result<T, ConfigError> {
    Err(ConfigError::WrongType {
        key: key.to_owned(),
        expected,
    })
}

fn section<'a>(key: &str, value: &'a Value) -> Result<&'a Table, ConfigError> {
    value.as_table().map_or_else(|| wrong(key, "a [section]"), Ok)
}

fn str_value<'a>(key: &str, value: &'a Value) -> Result<&'a str, ConfigError> {
    value.as_str().map_or_else(|| wrong(key, "a string"), Ok)
}

fn bool_value(key: &str, value: &Value) -> Result<bool, ConfigError> {
    value.as_bool().map_or_else(|| wrong(key, "a boolean"), Ok)
}

fn usize_value(key: &str, value: &Value) -> Result<usize, ConfigError> {
    match value.as_integer() {
        Some(i) if i >= 0 => Ok(i as usize),
        _ => wrong(key, "a non-negative integer"),
    }
}

fn float_value(key: &str, value: &Value) -> Result<f64, ConfigError> {
    match value {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => wrong(key, "a number"),
    }
}

fn usize_list(key: &str, value: &Value) -> Result<Vec<usize>, ConfigError> {
    value
        .as_array()
        .map_or_else(|| wrong(key, "an array of integers"), Ok)?
        .iter()
        .map(|v| usize_value(key, v))
        .collect()
}
