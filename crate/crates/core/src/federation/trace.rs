//! Per-upload binary trace: a 12-byte record header (`u32` round, `u32`
//! client id, `u32` payload length, little-endian) followed by the encoded
//! sparse delta.

use std::io::Write;

use crate::error::{Error, Result};
use crate::sparsify::SparseDelta;

pub const TRACE_RECORD_HEADER_BYTES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub round: u32,
    pub client: u32,
    pub delta: SparseDelta,
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn record(&mut self, round: usize, client: usize, delta: &SparseDelta) -> Result<()> {
        let payload = delta.encode();
        self.out.write_all(&(round as u32).to_le_bytes())?;
        self.out.write_all(&(client as u32).to_le_bytes())?;
        self.out.write_all(&(payload.len() as u32).to_le_bytes())?;
        self.out.write_all(&payload)?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_trace(mut bytes: &[u8]) -> Result<Vec<TraceRecord>> {
    let word = |b: &[u8], at: usize| u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"));
    let mut records = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < TRACE_RECORD_HEADER_BYTES {
            return Err(Error::InvalidArgument("truncated trace record header".into()));
        }
        let len = word(bytes, 8) as usize;
        let end = TRACE_RECORD_HEADER_BYTES + len;
        if bytes.len() < end {
            return Err(Error::InvalidArgument("truncated trace record payload".into()));
        }
        records.push(TraceRecord {
            round: word(bytes, 0),
            client: word(bytes, 4),
            delta: SparseDelta::decode(&bytes[TRACE_RECORD_HEADER_BYTES..end])?,
        });
        bytes = &bytes[end..];
    }
    Ok(records)
}
