//! Top-k sparsification of client deltas and uplink byte accounting.
//!
//! On the simulated wire a delta is an 8-byte header (`u32` dim, `u16` model
//! index, `u16` reserved) followed by one 8-byte entry per retained
//! coordinate (`u32` index, `f32` value), all little-endian.

use crate::error::{Error, Result};
use crate::vector::ParamVector;

pub const HEADER_BYTES: usize = 8;
pub const ENTRY_BYTES: usize = 8;

/// Index/value pairs of a sparsified update for one submodel.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDelta {
    dim: usize,
    model_index: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseDelta {
    /// Builds a delta, checking that indices are strictly increasing and in range.
    pub fn new(dim: usize, model_index: usize, indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() || indices.len() > dim {
            return Err(Error::InvalidArgument(format!(
                "{} indices, {} values for dim {dim}",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.last().is_some_and(|&i| i as usize >= dim) {
            return Err(Error::InvalidArgument(
                "sparse indices must be strictly increasing and below dim".into(),
            ));
        }
        Ok(Self {
            dim,
            model_index,
            indices,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_index(&self) -> usize {
        self.model_index
    }

    pub fn with_model_index(mut self, model_index: usize) -> Self {
        self.model_index = model_index;
        self
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    /// Rounds every value to the nearest `f32`, as it would arrive on the wire.
    pub fn quantize_wire(&mut self) {
        for v in self.values.iter_mut() {
            *v = f64::from(*v as f32);
        }
    }

    pub fn wire_bytes(&self) -> usize {
        HEADER_BYTES + ENTRY_BYTES * self.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.model_index as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out.extend_from_slice(&i.to_le_bytes());
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Inverse of [`encode`](Self::encode); the entry count follows from the slice length.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES || !(bytes.len() - HEADER_BYTES).is_multiple_of(ENTRY_BYTES) {
            return Err(Error::InvalidArgument(format!(
                "{} bytes is not a whole sparse delta",
                bytes.len()
            )));
        }
        let dim = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let model_index = u16::from_le_bytes(bytes[4..6].try_into().expect("2 bytes")) as usize;
        let (indices, values) = bytes[HEADER_BYTES..]
            .chunks_exact(ENTRY_BYTES)
            .map(|e| {
                let i = u32::from_le_bytes(e[0..4].try_into().expect("4 bytes"));
                let v = f32::from_le_bytes(e[4..8].try_into().expect("4 bytes"));
                (i, f64::from(v))
            })
            .unzip();
        Self::new(dim, model_index, indices, values)
    }
}

/// Per-submodel uplink element budgets for the two client classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    /// Entries in the single submodel an LPC uploads.
    pub k_l: usize,
    /// Entries in each of the `M` submodels an HPC uploads.
    pub k_h: usize,
    pub k_frac: f64,
    pub r: f64,
    pub m: usize,
    pub d: usize,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// `k_l = round(k_frac * d)`, `k_h = round(r * k_frac * d / M)`, both
/// clamped to `[1, d]`, so an HPC's total upload is `r` times an LPC's.
pub fn compute_budgets(k_frac: f64, r: f64, m: usize, d: usize) -> Result<Budget> {
    if !(k_frac > 0.0 && k_frac <= 1.0) || !(r >= 1.0) || !r.is_finite() || m == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "budget needs 0 < k_frac <= 1, r >= 1, M >= 1, d >= 1 (got {k_frac}, {r}, {m}, {d})"
        )));
    }
    let clamp = |x: f64| (round_half_up(x) as usize).clamp(1, d);
    Ok(Budget {
        k_l: clamp(k_frac * d as f64),
        k_h: clamp(r * k_frac * d as f64 / m as f64),
        k_frac,
        r,
        m,
        d,
    })
}

/// Keeps the `k` largest-magnitude entries of `v`; ties go to the lower index.
pub fn top_k(v: &ParamVector, k: usize, model_index: usize) -> Result<SparseDelta> {
    let dim = v.dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!("top-k with k = {k} on dim {dim}")));
    }
    let mut order: Vec<u32> = (0..dim as u32).collect();
    let by_magnitude = |a: &u32, b: &u32| v[*b as usize].abs().total_cmp(&v[*a as usize].abs()).then(a.cmp(b));
    if k < dim {
        order.select_nth_unstable_by(k - 1, by_magnitude);
        order.truncate(k);
    }
    order.sort_unstable();
    let values = order.iter().map(|&i| v[i as usize]).collect();
    Ok(SparseDelta {
        dim,
        model_index,
        indices: order,
        values,
    })
}

/// `dense + scale * delta`, touching only the delta's support.
pub fn apply_sparse(dense: &ParamVector, delta: &SparseDelta, scale: f64) -> Result<ParamVector> {
    let mut out = dense.clone();
    add_sparse(&mut out, delta, scale)?;
    Ok(out)
}

/// In-place form of [`apply_sparse`].
pub fn add_sparse(dense: &mut ParamVector, delta: &SparseDelta, scale: f64) -> Result<()> {
    if dense.dim() != delta.dim {
        return Err(Error::DimMismatch {
            expected: dense.dim(),
            got: delta.dim,
        });
    }
    let slice = dense.as_mut_slice();
    for (i, v) in delta.entries() {
        slice[i] += scale * v;
    }
    Ok(())
}

/// Total bytes a set of deltas occupies on the wire.
pub fn uplink_bytes<'a>(deltas: impl IntoIterator<Item = &'a SparseDelta>) -> u64 {
    deltas.into_iter().map(|d| d.wire_bytes() as u64).sum()
}
