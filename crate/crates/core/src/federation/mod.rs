//! Server-side round machinery: client sampling, permutation-based
//! submodel assignment, workload-aware coefficients, local training,
//! aggregation, and the SHEFL / FedAvg / FedProx / FedEns drivers.

mod aggregate;
mod client;
mod plan;
mod runner;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::vector::ParamVector;

pub use aggregate::{aggregate_shefl, Upload};
pub use client::{local_update, LocalStep, MinibatchSampler};
pub use plan::{build_plan, compute_coefficients, permutation_assign, sample_round, RoundPlan};
pub use runner::{run_algorithm, run_round, Federation, RoundMetrics, RunOutput};
pub use trace::{read_trace, TraceRecord, TraceWriter, TRACE_RECORD_HEADER_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerClass {
    Hpc,
    Lpc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientRecord {
    pub id: usize,
    pub power: PowerClass,
    pub shard: Vec<usize>,
}

impl ClientRecord {
    pub fn num_samples(&self) -> usize {
        self.shard.len()
    }
}

/// Turns a partition into clients; ids below `hpc_count` are high-power.
pub fn build_population(partition: Partition, hpc_count: usize) -> Result<Vec<ClientRecord>> {
    if hpc_count > partition.num_clients() {
        return Err(Error::InvalidArgument(format!(
            "{hpc_count} HPCs requested from {} clients",
            partition.num_clients()
        )));
    }
    partition
        .into_shards()
        .into_iter()
        .enumerate()
        .map(|(id, shard)| {
            if shard.is_empty() {
                return Err(Error::EmptyShard(id));
            }
            let power = if id < hpc_count {
                PowerClass::Hpc
            } else {
                PowerClass::Lpc
            };
            Ok(ClientRecord { id, power, shard })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Shefl,
    FedAvg,
    FedProx,
    FedEns,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Shefl,
        Algorithm::FedAvg,
        Algorithm::FedProx,
        Algorithm::FedEns,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Shefl => "shefl",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::FedEns => "fedens",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_owned()))
    }
}

/// How HPC and LPC averages are weighted against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientMode {
    /// `a_h = (H+L)/(2M) * L/H`, `a_l = (H+L)/2`.
    #[default]
    Eq2,
    /// `a_h = a_l = (H+L)/2`.
    Balanced,
}

/// Local SGD settings shared by every client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub iters: usize,
    /// Multiplicative learning-rate decay...
    pub decay: f64,
    /// ...applied at every round `t > 0` with `t % decay_every == 0`.
    pub decay_every: usize,
}

impl Default for LocalHyper {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            batch_size: 16,
            weight_decay: 1e-3,
            iters: 10,
            decay: 0.99,
            decay_every: 10,
        }
    }
}

/// Everything a federated run needs besides data and model shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub algo: Algorithm,
    pub rounds: usize,
    pub num_models: usize,
    pub clients_per_round: usize,
    pub hpc_per_round: usize,
    pub k_frac: f64,
    pub ratio_r: f64,
    pub local: LocalHyper,
    pub mu: f64,
    pub coefficients: CoefficientMode,
    pub normalize: bool,
    pub wire_quantize: bool,
    /// Record wall-clock milliseconds per round; zero otherwise so output
    /// stays byte-reproducible.
    pub record_timing: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            algo: Algorithm::Shefl,
            rounds: 100,
            num_models: 5,
            clients_per_round: 10,
            hpc_per_round: 5,
            k_frac: 0.1,
            ratio_r: 5.0,
            local: LocalHyper::default(),
            mu: 0.01,
            coefficients: CoefficientMode::Eq2,
            normalize: true,
            wire_quantize: false,
            record_timing: false,
        }
    }
}

impl FederationConfig {
    /// Submodels the algorithm actually maintains.
    pub fn effective_models(&self) -> usize {
        match self.algo {
            Algorithm::Shefl | Algorithm::FedEns => self.num_models,
            Algorithm::FedAvg | Algorithm::FedProx => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.num_models == 0 {
            return fail("num_models must be >= 1".into());
        }
        if self.clients_per_round == 0 {
            return fail("clients_per_round must be >= 1".into());
        }
        if self.hpc_per_round > self.clients_per_round {
            return fail(format!(
                "hpc_per_round ({}) exceeds clients_per_round ({})",
                self.hpc_per_round, self.clients_per_round
            ));
        }
        if !(self.k_frac > 0.0 && self.k_frac <= 1.0) {
            return fail(format!("k_frac {} outside (0, 1]", self.k_frac));
        }
        if !(self.ratio_r >= 1.0) || !self.ratio_r.is_finite() {
            return fail(format!("ratio_r {} must be >= 1", self.ratio_r));
        }
        if !(self.mu >= 0.0) {
            return fail("mu must be >= 0".into());
        }
        let l = &self.local;
        if !(l.lr > 0.0) || l.batch_size == 0 || !(l.weight_decay >= 0.0) || !(l.decay > 0.0) || l.decay_every == 0 {
            return fail("local hyperparameters out of range".into());
        }
        Ok(())
    }
}

/// Global ensemble held by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub round: usize,
    pub submodels: Vec<ParamVector>,
    /// One shuffle of `0..M` per client id, refreshed when `round % M == 0`.
    pub perm_rows: Vec<Vec<usize>>,
    /// Learning rate broadcast for the current round.
    pub lr: f64,
}

impl EnsembleState {
    pub fn new(submodels: Vec<ParamVector>, lr: f64) -> Result<Self> {
        let dim = submodels
            .first()
            .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one submodel".into()))?
            .dim();
        if let Some(bad) = submodels.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(Self {
            round: 0,
            submodels,
            perm_rows: Vec::new(),
            lr,
        })
    }

    pub fn num_models(&self) -> usize {
        self.submodels.len()
    }

    /// Re-draws every client's permutation row from round-derived streams.
    pub fn refresh_permutations(&mut self, master_seed: u64, num_clients: usize) {
        let m = self.num_models();
        let round = self.round as u64;
        self.perm_rows = (0..num_clients)
            .map(|i| crate::rng::derive_stream(master_seed, "perm", round, i as u64).permutation(m))
            .collect();
    }
}
