use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use super::{
    aggregate_shefl, build_plan, local_update, sample_round, Algorithm, ClientRecord, EnsembleState, FederationConfig,
    LocalStep, RoundPlan, TraceWriter, Upload,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricRow};
use crate::models::{init_params, ModelSpec};
use crate::rng::derive_stream;
use crate::sparsify::{compute_budgets, uplink_bytes, Budget};

/// Borrowed inputs of one federated run.
#[derive(Debug, Clone, Copy)]
pub struct Federation<'a> {
    pub config: &'a FederationConfig,
    pub spec: &'a ModelSpec,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub clients: &'a [ClientRecord],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    /// 1-based number of the round just completed.
    pub round: usize,
    pub uplink_bytes: u64,
    pub uploads: usize,
    /// Learning rate clients used this round.
    pub lr: f64,
    pub wall_ms: u64,
    /// Participants, assignments and coefficients the round used.
    pub plan: RoundPlan,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricRow>,
    pub state: EnsembleState,
}

impl Federation<'_> {
    pub fn budget(&self) -> Result<Budget> {
        compute_budgets(
            self.config.k_frac,
            self.config.ratio_r,
            self.config.effective_models(),
            self.spec.dim(),
        )
    }

    /// Fresh ensemble: submodel `m` is initialised from stream `("init", 0, m)`.
    pub fn init_state(&self) -> Result<EnsembleState> {
        let submodels = (0..self.config.effective_models())
            .map(|m| init_params(self.spec, &mut derive_stream(self.seed, "init", 0, m as u64)))
            .collect();
        EnsembleState::new(submodels, self.config.local.lr)
    }

    fn local_step(&self, lr: f64) -> LocalStep {
        let local = &self.config.local;
        LocalStep {
            lr,
            batch_size: local.batch_size,
            weight_decay: local.weight_decay,
            iters: local.iters,
            mu: (self.config.algo == Algorithm::FedProx).then_some(self.config.mu),
        }
    }
}

/// Runs round `state.round`: decay, sampling, permutation refresh, local
/// training, aggregation. Advances `state.round` by one.
pub fn run_round<W: Write>(
    fed: &Federation<'_>,
    state: &mut EnsembleState,
    trace: Option<&mut TraceWriter<W>>,
) -> Result<RoundMetrics> {
    let started = Instant::now();
    let config = fed.config;
    let t = state.round;
    if state.num_models() != config.effective_models() {
        return Err(Error::InvalidArgument(format!(
            "state holds {} submodels, {} expects {}",
            state.num_models(),
            config.algo,
            config.effective_models()
        )));
    }
    if t > 0 && t.is_multiple_of(config.local.decay_every) {
        state.lr *= config.local.decay;
    }

    let (hpc, lpc) = sample_round(
        fed.clients,
        config.clients_per_round,
        config.hpc_per_round,
        &mut derive_stream(fed.seed, "sample", t as u64, 0),
    )?;
    if t.is_multiple_of(state.num_models()) || state.perm_rows.len() != fed.clients.len() {
        state.refresh_permutations(fed.seed, fed.clients.len());
    }
    let plan = build_plan(config.algo, state, hpc, lpc, config.coefficients);

    let budget = fed.budget()?;
    let step = fed.local_step(state.lr);
    let frozen: &EnsembleState = state;
    let tasks = plan.tasks();
    let mut uploads = tasks
        .par_iter()
        .filter(|task| task.2 > 0.0)
        .map(|&(client, model, coeff, is_hpc)| {
            let k = if is_hpc { budget.k_h } else { budget.k_l };
            let rng = derive_stream(fed.seed, &format!("local/{model}"), t as u64, client as u64);
            let delta = local_update(
                fed.spec,
                fed.train,
                &fed.clients[client],
                model,
                &frozen.submodels[model],
                &step,
                coeff,
                k,
                rng,
            )?;
            Ok(Upload { client, delta })
        })
        .collect::<Result<Vec<_>>>()?;
    if config.wire_quantize {
        uploads.iter_mut().for_each(|u| u.delta.quantize_wire());
    }
    if let Some(trace) = trace {
        for u in &uploads {
            trace.record(t, u.client, &u.delta)?;
        }
    }

    aggregate_shefl(state, &plan, &uploads, config.normalize)?;
    state.round += 1;

    Ok(RoundMetrics {
        round: state.round,
        uplink_bytes: uplink_bytes(uploads.iter().map(|u| &u.delta)),
        uploads: uploads.len(),
        lr: step.lr,
        wall_ms: if config.record_timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
        plan,
    })
}

/// Runs `config.rounds` rounds of `config.algo`, evaluating the ensemble on
/// the full test split after each.
pub fn run_algorithm<W: Write>(fed: &Federation<'_>, mut trace: Option<&mut TraceWriter<W>>) -> Result<RunOutput> {
    fed.config.validate()?;
    let mut state = fed.init_state()?;
    let test = fed.test.as_batch();
    let mut rows = Vec::with_capacity(fed.config.rounds);
    for _ in 0..fed.config.rounds {
        let started = Instant::now();
        let metrics = run_round(fed, &mut state, trace.as_deref_mut())?;
        let (test_acc, per_model_acc) = evaluate(fed.spec, &state.submodels, &test)?;
        rows.push(MetricRow {
            round: metrics.round,
            algo: fed.config.algo.name().to_owned(),
            seed: fed.seed,
            test_acc,
            per_model_acc,
            uplink_bytes: metrics.uplink_bytes,
            lr: metrics.lr,
            wall_ms: if fed.config.record_timing {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        });
    }
    Ok(RunOutput { rows, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, partition_dirichlet};
    use crate::federation::build_population;

    struct Fixture {
        train: Dataset,
        test: Dataset,
        clients: Vec<ClientRecord>,
        spec: ModelSpec,
    }

    fn fixture(hpc_count: usize) -> Fixture {
        let (train, test) = generate_blobs(4, 6, 800, 200, 4.0, &mut derive_stream(3, "data", 0, 0)).unwrap();
        let part = partition_dirichlet(train.labels(), 20, 0.6, &mut derive_stream(3, "partition", 0, 0)).unwrap();
        let clients = build_population(part, hpc_count).unwrap();
        Fixture {
            train,
            test,
            clients,
            spec: ModelSpec::logreg(6, 4),
        }
    }

    fn fed<'a>(f: &'a Fixture, config: &'a FederationConfig) -> Federation<'a> {
        Federation {
            config,
            spec: &f.spec,
            train: &f.train,
            test: &f.test,
            clients: &f.clients,
            seed: 5,
        }
    }

    fn no_trace() -> Option<&'static mut TraceWriter<Vec<u8>>> {
        None
    }

    #[test]
    fn lr_schedule() {
        let f = fixture(10);
        let config = FederationConfig {
            rounds: 26,
            ..Default::default()
        };
        let out = run_algorithm(&fed(&f, &config), no_trace()).unwrap();
        // row for round t (0-based) reports the lr used during it
        assert_eq!(out.rows[0].lr, 1e-2);
        assert!((out.rows[25].lr - 9.801e-3).abs() < 1e-15);
        assert!((out.rows[9].lr - 1e-2).abs() == 0.0);
        assert!((out.rows[10].lr - 9.9e-3).abs() < 1e-15);
    }

    #[test]
    fn deterministic_rounds() {
        let f = fixture(10);
        let config = FederationConfig {
            rounds: 4,
            ..Default::default()
        };
        let a = run_algorithm(&fed(&f, &config), no_trace()).unwrap();
        let b = run_algorithm(&fed(&f, &config), no_trace()).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn uplink_bytes_closed_form() {
        let f = fixture(10);
        let config = FederationConfig {
            rounds: 3,
            ..Default::default()
        };
        let federation = fed(&f, &config);
        let b = federation.budget().unwrap();
        let out = run_algorithm(&federation, no_trace()).unwrap();
        let expected = 5 * 5 * (8 + 8 * b.k_h as u64) + 5 * (8 + 8 * b.k_l as u64);
        assert!(out.rows.iter().all(|r| r.uplink_bytes == expected));
    }

    #[test]
    fn zero_iterations_leave_models_untouched() {
        let f = fixture(10);
        let mut config = FederationConfig::default();
        config.local.iters = 0;
        let federation = fed(&f, &config);
        let mut state = federation.init_state().unwrap();
        let before = state.submodels.clone();
        for _ in 0..3 {
            run_round(&federation, &mut state, no_trace()).unwrap();
        }
        assert_eq!(state.submodels, before);
    }

    #[test]
    fn trace_matches_uploads() {
        let f = fixture(10);
        let config = FederationConfig {
            rounds: 2,
            ..Default::default()
        };
        let mut writer = TraceWriter::new(Vec::new());
        let out = run_algorithm(&fed(&f, &config), Some(&mut writer)).unwrap();
        let records = crate::federation::read_trace(&writer.into_inner().unwrap()).unwrap();
        assert_eq!(records.len(), 2 * (5 * 5 + 5));
        let per_round: u64 = records
            .iter()
            .filter(|r| r.round == 0)
            .map(|r| r.delta.wire_bytes() as u64)
            .sum();
        assert_eq!(per_round, out.rows[0].uplink_bytes);
    }

    #[test]
    fn fedprox_with_zero_mu_matches_fedavg() {
        let f = fixture(10);
        let avg = FederationConfig {
            algo: Algorithm::FedAvg,
            rounds: 5,
            ..Default::default()
        };
        let prox = FederationConfig {
            algo: Algorithm::FedProx,
            mu: 0.0,
            ..avg.clone()
        };
        let a = run_algorithm(&fed(&f, &avg), no_trace()).unwrap();
        let b = run_algorithm(&fed(&f, &prox), no_trace()).unwrap();
        assert_eq!(a.state.submodels, b.state.submodels);
        let tuned = FederationConfig { mu: 0.5, ..prox };
        let c = run_algorithm(&fed(&f, &tuned), no_trace()).unwrap();
        assert_ne!(a.state.submodels, c.state.submodels);
    }

    #[test]
    fn fedens_single_model_all_lpc_matches_fedavg() {
        let f = fixture(0);
        let base = FederationConfig {
            rounds: 5,
            hpc_per_round: 0,
            num_models: 1,
            ..Default::default()
        };
        let avg = FederationConfig {
            algo: Algorithm::FedAvg,
            ..base.clone()
        };
        let ens = FederationConfig {
            algo: Algorithm::FedEns,
            ..base
        };
        let a = run_algorithm(&fed(&f, &avg), no_trace()).unwrap();
        let b = run_algorithm(&fed(&f, &ens), no_trace()).unwrap();
        assert_eq!(a.state.submodels, b.state.submodels);
    }

    #[test]
    fn shefl_trains() {
        let f = fixture(10);
        let config = FederationConfig {
            rounds: 30,
            ..Default::default()
        };
        let out = run_algorithm(&fed(&f, &config), no_trace()).unwrap();
        let first = out.rows[0].test_acc;
        let last = out.rows.last().unwrap().test_acc;
        assert!(last > 0.6 && last > first, "{first} -> {last}");
    }
}
