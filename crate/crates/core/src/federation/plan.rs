use std::collections::BTreeMap;

use super::{Algorithm, ClientRecord, CoefficientMode, EnsembleState, PowerClass};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One round's participants, LPC assignments, per-submodel counts and
/// aggregation coefficients.
///
/// For the single-model baselines every participant trains exactly one
/// submodel, so all of them sit in `lpc_selected` regardless of power class.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub hpc_selected: Vec<usize>,
    pub lpc_selected: Vec<usize>,
    pub lpc_assignment: BTreeMap<usize, usize>,
    /// `(H, L)` per submodel.
    pub counts: Vec<(usize, usize)>,
    /// `(a_h, a_l)` per submodel.
    pub coefficients: Vec<(f64, f64)>,
}

impl RoundPlan {
    /// `(client, model, coefficient, is_hpc)` for every local update, in
    /// ascending client then model order.
    pub fn tasks(&self) -> Vec<(usize, usize, f64, bool)> {
        let m = self.counts.len();
        let mut tasks: Vec<(usize, usize, f64, bool)> = self
            .hpc_selected
            .iter()
            .flat_map(|&c| (0..m).map(move |k| (c, k, 0.0, true)))
            .chain(self.lpc_assignment.iter().map(|(&c, &k)| (c, k, 0.0, false)))
            .collect();
        for t in tasks.iter_mut() {
            let (a_h, a_l) = self.coefficients[t.1];
            t.2 = if t.3 { a_h } else { a_l };
        }
        tasks.sort_by_key(|t| (t.0, t.1));
        tasks
    }
}

/// Stratified draw without replacement: `hpc_per_round` HPCs and the rest
/// LPCs. Both lists come back sorted by id.
pub fn sample_round(
    clients: &[ClientRecord],
    clients_per_round: usize,
    hpc_per_round: usize,
    rng: &mut RngStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if hpc_per_round > clients_per_round {
        return Err(Error::InvalidArgument(format!(
            "hpc_per_round ({hpc_per_round}) exceeds clients_per_round ({clients_per_round})"
        )));
    }
    let lpc_per_round = clients_per_round - hpc_per_round;
    let mut draw = |class: PowerClass, label: &'static str, needed: usize| -> Result<Vec<usize>> {
        let mut pool: Vec<usize> = clients.iter().filter(|c| c.power == class).map(|c| c.id).collect();
        if pool.len() < needed {
            return Err(Error::InsufficientPopulation {
                class: label,
                needed,
                available: pool.len(),
            });
        }
        rng.shuffle(&mut pool);
        pool.truncate(needed);
        pool.sort_unstable();
        Ok(pool)
    };
    let hpc = draw(PowerClass::Hpc, "HPC", hpc_per_round)?;
    let lpc = draw(PowerClass::Lpc, "LPC", lpc_per_round)?;
    Ok((hpc, lpc))
}

/// The submodel an LPC trains this round: its permutation row indexed by
/// `round mod M`.
pub fn permutation_assign(state: &EnsembleState, client_id: usize) -> usize {
    state.perm_rows[client_id][state.round % state.num_models()]
}

/// Weights for the HPC and LPC averages of one submodel. When one class is
/// absent the other is used alone with weight 1.
pub fn compute_coefficients(h: usize, l: usize, m: usize, mode: CoefficientMode) -> (f64, f64) {
    if l == 0 {
        return (1.0, 0.0);
    }
    if h == 0 {
        return (0.0, 1.0);
    }
    let half = (h + l) as f64 / 2.0;
    match mode {
        // single rounding: ((H+L) * L) / (2 * M * H)
        CoefficientMode::Eq2 => (((h + l) * l) as f64 / (2 * m * h) as f64, half),
        CoefficientMode::Balanced => (half, half),
    }
}

/// Builds the round plan from the sampled participants and the current
/// permutation rows.
pub fn build_plan(
    algo: Algorithm,
    state: &EnsembleState,
    hpc_sampled: Vec<usize>,
    lpc_sampled: Vec<usize>,
    mode: CoefficientMode,
) -> RoundPlan {
    let m = state.num_models();
    let (hpc_selected, lpc_selected) = match algo {
        Algorithm::Shefl => (hpc_sampled, lpc_sampled),
        _ => {
            let mut all = hpc_sampled;
            all.extend(lpc_sampled);
            all.sort_unstable();
            (Vec::new(), all)
        }
    };
    let lpc_assignment: BTreeMap<usize, usize> = lpc_selected
        .iter()
        .map(|&c| (c, permutation_assign(state, c)))
        .collect();
    let mut counts = vec![(hpc_selected.len(), 0); m];
    for &k in lpc_assignment.values() {
        counts[k].1 += 1;
    }
    let coefficients = counts
        .iter()
        .map(|&(h, l)| match algo {
            Algorithm::Shefl => compute_coefficients(h, l, m, mode),
            _ => (0.0, 1.0),
        })
        .collect();
    RoundPlan {
        hpc_selected,
        lpc_selected,
        lpc_assignment,
        counts,
        coefficients,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::vector::ParamVector;

    fn population(n: usize, hpc: usize) -> Vec<ClientRecord> {
        (0..n)
            .map(|id| ClientRecord {
                id,
                power: if id < hpc { PowerClass::Hpc } else { PowerClass::Lpc },
                shard: vec![id],
            })
            .collect()
    }

    #[test]
    fn stratified_draw() {
        let clients = population(100, 50);
        let (h, l) = sample_round(&clients, 10, 5, &mut derive_stream(1, "sample", 0, 0)).unwrap();
        assert_eq!(h.len(), 5);
        assert_eq!(l.len(), 5);
        assert!(h.iter().all(|&c| c < 50));
        assert!(l.iter().all(|&c| c >= 50));
        let mut all = [h, l].concat();
        all.dedup();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn pure_lpc_round() {
        let clients = population(20, 0);
        let (h, l) = sample_round(&clients, 4, 0, &mut derive_stream(1, "sample", 0, 0)).unwrap();
        assert!(h.is_empty());
        assert_eq!(l.len(), 4);
    }

    #[test]
    fn insufficient_population() {
        let clients = population(10, 2);
        assert!(matches!(
            sample_round(&clients, 5, 3, &mut derive_stream(1, "sample", 0, 0)),
            Err(Error::InsufficientPopulation { class: "HPC", .. })
        ));
        assert!(sample_round(&clients, 2, 3, &mut derive_stream(1, "sample", 0, 0)).is_err());
    }

    #[test]
    fn hpc_selection_frequency() {
        let clients = population(100, 50);
        let mut hits = vec![0usize; 50];
        let rounds = 10_000;
        for t in 0..rounds {
            let (h, _) = sample_round(&clients, 10, 5, &mut derive_stream(11, "sample", t, 0)).unwrap();
            for c in h {
                hits[c] += 1;
            }
        }
        for (c, &n) in hits.iter().enumerate() {
            let freq = n as f64 / rounds as f64;
            assert!((freq - 0.1).abs() <= 0.01, "client {c}: {freq}");
        }
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(compute_coefficients(5, 1, 5, CoefficientMode::Eq2), (0.12, 3.0));
        assert_eq!(compute_coefficients(5, 5, 1, CoefficientMode::Eq2), (5.0, 5.0));
        assert_eq!(compute_coefficients(3, 0, 5, CoefficientMode::Eq2), (1.0, 0.0));
        assert_eq!(compute_coefficients(0, 4, 5, CoefficientMode::Balanced), (0.0, 1.0));
        assert_eq!(compute_coefficients(5, 1, 5, CoefficientMode::Balanced), (3.0, 3.0));
    }

    #[test]
    fn fixed_row_indexing() {
        let mut state = EnsembleState::new(vec![ParamVector::zeros(1); 3], 0.1).unwrap();
        state.perm_rows = vec![vec![2, 0, 1]];
        let got: Vec<usize> = (3..6)
            .map(|t| {
                state.round = t;
                permutation_assign(&state, 0)
            })
            .collect();
        assert_eq!(got, vec![2, 0, 1]);
        let mut single = EnsembleState::new(vec![ParamVector::zeros(1)], 0.1).unwrap();
        single.refresh_permutations(5, 3);
        for t in 0..7 {
            single.round = t;
            assert_eq!(permutation_assign(&single, 2), 0);
        }
    }

    #[test]
    fn plan_counts_and_tasks() {
        let mut state = EnsembleState::new(vec![ParamVector::zeros(1); 3], 0.1).unwrap();
        state.perm_rows = vec![vec![0, 1, 2], vec![1, 2, 0], vec![1, 0, 2], vec![2, 1, 0]];
        let plan = build_plan(Algorithm::Shefl, &state, vec![0], vec![1, 2, 3], CoefficientMode::Eq2);
        assert_eq!(plan.counts, vec![(1, 0), (1, 2), (1, 1)]);
        assert_eq!(plan.counts.iter().map(|c| c.1).sum::<usize>(), plan.lpc_selected.len());
        assert_eq!(plan.coefficients[0], (1.0, 0.0));
        let tasks = plan.tasks();
        assert_eq!(tasks.len(), 3 + 3);
        assert_eq!(
            &tasks[..3].iter().map(|t| (t.0, t.1, t.3)).collect::<Vec<_>>(),
            &[(0, 0, true), (0, 1, true), (0, 2, true)]
        );
        assert_eq!((tasks[3].0, tasks[3].1), (1, 1));

        let fedens = build_plan(Algorithm::FedEns, &state, vec![0], vec![1, 2, 3], CoefficientMode::Eq2);
        assert!(fedens.hpc_selected.is_empty());
        assert_eq!(fedens.lpc_selected, vec![0, 1, 2, 3]);
        assert!(fedens.coefficients.iter().all(|&c| c == (0.0, 1.0)));
    }
}
