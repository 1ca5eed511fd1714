use super::{EnsembleState, RoundPlan};
use crate::error::{Error, Result};
use crate::sparsify::{add_sparse, SparseDelta};
use crate::vector::ParamVector;

/// A sparsified delta together with its sender.
#[derive(Debug, Clone, PartialEq)]
pub struct Upload {
    pub client: usize,
    pub delta: SparseDelta,
}

/// Applies one round of uploads to the ensemble.
///
/// For each submodel the HPC and LPC uploads are averaged separately and
/// summed (uploads already carry their coefficient). With `normalize` the
/// sum is divided by `a_h + a_l`. Deltas already contain the client-side
/// learning rate, so the server step is unit. Uploads are reduced in
/// ascending `(client, model)` order.
pub fn aggregate_shefl(state: &mut EnsembleState, plan: &RoundPlan, uploads: &[Upload], normalize: bool) -> Result<()> {
    let m = state.num_models();
    let dim = state.submodels[0].dim();
    let mut order: Vec<&Upload> = uploads.iter().collect();
    order.sort_by_key(|u| (u.client, u.delta.model_index()));

    let mut hpc_sums: Vec<Option<ParamVector>> = vec![None; m];
    let mut lpc_sums: Vec<Option<ParamVector>> = vec![None; m];
    for up in order {
        let model = up.delta.model_index();
        let is_hpc = plan.hpc_selected.binary_search(&up.client).is_ok();
        let assigned = model < m && (is_hpc || plan.lpc_assignment.get(&up.client) == Some(&model));
        if !assigned {
            return Err(Error::UnassignedUpload {
                client: up.client,
                model,
            });
        }
        let slot = if is_hpc {
            &mut hpc_sums[model]
        } else {
            &mut lpc_sums[model]
        };
        add_sparse(slot.get_or_insert_with(|| ParamVector::zeros(dim)), &up.delta, 1.0)?;
    }

    for (k, submodel) in state.submodels.iter_mut().enumerate() {
        let (h, l) = plan.counts[k];
        let (a_h, a_l) = plan.coefficients[k];
        let weight = if normalize { 1.0 / (a_h + a_l) } else { 1.0 };
        let mut update: Option<ParamVector> = None;
        for (sum, count) in [(&hpc_sums[k], h), (&lpc_sums[k], l)] {
            if let (Some(sum), true) = (sum, count > 0) {
                let mean = sum.scale(1.0 / count as f64);
                update = Some(match update {
                    None => mean,
                    Some(u) => u.add(&mean)?,
                });
            }
        }
        if let Some(update) = update {
            submodel.add_scaled(weight, &update)?;
        }
    }
    Ok(())
}
