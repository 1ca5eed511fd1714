use super::ClientRecord;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{loss_and_grad, Batch, ModelSpec, Prox, Regularizer};
use crate::rng::RngStream;
use crate::sparsify::{top_k, SparseDelta};
use crate::vector::ParamVector;

/// Settings for one client's local training pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStep {
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub iters: usize,
    /// Proximal coefficient anchored at the received global model.
    pub mu: Option<f64>,
}

/// Epoch-style minibatches: walk a shuffled copy of the shard and reshuffle
/// once fewer than `batch_size` unseen samples remain. A shard no larger
/// than the batch yields the whole shard every time.
#[derive(Debug)]
pub struct MinibatchSampler<'a> {
    shard: &'a [usize],
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: RngStream,
}

impl<'a> MinibatchSampler<'a> {
    pub fn new(shard: &'a [usize], batch_size: usize, mut rng: RngStream) -> Self {
        let mut order = shard.to_vec();
        rng.shuffle(&mut order);
        Self {
            shard,
            order,
            pos: 0,
            batch_size: batch_size.max(1),
            rng,
        }
    }

    pub fn next_batch(&mut self) -> &[usize] {
        let take = self.batch_size.min(self.shard.len());
        if self.pos + take > self.order.len() {
            self.order.copy_from_slice(self.shard);
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let rows = &self.order[self.pos..self.pos + take];
        self.pos += take;
        rows
    }
}

/// Trains one submodel on the client's shard from the global weights and
/// returns `top_k(coeff * (w_local - w_global), budget_k)`.
#[allow(clippy::too_many_arguments)]
pub fn local_update(
    spec: &ModelSpec,
    train: &Dataset,
    client: &ClientRecord,
    model_index: usize,
    global: &ParamVector,
    step: &LocalStep,
    coeff: f64,
    budget_k: usize,
    rng: RngStream,
) -> Result<SparseDelta> {
    if client.shard.is_empty() {
        return Err(Error::EmptyShard(client.id));
    }
    if !(coeff > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "client {} called with coefficient {coeff}",
            client.id
        )));
    }
    let reg = Regularizer {
        weight_decay: step.weight_decay,
        prox: step.mu.map(|mu| Prox { mu, anchor: global }),
    };
    let mut sampler = MinibatchSampler::new(&client.shard, step.batch_size, rng);
    let mut local = global.clone();
    for _ in 0..step.iters {
        let (inputs, labels) = train.gather(sampler.next_batch());
        let batch = Batch::new(inputs.view(), &labels)?;
        let (_, grad) = loss_and_grad(spec, &local, &batch, &reg)?;
        local.add_scaled(-step.lr, &grad)?;
    }
    let mut diff = local.sub(global)?;
    if coeff != 1.0 {
        diff = diff.scale(coeff);
    }
    top_k(&diff, budget_k, model_index)
}
