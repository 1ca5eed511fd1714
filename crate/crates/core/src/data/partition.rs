use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Per-client index lists into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_shards(shards: Vec<Vec<usize>>) -> Self {
        Self { shards }
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn into_shards(self) -> Vec<Vec<usize>> {
        self.shards
    }

    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    /// Checks that shards are non-empty, disjoint and cover `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (client, shard) in self.shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::EmptyShard(client));
            }
            for &i in shard {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "index {i} out of range or assigned twice"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("index {missing} unassigned")));
        }
        Ok(())
    }
}

fn indices_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    by_class
}

/// Label-skewed split: for each class, client proportions are drawn from
/// `Dirichlet(alpha)` and each of the class's samples goes to a client drawn
/// from those proportions. Empty clients then take one sample at a time
/// from the currently largest shard.
pub fn partition_dirichlet(labels: &[usize], n_clients: usize, alpha: f64, rng: &mut RngStream) -> Result<Partition> {
    if n_clients == 0 || !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dirichlet partition needs n_clients >= 1 and alpha > 0 (got {n_clients}, {alpha})"
        )));
    }
    if labels.len() < n_clients {
        return Err(Error::NotEnoughSamples {
            samples: labels.len(),
            clients: n_clients,
        });
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut shards = vec![Vec::new(); n_clients];
    let mut weights = vec![0.0; n_clients];
    for class_indices in indices_by_class(labels) {
        if class_indices.is_empty() {
            continue;
        }
        for w in weights.iter_mut() {
            *w = gamma.sample(rng);
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            // every gamma draw underflowed; put the class on one client
            let pick = rng.below(n_clients);
            weights
                .iter_mut()
                .enumerate()
                .for_each(|(k, w)| *w = f64::from(k == pick));
        }
        for i in class_indices {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut chosen = n_clients - 1;
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            shards[chosen].push(i);
        }
    }
    repair_empty(&mut shards);
    for s in shards.iter_mut() {
        s.sort_unstable();
    }
    Ok(Partition { shards })
}

fn repair_empty(shards: &mut [Vec<usize>]) {
    while let Some(empty) = shards.iter().position(|s| s.is_empty()) {
        let largest = (0..shards.len())
            .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
            .expect("at least one shard");
        let moved = shards[largest].pop().expect("largest shard is non-empty");
        shards[empty].push(moved);
    }
}

/// Sorts indices by label, cuts them into `n_clients * shards_per_client`
/// contiguous shards (the remainder joins the last shard) and deals
/// `shards_per_client` random shards to each client.
pub fn partition_pathological(
    labels: &[usize],
    n_clients: usize,
    shards_per_client: usize,
    rng: &mut RngStream,
) -> Result<Partition> {
    if n_clients == 0 || shards_per_client == 0 {
        return Err(Error::InvalidArgument(
            "pathological partition needs n_clients >= 1 and shards_per_client >= 1".into(),
        ));
    }
    let total_shards = n_clients * shards_per_client;
    if total_shards > labels.len() {
        return Err(Error::NotEnoughSamples {
            samples: labels.len(),
            clients: total_shards,
        });
    }
    let sorted: Vec<usize> = indices_by_class(labels).into_iter().flatten().collect();
    let size = sorted.len() / total_shards;
    let pieces: Vec<&[usize]> = (0..total_shards)
        .map(|s| {
            let end = if s + 1 == total_shards {
                sorted.len()
            } else {
                (s + 1) * size
            };
            &sorted[s * size..end]
        })
        .collect();
    let order = rng.permutation(total_shards);
    let shards = order
        .chunks(shards_per_client)
        .map(|chunk| {
            let mut shard: Vec<usize> = chunk.iter().flat_map(|&s| pieces[s].iter().copied()).collect();
            shard.sort_unstable();
            shard
        })
        .collect();
    Ok(Partition { shards })
}
