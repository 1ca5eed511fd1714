//! Runs every `(algo, seed)` pair of an experiment.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use super::config::{DatasetKind, ExperimentConfig, PartitionKind};
use crate::data::{generate_blobs, load_mnist_dir, partition_dirichlet, partition_pathological, Dataset};
use crate::federation::{build_population, run_algorithm, Algorithm, ClientRecord, Federation, TraceWriter};
use crate::metrics::MetricRow;
use crate::models::{ModelKind, ModelSpec};
use crate::rng::derive_stream;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Directory for per-run upload traces, if any.
    pub trace_dir: Option<PathBuf>,
    /// Location of IDX files for the image datasets.
    pub data_dir: Option<PathBuf>,
}

fn truncate(ds: Dataset, limit: Option<usize>) -> Result<Dataset> {
    match limit {
        Some(n) if n < ds.len() => {
            let rows: Vec<usize> = (0..n).collect();
            let (inputs, labels) = ds.gather(&rows);
            Ok(Dataset::new(inputs, labels, ds.num_classes(), ds.split())?)
        }
        _ => Ok(ds),
    }
}

/// Train and test splits. Blobs come from the data seed; image datasets
/// from `data_dir` (default `data/<dataset>`).
pub fn load_data(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetKind::Blobs => {
            let b = &cfg.blobs;
            let mut rng = derive_stream(cfg.data_seed(), "data", 0, 0);
            Ok(generate_blobs(
                b.num_classes,
                b.input_dim,
                b.n_train,
                b.n_test,
                b.class_sep,
                &mut rng,
            )?)
        }
        DatasetKind::Mnist | DatasetKind::Fmnist => {
            let dir = data_dir
                .map(Path::to_path_buf)
                .or_else(|| cfg.data_dir.clone())
                .unwrap_or_else(|| Path::new("data").join(cfg.dataset.name()));
            let (train, test) =
                load_mnist_dir(&dir).with_context(|| format!("loading {} from {}", cfg.dataset, dir.display()))?;
            Ok((
                truncate(train, cfg.images.train_limit)?,
                truncate(test, cfg.images.test_limit)?,
            ))
        }
    }
}

pub fn model_spec(cfg: &ExperimentConfig, train: &Dataset) -> ModelSpec {
    match cfg.model {
        ModelKind::Logreg => ModelSpec::logreg(train.input_dim(), train.num_classes()),
        ModelKind::Mlp => ModelSpec::mlp(train.input_dim(), train.num_classes(), cfg.hidden.clone()),
    }
}

/// Client population for one seed; identical for every algorithm.
pub fn build_clients(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<Vec<ClientRecord>> {
    let mut rng = derive_stream(seed, "partition", 0, 0);
    let partition = match cfg.partition {
        PartitionKind::Dirichlet { alpha } => partition_dirichlet(train.labels(), cfg.num_clients, alpha, &mut rng)?,
        PartitionKind::Pathological { shards_per_client } => {
            partition_pathological(train.labels(), cfg.num_clients, shards_per_client, &mut rng)?
        }
    };
    Ok(build_population(partition, cfg.hpc_count)?)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    train: &Dataset,
    test: &Dataset,
    clients: &[ClientRecord],
    algo: Algorithm,
    seed: u64,
    trace_dir: Option<&Path>,
) -> Result<Vec<MetricRow>> {
    let config = cfg.federation_for(algo);
    let fed = Federation {
        config: &config,
        spec,
        train,
        test,
        clients,
        seed,
    };
    let out = match trace_dir {
        Some(dir) => {
            let path = dir.join(format!("trace_{algo}_seed{seed}.bin"));
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut writer = TraceWriter::new(BufWriter::new(file));
            let out = run_algorithm(&fed, Some(&mut writer))?;
            writer.into_inner()?;
            out
        }
        None => run_algorithm::<std::io::Sink>(&fed, None)?,
    };
    Ok(out.rows)
}

/// All metric rows, ordered by algo (config order), then seed (config
/// order), then round. Output does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .context("building worker pool")?;
    let (train, test) = load_data(cfg, opts.data_dir.as_deref())?;
    let spec = model_spec(cfg, &train);
    pool.install(|| {
        let populations = cfg
            .seeds
            .par_iter()
            .map(|&seed| build_clients(cfg, &train, seed))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(Algorithm, usize)> = cfg
            .algos
            .iter()
            .flat_map(|&a| (0..cfg.seeds.len()).map(move |i| (a, i)))
            .collect();
        let runs = pairs
            .par_iter()
            .map(|&(algo, i)| {
                let seed = cfg.seeds[i];
                run_one(
                    cfg,
                    &spec,
                    &train,
                    &test,
                    &populations[i],
                    algo,
                    seed,
                    opts.trace_dir.as_deref(),
                )
                .with_context(|| format!("{algo} seed {seed}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(runs.into_iter().flatten().collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    #[test]
    fn populations_shared_across_algorithms() {
        let cfg = parse_config("seeds = [1]\n[blobs]\nn_train = 500\nn_test = 50").unwrap();
        let (train, _) = load_data(&cfg, None).unwrap();
        let a = build_clients(&cfg, &train, 1).unwrap();
        let b = build_clients(&cfg, &train, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert_eq!(
            a.iter()
                .filter(|c| c.power == crate::federation::PowerClass::Hpc)
                .count(),
            50
        );
        assert_ne!(a, build_clients(&cfg, &train, 2).unwrap());
    }

    #[test]
    fn rows_are_ordered() {
        let cfg = parse_config(
            "algo = [\"fedavg\", \"shefl\"]\nseeds = [2, 1]\nrounds = 2\n[blobs]\nn_train = 500\nn_test = 50",
        )
        .unwrap();
        let rows = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let keys: Vec<(String, u64, usize)> = rows.iter().map(|r| (r.algo.clone(), r.seed, r.round)).collect();
        let expected: Vec<(String, u64, usize)> = ["fedavg", "shefl"]
            .iter()
            .flat_map(|a| {
                [2u64, 1]
                    .into_iter()
                    .flat_map(move |s| (1..=2).map(move |r| (a.to_string(), s, r)))
            })
            .collect();
        assert_eq!(keys, expected);
        assert!(rows.iter().all(|r| r.wall_ms == 0));
    }

    #[test]
    fn missing_image_files_are_reported() {
        let cfg = parse_config("dataset = \"mnist\"").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = load_data(&cfg, Some(dir.path())).unwrap_err();
        assert!(format!("{err:#}").contains("not found"), "{err:#}");
    }
}
