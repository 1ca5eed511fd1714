//! Seed-aggregated views of `metrics.csv`: the summary table and per-algo
//! accuracy curves.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::{convergence_rounds, parse_csv, MetricRow};

pub const SUMMARY_HEADER: &str = "algo,runs,final_mean,final_std,best_mean,best_std,conv_mean,nc_count";

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

type Accs = Vec<f64>;
type RunSeries = BTreeMap<u64, Vec<(usize, f64)>>;

/// `(round, mean_acc, std_acc)` points.
pub type PlotSeries = Vec<(usize, f64, f64)>;

/// Accuracy series per `(algo, seed)`, algos in first-appearance order.
fn series_by_run(rows: &[MetricRow]) -> Vec<(String, Vec<(u64, Accs)>)> {
    let mut out: Vec<(String, RunSeries)> = Vec::new();
    for row in rows {
        let idx = match out.iter().position(|(a, _)| *a == row.algo) {
            Some(i) => i,
            None => {
                out.push((row.algo.clone(), BTreeMap::new()));
                out.len() - 1
            }
        };
        out[idx].1.entry(row.seed).or_default().push((row.round, row.test_acc));
    }
    out.into_iter()
        .map(|(algo, runs)| {
            let runs = runs
                .into_iter()
                .map(|(seed, mut pts)| {
                    pts.sort_by_key(|p| p.0);
                    (seed, pts.into_iter().map(|p| p.1).collect())
                })
                .collect();
            (algo, runs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algo: String,
    pub runs: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub best_mean: f64,
    pub best_std: f64,
    /// Mean over runs that reached the threshold; `None` if none did.
    pub conv_mean: Option<f64>,
    pub nc_count: usize,
}

impl SummaryRow {
    pub fn to_csv_line(&self) -> String {
        let conv = self.conv_mean.map_or_else(|| "nc".to_owned(), |c| format!("{c:.6}"));
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.algo, self.runs, self.final_mean, self.final_std, self.best_mean, self.best_std, conv, self.nc_count
        )
    }
}

pub fn summarize(rows: &[MetricRow], threshold: f64) -> Result<Vec<SummaryRow>> {
    series_by_run(rows)
        .into_iter()
        .map(|(algo, runs)| {
            let finals: Vec<f64> = runs.iter().map(|(_, s)| *s.last().unwrap()).collect();
            let bests: Vec<f64> = runs
                .iter()
                .map(|(_, s)| s.iter().copied().fold(f64::MIN, f64::max))
                .collect();
            let mut conv = Vec::new();
            let mut nc_count = 0;
            for (_, s) in &runs {
                match convergence_rounds(s, threshold)? {
                    Some(r) => conv.push(r as f64),
                    None => nc_count += 1,
                }
            }
            let (final_mean, final_std) = mean_std(&finals);
            let (best_mean, best_std) = mean_std(&bests);
            Ok(SummaryRow {
                algo,
                runs: runs.len(),
                final_mean,
                final_std,
                best_mean,
                best_std,
                conv_mean: (!conv.is_empty()).then(|| mean_std(&conv).0),
                nc_count,
            })
        })
        .collect()
}

pub fn render_summary(summary: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in summary {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// `(round, mean_acc, std_acc)` per algo from the text of a metrics CSV.
pub fn emit_plot_data(metrics_csv: &str) -> Result<Vec<(String, PlotSeries)>> {
    let rows = parse_csv(metrics_csv)?;
    let mut by_algo: Vec<(String, BTreeMap<usize, Vec<f64>>)> = Vec::new();
    for row in &rows {
        let idx = match by_algo.iter().position(|(a, _)| *a == row.algo) {
            Some(i) => i,
            None => {
                by_algo.push((row.algo.clone(), BTreeMap::new()));
                by_algo.len() - 1
            }
        };
        by_algo[idx].1.entry(row.round).or_default().push(row.test_acc);
    }
    Ok(by_algo
        .into_iter()
        .map(|(algo, rounds)| {
            let pts = rounds
                .into_iter()
                .map(|(r, accs)| {
                    let (m, s) = mean_std(&accs);
                    (r, m, s)
                })
                .collect();
            (algo, pts)
        })
        .collect())
}

pub fn render_plot_file(points: &[(usize, f64, f64)]) -> String {
    let mut out = String::from("# round mean_acc std_acc\n");
    for (r, m, s) in points {
        out.push_str(&format!("{r} {m:.6} {s:.6}\n"));
    }
    out
}

/// Plot file name for an algo; rejects names that would escape the
/// output directory.
pub fn plot_file_name(algo: &str) -> Result<String> {
    if algo.is_empty() || !algo.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::InvalidArgument(format!("algo name `{algo}` is not file-safe")));
    }
    Ok(format!("plot_{algo}.dat"))
}
