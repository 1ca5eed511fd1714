//! Ensemble evaluation, convergence rounds and the per-round metrics table.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{probs_for_inputs, Batch, ModelSpec};
use crate::vector::ParamVector;

pub const METRICS_HEADER: &str = "round,algo,seed,test_acc,per_model_acc,uplink_bytes,lr,wall_ms";

fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn ensemble_probs(per_model: &[Array2<f64>]) -> Array2<f64> {
    let mut mean = per_model[0].clone();
    for p in &per_model[1..] {
        mean += p;
    }
    mean /= per_model.len() as f64;
    mean
}

fn model_probs(spec: &ModelSpec, models: &[ParamVector], inputs: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("ensemble has no submodels".into()));
    }
    models
        .par_iter()
        .map(|params| probs_for_inputs(spec, params, inputs))
        .collect()
}

/// Soft-voting prediction: argmax of the mean softmax over submodels,
/// lowest class index on ties.
pub fn ensemble_predict(spec: &ModelSpec, models: &[ParamVector], batch: &Batch<'_>) -> Result<Vec<usize>> {
    let probs = model_probs(spec, models, batch.inputs)?;
    Ok(argmax_rows(&ensemble_probs(&probs)))
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Ensemble accuracy and each submodel's own accuracy on `batch`.
pub fn evaluate(spec: &ModelSpec, models: &[ParamVector], batch: &Batch<'_>) -> Result<(f64, Vec<f64>)> {
    let probs = model_probs(spec, models, batch.inputs)?;
    let per_model = probs
        .iter()
        .map(|p| accuracy(&argmax_rows(p), batch.labels))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = accuracy(&argmax_rows(&ensemble_probs(&probs)), batch.labels)?;
    Ok((ensemble, per_model))
}

/// 1-based index of the first round at or above `threshold`; `None` if the
/// series never gets there.
pub fn convergence_rounds(acc_series: &[f64], threshold: f64) -> Result<Option<usize>> {
    if acc_series.is_empty() {
        return Err(Error::InvalidArgument("empty accuracy series".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(acc_series.iter().position(|&a| a >= threshold).map(|i| i + 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// 1-based count of completed rounds.
    pub round: usize,
    pub algo: String,
    pub seed: u64,
    pub test_acc: f64,
    pub per_model_acc: Vec<f64>,
    pub uplink_bytes: u64,
    pub lr: f64,
    pub wall_ms: u64,
}

impl MetricRow {
    pub fn to_csv_line(&self) -> String {
        let per_model = self
            .per_model_acc
            .iter()
            .map(|a| format!("{a:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "{},{},{},{:.6},{},{},{:.6},{}",
            self.round, self.algo, self.seed, self.test_acc, per_model, self.uplink_bytes, self.lr, self.wall_ms
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("malformed metrics row ({what}): {line}"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad("field count"));
        }
        let num = |i: usize, what: &str| fields[i].parse::<f64>().map_err(|_| bad(what));
        let per_model_acc = if fields[4].is_empty() {
            Vec::new()
        } else {
            fields[4]
                .split(';')
                .map(|a| a.parse::<f64>().map_err(|_| bad("per_model_acc")))
                .collect::<Result<_>>()?
        };
        Ok(Self {
            round: fields[0].parse().map_err(|_| bad("round"))?,
            algo: fields[1].to_owned(),
            seed: fields[2].parse().map_err(|_| bad("seed"))?,
            test_acc: num(3, "test_acc")?,
            per_model_acc,
            uplink_bytes: fields[5].parse().map_err(|_| bad("uplink_bytes"))?,
            lr: num(6, "lr")?,
            wall_ms: fields[7].parse().map_err(|_| bad("wall_ms"))?,
        })
    }
}

/// Renders rows as a complete CSV document (header included, LF endings).
pub fn render_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_line());
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => return Err(Error::InvalidArgument("metrics csv header mismatch".into())),
    }
    lines.filter(|l| !l.is_empty()).map(MetricRow::parse_csv_line).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;
    use crate::rng::derive_stream;
    use ndarray::array;

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 2]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn convergence_examples() {
        let s = [0.5, 0.7, 0.9, 0.91];
        assert_eq!(convergence_rounds(&s, 0.9).unwrap(), Some(3));
        assert_eq!(convergence_rounds(&s, 0.95).unwrap(), None);
        assert_eq!(convergence_rounds(&s, 0.4).unwrap(), Some(1));
        assert!(convergence_rounds(&[], 0.5).is_err());
        assert!(convergence_rounds(&s, 1.0).is_err());
    }

    #[test]
    fn convergence_monotone_in_threshold() {
        let s = [0.1, 0.4, 0.3, 0.8, 0.6, 0.95];
        let mut prev = Some(0);
        for t in [0.05, 0.2, 0.35, 0.5, 0.7, 0.9, 0.99] {
            let r = convergence_rounds(&s, t).unwrap();
            match (prev, r) {
                (Some(p), Some(c)) => assert!(c >= p),
                (None, Some(_)) => panic!("converged after a higher threshold failed"),
                _ => {}
            }
            prev = r;
        }
    }

    #[test]
    fn hand_averaged_ensemble() {
        // two logreg models on one feature: logits are (0, w*x)
        let spec = ModelSpec::logreg(1, 2);
        let x = array![[1.0]];
        let batch = Batch::new(x.view(), &[0]).unwrap();
        // p1 = [0.6, 0.4] and p2 = [0.3, 0.7]
        let l1 = (0.4f64 / 0.6).ln();
        let l2 = (0.7f64 / 0.3).ln();
        let m1 = ParamVector::from_vec(vec![0.0, l1, 0.0, 0.0]);
        let m2 = ParamVector::from_vec(vec![0.0, l2, 0.0, 0.0]);
        assert_eq!(
            ensemble_predict(&spec, std::slice::from_ref(&m1), &batch).unwrap(),
            vec![0]
        );
        assert_eq!(ensemble_predict(&spec, &[m1, m2], &batch).unwrap(), vec![1]);
    }

    #[test]
    fn copies_of_one_model_match_it() {
        let spec = ModelSpec::mlp(3, 4, vec![5]);
        let params = init_params(&spec, &mut derive_stream(9, "init", 0, 0));
        let mut rng = derive_stream(9, "x", 0, 0);
        let x = Array2::from_shape_fn((50, 3), |_| rng.normal());
        let labels = vec![0; 50];
        let batch = Batch::new(x.view(), &labels).unwrap();
        let single = ensemble_predict(&spec, std::slice::from_ref(&params), &batch).unwrap();
        let copies = ensemble_predict(&spec, &vec![params; 4], &batch).unwrap();
        assert_eq!(single, copies);
        assert!(ensemble_predict(&spec, &[], &batch).is_err());
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let probs = array![[0.25, 0.25, 0.25, 0.25], [0.1, 0.45, 0.45, 0.0]];
        assert_eq!(argmax_rows(&probs), vec![0, 1]);
    }

    #[test]
    fn csv_format() {
        let row = MetricRow {
            round: 3,
            algo: "shefl".into(),
            seed: 7,
            test_acc: 0.5,
            per_model_acc: vec![0.25, 1.0 / 3.0],
            uplink_bytes: 808,
            lr: 0.01 * 0.99,
            wall_ms: 0,
        };
        let text = render_csv(std::slice::from_ref(&row));
        assert_eq!(
            text,
            "round,algo,seed,test_acc,per_model_acc,uplink_bytes,lr,wall_ms\n3,shefl,7,0.500000,0.250000;0.333333,808,0.009900,0\n"
        );
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed[0].per_model_acc, vec![0.25, 0.333333]);
        assert!(parse_csv("bogus\n").is_err());
        assert!(parse_csv(&format!("{METRICS_HEADER}\n1,a,2\n")).is_err());
    }
}
