//! Small dense classifiers with hand-written backpropagation.
//!
//! Parameters live in one flat [`ParamVector`]. Each layer stores its weight
//! matrix row-major as `fan_in x fan_out`, followed by its `fan_out` biases;
//! layers are laid out in forward order.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logreg,
    Mlp,
}

pub const DEFAULT_HIDDEN: [usize; 2] = [200, 100];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Hidden layer widths; empty for logistic regression.
    pub hidden: Vec<usize>,
}

impl ModelSpec {
    pub fn logreg(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Logreg,
            input_dim,
            num_classes,
            hidden: Vec::new(),
        }
    }

    pub fn mlp(input_dim: usize, num_classes: usize, hidden: Vec<usize>) -> Self {
        Self {
            kind: ModelKind::Mlp,
            input_dim,
            num_classes,
            hidden,
        }
    }

    /// `(fan_in, fan_out)` for each layer in forward order.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        if self.kind == ModelKind::Mlp {
            widths.extend_from_slice(&self.hidden);
        }
        widths.push(self.num_classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Flat parameter count.
    pub fn dim(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: params.dim(),
            });
        }
        Ok(())
    }
}

/// Rows of inputs with their labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, labels: &'a [usize]) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.nrows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "batch has {} rows and {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Proximal term `(mu / 2) * ||w - anchor||^2`.
#[derive(Debug, Clone, Copy)]
pub struct Prox<'a> {
    pub mu: f64,
    pub anchor: &'a ParamVector,
}

/// Regularisation added on top of the mean cross-entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct Regularizer<'a> {
    /// L2 coefficient on weight matrices (biases are excluded).
    pub weight_decay: f64,
    pub prox: Option<Prox<'a>>,
}

struct LayerRef<'p> {
    weights: ArrayView2<'p, f64>,
    bias: ArrayView1<'p, f64>,
    offset: usize,
}

fn split_layers<'p>(spec: &ModelSpec, params: &'p ParamVector) -> Vec<LayerRef<'p>> {
    let mut offset = 0;
    let flat = params.as_slice();
    spec.layers()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w_len = fan_in * fan_out;
            let weights = ArrayView2::from_shape((fan_in, fan_out), &flat[offset..offset + w_len])
                .expect("layer shape matches slice");
            let bias = ArrayView1::from(&flat[offset + w_len..offset + w_len + fan_out]);
            let layer = LayerRef { weights, bias, offset };
            offset += w_len + fan_out;
            layer
        })
        .collect()
}

/// Samples initial parameters: weights `N(0, 1/fan_in)`, biases zero.
pub fn init_params(spec: &ModelSpec, rng: &mut RngStream) -> ParamVector {
    let mut values = Vec::with_capacity(spec.dim());
    for (fan_in, fan_out) in spec.layers() {
        let std = 1.0 / (fan_in as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| std * rng.normal()));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector::from_vec(values)
}

fn ensure_finite(values: &Array2<f64>, what: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: what() })
    }
}

/// Pre-activations of every layer; the last entry holds the logits.
pub fn forward_trace(spec: &ModelSpec, params: &ParamVector, inputs: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    spec.check_params(params)?;
    if inputs.ncols() != spec.input_dim {
        return Err(Error::DimMismatch {
            expected: spec.input_dim,
            got: inputs.ncols(),
        });
    }
    let layers = split_layers(spec, params);
    let mut pre = Vec::with_capacity(layers.len());
    let mut act: Option<Array2<f64>> = None;
    for (l, layer) in layers.iter().enumerate() {
        let mut z = match &act {
            None => inputs.dot(&layer.weights),
            Some(a) => a.dot(&layer.weights),
        };
        z += &layer.bias;
        ensure_finite(&z, || format!("layer {l} pre-activation"))?;
        if l + 1 < layers.len() {
            act = Some(z.mapv(relu));
        }
        pre.push(z);
    }
    Ok(pre)
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Row-wise softmax with max subtraction, in place.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Softmax class probabilities, one row per input.
pub fn forward_probs(spec: &ModelSpec, params: &ParamVector, batch: &Batch<'_>) -> Result<Array2<f64>> {
    probs_for_inputs(spec, params, batch.inputs)
}

pub(crate) fn probs_for_inputs(
    spec: &ModelSpec,
    params: &ParamVector,
    inputs: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let mut logits = forward_trace(spec, params, inputs)?.pop().expect("at least one layer");
    softmax_rows(&mut logits);
    Ok(logits)
}

fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let total = logits.rows().into_iter().zip(labels).fold(0.0, |acc, (row, &y)| {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.fold(0.0, |s, &v| s + (v - max).exp()).ln();
        acc + (lse - row[y])
    });
    total / labels.len() as f64
}

fn regularizer_loss(spec: &ModelSpec, params: &ParamVector, reg: &Regularizer<'_>) -> Result<f64> {
    let mut loss = 0.0;
    if reg.weight_decay != 0.0 {
        let sq: f64 = split_layers(spec, params)
            .iter()
            .map(|l| l.weights.fold(0.0, |s, &w| s + w * w))
            .sum();
        loss += 0.5 * reg.weight_decay * sq;
    }
    if let Some(prox) = reg.prox {
        let diff = params.sub(prox.anchor)?;
        loss += 0.5 * prox.mu * diff.dot(&diff)?;
    }
    Ok(loss)
}

fn check_labels(spec: &ModelSpec, batch: &Batch<'_>) -> Result<()> {
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= spec.num_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside [0, {})",
            spec.num_classes
        )));
    }
    Ok(())
}

fn check_regularizer(spec: &ModelSpec, reg: &Regularizer<'_>) -> Result<()> {
    if reg.weight_decay < 0.0 {
        return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
    }
    if let Some(prox) = reg.prox {
        if prox.mu < 0.0 {
            return Err(Error::InvalidArgument("mu must be >= 0".into()));
        }
        spec.check_params(prox.anchor)?;
    }
    Ok(())
}

/// Objective value only. With `batch = None` only the regularisation terms
/// are evaluated.
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: Option<&Batch<'_>>, reg: &Regularizer<'_>) -> Result<f64> {
    spec.check_params(params)?;
    check_regularizer(spec, reg)?;
    let data = match batch {
        Some(b) => {
            check_labels(spec, b)?;
            let logits = forward_trace(spec, params, b.inputs)?
                .pop()
                .expect("at least one layer");
            cross_entropy(&logits, b.labels)
        }
        None => 0.0,
    };
    let total = data + regularizer_loss(spec, params, reg)?;
    if !total.is_finite() {
        return Err(Error::NonFinite { layer: "loss".into() });
    }
    Ok(total)
}

/// Mean cross-entropy plus regularisation, and its exact gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &Batch<'_>,
    reg: &Regularizer<'_>,
) -> Result<(f64, ParamVector)> {
    spec.check_params(params)?;
    check_regularizer(spec, reg)?;
    check_labels(spec, batch)?;

    let layers = split_layers(spec, params);
    let pre = forward_trace(spec, params, batch.inputs)?;
    let logits = pre.last().expect("at least one layer");
    let mut loss = cross_entropy(logits, batch.labels);

    // dL/dlogits = (softmax - onehot) / n
    let n = batch.len() as f64;
    let mut delta = logits.clone();
    softmax_rows(&mut delta);
    for (mut row, &y) in delta.rows_mut().into_iter().zip(batch.labels) {
        row[y] -= 1.0;
    }
    delta.mapv_inplace(|v| v / n);

    let mut grad = vec![0.0; params.dim()];
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let (fan_in, fan_out) = layer.weights.dim();
        let w_len = fan_in * fan_out;
        let activation = if l == 0 { None } else { Some(pre[l - 1].mapv(relu)) };
        {
            let (gw_flat, rest) = grad[layer.offset..].split_at_mut(w_len);
            let mut gw = ArrayViewMut2::from_shape((fan_in, fan_out), gw_flat).expect("layer shape matches slice");
            match &activation {
                None => general_mat_mul(1.0, &batch.inputs.t(), &delta, 0.0, &mut gw),
                Some(a) => general_mat_mul(1.0, &a.t(), &delta, 0.0, &mut gw),
            }
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            rest[..fan_out].copy_from_slice(gb.as_slice().expect("contiguous"));
        }
        if l > 0 {
            let mut upstream = delta.dot(&layer.weights.t());
            // ReLU subgradient at zero is zero.
            upstream.zip_mut_with(&pre[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            ensure_finite(&upstream, || format!("layer {} gradient", l - 1))?;
            delta = upstream;
        }
    }

    if reg.weight_decay != 0.0 {
        let flat = params.as_slice();
        for layer in &layers {
            let (fan_in, fan_out) = layer.weights.dim();
            let range = layer.offset..layer.offset + fan_in * fan_out;
            for (g, &w) in grad[range.clone()].iter_mut().zip(&flat[range]) {
                *g += reg.weight_decay * w;
            }
        }
    }
    loss += regularizer_loss(spec, params, reg)?;
    if let Some(prox) = reg.prox {
        for ((g, &w), &a) in grad.iter_mut().zip(params.iter()).zip(prox.anchor.iter()) {
            *g += prox.mu * (w - a);
        }
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: "loss".into() });
    }
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        let layer = layers.iter().rposition(|l| l.offset <= j).unwrap_or_default();
        return Err(Error::NonFinite {
            layer: format!("layer {layer} parameter gradient"),
        });
    }
    Ok((loss, ParamVector::from_vec(grad)))
}

/// Central finite-difference gradient of [`loss`], one coordinate at a time.
pub fn finite_diff_grad(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: Option<&Batch<'_>>,
    reg: &Regularizer<'_>,
    h: f64,
) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be > 0".into()));
    }
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.dim());
    for j in 0..params.dim() {
        let orig = params[j];
        probe.as_mut_slice()[j] = orig + h;
        let plus = loss(spec, &probe, batch, reg)?;
        probe.as_mut_slice()[j] = orig - h;
        let minus = loss(spec, &probe, batch, reg)?;
        probe.as_mut_slice()[j] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(ParamVector::from_vec(out))
}
