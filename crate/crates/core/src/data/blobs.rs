use ndarray::Array2;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Gaussian blobs: `num_classes` means on a sphere of radius `class_sep`,
/// unit-variance isotropic noise. Train and test share the means; labels
/// cycle through the classes so per-class counts differ by at most one.
pub fn generate_blobs(
    num_classes: usize,
    input_dim: usize,
    n_train: usize,
    n_test: usize,
    class_sep: f64,
    rng: &mut RngStream,
) -> Result<(Dataset, Dataset)> {
    if num_classes == 0 || input_dim == 0 {
        return Err(Error::InvalidArgument(
            "blobs need at least one class and one feature".into(),
        ));
    }
    if n_train < num_classes || n_test < num_classes {
        return Err(Error::InvalidArgument(format!(
            "blobs need at least {num_classes} samples per split"
        )));
    }
    if !(class_sep >= 0.0) || !class_sep.is_finite() {
        return Err(Error::InvalidArgument("class_sep must be finite and >= 0".into()));
    }

    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let dir: Vec<f64> = (0..input_dim).map(|_| rng.normal()).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter().map(|v| class_sep * v / norm).collect()
        })
        .collect();

    let mut draw = |n: usize, split: Split| -> Result<Dataset> {
        let labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
        let mut inputs = Array2::zeros((n, input_dim));
        for (mut row, &y) in inputs.rows_mut().into_iter().zip(&labels) {
            for (x, &m) in row.iter_mut().zip(&means[y]) {
                *x = m + rng.normal();
            }
        }
        Dataset::new(inputs, labels, num_classes, split)
    };
    let train = draw(n_train, Split::Train)?;
    let test = draw(n_test, Split::Test)?;
    Ok((train, test))
}
