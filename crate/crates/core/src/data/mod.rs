//! Datasets and non-IID client partitions.

mod blobs;
mod idx;
mod partition;

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::models::Batch;

pub use blobs::generate_blobs;
pub use idx::{read_idx, read_idx_bytes, write_idx, IdxTensor, IDX_UBYTE};
pub use partition::{partition_dirichlet, partition_pathological, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if labels.is_empty() || inputs.nrows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "dataset has {} rows and {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                layer: "dataset inputs".into(),
            });
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> Batch<'_> {
        Batch {
            inputs: self.inputs.view(),
            labels: &self.labels,
        }
    }

    /// Copies the given rows into an owned `(inputs, labels)` pair.
    pub fn gather(&self, rows: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let inputs = self.inputs.select(ndarray::Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        (inputs, labels)
    }
}

/// Loads an image/label IDX pair, scaling pixels to `[0, 1]`.
pub fn load_idx_dataset(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    num_classes: usize,
    split: Split,
) -> Result<Dataset> {
    let images = read_idx(images)?;
    let labels = read_idx(labels)?;
    let n = *images
        .dims
        .first()
        .ok_or_else(|| Error::InvalidArgument("image tensor has no dimensions".into()))?;
    if labels.dims.len() != 1 || labels.dims[0] != n {
        return Err(Error::InvalidArgument(format!(
            "label tensor dims {:?} do not match {n} images",
            labels.dims
        )));
    }
    let features: usize = images.dims[1..].iter().product();
    let pixels = images.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let inputs = Array2::from_shape_vec((n, features), pixels).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let labels = labels.data.iter().map(|&b| usize::from(b)).collect();
    Dataset::new(inputs, labels, num_classes, split)
}

/// Standard file names of an MNIST-layout directory (also used by
/// Fashion-MNIST): train images, train labels, test images, test labels.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads the 10-class train and test splits from an MNIST-layout directory
/// of uncompressed IDX files.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let paths = MNIST_FILES.map(|f| dir.join(f));
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(Error::MissingDataFile(missing.clone()));
    }
    let train = load_idx_dataset(&paths[0], &paths[1], 10, Split::Train)?;
    let test = load_idx_dataset(&paths[2], &paths[3], 10, Split::Test)?;
    Ok((train, test))
}
