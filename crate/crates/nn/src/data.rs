//! In-memory training examples built from a generated dataset.

use beamseq_core::dataset::{Dataset, Split};
use ndarray::{Array1, Array2, Array3};

use crate::ffn::FfnBatch;
use crate::scalar::Scalar;
use crate::seq2seq::Seq2SeqBatch;
use crate::train::Examples;

/// Standardized windows and their target beam sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqSamples<T> {
    /// Each `T x F`.
    pub features: Vec<Array2<T>>,
    pub targets: Vec<Vec<usize>>,
    /// Index of each sample in the source dataset.
    pub source_index: Vec<usize>,
}

impl<T: Scalar> SeqSamples<T> {
    pub fn from_dataset(dataset: &Dataset, split: Split) -> Self {
        let (t, f) = (dataset.input_len, dataset.num_features);
        let mut out = Self { features: Vec::new(), targets: Vec::new(), source_index: Vec::new() };
        for i in dataset.indices(split) {
            let x = dataset.standardized(i);
            out.features.push(Array2::from_shape_fn((t, f), |(a, b)| T::of(x[a * f + b])));
            out.targets.push(dataset.samples[i].labels.iter().map(|&l| l as usize).collect());
            out.source_index.push(i);
        }
        out
    }
}

impl<T: Scalar> Examples<Seq2SeqBatch<T>> for SeqSamples<T> {
    fn len(&self) -> usize {
        self.features.len()
    }

    fn batch(&self, positions: &[usize]) -> Seq2SeqBatch<T> {
        let (t, f) = self.features[positions[0]].dim();
        let k = self.targets[positions[0]].len();
        let mut features = Array3::zeros((positions.len(), t, f));
        let mut targets = Array2::zeros((positions.len(), k));
        for (row, &p) in positions.iter().enumerate() {
            features.index_axis_mut(ndarray::Axis(0), row).assign(&self.features[p]);
            for (j, &l) in self.targets[p].iter().enumerate() {
                targets[[row, j]] = l;
            }
        }
        Seq2SeqBatch { features, targets }
    }
}

/// Latest standardized snapshot of each window with the next-slot beam.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSamples<T> {
    pub features: Vec<Array1<T>>,
    pub labels: Vec<usize>,
    pub source_index: Vec<usize>,
}

impl<T: Scalar> SnapshotSamples<T> {
    pub fn from_dataset(dataset: &Dataset, split: Split) -> Self {
        let (t, f) = (dataset.input_len, dataset.num_features);
        let mut out = Self { features: Vec::new(), labels: Vec::new(), source_index: Vec::new() };
        for i in dataset.indices(split) {
            let x = dataset.standardized(i);
            out.features.push(x[(t - 1) * f..].iter().map(|&v| T::of(v)).collect());
            out.labels.push(dataset.samples[i].labels[0] as usize);
            out.source_index.push(i);
        }
        out
    }
}

impl<T: Scalar> Examples<FfnBatch<T>> for SnapshotSamples<T> {
    fn len(&self) -> usize {
        self.features.len()
    }

    fn batch(&self, positions: &[usize]) -> FfnBatch<T> {
        let f = self.features[positions[0]].len();
        let mut features = Array2::zeros((positions.len(), f));
        for (row, &p) in positions.iter().enumerate() {
            features.row_mut(row).assign(&self.features[p]);
        }
        FfnBatch { features, labels: positions.iter().map(|&p| self.labels[p]).collect() }
    }
}
