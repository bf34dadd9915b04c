//! Shrinkage LDA, one-vs-one SVM, leave-one-repetition-out evaluation and
//! the Davies-Bouldin index.

mod cv;
mod dbi;
pub(crate) mod lda;
mod svm;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cv::{
    cv_evaluate, fold_rows, permute_labels, train_fold, CvPlan, EvalResult, FoldResult, Grid, HyperParams, Model,
    ModelFamily,
};
pub use dbi::{davies_bouldin, davies_bouldin_matrix};
pub use lda::{lda_fit, lda_predict, LdaModel, LdaParams, LdaPrep};
pub use svm::{svm_fit, svm_predict, BinaryMachine, Kernel, KernelChoice, SvmModel, SvmParams, SvmPrep};

/// Per-column z-score fitted on training rows. Constant columns keep a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            scale.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            for v in col.iter_mut() {
                *v = (*v - m) / s;
            }
        }
        z
    }
}

/// Sorted distinct labels and each row's position among them.
pub(crate) fn class_index(y: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let idx = y.iter().map(|c| classes.binary_search(c).unwrap()).collect();
    (classes, idx)
}

/// Column of the row maximum; the first column wins ties.
pub(crate) fn argmax_rows(s: &DMatrix<f64>) -> Vec<usize> {
    (0..s.nrows())
        .map(|i| {
            let mut best = 0;
            for c in 1..s.ncols() {
                if s[(i, c)] > s[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_zero_mean_unit_scale() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let s = Standardizer::fit(&x);
        let z = s.transform(&x);
        assert!(z.column(0).sum().abs() < 1e-12);
        assert!((z.column(0).norm_squared() / 3.0 - 1.0).abs() < 1e-12);
        assert_eq!(z.column(1).amax(), 0.0);
    }

    #[test]
    fn ties_go_first() {
        let s = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert_eq!(argmax_rows(&s), vec![0, 1]);
    }
}
