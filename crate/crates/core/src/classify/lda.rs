use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::{argmax_rows, class_index, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub shrinkage: f64,
    pub tol: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams {
            shrinkage: 0.1,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub classes: Vec<usize>,
    /// Class means in standardized feature space, one row per class.
    pub class_means: DMatrix<f64>,
    pub priors: Vec<f64>,
    pub shrinkage: f64,
    pub tol: f64,
    pub scaler: Standardizer,
    /// Discriminant weights `inv(cov) * mean_k`, one column per class.
    pub coef: DMatrix<f64>,
    pub intercept: Vec<f64>,
}

enum Form {
    /// Within-class scatter divided by its degrees of freedom.
    Primal(DMatrix<f64>),
    /// Gram matrix of the centred rows and their products with the means.
    Dual { gram: DMatrix<f64>, xc_means: DMatrix<f64> },
}

/// Shrinkage-independent part of an LDA fit, reusable across a grid.
pub struct LdaPrep {
    scaler: Standardizer,
    classes: Vec<usize>,
    means: DMatrix<f64>,
    centred: DMatrix<f64>,
    dof: f64,
    nu: f64,
    form: Form,
}

impl LdaPrep {
    pub fn new(x: &DMatrix<f64>, y: &[usize]) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::SchemaMismatch(format!("{n} rows but {} labels", y.len())));
        }
        let (classes, idx) = class_index(y);
        if classes.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: classes.first().copied().unwrap_or(0),
                count: n,
                needed: 2,
            });
        }
        let k = classes.len();
        let mut counts = vec![0usize; k];
        for &c in &idx {
            counts[c] += 1;
        }
        if let Some((c, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(Error::ClassTooSmall {
                class: classes[c],
                count,
                needed: 2,
            });
        }
        let scaler = Standardizer::fit(x);
        let mut z = scaler.transform(x);
        let mut means = DMatrix::zeros(k, p);
        for (i, &c) in idx.iter().enumerate() {
            for j in 0..p {
                means[(c, j)] += z[(i, j)];
            }
        }
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            for j in 0..p {
                means[(c, j)] *= inv;
            }
        }
        for (i, &c) in idx.iter().enumerate() {
            for j in 0..p {
                z[(i, j)] -= means[(c, j)];
            }
        }
        let dof = (n - k).max(1) as f64;
        let trace = z.norm_squared() / dof;
        let nu = trace / p as f64;
        let form = if p <= n {
            let s = z.tr_mul(&z) / dof;
            Form::Primal(s)
        } else {
            let gram = &z * z.transpose();
            let xc_means = &z * means.transpose();
            Form::Dual { gram, xc_means }
        };
        Ok(LdaPrep {
            scaler,
            classes,
            means,
            centred: z,
            dof,
            nu,
            form,
        })
    }

    /// Shrunk pooled covariance; materialised on demand.
    pub fn covariance(&self, shrinkage: f64) -> DMatrix<f64> {
        let p = self.means.ncols();
        let s = match &self.form {
            Form::Primal(s) => s.clone(),
            Form::Dual { .. } => self.centred.tr_mul(&self.centred) / self.dof,
        };
        s * (1.0 - shrinkage) + DMatrix::identity(p, p) * (shrinkage * self.nu)
    }

    pub fn fit(&self, params: &LdaParams) -> Result<LdaModel> {
        let lambda = params.shrinkage;
        if !(0.0..=1.0).contains(&lambda) || !(params.tol > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "shrinkage {lambda} must be in [0, 1] and tol {} positive",
                params.tol
            )));
        }
        let p = self.means.ncols();
        let k = self.classes.len();
        let singular = Error::SingularCovariance { shrinkage: lambda };
        if !(self.nu > 0.0) {
            return Err(singular);
        }
        let mt = self.means.transpose();
        let coef = match &self.form {
            Form::Primal(s) => {
                let cov = s * (1.0 - lambda) + DMatrix::identity(p, p) * (lambda * self.nu);
                let chol = Cholesky::new(cov).ok_or(singular)?;
                let l = chol.l_dirty();
                let floor = params.tol * self.nu;
                if (0..p).any(|i| l[(i, i)] * l[(i, i)] < floor) {
                    return Err(Error::SingularCovariance { shrinkage: lambda });
                }
                chol.solve(&mt)
            }
            Form::Dual { gram, xc_means } => {
                if lambda <= 0.0 {
                    return Err(singular);
                }
                let a = lambda * self.nu;
                if lambda >= 1.0 {
                    mt / a
                } else {
                    // Woodbury: (aI + b Xc'Xc)^-1 = (I - Xc'(c I + G)^-1 Xc) / a
                    let b = (1.0 - lambda) / self.dof;
                    let n = gram.nrows();
                    let inner = gram + DMatrix::identity(n, n) * (a / b);
                    let chol: Cholesky<f64, Dyn> = Cholesky::new(inner).ok_or(singular)?;
                    let y = chol.solve(xc_means);
                    (mt - self.centred.tr_mul(&y)) / a
                }
            }
        };
        let prior = 1.0 / k as f64;
        let intercept = (0..k)
            .map(|c| -0.5 * self.means.row(c).transpose().dot(&coef.column(c)) + prior.ln())
            .collect();
        Ok(LdaModel {
            classes: self.classes.clone(),
            class_means: self.means.clone(),
            priors: vec![prior; k],
            shrinkage: lambda,
            tol: params.tol,
            scaler: self.scaler.clone(),
            coef,
            intercept,
        })
    }
}

pub fn lda_fit(x: &DMatrix<f64>, y: &[usize], params: &LdaParams) -> Result<LdaModel> {
    LdaPrep::new(x, y)?.fit(params)
}

impl LdaModel {
    pub fn n_features(&self) -> usize {
        self.coef.nrows()
    }

    /// Discriminant scores, one column per class.
    pub fn decision_function(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::SchemaMismatch(format!(
                "model has {} features, input has {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let mut s = self.scaler.transform(x) * &self.coef;
        for (c, b) in self.intercept.iter().enumerate() {
            s.column_mut(c).add_scalar_mut(*b);
        }
        Ok(s)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let s = self.decision_function(x)?;
        Ok(argmax_rows(&s).into_iter().map(|c| self.classes[c]).collect())
    }
}

pub fn lda_predict(m: &LdaModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    m.predict(x)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn blobs(k: usize, per: usize, p: usize, sep: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(k * per, p);
        let mut y = Vec::new();
        for c in 0..k {
            for r in 0..per {
                let i = c * per + r;
                for j in 0..p {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let centre = if j == c % p { sep } else { 0.0 };
                    x[(i, j)] = centre + z;
                }
                y.push(c);
            }
        }
        (x, y)
    }

    fn accuracy(a: &[usize], b: &[usize]) -> f64 {
        a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs(2, 50, 2, 10.0, 1);
        let m = lda_fit(&x, &y, &LdaParams { shrinkage: 0.0, tol: 1e-4 }).unwrap();
        assert_eq!(accuracy(&m.predict(&x).unwrap(), &y), 1.0);
    }

    #[test]
    fn identical_classes_near_chance() {
        let (x, _) = blobs(1, 400, 3, 0.0, 2);
        let y: Vec<usize> = (0..400).map(|i| i % 4).collect();
        let (xt, _) = blobs(1, 4000, 3, 0.0, 3);
        let yt: Vec<usize> = (0..4000).map(|i| i % 4).collect();
        let m = lda_fit(&x, &y, &LdaParams::default()).unwrap();
        let acc = accuracy(&m.predict(&xt).unwrap(), &yt);
        assert!((acc - 0.25).abs() < 0.04, "{acc}");
    }

    #[test]
    fn full_shrinkage_is_nearest_centroid() {
        let (x, y) = blobs(3, 20, 4, 1.0, 4);
        let m = lda_fit(&x, &y, &LdaParams { shrinkage: 1.0, tol: 1e-4 }).unwrap();
        let z = m.scaler.transform(&x);
        let pred = m.predict(&x).unwrap();
        for i in 0..z.nrows() {
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da = (z.row(i) - m.class_means.row(a)).norm();
                    let db = (z.row(i) - m.class_means.row(b)).norm();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(pred[i], best);
        }
    }

    #[test]
    fn dual_matches_primal() {
        // p > n forces the low-rank path; compare against an explicit inverse
        let (x, y) = blobs(3, 6, 30, 2.0, 5);
        let prep = LdaPrep::new(&x, &y).unwrap();
        let m = prep.fit(&LdaParams { shrinkage: 0.3, tol: 1e-4 }).unwrap();
        let cov = prep.covariance(0.3);
        let direct = cov.clone().try_inverse().unwrap() * m.class_means.transpose();
        assert!((direct - &m.coef).amax() < 1e-8);
        assert!((cov.clone() - cov.transpose()).amax() < 1e-12);
        assert!(cov.symmetric_eigenvalues().min() > 0.0);
        assert!(matches!(
            prep.fit(&LdaParams { shrinkage: 0.0, tol: 1e-4 }),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn collinear_features_without_shrinkage_are_singular() {
        let (mut x, y) = blobs(2, 40, 3, 3.0, 6);
        for i in 0..x.nrows() {
            x[(i, 2)] = 2.0 * x[(i, 0)] - x[(i, 1)];
        }
        assert!(matches!(
            lda_fit(&x, &y, &LdaParams { shrinkage: 0.0, tol: 1e-4 }),
            Err(Error::SingularCovariance { .. })
        ));
        assert!(lda_fit(&x, &y, &LdaParams { shrinkage: 0.1, tol: 1e-4 }).is_ok());
    }

    #[test]
    fn midpoint_tie_goes_to_lowest_class() {
        let x = DMatrix::from_row_slice(4, 1, &[-1.0, -2.0, 1.0, 2.0]);
        let m = lda_fit(&x, &[3, 3, 5, 5], &LdaParams::default()).unwrap();
        let mid = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(m.predict(&mid).unwrap(), vec![3]);
        assert!(matches!(m.predict(&DMatrix::zeros(1, 2)), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn class_too_small() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(matches!(
            lda_fit(&x, &[0, 0, 1], &LdaParams::default()),
            Err(Error::ClassTooSmall { class: 1, .. })
        ));
    }

    #[test]
    fn rescaling_features_keeps_predictions() {
        let (x, y) = blobs(3, 30, 5, 1.5, 7);
        let scales = [1.0, 100.0, 0.01, 7.0, 3.0];
        let mut xs = x.clone();
        for j in 0..5 {
            xs.column_mut(j).scale_mut(scales[j]);
        }
        let a = lda_fit(&x, &y, &LdaParams::default()).unwrap().predict(&x).unwrap();
        let b = lda_fit(&xs, &y, &LdaParams::default()).unwrap().predict(&xs).unwrap();
        assert_eq!(a, b);
    }
}
