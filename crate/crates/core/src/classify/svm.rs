use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{class_index, Standardizer};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelChoice,
    /// RBF width; `None` uses `1 / (p * var(X))` of the standardized training data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// KKT violation tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: KernelChoice::Rbf,
            gamma: None,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

/// One of the pairwise machines; `f(x) > 0` votes for `positive`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    /// Rows of [`SvmModel::support`].
    pub support: Vec<usize>,
    pub alpha: Vec<f64>,
    pub sign: Vec<f64>,
    pub bias: f64,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub classes: Vec<usize>,
    pub scaler: Standardizer,
    /// Standardized support vectors shared by all machines.
    pub support: DMatrix<f64>,
    pub machines: Vec<BinaryMachine>,
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    gap: f64,
    iterations: usize,
}

/// Dual soft-margin solver with second-order working-set selection.
/// `q` is the dense `y_i y_j K_ij` matrix in row-major order.
fn smo(q: &[f64], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<Solution> {
    let n = y.len();
    let qd: Vec<f64> = (0..n).map(|i| q[i * n + i]).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    let gap = loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let movable = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if movable && v >= gmax {
                gmax = v;
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        if i_sel != usize::MAX {
            let qi = &q[i_sel * n..(i_sel + 1) * n];
            for t in 0..n {
                let movable = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !movable {
                    continue;
                }
                let v = y[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let diff = gmax + v;
                if diff > 0.0 {
                    let mut quad = qd[i_sel] + qd[t] - 2.0 * y[i_sel] * y[t] * qi[t];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -diff * diff / quad;
                    if obj <= best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < tol || j_sel == usize::MAX {
            break gap.max(0.0);
        }
        if iter >= max_iter {
            return Err(Error::NonConvergence { iterations: iter });
        }
        iter += 1;

        let (i, j) = (i_sel, j_sel);
        let qi = &q[i * n..(i + 1) * n];
        let qj = &q[j * n..(j + 1) * n];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = qd[i] + qd[j] + 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    };

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    Ok(Solution {
        alpha,
        rho,
        gap,
        iterations: iter,
    })
}

/// Standardized training data with its linear Gram matrix, shared across a
/// hyperparameter grid.
pub struct SvmPrep {
    scaler: Standardizer,
    z: DMatrix<f64>,
    gram: DMatrix<f64>,
    classes: Vec<usize>,
    idx: Vec<usize>,
    variance: f64,
}

impl SvmPrep {
    pub fn new(x: &DMatrix<f64>, y: &[usize]) -> Result<Self> {
        let n = x.nrows();
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
        let scaler = Standardizer::fit(x);
        let z = scaler.transform(x);
        let gram = &z * z.transpose();
        let count = (z.nrows() * z.ncols()) as f64;
        let mean = z.sum() / count;
        let variance = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        Ok(SvmPrep {
            scaler,
            z,
            gram,
            classes,
            idx,
            variance,
        })
    }

    fn kernel(&self, params: &SvmParams) -> Kernel {
        match params.kernel {
            KernelChoice::Linear => Kernel::Linear,
            KernelChoice::Rbf => {
                let p = self.z.ncols() as f64;
                let gamma = params.gamma.unwrap_or(if self.variance > 0.0 {
                    1.0 / (p * self.variance)
                } else {
                    1.0
                });
                Kernel::Rbf { gamma }
            }
        }
    }

    pub fn fit(&self, params: &SvmParams) -> Result<SvmModel> {
        if !(params.c > 0.0) {
            return Err(Error::InvalidSpec(format!("C must be positive, got {}", params.c)));
        }
        let kernel = self.kernel(params);
        let n = self.z.nrows();
        let k_full = match kernel {
            Kernel::Linear => self.gram.clone(),
            Kernel::Rbf { gamma } => {
                let d = self.gram.diagonal();
                DMatrix::from_fn(n, n, |i, j| (-gamma * (d[i] + d[j] - 2.0 * self.gram[(i, j)]).max(0.0)).exp())
            }
        };
        let k = self.classes.len();
        let mut in_support = vec![usize::MAX; n];
        let mut support_rows = Vec::new();
        let mut machines = Vec::with_capacity(k * (k - 1) / 2);
        for a in 0..k {
            for b in a + 1..k {
                let rows: Vec<usize> = (0..n).filter(|&i| self.idx[i] == a || self.idx[i] == b).collect();
                let y: Vec<f64> = rows.iter().map(|&i| if self.idx[i] == a { 1.0 } else { -1.0 }).collect();
                let m = rows.len();
                let mut q = vec![0.0; m * m];
                for (r, &i) in rows.iter().enumerate() {
                    for (s, &j) in rows.iter().enumerate() {
                        q[r * m + s] = y[r] * y[s] * k_full[(i, j)];
                    }
                }
                let sol = smo(&q, &y, params.c, params.tol, params.max_iter)?;
                let mut machine = BinaryMachine {
                    positive: a,
                    negative: b,
                    support: Vec::new(),
                    alpha: Vec::new(),
                    sign: Vec::new(),
                    bias: -sol.rho,
                    kkt_gap: sol.gap,
                    iterations: sol.iterations,
                };
                for (r, &i) in rows.iter().enumerate() {
                    if sol.alpha[r] > 0.0 {
                        if in_support[i] == usize::MAX {
                            in_support[i] = support_rows.len();
                            support_rows.push(i);
                        }
                        machine.support.push(in_support[i]);
                        machine.alpha.push(sol.alpha[r]);
                        machine.sign.push(y[r]);
                    }
                }
                machines.push(machine);
            }
        }
        let support = self.z.select_rows(support_rows.iter());
        Ok(SvmModel {
            kernel,
            c: params.c,
            classes: self.classes.clone(),
            scaler: self.scaler.clone(),
            support,
            machines,
        })
    }
}

pub fn svm_fit(x: &DMatrix<f64>, y: &[usize], params: &SvmParams) -> Result<SvmModel> {
    SvmPrep::new(x, y)?.fit(params)
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.scaler.mean.len()
    }

    /// Pairwise decision values, one column per machine.
    pub fn decision_function(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::SchemaMismatch(format!(
                "model has {} features, input has {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let z = self.scaler.transform(x);
        let lin = &z * self.support.transpose();
        let kt = match self.kernel {
            Kernel::Linear => lin,
            Kernel::Rbf { gamma } => {
                let zn: Vec<f64> = z.row_iter().map(|r| r.norm_squared()).collect();
                let sn: Vec<f64> = self.support.row_iter().map(|r| r.norm_squared()).collect();
                DMatrix::from_fn(z.nrows(), sn.len(), |i, j| {
                    (-gamma * (zn[i] + sn[j] - 2.0 * lin[(i, j)]).max(0.0)).exp()
                })
            }
        };
        let mut out = DMatrix::zeros(z.nrows(), self.machines.len());
        for (mi, m) in self.machines.iter().enumerate() {
            for i in 0..z.nrows() {
                let mut f = m.bias;
                for ((&s, &a), &y) in m.support.iter().zip(&m.alpha).zip(&m.sign) {
                    f += a * y * kt[(i, s)];
                }
                out[(i, mi)] = f;
            }
        }
        Ok(out)
    }

    /// One-vs-one majority vote; ties go to the lowest class.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let f = self.decision_function(x)?;
        let k = self.classes.len();
        let mut out = Vec::with_capacity(f.nrows());
        for i in 0..f.nrows() {
            let mut votes = vec![0usize; k];
            for (mi, m) in self.machines.iter().enumerate() {
                votes[if f[(i, mi)] > 0.0 { m.positive } else { m.negative }] += 1;
            }
            let mut best = 0;
            for c in 1..k {
                if votes[c] > votes[best] {
                    best = c;
                }
            }
            out.push(self.classes[best]);
        }
        Ok(out)
    }
}

pub fn svm_predict(m: &SvmModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    m.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::lda::tests::blobs;

    fn xor() -> (DMatrix<f64>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (i, (a, b)) in [(-1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)].iter().enumerate() {
            for d in [-0.1, 0.0, 0.1] {
                rows.extend([a + d, b - d]);
                y.push(i / 2);
            }
        }
        (DMatrix::from_row_slice(12, 2, &rows), y)
    }

    fn acc(a: &[usize], b: &[usize]) -> f64 {
        a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
    }

    #[test]
    fn xor_needs_rbf() {
        let (x, y) = xor();
        let rbf = svm_fit(&x, &y, &SvmParams { c: 100.0, kernel: KernelChoice::Rbf, ..Default::default() }).unwrap();
        assert_eq!(acc(&rbf.predict(&x).unwrap(), &y), 1.0);
        for c in [0.1, 1.0, 10.0, 100.0] {
            let lin = svm_fit(&x, &y, &SvmParams { c, kernel: KernelChoice::Linear, ..Default::default() }).unwrap();
            assert!(acc(&lin.predict(&x).unwrap(), &y) <= 0.75);
        }
    }

    #[test]
    fn separable_blobs_linear() {
        let (x, y) = blobs(3, 30, 3, 8.0, 11);
        let m = svm_fit(&x, &y, &SvmParams { c: 1.0, kernel: KernelChoice::Linear, ..Default::default() }).unwrap();
        assert_eq!(acc(&m.predict(&x).unwrap(), &y), 1.0);
        assert_eq!(m.machines.len(), 3);
        for mach in &m.machines {
            assert!(mach.kkt_gap <= 1e-3);
            assert!(mach.alpha.iter().all(|a| *a > 0.0 && *a <= m.c));
        }
    }

    #[test]
    fn duplicated_points_keep_decision_function() {
        let (x, y) = blobs(2, 20, 2, 4.0, 12);
        let params = SvmParams {
            c: 10.0,
            kernel: KernelChoice::Linear,
            tol: 1e-10,
            ..Default::default()
        };
        let m1 = svm_fit(&x, &y, &params).unwrap();
        let mut rows = Vec::new();
        let mut y2 = Vec::new();
        for i in 0..x.nrows() {
            for _ in 0..2 {
                rows.extend([x[(i, 0)], x[(i, 1)]]);
                y2.push(y[i]);
            }
        }
        let xd = DMatrix::from_row_slice(2 * x.nrows(), 2, &rows);
        // duplicating every point doubles the hinge term, as does doubling C
        let mut p2 = params;
        p2.c = params.c / 2.0;
        let m2 = svm_fit(&xd, &y2, &p2).unwrap();
        let probe = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 2.0, 1.0, -1.0, 3.0]);
        let f1 = m1.decision_function(&probe).unwrap();
        let f2 = m2.decision_function(&probe).unwrap();
        assert!((f1 - f2).amax() < 1e-6);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let (x, y) = blobs(2, 30, 2, 0.5, 13);
        let r = svm_fit(&x, &y, &SvmParams { c: 100.0, max_iter: 1, ..Default::default() });
        assert!(matches!(r, Err(Error::NonConvergence { iterations: 1 })));
    }
}
