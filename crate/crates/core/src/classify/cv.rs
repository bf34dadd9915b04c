use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, davies_bouldin_matrix, KernelChoice, LdaModel, LdaParams, LdaPrep, SvmModel, SvmParams, SvmPrep};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::{GestureId, GESTURE_NAMES, N_GESTURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Lda,
    Svm,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Lda => "lda",
            ModelFamily::Svm => "svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub lda_shrinkage: Vec<f64>,
    pub lda_tol: Vec<f64>,
    pub svm_c: Vec<f64>,
    pub svm_kernel: Vec<KernelChoice>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            lda_shrinkage: vec![0.0, 0.1, 0.3, 0.5, 1.0],
            lda_tol: vec![1e-4, 1e-2],
            svm_c: vec![0.1, 1.0, 10.0, 100.0],
            svm_kernel: vec![KernelChoice::Linear, KernelChoice::Rbf],
        }
    }
}

impl Grid {
    pub fn points(&self, family: ModelFamily) -> Vec<HyperParams> {
        match family {
            ModelFamily::Lda => self
                .lda_shrinkage
                .iter()
                .flat_map(|&shrinkage| {
                    self.lda_tol
                        .iter()
                        .map(move |&tol| HyperParams::Lda(LdaParams { shrinkage, tol }))
                })
                .collect(),
            ModelFamily::Svm => self
                .svm_c
                .iter()
                .flat_map(|&c| {
                    self.svm_kernel.iter().map(move |&kernel| {
                        HyperParams::Svm(SvmParams {
                            c,
                            kernel,
                            ..Default::default()
                        })
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum HyperParams {
    Lda(LdaParams),
    Svm(SvmParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Lda(LdaModel),
    Svm(SvmModel),
}

impl Model {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        match self {
            Model::Lda(m) => m.predict(x),
            Model::Svm(m) => m.predict(x),
        }
    }
}

enum Prep {
    Lda(LdaPrep),
    Svm(SvmPrep),
}

impl Prep {
    fn new(family: ModelFamily, x: &DMatrix<f64>, y: &[usize]) -> Result<Prep> {
        Ok(match family {
            ModelFamily::Lda => Prep::Lda(LdaPrep::new(x, y)?),
            ModelFamily::Svm => Prep::Svm(SvmPrep::new(x, y)?),
        })
    }

    fn fit(&self, hp: &HyperParams) -> Result<Model> {
        match (self, hp) {
            (Prep::Lda(p), HyperParams::Lda(h)) => Ok(Model::Lda(p.fit(h)?)),
            (Prep::Svm(p), HyperParams::Svm(h)) => Ok(Model::Svm(p.fit(h)?)),
            _ => Err(Error::InvalidSpec("hyperparameters do not match the model family".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvPlan {
    /// Number of repetitions; each is the test fold once.
    pub folds: usize,
    /// Select hyperparameters by inner leave-one-repetition-out CV.
    pub nested: bool,
    pub dbi: bool,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan {
            folds: 4,
            nested: true,
            dbi: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_repetition: u8,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub best: HyperParams,
    /// Mean inner accuracy of the chosen point, when a selection ran.
    pub inner_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub family: ModelFamily,
    pub n_rows: usize,
    pub n_features: usize,
    pub folds: Vec<FoldResult>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Counts indexed `[true][predicted]` by gesture id.
    pub confusion: Vec<Vec<u32>>,
    pub dbi: Option<f64>,
}

impl EvalResult {
    /// Rows scaled to sum to one; empty rows stay zero.
    pub fn confusion_normalized(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .map(|row| {
                let s: u32 = row.iter().sum();
                row.iter()
                    .map(|&c| if s > 0 { c as f64 / s as f64 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    pub fn write_confusion_csv(&self, path: &Path, normalized: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(GESTURE_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        let norm = self.confusion_normalized();
        for g in 0..N_GESTURES {
            let mut rec = vec![GESTURE_NAMES[g].to_string()];
            if normalized {
                rec.extend(norm[g].iter().map(|v| v.to_string()));
            } else {
                rec.extend(self.confusion[g].iter().map(|v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Data {
    x: DMatrix<f64>,
    y: Vec<usize>,
    reps: Vec<u8>,
}

impl Data {
    fn new(fm: &FeatureMatrix) -> Data {
        Data {
            x: DMatrix::from_row_slice(fm.n_rows(), fm.n_cols(), &fm.data),
            y: fm.labels(),
            reps: fm.rows.iter().map(|r| r.repetition).collect(),
        }
    }

    fn rows(&self, keep: impl Fn(u8) -> bool) -> Vec<usize> {
        (0..self.y.len()).filter(|&i| keep(self.reps[i])).collect()
    }

    fn subset(&self, rows: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
        (self.x.select_rows(rows.iter()), rows.iter().map(|&i| self.y[i]).collect())
    }
}

fn check(fm: &FeatureMatrix, plan: &CvPlan) -> Result<()> {
    if plan.folds < 2 || plan.folds > 32 {
        return Err(Error::InvalidSpec(format!("{} folds", plan.folds)));
    }
    if let Some(r) = fm.rows.iter().find(|r| r.repetition as usize >= plan.folds) {
        return Err(Error::InvalidSpec(format!(
            "row with repetition {} but only {} folds",
            r.repetition, plan.folds
        )));
    }
    let gestures: BTreeSet<GestureId> = fm.rows.iter().map(|r| r.gesture).collect();
    let present: BTreeSet<(GestureId, u8)> = fm.rows.iter().map(|r| (r.gesture, r.repetition)).collect();
    for g in &gestures {
        for rep in 0..plan.folds as u8 {
            if !present.contains(&(*g, rep)) {
                return Err(Error::MissingRepetition {
                    gesture: g.index(),
                    repetition: rep as usize,
                });
            }
        }
    }
    Ok(())
}

/// Training and test row indices of every fold, in repetition order.
pub fn fold_rows(fm: &FeatureMatrix, plan: &CvPlan) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    check(fm, plan)?;
    Ok((0..plan.folds as u8)
        .map(|t| {
            let train = (0..fm.n_rows()).filter(|&i| fm.rows[i].repetition != t).collect();
            let test = (0..fm.n_rows()).filter(|&i| fm.rows[i].repetition == t).collect();
            (train, test)
        })
        .collect())
}

/// Accuracy of every grid point, trained on the repetitions in `mask`, on
/// each repetition in `eval`. `None` marks points that could not be fitted.
type InnerTable = Vec<Option<Vec<(u8, f64)>>>;

fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::SingularCovariance { .. } | Error::NonConvergence { .. })
}

fn inner_table(data: &Data, family: ModelFamily, points: &[HyperParams], mask: u32, eval: &[u8]) -> Result<InnerTable> {
    let train = data.rows(|r| mask >> r & 1 == 1);
    let (xt, yt) = data.subset(&train);
    let prep = Prep::new(family, &xt, &yt)?;
    drop(xt);
    let tests: Vec<(u8, DMatrix<f64>, Vec<usize>)> = eval
        .iter()
        .map(|&r| {
            let rows = data.rows(|q| q == r);
            let (x, y) = data.subset(&rows);
            (r, x, y)
        })
        .collect();
    let mut out = Vec::with_capacity(points.len());
    for hp in points {
        match prep.fit(hp) {
            Ok(model) => {
                let mut accs = Vec::with_capacity(tests.len());
                for (r, x, y) in &tests {
                    accs.push((*r, accuracy(y, &model.predict(x)?)));
                }
                out.push(Some(accs));
            }
            Err(e) if is_skippable(&e) => out.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn inner_masks(folds: usize, t: u8) -> Vec<(u32, u8)> {
    let all = (1u32 << folds) - 1;
    (0..folds as u8)
        .filter(|&r| r != t)
        .map(|r| (all & !(1 << t) & !(1 << r), r))
        .collect()
}

/// Index of the best grid point for outer fold `t`, with its inner score.
fn select<'a>(
    folds: usize,
    t: u8,
    points: &[HyperParams],
    table: impl Fn(u32) -> Option<&'a InnerTable>,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for g in 0..points.len() {
        let mut sum = 0.0;
        let mut ok = true;
        for (mask, r) in inner_masks(folds, t) {
            let entry = table(mask).and_then(|tab| tab[g].as_ref());
            match entry.and_then(|accs| accs.iter().find(|(q, _)| *q == r)) {
                Some((_, a)) => sum += a,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let score = sum / (folds - 1) as f64;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((g, score));
        }
    }
    best.ok_or_else(|| Error::SingularCovariance {
        shrinkage: match points.first() {
            Some(HyperParams::Lda(p)) => p.shrinkage,
            _ => 0.0,
        },
    })
}

fn fit_selected(
    data: &Data,
    family: ModelFamily,
    points: &[HyperParams],
    t: u8,
    selected: Option<(usize, f64)>,
) -> Result<(Model, HyperParams, Vec<usize>)> {
    let train = data.rows(|r| r != t);
    let (xt, yt) = data.subset(&train);
    let prep = Prep::new(family, &xt, &yt)?;
    drop(xt);
    match selected {
        Some((g, _)) => Ok((prep.fit(&points[g])?, points[g], train)),
        None => {
            // without selection take the first point that fits
            let mut last = None;
            for hp in points {
                match prep.fit(hp) {
                    Ok(m) => return Ok((m, *hp, train)),
                    Err(e) if is_skippable(&e) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.unwrap_or_else(|| Error::InvalidSpec("empty hyperparameter grid".into())))
        }
    }
}

fn runs_selection(plan: &CvPlan, points: &[HyperParams]) -> bool {
    plan.nested && points.len() > 1 && plan.folds >= 3
}

/// Model for outer fold `test_repetition`, trained and tuned on the other
/// repetitions only.
pub fn train_fold(
    fm: &FeatureMatrix,
    plan: &CvPlan,
    family: ModelFamily,
    grid: &Grid,
    test_repetition: u8,
) -> Result<(Model, HyperParams)> {
    check(fm, plan)?;
    let data = Data::new(fm);
    let points = grid.points(family);
    let selected = if runs_selection(plan, &points) {
        let masks = inner_masks(plan.folds, test_repetition);
        let tables = masks
            .iter()
            .map(|&(mask, r)| Ok((mask, inner_table(&data, family, &points, mask, &[r])?)))
            .collect::<Result<Vec<_>>>()?;
        Some(select(plan.folds, test_repetition, &points, |m| {
            tables.iter().find(|(k, _)| *k == m).map(|(_, t)| t)
        })?)
    } else {
        None
    };
    let (model, hp, _) = fit_selected(&data, family, &points, test_repetition, selected)?;
    Ok((model, hp))
}

/// Leave-one-repetition-out evaluation with nested grid search.
pub fn cv_evaluate(fm: &FeatureMatrix, plan: &CvPlan, family: ModelFamily, grid: &Grid) -> Result<EvalResult> {
    check(fm, plan)?;
    let points = grid.points(family);
    if points.is_empty() {
        return Err(Error::InvalidSpec("empty hyperparameter grid".into()));
    }
    let data = Data::new(fm);
    let folds = plan.folds;
    let all = (1u32 << folds) - 1;

    let tables: Vec<(u32, InnerTable)> = if runs_selection(plan, &points) {
        let masks: BTreeSet<u32> = (0..folds as u8)
            .flat_map(|t| inner_masks(folds, t).into_iter().map(|(m, _)| m))
            .collect();
        masks
            .into_par_iter()
            .map(|mask| {
                let eval: Vec<u8> = (0..folds as u8).filter(|r| (all & !mask) >> r & 1 == 1).collect();
                Ok((mask, inner_table(&data, family, &points, mask, &eval)?))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let lookup = |m: u32| tables.iter().find(|(k, _)| *k == m).map(|(_, t)| t);

    let fold_out = (0..folds as u8)
        .into_par_iter()
        .map(|t| {
            let selected = if tables.is_empty() {
                None
            } else {
                Some(select(folds, t, &points, lookup)?)
            };
            let (model, hp, train) = fit_selected(&data, family, &points, t, selected)?;
            let test = data.rows(|r| r == t);
            let (xs, ys) = data.subset(&test);
            let pred = model.predict(&xs)?;
            let result = FoldResult {
                test_repetition: t,
                n_train: train.len(),
                n_test: test.len(),
                accuracy: accuracy(&ys, &pred),
                best: hp,
                inner_accuracy: selected.map(|(_, s)| s),
            };
            Ok((result, ys, pred))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut confusion = vec![vec![0u32; N_GESTURES]; N_GESTURES];
    let mut folds_res = Vec::with_capacity(folds);
    for (res, ys, pred) in fold_out {
        for (a, b) in ys.iter().zip(&pred) {
            confusion[*a][*b] += 1;
        }
        folds_res.push(res);
    }
    let fold_accuracies: Vec<f64> = folds_res.iter().map(|f| f.accuracy).collect();
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
    let dbi = if plan.dbi { davies_bouldin_matrix(fm).ok() } else { None };
    Ok(EvalResult {
        family,
        n_rows: fm.n_rows(),
        n_features: fm.n_cols(),
        folds: folds_res,
        fold_accuracies,
        mean_accuracy,
        confusion,
        dbi,
    })
}

/// Shuffles gesture labels among the rows of each repetition.
pub fn permute_labels(fm: &FeatureMatrix, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = fm.clone();
    let reps: BTreeSet<u8> = fm.rows.iter().map(|r| r.repetition).collect();
    for rep in reps {
        let idx: Vec<usize> = (0..fm.n_rows()).filter(|&i| fm.rows[i].repetition == rep).collect();
        let mut labels: Vec<GestureId> = idx.iter().map(|&i| fm.rows[i].gesture).collect();
        labels.shuffle(&mut rng);
        for (&i, g) in idx.iter().zip(labels) {
            out.rows[i].gesture = g;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnId, Feature, RowMeta};
    use crate::model::{ChannelKind, Placement};
    use rand_distr::{Distribution, StandardNormal};

    /// `k` gestures x 4 repetitions x `w` windows with a class offset on the
    /// first feature.
    pub(crate) fn synthetic(k: usize, w: usize, p: usize, sep: f64, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for g in 0..k {
            for rep in 0..4u8 {
                for i in 0..w {
                    rows.push(RowMeta {
                        gesture: GestureId::new(g).unwrap(),
                        repetition: rep,
                        window_index: i as u32,
                    });
                    for j in 0..p {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        data.push(z + if j == g % p { sep } else { 0.0 });
                    }
                }
            }
        }
        let columns = (0..p)
            .map(|j| ColumnId {
                placement: Placement::W1,
                kind: ChannelKind::Emg,
                feature: Feature::all()[j],
            })
            .collect();
        FeatureMatrix { rows, columns, data }
    }

    #[test]
    fn fold_structure() {
        let fm = synthetic(17, 12, 20, 3.0, 1);
        let folds = fold_rows(&fm, &CvPlan::default()).unwrap();
        assert_eq!(folds.len(), 4);
        let mut seen = vec![0; fm.n_rows()];
        for (t, (train, test)) in folds.iter().enumerate() {
            assert_eq!(test.len(), 204);
            let g: BTreeSet<GestureId> = test.iter().map(|&i| fm.rows[i].gesture).collect();
            assert_eq!(g.len(), 17);
            assert!(test.iter().all(|&i| fm.rows[i].repetition as usize == t));
            assert!(train.iter().all(|i| !test.contains(i)));
            for &i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn separable_and_single_point_grid() {
        let fm = synthetic(5, 10, 5, 6.0, 2);
        let r = cv_evaluate(&fm, &CvPlan::default(), ModelFamily::Lda, &Grid::default()).unwrap();
        assert_eq!(r.folds.len(), 4);
        assert!(r.mean_accuracy > 0.95);
        let total: u32 = r.confusion.iter().flatten().sum();
        assert_eq!(total as usize, fm.n_rows());
        let mean = r.fold_accuracies.iter().sum::<f64>() / 4.0;
        assert_eq!(mean, r.mean_accuracy);

        let grid = Grid {
            lda_shrinkage: vec![0.3],
            lda_tol: vec![1e-4],
            ..Default::default()
        };
        let r1 = cv_evaluate(&fm, &CvPlan::default(), ModelFamily::Lda, &grid).unwrap();
        let data = Data::new(&fm);
        for t in 0..4u8 {
            let train = data.rows(|r| r != t);
            let test = data.rows(|r| r == t);
            let (xt, yt) = data.subset(&train);
            let (xs, ys) = data.subset(&test);
            let m = super::super::lda_fit(&xt, &yt, &LdaParams { shrinkage: 0.3, tol: 1e-4 }).unwrap();
            assert_eq!(r1.folds[t as usize].accuracy, accuracy(&ys, &m.predict(&xs).unwrap()));
        }
    }

    #[test]
    fn missing_repetition() {
        let mut fm = synthetic(3, 4, 3, 1.0, 3);
        let keep: Vec<usize> = (0..fm.n_rows())
            .filter(|&i| !(fm.rows[i].gesture.index() == 1 && fm.rows[i].repetition == 2))
            .collect();
        let p = fm.n_cols();
        fm.data = keep.iter().flat_map(|&i| fm.data[i * p..(i + 1) * p].to_vec()).collect();
        fm.rows = keep.iter().map(|&i| fm.rows[i]).collect();
        assert!(matches!(
            cv_evaluate(&fm, &CvPlan::default(), ModelFamily::Lda, &Grid::default()),
            Err(Error::MissingRepetition {
                gesture: 1,
                repetition: 2
            })
        ));
    }

    #[test]
    fn test_labels_do_not_reach_the_model() {
        let fm = synthetic(4, 6, 6, 1.0, 4);
        for family in [ModelFamily::Lda, ModelFamily::Svm] {
            let (m1, h1) = train_fold(&fm, &CvPlan::default(), family, &Grid::default(), 2).unwrap();
            let mut bad = fm.clone();
            for r in bad.rows.iter_mut().filter(|r| r.repetition == 2) {
                r.gesture = GestureId::new((r.gesture.index() + 1) % 4).unwrap();
            }
            let (m2, h2) = train_fold(&bad, &CvPlan::default(), family, &Grid::default(), 2).unwrap();
            assert_eq!(h1, h2);
            assert_eq!(m1, m2);
        }
    }

    #[test]
    fn permuted_labels_near_chance() {
        let fm = synthetic(17, 12, 17, 3.0, 5);
        let r = cv_evaluate(&permute_labels(&fm, 9), &CvPlan::default(), ModelFamily::Lda, &Grid::default()).unwrap();
        assert!((r.mean_accuracy - 1.0 / 17.0).abs() < 0.03, "{}", r.mean_accuracy);
    }

    #[test]
    fn svm_cross_validation_runs() {
        let fm = synthetic(4, 6, 4, 4.0, 6);
        let r = cv_evaluate(&fm, &CvPlan::default(), ModelFamily::Svm, &Grid::default()).unwrap();
        assert!(r.mean_accuracy > 0.9);
        assert!(matches!(r.folds[0].best, HyperParams::Svm(_)));
    }
}
