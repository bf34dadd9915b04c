//! Normality-gated group comparisons and effect sizes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::model::ModalityGroup;

/// Largest sample for which the signed-rank p-value is computed exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    /// Participant identifiers in value order; empty when unknown.
    #[serde(default)]
    pub participants: Vec<String>,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        SampleGroup {
            label: label.into(),
            participants: Vec::new(),
            values,
        }
    }

    pub fn with_participants(mut self, ids: Vec<String>) -> Self {
        self.participants = ids;
        self
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn std(&self) -> f64 {
        sample_std(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HypothesisId {
    H1,
    H2,
    H3,
    H4,
}

impl HypothesisId {
    pub const ALL: [HypothesisId; 4] = [HypothesisId::H1, HypothesisId::H2, HypothesisId::H3, HypothesisId::H4];

    /// Every hypothesis states `mean(EMG) >= mean(right)`.
    pub fn right(self) -> ModalityGroup {
        match self {
            HypothesisId::H1 => ModalityGroup::Accel,
            HypothesisId::H2 => ModalityGroup::Gyro,
            HypothesisId::H3 => ModalityGroup::Mag,
            HypothesisId::H4 => ModalityGroup::ImuCombined,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HypothesisId::H1 => "H1",
            HypothesisId::H2 => "H2",
            HypothesisId::H3 => "H3",
            HypothesisId::H4 => "H4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    TIndependent,
    TPaired,
    WilcoxonSignedRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsOptions {
    pub alpha: f64,
    /// Threshold on the Lilliefors p-value above which a group counts as normal.
    pub normality_alpha: f64,
    /// Use a paired t-test instead of the independent one when both groups pass.
    pub paired: bool,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            alpha: 0.05,
            normality_alpha: 0.05,
            paired: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<HypothesisId>,
    pub left: String,
    pub right: String,
    pub n_left: usize,
    pub n_right: usize,
    pub mean_left: f64,
    pub std_left: f64,
    pub mean_right: f64,
    pub std_right: f64,
    pub lilliefors_p_left: f64,
    pub lilliefors_p_right: f64,
    pub normal_left: bool,
    pub normal_right: bool,
    pub test_used: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lilliefors {
    pub statistic: f64,
    pub p_value: f64,
    /// Zero spread: the statistic is undefined and p is reported as 0.
    pub degenerate: bool,
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn sample_var(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub(crate) fn sample_std(x: &[f64]) -> f64 {
    sample_var(x).sqrt()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Kolmogorov-Smirnov distance to a normal with the sample mean and std,
/// with the Dallal-Wilkinson p approximation.
pub fn lilliefors(values: &[f64]) -> Result<Lilliefors> {
    let n = values.len();
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    let m = mean(values);
    let s = sample_std(values);
    if !(s > 0.0) {
        return Ok(Lilliefors {
            statistic: 0.0,
            p_value: 0.0,
            degenerate: true,
        });
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let norm = std_normal();
    let mut d = 0.0f64;
    for (i, v) in x.iter().enumerate() {
        let p = norm.cdf((v - m) / s);
        d = d.max((i + 1) as f64 / nf - p).max(p - i as f64 / nf);
    }
    Ok(Lilliefors {
        statistic: d,
        p_value: lilliefors_p(d, n),
        degenerate: false,
    })
}

fn lilliefors_p(k: f64, n: usize) -> f64 {
    let nf = n as f64;
    let (kd, nd) = if n <= 100 {
        (k, nf)
    } else {
        (k * (nf / 100.0).powf(0.49), 100.0)
    };
    let mut p = (-7.01256 * kd * kd * (nd + 2.78019) + 2.99587 * kd * (nd + 2.78019).sqrt() - 0.122119
        + 0.974598 / nd.sqrt()
        + 1.67997 / nd)
        .exp();
    if p > 0.1 {
        let kk = (nf.sqrt() - 0.01 + 0.85 / nf.sqrt()) * k;
        p = if kk <= 0.302 {
            1.0
        } else if kk <= 0.5 {
            2.76773 - 19.828315 * kk + 80.709644 * kk.powi(2) - 138.55152 * kk.powi(3) + 81.218052 * kk.powi(4)
        } else if kk <= 0.9 {
            -4.901232 + 40.662806 * kk - 97.490286 * kk.powi(2) + 94.029866 * kk.powi(3) - 32.355711 * kk.powi(4)
        } else if kk <= 1.31 {
            6.198765 - 19.558097 * kk + 23.186922 * kk.powi(2) - 12.234627 * kk.powi(3) + 2.423045 * kk.powi(4)
        } else {
            0.0
        };
    }
    p.clamp(0.0, 1.0)
}

fn t_two_sided(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Two-sided Welch t-test.
pub fn t_test_independent(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    for g in [a, b] {
        if g.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: g.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_var(a) / na, sample_var(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok((t, t_two_sided(t, df)))
}

/// Two-sided paired t-test on `a - b`.
pub fn t_test_paired(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: a.len() });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = sample_std(&d);
    if !(s > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let n = d.len() as f64;
    let t = mean(&d) / (s / n.sqrt());
    Ok((t, t_two_sided(t, n - 1.0)))
}

/// Mid-ranks of `x` (1-based) and the tie-group sizes.
fn mid_ranks(x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Paired signed-rank test. Returns `W = min(W+, W-)` and the two-sided p.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = mid_ranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let nf = n as f64;
    let w_minus = nf * (nf + 1.0) / 2.0 - w_plus;
    let w = w_plus.min(w_minus);

    let p = if n <= WILCOXON_EXACT_MAX {
        // ranks are multiples of 1/2, so doubled ranks are exact integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        2.0 * signed_rank_cdf(&doubled, (2.0 * w).round() as usize)
    } else {
        let mu = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let sigma = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term).sqrt();
        if sigma > 0.0 {
            let z = (w - mu + 0.5).min(0.0) / sigma;
            2.0 * std_normal().cdf(z)
        } else {
            1.0
        }
    };
    Ok((w, p.min(1.0)))
}

/// P(sum of a random subset of `weights` <= `limit`) with each element
/// included independently with probability 1/2.
fn signed_rank_cdf(weights: &[usize], limit: usize) -> f64 {
    let total: usize = weights.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &w in weights {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + w] += counts[s];
            }
        }
        reach += w;
    }
    let below: f64 = counts[..=limit.min(total)].iter().sum();
    below / 2f64.powi(weights.len() as i32)
}

/// Standardized mean difference with the equal-n pooled deviation.
pub fn cohens_d(a_mean: f64, a_std: f64, b_mean: f64, b_std: f64) -> Result<f64> {
    let pooled = ((a_std * a_std + b_std * b_std) / 2.0).sqrt();
    if !(pooled > 0.0) {
        return Err(Error::ZeroPooledStd);
    }
    Ok((a_mean - b_mean) / pooled)
}

/// [`cohens_d`] from raw groups using sample standard deviations.
pub fn cohens_d_groups(a: &[f64], b: &[f64]) -> Result<f64> {
    cohens_d(mean(a), sample_std(a), mean(b), sample_std(b))
}

/// Normality-gated comparison; the decision rejects `mean(left) >= mean(right)`.
pub fn compare_groups(left: &SampleGroup, right: &SampleGroup, opts: &StatsOptions) -> Result<TestResult> {
    let (a, b) = (&left.values, &right.values);
    let la = lilliefors(a)?;
    let lb = lilliefors(b)?;
    let normal_left = la.p_value > opts.normality_alpha;
    let normal_right = lb.p_value > opts.normality_alpha;

    let (test_used, statistic, p_value) = if normal_left && normal_right {
        if opts.paired {
            let (t, p) = t_test_paired(a, b)?;
            (TestKind::TPaired, t, p)
        } else {
            let (t, p) = t_test_independent(a, b)?;
            (TestKind::TIndependent, t, p)
        }
    } else {
        match wilcoxon_signed_rank(a, b) {
            Ok((w, p)) => (TestKind::WilcoxonSignedRank, w, p),
            Err(Error::AllZeroDifferences) => (TestKind::WilcoxonSignedRank, 0.0, 1.0),
            Err(e) => return Err(e),
        }
    };

    let (ma, mb) = (mean(a), mean(b));
    let cohens_d = match cohens_d_groups(a, b) {
        Ok(d) => d,
        Err(Error::ZeroPooledStd) if ma == mb => 0.0,
        Err(e) => return Err(e),
    };
    let decision = if p_value < opts.alpha && ma < mb {
        Decision::Reject
    } else {
        Decision::FailToReject
    };
    Ok(TestResult {
        hypothesis: None,
        left: left.label.clone(),
        right: right.label.clone(),
        n_left: a.len(),
        n_right: b.len(),
        mean_left: ma,
        std_left: sample_std(a),
        mean_right: mb,
        std_right: sample_std(b),
        lilliefors_p_left: la.p_value,
        lilliefors_p_right: lb.p_value,
        normal_left,
        normal_right,
        test_used,
        statistic,
        p_value,
        cohens_d,
        decision,
    })
}

fn check_participants(left: &SampleGroup, right: &SampleGroup) -> Result<()> {
    if left.values.len() != right.values.len() {
        return Err(Error::ParticipantMismatch(format!(
            "{} has {} values, {} has {}",
            left.label,
            left.values.len(),
            right.label,
            right.values.len()
        )));
    }
    if !left.participants.is_empty() && !right.participants.is_empty() && left.participants != right.participants {
        return Err(Error::ParticipantMismatch(format!(
            "{} and {} list different participants",
            left.label, right.label
        )));
    }
    Ok(())
}

/// Tests H1-H4 (EMG against each inertial group).
pub fn run_hypotheses(groups: &BTreeMap<ModalityGroup, SampleGroup>, opts: &StatsOptions) -> Result<Vec<TestResult>> {
    let emg = groups
        .get(&ModalityGroup::Emg)
        .ok_or_else(|| Error::ParticipantMismatch("no emg group".into()))?;
    let mut out = Vec::with_capacity(4);
    for h in HypothesisId::ALL {
        let right = groups
            .get(&h.right())
            .ok_or_else(|| Error::ParticipantMismatch(format!("no {} group", h.right())))?;
        check_participants(emg, right)?;
        let mut r = compare_groups(emg, right, opts)?;
        r.hypothesis = Some(h);
        out.push(r);
    }
    Ok(out)
}

/// Significance marker used in the tables.
pub fn star(p: f64, alpha: f64) -> &'static str {
    if p < alpha {
        "*"
    } else {
        ""
    }
}

pub fn results_markdown(results: &[TestResult], alpha: f64) -> String {
    let mut s = String::new();
    s.push_str("| hypothesis | left | right | mean(std) left | mean(std) right | test | statistic | p | d | decision |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for r in results {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.2}({:.2}) | {:.2}({:.2}){} | {} | {:.4} | {:.4} | {:.2} | {} |",
            r.hypothesis.map(|h| h.name()).unwrap_or("-"),
            r.left,
            r.right,
            r.mean_left,
            r.std_left,
            r.mean_right,
            r.std_right,
            star(r.p_value, alpha),
            match r.test_used {
                TestKind::TIndependent => "t",
                TestKind::TPaired => "paired t",
                TestKind::WilcoxonSignedRank => "wilcoxon",
            },
            r.statistic,
            r.p_value,
            r.cohens_d,
            match r.decision {
                Decision::Reject => "reject",
                Decision::FailToReject => "fail to reject",
            }
        );
    }
    s
}
