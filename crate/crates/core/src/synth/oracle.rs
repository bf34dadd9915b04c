//! Slow, direct-from-definition reference implementations. Nothing here calls
//! into the production modules, so agreement is evidence rather than
//! tautology.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Settings the feature oracle needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleThresholds {
    pub zc_eps: f64,
    pub ssc_eps: f64,
    pub myop: f64,
    pub wamp: f64,
    pub hist_sigmas: f64,
    pub fr_split_hz: f64,
    pub psr_halfwidth_hz: f64,
}

impl Default for OracleThresholds {
    fn default() -> Self {
        OracleThresholds {
            zc_eps: 0.0,
            ssc_eps: 0.0,
            myop: 20.0,
            wamp: 20.0,
            hist_sigmas: 3.0,
            fr_split_hz: 250.0,
            psr_halfwidth_hz: 10.0,
        }
    }
}

/// Names of [`emg_features`] outputs, in order.
pub const FEATURE_NAMES: [&str; 34] = [
    "MAV", "VAR", "RMS", "WL", "DAMV", "DASDV", "ZC", "MYOP", "WAMP", "SSC", "HIST0", "HIST1", "HIST2", "HIST3",
    "HIST4", "HIST5", "HIST6", "HIST7", "HIST8", "HIST9", "AR1", "AR2", "AR3", "AR4", "MNF", "MDF", "PKF", "TTP",
    "SM1", "SM2", "SM3", "FR", "PSR", "VCF",
];

/// Every EMG feature of one window, straight from the definitions.
pub fn emg_features(x: &[f64], rate_hz: f64, th: &OracleThresholds) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    let mut out = Vec::with_capacity(34);

    let mut s = 0.0;
    for v in x {
        s += v.abs();
    }
    out.push(s / nf);

    let mut mean = 0.0;
    for v in x {
        mean += v;
    }
    mean /= nf;
    let mut ss = 0.0;
    for v in x {
        ss += (v - mean).powi(2);
    }
    let var = ss / (nf - 1.0);
    out.push(var);

    let mut sq = 0.0;
    for v in x {
        sq += v * v;
    }
    out.push((sq / nf).sqrt());

    let mut wl = 0.0;
    for i in 1..n {
        wl += (x[i] - x[i - 1]).abs();
    }
    out.push(wl);
    out.push(wl / (nf - 1.0));

    let mut dsq = 0.0;
    for i in 1..n {
        dsq += (x[i] - x[i - 1]).powi(2);
    }
    out.push((dsq / (nf - 1.0)).sqrt());

    let mut zc = 0;
    for i in 1..n {
        let sign_change = (x[i] > 0.0 && x[i - 1] < 0.0) || (x[i] < 0.0 && x[i - 1] > 0.0);
        if sign_change && (x[i] - x[i - 1]).abs() >= th.zc_eps {
            zc += 1;
        }
    }
    out.push(zc as f64);

    out.push(x.iter().filter(|v| v.abs() >= th.myop).count() as f64 / nf);

    let mut wamp = 0;
    for i in 1..n {
        if (x[i] - x[i - 1]).abs() >= th.wamp {
            wamp += 1;
        }
    }
    out.push(wamp as f64);

    let mut ssc = 0;
    for i in 1..n - 1 {
        if (x[i] - x[i - 1]) * (x[i] - x[i + 1]) > th.ssc_eps {
            ssc += 1;
        }
    }
    out.push(ssc as f64);

    out.extend(histogram(x, mean, var.sqrt(), th.hist_sigmas));
    out.extend(ar_toeplitz(x, 4));
    out.extend(spectral(x, rate_hz, th));
    out
}

fn histogram(x: &[f64], mean: f64, sd: f64, k: f64) -> [f64; 10] {
    let mut bins = [0.0; 10];
    if sd == 0.0 {
        bins[5] = x.len() as f64;
        return bins;
    }
    let lo = mean - k * sd;
    let hi = mean + k * sd;
    for &v in x {
        let mut placed = false;
        for (b, slot) in bins.iter_mut().enumerate() {
            let left = lo + (hi - lo) * b as f64 / 10.0;
            let right = lo + (hi - lo) * (b + 1) as f64 / 10.0;
            let first = b == 0 && v < left;
            let last = b == 9 && v >= right;
            if first || last || (v >= left && v < right) {
                *slot += 1.0;
                placed = true;
                break;
            }
        }
        debug_assert!(placed);
    }
    bins
}

/// Yule-Walker AR coefficients by Gaussian elimination on the full Toeplitz system.
pub fn ar_toeplitz(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let r = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in lag..n {
            acc += (x[i] - mean) * (x[i - lag] - mean);
        }
        acc / n as f64
    };
    let rs: Vec<f64> = (0..=order).map(r).collect();
    if rs[0] == 0.0 {
        return vec![0.0; order];
    }
    let mut a: Vec<Vec<f64>> = (0..order)
        .map(|i| {
            let mut row: Vec<f64> = (0..order).map(|j| rs[i.abs_diff(j)]).collect();
            row.push(rs[i + 1]);
            row
        })
        .collect();
    solve_in_place(&mut a)
}

fn solve_in_place(a: &mut [Vec<f64>]) -> Vec<f64> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..=m {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut sol = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = a[row][m];
        for k in row + 1..m {
            acc -= a[row][k] * sol[k];
        }
        sol[row] = acc / a[row][row];
    }
    sol
}

/// One-sided power by direct DFT of the mean-removed, optionally Hann
/// tapered signal, normalized so the bins sum to the signal energy.
pub fn dft_power(x: &[f64], hann: bool) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if hann {
                0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos())
            } else {
                1.0
            };
            (v - mean) * w
        })
        .collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in y.iter().enumerate() {
                let ang = 2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += v * ang.cos();
                im -= v * ang.sin();
            }
            let p = (re * re + im * im) / n as f64;
            if k == 0 || 2 * k == n {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

fn spectral(x: &[f64], rate: f64, th: &OracleThresholds) -> Vec<f64> {
    let p = dft_power(x, true);
    let n = x.len() as f64;
    let freq = |k: usize| k as f64 * rate / n;
    let total: f64 = p.iter().sum();
    if total == 0.0 {
        return vec![0.0; 10];
    }
    let moment = |order: i32| p.iter().enumerate().map(|(k, v)| freq(k).powi(order) * v).sum::<f64>();
    let (m1, m2, m3) = (moment(1), moment(2), moment(3));
    let mnf = m1 / total;
    let mut mdf = 0.0;
    let mut run = 0.0;
    for (k, v) in p.iter().enumerate() {
        run += v;
        if 2.0 * run >= total {
            mdf = freq(k);
            break;
        }
    }
    let mut peak = 0;
    for k in 0..p.len() {
        if p[k] > p[peak] {
            peak = k;
        }
    }
    // bin k is below the split iff k * rate <= split * n, compared with slack
    let below = |k: usize| (k as f64) * rate <= th.fr_split_hz * n * (1.0 + 1e-12);
    let low: f64 = (0..p.len()).filter(|&k| below(k)).map(|k| p[k]).sum();
    let high = total - low;
    let near: f64 = (0..p.len())
        .filter(|&k| (k.abs_diff(peak) as f64) * rate <= th.psr_halfwidth_hz * n * (1.0 + 1e-12))
        .map(|k| p[k])
        .sum();
    vec![
        mnf,
        mdf,
        freq(peak),
        total,
        m1,
        m2,
        m3,
        if high > 0.0 { low / high } else { 0.0 },
        near / total,
        m2 / total - mnf * mnf,
    ]
}

/// Population sigma of the calibration samples.
pub fn calibration_sigma(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn snr_db(activation: &[f64], rest: &[f64]) -> f64 {
    let p = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
    10.0 * (p(activation) / p(rest)).log10()
}

pub fn smr_db(x: &[f64], rate: f64) -> f64 {
    let p = dft_power(x, false);
    let n = x.len() as f64;
    let band = |hz: f64| -> f64 {
        (0..p.len())
            .filter(|&k| k as f64 * rate <= hz * n * (1.0 + 1e-12))
            .map(|k| p[k])
            .sum()
    };
    10.0 * (band(500.0) / band(20.0)).log10()
}

/// Davies-Bouldin index by explicit loops over classes.
pub fn dbi(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let dim = points[0].len();
    let members = |c: usize| -> Vec<&Vec<f64>> { points.iter().zip(labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect() };
    let centroid = |c: usize| -> Vec<f64> {
        let m = members(c);
        (0..dim).map(|j| m.iter().map(|p| p[j]).sum::<f64>() / m.len() as f64).collect()
    };
    let euclid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let cents: Vec<Vec<f64>> = classes.iter().map(|&c| centroid(c)).collect();
    let scatter: Vec<f64> = classes
        .iter()
        .zip(&cents)
        .map(|(&c, z)| {
            let m = members(c);
            m.iter().map(|p| euclid(p, z)).sum::<f64>() / m.len() as f64
        })
        .collect();
    let k = classes.len();
    let mut sum = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i != j {
                worst = worst.max((scatter[i] + scatter[j]) / euclid(&cents[i], &cents[j]));
            }
        }
        sum += worst;
    }
    sum / k as f64
}

/// Mean difference over the root of the averaged sample variances.
pub fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64]| {
        let m = mean(s);
        s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() as f64 - 1.0)
    };
    (mean(a) - mean(b)) / ((var(a) + var(b)) / 2.0).sqrt()
}

/// Two-sided exact Wilcoxon signed-rank p by enumerating all 2^n sign
/// patterns of the mid-ranks of |d| (zeros dropped).
pub fn wilcoxon_enumerated(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    assert!(n <= 24, "enumeration limited to 24 differences");
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let smaller = nz.iter().filter(|v| v.abs() < nz[i].abs()).count();
        let equal = nz.iter().filter(|v| v.abs() == nz[i].abs()).count();
        ranks[i] = smaller as f64 + (equal as f64 + 1.0) / 2.0;
    }
    let w_plus: f64 = (0..n).filter(|&i| nz[i] > 0.0).map(|i| ranks[i]).sum();
    let total: f64 = ranks.iter().sum();
    let observed = (w_plus - total / 2.0).abs();
    let mut extreme = 0u64;
    for mask in 0u64..(1u64 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (w - total / 2.0).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

/// Seeded random window: noise, a few tones and an offset at EMG scale.
pub fn random_window(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let sigma = rng.random_range(1.0..80.0);
    let offset = rng.random_range(-10.0..10.0);
    let tones: Vec<(f64, f64, f64)> = (0..rng.random_range(0..4))
        .map(|_| {
            (
                rng.random_range(0.0..100.0),
                rng.random_range(1.0..900.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 / 2000.0;
            let z: f64 = StandardNormal.sample(rng);
            offset + sigma * z + tones.iter().map(|(a, f, p)| a * (2.0 * PI * f * t + p).sin()).sum::<f64>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleFailure {
    pub trial: usize,
    pub output_index: usize,
    pub production: f64,
    pub oracle: f64,
    pub deviation: f64,
    /// The input that produced the mismatch.
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub trials: usize,
    pub tolerance: f64,
    pub max_deviation: f64,
    /// At most one failure per trial, its worst output.
    pub failures: Vec<OracleFailure>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Relative deviation with a floor on the denominator for values near zero.
pub fn deviation(production: f64, oracle: f64) -> f64 {
    if production == oracle {
        return 0.0;
    }
    if !production.is_finite() || !oracle.is_finite() {
        return f64::INFINITY;
    }
    (production - oracle).abs() / oracle.abs().max(1e-3)
}

/// Feeds `trials` seeded random windows of `len` samples to both functions
/// and compares their outputs elementwise.
pub fn oracle_check<P, O>(production: P, oracle: O, trials: usize, len: usize, tolerance: f64, seed: u64) -> OracleReport
where
    P: Fn(&[f64]) -> Vec<f64>,
    O: Fn(&[f64]) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        trials,
        tolerance,
        max_deviation: 0.0,
        failures: Vec::new(),
    };
    for trial in 0..trials {
        let x = random_window(&mut rng, len);
        let (a, b) = (production(&x), oracle(&x));
        let mut worst: Option<(usize, f64)> = None;
        if a.len() != b.len() {
            worst = Some((a.len().min(b.len()), f64::INFINITY));
        }
        for (i, (p, o)) in a.iter().zip(&b).enumerate() {
            let d = deviation(*p, *o);
            if worst.is_none_or(|(_, w)| d > w) {
                worst = Some((i, d));
            }
        }
        if let Some((i, d)) = worst {
            report.max_deviation = report.max_deviation.max(d);
            if d > tolerance {
                report.failures.push(OracleFailure {
                    trial,
                    output_index: i,
                    production: a.get(i).copied().unwrap_or(f64::NAN),
                    oracle: b.get(i).copied().unwrap_or(f64::NAN),
                    deviation: d,
                    input: x,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_matches_parseval() {
        let x = [1.0, -2.0, 3.0, 0.5, -1.0, 2.0];
        let p = dft_power(&x, false);
        let m = x.iter().sum::<f64>() / 6.0;
        let energy: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        assert!((p.iter().sum::<f64>() - energy).abs() < 1e-12);
    }

    #[test]
    fn toeplitz_solves() {
        let mut a = vec![vec![2.0, 1.0, 3.0], vec![1.0, 3.0, 5.0]];
        let s = solve_in_place(&mut a);
        assert!((s[0] - 0.8).abs() < 1e-12 && (s[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_small() {
        // all positive, n = 3: only the all-positive and all-negative patterns are as extreme
        assert!((wilcoxon_enumerated(&[1.0, 2.0, 3.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn self_check_passes_and_catches() {
        let rms = |x: &[f64]| vec![(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()];
        let ok = oracle_check(rms, |x| vec![emg_features(x, 2000.0, &OracleThresholds::default())[2]], 20, 64, 1e-12, 1);
        assert!(ok.passed());
        let broken = |x: &[f64]| vec![(x.iter().map(|v| v * v).sum::<f64>() / (x.len() - 1) as f64).sqrt()];
        let bad = oracle_check(broken, rms, 20, 64, 1e-9, 1);
        assert_eq!(bad.failures.len(), 20);
        let again = oracle_check(broken, rms, 20, 64, 1e-9, 1);
        assert_eq!(bad, again);
    }
}
