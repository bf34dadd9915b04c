use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Feature, FeatureVector, ThresholdSpec, Window};
use crate::error::{Error, Result};

const MIN_LEN: usize = 8;

/// Reusable FFT plan, taper and scratch for one window length.
pub struct SpectrumWorkspace {
    planner: FftPlanner<f64>,
    fft: Option<(usize, Arc<dyn Fft<f64>>, Vec<f64>)>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    power: Vec<f64>,
}

impl Default for SpectrumWorkspace {
    fn default() -> Self {
        SpectrumWorkspace {
            planner: FftPlanner::new(),
            fft: None,
            buf: Vec::new(),
            scratch: Vec::new(),
            power: Vec::new(),
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

impl SpectrumWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// One-sided periodogram of the mean-removed signal, optionally Hann
    /// tapered. Bin `k` sits at `k * rate / n`; the bins sum to the energy of
    /// the tapered signal.
    pub fn periodogram(&mut self, x: &[f64], taper: bool) -> &[f64] {
        let n = x.len();
        if self.fft.as_ref().map(|f| f.0) != Some(n) {
            let plan = self.planner.plan_fft_forward(n);
            self.scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            self.fft = Some((n, plan, hann(n)));
        }
        let (_, plan, window) = self.fft.as_ref().unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        self.buf.clear();
        if taper {
            self.buf
                .extend(x.iter().zip(window).map(|(v, w)| Complex64::new((v - mean) * w, 0.0)));
        } else {
            self.buf.extend(x.iter().map(|v| Complex64::new(v - mean, 0.0)));
        }
        plan.process_with_scratch(&mut self.buf, &mut self.scratch);
        let half = n / 2;
        self.power.clear();
        let nf = n as f64;
        for k in 0..=half {
            let p = self.buf[k].norm_sqr() / nf;
            let one_sided = k != 0 && !(n % 2 == 0 && k == half);
            self.power.push(if one_sided { 2.0 * p } else { p });
        }
        &self.power
    }

    pub fn features(&mut self, x: &[f64], rate_hz: f64, th: &ThresholdSpec) -> Result<FeatureVector> {
        let n = x.len();
        if n < MIN_LEN {
            return Err(Error::SignalTooShort {
                needed: MIN_LEN - 1,
                got: n,
            });
        }
        let df = rate_hz / n as f64;
        // bin cutoffs with a little slack so exact band edges are not lost to round-off
        let split = (th.fr_split_hz / df + 1e-9).floor() as usize;
        let reach = (th.psr_halfwidth_hz / df + 1e-9).floor() as usize;
        let p = self.periodogram(x, true);

        let (mut sm0, mut sm1, mut sm2, mut sm3) = (0.0, 0.0, 0.0, 0.0);
        let (mut low, mut high) = (0.0, 0.0);
        let mut peak = 0usize;
        for (k, &pk) in p.iter().enumerate() {
            let f = k as f64 * df;
            sm0 += pk;
            sm1 += f * pk;
            sm2 += f * f * pk;
            sm3 += f * f * f * pk;
            if k <= split {
                low += pk;
            } else {
                high += pk;
            }
            if pk > p[peak] {
                peak = k;
            }
        }

        let mut fv = FeatureVector::default();
        if !(sm0 > 0.0) {
            for f in super::FREQ_FEATURES {
                fv.push(f, 0.0);
            }
            return Ok(fv);
        }
        let half = sm0 / 2.0;
        let mut cum = 0.0;
        let mut mdf = 0usize;
        for (k, &pk) in p.iter().enumerate() {
            cum += pk;
            if cum >= half {
                mdf = k;
                break;
            }
        }
        let pkf = peak as f64 * df;
        let near: f64 = p[peak.saturating_sub(reach)..=(peak + reach).min(p.len() - 1)].iter().sum();
        let mnf = sm1 / sm0;

        fv.push(Feature::Mnf, mnf);
        fv.push(Feature::Mdf, mdf as f64 * df);
        fv.push(Feature::Pkf, pkf);
        fv.push(Feature::Ttp, sm0);
        fv.push(Feature::Sm1, sm1);
        fv.push(Feature::Sm2, sm2);
        fv.push(Feature::Sm3, sm3);
        fv.push(Feature::Fr, if high > 0.0 { low / high } else { 0.0 });
        fv.push(Feature::Psr, near / sm0);
        fv.push(Feature::Vcf, sm2 / sm0 - mnf * mnf);
        Ok(fv)
    }
}

/// Hann-tapered one-sided periodogram of `x`.
pub fn periodogram(x: &[f64], taper: bool) -> Vec<f64> {
    SpectrumWorkspace::new().periodogram(x, taper).to_vec()
}

pub fn freq_features(w: &Window<'_>, rate_hz: f64, th: &ThresholdSpec) -> Result<FeatureVector> {
    SpectrumWorkspace::new().features(w.samples, rate_hz, th)
}
