//! Preprocessing chain: powerline notch, Butterworth band-pass, centered
//! moving-average smoothing, linear detrend and IMU upsampling.
//!
//! IIR filters are second-order-section cascades. With `zero_phase` they run
//! forward and backward over an odd-extended signal with steady-state initial
//! conditions, so the magnitude response is squared and the phase is zero.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, Recording, EMG_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub notch_hz: f64,
    pub notch_q: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Total band-pass order; each edge gets half.
    pub band_order: usize,
    pub zero_phase: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            notch_hz: 60.0,
            notch_q: 30.0,
            band_lo_hz: 20.0,
            band_hi_hz: 500.0,
            band_order: 4,
            zero_phase: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothMode {
    #[default]
    CenteredMovingAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothSpec {
    pub window_samples: usize,
    pub mode: SmoothMode,
}

impl Default for SmoothSpec {
    fn default() -> Self {
        SmoothSpec {
            window_samples: 50,
            mode: SmoothMode::CenteredMovingAverage,
        }
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Biquad {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, rate_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (1.0 + z1 * self.a[0] + z2 * self.a[1])
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a constant input of 1.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let s2 = self.b[2] - self.a[1] * g;
        let s1 = self.b[1] - self.a[0] * g + s2;
        [s1, s2]
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    pub fn response(&self, freq_hz: f64, rate_hz: f64) -> Complex64 {
        self.sections
            .iter()
            .map(|s| s.response(freq_hz, rate_hz))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
    }

    /// Magnitude in dB; squared when applied forward-backward.
    pub fn gain_db(&self, freq_hz: f64, rate_hz: f64, zero_phase: bool) -> f64 {
        let m = self.response(freq_hz, rate_hz).norm();
        let db = 20.0 * m.log10();
        if zero_phase {
            2.0 * db
        } else {
            db
        }
    }

    /// Samples of odd extension used on each side by [`Sos::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    fn steady_states(&self) -> Vec<[f64; 2]> {
        let mut gain = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let zi = s.steady_state();
                let scaled = [zi[0] * gain, zi[1] * gain];
                gain *= s.dc_gain();
                scaled
            })
            .collect()
    }

    fn run(&self, x: &mut [f64], init: Option<f64>) {
        let zi = self.steady_states();
        for (sec, z) in self.sections.iter().zip(zi) {
            let (mut s1, mut s2) = match init {
                Some(x0) => (z[0] * x0, z[1] * x0),
                None => (0.0, 0.0),
            };
            let [b0, b1, b2] = sec.b;
            let [a1, a2] = sec.a;
            for v in x.iter_mut() {
                let input = *v;
                let y = b0 * input + s1;
                s1 = b1 * input - a1 * y + s2;
                s2 = b2 * input - a2 * y;
                *v = y;
            }
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, None);
        y
    }

    /// Zero-phase forward-backward filtering.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        let n = x.len();
        if n <= pad {
            return Err(Error::SignalTooShort {
                needed: pad,
                got: n,
            });
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let first = ext[0];
        self.run(&mut ext, Some(first));
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, Some(first));
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

fn check_band(freq: f64, rate_hz: f64, what: &str) -> Result<()> {
    if !(freq > 0.0) || freq >= rate_hz / 2.0 {
        return Err(Error::NyquistViolation(format!(
            "{what} {freq} Hz is not inside (0, {}) Hz",
            rate_hz / 2.0
        )));
    }
    Ok(())
}

/// Second-order notch at `f0` with quality factor `q`.
pub fn design_notch(f0: f64, q: f64, rate_hz: f64) -> Result<Sos> {
    check_band(f0, rate_hz, "notch frequency")?;
    if !(q > 0.0) {
        return Err(Error::InvalidSpec(format!("notch Q must be positive, got {q}")));
    }
    let w0 = 2.0 * PI * f0 / rate_hz;
    let alpha = w0.sin() / (2.0 * q);
    let c = w0.cos();
    Ok(Sos {
        sections: vec![Biquad::normalized(
            [1.0, -2.0 * c, 1.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )],
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Edge {
    Low,
    High,
}

/// Bilinear-transform Butterworth sections of `order` for one edge, with
/// the analog prototype scaled so the digital corner is at `k = tan(pi fc/fs)`.
fn butterworth_edge(order: usize, k: f64, edge: Edge) -> Vec<Biquad> {
    let mut sections = Vec::new();
    for i in 0..order / 2 {
        let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
        let q = 1.0 / (2.0 * theta.sin());
        let norm = 1.0 + k / q + k * k;
        let a = [norm, 2.0 * (k * k - 1.0), 1.0 - k / q + k * k];
        let b = match edge {
            Edge::Low => [k * k, 2.0 * k * k, k * k],
            Edge::High => [1.0, -2.0, 1.0],
        };
        sections.push(Biquad::normalized(b, a));
    }
    if order % 2 == 1 {
        let a = [1.0 + k, k - 1.0, 0.0];
        let b = match edge {
            Edge::Low => [k, k, 0.0],
            Edge::High => [1.0, -1.0, 0.0],
        };
        sections.push(Biquad::normalized(b, a));
    }
    sections
}

/// Butterworth band-pass as a high-pass edge cascaded with a low-pass edge.
/// With `zero_phase` the design corners are moved so that the squared
/// (forward-backward) response is -3 dB at the requested corners.
pub fn design_bandpass(spec: &FilterSpec, rate_hz: f64) -> Result<Sos> {
    if rate_hz <= 2.0 * spec.band_hi_hz {
        return Err(Error::NyquistViolation(format!(
            "rate {rate_hz} Hz must exceed twice the upper band edge {} Hz",
            spec.band_hi_hz
        )));
    }
    check_band(spec.band_lo_hz, rate_hz, "band low edge")?;
    if spec.band_lo_hz >= spec.band_hi_hz {
        return Err(Error::InvalidSpec(format!(
            "band edges out of order: {} >= {}",
            spec.band_lo_hz, spec.band_hi_hz
        )));
    }
    if spec.band_order < 2 || spec.band_order % 2 != 0 {
        return Err(Error::InvalidSpec(format!(
            "band order must be even and >= 2, got {}",
            spec.band_order
        )));
    }
    let edge_order = spec.band_order / 2;
    // |H|^2 = 1/(1 + (k/kc)^(2n)); forward-backward squares it again, so the
    // -3 dB point of |H|^4 sits where (k/kc)^(2n) = sqrt(2) - 1.
    let correction = if spec.zero_phase {
        (2f64.sqrt() - 1.0).powf(1.0 / (2.0 * edge_order as f64))
    } else {
        1.0
    };
    let k_lo = (PI * spec.band_lo_hz / rate_hz).tan() * correction;
    let k_hi = (PI * spec.band_hi_hz / rate_hz).tan() / correction;
    let mut sections = butterworth_edge(edge_order, k_lo, Edge::High);
    sections.extend(butterworth_edge(edge_order, k_hi, Edge::Low));
    Ok(Sos { sections })
}

fn apply(sos: &Sos, x: &[f64], zero_phase: bool) -> Result<Vec<f64>> {
    if zero_phase {
        sos.filtfilt(x)
    } else {
        let needed = sos.pad_len();
        if x.len() <= needed {
            return Err(Error::SignalTooShort {
                needed,
                got: x.len(),
            });
        }
        Ok(sos.filter(x))
    }
}

pub fn notch_filter(x: &[f64], rate_hz: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    let sos = design_notch(spec.notch_hz, spec.notch_q, rate_hz)?;
    apply(&sos, x, spec.zero_phase)
}

pub fn bandpass_filter(x: &[f64], rate_hz: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    let sos = design_bandpass(spec, rate_hz)?;
    apply(&sos, x, spec.zero_phase)
}

/// Centered moving average; the window covers `[i - w/2, i + (w-1)/2]` and
/// is truncated at the edges.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || window <= 1 {
        return x.to_vec();
    }
    let back = window / 2;
    let fwd = window - 1 - back;
    let mut out = Vec::with_capacity(n);
    let mut lo = 0usize;
    let mut hi = fwd.min(n - 1);
    let mut sum: f64 = x[lo..=hi].iter().sum();
    for i in 0..n {
        let new_lo = i.saturating_sub(back);
        let new_hi = (i + fwd).min(n - 1);
        while hi < new_hi {
            hi += 1;
            sum += x[hi];
        }
        while lo < new_lo {
            sum -= x[lo];
            lo += 1;
        }
        if i % 1024 == 1023 {
            // bound the drift of the running sum
            sum = x[lo..=hi].iter().sum();
        }
        out.push(sum / (hi - lo + 1) as f64);
    }
    out
}

pub fn smooth(x: &[f64], spec: &SmoothSpec) -> Result<Vec<f64>> {
    if spec.window_samples == 0 || spec.window_samples > x.len() {
        return Err(Error::WindowTooLarge {
            window: spec.window_samples,
            len: x.len(),
        });
    }
    match spec.mode {
        SmoothMode::CenteredMovingAverage => Ok(moving_average(x, spec.window_samples)),
    }
}

/// Removes the least-squares line.
pub fn detrend(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::SignalTooShort { needed: 1, got: n });
    }
    let nf = n as f64;
    let mid = (nf - 1.0) / 2.0;
    let mean = x.iter().sum::<f64>() / nf;
    let (mut stx, mut stt) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let t = i as f64 - mid;
        stx += t * (v - mean);
        stt += t * t;
    }
    let slope = stx / stt;
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| v - mean - slope * (i as f64 - mid))
        .collect())
}

/// Linear interpolation by an integer rate ratio; the last input sample is
/// held across its segment.
pub fn upsample_linear(x: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>> {
    let ratio_f = to_hz / from_hz;
    let ratio = ratio_f.round();
    if !(ratio >= 1.0) || (ratio_f - ratio).abs() > 1e-9 {
        return Err(Error::NonIntegerRatio { from_hz, to_hz });
    }
    let r = ratio as usize;
    if r == 1 {
        return Ok(x.to_vec());
    }
    let mut out = Vec::with_capacity(x.len() * r);
    for (i, &v) in x.iter().enumerate() {
        match x.get(i + 1) {
            Some(&next) => {
                let step = (next - v) / ratio;
                out.extend((0..r).map(|j| v + step * j as f64));
            }
            None => out.extend(std::iter::repeat_n(v, r)),
        }
    }
    Ok(out)
}

/// EMG: notch, band-pass, smooth, detrend. IMU: smooth, upsample to the EMG
/// rate.
pub fn preprocess_channel(ch: &Channel, fspec: &FilterSpec, sspec: &SmoothSpec) -> Result<Channel> {
    let samples = if ch.kind.is_emg() {
        let x = notch_filter(&ch.samples, ch.rate_hz, fspec)?;
        let x = bandpass_filter(&x, ch.rate_hz, fspec)?;
        let x = smooth(&x, sspec)?;
        detrend(&x)?
    } else {
        let x = smooth(&ch.samples, sspec)?;
        upsample_linear(&x, ch.rate_hz, EMG_RATE_HZ)?
    };
    Ok(Channel::new(ch.placement, ch.kind, EMG_RATE_HZ, samples))
}

pub fn preprocess_recording(rec: &Recording, fspec: &FilterSpec, sspec: &SmoothSpec) -> Result<Recording> {
    let channels = rec
        .channels
        .par_iter()
        .map(|c| preprocess_channel(c, fspec, sspec))
        .collect::<Result<Vec<_>>>()?;
    Recording::new(rec.participant_id.clone(), rec.posture, channels, rec.calibration_span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn notch_kills_60hz_and_passes_10hz() {
        let spec = FilterSpec::default();
        let x = sine(60.0, 2000.0, 4000, 1.0);
        let y = notch_filter(&x, 2000.0, &spec).unwrap();
        // centre second, away from the edge transients
        assert!(rms(&y[1000..3000]) <= 0.032 * rms(&x[1000..3000]));

        let x = sine(10.0, 2000.0, 4000, 1.0);
        let y = notch_filter(&x, 2000.0, &spec).unwrap();
        let ratio = rms(&y[1000..3000]) / rms(&x[1000..3000]);
        assert!((ratio - 1.0).abs() < 0.11, "{ratio}");
    }

    #[test]
    fn notch_of_zero_is_zero() {
        let y = notch_filter(&[0.0; 500], 2000.0, &FilterSpec::default()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_signal_rejected() {
        let err = notch_filter(&[1.0; 5], 2000.0, &FilterSpec::default()).unwrap_err();
        assert!(matches!(err, Error::SignalTooShort { .. }));
    }

    #[test]
    fn bandpass_passband_and_stopband() {
        let spec = FilterSpec::default();
        let x = sine(100.0, 2000.0, 8000, 1.0);
        let y = bandpass_filter(&x, 2000.0, &spec).unwrap();
        let db = 20.0 * (rms(&y[2000..6000]) / rms(&x[2000..6000])).log10();
        assert!(db.abs() < 1.0, "{db}");

        let x = sine(5.0, 2000.0, 8000, 1.0);
        let y = bandpass_filter(&x, 2000.0, &spec).unwrap();
        let db = 20.0 * (rms(&y[2000..6000]) / rms(&x[2000..6000])).log10();
        assert!(db <= -12.0, "{db}");
    }

    #[test]
    fn bandpass_removes_dc() {
        let x = vec![3.5; 4000];
        let y = bandpass_filter(&x, 2000.0, &FilterSpec::default()).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(mean.abs() <= 1e-6 * 3.5, "{mean}");
    }

    #[test]
    fn bandpass_nyquist_checked() {
        let err = bandpass_filter(&[0.0; 1000], 800.0, &FilterSpec::default()).unwrap_err();
        assert!(matches!(err, Error::NyquistViolation(_)));
    }

    #[test]
    fn corners_at_minus_3db() {
        let spec = FilterSpec::default();
        let sos = design_bandpass(&spec, 2000.0).unwrap();
        let lo = sos.gain_db(20.0, 2000.0, true);
        let hi = sos.gain_db(500.0, 2000.0, true);
        assert!((lo + 3.0).abs() < 0.1, "{lo}");
        assert!((hi + 3.0).abs() < 0.1, "{hi}");
    }

    #[test]
    fn smooth_examples() {
        let c = vec![2.5; 100];
        let y = smooth(&c, &SmoothSpec::default()).unwrap();
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-12));

        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let y = smooth(
            &alt,
            &SmoothSpec {
                window_samples: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(y[1..].iter().all(|v| v.abs() < 1e-15));

        let x: Vec<f64> = (0..30).map(|i| (i as f64).sqrt()).collect();
        let y = smooth(
            &x,
            &SmoothSpec {
                window_samples: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(x, y);

        let err = smooth(&x, &SmoothSpec::default()).unwrap_err();
        assert!(matches!(err, Error::WindowTooLarge { .. }));
    }

    #[test]
    fn moving_average_matches_direct_sum_on_long_signal() {
        let x: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 1000) as f64 * 1e3 + 0.123).collect();
        let y = moving_average(&x, 50);
        for i in [0usize, 24, 25, 1023, 1024, 2500, 4990, 4999] {
            let lo = i.saturating_sub(25);
            let hi = (i + 24).min(4999);
            let direct = x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            assert!((y[i] - direct).abs() <= 1e-9 * direct.abs(), "{i}");
        }
    }

    #[test]
    fn detrend_examples() {
        let lin: Vec<f64> = (0..100).map(|i| 3.0 + 2.0 * i as f64).collect();
        assert!(detrend(&lin).unwrap().iter().all(|v| v.abs() < 1e-10));

        let s = sine(7.0, 1000.0, 1000, 1.0);
        let ramp: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.5 + 0.01 * i as f64)
            .collect();
        let y = detrend(&ramp).unwrap();
        // the ramp disappears; what is left is the sine minus its own LS line
        let own = detrend(&s).unwrap();
        let err: Vec<f64> = y.iter().zip(&own).map(|(a, b)| a - b).collect();
        assert!(rms(&err) < 1e-6);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let slope: f64 = y.iter().enumerate().map(|(i, v)| (i as f64 - 499.5) * v).sum();
        assert!(mean.abs() < 1e-12 && slope.abs() < 1e-6);

        assert!(detrend(&[0.0; 10]).unwrap().iter().all(|&v| v == 0.0));
        assert!(detrend(&[1.0]).is_err());
    }

    #[test]
    fn upsample_examples() {
        let y = upsample_linear(&[0.0, 10.0], 200.0, 2000.0).unwrap();
        let mut expected: Vec<f64> = (0..10).map(f64::from).collect();
        expected.extend([10.0; 10]);
        assert_eq!(y.len(), 20);
        for (a, b) in y.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(upsample_linear(&[4.0; 7], 200.0, 2000.0).unwrap(), vec![4.0; 70]);
        assert_eq!(upsample_linear(&[1.0, 2.0], 200.0, 200.0).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(
            upsample_linear(&[1.0], 200.0, 300.0),
            Err(Error::NonIntegerRatio { .. })
        ));
    }
}
