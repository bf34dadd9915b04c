use super::{Feature, FeatureVector, ThresholdSpec, Window, AR_ORDER, HIST_BINS};
use crate::error::{Error, Result};

pub fn time_features(w: &Window<'_>, th: &ThresholdSpec) -> Result<FeatureVector> {
    let x = w.samples;
    let n = x.len();
    if n < 2 {
        return Err(Error::SignalTooShort { needed: 1, got: n });
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;

    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut dev_sq = 0.0;
    let mut myop = 0usize;
    for &v in x {
        abs_sum += v.abs();
        sq_sum += v * v;
        dev_sq += (v - mean) * (v - mean);
        if v.abs() >= th.myop_thresh {
            myop += 1;
        }
    }

    let mut wl = 0.0;
    let mut d_sq = 0.0;
    let mut zc = 0usize;
    let mut wamp = 0usize;
    for pair in x.windows(2) {
        let d = pair[1] - pair[0];
        wl += d.abs();
        d_sq += d * d;
        if pair[0] * pair[1] < 0.0 && d.abs() >= th.zc_eps {
            zc += 1;
        }
        if d.abs() >= th.wamp_thresh {
            wamp += 1;
        }
    }
    let ssc = x
        .windows(3)
        .filter(|t| (t[1] - t[0]) * (t[1] - t[2]) > th.ssc_eps)
        .count();

    let var = dev_sq / (nf - 1.0);
    let mut fv = FeatureVector::default();
    fv.push(Feature::Mav, abs_sum / nf);
    fv.push(Feature::Var, var);
    fv.push(Feature::Rms, (sq_sum / nf).sqrt());
    fv.push(Feature::Wl, wl);
    fv.push(Feature::Damv, wl / (nf - 1.0));
    fv.push(Feature::Dasdv, (d_sq / (nf - 1.0)).sqrt());
    fv.push(Feature::Zc, zc as f64);
    if w.kind.is_emg() {
        fv.push(Feature::Myop, myop as f64 / nf);
        fv.push(Feature::Wamp, wamp as f64);
    }
    fv.push(Feature::Ssc, ssc as f64);
    for (i, c) in histogram(x, mean, var.sqrt(), th.hist_range_sigmas).iter().enumerate() {
        fv.push(Feature::Hist(i as u8), *c);
    }
    for (i, a) in autoregressive(x, AR_ORDER).iter().enumerate() {
        fv.push(Feature::Ar(i as u8 + 1), *a);
    }
    Ok(fv)
}

/// Counts over `[mean - k*sigma, mean + k*sigma]` in equal bins; samples
/// outside the range land in the edge bins. A flat window puts everything in
/// the centre bin.
pub fn histogram(x: &[f64], mean: f64, sigma: f64, k: f64) -> [f64; HIST_BINS] {
    let mut bins = [0.0; HIST_BINS];
    let width = 2.0 * k * sigma / HIST_BINS as f64;
    if !(width > 0.0) {
        bins[HIST_BINS / 2] = x.len() as f64;
        return bins;
    }
    let lo = mean - k * sigma;
    for &v in x {
        let idx = ((v - lo) / width).floor();
        let idx = idx.clamp(0.0, (HIST_BINS - 1) as f64) as usize;
        bins[idx] += 1.0;
    }
    bins
}

/// Yule-Walker AR coefficients via Levinson-Durbin on the mean-removed
/// signal, with `x[n] = sum_k a_k x[n-k] + e[n]`.
pub fn autoregressive(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r: Vec<f64> = (0..=order)
        .map(|lag| {
            if lag >= n {
                return 0.0;
            }
            centered[lag..]
                .iter()
                .zip(&centered)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let mut a = vec![0.0; order];
    if !(r[0] > 0.0) {
        return a;
    }
    let mut err = r[0];
    let mut prev = vec![0.0; order];
    for m in 0..order {
        let acc: f64 = (0..m).map(|j| a[j] * r[m - j]).sum();
        let k = (r[m + 1] - acc) / err;
        prev[..m].copy_from_slice(&a[..m]);
        for j in 0..m {
            a[j] = prev[j] - k * prev[m - 1 - j];
        }
        a[m] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            break;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelKind, GestureId, Placement};

    fn window(x: &[f64]) -> Window<'_> {
        Window {
            placement: Placement::W1,
            kind: ChannelKind::Emg,
            gesture: GestureId::new(0).unwrap(),
            repetition: 0,
            index: 0,
            start_s: 0.0,
            rate_hz: 2000.0,
            samples: x,
        }
    }

    #[test]
    fn alternating_sequence() {
        let x = [1.0, -1.0, 1.0, -1.0];
        let fv = time_features(&window(&x), &ThresholdSpec::default()).unwrap();
        assert_eq!(fv.get(Feature::Mav), Some(1.0));
        assert_eq!(fv.get(Feature::Rms), Some(1.0));
        assert_eq!(fv.get(Feature::Wl), Some(6.0));
        assert_eq!(fv.get(Feature::Zc), Some(3.0));
        assert_eq!(fv.get(Feature::Ssc), Some(2.0));
        assert_eq!(fv.len(), 24);
    }

    #[test]
    fn constant_sequence() {
        let x = [-2.5; 50];
        let fv = time_features(&window(&x), &ThresholdSpec::default()).unwrap();
        assert_eq!(fv.get(Feature::Mav), Some(2.5));
        assert_eq!(fv.get(Feature::Var), Some(0.0));
        assert_eq!(fv.get(Feature::Wl), Some(0.0));
        assert_eq!(fv.get(Feature::Zc), Some(0.0));
        assert_eq!(fv.get(Feature::Dasdv), Some(0.0));
        // degenerate window: centre bin and zero AR
        assert_eq!(fv.get(Feature::Hist(5)), Some(50.0));
        assert_eq!(fv.get(Feature::Ar(1)), Some(0.0));
    }

    #[test]
    fn imu_window_skips_threshold_features() {
        let x = [0.1, 0.3, -0.2, 0.05];
        let mut w = window(&x);
        w.kind = ChannelKind::MagZ;
        let fv = time_features(&w, &ThresholdSpec::default()).unwrap();
        assert_eq!(fv.len(), 22);
        assert!(fv.get(Feature::Myop).is_none());
        assert!(fv.get(Feature::Wamp).is_none());
    }

    #[test]
    fn threshold_counts() {
        let x = [0.0, 25.0, -30.0, 5.0];
        let fv = time_features(&window(&x), &ThresholdSpec::default()).unwrap();
        assert_eq!(fv.get(Feature::Myop), Some(0.5));
        assert_eq!(fv.get(Feature::Wamp), Some(3.0));
    }

    #[test]
    fn histogram_clips_to_edges() {
        let h = histogram(&[-100.0, 0.0, 100.0], 0.0, 1.0, 3.0);
        assert_eq!(h[0], 1.0);
        assert_eq!(h[5], 1.0);
        assert_eq!(h[9], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn ar1_process_recovered() {
        let mut x = vec![0.0; 20000];
        let mut state = 12345u64;
        for i in 1..x.len() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            x[i] = 0.7 * x[i - 1] + u;
        }
        let a = autoregressive(&x, 4);
        assert!((a[0] - 0.7).abs() < 0.03, "{a:?}");
        assert!(a[1..].iter().all(|v| v.abs() < 0.03));
    }
}
