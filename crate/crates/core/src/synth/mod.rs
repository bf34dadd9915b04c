//! Synthetic sessions with known class structure, plus naive reference
//! implementations of the metrics for cross-checking.
//!
//! Every gesture gets a per-placement signature drawn from the spec seed.
//! EMG carries it as the amplitude of band-limited noise bursts, ACCEL and
//! MAG as small static offsets plus a slow tremor, GYRO as nothing at all in
//! the default preset. `separability` scales the distance between gesture
//! signatures; at 0 every gesture is drawn from the same distribution.

pub mod oracle;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, FilterSpec};
use crate::error::{Error, Result};
use crate::model::{
    generate_label_schedule, save_session, Channel, ChannelKind, LabelTrack, Modality, Placement, Posture, Recording,
    ScheduleParams, EMG_RATE_HZ, IMU_RATE_HZ, N_GESTURES, N_UNITS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmgModel {
    /// Baseline noise sigma in µV.
    pub noise_uv: f64,
    /// Median burst RMS in µV.
    pub burst_uv: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Log-scale spread of the per-(gesture, placement) burst amplitude.
    pub signature_spread: f64,
    /// Log-scale sd of each repetition's amplitude around the signature.
    pub repetition_jitter: f64,
    /// Log-scale depth of the slow amplitude wander inside a burst.
    pub wander: f64,
    pub powerline_uv: f64,
}

impl Default for EmgModel {
    fn default() -> Self {
        EmgModel {
            noise_uv: 5.0,
            burst_uv: 40.0,
            band_lo_hz: 20.0,
            band_hi_hz: 450.0,
            signature_spread: 0.8,
            repetition_jitter: 0.35,
            wander: 0.3,
            powerline_uv: 0.0,
        }
    }
}

/// Three-axis inertial channel model, in the sensor's own unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InertialModel {
    pub noise: f64,
    /// Magnitude of the resting field (gravity, geomagnetic field).
    pub field: f64,
    /// Scale of the per-gesture static offset on each axis.
    pub offset: f64,
    /// Sd of each repetition's offset around the gesture's.
    pub repetition_jitter: f64,
    /// Median amplitude of the slow oscillation while a gesture is held.
    pub tremor: f64,
}

impl InertialModel {
    pub fn accel() -> Self {
        InertialModel {
            noise: 0.01,
            field: 1.0,
            offset: 0.08,
            repetition_jitter: 0.05,
            tremor: 0.01,
        }
    }

    pub fn gyro() -> Self {
        InertialModel {
            noise: 1.5,
            field: 0.0,
            offset: 0.0,
            repetition_jitter: 0.0,
            tremor: 0.0,
        }
    }

    pub fn mag() -> Self {
        InertialModel {
            noise: 0.8,
            field: 45.0,
            offset: 3.0,
            repetition_jitter: 2.0,
            tremor: 0.3,
        }
    }
}

impl Default for InertialModel {
    fn default() -> Self {
        InertialModel::accel()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_participants: usize,
    pub schedule: ScheduleParams,
    /// Postures that open with a calibration period; the others start with
    /// the first rest.
    pub calibration_postures: Vec<Posture>,
    pub separability: f64,
    /// Delay of the performed gestures relative to the cues, in seconds.
    pub lag_s: f64,
    /// Onset and offset ramp of the EMG bursts.
    pub emg_ramp_s: f64,
    /// Duration of the hand movement into and out of a gesture.
    pub transition_s: f64,
    /// Log-scale sd of the per-participant difficulty factor.
    pub participant_spread: f64,
    pub emg: EmgModel,
    pub accel: InertialModel,
    pub gyro: InertialModel,
    pub mag: InertialModel,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::standard(0)
    }
}

impl SynthSpec {
    /// EMG noisy and variable, ACCEL and MAG informative, GYRO uninformative.
    pub fn standard(seed: u64) -> Self {
        SynthSpec {
            seed,
            n_participants: 12,
            schedule: ScheduleParams::default(),
            calibration_postures: vec![Posture::Deg90],
            separability: 1.0,
            lag_s: 0.0,
            emg_ramp_s: 0.1,
            transition_s: 0.3,
            participant_spread: 0.25,
            emg: EmgModel::default(),
            accel: InertialModel::accel(),
            gyro: InertialModel::gyro(),
            mag: InertialModel::mag(),
        }
    }

    /// A world where the gyroscope sees the gestures too.
    pub fn informative_gyro(seed: u64) -> Self {
        SynthSpec {
            gyro: InertialModel {
                noise: 1.5,
                field: 0.0,
                offset: 0.0,
                repetition_jitter: 0.0,
                tremor: 6.0,
            },
            ..SynthSpec::standard(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(0.0..=1.0).contains(&self.separability) {
            return Err(Error::InvalidSpec(format!(
                "separability {} outside [0, 1]",
                self.separability
            )));
        }
        let mut nonneg = vec![
            self.lag_s.abs(),
            self.emg_ramp_s,
            self.transition_s,
            self.participant_spread,
            self.emg.noise_uv,
            self.emg.burst_uv,
            self.emg.signature_spread,
            self.emg.repetition_jitter,
            self.emg.wander,
            self.emg.powerline_uv,
        ];
        for m in [self.accel, self.gyro, self.mag] {
            nonneg.extend([m.noise, m.field, m.offset, m.repetition_jitter, m.tremor]);
        }
        for v in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("negative or non-finite synth parameter {v}")));
            }
        }
        if self.emg.band_lo_hz <= 0.0 || self.emg.band_hi_hz <= self.emg.band_lo_hz || self.emg.band_hi_hz >= EMG_RATE_HZ / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "burst band {}-{} Hz",
                self.emg.band_lo_hz, self.emg.band_hi_hz
            )));
        }
        Ok(())
    }

    pub fn schedule_for(&self, posture: Posture) -> ScheduleParams {
        let mut s = self.schedule;
        if !self.calibration_postures.contains(&posture) {
            s.calibration_s = 0.0;
        }
        s
    }

    fn inertial(&self, m: Modality) -> &InertialModel {
        match m {
            Modality::Accel => &self.accel,
            Modality::Gyro => &self.gyro,
            _ => &self.mag,
        }
    }
}

pub fn participant_id(index: usize) -> String {
    format!("P{:02}", index + 1)
}

// Substream layout: participant in the high bits, purpose and channel below.
const TAG_TRAITS: u64 = 0;
const TAG_ORIENTATION: u64 = 0x100;
const TAG_CHANNEL: u64 = 0x1000;

fn rng_for(seed: u64, participant: usize, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((participant as u64 + 1) << 24) | tag);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Per-participant draws shared by both postures.
struct Traits {
    emg_scale: f64,
    emg_jitter: f64,
    imu_jitter: f64,
    /// `[gesture][placement]` log amplitude offsets.
    emg_signature: Vec<[f64; N_UNITS]>,
    /// `[modality][gesture][placement][axis]` unit offsets.
    imu_offset: Vec<Vec<[[f64; 3]; N_UNITS]>>,
    /// `[modality][gesture][placement][axis]` (log amplitude, frequency signature in [-1, 1]).
    imu_tremor: Vec<Vec<[[(f64, f64); 3]; N_UNITS]>>,
}

const IMU_MODALITIES: [Modality; 3] = [Modality::Accel, Modality::Gyro, Modality::Mag];

fn imu_slot(m: Modality) -> usize {
    IMU_MODALITIES.iter().position(|x| *x == m).unwrap()
}

fn draw_traits(spec: &SynthSpec, participant: usize) -> Traits {
    let mut rng = rng_for(spec.seed, participant, TAG_TRAITS);
    let s = spec.participant_spread;
    let emg_scale = (s * normal(&mut rng)).exp();
    let emg_jitter = (s * normal(&mut rng)).exp();
    let imu_jitter = (s * normal(&mut rng)).exp();
    let emg_signature = (0..N_GESTURES)
        .map(|_| std::array::from_fn(|_| normal(&mut rng)))
        .collect();
    let imu_offset = IMU_MODALITIES
        .iter()
        .map(|_| {
            (0..N_GESTURES)
                .map(|_| std::array::from_fn(|_| std::array::from_fn(|_| normal(&mut rng))))
                .collect()
        })
        .collect();
    let imu_tremor = IMU_MODALITIES
        .iter()
        .map(|_| {
            (0..N_GESTURES)
                .map(|_| {
                    std::array::from_fn(|_| std::array::from_fn(|_| (normal(&mut rng), rng.random_range(-1.0..1.0))))
                })
                .collect()
        })
        .collect();
    Traits {
        emg_scale,
        emg_jitter,
        imu_jitter,
        emg_signature,
        imu_offset,
        imu_tremor,
    }
}

/// Resting field direction per placement for one posture.
fn orientation(spec: &SynthSpec, participant: usize, posture: Posture, m: Modality) -> [[f64; 3]; N_UNITS] {
    let tag = TAG_ORIENTATION | ((posture.index() as u64) << 4) | imu_slot(m) as u64;
    let mut rng = rng_for(spec.seed, participant, tag);
    std::array::from_fn(|_| {
        let v: [f64; 3] = std::array::from_fn(|_| normal(&mut rng));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.map(|x| x / norm)
    })
}

/// Raised-cosine gate: 0 outside `[a, b]`, 1 inside after `ramp` seconds.
fn gate(t: f64, a: f64, b: f64, ramp: f64) -> f64 {
    if t < a || t > b {
        return 0.0;
    }
    if ramp <= 0.0 {
        return 1.0;
    }
    let edge = (t - a).min(b - t);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge / ramp).cos()
    }
}

struct Burst {
    gesture: usize,
    start_s: f64,
    end_s: f64,
}

fn bursts(labels: &LabelTrack) -> Vec<Burst> {
    labels
        .gesture_segments()
        .map(|(g, _, seg)| Burst {
            gesture: g.index(),
            start_s: seg.start_s,
            end_s: seg.end_s,
        })
        .collect()
}

fn sample_range(a: f64, b: f64, rate: f64, n: usize) -> std::ops::Range<usize> {
    let lo = ((a * rate).floor().max(0.0) as usize).min(n);
    let hi = (((b * rate).ceil() as usize) + 1).min(n);
    lo..hi
}

fn emg_channel(
    spec: &SynthSpec,
    traits: &Traits,
    placement: Placement,
    truth: &[Burst],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let e = &spec.emg;
    let rate = EMG_RATE_HZ;
    let mut x: Vec<f64> = (0..n).map(|_| e.noise_uv * normal(rng)).collect();
    if e.powerline_uv > 0.0 {
        let phase = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            *v += e.powerline_uv * (2.0 * PI * 60.0 * i as f64 / rate + phase).sin();
        }
    }
    let white: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let band = FilterSpec {
        band_lo_hz: e.band_lo_hz,
        band_hi_hz: e.band_hi_hz,
        band_order: 4,
        zero_phase: false,
        ..FilterSpec::default()
    };
    let mut carrier = dsp::bandpass_filter(&white, rate, &band)?;
    let sd = (carrier.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if sd > 0.0 {
        carrier.iter_mut().for_each(|v| *v /= sd);
    }
    let sep = spec.separability;
    for b in truth {
        let log_amp = sep * e.signature_spread * traits.emg_signature[b.gesture][placement.index()]
            + e.repetition_jitter * traits.emg_jitter * normal(rng);
        let amp = e.burst_uv * traits.emg_scale * log_amp.exp();
        // slow wander: two random low-frequency components
        let w: [(f64, f64); 2] = std::array::from_fn(|_| (rng.random_range(0.3..1.5), rng.random_range(0.0..2.0 * PI)));
        let (a, z) = (b.start_s + spec.lag_s, b.end_s + spec.lag_s);
        for i in sample_range(a, z, rate, n) {
            let t = i as f64 / rate;
            let g = gate(t, a, z, spec.emg_ramp_s);
            if g == 0.0 {
                continue;
            }
            let m = w.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>() / 2f64.sqrt();
            x[i] += g * amp * (e.wander * m).exp() * carrier[i];
        }
    }
    Ok(x)
}

fn imu_channel(
    spec: &SynthSpec,
    traits: &Traits,
    placement: Placement,
    kind: ChannelKind,
    base: f64,
    truth: &[Burst],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let m = kind.modality();
    let model = spec.inertial(m);
    let axis = kind as usize - m.kinds()[0] as usize;
    let slot = imu_slot(m);
    let rate = IMU_RATE_HZ;
    let sep = spec.separability;
    let mut x: Vec<f64> = (0..n).map(|_| base + model.noise * normal(rng)).collect();
    for b in truth {
        let offset = sep * model.offset * traits.imu_offset[slot][b.gesture][placement.index()][axis]
            + model.repetition_jitter * traits.imu_jitter * normal(rng);
        let (log_amp, fsig) = traits.imu_tremor[slot][b.gesture][placement.index()][axis];
        let amp = model.tremor * (sep * 0.5 * log_amp).exp();
        let freq = 2.5 + sep * 1.5 * fsig;
        let phase = rng.random_range(0.0..2.0 * PI);
        let (a, z) = (b.start_s + spec.lag_s, b.end_s + spec.lag_s);
        for i in sample_range(a, z, rate, n) {
            let t = i as f64 / rate;
            let g = gate(t, a, z, spec.transition_s);
            if g == 0.0 {
                continue;
            }
            x[i] += g * (offset + amp * (2.0 * PI * freq * t + phase).sin());
        }
    }
    x
}

/// One synthetic session and its ground-truth labels (the cued schedule
/// shifted by `lag_s`).
pub fn gen_session(spec: &SynthSpec, participant: usize, posture: Posture) -> Result<(Recording, LabelTrack)> {
    spec.validate()?;
    let schedule = spec.schedule_for(posture);
    let cued = generate_label_schedule(&schedule)?;
    let truth_track = cued.shifted(spec.lag_s);
    let truth = bursts(&cued);
    let total = schedule.total_s();
    let n_emg = (total * EMG_RATE_HZ).round() as usize;
    let n_imu = (total * IMU_RATE_HZ).round() as usize;
    let traits = draw_traits(spec, participant);
    let fields: Vec<[[f64; 3]; N_UNITS]> = IMU_MODALITIES
        .iter()
        .map(|&m| orientation(spec, participant, posture, m))
        .collect();

    let slots: Vec<(usize, Placement, ChannelKind)> = Placement::ALL
        .iter()
        .flat_map(|&p| ChannelKind::ALL.iter().map(move |&k| (p, k)))
        .enumerate()
        .map(|(i, (p, k))| (i, p, k))
        .collect();
    let channels = slots
        .par_iter()
        .map(|&(i, p, k)| {
            let tag = TAG_CHANNEL | ((posture.index() as u64) << 8) | i as u64;
            let mut rng = rng_for(spec.seed, participant, tag);
            if k.is_emg() {
                let x = emg_channel(spec, &traits, p, &truth, n_emg, &mut rng)?;
                Ok(Channel::new(p, k, EMG_RATE_HZ, x))
            } else {
                let m = k.modality();
                let axis = k as usize - m.kinds()[0] as usize;
                let base = spec.inertial(m).field * fields[imu_slot(m)][p.index()][axis];
                let x = imu_channel(spec, &traits, p, k, base, &truth, n_imu, &mut rng);
                Ok(Channel::new(p, k, IMU_RATE_HZ, x))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let calibration_span = truth_track
        .calibration()
        .map(|s| (s.start_s, s.end_s))
        .unwrap_or((0.0, 0.0));
    let rec = Recording::new(participant_id(participant), posture, channels, calibration_span)?;
    Ok((rec, truth_track))
}

/// Directory name of one synthetic session.
pub fn session_dir_name(participant: usize, posture: Posture) -> String {
    format!("{}_{}", participant_id(participant), posture.name())
}

/// Writes every participant and posture as a session directory under `out`.
/// Sessions are generated one at a time to bound memory.
pub fn write_cohort(spec: &SynthSpec, out: &Path) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    std::fs::create_dir_all(out)?;
    let mut dirs = Vec::new();
    for participant in 0..spec.n_participants {
        for posture in Posture::ALL {
            let (rec, _) = gen_session(spec, participant, posture)?;
            let dir = out.join(session_dir_name(participant, posture));
            save_session(&rec, &spec.schedule_for(posture), &dir)?;
            dirs.push(dir);
        }
    }
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GestureId;
    use crate::quality::calibration_noise;

    fn short_spec() -> SynthSpec {
        SynthSpec {
            n_participants: 2,
            schedule: ScheduleParams {
                n_gestures: 3,
                reps: 2,
                pre_gesture_rest_s: 1.0,
                calibration_s: 15.0,
                ..Default::default()
            },
            ..SynthSpec::standard(7)
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let spec = short_spec();
        let (a, la) = gen_session(&spec, 1, Posture::Deg90).unwrap();
        let (b, lb) = gen_session(&spec, 1, Posture::Deg90).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(a.channels.len(), 80);
        assert_eq!(a.participant_id, "P02");
        let total = spec.schedule.total_s();
        for c in &a.channels {
            let rate = if c.kind.is_emg() { 2000.0 } else { 200.0 };
            assert_eq!(c.rate_hz, rate);
            assert_eq!(c.samples.len(), (total * rate).round() as usize);
        }
        assert_eq!(a.calibration_span, (0.0, 15.0));
        let (c, _) = gen_session(&spec, 0, Posture::Deg90).unwrap();
        assert_ne!(a.channels[0].samples, c.channels[0].samples);
        let (d, ld) = gen_session(&spec, 1, Posture::Deg180).unwrap();
        assert!(ld.calibration().is_none());
        assert_eq!(d.calibration_span, (0.0, 0.0));
    }

    #[test]
    fn calibration_sigma_recovered() {
        let spec = short_spec();
        let (rec, _) = gen_session(&spec, 0, Posture::Deg90).unwrap();
        for ch in rec.emg_channels() {
            let cal = &ch.samples[..(15.0 * 2000.0) as usize];
            let s = calibration_noise(cal).unwrap();
            assert!((s / spec.emg.noise_uv - 1.0).abs() < 0.02, "{s}");
        }
        let ch = rec.channel(Placement::W3, ChannelKind::GyroZ).unwrap();
        let s = calibration_noise(&ch.samples[..3000]).unwrap();
        assert!((s / spec.gyro.noise - 1.0).abs() < 0.05, "{s}");
    }

    #[test]
    fn lag_moves_bursts() {
        let spec = SynthSpec {
            lag_s: 0.25,
            ..short_spec()
        };
        let (rec, truth) = gen_session(&spec, 0, Posture::Deg90).unwrap();
        let first = truth.gesture_segments().next().unwrap().2;
        assert!((first.start_s - 16.25).abs() < 1e-12);
        let ch = rec.channel(Placement::F1, ChannelKind::Emg).unwrap();
        let rms = |a: f64, b: f64| {
            let s = &ch.samples[(a * 2000.0) as usize..(b * 2000.0) as usize];
            (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt()
        };
        assert!(rms(16.0, 16.24) < 1.2 * spec.emg.noise_uv);
        assert!(rms(16.5, 18.0) > 2.0 * spec.emg.noise_uv);
    }

    fn ks_p(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
        let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
        let mut p = 0.0;
        for k in 1..100 {
            let k = k as f64;
            p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn zero_separability_is_indistinguishable() {
        let spec = SynthSpec {
            separability: 0.0,
            n_participants: 1,
            schedule: ScheduleParams {
                n_gestures: 4,
                reps: 40,
                gesture_s: 1.0,
                rest_s: 0.5,
                pre_gesture_rest_s: 0.5,
                calibration_s: 0.0,
            },
            ..SynthSpec::standard(11)
        };
        let (rec, truth) = gen_session(&spec, 0, Posture::Deg90).unwrap();
        // one statistic per repetition: held-segment RMS for EMG, mean for an accel axis
        let stat = |kind: ChannelKind, g: usize, f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            let ch = rec.channel(Placement::W2, kind).unwrap();
            truth
                .gesture_segments()
                .filter(|(id, _, _)| *id == GestureId::new(g).unwrap())
                .map(|(_, _, s)| {
                    let a = ((s.start_s + 0.35) * ch.rate_hz) as usize;
                    let b = ((s.end_s - 0.35) * ch.rate_hz) as usize;
                    f(&ch.samples[a..b])
                })
                .collect()
        };
        let rms = |s: &[f64]| (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt();
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        for (kind, f) in [(ChannelKind::Emg, &rms as &dyn Fn(&[f64]) -> f64), (ChannelKind::AccelY, &mean)] {
            let groups: Vec<Vec<f64>> = (0..4).map(|g| stat(kind, g, f)).collect();
            for a in 0..4 {
                for b in a + 1..4 {
                    let p = ks_p(&groups[a], &groups[b]);
                    // 12 comparisons, family-wise 1%
                    assert!(p > 0.01 / 12.0, "{kind:?} {a} vs {b}: p = {p}");
                }
            }
        }
    }

    #[test]
    fn cohort_dirs_round_trip() {
        let spec = SynthSpec {
            n_participants: 1,
            schedule: ScheduleParams {
                n_gestures: 1,
                reps: 1,
                pre_gesture_rest_s: 1.0,
                calibration_s: 1.0,
                ..Default::default()
            },
            ..SynthSpec::standard(3)
        };
        let tmp = tempfile::tempdir().unwrap();
        let dirs = write_cohort(&spec, tmp.path()).unwrap();
        assert_eq!(dirs.len(), 2);
        let rec = crate::model::load_session(&dirs[0].join("manifest.json")).unwrap();
        assert_eq!(rec.channels.len(), 80);
        let (orig, _) = gen_session(&spec, 0, Posture::Deg90).unwrap();
        for (a, b) in rec.channels.iter().zip(&orig.channels) {
            assert_eq!(a.samples.len(), b.samples.len());
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = SynthSpec {
            separability: 1.5,
            ..short_spec()
        };
        assert!(matches!(gen_session(&spec, 0, Posture::Deg90), Err(Error::InvalidSpec(_))));
    }
}
