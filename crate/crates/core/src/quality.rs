//! Calibration noise, activation SNR and signal-to-motion ratio.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SpectrumWorkspace;
use crate::model::{Channel, GestureId, LabelTrack, Modality, Placement, Recording, N_GESTURES};
use crate::stats::{self, SampleGroup, StatsOptions};

pub const MOTION_BAND_HZ: f64 = 20.0;
pub const EMG_BAND_HZ: f64 = 500.0;

/// Population standard deviation of the centered signal.
pub fn calibration_noise(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::EmptyCalibration);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    Ok((x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
}

/// One noise value per inertial sensor: the mean of its three axis sigmas.
pub fn imu_sensor_noise(axes: &[f64]) -> Result<f64> {
    if axes.len() != 3 {
        return Err(Error::WrongAxisCount(axes.len()));
    }
    Ok(axes.iter().sum::<f64>() / 3.0)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn snr(activation: &[f64], resting: &[f64]) -> Result<f64> {
    if activation.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let rest = if resting.is_empty() { 0.0 } else { rms(resting) };
    if !(rest > 0.0) {
        return Err(Error::ZeroRestingPower);
    }
    Ok(20.0 * (rms(activation) / rest).log10())
}

/// Full-band power over motion-band power of the one-sided periodogram, in dB.
pub fn smr(x: &[f64], rate_hz: f64) -> Result<f64> {
    smr_with(&mut SpectrumWorkspace::new(), x, rate_hz)
}

pub(crate) fn smr_with(ws: &mut SpectrumWorkspace, x: &[f64], rate_hz: f64) -> Result<f64> {
    if rate_hz < 2.0 * EMG_BAND_HZ {
        return Err(Error::NyquistViolation(format!(
            "SMR needs the {EMG_BAND_HZ} Hz band but the rate is {rate_hz} Hz"
        )));
    }
    if x.len() < 2 {
        return Err(Error::SignalTooShort { needed: 2, got: x.len() });
    }
    let df = rate_hz / x.len() as f64;
    let p = ws.periodogram(x, false);
    let (mut full, mut motion) = (0.0, 0.0);
    for (k, v) in p.iter().enumerate() {
        let f = k as f64 * df;
        if f <= EMG_BAND_HZ + 1e-9 {
            full += v;
        }
        if f <= MOTION_BAND_HZ + 1e-9 {
            motion += v;
        }
    }
    // anything below round-off of the full band counts as empty
    if !(motion > full * 1e-24) {
        return Err(Error::ZeroMotionBandPower);
    }
    Ok(10.0 * (full / motion).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNoise {
    pub placement: Placement,
    pub kind: crate::model::ChannelKind,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    pub placement: Placement,
    pub modality: Modality,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityNoise {
    pub modality: Modality,
    pub unit: String,
    pub mean: f64,
    pub std: f64,
    pub n_sensors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub participant_id: String,
    pub channels: Vec<ChannelNoise>,
    pub sensors: Vec<SensorNoise>,
    pub modalities: Vec<ModalityNoise>,
}

fn span_samples(ch: &Channel, start_s: f64, end_s: f64) -> &[f64] {
    let n = ch.samples.len();
    let a = ((start_s * ch.rate_hz).round().max(0.0) as usize).min(n);
    let b = ((end_s * ch.rate_hz).round().max(0.0) as usize).clamp(a, n);
    &ch.samples[a..b]
}

/// Noise of every channel over the recording's calibration span.
pub fn noise_report(rec: &Recording) -> Result<NoiseReport> {
    let (c0, c1) = rec.calibration_span;
    let mut channels = Vec::new();
    for ch in &rec.channels {
        channels.push(ChannelNoise {
            placement: ch.placement,
            kind: ch.kind,
            sigma: calibration_noise(span_samples(ch, c0, c1))?,
        });
    }
    let mut sensors = Vec::new();
    for placement in rec.placements() {
        for modality in Modality::ALL {
            let sig: Vec<f64> = channels
                .iter()
                .filter(|c| c.placement == placement && c.kind.modality() == modality)
                .map(|c| c.sigma)
                .collect();
            if sig.is_empty() {
                continue;
            }
            let sigma = if modality == Modality::Emg { sig[0] } else { imu_sensor_noise(&sig)? };
            sensors.push(SensorNoise {
                placement,
                modality,
                sigma,
            });
        }
    }
    let modalities = Modality::ALL
        .into_iter()
        .filter_map(|m| {
            let v: Vec<f64> = sensors.iter().filter(|s| s.modality == m).map(|s| s.sigma).collect();
            (!v.is_empty()).then(|| ModalityNoise {
                modality: m,
                unit: m.kinds()[0].unit().to_string(),
                mean: stats::mean(&v),
                std: stats::sample_std(&v),
                n_sensors: v.len(),
            })
        })
        .collect();
    Ok(NoiseReport {
        participant_id: rec.participant_id.clone(),
        channels,
        sensors,
        modalities,
    })
}

impl NoiseReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["participant", "placement", "modality", "sigma", "unit"])?;
        for s in &self.sensors {
            w.write_record([
                self.participant_id.as_str(),
                s.placement.name(),
                s.modality.name(),
                &s.sigma.to_string(),
                s.modality.kinds()[0].unit(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestReference {
    /// The rest segment right after each repetition.
    #[default]
    FollowingRest,
    Calibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityOptions {
    pub reference: RestReference,
    /// Inertial modalities pooled into the IMU columns.
    pub imu_modalities: Vec<Modality>,
    pub stats: StatsOptions,
}

impl Default for QualityOptions {
    fn default() -> Self {
        QualityOptions {
            reference: RestReference::default(),
            imu_modalities: vec![Modality::Accel, Modality::Gyro, Modality::Mag],
            stats: StatsOptions::default(),
        }
    }
}

/// Per-gesture SNR and SMR of one channel; `None` where SMR has no motion-band power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelQuality {
    pub placement: Placement,
    pub modality: Modality,
    pub snr: Vec<f64>,
    pub smr: Vec<Option<f64>>,
}

/// Metrics of one channel for every gesture in `labels`. Inertial channels
/// are centred on their global mean first.
pub fn channel_quality(
    ch: &Channel,
    labels: &LabelTrack,
    opts: &QualityOptions,
    ws: &mut SpectrumWorkspace,
) -> Result<ChannelQuality> {
    let centred;
    let ch = if ch.kind.is_emg() {
        ch
    } else {
        let m = ch.samples.iter().sum::<f64>() / ch.samples.len().max(1) as f64;
        centred = Channel {
            samples: ch.samples.iter().map(|v| v - m).collect(),
            ..ch.clone()
        };
        &centred
    };
    let mut act = vec![Vec::new(); N_GESTURES];
    let mut smr_acc = vec![Vec::new(); N_GESTURES];
    for (g, _, seg) in labels.gesture_segments() {
        let x = span_samples(ch, seg.start_s, seg.end_s);
        act[g.index()].extend_from_slice(x);
        match smr_with(ws, x, ch.rate_hz) {
            Ok(v) => smr_acc[g.index()].push(v),
            Err(Error::ZeroMotionBandPower) => {}
            Err(e) => return Err(e),
        }
    }
    let mut rest = vec![Vec::new(); N_GESTURES];
    match opts.reference {
        RestReference::FollowingRest => {
            for (g, _, seg) in labels.post_gesture_rests() {
                rest[g.index()].extend_from_slice(span_samples(ch, seg.start_s, seg.end_s));
            }
        }
        RestReference::Calibration => {
            let cal = labels.calibration().ok_or(Error::EmptyCalibration)?;
            let x = span_samples(ch, cal.start_s, cal.end_s);
            for r in rest.iter_mut() {
                r.extend_from_slice(x);
            }
        }
    }
    let mut snr_out = Vec::with_capacity(N_GESTURES);
    let mut smr_out = Vec::with_capacity(N_GESTURES);
    for g in 0..N_GESTURES {
        snr_out.push(if act[g].is_empty() { f64::NAN } else { snr(&act[g], &rest[g])? });
        smr_out.push((!smr_acc[g].is_empty()).then(|| stats::mean(&smr_acc[g])));
    }
    Ok(ChannelQuality {
        placement: ch.placement,
        modality: ch.kind.modality(),
        snr: snr_out,
        smr: smr_out,
    })
}

/// Channel-averaged metrics of one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantQuality {
    pub participant_id: String,
    pub snr_emg: Vec<f64>,
    pub snr_imu: Vec<f64>,
    pub smr_emg: Vec<f64>,
    pub smr_imu: Vec<f64>,
    /// Channel-gesture pairs dropped from SMR for lacking motion-band power.
    pub smr_flagged: usize,
}

pub fn participant_quality(
    participant_id: &str,
    channels: &[ChannelQuality],
    opts: &QualityOptions,
) -> ParticipantQuality {
    let mut flagged = 0;
    let mut avg = |pick: &dyn Fn(&ChannelQuality) -> bool, smr: bool| -> Vec<f64> {
        (0..N_GESTURES)
            .map(|g| {
                let vals: Vec<f64> = channels
                    .iter()
                    .filter(|c| pick(c))
                    .filter_map(|c| {
                        if smr {
                            if c.smr[g].is_none() {
                                flagged += 1;
                            }
                            c.smr[g]
                        } else {
                            Some(c.snr[g])
                        }
                    })
                    .collect();
                if vals.is_empty() {
                    if smr {
                        f64::INFINITY
                    } else {
                        f64::NAN
                    }
                } else {
                    stats::mean(&vals)
                }
            })
            .collect()
    };
    let is_emg = |c: &ChannelQuality| c.modality == Modality::Emg;
    let is_imu = |c: &ChannelQuality| opts.imu_modalities.contains(&c.modality);
    let snr_emg = avg(&is_emg, false);
    let snr_imu = avg(&is_imu, false);
    let smr_emg = avg(&is_emg, true);
    let smr_imu = avg(&is_imu, true);
    ParticipantQuality {
        participant_id: participant_id.to_string(),
        snr_emg,
        snr_imu,
        smr_emg,
        smr_imu,
        smr_flagged: flagged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(v: &[f64]) -> MeanStd {
        MeanStd {
            mean: stats::mean(v),
            std: stats::sample_std(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureQuality {
    pub gesture: GestureId,
    pub name: String,
    pub snr_emg: MeanStd,
    pub snr_imu: MeanStd,
    pub d_snr: Option<f64>,
    pub p_snr: Option<f64>,
    pub smr_emg: MeanStd,
    pub smr_imu: MeanStd,
    pub d_smr: Option<f64>,
    pub p_smr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub participants: Vec<String>,
    pub rows: Vec<GestureQuality>,
    pub smr_flagged: usize,
}

fn effect(a: &[f64], b: &[f64], opts: &StatsOptions) -> (Option<f64>, Option<f64>) {
    let (ma, mb) = (MeanStd::of(a), MeanStd::of(b));
    let d = stats::cohens_d(ma.mean, ma.std, mb.mean, mb.std).ok();
    let p = stats::compare_groups(&SampleGroup::new("emg", a.to_vec()), &SampleGroup::new("imu", b.to_vec()), opts)
        .ok()
        .map(|r| r.p_value);
    (d, p)
}

/// Averages participants (each already averaged over channels) per gesture.
pub fn aggregate_quality(parts: &[ParticipantQuality], opts: &QualityOptions) -> QualityReport {
    let col = |f: &dyn Fn(&ParticipantQuality) -> f64| -> Vec<f64> { parts.iter().map(f).collect() };
    let rows = (0..N_GESTURES)
        .map(|g| {
            let se = col(&|p| p.snr_emg[g]);
            let si = col(&|p| p.snr_imu[g]);
            let me = col(&|p| p.smr_emg[g]);
            let mi = col(&|p| p.smr_imu[g]);
            let (d_snr, p_snr) = effect(&se, &si, &opts.stats);
            let (d_smr, p_smr) = effect(&me, &mi, &opts.stats);
            let gesture = GestureId::new(g).unwrap();
            GestureQuality {
                gesture,
                name: gesture.name().to_string(),
                snr_emg: MeanStd::of(&se),
                snr_imu: MeanStd::of(&si),
                d_snr,
                p_snr,
                smr_emg: MeanStd::of(&me),
                smr_imu: MeanStd::of(&mi),
                d_smr,
                p_smr,
            }
        })
        .collect();
    QualityReport {
        participants: parts.iter().map(|p| p.participant_id.clone()).collect(),
        rows,
        smr_flagged: parts.iter().map(|p| p.smr_flagged).sum(),
    }
}

/// Per-gesture table over recordings already at their analysis rate.
pub fn gesture_quality_table(recs: &[(Recording, LabelTrack)], opts: &QualityOptions) -> Result<QualityReport> {
    if recs.is_empty() {
        return Err(Error::MissingResults("no recordings".into()));
    }
    let mut parts = Vec::with_capacity(recs.len());
    let mut ws = SpectrumWorkspace::new();
    for (rec, labels) in recs {
        let chans = rec
            .channels
            .iter()
            .map(|ch| channel_quality(ch, labels, opts, &mut ws))
            .collect::<Result<Vec<_>>>()?;
        parts.push(participant_quality(&rec.participant_id, &chans, opts));
    }
    Ok(aggregate_quality(&parts, opts))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl QualityReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "gesture",
            "snr_emg_mean",
            "snr_emg_std",
            "snr_imu_mean",
            "snr_imu_std",
            "d_snr",
            "p_snr",
            "smr_emg_mean",
            "smr_emg_std",
            "smr_imu_mean",
            "smr_imu_std",
            "d_smr",
            "p_smr",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.snr_emg.mean.to_string(),
                r.snr_emg.std.to_string(),
                r.snr_imu.mean.to_string(),
                r.snr_imu.std.to_string(),
                opt(r.d_snr),
                opt(r.p_snr),
                r.smr_emg.mean.to_string(),
                r.smr_emg.std.to_string(),
                r.smr_imu.mean.to_string(),
                r.smr_imu.std.to_string(),
                opt(r.d_smr),
                opt(r.p_smr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self, alpha: f64) -> String {
        let cell = |m: &MeanStd, p: Option<f64>| {
            format!("{:.2}({:.2}){}", m.mean, m.std, p.map(|p| stats::star(p, alpha)).unwrap_or(""))
        };
        let d = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        let mut s = String::from("| gesture | SNR EMG | SNR IMU | d | SMR EMG | SMR IMU | d |\n|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                r.name,
                cell(&r.snr_emg, None),
                cell(&r.snr_imu, r.p_snr),
                d(r.d_snr),
                cell(&r.smr_emg, None),
                cell(&r.smr_imu, r.p_smr),
                d(r.d_smr)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_label_schedule, ChannelKind, Posture, ScheduleParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn tone(f: f64, amp: f64, n: usize, rate: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / rate).sin()).collect()
    }

    #[test]
    fn noise_examples() {
        assert_eq!(calibration_noise(&[3.0; 10]).unwrap(), 0.0);
        assert_eq!(calibration_noise(&[-1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(calibration_noise(&[1.0]), Err(Error::EmptyCalibration)));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nd = Normal::new(0.0, 5.0).unwrap();
        let x: Vec<f64> = (0..30000).map(|_| nd.sample(&mut rng)).collect();
        assert!((calibration_noise(&x).unwrap() - 5.0).abs() < 0.1);
        let shifted: Vec<f64> = x.iter().map(|v| v + 123.0).collect();
        assert!((calibration_noise(&shifted).unwrap() - calibration_noise(&x).unwrap()).abs() < 1e-9);
        assert_eq!(imu_sensor_noise(&[0.0, 0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(imu_sensor_noise(&[2.0, 3.0, 4.0]).unwrap(), 3.0);
        assert!(matches!(imu_sensor_noise(&[1.0]), Err(Error::WrongAxisCount(1))));
    }

    #[test]
    fn snr_examples() {
        let x = tone(10.0, 1.0, 1000, 2000.0);
        assert_eq!(snr(&x, &x).unwrap(), 0.0);
        let big: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        assert!((snr(&big, &x).unwrap() - 20.0).abs() < 1e-12);
        assert!(matches!(snr(&x, &[0.0; 5]), Err(Error::ZeroRestingPower)));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nd = Normal::new(0.0, 0.5).unwrap();
        let rest: Vec<f64> = (0..20000).map(|_| nd.sample(&mut rng)).collect();
        let act = tone(50.0, 5.0, 20000, 2000.0);
        assert!((snr(&act, &rest).unwrap() - 16.99).abs() < 0.2);
    }

    #[test]
    fn smr_examples() {
        let rate = 2000.0;
        let n = 2000;
        assert!(smr(&tone(10.0, 1.0, n, rate), rate).unwrap().abs() < 1e-9);
        let two: Vec<f64> = tone(10.0, 1.0, n, rate)
            .iter()
            .zip(tone(100.0, 1.0, n, rate))
            .map(|(a, b)| a + b)
            .collect();
        assert!((smr(&two, rate).unwrap() - 10.0 * 2f64.log10()).abs() < 0.05);
        let mix: Vec<f64> = tone(300.0, 1.0, n, rate)
            .iter()
            .zip(tone(10.0, 0.1, n, rate))
            .map(|(a, b)| a + b)
            .collect();
        assert!((smr(&mix, rate).unwrap() - 20.04).abs() < 0.05);
        assert!(matches!(smr(&tone(300.0, 1.0, n, rate), rate), Err(Error::ZeroMotionBandPower)));
        assert!(smr(&two, 200.0).is_err());
    }

    #[test]
    fn single_participant_single_channel_table() {
        let params = ScheduleParams::default();
        let labels = generate_label_schedule(&params).unwrap();
        let n = (params.total_s() * 2000.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut x: Vec<f64> = (0..n).map(|_| nd.sample(&mut rng)).collect();
        for (g, _, seg) in labels.gesture_segments() {
            let a = (seg.start_s * 2000.0) as usize;
            let b = (seg.end_s * 2000.0) as usize;
            for v in &mut x[a..b] {
                *v *= 1.0 + g.index() as f64;
            }
        }
        let ch = Channel::new(Placement::W1, ChannelKind::Emg, 2000.0, x);
        let rec = Recording::new("P01", Posture::Deg90, vec![ch.clone()], (0.0, 15.0)).unwrap();
        let opts = QualityOptions::default();
        let report = gesture_quality_table(&[(rec, labels.clone())], &opts).unwrap();
        let direct = channel_quality(&ch, &labels, &opts, &mut SpectrumWorkspace::new()).unwrap();
        assert_eq!(report.rows.len(), 17);
        for g in 0..17 {
            assert_eq!(report.rows[g].snr_emg.mean, direct.snr[g]);
            assert_eq!(report.rows[g].snr_emg.std, 0.0);
            assert!(report.rows[g].p_snr.is_none());
        }
        assert!(report.rows[16].snr_emg.mean > report.rows[0].snr_emg.mean);
    }

    #[test]
    fn channels_then_participants_differs_from_pooling() {
        // participant A has one EMG channel, B has three with different values
        let mk = |v: f64, p: Placement| ChannelQuality {
            placement: p,
            modality: Modality::Emg,
            snr: vec![v; N_GESTURES],
            smr: vec![Some(v); N_GESTURES],
        };
        let opts = QualityOptions::default();
        let a = participant_quality("A", &[mk(10.0, Placement::W1)], &opts);
        let b = participant_quality(
            "B",
            &[mk(0.0, Placement::W1), mk(0.0, Placement::W2), mk(3.0, Placement::W3)],
            &opts,
        );
        let r = aggregate_quality(&[a, b], &opts);
        assert!((r.rows[0].snr_emg.mean - 5.5).abs() < 1e-12);
        let pooled = (10.0 + 0.0 + 0.0 + 3.0) / 4.0;
        assert!((r.rows[0].snr_emg.mean - pooled).abs() > 1.0);
    }
}
