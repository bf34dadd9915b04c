use serde::{Deserialize, Serialize};

use super::{GestureId, Recording, N_GESTURES};
use crate::dsp;
use crate::error::{Error, Result};

/// Timing of the cued recording protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub gesture_s: f64,
    pub rest_s: f64,
    pub reps: usize,
    pub n_gestures: usize,
    pub pre_gesture_rest_s: f64,
    pub calibration_s: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            gesture_s: 2.0,
            rest_s: 2.0,
            reps: 4,
            n_gestures: N_GESTURES,
            pre_gesture_rest_s: 5.0,
            calibration_s: 15.0,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gesture_s > 0.0
            && self.rest_s >= 0.0
            && self.pre_gesture_rest_s >= 0.0
            && self.calibration_s >= 0.0
            && self.reps > 0
            && self.n_gestures > 0
            && self.n_gestures <= N_GESTURES;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidManifest(format!("invalid schedule parameters {self:?}")))
        }
    }

    /// Length of the fully cued span in seconds.
    pub fn total_s(&self) -> f64 {
        self.calibration_s
            + self.n_gestures as f64
                * (self.pre_gesture_rest_s + self.reps as f64 * (self.gesture_s + self.rest_s))
    }
}

/// Number of samples produced by the gesture/rest blocks of a session:
/// `(gesture + rest) * reps * gestures * channels * rate`.
pub fn expected_sample_count(
    gesture_s: f64,
    rest_s: f64,
    reps: u64,
    n_gestures: u64,
    n_channels: u64,
    rate_hz: f64,
) -> u64 {
    let per_channel_s = (gesture_s + rest_s) * reps as f64 * n_gestures as f64;
    (per_channel_s * rate_hz).round() as u64 * n_channels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Label {
    Calibration,
    Rest,
    Gesture { gesture: GestureId, repetition: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: Label,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Sorted, non-overlapping annotation of a session.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelTrack {
    pub segments: Vec<Segment>,
}

impl LabelTrack {
    pub fn gesture_segments(&self) -> impl Iterator<Item = (GestureId, u8, &Segment)> {
        self.segments.iter().filter_map(|s| match s.label {
            Label::Gesture {
                gesture,
                repetition,
            } => Some((gesture, repetition, s)),
            _ => None,
        })
    }

    /// Rest segments that immediately follow a gesture repetition, paired
    /// with that repetition.
    pub fn post_gesture_rests(&self) -> impl Iterator<Item = (GestureId, u8, &Segment)> {
        self.segments.windows(2).filter_map(|w| match (w[0].label, w[1].label) {
            (
                Label::Gesture {
                    gesture,
                    repetition,
                },
                Label::Rest,
            ) => Some((gesture, repetition, &w[1])),
            _ => None,
        })
    }

    pub fn calibration(&self) -> Option<&Segment> {
        self.segments
            .iter()
            .find(|s| s.label == Label::Calibration)
    }

    pub fn span_s(&self) -> f64 {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => b.end_s - a.start_s,
            _ => 0.0,
        }
    }

    pub fn is_sorted_disjoint(&self) -> bool {
        self.segments
            .windows(2)
            .all(|w| w[0].end_s <= w[1].start_s + 1e-9)
            && self.segments.iter().all(|s| s.end_s >= s.start_s)
    }

    /// Every segment moved by `shift_s` seconds.
    pub fn shifted(&self, shift_s: f64) -> LabelTrack {
        LabelTrack {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    start_s: s.start_s + shift_s,
                    end_s: s.end_s + shift_s,
                    label: s.label,
                })
                .collect(),
        }
    }
}

/// Lays out the cued protocol: calibration, then for each gesture a
/// pre-gesture rest followed by `reps` x (gesture, rest).
pub fn generate_label_schedule(params: &ScheduleParams) -> Result<LabelTrack> {
    params.validate()?;
    let mut segments = Vec::with_capacity(1 + params.n_gestures * (1 + 2 * params.reps));
    let mut t = 0.0;
    let push = |start: f64, len: f64, label: Label, segments: &mut Vec<Segment>| {
        if len > 0.0 {
            segments.push(Segment {
                start_s: start,
                end_s: start + len,
                label,
            });
        }
        start + len
    };
    t = push(t, params.calibration_s, Label::Calibration, &mut segments);
    for gesture in GestureId::all().take(params.n_gestures) {
        t = push(t, params.pre_gesture_rest_s, Label::Rest, &mut segments);
        for rep in 0..params.reps {
            t = push(
                t,
                params.gesture_s,
                Label::Gesture {
                    gesture,
                    repetition: rep as u8,
                },
                &mut segments,
            );
            t = push(t, params.rest_s, Label::Rest, &mut segments);
        }
    }
    Ok(LabelTrack { segments })
}

/// Envelope smoothing length used for alignment.
const ENVELOPE_WINDOW_S: f64 = 0.05;

/// Lag in samples (at the EMG rate) that best aligns the schedule's
/// gesture-on indicator with the mean rectified EMG envelope. Positive lag
/// means the activity happens later than cued.
pub fn estimate_label_shift(
    recording: &Recording,
    schedule: &LabelTrack,
    max_shift_s: f64,
) -> Result<(i64, f64)> {
    let emg: Vec<_> = recording.emg_channels().collect();
    let first = emg.first().ok_or(Error::NoEmgChannel)?;
    let rate = first.rate_hz;
    if max_shift_s <= 0.0 {
        return Ok((0, rate));
    }
    let n = emg.iter().map(|c| c.samples.len()).min().unwrap_or(0);
    if n == 0 {
        return Ok((0, rate));
    }

    let mut envelope = vec![0.0; n];
    let win = ((ENVELOPE_WINDOW_S * rate).round() as usize).clamp(1, n);
    for ch in &emg {
        let x = &ch.samples[..n];
        let mean = x.iter().sum::<f64>() / n as f64;
        let rectified: Vec<f64> = x.iter().map(|v| (v - mean).abs()).collect();
        let smoothed = dsp::moving_average(&rectified, win);
        for (e, s) in envelope.iter_mut().zip(smoothed) {
            *e += s;
        }
    }
    let mean_env = envelope.iter().sum::<f64>() / n as f64;
    // prefix[i] = sum of centered envelope over [0, i)
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for e in &envelope {
        acc += e - mean_env;
        prefix.push(acc);
    }
    let span_sum = |a: i64, b: i64| -> f64 {
        let a = a.clamp(0, n as i64) as usize;
        let b = b.clamp(0, n as i64) as usize;
        if b > a {
            prefix[b] - prefix[a]
        } else {
            0.0
        }
    };
    let onsets: Vec<(i64, i64)> = schedule
        .gesture_segments()
        .map(|(_, _, s)| {
            (
                (s.start_s * rate).round() as i64,
                (s.end_s * rate).round() as i64,
            )
        })
        .collect();

    let max_lag = (max_shift_s * rate).round() as i64;
    let mut best = (f64::NEG_INFINITY, 0i64);
    for lag in -max_lag..=max_lag {
        let score: f64 = onsets.iter().map(|&(a, b)| span_sum(a + lag, b + lag)).sum();
        let better = score > best.0
            || (score == best.0 && lag.abs() < best.1.abs());
        if better {
            best = (score, lag);
        }
    }
    Ok((best.1, rate))
}

/// Shifts the schedule uniformly by the lag that maximizes the
/// envelope/indicator cross-correlation within `±max_shift_s`.
pub fn align_labels(
    recording: &Recording,
    schedule: &LabelTrack,
    max_shift_s: f64,
) -> Result<LabelTrack> {
    let (lag, rate) = estimate_label_shift(recording, schedule, max_shift_s)?;
    if lag == 0 {
        return Ok(schedule.clone());
    }
    Ok(schedule.shifted(lag as f64 / rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_sample_count() {
        assert_eq!(expected_sample_count(2.0, 2.0, 4, 17, 20, 2000.0), 10_880_000);
        assert_eq!(expected_sample_count(1.0, 0.0, 1, 1, 1, 1.0), 1);
        assert_eq!(expected_sample_count(2.0, 2.0, 4, 17, 80, 2000.0), 43_520_000);
    }

    #[test]
    fn default_schedule_layout() {
        let p = ScheduleParams::default();
        let track = generate_label_schedule(&p).unwrap();
        let gestures: Vec<_> = track.gesture_segments().collect();
        assert_eq!(gestures.len(), 68);
        assert!(gestures
            .iter()
            .all(|(_, _, s)| (s.duration_s() - 2.0).abs() < 1e-12));
        assert!((p.total_s() - 372.0).abs() < 1e-12);
        assert!((track.span_s() - 372.0).abs() < 1e-9);
        assert!(track.is_sorted_disjoint());
        let total: f64 = track.segments.iter().map(Segment::duration_s).sum();
        assert!((total - 372.0).abs() < 1e-9);
        assert_eq!(track.segments[0].label, Label::Calibration);
        assert_eq!(track.segments[0].duration_s(), 15.0);
        for g in GestureId::all() {
            let reps: Vec<u8> = gestures
                .iter()
                .filter(|(id, _, _)| *id == g)
                .map(|(_, r, _)| *r)
                .collect();
            assert_eq!(reps, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn single_gesture_schedule() {
        let p = ScheduleParams {
            reps: 1,
            n_gestures: 1,
            ..Default::default()
        };
        let track = generate_label_schedule(&p).unwrap();
        assert_eq!(track.gesture_segments().count(), 1);
    }

    #[test]
    fn invalid_schedule_rejected() {
        let p = ScheduleParams {
            reps: 0,
            ..Default::default()
        };
        assert!(generate_label_schedule(&p).is_err());
    }

    #[test]
    fn post_gesture_rests_pair_with_repetitions() {
        let track = generate_label_schedule(&ScheduleParams::default()).unwrap();
        assert_eq!(track.post_gesture_rests().count(), 68);
    }
}
