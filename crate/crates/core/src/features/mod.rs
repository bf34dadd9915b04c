//! Sliding-window segmentation and the per-channel feature set.
//!
//! Every channel yields 22 named features per window; HIST expands to 10
//! bins and AR to 4 coefficients, giving 34 values for EMG. The two
//! threshold features (MYOP, WAMP) are only meaningful for EMG and are not
//! computed for inertial channels, which therefore yield 32 values.

mod freq;
mod matrix;
mod time;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, ChannelKind, GestureId, LabelTrack, Placement};

pub use freq::{freq_features, periodogram, SpectrumWorkspace};
pub(crate) use matrix::channel_block;
pub use matrix::{extract_matrix, ChannelSelection, ColumnId, FeatureMatrix, RowMeta, CACHE_VERSION};
pub use time::{autoregressive, histogram, time_features};

pub const HIST_BINS: usize = 10;
pub const AR_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub length_s: f64,
    pub step_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            length_s: 0.300,
            step_s: 0.150,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.step_s > 0.0 && self.step_s <= self.length_s {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "window step {} s must be in (0, {}]",
                self.step_s, self.length_s
            )))
        }
    }

    pub fn length_samples(&self, rate_hz: f64) -> usize {
        (self.length_s * rate_hz).round() as usize
    }

    pub fn step_samples(&self, rate_hz: f64) -> usize {
        ((self.step_s * rate_hz).round() as usize).max(1)
    }
}

/// Thresholds and band edges used by the feature definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSpec {
    pub zc_eps: f64,
    pub ssc_eps: f64,
    pub myop_thresh: f64,
    pub wamp_thresh: f64,
    pub hist_range_sigmas: f64,
    pub fr_split_hz: f64,
    pub psr_halfwidth_hz: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec {
            zc_eps: 0.0,
            ssc_eps: 0.0,
            myop_thresh: 20.0,
            wamp_thresh: 20.0,
            hist_range_sigmas: 3.0,
            fr_split_hz: 250.0,
            psr_halfwidth_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Mav,
    Var,
    Rms,
    Wl,
    Damv,
    Dasdv,
    Zc,
    Myop,
    Wamp,
    Ssc,
    Hist(u8),
    Ar(u8),
    Mnf,
    Mdf,
    Pkf,
    Ttp,
    Sm1,
    Sm2,
    Sm3,
    Fr,
    Psr,
    Vcf,
}

pub const TIME_SCALARS: [Feature; 10] = [
    Feature::Mav,
    Feature::Var,
    Feature::Rms,
    Feature::Wl,
    Feature::Damv,
    Feature::Dasdv,
    Feature::Zc,
    Feature::Myop,
    Feature::Wamp,
    Feature::Ssc,
];

pub const FREQ_FEATURES: [Feature; 10] = [
    Feature::Mnf,
    Feature::Mdf,
    Feature::Pkf,
    Feature::Ttp,
    Feature::Sm1,
    Feature::Sm2,
    Feature::Sm3,
    Feature::Fr,
    Feature::Psr,
    Feature::Vcf,
];

impl Feature {
    /// All 34 feature values in column order.
    pub fn all() -> Vec<Feature> {
        let mut v = TIME_SCALARS.to_vec();
        v.extend((0..HIST_BINS as u8).map(Feature::Hist));
        v.extend((1..=AR_ORDER as u8).map(Feature::Ar));
        v.extend(FREQ_FEATURES);
        v
    }

    /// Features computed for a channel of `kind`.
    pub fn for_kind(kind: ChannelKind) -> Vec<Feature> {
        Feature::all()
            .into_iter()
            .filter(|f| kind.is_emg() || !f.is_threshold_based())
            .collect()
    }

    pub fn is_threshold_based(self) -> bool {
        matches!(self, Feature::Myop | Feature::Wamp)
    }

    pub fn code(self) -> u8 {
        Feature::all().iter().position(|f| *f == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Feature> {
        Feature::all().get(code as usize).copied()
    }

    pub fn name(self) -> String {
        match self {
            Feature::Hist(i) => format!("HIST{i}"),
            Feature::Ar(i) => format!("AR{i}"),
            other => format!("{other:?}").to_uppercase(),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parallel name/value sequences for one window of one channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub names: Vec<Feature>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn push(&mut self, name: Feature, value: f64) {
        self.names.push(name);
        self.values.push(value);
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.names.extend(other.names);
        self.values.extend(other.values);
    }

    pub fn get(&self, name: Feature) -> Option<f64> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A labelled slice of one channel.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub placement: Placement,
    pub kind: ChannelKind,
    pub gesture: GestureId,
    pub repetition: u8,
    /// Position of the window inside its gesture segment.
    pub index: u32,
    pub start_s: f64,
    pub rate_hz: f64,
    pub samples: &'a [f64],
}

/// Tiles every gesture segment from its onset; windows that would cross the
/// segment end are dropped.
pub fn segment<'a>(channel: &'a Channel, labels: &LabelTrack, spec: &WindowSpec) -> Result<Vec<Window<'a>>> {
    spec.validate()?;
    let rate = channel.rate_hz;
    let len = spec.length_samples(rate);
    let step = spec.step_samples(rate);
    let n = channel.samples.len() as i64;
    let mut out = Vec::new();
    for (gesture, repetition, seg) in labels.gesture_segments() {
        let a = (seg.start_s * rate).round() as i64;
        let mut b = (seg.end_s * rate).round() as i64;
        if a < 0 || b > n + 1 {
            return Err(Error::UnalignedLabels(format!(
                "{} rep {} spans samples [{a}, {b}) but {} has {n}",
                gesture,
                repetition,
                channel.id()
            )));
        }
        b = b.min(n);
        let (a, b) = (a as usize, b as usize);
        let mut start = a;
        let mut index = 0u32;
        while len > 0 && start + len <= b {
            out.push(Window {
                placement: channel.placement,
                kind: channel.kind,
                gesture,
                repetition,
                index,
                start_s: start as f64 / rate,
                rate_hz: rate,
                samples: &channel.samples[start..start + len],
            });
            start += step;
            index += 1;
        }
    }
    Ok(out)
}

/// Full feature vector of one window, in [`Feature::for_kind`] order.
pub fn window_features(w: &Window<'_>, th: &ThresholdSpec, ws: &mut SpectrumWorkspace) -> Result<FeatureVector> {
    let mut fv = time_features(w, th)?;
    fv.extend(ws.features(w.samples, w.rate_hz, th)?);
    Ok(fv)
}
