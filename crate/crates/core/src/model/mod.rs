//! Domain types shared by every stage of the pipeline: sensor channels,
//! placements, gestures, recordings and the per-sample label track.

mod io;
mod labels;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_session, load_session_with_manifest, save_session, SensorFiles, SessionManifest};
pub use labels::{
    align_labels, estimate_label_shift, expected_sample_count, generate_label_schedule, Label,
    LabelTrack, ScheduleParams, Segment,
};

/// Native EMG sampling rate.
pub const EMG_RATE_HZ: f64 = 2000.0;
/// Native IMU sampling rate (all nine axes).
pub const IMU_RATE_HZ: f64 = 200.0;
/// Sensor units in the full montage.
pub const N_UNITS: usize = 8;
/// Gesture classes; rest and calibration are labels only.
pub const N_GESTURES: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    #[serde(rename = "EMG")]
    Emg,
    #[serde(rename = "ACCEL_X")]
    AccelX,
    #[serde(rename = "ACCEL_Y")]
    AccelY,
    #[serde(rename = "ACCEL_Z")]
    AccelZ,
    #[serde(rename = "GYRO_X")]
    GyroX,
    #[serde(rename = "GYRO_Y")]
    GyroY,
    #[serde(rename = "GYRO_Z")]
    GyroZ,
    #[serde(rename = "MAG_X")]
    MagX,
    #[serde(rename = "MAG_Y")]
    MagY,
    #[serde(rename = "MAG_Z")]
    MagZ,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 10] = [
        ChannelKind::Emg,
        ChannelKind::AccelX,
        ChannelKind::AccelY,
        ChannelKind::AccelZ,
        ChannelKind::GyroX,
        ChannelKind::GyroY,
        ChannelKind::GyroZ,
        ChannelKind::MagX,
        ChannelKind::MagY,
        ChannelKind::MagZ,
    ];

    /// The nine inertial axes in CSV column order.
    pub const IMU_AXES: [ChannelKind; 9] = [
        ChannelKind::AccelX,
        ChannelKind::AccelY,
        ChannelKind::AccelZ,
        ChannelKind::GyroX,
        ChannelKind::GyroY,
        ChannelKind::GyroZ,
        ChannelKind::MagX,
        ChannelKind::MagY,
        ChannelKind::MagZ,
    ];

    pub fn modality(self) -> Modality {
        match self {
            ChannelKind::Emg => Modality::Emg,
            ChannelKind::AccelX | ChannelKind::AccelY | ChannelKind::AccelZ => Modality::Accel,
            ChannelKind::GyroX | ChannelKind::GyroY | ChannelKind::GyroZ => Modality::Gyro,
            ChannelKind::MagX | ChannelKind::MagY | ChannelKind::MagZ => Modality::Mag,
        }
    }

    pub fn is_emg(self) -> bool {
        self == ChannelKind::Emg
    }

    pub fn native_rate_hz(self) -> f64 {
        if self.is_emg() {
            EMG_RATE_HZ
        } else {
            IMU_RATE_HZ
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Emg => "EMG",
            ChannelKind::AccelX => "ACCEL_X",
            ChannelKind::AccelY => "ACCEL_Y",
            ChannelKind::AccelZ => "ACCEL_Z",
            ChannelKind::GyroX => "GYRO_X",
            ChannelKind::GyroY => "GYRO_Y",
            ChannelKind::GyroZ => "GYRO_Z",
            ChannelKind::MagX => "MAG_X",
            ChannelKind::MagY => "MAG_Y",
            ChannelKind::MagZ => "MAG_Z",
        }
    }

    /// Column header used in session CSV files.
    pub fn csv_column(self) -> &'static str {
        match self {
            ChannelKind::Emg => "emg_uV",
            ChannelKind::AccelX => "ax",
            ChannelKind::AccelY => "ay",
            ChannelKind::AccelZ => "az",
            ChannelKind::GyroX => "gx",
            ChannelKind::GyroY => "gy",
            ChannelKind::GyroZ => "gz",
            ChannelKind::MagX => "mx",
            ChannelKind::MagY => "my",
            ChannelKind::MagZ => "mz",
        }
    }

    pub fn unit(self) -> &'static str {
        match self.modality() {
            Modality::Emg => "uV",
            Modality::Accel => "g",
            Modality::Gyro => "deg/s",
            Modality::Mag => "uT",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Emg,
    Accel,
    Gyro,
    Mag,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Emg, Modality::Accel, Modality::Gyro, Modality::Mag];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Emg => "emg",
            Modality::Accel => "accel",
            Modality::Gyro => "gyro",
            Modality::Mag => "mag",
        }
    }

    pub fn kinds(self) -> &'static [ChannelKind] {
        match self {
            Modality::Emg => &[ChannelKind::Emg],
            Modality::Accel => &ChannelKind::IMU_AXES[0..3],
            Modality::Gyro => &ChannelKind::IMU_AXES[3..6],
            Modality::Mag => &ChannelKind::IMU_AXES[6..9],
        }
    }
}

/// A modality, or all three inertial modalities pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityGroup {
    Emg,
    Accel,
    Gyro,
    Mag,
    ImuCombined,
}

impl ModalityGroup {
    pub const ALL: [ModalityGroup; 5] = [
        ModalityGroup::Emg,
        ModalityGroup::Accel,
        ModalityGroup::Gyro,
        ModalityGroup::Mag,
        ModalityGroup::ImuCombined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModalityGroup::Emg => "emg",
            ModalityGroup::Accel => "accel",
            ModalityGroup::Gyro => "gyro",
            ModalityGroup::Mag => "mag",
            ModalityGroup::ImuCombined => "imu_combined",
        }
    }

    pub fn modalities(self) -> &'static [Modality] {
        match self {
            ModalityGroup::Emg => &[Modality::Emg],
            ModalityGroup::Accel => &[Modality::Accel],
            ModalityGroup::Gyro => &[Modality::Gyro],
            ModalityGroup::Mag => &[Modality::Mag],
            ModalityGroup::ImuCombined => &[Modality::Accel, Modality::Gyro, Modality::Mag],
        }
    }
}

impl fmt::Display for ModalityGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModalityGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModalityGroup::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown modality {s:?}")))
    }
}

/// Named sensor-placement subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlacementPreset {
    #[serde(rename = "W1W2")]
    W1W2,
    #[serde(rename = "W3W4")]
    W3W4,
    #[serde(rename = "F1F2")]
    F1F2,
    #[serde(rename = "F3F4")]
    F3F4,
    #[serde(rename = "W1-4")]
    Wrist,
    #[serde(rename = "F1-4")]
    Forearm,
    #[serde(rename = "W1-4F1-4")]
    All,
}

impl PlacementPreset {
    pub const ALL: [PlacementPreset; 7] = [
        PlacementPreset::W1W2,
        PlacementPreset::W3W4,
        PlacementPreset::F1F2,
        PlacementPreset::F3F4,
        PlacementPreset::Wrist,
        PlacementPreset::Forearm,
        PlacementPreset::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlacementPreset::W1W2 => "W1W2",
            PlacementPreset::W3W4 => "W3W4",
            PlacementPreset::F1F2 => "F1F2",
            PlacementPreset::F3F4 => "F3F4",
            PlacementPreset::Wrist => "W1-4",
            PlacementPreset::Forearm => "F1-4",
            PlacementPreset::All => "W1-4F1-4",
        }
    }

    pub fn placements(self) -> Vec<Placement> {
        use Placement::*;
        match self {
            PlacementPreset::W1W2 => vec![W1, W2],
            PlacementPreset::W3W4 => vec![W3, W4],
            PlacementPreset::F1F2 => vec![F1, F2],
            PlacementPreset::F3F4 => vec![F3, F4],
            PlacementPreset::Wrist => vec![W1, W2, W3, W4],
            PlacementPreset::Forearm => vec![F1, F2, F3, F4],
            PlacementPreset::All => Placement::ALL.to_vec(),
        }
    }
}

impl fmt::Display for PlacementPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlacementPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlacementPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown placement preset {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placement {
    W1,
    W2,
    W3,
    W4,
    F1,
    F2,
    F3,
    F4,
}

impl Placement {
    pub const ALL: [Placement; N_UNITS] = [
        Placement::W1,
        Placement::W2,
        Placement::W3,
        Placement::W4,
        Placement::F1,
        Placement::F2,
        Placement::F3,
        Placement::F4,
    ];

    pub fn is_wrist(self) -> bool {
        matches!(self, Placement::W1 | Placement::W2 | Placement::W3 | Placement::W4)
    }

    pub fn is_forearm(self) -> bool {
        !self.is_wrist()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Placement::W1 => "W1",
            Placement::W2 => "W2",
            Placement::W3 => "W3",
            Placement::W4 => "W4",
            Placement::F1 => "F1",
            Placement::F2 => "F2",
            Placement::F3 => "F3",
            Placement::F4 => "F4",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Placement::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidManifest(format!("unknown placement {s:?}")))
    }
}

/// Gesture names in class-index order (confusion-matrix ordering).
pub const GESTURE_NAMES: [&str; N_GESTURES] = [
    "TE", "IE", "ME", "RE", "PE", "TU", "PO/RA", "PC/P", "OK", "HN/H", "HL", "PG", "HO", "WE",
    "WF", "UD", "RD",
];

/// One of the 17 static gesture classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GestureId(u8);

impl GestureId {
    pub fn new(id: usize) -> Option<Self> {
        (id < N_GESTURES).then_some(GestureId(id as u8))
    }

    pub fn all() -> impl Iterator<Item = GestureId> {
        (0..N_GESTURES as u8).map(GestureId)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        GESTURE_NAMES[self.index()]
    }
}

impl TryFrom<u8> for GestureId {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        GestureId::new(v as usize).ok_or_else(|| format!("gesture id {v} out of range"))
    }
}

impl From<GestureId> for u8 {
    fn from(g: GestureId) -> u8 {
        g.0
    }
}

impl fmt::Display for GestureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Posture {
    /// Seated, elbow bent at 90 degrees.
    #[serde(rename = "90")]
    Deg90,
    /// Standing, arm alongside the body.
    #[serde(rename = "180")]
    Deg180,
}

impl Posture {
    pub const ALL: [Posture; 2] = [Posture::Deg90, Posture::Deg180];

    pub fn name(self) -> &'static str {
        match self {
            Posture::Deg90 => "90",
            Posture::Deg180 => "180",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Posture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Posture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "90" => Ok(Posture::Deg90),
            "180" => Ok(Posture::Deg180),
            other => Err(Error::InvalidManifest(format!("unknown posture {other:?}"))),
        }
    }
}

/// A single sampled signal from one sensor unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub placement: Placement,
    pub kind: ChannelKind,
    pub rate_hz: f64,
    pub samples: Vec<f64>,
}

impl Channel {
    pub fn new(placement: Placement, kind: ChannelKind, rate_hz: f64, samples: Vec<f64>) -> Self {
        Channel {
            placement,
            kind,
            rate_hz,
            samples,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    pub fn id(&self) -> String {
        format!("{}:{}", self.placement, self.kind)
    }
}

/// One participant, one posture: every channel of the montage over a shared
/// wall-clock span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub participant_id: String,
    pub posture: Posture,
    pub channels: Vec<Channel>,
    /// `(start_s, end_s)` of the stationary calibration period; empty when
    /// the session has none.
    pub calibration_span: (f64, f64),
}

impl Recording {
    /// Builds a recording, sorting channels by `(placement, kind)` and
    /// checking the channel invariants.
    pub fn new(
        participant_id: impl Into<String>,
        posture: Posture,
        mut channels: Vec<Channel>,
        calibration_span: (f64, f64),
    ) -> Result<Self> {
        channels.sort_by_key(|c| (c.placement, c.kind));
        for pair in channels.windows(2) {
            if pair[0].placement == pair[1].placement && pair[0].kind == pair[1].kind {
                return Err(Error::DuplicateChannel(pair[0].id()));
            }
        }
        for c in &channels {
            if !(c.rate_hz > 0.0) {
                return Err(Error::InvalidRecording(format!("{} has rate {}", c.id(), c.rate_hz)));
            }
        }
        if let Some(first) = channels.first() {
            let d0 = first.duration_s();
            for c in &channels[1..] {
                let slack = 1.0 / c.rate_hz + 1.0 / first.rate_hz + 1e-9;
                if (c.duration_s() - d0).abs() > slack {
                    return Err(Error::InvalidRecording(format!(
                        "{} spans {:.4} s but {} spans {:.4} s",
                        c.id(),
                        c.duration_s(),
                        first.id(),
                        d0
                    )));
                }
            }
        }
        Ok(Recording {
            participant_id: participant_id.into(),
            posture,
            channels,
            calibration_span,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.channels
            .iter()
            .map(Channel::duration_s)
            .fold(0.0, f64::max)
    }

    pub fn channel(&self, placement: Placement, kind: ChannelKind) -> Option<&Channel> {
        self.channels
            .iter()
            .find(|c| c.placement == placement && c.kind == kind)
    }

    pub fn emg_channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.iter().filter(|c| c.kind.is_emg())
    }

    pub fn placements(&self) -> Vec<Placement> {
        let mut v: Vec<Placement> = self.channels.iter().map(|c| c.placement).collect();
        v.dedup();
        v
    }
}
