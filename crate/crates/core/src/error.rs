use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // session I/O
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("rate mismatch for {what}: declared {declared} Hz, observed {observed} Hz")]
    RateMismatch {
        what: String,
        declared: f64,
        observed: f64,
    },
    #[error("duplicate channel {0}")]
    DuplicateChannel(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("no EMG channel in recording")]
    NoEmgChannel,

    // dsp
    #[error("signal too short: need more than {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("nyquist violation: {0}")]
    NyquistViolation(String),
    #[error("smoothing window {window} exceeds signal length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("upsampling ratio {to_hz}/{from_hz} is not an integer")]
    NonIntegerRatio { from_hz: f64, to_hz: f64 },
    #[error("invalid filter specification: {0}")]
    InvalidSpec(String),

    // features
    #[error("labels not aligned with channel: {0}")]
    UnalignedLabels(String),
    #[error("channel selection is empty")]
    EmptySelection,

    // quality
    #[error("calibration span is empty or too short")]
    EmptyCalibration,
    #[error("expected 3 axis sigmas, got {0}")]
    WrongAxisCount(usize),
    #[error("resting RMS is zero")]
    ZeroRestingPower,
    #[error("motion band (0-20 Hz) power is zero")]
    ZeroMotionBandPower,

    // classify
    #[error("covariance matrix is singular at shrinkage {shrinkage}")]
    SingularCovariance { shrinkage: f64 },
    #[error("class {class} has {count} rows, need at least {needed}")]
    ClassTooSmall {
        class: usize,
        count: usize,
        needed: usize,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("SMO did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("missing repetition {repetition} for gesture {gesture}")]
    MissingRepetition { gesture: usize, repetition: usize },
    #[error("centroids of classes {0} and {1} coincide")]
    CoincidentCentroids(usize, usize),

    // stats
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero variance in both groups")]
    ZeroVariance,
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("pooled standard deviation is zero")]
    ZeroPooledStd,
    #[error("participant mismatch: {0}")]
    ParticipantMismatch(String),

    // reporting
    #[error("missing results: {0}")]
    MissingResults(String),
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
