//! Batch wiring of the stages: session discovery, labels, per-channel
//! preprocessing with features and quality, cross-validated evaluation and
//! report emission. Stage outputs are cached under content hashes.

mod cache;
mod commands;
mod report;
mod run;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{CvPlan, Grid, ModelFamily};
use crate::dsp::{self, FilterSpec, SmoothSpec};
use crate::error::{Error, Result};
use crate::features::{channel_block, FeatureMatrix, SpectrumWorkspace, ThresholdSpec, WindowSpec};
use crate::model::{
    estimate_label_shift, generate_label_schedule, load_session_with_manifest, LabelTrack,
    ModalityGroup, PlacementPreset, Posture, Recording,
};
use crate::quality::{channel_quality, noise_report, participant_quality, NoiseReport, ParticipantQuality, QualityOptions};
use crate::stats::StatsOptions;
use crate::synth::{self, SynthSpec};

pub use commands::{
    cmd_label, cmd_pipeline, cmd_preprocess, cmd_quality, cmd_report, cmd_stats, cmd_synth, export_features_csv, LabelFile,
};
pub use cache::{hash_bytes, hash_dir, hash_json, StageCache, StageEvent, StageLog};
pub use report::{
    accuracy_table, quality_reports, write_reports, write_stats, AccuracyCell, AccuracyRow, AccuracyTable,
    HypothesisRow, ReportSet,
};
pub use run::{
    discover_sessions, load_results, run_evaluation, run_features, session_names, EvalRecord, QualityRecord,
    RunManifest, RunOutcome, SessionFailure, SessionOutput, SessionSource, SessionSummary,
};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignSpec {
    pub enabled: bool,
    pub max_shift_s: f64,
}

impl Default for AlignSpec {
    fn default() -> Self {
        AlignSpec {
            enabled: true,
            max_shift_s: 0.5,
        }
    }
}

/// Settings that determine the per-session feature and quality stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessSpec {
    pub filter: FilterSpec,
    pub smooth: SmoothSpec,
    pub window: WindowSpec,
    pub thresholds: ThresholdSpec,
    pub align: AlignSpec,
    pub quality: QualityOptions,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        ProcessSpec {
            filter: FilterSpec::default(),
            smooth: SmoothSpec::default(),
            window: WindowSpec::default(),
            thresholds: ThresholdSpec::default(),
            align: AlignSpec::default(),
            quality: QualityOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Session directories, or directories holding session directories.
    pub sessions: Vec<PathBuf>,
    /// Generate the cohort in memory instead of reading `sessions`.
    pub synth: Option<SynthSpec>,
    pub out_dir: PathBuf,
    pub process: ProcessSpec,
    pub presets: Vec<PlacementPreset>,
    pub modalities: Vec<ModalityGroup>,
    pub families: Vec<ModelFamily>,
    pub grid: Grid,
    pub cv: CvPlan,
    pub stats: StatsOptions,
    pub seed: u64,
    /// Shuffle gesture labels within each repetition before evaluation.
    pub permute_labels: bool,
    pub cache: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            sessions: Vec::new(),
            synth: None,
            out_dir: PathBuf::from("out"),
            process: ProcessSpec::default(),
            presets: PlacementPreset::ALL.to_vec(),
            modalities: ModalityGroup::ALL.to_vec(),
            families: vec![ModelFamily::Lda],
            grid: Grid::default(),
            cv: CvPlan::default(),
            stats: StatsOptions::default(),
            seed: 0,
            permute_labels: false,
            cache: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.presets.is_empty() || self.modalities.is_empty() || self.families.is_empty() {
            return Err(Error::Config("presets, modalities and families must be non-empty".into()));
        }
        self.process.window.validate()?;
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        Ok(())
    }

    /// The configuration as actually run: the synthetic seed follows `seed`.
    /// Report directory; label-permuted runs get their own so they never
    /// overwrite the real reports.
    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir
            .join(if self.permute_labels { "reports_permuted" } else { "reports" })
    }

    pub fn resolved(&self) -> RunConfig {
        RunConfig {
            synth: self.synth_spec(),
            ..self.clone()
        }
    }

    /// The synthetic spec with the run seed applied.
    pub fn synth_spec(&self) -> Option<SynthSpec> {
        self.synth.clone().map(|s| SynthSpec { seed: self.seed, ..s })
    }
}

/// Everything downstream stages need from one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFeatures {
    pub participant_id: String,
    pub posture: Posture,
    pub label_shift_s: f64,
    pub matrix: FeatureMatrix,
    pub quality: ParticipantQuality,
    pub noise: Option<NoiseReport>,
}

/// Cued labels for a session, shifted to the detected onset lag when enabled.
pub fn session_labels(rec: &Recording, cued: &LabelTrack, align: &AlignSpec) -> Result<(LabelTrack, f64)> {
    if !align.enabled {
        return Ok((cued.clone(), 0.0));
    }
    let (lag, rate) = estimate_label_shift(rec, cued, align.max_shift_s)?;
    if lag == 0 {
        return Ok((cued.clone(), 0.0));
    }
    let shift = lag as f64 / rate;
    Ok((cued.shifted(shift), shift))
}

/// Preprocesses one channel at a time into features and quality metrics so
/// the full-rate session never sits in memory at once.
pub fn process_session(rec: &Recording, cued: &LabelTrack, spec: &ProcessSpec) -> Result<SessionFeatures> {
    let (labels, shift) = session_labels(rec, cued, &spec.align)?;
    let noise = if rec.calibration_span.1 > rec.calibration_span.0 {
        Some(noise_report(rec)?)
    } else {
        None
    };
    let per_channel = rec
        .channels
        .par_iter()
        .map_init(SpectrumWorkspace::new, |ws, ch| {
            let pre = dsp::preprocess_channel(ch, &spec.filter, &spec.smooth)?;
            let block = channel_block(&pre, &labels, &spec.window, &spec.thresholds, ws)?;
            let q = channel_quality(&pre, &labels, &spec.quality, ws)?;
            Ok((block, q))
        })
        .collect::<Result<Vec<_>>>()?;
    let (blocks, quality): (Vec<_>, Vec<_>) = per_channel.into_iter().unzip();
    Ok(SessionFeatures {
        participant_id: rec.participant_id.clone(),
        posture: rec.posture,
        label_shift_s: shift,
        matrix: FeatureMatrix::from_blocks(blocks)?,
        quality: participant_quality(&rec.participant_id, &quality, &spec.quality),
        noise,
    })
}

/// Loads a session directory (or generates a synthetic one) with its cued labels.
pub fn load_source(source: &SessionSource, synth_spec: Option<&SynthSpec>) -> Result<(Recording, LabelTrack)> {
    match source {
        SessionSource::Dir(dir) => {
            let (manifest, rec) = load_session_with_manifest(&dir.join("manifest.json"))?;
            Ok((rec, generate_label_schedule(&manifest.schedule)?))
        }
        SessionSource::Synth { participant, posture } => {
            let spec = synth_spec.ok_or_else(|| Error::Config("synthetic session without a synth spec".into()))?;
            let (rec, _truth) = synth::gen_session(spec, *participant, *posture)?;
            Ok((rec, generate_label_schedule(&spec.schedule_for(*posture))?))
        }
    }
}
