use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{hash_bytes, hash_dir, hash_json, write_atomic, StageCache, StageEvent, StageLog};
use super::{load_source, process_session, RunConfig};
use crate::classify::{cv_evaluate, permute_labels, EvalResult, ModelFamily};
use crate::error::{Error, Result};
use crate::features::{ChannelSelection, FeatureMatrix};
use crate::model::{ModalityGroup, PlacementPreset, Posture};
use crate::quality::{NoiseReport, ParticipantQuality};
use crate::synth::{self, SynthSpec};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionSource {
    Dir(PathBuf),
    Synth { participant: usize, posture: Posture },
}

impl SessionSource {
    pub fn name(&self) -> String {
        match self {
            SessionSource::Dir(d) => d
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| d.display().to_string()),
            SessionSource::Synth { participant, posture } => synth::session_dir_name(*participant, *posture),
        }
    }

    pub fn input_hash(&self, spec: Option<&SynthSpec>) -> Result<String> {
        match self {
            SessionSource::Dir(d) => hash_dir(d),
            SessionSource::Synth { participant, posture } => Ok(hash_json(&(spec, participant, posture))),
        }
    }
}

/// Session directories under the configured roots, or the synthetic cohort.
pub fn discover_sessions(cfg: &RunConfig) -> Result<Vec<SessionSource>> {
    if let Some(spec) = cfg.synth_spec() {
        return Ok((0..spec.n_participants)
            .flat_map(|participant| Posture::ALL.map(|posture| SessionSource::Synth { participant, posture }))
            .collect());
    }
    let mut out = Vec::new();
    for root in &cfg.sessions {
        if root.join("manifest.json").is_file() {
            out.push(SessionSource::Dir(root.clone()));
            continue;
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();
        out.extend(dirs.into_iter().map(SessionSource::Dir));
    }
    Ok(out)
}

/// Quality metrics with gaps as `null` so they survive JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub snr_emg: Vec<Option<f64>>,
    pub snr_imu: Vec<Option<f64>>,
    pub smr_emg: Vec<Option<f64>>,
    pub smr_imu: Vec<Option<f64>>,
    pub smr_flagged: usize,
}

fn finite(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

fn unfinite(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
}

impl QualityRecord {
    pub fn from_quality(q: &ParticipantQuality) -> Self {
        QualityRecord {
            snr_emg: finite(&q.snr_emg),
            snr_imu: finite(&q.snr_imu),
            smr_emg: finite(&q.smr_emg),
            smr_imu: finite(&q.smr_imu),
            smr_flagged: q.smr_flagged,
        }
    }

    pub fn to_quality(&self, participant_id: &str) -> ParticipantQuality {
        ParticipantQuality {
            participant_id: participant_id.to_string(),
            snr_emg: unfinite(&self.snr_emg),
            snr_imu: unfinite(&self.snr_imu),
            smr_emg: unfinite(&self.smr_emg),
            smr_imu: unfinite(&self.smr_imu),
            smr_flagged: self.smr_flagged,
        }
    }
}

/// What the feature stage knows about one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session: String,
    pub participant_id: String,
    pub posture: Posture,
    pub input_hash: String,
    pub features_key: String,
    pub label_shift_s: f64,
    pub n_windows: usize,
    pub n_features: usize,
    pub quality: QualityRecord,
    pub noise: Option<NoiseReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub key: String,
    pub session: String,
    pub participant_id: String,
    pub posture: Posture,
    pub family: ModelFamily,
    pub preset: PlacementPreset,
    pub modality: ModalityGroup,
    pub permuted: bool,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub summary: SessionSummary,
    pub evals: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFailure {
    pub session: String,
    pub error: String,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RunConfig,
    /// Session name to input content hash.
    pub inputs: BTreeMap<String, String>,
    pub failures: Vec<SessionFailure>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub sessions: Vec<SessionOutput>,
    pub failures: Vec<SessionFailure>,
    pub inputs: BTreeMap<String, String>,
    pub log: StageLog,
}

impl RunOutcome {
    pub fn manifest(&self, cfg: &RunConfig) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.resolved(),
            inputs: self.inputs.clone(),
            failures: self.failures.clone(),
        }
    }
}

pub(crate) fn results_dir(cfg: &RunConfig, session: &str) -> PathBuf {
    cfg.out_dir.join("results").join(session)
}

fn eval_file(cfg: &RunConfig, family: ModelFamily, preset: PlacementPreset, modality: ModalityGroup) -> String {
    let suffix = if cfg.permute_labels { "_permuted" } else { "" };
    format!("{}_{}_{}{suffix}.json", family.name(), preset.name(), modality.name())
}

fn features_key(cfg: &RunConfig, input_hash: &str) -> String {
    hash_json(&("features", CACHE_SCHEMA, input_hash, &cfg.process))
}

const CACHE_SCHEMA: u32 = 1;

/// Seed for the label permutation of one session.
fn permutation_seed(cfg: &RunConfig, session: &str) -> u64 {
    let h = hash_bytes(&[&cfg.seed.to_le_bytes(), session.as_bytes()]);
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

fn eval_key(
    cfg: &RunConfig,
    features_key: &str,
    session: &str,
    family: ModelFamily,
    preset: PlacementPreset,
    modality: ModalityGroup,
) -> String {
    let perm = cfg.permute_labels.then(|| permutation_seed(cfg, session));
    hash_json(&("eval", features_key, family, preset, modality, &cfg.grid, &cfg.cv, perm))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

struct Features<'a> {
    cache: &'a StageCache,
    key: String,
    matrix: Option<FeatureMatrix>,
}

impl Features<'_> {
    fn matrix(&mut self) -> Result<&FeatureMatrix> {
        if self.matrix.is_none() {
            let path = self.cache.path("features", &self.key, "fmc");
            self.matrix = Some(FeatureMatrix::read_cache(&path)?);
        }
        Ok(self.matrix.as_ref().unwrap())
    }
}

fn session_work(
    cfg: &RunConfig,
    spec: Option<&SynthSpec>,
    source: &SessionSource,
    cache: &StageCache,
    log: &StageLog,
    evaluate: bool,
) -> Result<SessionOutput> {
    let name = source.name();
    let input_hash = source.input_hash(spec)?;
    let key = features_key(cfg, &input_hash);
    let cached = cache
        .hit("features", &key, "json")
        .zip(cache.hit("features", &key, "fmc"));
    let mut features = Features {
        cache,
        key: key.clone(),
        matrix: None,
    };
    let summary: SessionSummary = match cached {
        Some((json, _)) => {
            log.record(&name, "features", StageEvent::Skipped);
            let mut s: SessionSummary = read_json(&json)?;
            s.session = name.clone();
            s
        }
        None => {
            let (rec, cued) = load_source(source, spec)?;
            let sf = process_session(&rec, &cued, &cfg.process)?;
            drop(rec);
            let summary = SessionSummary {
                session: name.clone(),
                participant_id: sf.participant_id.clone(),
                posture: sf.posture,
                input_hash: input_hash.clone(),
                features_key: key.clone(),
                label_shift_s: sf.label_shift_s,
                n_windows: sf.matrix.n_rows(),
                n_features: sf.matrix.n_cols(),
                quality: QualityRecord::from_quality(&sf.quality),
                noise: sf.noise.clone(),
            };
            cache.prepare("features")?;
            let fmc = cache.path("features", &key, "fmc");
            let tmp = fmc.with_extension("fmc.tmp");
            sf.matrix.write_cache(&tmp)?;
            fs::rename(&tmp, &fmc)?;
            write_json(&cache.path("features", &key, "json"), &summary)?;
            features.matrix = Some(sf.matrix);
            log.record(&name, "features", StageEvent::Computed);
            summary
        }
    };
    let dir = results_dir(cfg, &name);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("session.json"), &summary)?;

    let mut evals = Vec::new();
    if evaluate {
        for &family in &cfg.families {
            for &preset in &cfg.presets {
                for &modality in &cfg.modalities {
                    let ekey = eval_key(cfg, &key, &name, family, preset, modality);
                    let path = dir.join(eval_file(cfg, family, preset, modality));
                    let item = format!("{name}/{}_{}_{}", family.name(), preset.name(), modality.name());
                    if cache.enabled && path.is_file() {
                        if let Ok(rec) = read_json::<EvalRecord>(&path) {
                            if rec.key == ekey {
                                log.record(item, "eval", StageEvent::Skipped);
                                evals.push(rec);
                                continue;
                            }
                        }
                    }
                    let sel = ChannelSelection::new(&preset.placements(), modality.modalities());
                    let mut fm = features.matrix()?.select(&sel)?;
                    if cfg.permute_labels {
                        fm = permute_labels(&fm, permutation_seed(cfg, &name));
                    }
                    let result = cv_evaluate(&fm, &cfg.cv, family, &cfg.grid)?;
                    let rec = EvalRecord {
                        key: ekey,
                        session: name.clone(),
                        participant_id: summary.participant_id.clone(),
                        posture: summary.posture,
                        family,
                        preset,
                        modality,
                        permuted: cfg.permute_labels,
                        result,
                    };
                    write_json(&path, &rec)?;
                    log.record(item, "eval", StageEvent::Computed);
                    evals.push(rec);
                }
            }
        }
    }
    Ok(SessionOutput { summary, evals })
}

fn run_sessions(cfg: &RunConfig, evaluate: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let spec = cfg.synth_spec();
    let sources = discover_sessions(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let cache = StageCache::new(cfg.out_dir.join("cache"), cfg.cache);
    let log = StageLog::default();
    let results: Vec<(String, Result<SessionOutput>)> = sources
        .par_iter()
        .map(|src| {
            let out = session_work(cfg, spec.as_ref(), src, &cache, &log, evaluate);
            if out.is_err() {
                log.record(src.name(), "session", StageEvent::Failed);
            }
            (src.name(), out)
        })
        .collect();
    let mut sessions = Vec::new();
    let mut failures = Vec::new();
    let mut inputs = BTreeMap::new();
    for (name, r) in results {
        match r {
            Ok(s) => {
                inputs.insert(name, s.summary.input_hash.clone());
                sessions.push(s);
            }
            Err(e) => failures.push(SessionFailure {
                session: name,
                error: e.to_string(),
            }),
        }
    }
    let outcome = RunOutcome {
        sessions,
        failures,
        inputs,
        log,
    };
    write_json(&cfg.out_dir.join("run.json"), &outcome.manifest(cfg))?;
    outcome.log.write(&cfg.out_dir.join("stage_log.txt"))?;
    Ok(outcome)
}

/// Feature and quality stage for every session; failures are collected per session.
pub fn run_features(cfg: &RunConfig) -> Result<RunOutcome> {
    run_sessions(cfg, false)
}

/// Features plus cross-validated evaluation of every configured combination.
pub fn run_evaluation(cfg: &RunConfig) -> Result<RunOutcome> {
    run_sessions(cfg, true)
}

/// Reads the stored per-session results of `sessions` back from the output
/// directory. With `evals` every configured combination must be present and
/// match the current configuration.
pub fn load_results(cfg: &RunConfig, sessions: &[String], evals: bool) -> Result<Vec<SessionOutput>> {
    let mut out = Vec::with_capacity(sessions.len());
    let mut missing = Vec::new();
    for name in sessions {
        let dir = results_dir(cfg, name);
        let summary: SessionSummary = match read_json(&dir.join("session.json")) {
            Ok(s) => s,
            Err(_) => {
                missing.push(format!("{name}/session.json"));
                continue;
            }
        };
        let mut records = Vec::new();
        if evals {
            for &family in &cfg.families {
                for &preset in &cfg.presets {
                    for &modality in &cfg.modalities {
                        let file = eval_file(cfg, family, preset, modality);
                        let want = eval_key(cfg, &summary.features_key, name, family, preset, modality);
                        match read_json::<EvalRecord>(&dir.join(&file)) {
                            Ok(r) if r.key == want => records.push(r),
                            _ => missing.push(format!("{name}/{file}")),
                        }
                    }
                }
            }
        }
        out.push(SessionOutput {
            summary,
            evals: records,
        });
    }
    if !missing.is_empty() {
        let shown: Vec<_> = missing.iter().take(5).cloned().collect();
        return Err(Error::MissingResults(format!(
            "{} result files missing or stale, e.g. {}",
            missing.len(),
            shown.join(", ")
        )));
    }
    Ok(out)
}

/// Names of the configured sessions.
pub fn session_names(cfg: &RunConfig) -> Result<Vec<String>> {
    Ok(discover_sessions(cfg)?.iter().map(SessionSource::name).collect())
}
