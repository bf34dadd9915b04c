//! Entry points behind the command-line subcommands.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::run::{discover_sessions, load_results, session_names, RunOutcome, SessionFailure, SessionSource};
use super::{load_source, report, session_labels, RunConfig};
use crate::dsp;
use crate::error::{Error, Result};
use crate::model::{save_session, LabelTrack};
use crate::synth::{self, SynthSpec};

/// Writes the synthetic cohort as session directories under `<out>/sessions`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = SynthSpec {
        seed: cfg.seed,
        ..cfg.synth.clone().unwrap_or_default()
    };
    let out = cfg.out_dir.join("sessions");
    fs::create_dir_all(&out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    synth::write_cohort(&spec, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelFile {
    pub session: String,
    pub shift_s: f64,
    pub labels: LabelTrack,
}

fn per_session<T: Send>(
    cfg: &RunConfig,
    f: impl Fn(&SessionSource) -> Result<T> + Sync,
) -> Result<(Vec<T>, Vec<SessionFailure>)> {
    let sources = discover_sessions(cfg)?;
    let results: Vec<(String, Result<T>)> = sources.par_iter().map(|s| (s.name(), f(s))).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (session, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failed.push(SessionFailure {
                session,
                error: e.to_string(),
            }),
        }
    }
    Ok((ok, failed))
}

/// Aligned label tracks as `<out>/labels/<session>.json`.
pub fn cmd_label(cfg: &RunConfig) -> Result<(Vec<PathBuf>, Vec<SessionFailure>)> {
    let spec = cfg.synth_spec();
    let dir = cfg.out_dir.join("labels");
    fs::create_dir_all(&dir)?;
    per_session(cfg, |src| {
        let (rec, cued) = load_source(src, spec.as_ref())?;
        let (labels, shift_s) = session_labels(&rec, &cued, &cfg.process.align)?;
        let path = dir.join(format!("{}.json", src.name()));
        let file = LabelFile {
            session: src.name(),
            shift_s,
            labels,
        };
        fs::write(&path, serde_json::to_vec_pretty(&file)?)?;
        Ok(path)
    })
}

/// Preprocessed copies of every session under `<out>/preprocessed`.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<(Vec<PathBuf>, Vec<SessionFailure>)> {
    let spec = cfg.synth_spec();
    let dir = cfg.out_dir.join("preprocessed");
    fs::create_dir_all(&dir)?;
    per_session(cfg, |src| {
        let (rec, _) = load_source(src, spec.as_ref())?;
        let schedule = match src {
            SessionSource::Dir(d) => crate::model::SessionManifest::load(&d.join("manifest.json"))?.schedule,
            SessionSource::Synth { posture, .. } => spec.as_ref().map(|s| s.schedule_for(*posture)).unwrap_or_default(),
        };
        let pre = dsp::preprocess_recording(&rec, &cfg.process.filter, &cfg.process.smooth)?;
        drop(rec);
        let out = dir.join(src.name());
        save_session(&pre, &schedule, &out)?;
        Ok(out)
    })
}

/// Feature matrices as CSV under `<out>/features`, from the feature stage.
pub fn export_features_csv(cfg: &RunConfig, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    let dir = cfg.out_dir.join("features");
    fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    for s in &outcome.sessions {
        let fmc = cfg
            .out_dir
            .join("cache")
            .join("features")
            .join(format!("{}.fmc", s.summary.features_key));
        let fm = crate::features::FeatureMatrix::read_cache(&fmc)?;
        let path = dir.join(format!("{}.csv", s.summary.session));
        fm.write_csv(&path)?;
        out.push(path);
    }
    Ok(out)
}

/// Reports from stored results of the configured sessions.
pub fn cmd_report(cfg: &RunConfig) -> Result<report::ReportSet> {
    let names = session_names(cfg)?;
    let sessions = load_results(cfg, &names, true)?;
    let mut set = report::write_reports(cfg, &sessions, true)?;
    set.files.extend(report::write_stats(cfg, &sessions)?);
    Ok(set)
}

pub fn cmd_stats(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let names = session_names(cfg)?;
    let sessions = load_results(cfg, &names, true)?;
    report::write_stats(cfg, &sessions)
}

/// Quality and noise reports after the feature stage.
pub fn cmd_quality(cfg: &RunConfig) -> Result<(RunOutcome, report::ReportSet)> {
    let outcome = super::run_features(cfg)?;
    let names: Vec<String> = outcome.sessions.iter().map(|s| s.summary.session.clone()).collect();
    let sessions = load_results(cfg, &names, false)?;
    let set = report::write_reports(cfg, &sessions, false)?;
    Ok((outcome, set))
}

/// Evaluation followed by every report, over the sessions that succeeded.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<(RunOutcome, report::ReportSet)> {
    let outcome = super::run_evaluation(cfg)?;
    let names: Vec<String> = outcome.sessions.iter().map(|s| s.summary.session.clone()).collect();
    let sessions = load_results(cfg, &names, true)?;
    let mut set = report::write_reports(cfg, &sessions, true)?;
    set.files.extend(report::write_stats(cfg, &sessions)?);
    Ok((outcome, set))
}
