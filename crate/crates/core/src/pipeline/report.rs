use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::SessionOutput;
use super::RunConfig;
use crate::classify::ModelFamily;
use crate::error::Result;
use crate::model::{ModalityGroup, PlacementPreset, Posture};
use crate::quality::{aggregate_quality, QualityReport};
use crate::stats::{self, compare_groups, Decision, HypothesisId, SampleGroup, TestResult};

/// One modality of one preset row: accuracy across participants and the
/// comparison against EMG.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyCell {
    pub modality: ModalityGroup,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub dbi_mean: Option<f64>,
    pub test: Option<TestResult>,
    /// Why `test` is missing, if it should have been there.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub preset: PlacementPreset,
    pub cells: Vec<AccuracyCell>,
}

impl AccuracyRow {
    pub fn cell(&self, m: ModalityGroup) -> Option<&AccuracyCell> {
        self.cells.iter().find(|c| c.modality == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisRow {
    pub preset: PlacementPreset,
    pub hypothesis: HypothesisId,
    pub result: Option<TestResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub family: ModelFamily,
    pub posture: Posture,
    pub participants: Vec<String>,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn row(&self, p: PlacementPreset) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.preset == p)
    }

    pub fn hypotheses(&self) -> Vec<HypothesisRow> {
        let mut out = Vec::new();
        for row in &self.rows {
            for h in HypothesisId::ALL {
                if let Some(c) = row.cell(h.right()) {
                    out.push(HypothesisRow {
                        preset: row.preset,
                        hypothesis: h,
                        result: c.test.clone(),
                        note: c.note.clone(),
                    });
                }
            }
        }
        out
    }
}

fn hypothesis_for(m: ModalityGroup) -> Option<HypothesisId> {
    HypothesisId::ALL.into_iter().find(|h| h.right() == m)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    (stats::mean(v), stats::sample_std(v))
}

/// Per-preset accuracy summary of one model family and posture.
pub fn accuracy_table(cfg: &RunConfig, sessions: &[SessionOutput], family: ModelFamily, posture: Posture) -> AccuracyTable {
    let mut chosen: Vec<&SessionOutput> = sessions.iter().filter(|s| s.summary.posture == posture).collect();
    chosen.sort_by(|a, b| a.summary.participant_id.cmp(&b.summary.participant_id));
    let participants: Vec<String> = chosen.iter().map(|s| s.summary.participant_id.clone()).collect();
    let rows = cfg
        .presets
        .iter()
        .map(|&preset| {
            let group = |m: ModalityGroup| -> (Vec<f64>, Vec<f64>) {
                let mut acc = Vec::new();
                let mut dbi = Vec::new();
                for s in &chosen {
                    if let Some(r) = s
                        .evals
                        .iter()
                        .find(|e| e.family == family && e.preset == preset && e.modality == m)
                    {
                        acc.push(r.result.mean_accuracy);
                        if let Some(d) = r.result.dbi {
                            dbi.push(d);
                        }
                    }
                }
                (acc, dbi)
            };
            let emg = cfg
                .modalities
                .contains(&ModalityGroup::Emg)
                .then(|| SampleGroup::new("emg", group(ModalityGroup::Emg).0).with_participants(participants.clone()));
            let cells = cfg
                .modalities
                .iter()
                .map(|&m| {
                    let (acc, dbi) = group(m);
                    let (mean, std) = mean_std(&acc);
                    let mut test = None;
                    let mut note = None;
                    if let (Some(h), Some(emg)) = (hypothesis_for(m), emg.as_ref()) {
                        let right = SampleGroup::new(m.name(), acc.clone()).with_participants(participants.clone());
                        match compare_groups(emg, &right, &cfg.stats) {
                            Ok(mut r) => {
                                r.hypothesis = Some(h);
                                test = Some(r);
                            }
                            Err(e) => note = Some(e.to_string()),
                        }
                    }
                    AccuracyCell {
                        modality: m,
                        n: acc.len(),
                        mean,
                        std,
                        dbi_mean: (!dbi.is_empty()).then(|| stats::mean(&dbi)),
                        test,
                        note,
                    }
                })
                .collect();
            AccuracyRow { preset, cells }
        })
        .collect();
    AccuracyTable {
        family,
        posture,
        participants,
        rows,
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_accuracy_csv(t: &AccuracyTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "preset", "modality", "n", "mean", "std", "dbi_mean", "test", "statistic", "p", "star", "cohens_d", "decision",
        "note",
    ])?;
    for row in &t.rows {
        for c in &row.cells {
            let (test, statistic, p, star, d, decision) = match &c.test {
                Some(r) => (
                    format!("{:?}", r.test_used),
                    num(r.statistic),
                    num(r.p_value),
                    stats::star(r.p_value, 0.05).to_string(),
                    num(r.cohens_d),
                    format!("{:?}", r.decision),
                ),
                None => Default::default(),
            };
            w.write_record([
                row.preset.name().to_string(),
                c.modality.name().to_string(),
                c.n.to_string(),
                num(c.mean),
                num(c.std),
                opt(c.dbi_mean),
                test,
                statistic,
                p,
                star,
                d,
                decision,
                c.note.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt_ms(mean: f64, std: f64) -> String {
    if mean.is_finite() {
        format!("{:.2}({:.2})", mean, if std.is_finite() { std } else { 0.0 })
    } else {
        "-".into()
    }
}

fn accuracy_markdown(t: &AccuracyTable, alpha: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "## {} accuracy, {} degree posture ({} participants)\n",
        t.family.name().to_uppercase(),
        t.posture.name(),
        t.participants.len()
    );
    let mods: Vec<ModalityGroup> = t.rows.first().map(|r| r.cells.iter().map(|c| c.modality).collect()).unwrap_or_default();
    s.push_str("| Preset |");
    for m in &mods {
        let _ = write!(s, " {} |", m.name());
    }
    s.push_str("\n|---|");
    for _ in &mods {
        s.push_str("---|");
    }
    s.push('\n');
    for row in &t.rows {
        let _ = write!(s, "| {} |", row.preset.name());
        for c in &row.cells {
            let mut cell = fmt_ms(c.mean, c.std);
            if let Some(r) = &c.test {
                let _ = write!(cell, "{} d={:.2}", stats::star(r.p_value, alpha), r.cohens_d);
            }
            let _ = write!(s, " {cell} |");
        }
        s.push('\n');
    }
    s.push_str("\n`*` p < alpha against EMG; d is Cohen's d of EMG minus the column.\n\n");

    let _ = writeln!(s, "### Davies-Bouldin index (mean over participants)\n");
    s.push_str("| Preset |");
    for m in &mods {
        let _ = write!(s, " {} |", m.name());
    }
    s.push_str("\n|---|");
    for _ in &mods {
        s.push_str("---|");
    }
    s.push('\n');
    for row in &t.rows {
        let _ = write!(s, "| {} |", row.preset.name());
        for c in &row.cells {
            match c.dbi_mean {
                Some(d) => {
                    let _ = write!(s, " {d:.2} |");
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }

    let hyps = t.hypotheses();
    if !hyps.is_empty() {
        let _ = writeln!(s, "\n### Hypotheses (EMG against each inertial group)\n");
        s.push_str("| Preset | Hypothesis | Test | p | d | Decision |\n|---|---|---|---|---|---|\n");
        for h in &hyps {
            match &h.result {
                Some(r) => {
                    let decision = match r.decision {
                        Decision::Reject => "reject",
                        Decision::FailToReject => "fail to reject",
                    };
                    let _ = writeln!(
                        s,
                        "| {} | {} (emg < {}) | {:?} | {:.4}{} | {:.2} | {} |",
                        h.preset.name(),
                        h.hypothesis.name(),
                        h.hypothesis.right().name(),
                        r.test_used,
                        r.p_value,
                        stats::star(r.p_value, alpha),
                        r.cohens_d,
                        decision
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "| {} | {} (emg < {}) | - | - | - | {} |",
                        h.preset.name(),
                        h.hypothesis.name(),
                        h.hypothesis.right().name(),
                        h.note.as_deref().unwrap_or("not run")
                    );
                }
            }
        }
    }
    s
}

fn write_folds_csv(sessions: &[SessionOutput], family: ModelFamily, posture: Posture, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let folds = sessions
        .iter()
        .flat_map(|s| s.evals.iter())
        .map(|e| e.result.fold_accuracies.len())
        .max()
        .unwrap_or(0);
    let mut header = vec!["session".to_string(), "participant".into(), "preset".into(), "modality".into()];
    header.extend((1..=folds).map(|k| format!("fold{k}")));
    header.extend(["mean".to_string(), "dbi".into(), "n_features".into(), "selected".into()]);
    w.write_record(&header)?;
    let mut chosen: Vec<&SessionOutput> = sessions.iter().filter(|s| s.summary.posture == posture).collect();
    chosen.sort_by(|a, b| a.summary.participant_id.cmp(&b.summary.participant_id));
    for s in chosen {
        for e in s.evals.iter().filter(|e| e.family == family) {
            let mut rec = vec![
                s.summary.session.clone(),
                s.summary.participant_id.clone(),
                e.preset.name().to_string(),
                e.modality.name().to_string(),
            ];
            for k in 0..folds {
                rec.push(e.result.fold_accuracies.get(k).map(|v| num(*v)).unwrap_or_default());
            }
            rec.push(num(e.result.mean_accuracy));
            rec.push(opt(e.result.dbi));
            rec.push(e.result.n_features.to_string());
            let selected: Vec<String> = e
                .result
                .folds
                .iter()
                .map(|f| serde_json::to_string(&f.best).unwrap_or_default())
                .collect();
            rec.push(selected.join(";"));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_noise_csv(sessions: &[SessionOutput], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["session", "participant", "placement", "modality", "sigma", "unit"])?;
    let mut sorted: Vec<&SessionOutput> = sessions.iter().collect();
    sorted.sort_by(|a, b| a.summary.session.cmp(&b.summary.session));
    for s in sorted {
        if let Some(n) = &s.summary.noise {
            for sensor in &n.sensors {
                w.write_record([
                    s.summary.session.as_str(),
                    s.summary.participant_id.as_str(),
                    sensor.placement.name(),
                    sensor.modality.name(),
                    &num(sensor.sigma),
                    sensor.modality.kinds()[0].unit(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Everything written by one report pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSet {
    pub accuracy: Vec<AccuracyTable>,
    pub quality: BTreeMap<Posture, QualityReport>,
    pub files: Vec<PathBuf>,
}

fn postures(sessions: &[SessionOutput]) -> Vec<Posture> {
    let mut p: Vec<Posture> = sessions.iter().map(|s| s.summary.posture).collect();
    p.sort();
    p.dedup();
    p
}

/// Quality tables per posture from the stored per-session metrics.
pub fn quality_reports(cfg: &RunConfig, sessions: &[SessionOutput]) -> BTreeMap<Posture, QualityReport> {
    let mut out = BTreeMap::new();
    for posture in postures(sessions) {
        let mut parts: Vec<_> = sessions
            .iter()
            .filter(|s| s.summary.posture == posture)
            .map(|s| s.summary.quality.to_quality(&s.summary.participant_id))
            .collect();
        parts.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
        out.insert(posture, aggregate_quality(&parts, &cfg.process.quality));
    }
    out
}

/// Writes accuracy, hypothesis, per-fold, quality and noise reports under
/// `<out>/reports`. Output depends only on `sessions` and `cfg`.
pub fn write_reports(cfg: &RunConfig, sessions: &[SessionOutput], with_accuracy: bool) -> Result<ReportSet> {
    let dir = cfg.reports_dir();
    fs::create_dir_all(&dir)?;
    let alpha = cfg.stats.alpha;
    let mut files = Vec::new();
    let mut accuracy = Vec::new();
    let mut index = String::from("# Report\n\n");
    if with_accuracy {
        for &family in &cfg.families {
            for posture in postures(sessions) {
                let t = accuracy_table(cfg, sessions, family, posture);
                let stem = format!("accuracy_{}_{}", family.name(), posture.name());
                let csv_path = dir.join(format!("{stem}.csv"));
                write_accuracy_csv(&t, &csv_path)?;
                let md = accuracy_markdown(&t, alpha);
                let md_path = dir.join(format!("{stem}.md"));
                fs::write(&md_path, &md)?;
                index.push_str(&md);
                index.push('\n');
                let folds_path = dir.join(format!("folds_{}_{}.csv", family.name(), posture.name()));
                write_folds_csv(sessions, family, posture, &folds_path)?;
                files.extend([csv_path, md_path, folds_path]);
                accuracy.push(t);
            }
        }
    }
    let quality = quality_reports(cfg, sessions);
    for (posture, q) in &quality {
        let csv_path = dir.join(format!("quality_{}.csv", posture.name()));
        q.write_csv(&csv_path)?;
        let md = q.to_markdown(alpha);
        let md_path = dir.join(format!("quality_{}.md", posture.name()));
        fs::write(&md_path, &md)?;
        let _ = writeln!(index, "## Signal quality, {} degree posture\n\n{md}", posture.name());
        files.extend([csv_path, md_path]);
    }
    let noise_path = dir.join("noise.csv");
    write_noise_csv(sessions, &noise_path)?;
    files.push(noise_path);
    let index_path = dir.join("summary.md");
    fs::write(&index_path, index)?;
    files.push(index_path);
    Ok(ReportSet {
        accuracy,
        quality,
        files,
    })
}

/// Hypothesis tables only.
pub fn write_stats(cfg: &RunConfig, sessions: &[SessionOutput]) -> Result<Vec<PathBuf>> {
    let dir = cfg.reports_dir();
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for &family in &cfg.families {
        for posture in postures(sessions) {
            let t = accuracy_table(cfg, sessions, family, posture);
            let results: Vec<TestResult> = t.hypotheses().into_iter().filter_map(|h| h.result).collect();
            let path = dir.join(format!("hypotheses_{}_{}.json", family.name(), posture.name()));
            fs::write(&path, serde_json::to_vec_pretty(&t.hypotheses())?)?;
            let md_path = dir.join(format!("hypotheses_{}_{}.md", family.name(), posture.name()));
            fs::write(&md_path, stats::results_markdown(&results, cfg.stats.alpha))?;
            files.extend([path, md_path]);
        }
    }
    Ok(files)
}
