use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emgimu::pipeline::{self, RunConfig, SessionFailure};
use emgimu::synth::SynthSpec;

#[derive(Parser)]
#[command(name = "emgimu", version, about = "EMG/IMU gesture recognition pipeline")]
struct Cli {
    /// JSON run configuration (schema version 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Session directory or a directory of sessions; repeatable. Overrides the config.
    #[arg(long = "sessions", global = true)]
    sessions: Vec<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort as session directories.
    Synth {
        #[arg(long)]
        participants: Option<usize>,
    },
    /// Align cued labels to the EMG onsets.
    Label,
    /// Write preprocessed copies of the sessions.
    Preprocess,
    /// Extract windowed features (cached).
    Features {
        /// Also export each feature matrix as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Calibration noise, SNR and SMR tables.
    Quality,
    /// Cross-validated evaluation of every preset and modality.
    Eval,
    /// Hypothesis tests on stored results.
    Stats,
    /// Accuracy, hypothesis, quality and noise reports from stored results.
    Report,
    /// Eval followed by report.
    Run,
}

fn resolve(cli: &Cli) -> emgimu::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if !cli.sessions.is_empty() {
        cfg.sessions = cli.sessions.clone();
        cfg.synth = None;
    }
    if cfg.synth.is_none() && cfg.sessions.is_empty() && !matches!(cli.command, Command::Synth { .. }) {
        cfg.sessions = vec![cfg.out_dir.join("sessions")];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_failures(failures: &[SessionFailure]) -> ExitCode {
    for f in failures {
        eprintln!("session {} failed: {}", f.session, f.error);
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cli: &Cli) -> emgimu::Result<ExitCode> {
    let mut cfg = resolve(cli)?;
    match &cli.command {
        Command::Synth { participants } => {
            let mut spec = cfg.synth.clone().unwrap_or_else(|| SynthSpec::standard(cfg.seed));
            if let Some(n) = participants {
                spec.n_participants = *n;
            }
            cfg.synth = Some(spec);
            let dirs = pipeline::cmd_synth(&cfg)?;
            eprintln!("wrote {} sessions under {}", dirs.len(), cfg.out_dir.join("sessions").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Label => {
            let (files, failures) = pipeline::cmd_label(&cfg)?;
            eprintln!("wrote {} label files", files.len());
            Ok(report_failures(&failures))
        }
        Command::Preprocess => {
            let (dirs, failures) = pipeline::cmd_preprocess(&cfg)?;
            eprintln!("wrote {} preprocessed sessions", dirs.len());
            Ok(report_failures(&failures))
        }
        Command::Features { csv } => {
            let outcome = pipeline::run_features(&cfg)?;
            if *csv {
                pipeline::export_features_csv(&cfg, &outcome)?;
            }
            eprintln!("features for {} sessions", outcome.sessions.len());
            Ok(report_failures(&outcome.failures))
        }
        Command::Quality => {
            let (outcome, set) = pipeline::cmd_quality(&cfg)?;
            eprintln!("wrote {} report files", set.files.len());
            Ok(report_failures(&outcome.failures))
        }
        Command::Eval => {
            let outcome = pipeline::run_evaluation(&cfg)?;
            eprintln!(
                "evaluated {} sessions ({} stages computed, {} cached)",
                outcome.sessions.len(),
                outcome.log.count(pipeline::StageEvent::Computed),
                outcome.log.count(pipeline::StageEvent::Skipped)
            );
            Ok(report_failures(&outcome.failures))
        }
        Command::Stats => {
            let files = pipeline::cmd_stats(&cfg)?;
            eprintln!("wrote {} files", files.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report => {
            let set = pipeline::cmd_report(&cfg)?;
            eprintln!("wrote {} report files under {}", set.files.len(), cfg.reports_dir().display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run => {
            let (outcome, set) = pipeline::cmd_pipeline(&cfg)?;
            eprintln!(
                "{} sessions, {} report files under {}",
                outcome.sessions.len(),
                set.files.len(),
                cfg.reports_dir().display()
            );
            Ok(report_failures(&outcome.failures))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
