//! One pass/fail line per acceptance criterion, written to stderr even when
//! output is captured; the test fails if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use emgimu::classify::{davies_bouldin, fold_rows, train_fold, CvPlan, Grid, KernelChoice, ModelFamily};
use emgimu::dsp::{self, FilterSpec};
use emgimu::features::{autoregressive, window_features, ChannelSelection, Feature, SpectrumWorkspace, ThresholdSpec, Window};
use emgimu::model::{
    expected_sample_count, generate_label_schedule, ChannelKind, GestureId, ModalityGroup, Placement, PlacementPreset,
    Posture,
};
use emgimu::pipeline::{cmd_pipeline, cmd_report, process_session, ProcessSpec, RunConfig};
use emgimu::quality::{smr, snr};
use emgimu::stats::{cohens_d, lilliefors, wilcoxon_signed_rank, Decision, HypothesisId};
use emgimu::synth::oracle::{self, OracleThresholds};
use emgimu::synth::{gen_session, SynthSpec};

struct Line {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

fn criterion(id: u8, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Line {
    let t = Instant::now();
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let line = Line {
        id,
        title,
        pass,
        detail,
        secs: t.elapsed().as_secs_f64(),
    };
    say(format!(
        "criterion {:>2} {} - {} ({:.1} s): {}",
        line.id,
        if line.pass { "PASS" } else { "FAIL" },
        line.title,
        line.secs,
        line.detail
    ));
    line
}

// Written to the raw handle so the lines survive libtest's output capture.
fn say(line: String) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn c1() -> (bool, String) {
    let n = expected_sample_count(2.0, 2.0, 4, 17, 20, 2000.0);
    (n == 10_880_000, format!("{n} samples"))
}

fn c2() -> (bool, String) {
    let te = cohens_d(5.10, 1.66, 1.19, 1.07).unwrap();
    let smr_d = cohens_d(35.78, 5.90, 12.96, 0.87).unwrap();
    let acc = cohens_d(0.41, 0.08, 0.74, 0.10).unwrap().abs();
    let ok = (te - 2.80).abs() <= 0.05 && (smr_d - 5.41).abs() <= 0.05 && (3.64 - 0.05..=3.68 + 0.05).contains(&acc);
    (ok, format!("TE d={te:.3}, SMR d={smr_d:.3}, W1W2 |d|={acc:.3}"))
}

fn c4() -> (bool, String) {
    let th = ThresholdSpec::default();
    let oth = OracleThresholds {
        zc_eps: th.zc_eps,
        ssc_eps: th.ssc_eps,
        myop: th.myop_thresh,
        wamp: th.wamp_thresh,
        hist_sigmas: th.hist_range_sigmas,
        fr_split_hz: th.fr_split_hz,
        psr_halfwidth_hz: th.psr_halfwidth_hz,
    };
    let names: Vec<String> = Feature::for_kind(ChannelKind::Emg).iter().map(|f| f.name()).collect();
    assert_eq!(names, oracle::FEATURE_NAMES);
    let ws = std::cell::RefCell::new(SpectrumWorkspace::new());
    let production = |x: &[f64]| {
        let w = Window {
            placement: Placement::W1,
            kind: ChannelKind::Emg,
            gesture: GestureId::new(0).unwrap(),
            repetition: 0,
            index: 0,
            start_s: 0.0,
            rate_hz: 2000.0,
            samples: x,
        };
        window_features(&w, &th, &mut ws.borrow_mut()).unwrap().values
    };
    let report = oracle::oracle_check(production, |x| oracle::emg_features(x, 2000.0, &oth), 1000, 600, 1e-9, 4);

    let truth = [0.5, -0.3, 0.2, -0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut x = vec![0.0; 100_000 + 500];
    for i in 4..x.len() {
        let e: f64 = StandardNormal.sample(&mut rng);
        x[i] = (0..4).map(|k| truth[k] * x[i - 1 - k]).sum::<f64>() + e;
    }
    let est = autoregressive(&x[500..], 4);
    let ar_err = est.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ok = report.passed() && ar_err <= 0.05;
    (
        ok,
        format!(
            "34 features x 1000 windows: max rel deviation {:.2e}, {} failures; AR(4) max error {ar_err:.4}",
            report.max_deviation,
            report.failures.len()
        ),
    )
}

fn steady_gain_db(y: &[f64], x: &[f64]) -> f64 {
    let mid = |s: &[f64]| {
        let q = s.len() / 4;
        (s[q..3 * q].iter().map(|v| v * v).sum::<f64>() / (2 * q) as f64).sqrt()
    };
    20.0 * (mid(y) / mid(x)).log10()
}

fn c5() -> (bool, String) {
    let rate = 2000.0;
    let spec = FilterSpec::default();
    let tone = |f: f64| -> Vec<f64> { (0..40_000).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect() };
    let band_gain = |f: f64| {
        let x = tone(f);
        steady_gain_db(&dsp::bandpass_filter(&x, rate, &spec).unwrap(), &x)
    };
    let x60 = tone(60.0);
    let notch = -steady_gain_db(&dsp::notch_filter(&x60, rate, &spec).unwrap(), &x60);
    let lo_ok = band_gain(18.0) < -3.0 && band_gain(22.0) > -3.0;
    let hi_ok = band_gain(498.0) > -3.0 && band_gain(502.0) < -3.0;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = dsp::bandpass_filter(&noise, rate, &spec).unwrap();
    let xcorr = |lag: i64| -> f64 {
        (1000..19_000i64)
            .map(|i| y[i as usize] * noise[(i - lag) as usize])
            .sum()
    };
    let best = (-50..=50).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    let ok = notch >= 30.0 && lo_ok && hi_ok && best == 0;
    (
        ok,
        format!(
            "notch {notch:.1} dB at 60 Hz; gain at 18/22 Hz {:.2}/{:.2} dB, 498/502 Hz {:.2}/{:.2} dB; lag {best} samples",
            band_gain(18.0),
            band_gain(22.0),
            band_gain(498.0),
            band_gain(502.0)
        ),
    )
}

fn c6() -> (bool, String) {
    let a = [1.0, -2.0, 3.0, 0.5];
    let b = [-1.0, 2.0, -3.0, -0.5];
    let equal = snr(&a, &b).unwrap();
    let x: Vec<f64> = (0..2000)
        .map(|i| {
            let t = i as f64 / 2000.0;
            (2.0 * PI * 10.0 * t).sin() + (2.0 * PI * 100.0 * t).sin()
        })
        .collect();
    let two_line = smr(&x, 2000.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut min = f64::INFINITY;
    let mut flagged = 0;
    for _ in 0..1000 {
        let len = rng.random_range(200..3000);
        let w = oracle::random_window(&mut rng, len);
        match smr(&w, 2000.0) {
            Ok(v) => min = min.min(v),
            Err(_) => flagged += 1,
        }
    }
    let ok = equal == 0.0 && (two_line - 3.01).abs() <= 0.05 && min >= 0.0 && flagged == 0;
    (
        ok,
        format!("equal-RMS SNR {equal} dB; two-line SMR {two_line:.4} dB; min SMR over 1000 signals {min:.3} dB"),
    )
}

fn c7() -> (bool, String) {
    let spec = SynthSpec::standard(7);
    let (rec, _) = gen_session(&spec, 0, Posture::Deg90).unwrap();
    let cued = generate_label_schedule(&spec.schedule_for(Posture::Deg90)).unwrap();
    let sf = process_session(&rec, &cued, &ProcessSpec::default()).unwrap();
    drop(rec);
    let plan = CvPlan::default();
    let mut ok = sf.matrix.n_rows() == 816 && sf.matrix.n_cols() == 8 * 34 + 72 * 32;
    let mut detail = format!("{} x {} matrix", sf.matrix.n_rows(), sf.matrix.n_cols());
    for preset in [PlacementPreset::W1W2, PlacementPreset::All] {
        let fm = sf
            .matrix
            .select(&ChannelSelection::new(&preset.placements(), ModalityGroup::Emg.modalities()))
            .unwrap();
        let folds = fold_rows(&fm, &plan).unwrap();
        ok &= folds.len() == 4;
        for (t, (train, test)) in folds.iter().enumerate() {
            let mut per_gesture = BTreeMap::new();
            for &i in test {
                ok &= fm.rows[i].repetition as usize == t;
                *per_gesture.entry(fm.rows[i].gesture).or_insert(0) += 1;
            }
            ok &= per_gesture.len() == 17 && per_gesture.values().all(|&c| c == 12);
            ok &= train.len() == 3 * 204 && train.iter().all(|&i| fm.rows[i].repetition as usize != t);
        }
    }
    detail += "; 4 folds of 17 x 12 windows, one repetition each";

    let fm = sf
        .matrix
        .select(&ChannelSelection::new(&PlacementPreset::W1W2.placements(), ModalityGroup::Emg.modalities()))
        .unwrap();
    let grid = Grid {
        svm_c: vec![1.0],
        svm_kernel: vec![KernelChoice::Linear],
        ..Grid::default()
    };
    for family in [ModelFamily::Lda, ModelFamily::Svm] {
        let (m1, h1) = train_fold(&fm, &plan, family, &grid, 1).unwrap();
        let mut corrupt = fm.clone();
        for r in corrupt.rows.iter_mut().filter(|r| r.repetition == 1) {
            r.gesture = GestureId::new(16 - r.gesture.index()).unwrap();
        }
        let (m2, h2) = train_fold(&corrupt, &plan, family, &grid, 1).unwrap();
        let same = m1 == m2 && h1 == h2;
        ok &= same;
        detail += &format!("; {} model unchanged by test-label corruption: {same}", family.name());
    }
    (ok, detail)
}

fn c9() -> (bool, String) {
    let fixture = [0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0];
    let d0 = davies_bouldin(&fixture, 2, &[0, 0, 1, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, p) = (90, 3);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let pts: Vec<f64> = (0..n * p)
        .map(|k| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + 4.0 * labels[k / p] as f64 * ((k % p) as f64 - 1.0)
        })
        .collect();
    let base = davies_bouldin(&pts, p, &labels).unwrap();
    let m = DMatrix::from_row_slice(n, p, &pts);
    let shift: Vec<f64> = vec![12.5, -3.0, 7.25];
    let translated: Vec<f64> = pts.iter().enumerate().map(|(k, v)| v + shift[k % p]).collect();
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    let rotated = &m * q.transpose();
    let rotated: Vec<f64> = (0..n).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| rotated[(i, j)]).collect();
    let scaled: Vec<f64> = pts.iter().map(|v| v * 7.3).collect();
    let devs = [
        davies_bouldin(&translated, p, &labels).unwrap() - base,
        davies_bouldin(&rotated, p, &labels).unwrap() - base,
        davies_bouldin(&scaled, p, &labels).unwrap() - base,
    ];
    let worst = devs.iter().map(|d| d.abs() / base).fold(0.0, f64::max);
    let oracle_dev = {
        let rows: Vec<Vec<f64>> = pts.chunks(p).map(|c| c.to_vec()).collect();
        (oracle::dbi(&rows, &labels) - base).abs() / base
    };
    let ok = (d0 - 0.1).abs() < 1e-12 && worst <= 1e-9 && oracle_dev <= 1e-9;
    (
        ok,
        format!("fixture {d0:.12}; max relative change under translation/rotation/scaling {worst:.2e}; oracle {oracle_dev:.1e}"),
    )
}

fn c10() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 1..=12 {
        for _ in 0..40 {
            let a: Vec<f64> = (0..n).map(|_| (rng.random_range(-3.0..3.0f64) * 2.0).round() / 2.0).collect();
            let b: Vec<f64> = (0..n).map(|_| (rng.random_range(-3.0..3.0f64) * 2.0).round() / 2.0).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            if d.iter().all(|v| *v == 0.0) {
                continue;
            }
            let (_, p) = wilcoxon_signed_rank(&a, &b).unwrap();
            worst = worst.max((p - oracle::wilcoxon_enumerated(&d)).abs());
            cases += 1;
        }
    }
    let trials = 10_000;
    let mut rejected = 0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        if lilliefors(&x).unwrap().p_value <= 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / trials as f64;
    let ok = worst <= 1e-12 && (0.03..=0.07).contains(&rate);
    (
        ok,
        format!("Wilcoxon exact vs enumeration over {cases} cases (n <= 12): max |dp| {worst:.1e}; Lilliefors rejection rate {rate:.4} over {trials} normal samples"),
    )
}

fn cohort_config(out: &Path) -> RunConfig {
    RunConfig {
        synth: Some(SynthSpec::standard(0)),
        seed: 2024,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn read_reports(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut m = BTreeMap::new();
    for e in std::fs::read_dir(out.join("reports")).unwrap() {
        let e = e.unwrap();
        m.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
    }
    m
}

fn c8(out: &Path) -> (bool, String) {
    let cfg = cohort_config(out);
    let (outcome, set) = cmd_pipeline(&cfg).unwrap();
    let mut ok = outcome.failures.is_empty() && outcome.sessions.len() == 24;
    let mut notes = Vec::new();
    for t in &set.accuracy {
        for row in &t.rows {
            let mean = |m: ModalityGroup| row.cell(m).unwrap().mean;
            let (emg, acc, gyr, mag, imu) = (
                mean(ModalityGroup::Emg),
                mean(ModalityGroup::Accel),
                mean(ModalityGroup::Gyro),
                mean(ModalityGroup::Mag),
                mean(ModalityGroup::ImuCombined),
            );
            let test = |m: ModalityGroup| row.cell(m).unwrap().test.clone().unwrap();
            let h4 = test(ModalityGroup::ImuCombined);
            let order = acc > emg && emg > gyr && mag > emg && imu > emg;
            let sig = h4.p_value < 0.05 && h4.cohens_d.abs() > 1.0;
            let decisions = test(ModalityGroup::Accel).decision == Decision::Reject
                && test(ModalityGroup::Mag).decision == Decision::Reject
                && h4.decision == Decision::Reject
                && test(ModalityGroup::Gyro).decision == Decision::FailToReject;
            if !(order && sig && decisions) {
                ok = false;
                notes.push(format!(
                    "{} {}: emg {emg:.3} accel {acc:.3} gyro {gyr:.3} mag {mag:.3} imu {imu:.3} p {:.2e} d {:.2}",
                    t.posture.name(),
                    row.preset.name(),
                    h4.p_value,
                    h4.cohens_d
                ));
            }
        }
    }
    let all = set.accuracy.iter().flat_map(|t| t.rows.iter().map(move |r| (t.posture, r)));
    let summary: Vec<String> = all
        .filter(|(_, r)| r.preset == PlacementPreset::W1W2 || r.preset == PlacementPreset::All)
        .map(|(p, r)| {
            let m = |g: ModalityGroup| r.cell(g).unwrap().mean;
            format!(
                "{}/{} emg {:.2} accel {:.2} gyro {:.2} mag {:.2} imu {:.2}",
                p.name(),
                r.preset.name(),
                m(ModalityGroup::Emg),
                m(ModalityGroup::Accel),
                m(ModalityGroup::Gyro),
                m(ModalityGroup::Mag),
                m(ModalityGroup::ImuCombined)
            )
        })
        .collect();
    let hyps = HypothesisId::ALL.len();
    let detail = if notes.is_empty() {
        format!(
            "24 sessions, 2 postures x 7 presets: ordering, H1/H3/H4 rejected, H2 not rejected ({hyps} tests per row); {}",
            summary.join("; ")
        )
    } else {
        format!("violations: {}", notes.join("; "))
    };
    (ok, detail)
}

fn c3(out: &Path) -> (bool, String) {
    let cfg = RunConfig {
        permute_labels: true,
        presets: vec![PlacementPreset::All],
        ..cohort_config(out)
    };
    let (outcome, _) = cmd_pipeline(&cfg).unwrap();
    let mut per = BTreeMap::new();
    let mut all = Vec::new();
    for s in &outcome.sessions {
        for e in &s.evals {
            per.entry(e.modality.name()).or_insert_with(Vec::new).push(e.result.mean_accuracy);
            all.push(e.result.mean_accuracy);
        }
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let parts: Vec<String> = per
        .iter()
        .map(|(k, v)| format!("{k} {:.3}", v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    (
        (0.039..=0.079).contains(&mean) && outcome.failures.is_empty(),
        format!("permuted labels, {} evaluations: mean accuracy {mean:.4} ({})", all.len(), parts.join(", ")),
    )
}

fn c11(out: &Path, scratch: &Path, cohort: &BTreeMap<String, Vec<u8>>) -> (bool, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let again = pool.install(|| cmd_report(&cohort_config(out))).unwrap();
    let rerun = read_reports(out);
    let same = |k: &String| rerun.get(k) == cohort.get(k);
    let names: std::collections::BTreeSet<String> = again
        .files
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let mut ok = !cohort.is_empty() && names.iter().eq(cohort.keys()) && cohort.keys().all(same);

    // a smaller cohort recomputed from scratch under different pool sizes
    let small = |dir: &Path| RunConfig {
        synth: Some(SynthSpec {
            n_participants: 2,
            ..SynthSpec::standard(0)
        }),
        presets: vec![PlacementPreset::W1W2, PlacementPreset::All],
        seed: 99,
        out_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    let mut trees = Vec::new();
    for (jobs, name) in [(1, "j1"), (4, "j4")] {
        let dir = scratch.join(name);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap();
        pool.install(|| cmd_pipeline(&small(&dir))).unwrap();
        trees.push(read_reports(&dir));
    }
    ok &= trees[0] == trees[1];
    (
        ok,
        format!(
            "{} report files identical on rerun with 3 workers; fresh 4-session runs with 1 and 4 workers byte-identical: {}",
            cohort.len(),
            trees[0] == trees[1]
        ),
    )
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let cohort = tmp.path().join("cohort");
    let scratch = tmp.path().join("scratch");
    let lines = vec![
        criterion(1, "sample-count identity", c1),
        criterion(2, "Cohen's d reproduction", c2),
        criterion(4, "feature-oracle equivalence", c4),
        criterion(5, "filter conformance", c5),
        criterion(6, "SNR/SMR analytics", c6),
        criterion(7, "CV structure and leakage", c7),
        criterion(9, "Davies-Bouldin index", c9),
        criterion(10, "statistical tests", c10),
    ];
    let mut lines = lines;
    let mut reports = BTreeMap::new();
    lines.push(criterion(8, "qualitative trend reproduction", || {
        let r = c8(&cohort);
        reports = read_reports(&cohort);
        r
    }));
    // the permuted run reuses the feature cache of the cohort
    lines.push(criterion(3, "chance-level control", || c3(&cohort)));
    lines.push(criterion(11, "determinism", || c11(&cohort, &scratch, &reports)));
    let mut sorted: Vec<&Line> = lines.iter().collect();
    sorted.sort_by_key(|l| l.id);
    say("\nacceptance summary".into());
    for l in &sorted {
        say(format!("criterion {:>2}: {} ({})", l.id, if l.pass { "PASS" } else { "FAIL" }, l.title));
        if !l.pass {
            say(format!("    {}", l.detail));
        }
    }
    let failed: Vec<u8> = sorted.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
