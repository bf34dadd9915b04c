//! Normality check, test selection and effect size for two accuracy groups.
use std::collections::BTreeMap;

use emgimu::model::ModalityGroup;
use emgimu::stats::{compare_groups, results_markdown, run_hypotheses, SampleGroup, StatsOptions};

fn main() -> emgimu::Result<()> {
    let emg = vec![0.31, 0.45, 0.38, 0.52, 0.29, 0.41, 0.47, 0.36, 0.50, 0.33, 0.44, 0.39];
    let accel = vec![0.71, 0.82, 0.66, 0.79, 0.74, 0.88, 0.69, 0.77, 0.81, 0.73, 0.85, 0.70];
    let gyro = vec![0.35, 0.30, 0.52, 0.41, 0.28, 0.47, 0.39, 0.55, 0.33, 0.44, 0.36, 0.49];
    let mag = vec![0.62, 0.70, 0.58, 0.77, 0.66, 0.72, 0.61, 0.69, 0.75, 0.64, 0.71, 0.68];
    let imu = vec![0.81, 0.90, 0.77, 0.86, 0.84, 0.93, 0.79, 0.88, 0.91, 0.83, 0.89, 0.80];

    let opts = StatsOptions::default();
    let r = compare_groups(&SampleGroup::new("EMG", emg.clone()), &SampleGroup::new("Accel", accel.clone()), &opts)?;
    println!("{} vs {}: {:?} p = {:.2e}, d = {:.2}", r.left, r.right, r.test_used, r.p_value, r.cohens_d);

    let groups: BTreeMap<ModalityGroup, SampleGroup> = [
        (ModalityGroup::Emg, emg),
        (ModalityGroup::Accel, accel),
        (ModalityGroup::Gyro, gyro),
        (ModalityGroup::Mag, mag),
        (ModalityGroup::ImuCombined, imu),
    ]
    .into_iter()
    .map(|(m, v)| (m, SampleGroup::new(m.name(), v)))
    .collect();
    let results = run_hypotheses(&groups, &opts)?;
    println!("{}", results_markdown(&results, opts.alpha));
    Ok(())
}
