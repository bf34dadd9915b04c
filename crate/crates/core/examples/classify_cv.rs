//! Leave-one-repetition-out accuracy of LDA and SVM on one session.
use emgimu::classify::{cv_evaluate, CvPlan, Grid, ModelFamily};
use emgimu::features::ChannelSelection;
use emgimu::model::{ModalityGroup, PlacementPreset, Posture};
use emgimu::pipeline::{process_session, ProcessSpec};
use emgimu::synth::{gen_session, SynthSpec};

fn main() -> emgimu::Result<()> {
    let spec = SynthSpec::standard(5);
    let (rec, labels) = gen_session(&spec, 2, Posture::Deg90)?;
    let sf = process_session(&rec, &labels, &ProcessSpec::default())?;
    drop(rec);
    let plan = CvPlan::default();
    let grid = Grid::default();
    for family in [ModelFamily::Lda, ModelFamily::Svm] {
        for modality in [ModalityGroup::Emg, ModalityGroup::Accel] {
            let sel = ChannelSelection::new(&PlacementPreset::W1W2.placements(), modality.modalities());
            let fm = sf.matrix.select(&sel)?;
            let r = cv_evaluate(&fm, &plan, family, &grid)?;
            let folds: Vec<String> = r.fold_accuracies.iter().map(|a| format!("{a:.2}")).collect();
            println!(
                "{:<3} {:<5} {} features: mean {:.3} folds [{}] dbi {:.2}",
                family.name(),
                modality.name(),
                r.n_features,
                r.mean_accuracy,
                folds.join(" "),
                r.dbi.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
