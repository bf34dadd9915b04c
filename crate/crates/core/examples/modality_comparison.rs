//! End-to-end run on a small synthetic cohort: evaluation, reports and tests.
use emgimu::model::{ModalityGroup, PlacementPreset};
use emgimu::pipeline::{cmd_pipeline, RunConfig};
use emgimu::synth::SynthSpec;

fn main() -> emgimu::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let out = std::env::temp_dir().join("emgimu-modality-comparison");
    let cfg = RunConfig {
        synth: Some(SynthSpec {
            n_participants: n,
            ..SynthSpec::standard(0)
        }),
        presets: vec![PlacementPreset::W1W2, PlacementPreset::All],
        out_dir: out.clone(),
        seed: 7,
        ..RunConfig::default()
    };
    let (outcome, set) = cmd_pipeline(&cfg)?;
    println!("{} sessions evaluated, reports in {}", outcome.sessions.len(), out.join("reports").display());
    for table in &set.accuracy {
        println!("\n{} posture ({} participants)", table.posture.name(), table.participants.len());
        for row in &table.rows {
            let cells: Vec<String> = ModalityGroup::ALL
                .iter()
                .filter_map(|m| row.cell(*m))
                .map(|c| format!("{} {:.3}", c.modality.name(), c.mean))
                .collect();
            println!("  {:<9} {}", row.preset.name(), cells.join("  "));
        }
        for h in table.hypotheses() {
            match &h.result {
                Some(r) => println!(
                    "  {} {:<9} p {:.2e} d {:+.2} {:?}",
                    h.hypothesis.name(),
                    h.preset.name(),
                    r.p_value,
                    r.cohens_d,
                    r.decision
                ),
                None => println!("  {} {:<9} {}", h.hypothesis.name(), h.preset.name(), h.note.as_deref().unwrap_or("")),
            }
        }
    }
    Ok(())
}
