//! Generate one synthetic session, write it to disk and read it back.
use emgimu::model::{load_session, save_session, Posture};
use emgimu::synth::{gen_session, session_dir_name, SynthSpec};

fn main() -> emgimu::Result<()> {
    let spec = SynthSpec::standard(42);
    let (rec, truth) = gen_session(&spec, 0, Posture::Deg90)?;
    println!(
        "{}: {} channels, {:.1} s, {} labelled segments",
        rec.participant_id,
        rec.channels.len(),
        spec.schedule.total_s(),
        truth.segments.len()
    );
    for c in rec.channels.iter().take(6) {
        let rms = (c.samples.iter().map(|v| v * v).sum::<f64>() / c.samples.len() as f64).sqrt();
        println!("  {:>3} {:<8} {:>6} Hz  rms {rms:.3}", c.placement, format!("{:?}", c.kind), c.rate_hz);
    }

    let dir = std::env::temp_dir().join("emgimu-example").join(session_dir_name(0, Posture::Deg90));
    save_session(&rec, &spec.schedule_for(Posture::Deg90), &dir)?;
    let back = load_session(&dir.join("manifest.json"))?;
    println!("round trip through {}: {} channels", dir.display(), back.channels.len());
    Ok(())
}
