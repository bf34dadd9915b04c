//! Recover a delay between the cued schedule and the actual muscle activity.
use emgimu::model::{generate_label_schedule, Posture};
use emgimu::pipeline::{session_labels, AlignSpec};
use emgimu::synth::{gen_session, SynthSpec};

fn main() -> emgimu::Result<()> {
    for lag in [0.0, 0.12, -0.2, 0.35] {
        let spec = SynthSpec {
            lag_s: lag,
            n_participants: 1,
            ..SynthSpec::standard(1)
        };
        let (rec, truth) = gen_session(&spec, 0, Posture::Deg90)?;
        let cued = generate_label_schedule(&spec.schedule_for(Posture::Deg90))?;
        let (aligned, shift) = session_labels(&rec, &cued, &AlignSpec::default())?;
        let first = |t: &emgimu::model::LabelTrack| t.gesture_segments().next().map(|(_, _, s)| s.start_s).unwrap();
        println!(
            "true lag {lag:+.3} s  estimated {shift:+.4} s  first gesture cued {:.3} / aligned {:.3} / true {:.3}",
            first(&cued),
            first(&aligned),
            first(&truth)
        );
    }
    Ok(())
}
