//! Windowed features for one EMG channel and the full session matrix.
use emgimu::dsp::{preprocess_channel, FilterSpec, SmoothSpec};
use emgimu::features::{segment, window_features, SpectrumWorkspace, ThresholdSpec, WindowSpec};
use emgimu::model::{ChannelKind, Placement, Posture};
use emgimu::pipeline::{process_session, ProcessSpec};
use emgimu::synth::{gen_session, SynthSpec};

fn main() -> emgimu::Result<()> {
    let spec = SynthSpec::standard(3);
    let (rec, labels) = gen_session(&spec, 0, Posture::Deg90)?;
    let raw = rec.channel(Placement::F1, ChannelKind::Emg).unwrap();
    let ch = preprocess_channel(raw, &FilterSpec::default(), &SmoothSpec::default())?;
    let windows = segment(&ch, &labels, &WindowSpec::default())?;
    println!("F1 EMG: {} windows of {} samples", windows.len(), windows[0].samples.len());

    let w = &windows[40];
    let fv = window_features(w, &ThresholdSpec::default(), &mut SpectrumWorkspace::new())?;
    println!("gesture {} repetition {} window {}:", w.gesture, w.repetition, w.index);
    for (name, v) in fv.names.iter().zip(&fv.values) {
        println!("  {name:<6} {v:>12.5}");
    }

    let sf = process_session(&rec, &labels, &ProcessSpec::default())?;
    println!("session matrix: {} windows x {} features", sf.matrix.n_rows(), sf.matrix.n_cols());
    Ok(())
}
