//! Calibration noise, SNR and SMR for one synthetic participant.
use emgimu::model::Posture;
use emgimu::pipeline::{process_session, ProcessSpec};
use emgimu::synth::{gen_session, SynthSpec};

fn mean(v: &[f64]) -> f64 {
    let ok: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    ok.iter().sum::<f64>() / ok.len().max(1) as f64
}

fn main() -> emgimu::Result<()> {
    let spec = SynthSpec::standard(11);
    let (rec, labels) = gen_session(&spec, 0, Posture::Deg90)?;
    let sf = process_session(&rec, &labels, &ProcessSpec::default())?;
    if let Some(noise) = &sf.noise {
        for m in &noise.modalities {
            println!(
                "{:<6} noise {:.4} +/- {:.4} {} over {} sensors",
                format!("{:?}", m.modality),
                m.mean,
                m.std,
                m.unit,
                m.n_sensors
            );
        }
    }
    let q = &sf.quality;
    println!("SNR  EMG {:.2} dB   IMU {:.2} dB", mean(&q.snr_emg), mean(&q.snr_imu));
    println!("SMR  EMG {:.2} dB   IMU {:.2} dB   ({} pairs flagged)", mean(&q.smr_emg), mean(&q.smr_imu), q.smr_flagged);
    Ok(())
}
