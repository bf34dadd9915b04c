//! Filter responses and the effect of preprocessing on a noisy channel.
use std::f64::consts::PI;

use emgimu::dsp::{design_bandpass, design_notch, notch_filter, FilterSpec};

fn main() -> emgimu::Result<()> {
    let spec = FilterSpec::default();
    let rate = 2000.0;
    let band = design_bandpass(&spec, rate)?;
    let notch = design_notch(spec.notch_hz, spec.notch_q, rate)?;
    println!("freq Hz   band-pass dB   notch dB   (zero phase)");
    for f in [5.0, 10.0, 20.0, 50.0, 60.0, 100.0, 250.0, 500.0, 700.0, 900.0] {
        println!("{f:>7.0} {:>14.2} {:>10.2}", band.gain_db(f, rate, true), notch.gain_db(f, rate, true));
    }

    let x: Vec<f64> = (0..20_000)
        .map(|i| {
            let t = i as f64 / rate;
            (2.0 * PI * 120.0 * t).sin() + 0.8 * (2.0 * PI * 60.0 * t).sin()
        })
        .collect();
    let y = notch_filter(&x, rate, &spec)?;
    let power = |s: &[f64], f: f64| {
        let (c, q) = s[5000..15_000].iter().enumerate().fold((0.0, 0.0), |(c, q), (i, v)| {
            let p = 2.0 * PI * f * (i + 5000) as f64 / rate;
            (c + v * p.cos(), q + v * p.sin())
        });
        (c * c + q * q).sqrt() / 5000.0
    };
    println!(
        "60 Hz hum amplitude {:.3} -> {:.5}; 120 Hz tone {:.3} -> {:.3}",
        power(&x, 60.0),
        power(&y, 60.0),
        power(&x, 120.0),
        power(&y, 120.0)
    );
    Ok(())
}
