//! Apply every audio perturbation to a synthetic two-tone signal and write
//! the results as WAV files.
//!
//!     cargo run --example audio_noise

mod support;

use vna::audio_noise::*;
use vna::config::{NoiseColor, ReverbStyle};

const SR: u32 = 16_000;

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn write_wav(path: &std::path::Path, buf: &PcmBuffer) {
    let spec = hound::WavSpec {
        channels: buf.num_channels() as u16,
        sample_rate: buf.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).expect("create wav");
    for s in buf.to_interleaved() {
        w.write_sample(s).expect("write sample");
    }
    w.finalize().expect("finalize wav");
}

fn main() {
    let out = support::scratch("audio_noise");
    // 3 s of a 220 Hz + 3 kHz mixture
    let clean: Vec<f32> = (0..3 * SR as usize)
        .map(|n| {
            let t = n as f64 / SR as f64;
            (0.4 * (2.0 * std::f64::consts::PI * 220.0 * t).sin() + 0.2 * (2.0 * std::f64::consts::PI * 3000.0 * t).sin()) as f32
        })
        .collect();
    let buf = PcmBuffer::mono(clean, SR);
    write_wav(&out.join("clean.wav"), &buf);

    // a looping hum standing in for a recorded background scene
    let hum = ScenarioAsset::new("hum", (0..SR as usize / 2).map(|n| (n as f64 * 0.02).sin() * 0.8).collect(), SR);

    // all noise goes into the middle second
    let (s, e) = (1.0, 2.0);
    let variants: Vec<(&str, PcmBuffer)> = vec![
        ("insulate", insulate(&buf, s, e, 0.8).unwrap()),
        ("mute", mute(&buf, s, e, 0.7).unwrap()),
        ("reverb_room", reverb(&buf, s, e, 0.5, ReverbStyle::Room, 1).unwrap()),
        ("reverb_hall", reverb(&buf, s, e, 0.5, ReverbStyle::Hall, 1).unwrap()),
        ("color_white", color_noise(&buf, s, e, 0.05, NoiseColor::White, 2).unwrap()),
        ("color_pink", color_noise(&buf, s, e, 0.05, NoiseColor::Pink, 2).unwrap()),
        ("color_brown", color_noise(&buf, s, e, 0.05, NoiseColor::Brown, 2).unwrap()),
        ("color_velvet", color_noise(&buf, s, e, 0.05, NoiseColor::Velvet, 2).unwrap()),
        ("bg_mix", mix_scenario(&buf, s, e, 0.2, &hum, ScenarioMode::Background, 3).unwrap()),
        ("sudden", mix_scenario(&buf, s, e, 0.6, &hum, ScenarioMode::Sudden, 3).unwrap()),
    ];

    let seg = SR as usize..2 * SR as usize;
    println!("{:<14} {:>10} {:>10}", "noise", "rms(seg)", "rms(rest)");
    println!("{:<14} {:>10.4} {:>10.4}", "clean", rms(&buf.channel(0)[seg.clone()]), rms(&buf.channel(0)[..SR as usize]));
    for (name, noisy) in &variants {
        println!(
            "{:<14} {:>10.4} {:>10.4}",
            name,
            rms(&noisy.channel(0)[seg.clone()]),
            rms(&noisy.channel(0)[..SR as usize])
        );
        write_wav(&out.join(format!("{name}.wav")), noisy);
    }

    let ir = make_reverb_ir(ReverbStyle::Hall, SR, 1);
    println!("hall impulse response: {} taps", ir.taps.len());
    println!("wrote WAV files to {}", out.display());
}
