//! Apply each video perturbation to a synthetic clip and report how much of
//! every frame changed. Writes one PPM still per perturbation.
//!
//!     cargo run --example video_noise

mod support;

use vna::config::ColorAdjust;
use vna::media_io::synthetic_clip;
use vna::video_noise::*;

fn write_ppm(path: &std::path::Path, f: &Frame) {
    let mut bytes = format!("P6\n{} {}\n255\n", f.width(), f.height()).into_bytes();
    bytes.extend_from_slice(f.pixels());
    std::fs::write(path, bytes).expect("write ppm");
}

fn mean_abs_diff(a: &Frame, b: &Frame) -> f64 {
    let sum: u64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| x.abs_diff(*y) as u64).sum();
    sum as f64 / a.pixels().len() as f64
}

fn main() {
    let out = support::scratch("video_noise");
    let (clip, _) = synthetic_clip(2.0, 10.0, 160, 120, 16_000, 1, 7);
    // noise covers the second half: frames 10..20
    let (s, e) = (1.0, 2.0);
    let variants: Vec<(&str, FrameSeq)> = vec![
        ("occlude", occlude(&clip, s, e, 0.25, None).unwrap()),
        ("blank", blank(&clip, s, e, 0.8)),
        ("gblur", gaussian_blur(&clip, s, e, 0.3)),
        ("avg_blur", average_blur(&clip, s, e, 0.3)),
        ("add_gauss", additive_gaussian(&clip, s, e, 0.3, 1)),
        ("impulse", impulse(&clip, s, e, 0.5, 1)),
        ("contrast", color_adjust(&clip, s, e, ColorAdjust::Contrast, 0.9)),
        ("brightness", color_adjust(&clip, s, e, ColorAdjust::Brightness, 0.8)),
        ("saturation", color_adjust(&clip, s, e, ColorAdjust::Saturation, 0.0)),
        ("gamma", color_adjust(&clip, s, e, ColorAdjust::Gamma, 0.8)),
        ("invert", invert(&clip, s, e)),
        ("channel_swap", channel_swap(&clip, s, e, "BGR").unwrap()),
    ];
    write_ppm(&out.join("clean.ppm"), &clip.frames[15]);
    println!("{:<14} {:>12} {:>12}", "noise", "|Δ| frame 5", "|Δ| frame 15");
    for (name, noisy) in &variants {
        println!(
            "{:<14} {:>12.2} {:>12.2}",
            name,
            mean_abs_diff(&clip.frames[5], &noisy.frames[5]),
            mean_abs_diff(&clip.frames[15], &noisy.frames[15])
        );
        write_ppm(&out.join(format!("{name}.ppm")), &noisy.frames[15]);
    }
    println!("wrote stills to {}", out.display());
}
