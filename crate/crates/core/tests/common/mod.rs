//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use vna::feature_noise::{write_features, FeatureSeq};
use vna::media_io::{container, synthetic_clip, Transcoder};

/// The `vna` binary built alongside the tests, used as the native transcoder.
pub fn native_transcoder() -> Transcoder {
    Transcoder::native(env!("CARGO_BIN_EXE_vna"))
}

pub fn vna_bin() -> &'static str {
    env!("CARGO_BIN_EXE_vna")
}

/// Write a synthetic audio+video clip as a native container.
pub fn write_synthetic(path: &Path, duration_s: f64, fps: f64, width: u32, height: u32, seed: u64) {
    let (video, audio) = synthetic_clip(duration_s, fps, width, height, 16_000, 1, seed);
    container::write_clip(path, Some(&video), Some(&audio)).expect("write synthetic clip");
}

/// Welch power spectrum estimate with a periodic Hann window and 50%
/// overlap. Returns `(frequency_hz, power)` per bin, DC excluded.
pub fn welch(x: &[f64], fs: f64, segment: usize) -> Vec<(f64, f64)> {
    let hop = segment / 2;
    let window: Vec<f64> = (0..segment)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / segment as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment);
    let mut acc = vec![0.0; segment / 2 + 1];
    let mut count = 0;
    let mut start = 0;
    while start + segment <= x.len() {
        let mut buf: Vec<Complex<f64>> = x[start..start + segment]
            .iter()
            .zip(&window)
            .map(|(v, w)| Complex::new(v * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    acc.iter()
        .enumerate()
        .skip(1)
        .map(|(k, p)| (k as f64 * fs / segment as f64, p / count as f64))
        .collect()
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Spectral slope in dB per decade over `[lo, hi]` Hz.
pub fn spectral_slope_db_per_decade(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = welch(x, fs, 4096)
        .into_iter()
        .filter(|(f, _)| *f >= lo && *f <= hi)
        .map(|(f, p)| (f.log10(), 10.0 * p.log10()))
        .collect();
    ls_slope(&pts)
}

/// Reverberation time from a least-squares fit of the log energy envelope
/// measured in 10 ms windows.
pub fn fit_rt60(taps: &[f64], fs: f64) -> f64 {
    let win = (0.01 * fs) as usize;
    let pts: Vec<(f64, f64)> = taps
        .chunks_exact(win)
        .enumerate()
        .map(|(i, c)| {
            let e: f64 = c.iter().map(|v| v * v).sum::<f64>() / win as f64;
            ((i as f64 + 0.5) * win as f64 / fs, 10.0 * e.log10())
        })
        .collect();
    -60.0 / ls_slope(&pts)
}

/// Textbook causal convolution, truncated to the signal length.
pub fn direct_convolution(signal: &[f64], ir: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; signal.len()];
    for (n, &s) in signal.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (k, &h) in ir.iter().enumerate() {
            if n + k >= out.len() {
                break;
            }
            out[n + k] += s * h;
        }
    }
    out
}

/// Response of a normalized 2-D Gaussian kernel (square support of radius
/// `ceil(3σ)`) to a single bright pixel at `(cx, cy)`.
pub fn gaussian_delta_response(w: usize, h: usize, cx: usize, cy: usize, sigma: f64, amplitude: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::new();
    let mut sum = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            kernel.push((dx, dy, v));
            sum += v;
        }
    }
    let mut out = vec![0.0; w * h];
    for (dx, dy, v) in kernel {
        let x = cx as isize + dx;
        let y = cy as isize + dy;
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            out[y as usize * w + x as usize] = amplitude * v / sum;
        }
    }
    out
}

/// A feature file of `t` timesteps × `d` dims whose values are all nonzero.
pub fn write_feature_clip(path: &Path, t: usize, d: usize, modality: &str, offset: f32) -> PathBuf {
    let values: Vec<f32> = (0..t * d).map(|i| offset + 1.0 + (i % 97) as f32).collect();
    let fs = FeatureSeq::new(values, t, d, modality).expect("feature shape");
    write_features(path, &fs, None).expect("write features");
    path.to_path_buf()
}
