//! Audio perturbations on PCM buffers.
//!
//! Every operation touches only the samples of its segment (start snapped
//! down, end snapped up to whole samples), preserves length, and clamps the
//! touched samples to `[-1, 1]`. Intensity 0 is an exact identity.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::{NoiseColor, ReverbStyle};
use crate::rng::{derive_indexed, SeededRng};

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("segment [{start_s}, {end_s}) outside buffer of {duration_s} s")]
    SegmentOutOfRange { start_s: f64, end_s: f64, duration_s: f64 },
    #[error("noise asset `{0}` not found")]
    AssetNotFound(String),
    #[error("cannot decode noise asset {path}: {reason}")]
    AssetDecode { path: PathBuf, reason: String },
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
}

/// Multi-channel float PCM.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmBuffer {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl PcmBuffer {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self, AudioError> {
        if channels.is_empty() {
            return Err(AudioError::InvalidBuffer("no channels".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidBuffer("sample rate is zero".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(AudioError::InvalidBuffer("channels differ in length".into()));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn silence(num_channels: usize, len: usize, sample_rate: u32) -> Self {
        Self::new(vec![vec![0.0; len]; num_channels.max(1)], sample_rate).expect("valid silence")
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self::new(vec![samples], sample_rate).expect("valid mono buffer")
    }

    pub fn from_interleaved(data: &[f32], num_channels: usize, sample_rate: u32) -> Result<Self, AudioError> {
        if num_channels == 0 || data.len() % num_channels != 0 {
            return Err(AudioError::InvalidBuffer(format!(
                "{} samples do not divide into {num_channels} channels",
                data.len()
            )));
        }
        let frames = data.len() / num_channels;
        let mut channels = vec![Vec::with_capacity(frames); num_channels];
        for frame in data.chunks_exact(num_channels) {
            for (c, &s) in frame.iter().enumerate() {
                channels[c].push(s);
            }
        }
        Self::new(channels, sample_rate)
    }

    pub fn to_interleaved(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.len() * self.num_channels());
        for n in 0..self.len() {
            for ch in &self.channels {
                out.push(ch[n]);
            }
        }
        out
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    /// Root-mean-square over all channels within a sample range.
    pub fn rms(&self, range: Range<usize>) -> f64 {
        let n = range.len() * self.num_channels();
        if n == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .channels
            .iter()
            .map(|ch| ch[range.clone()].iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>())
            .sum();
        (sum / n as f64).sqrt()
    }

    /// Sample range covered by `[start_s, end_s)`: floor for the start, ceil
    /// for the end.
    pub fn span(&self, start_s: f64, end_s: f64) -> Result<Range<usize>, AudioError> {
        let err = || AudioError::SegmentOutOfRange {
            start_s,
            end_s,
            duration_s: self.duration_s(),
        };
        if !(start_s >= 0.0) || !(end_s >= start_s) {
            return Err(err());
        }
        let sr = self.sample_rate as f64;
        let a = (start_s * sr + 1e-9).floor() as usize;
        let mut b = (end_s * sr - 1e-9).ceil() as usize;
        // container durations can overshoot the last sample by a tick
        if b == self.len() + 1 {
            b = self.len();
        }
        if b > self.len() || a > b {
            return Err(err());
        }
        Ok(a..b)
    }

    fn map_segment(&self, start_s: f64, end_s: f64, mut f: impl FnMut(usize, &[f32], &mut [f32])) -> Result<Self, AudioError> {
        let range = self.span(start_s, end_s)?;
        let mut out = self.clone();
        for (c, (src, dst)) in self.channels.iter().zip(out.channels.iter_mut()).enumerate() {
            f(c, src, &mut dst[range.clone()]);
            for s in &mut dst[range.clone()] {
                *s = s.clamp(-1.0, 1.0);
            }
        }
        Ok(out)
    }
}

/// Number of taps in the insulation low-pass.
pub const INSULATION_TAPS: usize = 255;

/// Cutoff frequency (Hz) of the insulation filter for an intensity.
pub fn insulation_cutoff_hz(intensity: f64) -> f64 {
    4000.0 - 3700.0 * intensity
}

/// Blackman-windowed sinc low-pass with unit DC gain. `cutoff` is a fraction
/// of the sample rate; at or above Nyquist the filter is a unit impulse.
pub fn lowpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    let mid = (taps / 2) as isize;
    if cutoff >= 0.5 {
        let mut h = vec![0.0; taps];
        h[mid as usize] = 1.0;
        return h;
    }
    let m = (taps - 1) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let k = (i as isize - mid) as f64;
            let sinc = if k == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * k).sin() / (std::f64::consts::PI * k)
            };
            let w = 0.42 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / m).cos()
                + 0.08 * (4.0 * std::f64::consts::PI * i as f64 / m).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Low-pass plus attenuation emulating sound heard through a wall.
pub fn insulate(buf: &PcmBuffer, start_s: f64, end_s: f64, intensity: f64) -> Result<PcmBuffer, AudioError> {
    let range = buf.span(start_s, end_s)?;
    let sr = buf.sample_rate() as f64;
    let h = lowpass_taps(insulation_cutoff_hz(intensity) / sr, INSULATION_TAPS);
    let half = (INSULATION_TAPS / 2) as isize;
    let gain = 1.0 - 0.5 * intensity;
    let a = range.start;
    buf.map_segment(start_s, end_s, |_, src, dst| {
        let len = src.len() as isize;
        for (j, d) in dst.iter_mut().enumerate() {
            let n = (a + j) as isize;
            let mut acc = 0.0f64;
            // zero-phase: centred taps, neighbouring samples outside the
            // segment are read as context but never written
            for (k, &hk) in h.iter().enumerate() {
                let idx = n + half - k as isize;
                if idx >= 0 && idx < len {
                    acc += hk * src[idx as usize] as f64;
                }
            }
            *d = (acc * gain) as f32;
        }
    })
}

pub fn mute(buf: &PcmBuffer, start_s: f64, end_s: f64, intensity: f64) -> Result<PcmBuffer, AudioError> {
    let scale = (1.0 - intensity) as f32;
    buf.map_segment(start_s, end_s, |_, _, dst| {
        for s in dst.iter_mut() {
            *s = if intensity >= 1.0 { 0.0 } else { *s * scale };
        }
    })
}

/// Synthetic FIR reverberation response.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub rt60_s: f64,
}

impl ReverbStyle {
    pub fn rt60_s(self) -> f64 {
        match self {
            ReverbStyle::Hall => 1.5,
            ReverbStyle::Room => 0.4,
        }
    }
}

/// Exponentially decaying seeded Gaussian noise, cut where the envelope
/// reaches -60 dB (one RT60) and normalized to unit energy.
pub fn make_reverb_ir(style: ReverbStyle, sample_rate: u32, seed: u64) -> ImpulseResponse {
    make_ir_with_rt60(style.rt60_s(), sample_rate, seed)
}

pub fn make_ir_with_rt60(rt60_s: f64, sample_rate: u32, seed: u64) -> ImpulseResponse {
    let fs = sample_rate as f64;
    let len = ((rt60_s * fs).round() as usize).max(1);
    let mut rng = SeededRng::new(seed);
    let mut taps: Vec<f64> = (0..len)
        .map(|n| rng.normal() * (-6.91 * n as f64 / (rt60_s * fs)).exp())
        .collect();
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let g = 1.0 / energy.sqrt();
    taps.iter_mut().for_each(|t| *t *= g);
    ImpulseResponse {
        taps,
        sample_rate,
        rt60_s,
    }
}

/// Impulse responses longer than this are applied with FFT overlap-add.
pub const DIRECT_CONVOLUTION_MAX_TAPS: usize = 4096;

/// Causal convolution truncated to the signal length.
pub fn convolve_truncated(signal: &[f64], ir: &[f64]) -> Vec<f64> {
    if ir.len() <= DIRECT_CONVOLUTION_MAX_TAPS {
        convolve_direct(signal, ir)
    } else {
        convolve_fft(signal, ir)
    }
}

fn convolve_direct(signal: &[f64], ir: &[f64]) -> Vec<f64> {
    (0..signal.len())
        .map(|n| {
            let kmax = ir.len().min(n + 1);
            (0..kmax).map(|k| ir[k] * signal[n - k]).sum()
        })
        .collect()
}

fn convolve_fft(signal: &[f64], ir: &[f64]) -> Vec<f64> {
    let n_out = signal.len();
    if n_out == 0 {
        return Vec::new();
    }
    let block = ir.len();
    let size = (block + ir.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut h: Vec<Complex<f64>> = ir.iter().map(|&v| Complex::new(v, 0.0)).collect();
    h.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut h);

    let mut out = vec![0.0; n_out];
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    let scale = 1.0 / size as f64;
    for offset in (0..n_out).step_by(block) {
        let chunk = &signal[offset..(offset + block).min(n_out)];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &x) in buf.iter_mut().zip(chunk) {
            b.re = x;
        }
        fwd.process(&mut buf);
        for (b, hv) in buf.iter_mut().zip(&h) {
            *b *= hv;
        }
        inv.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            let n = offset + i;
            if n >= n_out {
                break;
            }
            out[n] += b.re * scale;
        }
    }
    out
}

/// Wet/dry mix with a convolution reverb; the tail is cut at the segment end.
pub fn reverb(
    buf: &PcmBuffer,
    start_s: f64,
    end_s: f64,
    intensity: f64,
    style: ReverbStyle,
    seed: u64,
) -> Result<PcmBuffer, AudioError> {
    let ir = make_reverb_ir(style, buf.sample_rate(), seed);
    reverb_with_ir(buf, start_s, end_s, intensity, &ir)
}

pub fn reverb_with_ir(
    buf: &PcmBuffer,
    start_s: f64,
    end_s: f64,
    intensity: f64,
    ir: &ImpulseResponse,
) -> Result<PcmBuffer, AudioError> {
    if intensity == 0.0 {
        buf.span(start_s, end_s)?;
        return Ok(buf.clone());
    }
    buf.map_segment(start_s, end_s, |_, _, dst| {
        let dry: Vec<f64> = dst.iter().map(|&s| s as f64).collect();
        let wet = convolve_truncated(&dry, &ir.taps);
        for ((d, x), y) in dst.iter_mut().zip(&dry).zip(wet) {
            *d = ((1.0 - intensity) * x + intensity * y) as f32;
        }
    })
}

/// Impulses per second in velvet noise.
pub const VELVET_DENSITY: f64 = 2205.0;

/// Unit-RMS noise of the given color, `len` samples long.
pub fn synthesize_color(color: NoiseColor, len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let mut rng = SeededRng::new(seed);
    let mut noise = match color.beta() {
        None => velvet(&mut rng, len, sample_rate as f64),
        Some(beta) => shaped_gaussian(&mut rng, len, sample_rate as f64, beta),
    };
    let rms = (noise.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        noise.iter_mut().for_each(|v| *v /= rms);
    }
    noise
}

fn shaped_gaussian(rng: &mut SeededRng, len: usize, fs: f64, beta: f64) -> Vec<f64> {
    let mut spectrum: Vec<Complex<f64>> = (0..len).map(|_| Complex::new(rng.normal(), 0.0)).collect();
    if beta == 0.0 {
        return spectrum.into_iter().map(|c| c.re).collect();
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut spectrum);
    spectrum[0] = Complex::new(0.0, 0.0);
    for (k, c) in spectrum.iter_mut().enumerate().skip(1) {
        let bin = k.min(len - k) as f64;
        let f = bin * fs / len as f64;
        *c *= f.powf(-beta / 2.0);
    }
    planner.plan_fft_inverse(len).process(&mut spectrum);
    spectrum.into_iter().map(|c| c.re).collect()
}

fn velvet(rng: &mut SeededRng, len: usize, fs: f64) -> Vec<f64> {
    let period = fs / VELVET_DENSITY;
    let mut out = vec![0.0; len];
    let mut m = 0usize;
    loop {
        let cell = m as f64 * period;
        if cell >= len as f64 {
            break;
        }
        let pos = (cell + rng.uniform() * period).floor() as usize;
        let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
        if pos < len {
            out[pos] = sign;
        }
        m += 1;
    }
    out
}

/// Additive colored noise: `dry + intensity · n` with unit-RMS `n`,
/// independent per channel.
pub fn color_noise(
    buf: &PcmBuffer,
    start_s: f64,
    end_s: f64,
    intensity: f64,
    color: NoiseColor,
    seed: u64,
) -> Result<PcmBuffer, AudioError> {
    if intensity == 0.0 {
        buf.span(start_s, end_s)?;
        return Ok(buf.clone());
    }
    let sr = buf.sample_rate();
    buf.map_segment(start_s, end_s, |c, _, dst| {
        let noise = synthesize_color(color, dst.len(), sr, derive_indexed(seed, "channel", c as u64));
        for (d, n) in dst.iter_mut().zip(noise) {
            *d = (*d as f64 + intensity * n) as f32;
        }
    })
}

/// A decoded, mono, rate-matched scenario recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioAsset {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl ScenarioAsset {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            id: id.into(),
            samples,
            sample_rate,
        }
    }

    /// Linear-interpolation resampling.
    pub fn resampled(&self, target_rate: u32) -> ScenarioAsset {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return ScenarioAsset {
                sample_rate: target_rate,
                ..self.clone()
            };
        }
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let out_len = ((self.samples.len() as f64) / ratio).round().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let i0 = (pos.floor() as usize).min(last);
                let i1 = (i0 + 1).min(last);
                let t = pos - i0 as f64;
                self.samples[i0] * (1.0 - t) + self.samples[i1] * t
            })
            .collect();
        ScenarioAsset {
            id: self.id.clone(),
            samples,
            sample_rate: target_rate,
        }
    }

    fn unit_rms(&self) -> Vec<f64> {
        let rms = (self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len().max(1) as f64).sqrt();
        if rms == 0.0 {
            return vec![0.0; self.samples.len()];
        }
        self.samples.iter().map(|v| v / rms).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    /// Looped or truncated to fill the whole segment.
    Background,
    /// One occurrence at a seeded offset inside the segment.
    Sudden,
}

pub fn mix_scenario(
    buf: &PcmBuffer,
    start_s: f64,
    end_s: f64,
    intensity: f64,
    asset: &ScenarioAsset,
    mode: ScenarioMode,
    seed: u64,
) -> Result<PcmBuffer, AudioError> {
    if intensity == 0.0 || asset.samples.is_empty() {
        buf.span(start_s, end_s)?;
        return Ok(buf.clone());
    }
    let asset = asset.resampled(buf.sample_rate());
    let noise = asset.unit_rms();
    let seg_len = buf.span(start_s, end_s)?.len();
    let offset = match mode {
        ScenarioMode::Background => 0,
        ScenarioMode::Sudden if noise.len() >= seg_len => 0,
        ScenarioMode::Sudden => SeededRng::new(seed).below((seg_len - noise.len() + 1) as u64) as usize,
    };
    buf.map_segment(start_s, end_s, |_, _, dst| {
        for (j, d) in dst.iter_mut().enumerate() {
            let v = match mode {
                ScenarioMode::Background => noise[j % noise.len()],
                ScenarioMode::Sudden => match j.checked_sub(offset) {
                    Some(k) if k < noise.len() => noise[k],
                    _ => continue,
                },
            };
            *d = (*d as f64 + intensity * v) as f32;
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub license: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct AssetManifest {
    assets: BTreeMap<String, AssetEntry>,
}

/// Scenario recordings indexed by id. The manifest is JSON:
/// `{"assets": {"park": {"path": "park.wav", "license": "CC0"}}}` with paths
/// relative to the manifest's directory. Only WAV files are decoded.
#[derive(Debug, Clone, Default)]
pub struct AssetLibrary {
    root: PathBuf,
    entries: BTreeMap<String, AssetEntry>,
    preloaded: BTreeMap<String, Arc<ScenarioAsset>>,
}

impl AssetLibrary {
    pub fn open(manifest: &Path) -> Result<Self, AudioError> {
        let text = std::fs::read_to_string(manifest).map_err(|e| AudioError::AssetDecode {
            path: manifest.to_path_buf(),
            reason: e.to_string(),
        })?;
        let parsed: AssetManifest = serde_json::from_str(&text).map_err(|e| AudioError::AssetDecode {
            path: manifest.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            root: manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries: parsed.assets,
            preloaded: BTreeMap::new(),
        })
    }

    /// Register an in-memory asset under an id.
    pub fn insert(&mut self, asset: ScenarioAsset) {
        self.preloaded.insert(asset.id.clone(), Arc::new(asset));
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().chain(self.preloaded.keys()).cloned().collect()
    }

    pub fn load(&self, id: &str, target_rate: u32) -> Result<ScenarioAsset, AudioError> {
        if let Some(a) = self.preloaded.get(id) {
            return Ok(a.resampled(target_rate));
        }
        let entry = self.entries.get(id).ok_or_else(|| AudioError::AssetNotFound(id.to_string()))?;
        let path = self.root.join(&entry.path);
        if !path.exists() {
            return Err(AudioError::AssetNotFound(id.to_string()));
        }
        Ok(decode_wav(id, &path)?.resampled(target_rate))
    }
}

/// Decode a WAV file and mix it down to mono.
pub fn decode_wav(id: &str, path: &Path) -> Result<ScenarioAsset, AudioError> {
    let decode_err = |reason: String| AudioError::AssetDecode {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| decode_err(e.to_string()))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| decode_err(e.to_string()))?,
        hound::SampleFormat::Int => {
            let full_scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<Result<_, _>>()
                .map_err(|e| decode_err(e.to_string()))?
        }
    };
    let ch = spec.channels.max(1) as usize;
    let samples = interleaved
        .chunks_exact(ch)
        .map(|frame| frame.iter().sum::<f64>() / ch as f64)
        .collect();
    Ok(ScenarioAsset::new(id, samples, spec.sample_rate))
}
