//! Visual perturbations on packed 8-bit RGB frames.
//!
//! Each operation is a per-frame transform applied to the frames whose start
//! time falls inside `[start_s, end_s)`. Stochastic operations draw from a
//! stream keyed by `(item seed, frame index)`, so frames can be processed in
//! any order or in parallel with identical output. Intermediate math is done
//! in floating point and stored with round-half-up.

use std::ops::Range;

use rayon::prelude::*;

use crate::config::{ColorAdjust, NoiseKind, Rect, ResolvedItem};
use crate::rng::{derive_indexed, SeededRng};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VideoError {
    #[error("box {rect:?} exceeds {width}x{height} frame")]
    BoxOutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("`{0}` is not a permutation of R, G, B")]
    BadPermutation(String),
    #[error("invalid frame data: {0}")]
    InvalidFrame(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, VideoError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(VideoError::InvalidFrame(format!(
                "{}x{} frame needs {expected} bytes, got {}",
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn byte_len(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rec.601 luma averaged over the frame.
    pub fn mean_luma(&self) -> f64 {
        let n = (self.width as usize * self.height as usize).max(1);
        self.pixels.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeq {
    pub frames: Vec<Frame>,
    pub fps: f64,
}

impl FrameSeq {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self, VideoError> {
        if !(fps > 0.0) {
            return Err(VideoError::InvalidFrame(format!("fps must be positive, got {fps}")));
        }
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| f.width != first.width || f.height != first.height) {
                return Err(VideoError::InvalidFrame("frames differ in size".into()));
            }
        }
        Ok(Self { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn span(&self, start_s: f64, end_s: f64) -> Range<usize> {
        frame_span(start_s, end_s, self.fps, self.frames.len())
    }
}

/// Frames whose timestamp `i / fps` lies in `[start_s, end_s)`.
pub fn frame_span(start_s: f64, end_s: f64, fps: f64, count: usize) -> Range<usize> {
    let first_at_or_after = |t: f64| -> usize {
        if t <= 0.0 {
            return 0;
        }
        let mut i = (t * fps).ceil().max(0.0) as usize;
        while i > 0 && (i - 1) as f64 / fps >= t {
            i -= 1;
        }
        while (i as f64) / fps < t {
            i += 1;
        }
        i
    };
    let a = first_at_or_after(start_s).min(count);
    let b = first_at_or_after(end_s).min(count);
    a..b.max(a)
}

#[inline]
fn store(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Mirror an index into `[0, n)` without repeating the edge sample.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Separable convolution with a symmetric odd-length kernel, reflect padding.
fn convolve_separable(frame: &Frame, kernel: &[f64]) -> Frame {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f64; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = reflect(x as isize + k as isize - r, w);
                    acc += kv * frame.pixels[(y * w + sx) * 3 + c] as f64;
                }
                tmp[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sy = reflect(y as isize + k as isize - r, h);
                    acc += kv * tmp[(sy * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = store(acc);
            }
        }
    }
    Frame {
        width: frame.width,
        height: frame.height,
        pixels: out,
    }
}

/// Blur sigma in pixels for an intensity.
pub fn gaussian_sigma(intensity: f64) -> f64 {
    10.0 * intensity
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Side of the box-blur kernel for an intensity: `2·round(5·intensity)+1`.
pub fn box_size(intensity: f64) -> usize {
    2 * (5.0 * intensity).round() as usize + 1
}

/// Pixel noise standard deviation in gray levels.
pub fn additive_sigma(intensity: f64) -> f64 {
    51.0 * intensity
}

/// Probability that a pixel is hit by impulse noise: `strength / 1000` with
/// `strength = 100 · intensity`.
pub fn impulse_probability(intensity: f64) -> f64 {
    100.0 * intensity / 1000.0
}

/// Centered box with `intensity` of the frame area and the frame's aspect.
pub fn auto_box(width: u32, height: u32, intensity: f64) -> Rect {
    let s = intensity.clamp(0.0, 1.0).sqrt();
    let w = ((width as f64 * s).round() as u32).min(width);
    let h = ((height as f64 * s).round() as u32).min(height);
    Rect {
        x: (width - w) / 2,
        y: (height - h) / 2,
        w,
        h,
    }
}

/// A fully parameterized per-frame transform.
#[derive(Debug, Clone, PartialEq)]
pub enum VideoOp {
    Identity,
    Occlude(Option<Rect>, f64),
    Blank(f64),
    GaussianBlur { sigma: f64 },
    AverageBlur { size: usize },
    AdditiveGaussian { sigma: f64, seed: u64 },
    Impulse { probability: f64, seed: u64 },
    Adjust(ColorAdjust, f64),
    Invert,
    ChannelSwap([usize; 3]),
}

impl VideoOp {
    /// Build the transform for a resolved video item. Non-video kinds map to
    /// the identity. Inversion and channel swap are on/off: any nonzero
    /// intensity applies them.
    pub fn from_item(item: &ResolvedItem) -> VideoOp {
        let i = item.intensity;
        if i == item.kind.identity_intensity() {
            return VideoOp::Identity;
        }
        match item.kind {
            NoiseKind::Occlude => VideoOp::Occlude(item.region, i),
            NoiseKind::Blank => VideoOp::Blank(i),
            NoiseKind::GaussianBlur => VideoOp::GaussianBlur { sigma: gaussian_sigma(i) },
            NoiseKind::AverageBlur => VideoOp::AverageBlur { size: box_size(i) },
            NoiseKind::AdditiveGaussian => VideoOp::AdditiveGaussian {
                sigma: additive_sigma(i),
                seed: item.seed,
            },
            NoiseKind::Impulse => VideoOp::Impulse {
                probability: impulse_probability(i),
                seed: item.seed,
            },
            NoiseKind::Adjust(kind) => VideoOp::Adjust(kind, i),
            NoiseKind::Invert => VideoOp::Invert,
            NoiseKind::ChannelSwap => VideoOp::ChannelSwap(item.channel_order.unwrap_or([2, 1, 0])),
            _ => VideoOp::Identity,
        }
    }

    /// Transform one frame. `frame_index` is the absolute index in the
    /// stream and keys the random stream of stochastic operations.
    pub fn apply(&self, frame: &Frame, frame_index: u64) -> Result<Frame, VideoError> {
        let mut out = frame.clone();
        match *self {
            VideoOp::Identity => {}
            VideoOp::Occlude(region, intensity) => {
                let rect = match region {
                    Some(r) => r,
                    None => auto_box(frame.width, frame.height, intensity),
                };
                fill_black(&mut out, rect)?;
            }
            VideoOp::Blank(intensity) => {
                let keep = 1.0 - intensity;
                for p in &mut out.pixels {
                    *p = if intensity >= 1.0 { 0 } else { store(*p as f64 * keep) };
                }
            }
            VideoOp::GaussianBlur { sigma } => {
                if sigma > 0.0 {
                    out = convolve_separable(frame, &gaussian_kernel(sigma));
                }
            }
            VideoOp::AverageBlur { size } => {
                if size > 1 {
                    out = convolve_separable(frame, &vec![1.0 / size as f64; size]);
                }
            }
            VideoOp::AdditiveGaussian { sigma, seed } => {
                let mut rng = SeededRng::new(derive_indexed(seed, "frame", frame_index));
                for p in &mut out.pixels {
                    *p = store(*p as f64 + sigma * rng.normal());
                }
            }
            VideoOp::Impulse { probability, seed } => {
                let mut rng = SeededRng::new(derive_indexed(seed, "frame", frame_index));
                for px in out.pixels.chunks_exact_mut(3) {
                    if rng.bernoulli(probability) {
                        let v = if rng.next_u64() & 1 == 0 { 0 } else { 255 };
                        px.fill(v);
                    }
                }
            }
            VideoOp::Adjust(kind, intensity) => adjust(&mut out, kind, intensity),
            VideoOp::Invert => out.pixels.iter_mut().for_each(|p| *p = 255 - *p),
            VideoOp::ChannelSwap(order) => {
                for px in out.pixels.chunks_exact_mut(3) {
                    let src = [px[0], px[1], px[2]];
                    for (slot, &from) in order.iter().enumerate() {
                        px[slot] = src[from];
                    }
                }
            }
        }
        Ok(out)
    }
}

fn fill_black(frame: &mut Frame, rect: Rect) -> Result<(), VideoError> {
    if rect.x as u64 + rect.w as u64 > frame.width as u64 || rect.y as u64 + rect.h as u64 > frame.height as u64 {
        return Err(VideoError::BoxOutOfBounds {
            rect,
            width: frame.width,
            height: frame.height,
        });
    }
    let w = frame.width as usize;
    for y in rect.y..rect.y + rect.h {
        let row = (y as usize * w + rect.x as usize) * 3;
        frame.pixels[row..row + rect.w as usize * 3].fill(0);
    }
    Ok(())
}

/// Factor for contrast and saturation: `1 + (intensity - 0.5)·2`.
pub fn adjust_factor(intensity: f64) -> f64 {
    1.0 + (intensity - 0.5) * 2.0
}

pub fn brightness_offset(intensity: f64) -> f64 {
    (intensity - 0.5) * 255.0
}

pub fn gamma_exponent(intensity: f64) -> f64 {
    4f64.powf(intensity - 0.5)
}

fn adjust(frame: &mut Frame, kind: ColorAdjust, intensity: f64) {
    match kind {
        ColorAdjust::Contrast => {
            let f = adjust_factor(intensity);
            frame.pixels.iter_mut().for_each(|p| *p = store(128.0 + f * (*p as f64 - 128.0)));
        }
        ColorAdjust::Brightness => {
            let off = brightness_offset(intensity);
            frame.pixels.iter_mut().for_each(|p| *p = store(*p as f64 + off));
        }
        ColorAdjust::Saturation => {
            let f = adjust_factor(intensity);
            for px in frame.pixels.chunks_exact_mut(3) {
                let y = luma(px[0], px[1], px[2]);
                for v in px.iter_mut() {
                    *v = store(y + f * (*v as f64 - y));
                }
            }
        }
        ColorAdjust::Gamma => {
            let g = gamma_exponent(intensity);
            let lut: Vec<u8> = (0..=255u32).map(|v| store(255.0 * (v as f64 / 255.0).powf(g))).collect();
            frame.pixels.iter_mut().for_each(|p| *p = lut[*p as usize]);
        }
    }
}

/// Apply an operation to the in-segment frames of a sequence.
pub fn apply_to_seq(seq: &FrameSeq, start_s: f64, end_s: f64, op: &VideoOp) -> Result<FrameSeq, VideoError> {
    let range = seq.span(start_s, end_s);
    let frames = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            if range.contains(&i) {
                op.apply(f, i as u64)
            } else {
                Ok(f.clone())
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSeq { frames, fps: seq.fps })
}

pub fn occlude(seq: &FrameSeq, start_s: f64, end_s: f64, intensity: f64, region: Option<Rect>) -> Result<FrameSeq, VideoError> {
    if intensity == 0.0 {
        return Ok(seq.clone());
    }
    apply_to_seq(seq, start_s, end_s, &VideoOp::Occlude(region, intensity))
}

pub fn blank(seq: &FrameSeq, start_s: f64, end_s: f64, intensity: f64) -> FrameSeq {
    infallible(apply_to_seq(seq, start_s, end_s, &VideoOp::Blank(intensity)))
}

pub fn gaussian_blur(seq: &FrameSeq, start_s: f64, end_s: f64, intensity: f64) -> FrameSeq {
    let op = VideoOp::GaussianBlur {
        sigma: gaussian_sigma(intensity),
    };
    infallible(apply_to_seq(seq, start_s, end_s, &op))
}

pub fn average_blur(seq: &FrameSeq, start_s: f64, end_s: f64, intensity: f64) -> FrameSeq {
    let op = VideoOp::AverageBlur {
        size: box_size(intensity),
    };
    infallible(apply_to_seq(seq, start_s, end_s, &op))
}

pub fn additive_gaussian(seq: &FrameSeq, start_s: f64, end_s: f64, intensity: f64, seed: u64) -> FrameSeq {
    let op = VideoOp::AdditiveGaussian {
        sigma: additive_sigma(intensity),
        seed,
    };
    infallible(apply_to_seq(seq, start_s, end_s, &op))
}

pub fn impulse(seq: &FrameSeq, start_s: f64, end_s: f64, intensity: f64, seed: u64) -> FrameSeq {
    let op = VideoOp::Impulse {
        probability: impulse_probability(intensity),
        seed,
    };
    infallible(apply_to_seq(seq, start_s, end_s, &op))
}

pub fn color_adjust(seq: &FrameSeq, start_s: f64, end_s: f64, kind: ColorAdjust, intensity: f64) -> FrameSeq {
    if intensity == 0.5 {
        return seq.clone();
    }
    infallible(apply_to_seq(seq, start_s, end_s, &VideoOp::Adjust(kind, intensity)))
}

pub fn invert(seq: &FrameSeq, start_s: f64, end_s: f64) -> FrameSeq {
    infallible(apply_to_seq(seq, start_s, end_s, &VideoOp::Invert))
}

/// Permute channels, e.g. `order = "BGR"`.
pub fn channel_swap(seq: &FrameSeq, start_s: f64, end_s: f64, order: &str) -> Result<FrameSeq, VideoError> {
    let order = crate::config::parse_channel_order(order).ok_or_else(|| VideoError::BadPermutation(order.to_string()))?;
    apply_to_seq(seq, start_s, end_s, &VideoOp::ChannelSwap(order))
}

fn infallible(r: Result<FrameSeq, VideoError>) -> FrameSeq {
    r.expect("operation cannot fail on a valid sequence")
}
