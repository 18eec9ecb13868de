//! Decode → noise → encode orchestration around an external transcoder.
//!
//! Video is streamed through a three-stage pipeline (decoder reader, noise
//! stage, encoder writer) joined by bounded queues, so memory stays flat for
//! any clip length. Audio is small by comparison and is decoded whole,
//! noised, and handed to the encoder as a raw `f32le` side file.

pub mod container;
pub mod transcoder;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use transcoder::{OutputQuality, Transcoder, TRANSCODER_ENV};

use crate::audio_noise::PcmBuffer;
use crate::config::{ConfigError, Modality, NoiseSpec, ValidatedSpec};
use crate::engine::{self, EngineError, NoiseContext, VideoPlan};
use crate::feature_noise;
use crate::rng::SeededRng;
use crate::text_noise::Transcript;
use crate::video_noise::{Frame, FrameSeq};

/// What a probe reports about a media file. Absent fields mean the stream
/// does not exist (or the transcoder could not tell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaMeta {
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<u64>,
    pub container: String,
}

impl MediaMeta {
    /// Metadata for an in-memory clip with both streams.
    pub fn audio_video(duration_s: f64, fps: f64, width: u32, height: u32, sample_rate: u32, channels: u16) -> Self {
        MediaMeta {
            duration_s,
            fps: Some(fps),
            width: Some(width),
            height: Some(height),
            frame_count: Some((duration_s * fps).round() as u64),
            sample_rate: Some(sample_rate),
            channels: Some(channels),
            sample_count: Some((duration_s * sample_rate as f64).round() as u64),
            container: "memory".into(),
        }
    }

    pub fn has_video(&self) -> bool {
        self.width.is_some() && self.height.is_some()
    }

    pub fn has_audio(&self) -> bool {
        self.sample_rate.is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("transcoder not available: {0}")]
    TranscoderMissing(String),
    #[error("cannot read media {path}: {reason}")]
    UnreadableMedia { path: PathBuf, reason: String },
    #[error("raw pipe protocol error: {0}")]
    PipeProtocol(String),
    #[error("encoding failed: {0}")]
    Encode(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Noise(#[from] EngineError),
    #[error("spec has text items but no transcript was supplied")]
    MissingTranscript,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MediaError {
    /// Process exit code: 2 for configuration problems, 3 for media
    /// problems, 4 when no transcoder can be found.
    pub fn exit_code(&self) -> i32 {
        match self {
            MediaError::Config(_) | MediaError::MissingTranscript => 2,
            MediaError::TranscoderMissing(_) => 4,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MediaError + '_ {
    move |source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A deterministic textured, moving test clip: every frame differs from its
/// neighbours and every pixel has texture, so blurs and filters visibly
/// change all of it.
pub fn synthetic_clip(
    duration_s: f64,
    fps: f64,
    width: u32,
    height: u32,
    sample_rate: u32,
    channels: u16,
    seed: u64,
) -> (FrameSeq, PcmBuffer) {
    let mut rng = SeededRng::new(seed);
    let (w, h) = (width as usize, height as usize);
    let texture: Vec<u8> = (0..w * h).map(|_| rng.below(96) as u8).collect();
    let n_frames = (duration_s * fps).round() as usize;
    let frames = (0..n_frames)
        .map(|i| {
            let mut px = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                for x in 0..w {
                    let t = texture[y * w + (x + 2 * i) % w] as usize;
                    px.push((40 + t + (x * 64) / w.max(1)) as u8);
                    px.push((40 + t + (y * 64) / h.max(1)) as u8);
                    px.push((40 + t + (i * 5) % 64) as u8);
                }
            }
            Frame::new(width, height, px).expect("sized by construction")
        })
        .collect();
    let n_samples = (duration_s * sample_rate as f64).round() as usize;
    let sr = sample_rate as f64;
    let chans = (0..channels as usize)
        .map(|c| {
            let phase = c as f64 * 0.7;
            (0..n_samples)
                .map(|n| {
                    let t = n as f64 / sr;
                    let tone = 0.2 * (std::f64::consts::TAU * 220.0 * t + phase).sin()
                        + 0.1 * (std::f64::consts::TAU * 1375.0 * t).sin();
                    (tone + 0.02 * (rng.uniform() * 2.0 - 1.0)) as f32
                })
                .collect()
        })
        .collect();
    let audio = PcmBuffer::new(chans, sample_rate).expect("equal channel lengths");
    (FrameSeq { frames, fps }, audio)
}

fn f32_samples(raw: &[u8]) -> Result<Vec<f32>, MediaError> {
    if raw.len() % 4 != 0 {
        return Err(MediaError::PipeProtocol(format!("audio stream of {} bytes is not whole f32 samples", raw.len())));
    }
    Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Decode the audio stream of a file fully.
pub fn decode_audio(t: &Transcoder, path: &Path, meta: &MediaMeta) -> Result<Option<PcmBuffer>, MediaError> {
    let (Some(sr), Some(ch)) = (meta.sample_rate, meta.channels) else {
        return Ok(None);
    };
    let samples = f32_samples(&t.decode_all(path, false)?)?;
    PcmBuffer::from_interleaved(&samples, ch as usize, sr)
        .map(Some)
        .map_err(|e| MediaError::PipeProtocol(e.to_string()))
}

/// Decode the video stream of a file fully (for short clips and previews).
pub fn decode_video(t: &Transcoder, path: &Path, meta: &MediaMeta) -> Result<Option<FrameSeq>, MediaError> {
    let (Some(w), Some(h)) = (meta.width, meta.height) else {
        return Ok(None);
    };
    let raw = t.decode_all(path, true)?;
    let frame_bytes = w as usize * h as usize * 3;
    if frame_bytes == 0 || raw.len() % frame_bytes != 0 {
        return Err(MediaError::PipeProtocol(format!(
            "video stream of {} bytes is not whole {w}x{h} frames",
            raw.len()
        )));
    }
    let frames = raw
        .chunks_exact(frame_bytes)
        .map(|c| Frame::new(w, h, c.to_vec()).map_err(|e| MediaError::PipeProtocol(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(FrameSeq {
        frames,
        fps: meta.fps.unwrap_or(25.0),
    }))
}

/// Probe and decode both streams.
pub fn decode_clip(t: &Transcoder, path: &Path) -> Result<(MediaMeta, Option<FrameSeq>, Option<PcmBuffer>), MediaError> {
    let meta = t.probe(path)?;
    let video = decode_video(t, path, &meta)?;
    let audio = decode_audio(t, path, &meta)?;
    Ok((meta, video, audio))
}

/// Per-run settings for [`inject`].
#[derive(Debug, Clone)]
pub struct InjectOptions {
    pub transcoder: Transcoder,
    pub quality: OutputQuality,
    /// Needed when the spec has text items; written next to the output.
    pub transcript: Option<Transcript>,
    /// Feature files to perturb with the spec's feature items.
    pub features: Vec<PathBuf>,
    pub context: NoiseContext,
    /// Frames in flight between pipeline stages.
    pub queue_depth: usize,
}

impl InjectOptions {
    pub fn new(transcoder: Transcoder) -> Self {
        InjectOptions {
            transcoder,
            quality: OutputQuality::default(),
            transcript: None,
            features: Vec::new(),
            context: NoiseContext::default(),
            queue_depth: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Applied,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedItem {
    pub index: usize,
    pub modality: Modality,
    pub kind: String,
    pub start_s: f64,
    pub end_s: f64,
    pub intensity: f64,
    /// The item's own derived seed.
    pub seed: u64,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub input: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub items: Vec<AppliedItem>,
    pub wall_time_s: f64,
    pub frames: u64,
    pub sample_frames: u64,
    /// SHA-256 of the raw RGB24 stream leaving the noise stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_sha256: Option<String>,
    /// SHA-256 of the raw f32le stream leaving the noise stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_sha256: Option<String>,
    /// Transcript and feature files written alongside the output.
    pub artifacts: Vec<PathBuf>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Probe `input` and validate `spec` against it.
pub fn prepare(t: &Transcoder, input: &Path, spec: &NoiseSpec) -> Result<(MediaMeta, ValidatedSpec), MediaError> {
    let meta = t.probe(input)?;
    let validated = crate::config::validate(spec, &meta)?;
    Ok((meta, validated))
}

/// File next to `output` named `<output stem>.<suffix>`.
pub fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.{suffix}"))
}

/// Decode `input`, apply every item of `spec`, and encode to `output`.
pub fn inject(input: &Path, output: &Path, spec: &ValidatedSpec, opts: &InjectOptions) -> Result<InjectionReport, MediaError> {
    let started = Instant::now();
    let t = &opts.transcoder;
    let meta = t.probe(input)?;
    if spec.items_for(Modality::Text).next().is_some() && opts.transcript.is_none() {
        return Err(MediaError::MissingTranscript);
    }

    let mut artifacts = Vec::new();
    let mut notes: Vec<(usize, String)> = Vec::new();

    // audio: whole-buffer noise, handed to the encoder as a raw side file
    let scratch = tempfile::tempdir().map_err(io_err(Path::new("tempdir")))?;
    let raw_audio = scratch.path().join("audio.f32");
    let mut audio_sha256 = None;
    let mut sample_frames = 0;
    let audio = match decode_audio(t, input, &meta)? {
        Some(buf) => {
            let noised = engine::apply_audio(&buf, spec, &opts.context)?;
            let bytes: Vec<u8> = noised.to_interleaved().iter().flat_map(|s| s.to_le_bytes()).collect();
            audio_sha256 = Some(hex(&Sha256::digest(&bytes)));
            std::fs::write(&raw_audio, &bytes).map_err(io_err(&raw_audio))?;
            sample_frames = noised.len() as u64;
            Some((raw_audio.as_path(), noised.sample_rate(), noised.num_channels() as u16))
        }
        None => {
            for item in spec.items_for(Modality::Audio) {
                notes.push((item.index, "input has no audio stream".into()));
            }
            None
        }
    };

    let video = match (meta.width, meta.height) {
        (Some(w), Some(h)) => Some((w, h, meta.fps.unwrap_or(25.0))),
        _ => {
            for item in spec.items_for(Modality::Video) {
                notes.push((item.index, "input has no video stream".into()));
            }
            None
        }
    };

    let mut encoder = t.spawn_encoder(output, video, audio, opts.quality)?;
    let enc_err = transcoder::collect_stderr(&mut encoder);
    let mut frames = 0;
    let mut video_sha256 = None;
    let mut pipeline_result = Ok(());
    if let Some((w, h, fps)) = video {
        let plan = VideoPlan::new(spec, fps, meta.frame_count.map(|n| n as usize));
        let stdin = encoder.stdin.take().expect("encoder stdin is piped");
        match stream_video(t, input, w, h, &plan, stdin, opts.queue_depth.max(1)) {
            Ok((n, digest)) => {
                frames = n;
                video_sha256 = Some(digest);
            }
            Err(e) => pipeline_result = Err(e),
        }
    }
    let status = encoder.wait().map_err(|e| MediaError::Encode(e.to_string()))?;
    let stderr = enc_err.and_then(|h| h.join().ok()).unwrap_or_default();
    pipeline_result?;
    if !status.success() {
        return Err(MediaError::Encode(format!(
            "encoder exited with {status}: {}",
            transcoder::stderr_tail(&stderr)
        )));
    }

    if let Some(tr) = &opts.transcript {
        let noised = engine::apply_text(tr, spec, &opts.context)?;
        let path = sidecar(output, "transcript.json");
        std::fs::write(&path, noised.to_json_pretty()).map_err(io_err(&path))?;
        artifacts.push(path);
    }

    let has_feature_items = spec.items_for(Modality::Feature).next().is_some();
    if has_feature_items && opts.features.is_empty() {
        for item in spec.items_for(Modality::Feature) {
            notes.push((item.index, "no feature files supplied".into()));
        }
    }
    for path in &opts.features {
        let fs = feature_noise::read_features(path).map_err(EngineError::from)?;
        let noised = engine::apply_features(&fs, spec)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let out = sidecar(output, &name);
        let provenance = serde_json::json!({ "source": path, "seed": spec.seed });
        feature_noise::write_features(&out, &noised, Some(provenance)).map_err(EngineError::from)?;
        artifacts.push(out);
    }

    let items = spec
        .items
        .iter()
        .map(|item| {
            let note = notes.iter().find(|(i, _)| *i == item.index).map(|(_, n)| n.clone());
            AppliedItem {
                index: item.index,
                modality: item.modality(),
                kind: item.kind.name().to_string(),
                start_s: item.start_s,
                end_s: item.end_s,
                intensity: item.intensity,
                seed: item.seed,
                status: if note.is_some() { ItemStatus::Skipped } else { ItemStatus::Applied },
                note,
            }
        })
        .collect();

    Ok(InjectionReport {
        input: input.to_path_buf(),
        output: output.to_path_buf(),
        seed: spec.seed,
        items,
        wall_time_s: started.elapsed().as_secs_f64(),
        frames,
        sample_frames,
        video_sha256,
        audio_sha256,
        artifacts,
    })
}

/// Validate `spec` against `input` and inject in one call.
pub fn inject_spec(input: &Path, output: &Path, spec: &NoiseSpec, opts: &InjectOptions) -> Result<InjectionReport, MediaError> {
    let (_, validated) = prepare(&opts.transcoder, input, spec)?;
    inject(input, output, &validated, opts)
}

type Batch = Vec<(usize, Frame)>;

/// Decoder → noise → encoder with bounded queues. Returns the frame count
/// and the digest of the raw stream sent to the encoder.
fn stream_video(
    t: &Transcoder,
    input: &Path,
    width: u32,
    height: u32,
    plan: &VideoPlan,
    mut sink: impl Write + Send,
    depth: usize,
) -> Result<(u64, String), MediaError> {
    let mut decoder = t.spawn_decoder(input, true)?;
    let dec_err = transcoder::collect_stderr(&mut decoder);
    let mut source = decoder.stdout.take().expect("decoder stdout is piped");
    let frame_bytes = width as usize * height as usize * 3;
    let batch = rayon::current_num_threads().max(1);

    let (raw_tx, raw_rx): (SyncSender<Batch>, Receiver<Batch>) = sync_channel(depth.div_ceil(batch).max(1));
    let (out_tx, out_rx): (SyncSender<Batch>, Receiver<Batch>) = sync_channel(depth.div_ceil(batch).max(1));

    let result = std::thread::scope(|s| {
        let reader = s.spawn(move || -> Result<(), MediaError> {
            let mut index = 0;
            loop {
                let mut chunk = Vec::with_capacity(batch);
                while chunk.len() < batch {
                    let mut buf = vec![0u8; frame_bytes];
                    let n = container::read_full(&mut source, &mut buf).map_err(|e| MediaError::PipeProtocol(e.to_string()))?;
                    if n == 0 {
                        break;
                    }
                    if n < frame_bytes {
                        return Err(MediaError::PipeProtocol(format!(
                            "decoder produced a partial frame ({n} of {frame_bytes} bytes) at frame {index}"
                        )));
                    }
                    let frame = Frame::new(width, height, buf).map_err(|e| MediaError::PipeProtocol(e.to_string()))?;
                    chunk.push((index, frame));
                    index += 1;
                }
                let done = chunk.len() < batch;
                if !chunk.is_empty() && raw_tx.send(chunk).is_err() {
                    return Ok(());
                }
                if done {
                    return Ok(());
                }
            }
        });

        let writer = s.spawn(move || -> Result<(u64, String), MediaError> {
            let mut hasher = Sha256::new();
            let mut count = 0u64;
            for chunk in out_rx {
                for (_, frame) in chunk {
                    hasher.update(frame.pixels());
                    sink.write_all(frame.pixels())
                        .map_err(|e| MediaError::PipeProtocol(format!("encoder stopped accepting frames: {e}")))?;
                    count += 1;
                }
            }
            sink.flush().map_err(|e| MediaError::PipeProtocol(e.to_string()))?;
            drop(sink);
            Ok((count, hex(&hasher.finalize())))
        });

        let mut noise_result = Ok(());
        for chunk in raw_rx {
            let noised: Result<Batch, _> = chunk
                .into_par_iter()
                .map(|(i, f)| plan.apply(f, i).map(|f| (i, f)))
                .collect();
            match noised {
                Ok(b) => {
                    if out_tx.send(b).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    noise_result = Err(MediaError::Noise(e.into()));
                    break;
                }
            }
        }
        drop(out_tx);
        let written = writer.join().expect("writer thread panicked");
        let read = reader.join().expect("reader thread panicked");
        noise_result?;
        read?;
        written
    });

    let status = decoder.wait().map_err(|e| MediaError::PipeProtocol(e.to_string()))?;
    let stderr = dec_err.and_then(|h| h.join().ok()).unwrap_or_default();
    if !status.success() {
        return Err(MediaError::PipeProtocol(format!(
            "decoder exited with {status}: {}",
            transcoder::stderr_tail(&stderr)
        )));
    }
    result
}

/// Read exactly the remaining bytes of a reader, for tests of the raw
/// protocol.
pub fn read_to_vec(mut r: impl Read) -> std::io::Result<Vec<u8>> {
    let mut v = Vec::new();
    r.read_to_end(&mut v)?;
    Ok(v)
}
