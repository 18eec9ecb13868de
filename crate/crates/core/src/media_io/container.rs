//! Uncompressed audio/video container and the native codec protocol.
//!
//! `.vnar` files store raw streams exactly as they cross the decode/encode
//! pipes, which makes them the golden format for lossless round trips.
//!
//! ```text
//! offset  size  field
//! 0       8     magic b"VNARAW01"
//! 8       8     fps (f64)
//! 16      4     width (u32, 0 = no video)
//! 20      4     height (u32)
//! 24      8     frame count (u64)
//! 32      4     sample rate (u32, 0 = no audio)
//! 36      4     channels (u32)
//! 40      8     sample frames (u64)
//! 48      ..    audio: interleaved f32, sample_frames × channels
//! ..      ..    video: packed RGB24 frames, frame-major
//! ```
//! All integers and floats are little-endian.
//!
//! Any program that implements the three `codec` commands below over this
//! format (or any other) can serve as a native transcoder:
//!
//! * `codec probe PATH` prints [`MediaMeta`] JSON on stdout.
//! * `codec decode --stream video|audio PATH` writes raw RGB24 frames or
//!   interleaved f32le samples on stdout.
//! * `codec encode --out PATH [--width W --height H --fps F]
//!   [--audio RAW --sample-rate SR --channels C]` reads raw RGB24 frames on
//!   stdin until EOF.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::MediaMeta;
use crate::audio_noise::PcmBuffer;
use crate::video_noise::{Frame, FrameSeq};

pub const MAGIC: &[u8; 8] = b"VNARAW01";
pub const HEADER_LEN: usize = 48;
pub const EXTENSION: &str = "vnar";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub frames: u64,
    pub sample_rate: u32,
    pub channels: u32,
    pub sample_frames: u64,
}

impl Header {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..8].copy_from_slice(MAGIC);
        b[8..16].copy_from_slice(&self.fps.to_le_bytes());
        b[16..20].copy_from_slice(&self.width.to_le_bytes());
        b[20..24].copy_from_slice(&self.height.to_le_bytes());
        b[24..32].copy_from_slice(&self.frames.to_le_bytes());
        b[32..36].copy_from_slice(&self.sample_rate.to_le_bytes());
        b[36..40].copy_from_slice(&self.channels.to_le_bytes());
        b[40..48].copy_from_slice(&self.sample_frames.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_LEN]) -> io::Result<Self> {
        if &b[..8] != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a VNARAW01 file"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let h = Header {
            fps: f64::from_le_bytes(b[8..16].try_into().unwrap()),
            width: u32_at(16),
            height: u32_at(20),
            frames: u64_at(24),
            sample_rate: u32_at(32),
            channels: u32_at(36),
            sample_frames: u64_at(40),
        };
        if h.has_video() && !(h.fps > 0.0) {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "video stream without a frame rate"));
        }
        if h.has_audio() && h.channels == 0 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "audio stream without channels"));
        }
        if !h.has_video() && !h.has_audio() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "no streams"));
        }
        Ok(h)
    }

    pub fn has_video(&self) -> bool {
        self.width > 0 && self.height > 0
    }

    pub fn has_audio(&self) -> bool {
        self.sample_rate > 0
    }

    pub fn frame_bytes(&self) -> u64 {
        self.width as u64 * self.height as u64 * 3
    }

    fn audio_bytes(&self) -> u64 {
        self.sample_frames * self.channels as u64 * 4
    }

    pub fn meta(&self) -> MediaMeta {
        let video_s = if self.has_video() { self.frames as f64 / self.fps } else { 0.0 };
        let audio_s = if self.has_audio() {
            self.sample_frames as f64 / self.sample_rate as f64
        } else {
            0.0
        };
        MediaMeta {
            duration_s: video_s.max(audio_s),
            fps: self.has_video().then_some(self.fps),
            width: self.has_video().then_some(self.width),
            height: self.has_video().then_some(self.height),
            frame_count: self.has_video().then_some(self.frames),
            sample_rate: self.has_audio().then_some(self.sample_rate),
            channels: self.has_audio().then_some(self.channels as u16),
            sample_count: self.has_audio().then_some(self.sample_frames),
            container: EXTENSION.to_string(),
        }
    }
}

fn open(path: &Path) -> io::Result<(Header, BufReader<File>)> {
    let file = File::open(path)?;
    let size = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut hb = [0u8; HEADER_LEN];
    r.read_exact(&mut hb)?;
    let h = Header::decode(&hb)?;
    let expected = HEADER_LEN as u64 + h.audio_bytes() + h.frames * h.frame_bytes();
    if size != expected {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("size {size} does not match header ({expected})"),
        ));
    }
    Ok((h, r))
}

pub fn probe(path: &Path) -> io::Result<MediaMeta> {
    Ok(open(path)?.0.meta())
}

/// Copy one raw stream to `out`.
pub fn decode_stream(path: &Path, video: bool, out: &mut impl Write) -> io::Result<()> {
    let (h, mut r) = open(path)?;
    if video {
        r.seek(SeekFrom::Start(HEADER_LEN as u64 + h.audio_bytes()))?;
        io::copy(&mut r.take(h.frames * h.frame_bytes()), out)?;
    } else {
        io::copy(&mut r.take(h.audio_bytes()), out)?;
    }
    out.flush()
}

pub struct EncodeParams<'a> {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub audio: Option<(&'a Path, u32, u32)>,
}

/// Write a container from a raw audio file and a raw RGB24 frame stream.
pub fn encode(out_path: &Path, params: &EncodeParams<'_>, video_in: &mut impl Read) -> io::Result<()> {
    let mut header = Header {
        fps: params.fps,
        width: params.width,
        height: params.height,
        frames: 0,
        sample_rate: 0,
        channels: 0,
        sample_frames: 0,
    };
    let mut audio_raw = Vec::new();
    if let Some((path, sr, ch)) = params.audio {
        File::open(path)?.read_to_end(&mut audio_raw)?;
        let frame = 4 * ch as usize;
        if ch == 0 || audio_raw.len() % frame != 0 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "audio stream is not whole sample frames"));
        }
        header.sample_rate = sr;
        header.channels = ch;
        header.sample_frames = (audio_raw.len() / frame) as u64;
    }
    let mut w = BufWriter::new(File::create(out_path)?);
    w.write_all(&header.encode())?;
    w.write_all(&audio_raw)?;
    if header.has_video() {
        let mut buf = vec![0u8; header.frame_bytes() as usize];
        loop {
            match read_full(video_in, &mut buf)? {
                0 => break,
                n if n == buf.len() => {
                    w.write_all(&buf)?;
                    header.frames += 1;
                }
                n => {
                    return Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        format!("partial frame of {n} bytes on input"),
                    ))
                }
            }
        }
    }
    let mut file = w.into_inner().map_err(|e| e.into_error())?;
    file.seek(SeekFrom::Start(0))?;
    file.write_all(&header.encode())?;
    file.sync_all()
}

/// Fill `buf` unless EOF comes first; returns the number of bytes read.
pub(crate) fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Write in-memory streams straight to a container file.
pub fn write_clip(path: &Path, video: Option<&FrameSeq>, audio: Option<&PcmBuffer>) -> io::Result<()> {
    let dir = tempfile::tempdir()?;
    let raw = dir.path().join("audio.f32");
    let audio_params = match audio {
        Some(a) => {
            let bytes: Vec<u8> = a.to_interleaved().iter().flat_map(|s| s.to_le_bytes()).collect();
            std::fs::write(&raw, bytes)?;
            Some((raw.as_path(), a.sample_rate(), a.num_channels() as u32))
        }
        None => None,
    };
    let (width, height, fps) = match video.and_then(|v| v.frames.first().map(|f| (f, v.fps))) {
        Some((f, fps)) => (f.width(), f.height(), fps),
        None => (0, 0, 0.0),
    };
    let mut frames: Vec<u8> = Vec::new();
    if let Some(v) = video {
        for f in &v.frames {
            frames.extend_from_slice(f.pixels());
        }
    }
    encode(
        path,
        &EncodeParams {
            width,
            height,
            fps,
            audio: audio_params,
        },
        &mut frames.as_slice(),
    )
}

/// Read a container fully into memory.
pub fn read_clip(path: &Path) -> io::Result<(Option<FrameSeq>, Option<PcmBuffer>)> {
    let (h, mut r) = open(path)?;
    let mut audio = None;
    if h.has_audio() {
        let mut raw = vec![0u8; h.audio_bytes() as usize];
        r.read_exact(&mut raw)?;
        let samples: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        audio = Some(
            PcmBuffer::from_interleaved(&samples, h.channels as usize, h.sample_rate)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?,
        );
    }
    let mut video = None;
    if h.has_video() {
        let mut frames = Vec::with_capacity(h.frames as usize);
        for _ in 0..h.frames {
            let mut px = vec![0u8; h.frame_bytes() as usize];
            r.read_exact(&mut px)?;
            frames.push(Frame::new(h.width, h.height, px).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?);
        }
        video = Some(FrameSeq::new(frames, h.fps).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?);
    }
    Ok((video, audio))
}
