//! External transcoder processes.
//!
//! The transcoder is the only process boundary in the media pipeline. Two
//! command protocols are understood: FFmpeg (`ffmpeg`/`ffprobe`) and the
//! native `codec` protocol described in [`super::container`].

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;

use serde::Deserialize;

use super::{MediaError, MediaMeta};

/// Environment variable naming the transcoder binary.
pub const TRANSCODER_ENV: &str = "VNA_TRANSCODER";
/// Optional override for the FFmpeg probe binary.
pub const FFPROBE_ENV: &str = "VNA_FFPROBE";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transcoder {
    Ffmpeg { ffmpeg: PathBuf, ffprobe: PathBuf },
    Native { program: PathBuf },
}

/// Output codec choice for re-encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputQuality {
    /// Widely compatible lossy codecs at high quality.
    #[default]
    Compatible,
    /// Lossless codecs, for golden comparisons.
    Lossless,
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file())
}

impl Transcoder {
    pub fn native(program: impl Into<PathBuf>) -> Self {
        Transcoder::Native { program: program.into() }
    }

    pub fn ffmpeg(ffmpeg: impl Into<PathBuf>) -> Self {
        let ffmpeg = ffmpeg.into();
        let ffprobe = std::env::var_os(FFPROBE_ENV).map(PathBuf::from).unwrap_or_else(|| {
            let sibling = ffmpeg.with_file_name("ffprobe");
            if sibling.is_file() {
                sibling
            } else {
                PathBuf::from("ffprobe")
            }
        });
        Transcoder::Ffmpeg { ffmpeg, ffprobe }
    }

    /// Pick a transcoder from a program path: anything whose file name
    /// starts with `ffmpeg` speaks the FFmpeg protocol, everything else the
    /// native one.
    pub fn from_program(program: impl Into<PathBuf>) -> Self {
        let program = program.into();
        let is_ffmpeg = program
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("ffmpeg"));
        if is_ffmpeg {
            Self::ffmpeg(program)
        } else {
            Self::native(program)
        }
    }

    /// `$VNA_TRANSCODER` if set, else `ffmpeg` from `PATH`.
    pub fn from_env() -> Result<Self, MediaError> {
        if let Some(p) = std::env::var_os(TRANSCODER_ENV) {
            let p = PathBuf::from(p);
            if !p.is_file() && find_on_path(&p.to_string_lossy()).is_none() {
                return Err(MediaError::TranscoderMissing(format!("{TRANSCODER_ENV}={} does not exist", p.display())));
            }
            return Ok(Self::from_program(p));
        }
        find_on_path("ffmpeg")
            .map(Self::ffmpeg)
            .ok_or_else(|| MediaError::TranscoderMissing(format!("ffmpeg not found on PATH and {TRANSCODER_ENV} unset")))
    }

    fn program(&self) -> &Path {
        match self {
            Transcoder::Ffmpeg { ffmpeg, .. } => ffmpeg,
            Transcoder::Native { program } => program,
        }
    }

    fn spawn(&self, mut cmd: Command, what: &str) -> Result<Child, MediaError> {
        cmd.spawn().map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                MediaError::TranscoderMissing(format!("{}: {e}", self.program().display()))
            } else {
                MediaError::PipeProtocol(format!("cannot start {what}: {e}"))
            }
        })
    }

    pub fn probe(&self, path: &Path) -> Result<MediaMeta, MediaError> {
        if !path.is_file() {
            return Err(MediaError::UnreadableMedia {
                path: path.to_path_buf(),
                reason: "no such file".into(),
            });
        }
        let cmd = self.probe_command(path);
        let output = self
            .spawn_with(cmd, "probe")?
            .wait_with_output()
            .map_err(|e| MediaError::PipeProtocol(e.to_string()))?;
        let unreadable = |reason: String| MediaError::UnreadableMedia {
            path: path.to_path_buf(),
            reason,
        };
        if !output.status.success() {
            return Err(unreadable(stderr_tail(&output.stderr)));
        }
        match self {
            Transcoder::Native { .. } => serde_json::from_slice(&output.stdout).map_err(|e| unreadable(e.to_string())),
            Transcoder::Ffmpeg { .. } => parse_ffprobe(&output.stdout).map_err(unreadable),
        }
    }

    fn spawn_with(&self, mut cmd: Command, what: &str) -> Result<Child, MediaError> {
        cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
        self.spawn(cmd, what)
    }

    pub fn probe_command(&self, path: &Path) -> Command {
        match self {
            Transcoder::Native { program } => {
                let mut c = Command::new(program);
                c.arg("codec").arg("probe").arg(path);
                c
            }
            Transcoder::Ffmpeg { ffprobe, .. } => {
                let mut c = Command::new(ffprobe);
                c.args(["-v", "error", "-print_format", "json", "-show_streams", "-show_format"]).arg(path);
                c
            }
        }
    }

    pub fn decode_command(&self, path: &Path, video: bool) -> Command {
        match self {
            Transcoder::Native { program } => {
                let mut c = Command::new(program);
                c.args(["codec", "decode", "--stream", if video { "video" } else { "audio" }]).arg(path);
                c
            }
            Transcoder::Ffmpeg { ffmpeg, .. } => {
                let mut c = Command::new(ffmpeg);
                c.args(["-nostdin", "-v", "error", "-i"]).arg(path);
                if video {
                    c.args(["-map", "0:v:0", "-f", "rawvideo", "-pix_fmt", "rgb24", "-"]);
                } else {
                    c.args(["-map", "0:a:0", "-f", "f32le", "-acodec", "pcm_f32le", "-"]);
                }
                c
            }
        }
    }

    /// Command that reads raw RGB24 frames on stdin (when `video` is given)
    /// and muxes them with a raw f32le audio file into `out`.
    pub fn encode_command(
        &self,
        out: &Path,
        video: Option<(u32, u32, f64)>,
        audio: Option<(&Path, u32, u16)>,
        quality: OutputQuality,
    ) -> Command {
        match self {
            Transcoder::Native { program } => {
                let mut c = Command::new(program);
                c.args(["codec", "encode", "--out"]).arg(out);
                if let Some((w, h, fps)) = video {
                    c.args(["--width", &w.to_string(), "--height", &h.to_string(), "--fps", &fps.to_string()]);
                }
                if let Some((path, sr, ch)) = audio {
                    c.arg("--audio").arg(path);
                    c.args(["--sample-rate", &sr.to_string(), "--channels", &ch.to_string()]);
                }
                c
            }
            Transcoder::Ffmpeg { ffmpeg, .. } => {
                let mut c = Command::new(ffmpeg);
                c.args(["-nostdin", "-v", "error", "-y"]);
                let mut inputs = 0;
                if let Some((w, h, fps)) = video {
                    c.args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-s", &format!("{w}x{h}"), "-r", &fps.to_string(), "-i", "-"]);
                    inputs += 1;
                }
                if let Some((path, sr, ch)) = audio {
                    c.args(["-f", "f32le", "-ar", &sr.to_string(), "-ac", &ch.to_string(), "-i"]).arg(path);
                    inputs += 1;
                }
                for i in 0..inputs {
                    c.args(["-map", &format!("{i}")]);
                }
                if video.is_some() {
                    match quality {
                        OutputQuality::Compatible => c.args(["-c:v", "libx264", "-crf", "18", "-pix_fmt", "yuv420p"]),
                        OutputQuality::Lossless => c.args(["-c:v", "ffv1"]),
                    };
                    c.args(["-vsync", "cfr"]);
                }
                if audio.is_some() {
                    match quality {
                        OutputQuality::Compatible => c.args(["-c:a", "aac", "-b:a", "192k"]),
                        OutputQuality::Lossless => c.args(["-c:a", "pcm_f32le"]),
                    };
                }
                c.arg(out);
                c
            }
        }
    }

    pub fn spawn_decoder(&self, path: &Path, video: bool) -> Result<Child, MediaError> {
        self.spawn_with(self.decode_command(path, video), "decoder")
    }

    pub fn spawn_encoder(
        &self,
        out: &Path,
        video: Option<(u32, u32, f64)>,
        audio: Option<(&Path, u32, u16)>,
        quality: OutputQuality,
    ) -> Result<Child, MediaError> {
        let mut cmd = self.encode_command(out, video, audio, quality);
        cmd.stdin(if video.is_some() { Stdio::piped() } else { Stdio::null() })
            .stdout(Stdio::null())
            .stderr(Stdio::piped());
        self.spawn(cmd, "encoder")
    }

    /// Decode a whole stream into memory.
    pub fn decode_all(&self, path: &Path, video: bool) -> Result<Vec<u8>, MediaError> {
        let child = self.spawn_decoder(path, video)?;
        let output = child.wait_with_output().map_err(|e| MediaError::PipeProtocol(e.to_string()))?;
        if !output.status.success() {
            return Err(MediaError::PipeProtocol(format!(
                "decoder exited with {}: {}",
                output.status,
                stderr_tail(&output.stderr)
            )));
        }
        Ok(output.stdout)
    }
}

/// Drain a child's stderr on a thread so pipes never block.
pub(crate) fn collect_stderr(child: &mut Child) -> Option<JoinHandle<Vec<u8>>> {
    child.stderr.take().map(|mut err| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = err.read_to_end(&mut buf);
            buf
        })
    })
}

/// Last few lines of a process's stderr.
pub fn stderr_tail(stderr: &[u8]) -> String {
    let text = String::from_utf8_lossy(stderr);
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(8)..].join("\n")
}

#[derive(Deserialize)]
struct ProbeOutput {
    #[serde(default)]
    streams: Vec<ProbeStream>,
    format: Option<ProbeFormat>,
}

#[derive(Deserialize)]
struct ProbeStream {
    codec_type: Option<String>,
    width: Option<u32>,
    height: Option<u32>,
    r_frame_rate: Option<String>,
    nb_frames: Option<String>,
    sample_rate: Option<String>,
    channels: Option<u16>,
    duration: Option<String>,
}

#[derive(Deserialize)]
struct ProbeFormat {
    duration: Option<String>,
    format_name: Option<String>,
}

fn parse_rate(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.parse().ok()?, d.parse().ok()?);
            (d != 0.0).then(|| n / d)
        }
        None => s.parse().ok(),
    }
}

pub(crate) fn parse_ffprobe(json: &[u8]) -> Result<MediaMeta, String> {
    let p: ProbeOutput = serde_json::from_slice(json).map_err(|e| e.to_string())?;
    let video = p.streams.iter().find(|s| s.codec_type.as_deref() == Some("video"));
    let audio = p.streams.iter().find(|s| s.codec_type.as_deref() == Some("audio"));
    if video.is_none() && audio.is_none() {
        return Err("no audio or video streams".into());
    }
    let duration = p
        .format
        .as_ref()
        .and_then(|f| f.duration.as_deref())
        .or_else(|| video.or(audio).and_then(|s| s.duration.as_deref()))
        .and_then(|d| d.parse::<f64>().ok())
        .ok_or("missing duration")?;
    let fps = video.and_then(|v| v.r_frame_rate.as_deref()).and_then(parse_rate);
    Ok(MediaMeta {
        duration_s: duration,
        fps,
        width: video.and_then(|v| v.width),
        height: video.and_then(|v| v.height),
        frame_count: video.and_then(|v| v.nb_frames.as_deref()).and_then(|n| n.parse().ok()),
        sample_rate: audio.and_then(|a| a.sample_rate.as_deref()).and_then(|r| r.parse().ok()),
        channels: audio.and_then(|a| a.channels),
        sample_count: None,
        container: p
            .format
            .and_then(|f| f.format_name)
            .unwrap_or_else(|| "unknown".into()),
    })
}
