//! Shared plumbing for the examples: a scratch directory and a transcoder
//! that works without FFmpeg.
//!
//! The media pipeline talks to its transcoder as a subprocess. So that the
//! examples run on a bare machine, each example can answer the native
//! `codec` protocol itself; call [`serve_codec_if_requested`] first thing in
//! `main` and use [`transcoder`] to point the pipeline at the example's own
//! executable. Set `VNA_TRANSCODER` to use a real transcoder instead.

#![allow(dead_code)]

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use vna::media_io::{container, Transcoder, TRANSCODER_ENV};

/// When invoked as `<exe> codec …`, handle the request and exit.
pub fn serve_codec_if_requested() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) != Some("codec") {
        return;
    }
    if let Err(e) = codec(&args[1..]) {
        eprintln!("codec: {e}");
        std::process::exit(3);
    }
    std::process::exit(0);
}

fn flag<'a>(args: &'a [String], name: &str) -> Option<&'a str> {
    args.windows(2).find(|w| w[0] == name).map(|w| w[1].as_str())
}

fn num<T: std::str::FromStr + Default>(args: &[String], name: &str) -> T {
    flag(args, name).and_then(|v| v.parse().ok()).unwrap_or_default()
}

fn codec(args: &[String]) -> std::io::Result<()> {
    let path = || PathBuf::from(args.last().expect("path argument"));
    match args.first().map(String::as_str) {
        Some("probe") => {
            let meta = container::probe(&path())?;
            println!("{}", serde_json::to_string(&meta).expect("meta serializes"));
            Ok(())
        }
        Some("decode") => {
            let video = flag(args, "--stream") == Some("video");
            let mut out = BufWriter::new(std::io::stdout().lock());
            container::decode_stream(&path(), video, &mut out)?;
            out.flush()
        }
        Some("encode") => {
            let out = PathBuf::from(flag(args, "--out").expect("--out"));
            let audio = flag(args, "--audio").map(Path::new);
            let params = container::EncodeParams {
                width: num(args, "--width"),
                height: num(args, "--height"),
                fps: num(args, "--fps"),
                audio: audio.map(|p| (p, num(args, "--sample-rate"), num(args, "--channels"))),
            };
            container::encode(&out, &params, &mut std::io::stdin().lock())
        }
        other => Err(std::io::Error::other(format!("unknown codec command {other:?}"))),
    }
}

/// `$VNA_TRANSCODER` when set, otherwise this executable.
pub fn transcoder() -> Transcoder {
    match std::env::var_os(TRANSCODER_ENV) {
        Some(p) => Transcoder::from_program(p),
        None => Transcoder::native(std::env::current_exe().expect("own executable path")),
    }
}

/// A fresh directory under the system temp dir named after the example.
pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("vna-examples").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}
