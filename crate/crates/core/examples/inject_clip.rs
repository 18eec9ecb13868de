//! End-to-end injection: write a synthetic clip, apply a multimodal spec
//! through the transcoder pipeline, and print the injection report.
//!
//!     cargo run --example inject_clip
//!
//! Uses this executable as its own native transcoder unless
//! `VNA_TRANSCODER` names another one (for instance an `ffmpeg` binary, in
//! which case change the file extensions to a container it understands).

mod support;

use vna::config::{Modality, NoiseItem, NoiseSpec};
use vna::media_io::{container, inject_spec, synthetic_clip, InjectOptions};
use vna::text_noise::{Transcript, Word};

fn main() {
    support::serve_codec_if_requested();
    let dir = support::scratch("inject_clip");
    let input = dir.join("clip.vnar");
    let (video, audio) = synthetic_clip(4.0, 25.0, 320, 240, 16_000, 1, 1);
    container::write_clip(&input, Some(&video), Some(&audio)).expect("write clip");

    let spec = NoiseSpec::new(42)
        .with_item(NoiseItem::new(Modality::Video, "gblur", 0.5, 2.0, 0.4))
        .with_item(NoiseItem::new(Modality::Video, "occlude", 2.0, 3.0, 0.25))
        .with_item(NoiseItem::new(Modality::Audio, "reverb_hall", 1.0, 3.5, 0.5))
        .with_item(NoiseItem::new(Modality::Audio, "color_pink", 0.0, 1.0, 0.05))
        .with_item(NoiseItem::new(Modality::Text, "replace", 1.0, 3.0, 1.0));
    std::fs::write(dir.join("spec.json"), spec.to_json_pretty()).unwrap();

    let mut opts = InjectOptions::new(support::transcoder());
    opts.transcript = Some(Transcript::new(
        "en",
        ["a", "quiet", "scene", "then", "a", "loud", "crash"]
            .iter()
            .enumerate()
            .map(|(i, w)| Word::timed(*w, i as f64 * 0.5, i as f64 * 0.5 + 0.4))
            .collect(),
    ));
    let output = dir.join("noisy.vnar");
    let report = inject_spec(&input, &output, &spec, &opts).expect("injection succeeds");
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    println!("noisy clip: {}", output.display());
}
