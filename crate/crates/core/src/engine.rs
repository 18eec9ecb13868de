//! Routes the items of a validated spec to the modality operations, in
//! composition order.

use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::audio_noise::{self, AssetLibrary, AudioError, PcmBuffer, ScenarioMode};
use crate::config::{Modality, NoiseKind, ResolvedItem, SpanUnit, ValidatedSpec};
use crate::feature_noise::{self, FeatureError, FeatureSeq};
use crate::text_noise::{self, TextError, Transcript};
use crate::video_noise::{frame_span, Frame, FrameSeq, VideoError, VideoOp};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Resources some items need beyond the carrier itself.
#[derive(Debug, Clone, Default)]
pub struct NoiseContext {
    pub assets: Option<AssetLibrary>,
    /// Directory that relative `asr_variant` paths resolve against.
    pub base_dir: Option<PathBuf>,
}

impl NoiseContext {
    fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}

fn apply_audio_item(buf: &PcmBuffer, item: &ResolvedItem, ctx: &NoiseContext) -> Result<PcmBuffer, EngineError> {
    // the container duration may exceed the audio stream by a little
    let end_s = item.end_s.min(buf.duration_s());
    let start_s = item.start_s;
    if !(start_s < end_s) {
        return Ok(buf.clone());
    }
    let i = item.intensity;
    let out = match item.kind {
        NoiseKind::Insulate => audio_noise::insulate(buf, start_s, end_s, i)?,
        NoiseKind::Mute => audio_noise::mute(buf, start_s, end_s, i)?,
        NoiseKind::Reverb(style) => audio_noise::reverb(buf, start_s, end_s, i, style, item.seed)?,
        NoiseKind::Color(color) => audio_noise::color_noise(buf, start_s, end_s, i, color, item.seed)?,
        NoiseKind::BackgroundMix | NoiseKind::Sudden => {
            let id = item.asset.as_deref().unwrap_or_default();
            let lib = ctx.assets.as_ref().ok_or_else(|| AudioError::AssetNotFound(id.to_string()))?;
            let asset = lib.load(id, buf.sample_rate())?;
            let mode = if item.kind == NoiseKind::Sudden {
                ScenarioMode::Sudden
            } else {
                ScenarioMode::Background
            };
            audio_noise::mix_scenario(buf, start_s, end_s, i, &asset, mode, item.seed)?
        }
        _ => buf.clone(),
    };
    Ok(out)
}

/// Apply every audio item of the spec.
pub fn apply_audio(buf: &PcmBuffer, spec: &ValidatedSpec, ctx: &NoiseContext) -> Result<PcmBuffer, EngineError> {
    let mut out = buf.clone();
    for item in spec.items_for(Modality::Audio) {
        out = apply_audio_item(&out, item, ctx)?;
    }
    Ok(out)
}

/// Video items turned into frame ranges and transforms, for streaming use.
#[derive(Debug, Clone)]
pub struct VideoPlan {
    ops: Vec<(Range<usize>, VideoOp)>,
}

impl VideoPlan {
    /// `frame_count` may be unknown for streamed input.
    pub fn new(spec: &ValidatedSpec, fps: f64, frame_count: Option<usize>) -> Self {
        let count = frame_count.unwrap_or(usize::MAX);
        let ops = spec
            .items_for(Modality::Video)
            .map(|item| (frame_span(item.start_s, item.end_s, fps, count), VideoOp::from_item(item)))
            .filter(|(r, op)| !r.is_empty() && *op != VideoOp::Identity)
            .collect();
        Self { ops }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn touches(&self, index: usize) -> bool {
        self.ops.iter().any(|(r, _)| r.contains(&index))
    }

    /// Transform one frame; frames outside every item pass through
    /// untouched.
    pub fn apply(&self, frame: Frame, index: usize) -> Result<Frame, VideoError> {
        let mut out = frame;
        for (range, op) in &self.ops {
            if range.contains(&index) {
                out = op.apply(&out, index as u64)?;
            }
        }
        Ok(out)
    }
}

pub fn apply_video(seq: &FrameSeq, spec: &ValidatedSpec) -> Result<FrameSeq, EngineError> {
    use rayon::prelude::*;
    let plan = VideoPlan::new(spec, seq.fps, Some(seq.len()));
    let frames = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| plan.apply(f.clone(), i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSeq { frames, fps: seq.fps })
}

fn word_range(t: &Transcript, item: &ResolvedItem) -> Result<Range<usize>, TextError> {
    match item.unit {
        SpanUnit::Index => Ok(item.start_s as usize..item.end_s as usize),
        SpanUnit::Seconds => t.words_in_time(item.start_s, item.end_s),
    }
}

/// Apply every text item of the spec.
pub fn apply_text(t: &Transcript, spec: &ValidatedSpec, ctx: &NoiseContext) -> Result<Transcript, EngineError> {
    let mut out = t.clone();
    for item in spec.items_for(Modality::Text) {
        let range = word_range(&out, item)?;
        out = match item.kind {
            NoiseKind::Erase => text_noise::erase_words(&out, range, item.intensity, item.seed)?,
            NoiseKind::Replace => text_noise::replace_words(&out, range, item.intensity, item.seed, item.lexicon.as_deref())?,
            NoiseKind::AsrVariant if item.intensity > 0.0 => {
                let path = ctx.resolve(item.source.as_deref().unwrap_or_default());
                let asr = text_noise::load_asr_variant(&path)?;
                splice_asr(&out, range, &asr, item)?
            }
            _ => out,
        };
    }
    Ok(out)
}

/// Replace the words of `range` with the recognizer's words covering the
/// same span.
fn splice_asr(t: &Transcript, range: Range<usize>, asr: &Transcript, item: &ResolvedItem) -> Result<Transcript, TextError> {
    if range.end > t.len() {
        return Err(TextError::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            len: t.len(),
        });
    }
    let replacement = match item.unit {
        SpanUnit::Index => asr.words[range.start.min(asr.len())..range.end.min(asr.len())].to_vec(),
        SpanUnit::Seconds => asr.words[asr.words_in_time(item.start_s, item.end_s)?].to_vec(),
    };
    let mut words = t.words[..range.start].to_vec();
    words.extend(replacement);
    words.extend_from_slice(&t.words[range.end..]);
    Ok(Transcript {
        language: t.language.clone(),
        words,
    })
}

fn timestep_range(fs: &FeatureSeq, item: &ResolvedItem, duration_s: f64) -> Range<usize> {
    match item.unit {
        SpanUnit::Index => item.start_s as usize..item.end_s as usize,
        SpanUnit::Seconds => {
            let t = fs.timesteps() as f64;
            let d = duration_s.max(f64::MIN_POSITIVE);
            let a = ((item.start_s / d * t) + 1e-9).floor().clamp(0.0, t) as usize;
            let b = ((item.end_s / d * t) - 1e-9).ceil().clamp(0.0, t) as usize;
            a..b.max(a)
        }
    }
}

/// Apply every feature item of the spec. Time-addressed items map onto
/// timesteps proportionally to the clip duration.
pub fn apply_features(fs: &FeatureSeq, spec: &ValidatedSpec) -> Result<FeatureSeq, EngineError> {
    let mut out = fs.clone();
    for item in spec.items_for(Modality::Feature) {
        let range = timestep_range(&out, item, spec.clip_duration_s);
        out = match item.kind {
            NoiseKind::RandomDrop => feature_noise::random_drop_range(&out, range, item.intensity, item.seed)?,
            NoiseKind::StructuralDrop => feature_noise::structural_drop_range(&out, range, item.intensity, item.seed)?,
            _ => out,
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, NoiseItem, NoiseSpec};
    use crate::media_io::{synthetic_clip, MediaMeta};

    fn meta() -> MediaMeta {
        MediaMeta::audio_video(2.0, 10.0, 16, 12, 8000, 1)
    }

    #[test]
    fn video_items_compose_in_order() {
        let (seq, _) = synthetic_clip(2.0, 10.0, 16, 12, 8000, 1, 3);
        let spec = NoiseSpec::new(4)
            .with_item(NoiseItem::new(Modality::Video, "invert", 0.0, 1.0, 1.0))
            .with_item(NoiseItem::new(Modality::Video, "occlude", 0.5, 1.5, 1.0));
        let v = validate(&spec, &meta()).unwrap();
        let out = apply_video(&seq, &v).unwrap();
        for i in 0..20 {
            let f = &out.frames[i];
            match i {
                0..=4 => assert!(f.pixels().iter().zip(seq.frames[i].pixels()).all(|(a, b)| *a == 255 - *b)),
                5..=14 => assert!(f.pixels().iter().all(|&p| p == 0)),
                _ => assert_eq!(f, &seq.frames[i]),
            }
        }
        // inverting a black frame after occlusion would give white: order matters
        let reversed = NoiseSpec::new(4)
            .with_item(NoiseItem::new(Modality::Video, "occlude", 0.5, 1.5, 1.0))
            .with_item(NoiseItem::new(Modality::Video, "invert", 0.5, 1.0, 1.0));
        let v = validate(&reversed, &meta()).unwrap();
        let out = apply_video(&seq, &v).unwrap();
        assert!(out.frames[5].pixels().iter().all(|&p| p == 255));
    }

    #[test]
    fn audio_routing_and_missing_assets() {
        let (_, pcm) = synthetic_clip(2.0, 10.0, 16, 12, 8000, 1, 3);
        let spec = NoiseSpec::new(1).with_item(NoiseItem::new(Modality::Audio, "mute", 0.0, 1.0, 1.0));
        let out = apply_audio(&pcm, &validate(&spec, &meta()).unwrap(), &NoiseContext::default()).unwrap();
        assert!(out.channel(0)[..8000].iter().all(|&s| s == 0.0));
        assert_eq!(out.channel(0)[8000..], pcm.channel(0)[8000..]);

        let bg = NoiseSpec::new(1)
            .with_item(NoiseItem::new(Modality::Audio, "bg_mix", 0.0, 1.0, 0.5).with_param("asset", "park"));
        let err = apply_audio(&pcm, &validate(&bg, &meta()).unwrap(), &NoiseContext::default()).unwrap_err();
        assert!(matches!(err, EngineError::Audio(AudioError::AssetNotFound(_))));

        let mut lib = AssetLibrary::default();
        lib.insert(audio_noise::ScenarioAsset::new("park", vec![0.3, -0.3, 0.1], 8000));
        let ctx = NoiseContext {
            assets: Some(lib),
            ..Default::default()
        };
        let out = apply_audio(&PcmBuffer::silence(1, 16_000, 8000), &validate(&bg, &meta()).unwrap(), &ctx).unwrap();
        assert!((out.rms(0..8000) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn text_items_by_index_and_time() {
        let t = Transcript::new(
            "en",
            (0..10)
                .map(|i| text_noise::Word::timed(format!("w{i}"), i as f64 * 0.2, i as f64 * 0.2 + 0.15))
                .collect(),
        );
        let spec = NoiseSpec::new(2)
            .with_item(NoiseItem::new(Modality::Text, "replace", 0.0, 3.0, 1.0).with_param("unit", "index"))
            .with_item(NoiseItem::new(Modality::Text, "erase", 1.0, 2.0, 1.0));
        let out = apply_text(&t, &validate(&spec, &meta()).unwrap(), &NoiseContext::default()).unwrap();
        assert_eq!(out.tokens(), ["[UNK]", "[UNK]", "[UNK]", "w3", "w4"]);
    }

    #[test]
    fn asr_variant_splices_recognizer_words() {
        let dir = tempfile::tempdir().unwrap();
        let asr = Transcript::new(
            "en",
            vec![text_noise::Word::timed("hallo", 0.0, 0.3), text_noise::Word::timed("word", 0.4, 0.7)],
        );
        std::fs::write(dir.path().join("asr.json"), asr.to_json_pretty()).unwrap();
        let t = Transcript::new(
            "en",
            vec![
                text_noise::Word::timed("hello", 0.0, 0.3),
                text_noise::Word::timed("world", 0.4, 0.7),
                text_noise::Word::timed("again", 1.0, 1.3),
            ],
        );
        let spec = NoiseSpec::new(2)
            .with_item(NoiseItem::new(Modality::Text, "asr_variant", 0.0, 0.9, 1.0).with_param("path", "asr.json"));
        let ctx = NoiseContext {
            base_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let out = apply_text(&t, &validate(&spec, &meta()).unwrap(), &ctx).unwrap();
        assert_eq!(out.tokens(), ["hallo", "word", "again"]);
    }

    #[test]
    fn feature_items_map_seconds_to_timesteps() {
        let fs = FeatureSeq::new(vec![1.0; 40], 20, 2, "visual").unwrap();
        let spec = NoiseSpec::new(2).with_item(NoiseItem::new(Modality::Feature, "structural_drop", 1.0, 2.0, 1.0));
        let out = apply_features(&fs, &validate(&spec, &meta()).unwrap()).unwrap();
        let dropped: Vec<usize> = (0..20).filter(|&t| !out.mask()[t]).collect();
        assert_eq!(dropped, (10..20).collect::<Vec<_>>());

        let idx = NoiseSpec::new(2)
            .with_item(NoiseItem::new(Modality::Feature, "random_drop", 0.0, 5.0, 1.0).with_param("unit", "index"));
        let out = apply_features(&fs, &validate(&idx, &meta()).unwrap()).unwrap();
        assert_eq!(out.mask().iter().filter(|m| !**m).count(), 5);
    }
}
