//! Noise configuration: the item/spec data model, validation against media
//! metadata, canonical JSON, and seeded random configuration generation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::media_io::MediaMeta;
use crate::rng::{derive_indexed, SeededRng, RNG_VERSION};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("item {index}: unknown noise kind `{kind}` for modality {modality}")]
    UnknownKind {
        index: usize,
        modality: Modality,
        kind: String,
    },
    #[error("item {index}: empty interval [{start_s}, {end_s}) after clamping")]
    EmptyInterval { index: usize, start_s: f64, end_s: f64 },
    #[error("item {index}: intensity {intensity} outside [0, 1]")]
    BadIntensity { index: usize, intensity: f64 },
    #[error("item {index}: bad parameter `{name}`: {reason}")]
    BadParam {
        index: usize,
        name: String,
        reason: String,
    },
    #[error("unknown generation mode `{0}`")]
    UnknownMode(String),
    #[error("{modality}: noise_num > 0 but the noise list is empty")]
    EmptyNoiseList { modality: Modality },
    #[error("{modality}: cannot lay out {num} segments covering {ticks} ticks of {total}")]
    InfeasibleLayout {
        modality: Modality,
        num: usize,
        ticks: u64,
        total: u64,
    },
    #[error("{modality}: ratio/intensity {value} outside [0, 1]")]
    BadFraction { modality: Modality, value: f64 },
    #[error("unsupported rng `{0}` (this build provides `{RNG_VERSION}`)")]
    UnsupportedRng(String),
    #[error("parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
    Text,
    Feature,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
            Modality::Text => "text",
            Modality::Feature => "feature",
        })
    }
}

/// Colors of synthetic laboratory noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseColor {
    White,
    Pink,
    Brown,
    Blue,
    Violet,
    Velvet,
}

impl NoiseColor {
    pub const ALL: [NoiseColor; 6] = [
        NoiseColor::White,
        NoiseColor::Pink,
        NoiseColor::Brown,
        NoiseColor::Blue,
        NoiseColor::Violet,
        NoiseColor::Velvet,
    ];

    /// Spectral exponent: PSD ∝ f^(-beta). `None` for velvet, which is an
    /// impulse train rather than shaped Gaussian noise.
    pub fn beta(self) -> Option<f64> {
        match self {
            NoiseColor::White => Some(0.0),
            NoiseColor::Pink => Some(1.0),
            NoiseColor::Brown => Some(2.0),
            NoiseColor::Blue => Some(-1.0),
            NoiseColor::Violet => Some(-2.0),
            NoiseColor::Velvet => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReverbStyle {
    Hall,
    Room,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorAdjust {
    Contrast,
    Brightness,
    Saturation,
    Gamma,
}

/// The registry of supported noise kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Insulate,
    Mute,
    Reverb(ReverbStyle),
    Color(NoiseColor),
    BackgroundMix,
    Sudden,
    Occlude,
    Blank,
    GaussianBlur,
    AverageBlur,
    AdditiveGaussian,
    Impulse,
    Adjust(ColorAdjust),
    Invert,
    ChannelSwap,
    Erase,
    Replace,
    AsrVariant,
    RandomDrop,
    StructuralDrop,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 29] = [
        NoiseKind::Insulate,
        NoiseKind::Mute,
        NoiseKind::Reverb(ReverbStyle::Hall),
        NoiseKind::Reverb(ReverbStyle::Room),
        NoiseKind::Color(NoiseColor::White),
        NoiseKind::Color(NoiseColor::Pink),
        NoiseKind::Color(NoiseColor::Brown),
        NoiseKind::Color(NoiseColor::Blue),
        NoiseKind::Color(NoiseColor::Violet),
        NoiseKind::Color(NoiseColor::Velvet),
        NoiseKind::BackgroundMix,
        NoiseKind::Sudden,
        NoiseKind::Occlude,
        NoiseKind::Blank,
        NoiseKind::GaussianBlur,
        NoiseKind::AverageBlur,
        NoiseKind::AdditiveGaussian,
        NoiseKind::Impulse,
        NoiseKind::Adjust(ColorAdjust::Contrast),
        NoiseKind::Adjust(ColorAdjust::Brightness),
        NoiseKind::Adjust(ColorAdjust::Saturation),
        NoiseKind::Adjust(ColorAdjust::Gamma),
        NoiseKind::Invert,
        NoiseKind::ChannelSwap,
        NoiseKind::Erase,
        NoiseKind::Replace,
        NoiseKind::AsrVariant,
        NoiseKind::RandomDrop,
        NoiseKind::StructuralDrop,
    ];

    pub fn name(self) -> &'static str {
        use NoiseKind::*;
        match self {
            Insulate => "insulate",
            Mute => "mute",
            Reverb(ReverbStyle::Hall) => "reverb_hall",
            Reverb(ReverbStyle::Room) => "reverb_room",
            Color(NoiseColor::White) => "color_white",
            Color(NoiseColor::Pink) => "color_pink",
            Color(NoiseColor::Brown) => "color_brown",
            Color(NoiseColor::Blue) => "color_blue",
            Color(NoiseColor::Violet) => "color_violet",
            Color(NoiseColor::Velvet) => "color_velvet",
            BackgroundMix => "bg_mix",
            Sudden => "sudden",
            Occlude => "occlude",
            Blank => "blank",
            GaussianBlur => "gblur",
            AverageBlur => "avg_blur",
            AdditiveGaussian => "add_gauss",
            Impulse => "impulse",
            Adjust(ColorAdjust::Contrast) => "contrast",
            Adjust(ColorAdjust::Brightness) => "brightness",
            Adjust(ColorAdjust::Saturation) => "saturation",
            Adjust(ColorAdjust::Gamma) => "gamma",
            Invert => "invert",
            ChannelSwap => "channel_swap",
            Erase => "erase",
            Replace => "replace",
            AsrVariant => "asr_variant",
            RandomDrop => "random_drop",
            StructuralDrop => "structural_drop",
        }
    }

    pub fn modality(self) -> Modality {
        use NoiseKind::*;
        match self {
            Insulate | Mute | Reverb(_) | Color(_) | BackgroundMix | Sudden => Modality::Audio,
            Occlude | Blank | GaussianBlur | AverageBlur | AdditiveGaussian | Impulse | Adjust(_)
            | Invert | ChannelSwap => Modality::Video,
            Erase | Replace | AsrVariant => Modality::Text,
            RandomDrop | StructuralDrop => Modality::Feature,
        }
    }

    /// Resolve a registry name. `reverb` is accepted as an alias for
    /// `reverb_room`, the spelling used by the random-config vocabulary.
    pub fn from_name(name: &str) -> Option<Self> {
        if name == "reverb" {
            return Some(NoiseKind::Reverb(ReverbStyle::Room));
        }
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Intensity at which the operation is an exact identity.
    pub fn identity_intensity(self) -> f64 {
        match self {
            NoiseKind::Adjust(_) => 0.5,
            _ => 0.0,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| format!("unknown noise kind `{s}`"))
    }
}

/// One timed, typed, parameterized perturbation as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseItem {
    pub modality: Modality,
    pub kind: String,
    pub start_s: f64,
    pub end_s: f64,
    pub intensity: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
}

impl NoiseItem {
    pub fn new(modality: Modality, kind: &str, start_s: f64, end_s: f64, intensity: f64) -> Self {
        Self {
            modality,
            kind: kind.to_string(),
            start_s,
            end_s,
            intensity,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

fn is_default_rng(rng: &String) -> bool {
    rng == RNG_VERSION
}

fn default_rng() -> String {
    RNG_VERSION.to_string()
}

/// An ordered list of noise items plus the seed that makes them reproducible.
///
/// The `rng` header is only written when it differs from the generator this
/// build ships, so specs produced here serialize as `{"seed":…,"items":[…]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default = "default_rng", skip_serializing_if = "is_default_rng")]
    pub rng: String,
    pub seed: u64,
    pub items: Vec<NoiseItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_duration_s: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::new(0)
    }
}

impl NoiseSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: default_rng(),
            seed,
            items: Vec::new(),
            clip_duration_s: None,
        }
    }

    pub fn with_item(mut self, item: NoiseItem) -> Self {
        self.items.push(item);
        self
    }

    /// Canonical compact JSON: fixed key order, no whitespace.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let spec: NoiseSpec = parse_json(text)?;
        if spec.rng != RNG_VERSION {
            return Err(ConfigError::UnsupportedRng(spec.rng));
        }
        for (index, item) in spec.items.iter().enumerate() {
            check_intensity(index, item.intensity)?;
        }
        Ok(spec)
    }

    /// Sort items by `(modality, start_s)`, keeping list order for ties.
    pub fn sort_items(&mut self) {
        self.items.sort_by(|a, b| {
            a.modality
                .cmp(&b.modality)
                .then(a.start_s.total_cmp(&b.start_s))
        });
    }

    pub fn has_modality(&self, modality: Modality) -> bool {
        self.items.iter().any(|i| i.modality == modality)
    }
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

fn check_intensity(index: usize, intensity: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&intensity) || intensity.is_nan() {
        return Err(ConfigError::BadIntensity { index, intensity });
    }
    Ok(())
}

/// How `start_s`/`end_s` address text and feature sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanUnit {
    Seconds,
    /// Half-open word / timestep index range.
    Index,
}

/// Pixel rectangle for occlusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// A registry-resolved item with typed parameters and its own seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedItem {
    /// Position in the spec as written.
    pub index: usize,
    pub kind: NoiseKind,
    pub start_s: f64,
    pub end_s: f64,
    pub intensity: f64,
    pub unit: SpanUnit,
    pub seed: u64,
    pub region: Option<Rect>,
    pub channel_order: Option<[usize; 3]>,
    pub asset: Option<String>,
    pub lexicon: Option<Vec<String>>,
    /// Transcript file for `asr_variant` items.
    pub source: Option<String>,
}

impl ResolvedItem {
    pub fn modality(&self) -> Modality {
        self.kind.modality()
    }
}

/// A spec whose items were clamped, resolved, defaulted and sorted into
/// composition order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    pub seed: u64,
    pub clip_duration_s: f64,
    pub items: Vec<ResolvedItem>,
}

impl ValidatedSpec {
    pub fn items_for(&self, modality: Modality) -> impl Iterator<Item = &ResolvedItem> {
        self.items.iter().filter(move |i| i.modality() == modality)
    }
}

/// Parse a channel permutation such as `"BGR"` into source indices.
pub fn parse_channel_order(order: &str) -> Option<[usize; 3]> {
    let bytes = order.as_bytes();
    if bytes.len() != 3 {
        return None;
    }
    let mut out = [0usize; 3];
    let mut seen = [false; 3];
    for (slot, b) in bytes.iter().enumerate() {
        let idx = match b.to_ascii_uppercase() {
            b'R' => 0,
            b'G' => 1,
            b'B' => 2,
            _ => return None,
        };
        if seen[idx] {
            return None;
        }
        seen[idx] = true;
        out[slot] = idx;
    }
    Some(out)
}

fn bad_param(index: usize, name: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadParam {
        index,
        name: name.to_string(),
        reason: reason.into(),
    }
}

struct Params {
    unit: SpanUnit,
    region: Option<Rect>,
    channel_order: Option<[usize; 3]>,
    asset: Option<String>,
    lexicon: Option<Vec<String>>,
    source: Option<String>,
}

fn resolve_params(
    index: usize,
    kind: NoiseKind,
    item: &NoiseItem,
    meta: &MediaMeta,
) -> Result<Params, ConfigError> {
    let p = &item.params;
    let unit = match p.get("unit") {
        None => SpanUnit::Seconds,
        Some(Value::String(s)) if s == "seconds" => SpanUnit::Seconds,
        Some(Value::String(s)) if s == "index" => {
            if matches!(kind.modality(), Modality::Audio | Modality::Video) {
                return Err(bad_param(index, "unit", "index ranges apply to text and feature items only"));
            }
            SpanUnit::Index
        }
        Some(other) => return Err(bad_param(index, "unit", format!("expected \"seconds\" or \"index\", got {other}"))),
    };

    let mut region = None;
    if kind == NoiseKind::Occlude {
        let keys = ["x", "y", "w", "h"];
        let present = keys.iter().filter(|k| p.contains_key(**k)).count();
        if present == 4 {
            let mut v = [0u32; 4];
            for (slot, key) in keys.iter().enumerate() {
                v[slot] = p[*key]
                    .as_u64()
                    .and_then(|n| u32::try_from(n).ok())
                    .ok_or_else(|| bad_param(index, key, "expected a non-negative integer"))?;
            }
            let rect = Rect { x: v[0], y: v[1], w: v[2], h: v[3] };
            if let (Some(w), Some(h)) = (meta.width, meta.height) {
                if rect.x as u64 + rect.w as u64 > w as u64 || rect.y as u64 + rect.h as u64 > h as u64 {
                    return Err(bad_param(index, "box", format!("{rect:?} exceeds {w}x{h} frame")));
                }
            }
            region = Some(rect);
        } else if present != 0 {
            return Err(bad_param(index, "box", "give all of x, y, w, h or none"));
        }
    }

    let mut channel_order = None;
    if kind == NoiseKind::ChannelSwap {
        let order = match p.get("order") {
            None => "BGR",
            Some(Value::String(s)) => s.as_str(),
            Some(other) => return Err(bad_param(index, "order", format!("expected a string, got {other}"))),
        };
        channel_order = Some(
            parse_channel_order(order)
                .ok_or_else(|| bad_param(index, "order", format!("`{order}` is not a permutation of RGB")))?,
        );
    }

    let mut asset = None;
    if matches!(kind, NoiseKind::BackgroundMix | NoiseKind::Sudden) {
        match p.get("asset") {
            Some(Value::String(s)) if !s.is_empty() => asset = Some(s.clone()),
            _ => return Err(bad_param(index, "asset", "scenario noise needs an asset id")),
        }
    }

    let mut lexicon = None;
    if kind == NoiseKind::Replace {
        if let Some(v) = p.get("lexicon") {
            let words = v
                .as_array()
                .and_then(|a| a.iter().map(|w| w.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
                .ok_or_else(|| bad_param(index, "lexicon", "expected an array of strings"))?;
            if words.is_empty() {
                return Err(bad_param(index, "lexicon", "lexicon is empty"));
            }
            lexicon = Some(words);
        }
    }

    let mut source = None;
    if kind == NoiseKind::AsrVariant {
        match p.get("path") {
            Some(Value::String(s)) if !s.is_empty() => source = Some(s.clone()),
            _ => return Err(bad_param(index, "path", "asr_variant needs the path of the recognizer output")),
        }
    }

    Ok(Params {
        unit,
        region,
        channel_order,
        asset,
        lexicon,
        source,
    })
}

/// Check a spec against the media it will be applied to.
///
/// Time-addressed items are clamped to `[0, duration]`; index-addressed items
/// are checked against their sequence at application time.
pub fn validate(spec: &NoiseSpec, meta: &MediaMeta) -> Result<ValidatedSpec, ConfigError> {
    if spec.rng != RNG_VERSION {
        return Err(ConfigError::UnsupportedRng(spec.rng.clone()));
    }
    let duration = meta.duration_s;
    let mut items = Vec::with_capacity(spec.items.len());
    for (index, item) in spec.items.iter().enumerate() {
        let kind = NoiseKind::from_name(&item.kind)
            .filter(|k| k.modality() == item.modality)
            .ok_or_else(|| ConfigError::UnknownKind {
                index,
                modality: item.modality,
                kind: item.kind.clone(),
            })?;
        check_intensity(index, item.intensity)?;
        let Params {
            unit,
            region,
            channel_order,
            asset,
            lexicon,
            source,
        } = resolve_params(index, kind, item, meta)?;

        let (start_s, end_s) = match unit {
            SpanUnit::Seconds => (item.start_s.clamp(0.0, duration), item.end_s.clamp(0.0, duration)),
            SpanUnit::Index => (item.start_s.max(0.0).floor(), item.end_s.ceil()),
        };
        if !(start_s < end_s) {
            return Err(ConfigError::EmptyInterval { index, start_s, end_s });
        }
        items.push(ResolvedItem {
            index,
            kind,
            start_s,
            end_s,
            intensity: item.intensity,
            unit,
            seed: derive_indexed(spec.seed, "item", index as u64),
            region,
            channel_order,
            asset,
            lexicon,
            source,
        });
    }
    items.sort_by(|a, b| {
        a.modality()
            .cmp(&b.modality())
            .then(a.start_s.total_cmp(&b.start_s))
    });
    Ok(ValidatedSpec {
        seed: spec.seed,
        clip_duration_s: duration,
        items,
    })
}

/// High-level parameters for random configuration generation. Field names
/// follow the established `real_noise_config` vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSpecParams {
    pub mode: String,
    #[serde(default)]
    pub v_noise_list: Vec<String>,
    #[serde(default)]
    pub v_noise_num: usize,
    #[serde(default)]
    pub v_noise_ratio: f64,
    #[serde(default)]
    pub v_noise_intensity: f64,
    #[serde(default)]
    pub a_noise_list: Vec<String>,
    #[serde(default)]
    pub a_noise_num: usize,
    #[serde(default)]
    pub a_noise_ratio: f64,
    #[serde(default)]
    pub a_noise_intensity: f64,
    #[serde(default)]
    pub t_noise_list: Vec<String>,
    #[serde(default)]
    pub t_noise_num: usize,
    #[serde(default)]
    pub t_noise_ratio: f64,
    #[serde(default)]
    pub t_noise_intensity: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RandomSpecParams {
    fn default() -> Self {
        Self {
            mode: "random_full".into(),
            v_noise_list: Vec::new(),
            v_noise_num: 0,
            v_noise_ratio: 0.0,
            v_noise_intensity: 0.0,
            a_noise_list: Vec::new(),
            a_noise_num: 0,
            a_noise_ratio: 0.0,
            a_noise_intensity: 0.0,
            t_noise_list: Vec::new(),
            t_noise_num: 0,
            t_noise_ratio: 0.0,
            t_noise_intensity: 0.0,
            seed: 0,
        }
    }
}

impl RandomSpecParams {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        parse_json(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialization is infallible")
    }

    fn per_modality(&self) -> [(Modality, &[String], usize, f64, f64); 3] {
        [
            (Modality::Audio, &self.a_noise_list, self.a_noise_num, self.a_noise_ratio, self.a_noise_intensity),
            (Modality::Video, &self.v_noise_list, self.v_noise_num, self.v_noise_ratio, self.v_noise_intensity),
            (Modality::Text, &self.t_noise_list, self.t_noise_num, self.t_noise_ratio, self.t_noise_intensity),
        ]
    }
}

/// Tick rate used to snap segment boundaries: one frame for video, one
/// sample for audio, one millisecond otherwise.
fn tick_rate(modality: Modality, meta: &MediaMeta) -> f64 {
    match modality {
        Modality::Video => meta.fps.unwrap_or(1000.0),
        Modality::Audio => meta.sample_rate.map(f64::from).unwrap_or(1000.0),
        _ => 1000.0,
    }
}

/// Split `covered` ticks of a `total`-tick timeline into `num` non-overlapping
/// segments at random positions. Returns half-open tick ranges, sorted.
fn layout_segments(rng: &mut SeededRng, total: u64, covered: u64, num: usize) -> Vec<(u64, u64)> {
    let num64 = num as u64;
    // segment lengths: random composition of `covered` into `num` positive parts
    let mut cuts: Vec<u64> = Vec::with_capacity(num + 1);
    if num > 1 {
        let candidates = covered - 1;
        let mut chosen = std::collections::BTreeSet::new();
        // Floyd's sampling of num-1 distinct values from 1..=candidates
        for j in (candidates - (num64 - 1) + 1)..=candidates {
            let t = 1 + rng.below(j);
            if !chosen.insert(t) {
                chosen.insert(j);
            }
        }
        cuts.extend(chosen);
    }
    let mut lengths = Vec::with_capacity(num);
    let mut prev = 0;
    for c in cuts.iter().copied().chain(std::iter::once(covered)) {
        lengths.push(c - prev);
        prev = c;
    }

    // gaps: distribute the free ticks over num+1 slots
    let free = total - covered;
    let mut marks: Vec<u64> = (0..num).map(|_| rng.below(free + 1)).collect();
    marks.sort_unstable();
    let mut segments = Vec::with_capacity(num);
    let mut pos = 0;
    let mut last_mark = 0;
    for (len, mark) in lengths.into_iter().zip(marks) {
        pos += mark - last_mark;
        last_mark = mark;
        segments.push((pos, pos + len));
        pos += len;
    }
    segments
}

/// Generate a random spec from high-level parameters.
///
/// Per modality: `noise_num` items with kinds drawn uniformly from the list,
/// covering `round(ratio × duration)` (in media ticks) split into
/// non-overlapping segments, all at the modality's intensity.
pub fn generate_random(params: &RandomSpecParams, meta: &MediaMeta) -> Result<NoiseSpec, ConfigError> {
    match params.mode.as_str() {
        "random_full" => {}
        other => return Err(ConfigError::UnknownMode(other.to_string())),
    }
    let mut spec = NoiseSpec::new(params.seed);
    spec.clip_duration_s = Some(meta.duration_s);
    for (modality, list, num, ratio, intensity) in params.per_modality() {
        for v in [ratio, intensity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::BadFraction { modality, value: v });
            }
        }
        if num == 0 {
            continue;
        }
        if list.is_empty() {
            return Err(ConfigError::EmptyNoiseList { modality });
        }
        for (i, name) in list.iter().enumerate() {
            if NoiseKind::from_name(name).map(|k| k.modality()) != Some(modality) {
                return Err(ConfigError::UnknownKind {
                    index: i,
                    modality,
                    kind: name.clone(),
                });
            }
        }
        let rate = tick_rate(modality, meta);
        let total = (meta.duration_s * rate).round() as u64;
        let covered = (ratio * total as f64).round() as u64;
        if covered < num as u64 {
            return Err(ConfigError::InfeasibleLayout {
                modality,
                num,
                ticks: covered,
                total,
            });
        }
        let mut rng = SeededRng::new(derive_indexed(params.seed, "layout", modality as u64));
        let kinds: Vec<&String> = (0..num).map(|_| &list[rng.below(list.len() as u64) as usize]).collect();
        let segments = layout_segments(&mut rng, total, covered, num);
        for (kind, (a, b)) in kinds.into_iter().zip(segments) {
            spec.items.push(NoiseItem::new(
                modality,
                kind,
                a as f64 / rate,
                // the last tick may straddle the clip end
                (b as f64 / rate).min(meta.duration_s),
                intensity,
            ));
        }
    }
    spec.sort_items();
    Ok(spec)
}
