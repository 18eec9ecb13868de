//! Robustness sweeps: noise a dataset at a series of imperfection levels,
//! collect predictions from an external predictor, and summarise the
//! accuracy-imperfection curve by its normalised area (AIR).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audio_noise::AssetLibrary;
use crate::config::{self, ConfigError, Modality, NoiseItem, NoiseKind, NoiseSpec};
use crate::engine::{self, EngineError, NoiseContext};
use crate::feature_noise;
use crate::media_io::{self, MediaError, MediaMeta, Transcoder};
use crate::rng::derive_seed;
use crate::text_noise::{self, Transcript};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("bad interval [{min}, {max}]: min must be below max")]
    BadInterval { min: f64, max: f64 },
    #[error("no metric for level {0}")]
    MissingLevel(f64),
    #[error("no predictions at level {0}")]
    EmptyLevel(f64),
    #[error("predictor `{predictor}` failed: {reason}")]
    PredictorFailure { predictor: String, reason: String },
    #[error("instance `{0}` has no label")]
    MissingLabel(String),
    #[error("instance `{id}` has no {what} to perturb")]
    MissingPayload { id: String, what: String },
    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },
    #[error("curve file: {0}")]
    Curve(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Noise(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    /// Process exit code, aligned with the injection codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            EvalError::Media(e) => e.exit_code(),
            EvalError::Config(_) | EvalError::BadInterval { .. } | EvalError::Dataset { .. } | EvalError::MissingLabel(_) => 2,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An imperfection-level range, `[min, max, step]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Interval { min, max, step }
    }

    pub fn check(&self) -> Result<(), EvalError> {
        if self.min < self.max && self.min.is_finite() && self.max.is_finite() {
            Ok(())
        } else {
            Err(EvalError::BadInterval {
                min: self.min,
                max: self.max,
            })
        }
    }

    pub fn len(&self) -> f64 {
        self.max - self.min
    }

    /// The inclusive step grid `min, min+step, …, max`.
    pub fn step_grid(&self) -> Result<Vec<f64>, EvalError> {
        self.check()?;
        if !(self.step > 0.0) {
            return Err(EvalError::BadInterval {
                min: self.min,
                max: self.max,
            });
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.min + k as f64 * self.step).collect())
    }
}

/// Number of interior points used by default.
pub const INTERIOR_POINTS: usize = 10;

/// Ten uniformly spaced interior points of the interval, endpoints
/// excluded: `min + k·(max−min)/11` for `k = 1..=10`.
pub fn default_points(interval: &Interval) -> Result<Vec<f64>, EvalError> {
    interval.check()?;
    let d = (INTERIOR_POINTS + 1) as f64;
    Ok((1..=INTERIOR_POINTS)
        .map(|k| interval.min + k as f64 * (interval.max - interval.min) / d)
        .collect())
}

fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Area under a metric curve sampled at `points`. Normalised, this is the
/// mean of the sampled values; unnormalised it is scaled by the interval
/// length.
pub fn air(metric_at: &[(f64, f64)], points: &[f64], interval: &Interval, normalize: bool) -> Result<f64, EvalError> {
    interval.check()?;
    if points.is_empty() {
        return Err(EvalError::MissingLevel(f64::NAN));
    }
    let values = points
        .iter()
        .map(|&p| {
            metric_at
                .iter()
                .find(|(s, _)| same_level(*s, p))
                .map(|(_, v)| *v)
                .ok_or(EvalError::MissingLevel(p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    // mean of deviations from the first value: exact for constant curves
    let anchor = values[0];
    let mean = anchor + values.iter().map(|v| v - anchor).sum::<f64>() / values.len() as f64;
    Ok(if normalize { mean } else { mean * interval.len() })
}

/// How labels and predictions are turned into the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelType {
    /// Continuous scores: non-negative is the positive class.
    #[default]
    Regression,
    /// Class ids 0/1 (or probabilities): 0.5 and above is positive.
    Binary,
}

impl LabelType {
    pub fn positive(self, v: f64) -> bool {
        match self {
            LabelType::Regression => v >= 0.0,
            LabelType::Binary => v >= 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: f64,
    pub prediction: f64,
    pub sigma: f64,
    #[serde(default)]
    pub repeat: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub acc2: f64,
    pub f1: f64,
}

/// Binary accuracy and support-weighted F1 over both classes; an undefined
/// precision or recall counts as zero.
pub fn acc2_f1(records: &[PredictionRecord], label_type: LabelType) -> Result<BinaryMetrics, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyLevel(f64::NAN));
    }
    // confusion counts indexed [truth][predicted], 1 = positive
    let mut m = [[0usize; 2]; 2];
    for r in records {
        let t = label_type.positive(r.label) as usize;
        let p = label_type.positive(r.prediction) as usize;
        m[t][p] += 1;
    }
    let n = records.len() as f64;
    let acc2 = (m[0][0] + m[1][1]) as f64 / n;
    let mut f1 = 0.0;
    for c in 0..2 {
        let tp = m[c][c] as f64;
        let support = (m[c][0] + m[c][1]) as f64;
        let predicted = (m[0][c] + m[1][c]) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let fc = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        f1 += fc * support / n;
    }
    Ok(BinaryMetrics { acc2, f1 })
}

// ---------------------------------------------------------------------------
// Datasets

/// One labelled instance with whichever payloads it has.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(default)]
    pub label: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Load a manifest; relative payload paths resolve against its
    /// directory. Every instance must carry a label.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut ds: Dataset = serde_json::from_str(&text).map_err(|e| EvalError::Dataset {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for inst in &mut ds.instances {
            inst.media.as_mut().map(fix);
            inst.transcript.as_mut().map(fix);
            inst.features.iter_mut().for_each(fix);
        }
        ds.check()?;
        Ok(ds)
    }

    pub fn check(&self) -> Result<(), EvalError> {
        let mut seen = std::collections::HashSet::new();
        for inst in &self.instances {
            if inst.label.is_none() {
                return Err(EvalError::MissingLabel(inst.id.clone()));
            }
            if !seen.insert(&inst.id) {
                return Err(EvalError::Dataset {
                    path: PathBuf::new(),
                    reason: format!("duplicate instance id `{}`", inst.id),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(self).expect("dataset serializes");
        std::fs::write(path, json + "\n").map_err(io_err(path))
    }

    fn labels(&self) -> HashMap<&str, f64> {
        self.instances
            .iter()
            .filter_map(|i| i.label.map(|l| (i.id.as_str(), l)))
            .collect()
    }
}

/// Payload paths of one instance after noising; untouched payloads point at
/// the originals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisedInstance {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
}

/// Shared resources for materialising noised instances.
#[derive(Debug, Clone, Default)]
pub struct MaterializeOptions {
    /// Needed only for media payloads.
    pub transcoder: Option<Transcoder>,
    pub context: NoiseContext,
}

fn feature_meta(duration_s: f64) -> MediaMeta {
    MediaMeta {
        duration_s,
        fps: None,
        width: None,
        height: None,
        frame_count: None,
        sample_rate: None,
        channels: None,
        sample_count: None,
        container: "features".into(),
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Apply `spec` to every payload of `inst` that the spec has items for,
/// writing results into `out_dir` under names prefixed by `out_id`.
pub fn materialize(
    inst: &Instance,
    out_id: &str,
    spec: &NoiseSpec,
    out_dir: &Path,
    opts: &MaterializeOptions,
) -> Result<NoisedInstance, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let wants = |m: Modality| spec.has_modality(m);
    let mut out = NoisedInstance {
        id: out_id.to_string(),
        media: inst.media.clone(),
        features: inst.features.clone(),
        transcript: inst.transcript.clone(),
    };
    let missing = |what: &str| EvalError::MissingPayload {
        id: inst.id.clone(),
        what: what.to_string(),
    };

    let mut clip_duration = spec.clip_duration_s;
    if wants(Modality::Audio) || wants(Modality::Video) {
        let media = inst.media.as_ref().ok_or_else(|| missing("media"))?;
        let t = opts
            .transcoder
            .clone()
            .ok_or_else(|| MediaError::TranscoderMissing("media payloads need a transcoder".into()))?;
        let (meta, validated) = media_io::prepare(&t, media, &media_only(spec))?;
        clip_duration = Some(meta.duration_s);
        let ext = media.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "mp4".into());
        let dest = out_dir.join(format!("{out_id}.{ext}"));
        let mut io = media_io::InjectOptions::new(t);
        io.context = opts.context.clone();
        media_io::inject(media, &dest, &validated, &io)?;
        out.media = Some(dest);
    }

    if wants(Modality::Text) {
        let path = inst.transcript.as_ref().ok_or_else(|| missing("transcript"))?;
        let tr = text_noise::load_asr_variant(path).map_err(EngineError::from)?;
        let last_end = tr.words.iter().filter_map(|w| w.end_s).fold(0.0, f64::max);
        let meta = feature_meta(clip_duration.unwrap_or(last_end.max(tr.len() as f64)));
        let validated = config::validate(&only(spec, Modality::Text), &meta)?;
        let noised = engine::apply_text(&tr, &validated, &opts.context)?;
        let dest = out_dir.join(format!("{out_id}.transcript.json"));
        std::fs::write(&dest, noised.to_json_pretty()).map_err(io_err(&dest))?;
        out.transcript = Some(dest);
    }

    if wants(Modality::Feature) {
        if inst.features.is_empty() {
            return Err(missing("features"));
        }
        out.features.clear();
        for path in &inst.features {
            let fs = feature_noise::read_features(path).map_err(EngineError::from)?;
            // without a clip, one timestep is one second of the spec's axis
            let meta = feature_meta(clip_duration.unwrap_or(fs.timesteps() as f64));
            let validated = config::validate(&only(spec, Modality::Feature), &meta)?;
            let noised = engine::apply_features(&fs, &validated)?;
            let dest = out_dir.join(format!("{out_id}.{}", file_name(path)));
            let provenance = serde_json::json!({ "source": path, "seed": spec.seed });
            feature_noise::write_features(&dest, &noised, Some(provenance)).map_err(EngineError::from)?;
            out.features.push(dest);
        }
    }
    Ok(out)
}

/// The spec restricted to one modality. Item seeds depend on the original
/// item index, so they are unchanged by the restriction.
fn only(spec: &NoiseSpec, modality: Modality) -> NoiseSpec {
    restrict(spec, |m| m == modality)
}

fn media_only(spec: &NoiseSpec) -> NoiseSpec {
    restrict(spec, |m| matches!(m, Modality::Audio | Modality::Video))
}

fn restrict(spec: &NoiseSpec, keep: impl Fn(Modality) -> bool) -> NoiseSpec {
    let mut s = spec.clone();
    for item in &mut s.items {
        if !keep(item.modality) {
            // neutralised in place so that indices (and seeds) are stable
            item.modality = Modality::Feature;
            item.kind = "__skip__".into();
        }
    }
    s.items.retain(|i| i.kind != "__skip__");
    s
}

// ---------------------------------------------------------------------------
// Predictors

/// What a predictor is asked to score: one imperfection level, one repeat.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub kind: String,
    pub indicator: String,
    pub sigma: f64,
    pub repeat: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denoiser: Option<String>,
    pub instances: Vec<NoisedInstance>,
    /// Where the request was written as JSON for out-of-process
    /// predictors.
    #[serde(skip)]
    pub manifest_path: PathBuf,
    #[serde(skip)]
    pub output_path: PathBuf,
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    /// Predicted value per instance id.
    fn predict(&self, request: &PredictionRequest) -> Result<Vec<(String, f64)>, EvalError>;

    fn label_type(&self) -> LabelType {
        LabelType::Regression
    }

    /// Whether different levels may be scored concurrently.
    fn stateless(&self) -> bool {
        true
    }
}

/// An in-process predictor backed by a closure; handy for stubs.
pub struct FnPredictor<F> {
    name: String,
    label_type: LabelType,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&PredictionRequest) -> Result<Vec<(String, f64)>, EvalError> + Send + Sync,
{
    pub fn new(name: &str, f: F) -> Self {
        FnPredictor {
            name: name.to_string(),
            label_type: LabelType::Regression,
            f,
        }
    }

    pub fn with_label_type(mut self, label_type: LabelType) -> Self {
        self.label_type = label_type;
        self
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&PredictionRequest) -> Result<Vec<(String, f64)>, EvalError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, request: &PredictionRequest) -> Result<Vec<(String, f64)>, EvalError> {
        (self.f)(request)
    }

    fn label_type(&self) -> LabelType {
        self.label_type
    }
}

/// How to obtain predictions from outside the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PredictorSource {
    /// Run `command` once per level. Arguments may contain `{manifest}`,
    /// `{output}`, `{sigma}`, `{repeat}` and `{denoiser}`; the command
    /// reads the manifest JSON and writes an `id,prediction` CSV to
    /// `{output}`.
    Command { command: Vec<String> },
    /// A CSV of `id,sigma,prediction` rows.
    Precomputed { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub name: String,
    #[serde(default)]
    pub label_type: LabelType,
    #[serde(default = "yes")]
    pub stateless: bool,
    #[serde(flatten)]
    pub source: PredictorSource,
}

fn yes() -> bool {
    true
}

impl PredictorSpec {
    pub fn build(&self) -> Result<Box<dyn Predictor>, EvalError> {
        Ok(match &self.source {
            PredictorSource::Command { command } => {
                if command.is_empty() {
                    return Err(EvalError::PredictorFailure {
                        predictor: self.name.clone(),
                        reason: "empty command".into(),
                    });
                }
                Box::new(CommandPredictor { spec: self.clone() })
            }
            PredictorSource::Precomputed { path } => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                let rows = parse_precomputed_csv(&text, &self.name)?;
                Box::new(PrecomputedPredictor {
                    spec: self.clone(),
                    rows,
                })
            }
        })
    }
}

/// Load a named registry of predictor specs: `{"predictors": [...]}`.
pub fn load_registry(path: &Path) -> Result<Vec<PredictorSpec>, EvalError> {
    #[derive(Deserialize)]
    struct Registry {
        predictors: Vec<PredictorSpec>,
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let reg: Registry = serde_json::from_str(&text).map_err(|e| EvalError::Dataset {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(reg.predictors)
}

struct CommandPredictor {
    spec: PredictorSpec,
}

impl CommandPredictor {
    fn fail(&self, reason: impl Into<String>) -> EvalError {
        EvalError::PredictorFailure {
            predictor: self.spec.name.clone(),
            reason: reason.into(),
        }
    }
}

impl Predictor for CommandPredictor {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn label_type(&self) -> LabelType {
        self.spec.label_type
    }

    fn stateless(&self) -> bool {
        self.spec.stateless
    }

    fn predict(&self, req: &PredictionRequest) -> Result<Vec<(String, f64)>, EvalError> {
        let PredictorSource::Command { command } = &self.spec.source else {
            unreachable!("built from a command spec")
        };
        let fill = |arg: &str| {
            arg.replace("{manifest}", &req.manifest_path.to_string_lossy())
                .replace("{output}", &req.output_path.to_string_lossy())
                .replace("{sigma}", &req.sigma.to_string())
                .replace("{repeat}", &req.repeat.to_string())
                .replace("{denoiser}", req.denoiser.as_deref().unwrap_or(""))
        };
        let argv: Vec<String> = command.iter().map(|a| fill(a)).collect();
        let output = Command::new(&argv[0])
            .args(&argv[1..])
            .output()
            .map_err(|e| self.fail(format!("cannot run `{}`: {e}", argv[0])))?;
        if !output.status.success() {
            return Err(self.fail(format!(
                "exited with {}: {}",
                output.status,
                media_io::transcoder::stderr_tail(&output.stderr)
            )));
        }
        let text = std::fs::read_to_string(&req.output_path)
            .map_err(|e| self.fail(format!("no predictions at {}: {e}", req.output_path.display())))?;
        parse_predictions_csv(&text, &self.spec.name)
    }
}

struct PrecomputedPredictor {
    spec: PredictorSpec,
    rows: Vec<(String, f64, f64)>,
}

impl Predictor for PrecomputedPredictor {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn label_type(&self) -> LabelType {
        self.spec.label_type
    }

    fn predict(&self, req: &PredictionRequest) -> Result<Vec<(String, f64)>, EvalError> {
        Ok(self
            .rows
            .iter()
            .filter(|(_, s, _)| same_level(*s, req.sigma))
            .map(|(id, _, p)| (id.clone(), *p))
            .collect())
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn number(field: &str, line: u64, what: &str, who: &str) -> Result<f64, EvalError> {
    field.parse::<f64>().map_err(|_| EvalError::PredictorFailure {
        predictor: who.to_string(),
        reason: format!("line {line}: {what} `{field}` is not a number"),
    })
}

fn csv_failure(who: &str, e: csv::Error) -> EvalError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    EvalError::PredictorFailure {
        predictor: who.to_string(),
        reason: format!("line {line}: {e}"),
    }
}

/// Parse the `id,prediction` CSV a command predictor writes.
pub fn parse_predictions_csv(text: &str, who: &str) -> Result<Vec<(String, f64)>, EvalError> {
    let mut r = csv_reader(text);
    let headers = r.headers().map_err(|e| csv_failure(who, e))?.clone();
    let (Some(id), Some(pred)) = (column(&headers, "id"), column(&headers, "prediction")) else {
        return Err(EvalError::PredictorFailure {
            predictor: who.to_string(),
            reason: "line 1: header must contain `id` and `prediction`".into(),
        });
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_failure(who, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        out.push((field(id).to_string(), number(field(pred), line, "prediction", who)?));
    }
    Ok(out)
}

fn parse_precomputed_csv(text: &str, who: &str) -> Result<Vec<(String, f64, f64)>, EvalError> {
    let mut r = csv_reader(text);
    let headers = r.headers().map_err(|e| csv_failure(who, e))?.clone();
    let (Some(id), Some(sigma), Some(pred)) = (column(&headers, "id"), column(&headers, "sigma"), column(&headers, "prediction")) else {
        return Err(EvalError::PredictorFailure {
            predictor: who.to_string(),
            reason: "line 1: header must contain `id`, `sigma` and `prediction`".into(),
        });
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_failure(who, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        out.push((
            field(id).to_string(),
            number(field(sigma), line, "sigma", who)?,
            number(field(pred), line, "prediction", who)?,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sweeps

/// Built-in sweep presets: label, noise kind, indicator, `[min, max, step]`.
pub const PRESETS: [(&str, &str, &str, [f64; 3]); 6] = [
    ("R-Drop", "random_drop", "Missing Rate", [0.0, 1.0, 0.1]),
    ("S-Drop", "structural_drop", "Missing Rate", [0.0, 1.0, 0.1]),
    ("G-Blur", "gblur", "Sigma of Gaussian blur", [0.0, 10.0, 1.0]),
    ("Impulse", "impulse", "Strength for specific pixel", [0.0, 100.0, 10.0]),
    ("Color-W", "color_white", "Amplitude of the Noise", [0.0, 0.10, 0.01]),
    ("BG-Park", "bg_mix", "Amplitude of the Noise", [0.0, 1.0, 0.1]),
];

/// Divisor turning an indicator value into the item intensity in [0, 1].
pub fn indicator_scale(kind: NoiseKind) -> f64 {
    match kind {
        NoiseKind::GaussianBlur => 10.0,
        NoiseKind::Impulse => 100.0,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    /// Noise kind, by registry name.
    pub kind: String,
    pub indicator: String,
    pub interval: Interval,
    /// Explicit levels; the ten interior points when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<PredictorSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Independent noise draws per level, averaged.
    #[serde(default = "one")]
    pub repeats: usize,
    /// Extra item parameters, e.g. the `asset` of a background mix.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
    /// Scenario asset manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets: Option<PathBuf>,
    /// Free-form tag passed through to the predictor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denoiser: Option<String>,
    /// Worker threads for materialisation; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn one() -> usize {
    1
}

impl SweepPlan {
    pub fn new(kind: &str, indicator: &str, interval: Interval) -> Self {
        SweepPlan {
            kind: kind.to_string(),
            indicator: indicator.to_string(),
            interval,
            points: None,
            dataset: PathBuf::new(),
            predictor: None,
            seed: 0,
            repeats: 1,
            params: BTreeMap::new(),
            assets: None,
            denoiser: None,
            workers: None,
        }
    }

    /// A plan preset by label (`"R-Drop"`, `"G-Blur"`, …) or kind name.
    pub fn preset(name: &str) -> Option<Self> {
        let (_, kind, indicator, [min, max, step]) = PRESETS
            .iter()
            .find(|(label, kind, ..)| label.eq_ignore_ascii_case(name) || *kind == name)?;
        let mut plan = SweepPlan::new(kind, indicator, Interval::new(*min, *max, *step));
        if *kind == "bg_mix" {
            plan.params.insert("asset".into(), Value::from("park"));
        }
        Some(plan)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        config::parse_json(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn noise_kind(&self) -> Result<NoiseKind, ConfigError> {
        NoiseKind::from_name(&self.kind).ok_or_else(|| ConfigError::UnknownKind {
            index: 0,
            modality: Modality::Feature,
            kind: self.kind.clone(),
        })
    }

    pub fn levels(&self) -> Result<Vec<f64>, EvalError> {
        match &self.points {
            Some(p) if !p.is_empty() => {
                self.interval.check()?;
                Ok(p.clone())
            }
            _ => default_points(&self.interval),
        }
    }

    /// The spec that noises one instance at level `sigma`.
    pub fn spec_for(&self, sigma: f64, instance_id: &str, repeat: usize) -> Result<NoiseSpec, EvalError> {
        let kind = self.noise_kind()?;
        let intensity = (sigma / indicator_scale(kind)).clamp(0.0, 1.0);
        let mut item = NoiseItem::new(kind.modality(), kind.name(), 0.0, f64::MAX, intensity);
        item.params = self.params.clone();
        let mut spec = NoiseSpec::new(instance_seed(self.seed, sigma, instance_id, repeat));
        spec.items.push(item);
        Ok(spec)
    }
}

/// Seed for one noised instance, a hash of the plan seed, the level, the
/// instance id and the repeat.
pub fn instance_seed(plan_seed: u64, sigma: f64, instance_id: &str, repeat: usize) -> u64 {
    derive_seed(
        plan_seed,
        &[&sigma.to_bits().to_le_bytes(), instance_id.as_bytes(), &(repeat as u64).to_le_bytes()],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub sigma: f64,
    pub acc2: f64,
    pub f1: f64,
    /// Records contributing (instances × repeats).
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub kind: String,
    pub indicator: String,
    pub interval: Interval,
    pub predictor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denoiser: Option<String>,
    pub seed: u64,
    pub repeats: usize,
    pub levels: Vec<LevelMetrics>,
    /// Mean Acc-2 over the levels.
    pub air_acc2: f64,
    pub air_f1: f64,
    /// The same areas scaled by the interval length.
    pub air_acc2_area: f64,
    pub air_f1_area: f64,
    #[serde(default)]
    pub started_unix_s: u64,
    #[serde(default)]
    pub finished_unix_s: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<PredictionRecord>,
}

impl RobustnessReport {
    pub fn curve(&self) -> Vec<(f64, f64, f64)> {
        self.levels.iter().map(|l| (l.sigma, l.acc2, l.f1)).collect()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| EvalError::Curve(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json + "\n").map_err(io_err(path))
    }

    /// Recompute AIR values from level metrics.
    fn finish_air(&mut self, points: &[f64]) -> Result<(), EvalError> {
        let acc: Vec<(f64, f64)> = self.levels.iter().map(|l| (l.sigma, l.acc2)).collect();
        let f1: Vec<(f64, f64)> = self.levels.iter().map(|l| (l.sigma, l.f1)).collect();
        self.air_acc2 = air(&acc, points, &self.interval, true)?;
        self.air_f1 = air(&f1, points, &self.interval, true)?;
        self.air_acc2_area = air(&acc, points, &self.interval, false)?;
        self.air_f1_area = air(&f1, points, &self.interval, false)?;
        Ok(())
    }
}

/// Run-time resources for a sweep.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub work_dir: PathBuf,
    pub transcoder: Option<Transcoder>,
    /// Keep per-record predictions in the report.
    pub keep_records: bool,
}

impl SweepOptions {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        SweepOptions {
            work_dir: work_dir.into(),
            transcoder: None,
            keep_records: true,
        }
    }
}

fn now_s() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Directory holding the noised instances of one level and repeat.
pub fn level_dir(work_dir: &Path, level_index: usize, repeat: usize) -> PathBuf {
    work_dir.join(format!("level_{level_index:02}_rep_{repeat}"))
}

/// Sweep `plan` over `dataset`, scoring with `predictor`.
pub fn run_sweep(
    plan: &SweepPlan,
    dataset: &Dataset,
    predictor: &dyn Predictor,
    opts: &SweepOptions,
) -> Result<RobustnessReport, EvalError> {
    let started = now_s();
    dataset.check()?;
    let points = plan.levels()?;
    let repeats = plan.repeats.max(1);
    plan.noise_kind()?;

    let mut context = NoiseContext::default();
    if let Some(assets) = &plan.assets {
        context.assets = Some(AssetLibrary::open(assets).map_err(EngineError::from)?);
    }
    let mat = MaterializeOptions {
        transcoder: opts.transcoder.clone(),
        context,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers.unwrap_or(0))
        .build()
        .map_err(|e| EvalError::Curve(e.to_string()))?;

    // every (level, repeat, instance) is an independent unit of work
    let units: Vec<(usize, usize, usize)> = (0..points.len())
        .flat_map(|l| (0..repeats).flat_map(move |r| (0..dataset.instances.len()).map(move |i| (l, r, i))))
        .collect();
    let noised: Vec<NoisedInstance> = pool.install(|| {
        units
            .par_iter()
            .map(|&(l, r, i)| {
                let inst = &dataset.instances[i];
                let spec = plan.spec_for(points[l], &inst.id, r)?;
                materialize(inst, &inst.id, &spec, &level_dir(&opts.work_dir, l, r), &mat)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let n = dataset.instances.len();
    let requests: Vec<PredictionRequest> = (0..points.len() * repeats)
        .map(|k| {
            let (l, r) = (k / repeats, k % repeats);
            let dir = level_dir(&opts.work_dir, l, r);
            PredictionRequest {
                kind: plan.kind.clone(),
                indicator: plan.indicator.clone(),
                sigma: points[l],
                repeat: r,
                denoiser: plan.denoiser.clone(),
                instances: noised[k * n..(k + 1) * n].to_vec(),
                manifest_path: dir.join("manifest.json"),
                output_path: dir.join("predictions.csv"),
            }
        })
        .collect();
    for req in &requests {
        std::fs::create_dir_all(req.manifest_path.parent().expect("level dir")).map_err(io_err(&opts.work_dir))?;
        let json = serde_json::to_string_pretty(req).expect("request serializes");
        std::fs::write(&req.manifest_path, json + "\n").map_err(io_err(&req.manifest_path))?;
    }

    let score = |req: &PredictionRequest| predictor.predict(req);
    let predictions: Vec<Vec<(String, f64)>> = if predictor.stateless() {
        pool.install(|| requests.par_iter().map(score).collect::<Result<_, _>>())?
    } else {
        requests.iter().map(score).collect::<Result<_, _>>()?
    };

    let labels = dataset.labels();
    let mut records = Vec::with_capacity(n * requests.len());
    let mut levels = Vec::with_capacity(points.len());
    for (l, &sigma) in points.iter().enumerate() {
        let mut acc = 0.0;
        let mut f1 = 0.0;
        let mut count = 0;
        for r in 0..repeats {
            let k = l * repeats + r;
            let by_id: HashMap<&str, f64> = predictions[k].iter().map(|(id, p)| (id.as_str(), *p)).collect();
            let mut level_records = Vec::with_capacity(n);
            for inst in &dataset.instances {
                let prediction = *by_id.get(inst.id.as_str()).ok_or_else(|| EvalError::PredictorFailure {
                    predictor: predictor.name().to_string(),
                    reason: format!("no prediction for `{}` at level {sigma}", inst.id),
                })?;
                level_records.push(PredictionRecord {
                    id: inst.id.clone(),
                    label: labels[inst.id.as_str()],
                    prediction,
                    sigma,
                    repeat: r,
                });
            }
            let m = acc2_f1(&level_records, predictor.label_type()).map_err(|_| EvalError::EmptyLevel(sigma))?;
            acc += m.acc2;
            f1 += m.f1;
            count += level_records.len();
            records.extend(level_records);
        }
        levels.push(LevelMetrics {
            sigma,
            acc2: acc / repeats as f64,
            f1: f1 / repeats as f64,
            n: count,
        });
    }

    let mut report = RobustnessReport {
        kind: plan.kind.clone(),
        indicator: plan.indicator.clone(),
        interval: plan.interval,
        predictor: predictor.name().to_string(),
        denoiser: plan.denoiser.clone(),
        seed: plan.seed,
        repeats,
        levels,
        air_acc2: 0.0,
        air_f1: 0.0,
        air_acc2_area: 0.0,
        air_f1_area: 0.0,
        started_unix_s: started,
        finished_unix_s: 0,
        records: if opts.keep_records { records } else { Vec::new() },
    };
    report.finish_air(&points)?;
    report.finished_unix_s = now_s();
    Ok(report)
}

/// Load the plan's dataset and predictor and run it.
pub fn run_plan(plan: &SweepPlan, opts: &SweepOptions) -> Result<RobustnessReport, EvalError> {
    let dataset = Dataset::load(&plan.dataset)?;
    let spec = plan.predictor.as_ref().ok_or_else(|| EvalError::PredictorFailure {
        predictor: "<none>".into(),
        reason: "plan names no predictor".into(),
    })?;
    let predictor = spec.build()?;
    run_sweep(plan, &dataset, predictor.as_ref(), opts)
}

// ---------------------------------------------------------------------------
// Curve export

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for CurveFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CurveFormat::Csv),
            "json" => Ok(CurveFormat::Json),
            "svg" => Ok(CurveFormat::Svg),
            other => Err(format!("unknown curve format `{other}`")),
        }
    }
}

/// One curve as read back from an export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub name: String,
    pub kind: String,
    pub indicator: String,
    pub air_acc2: f64,
    pub air_f1: f64,
    pub levels: Vec<LevelMetrics>,
}

impl From<&RobustnessReport> for CurveSeries {
    fn from(r: &RobustnessReport) -> Self {
        CurveSeries {
            name: series_name(r),
            kind: r.kind.clone(),
            indicator: r.indicator.clone(),
            air_acc2: r.air_acc2,
            air_f1: r.air_f1,
            levels: r.levels.clone(),
        }
    }
}

fn series_name(r: &RobustnessReport) -> String {
    match &r.denoiser {
        Some(d) => format!("{}+{d}", r.predictor),
        None => r.predictor.clone(),
    }
}

/// Render reports as curve data. CSV and JSON carry `(sigma, acc2, f1)`
/// rows; SVG draws one series per report.
pub fn render_curves(reports: &[RobustnessReport], format: CurveFormat) -> String {
    match format {
        CurveFormat::Csv => curves_csv(reports),
        CurveFormat::Json => {
            let series: Vec<CurveSeries> = reports.iter().map(CurveSeries::from).collect();
            serde_json::to_string_pretty(&series).expect("curves serialize") + "\n"
        }
        CurveFormat::Svg => curves_svg(reports),
    }
}

pub fn export_curves(reports: &[RobustnessReport], format: CurveFormat, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, render_curves(reports, format)).map_err(io_err(path))
}

fn curves_csv(reports: &[RobustnessReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "# series: {}", series_name(r));
        let _ = writeln!(s, "# kind: {}", r.kind);
        let _ = writeln!(s, "# indicator: {}", r.indicator);
        let _ = writeln!(s, "# interval: [{}, {}, {}]", r.interval.min, r.interval.max, r.interval.step);
        let _ = writeln!(s, "# air_acc2: {}", r.air_acc2);
        let _ = writeln!(s, "# air_f1: {}", r.air_f1);
    }
    let multi = reports.len() > 1;
    s.push_str(if multi { "series,sigma,acc2,f1\n" } else { "sigma,acc2,f1\n" });
    for r in reports {
        let name = series_name(r);
        for l in &r.levels {
            if multi {
                let _ = write!(s, "{},", csv_field(&name));
            }
            let _ = writeln!(s, "{},{},{}", l.sigma, l.acc2, l.f1);
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Read a curve CSV back: `(series name, [(sigma, acc2, f1)])` per series.
pub fn import_curves_csv(text: &str) -> Result<Vec<(String, Vec<(f64, f64, f64)>)>, EvalError> {
    let names: Vec<String> = text
        .lines()
        .filter_map(|l| l.strip_prefix("# series: "))
        .map(str::to_string)
        .collect();
    let mut r = csv_reader(text);
    let headers = r.headers().map_err(|e| EvalError::Curve(e.to_string()))?.clone();
    let col = |n: &str| column(&headers, n).ok_or_else(|| EvalError::Curve(format!("missing column `{n}`")));
    let (sigma, acc2, f1) = (col("sigma")?, col("acc2")?, col("f1")?);
    let series = column(&headers, "series");
    let mut out: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| EvalError::Curve(e.to_string()))?;
        let num = |i: usize| {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| EvalError::Curve(format!("line {}: {e}", rec.position().map(|p| p.line()).unwrap_or(0))))
        };
        let name = match series {
            Some(i) => rec.get(i).unwrap_or("").to_string(),
            None => names.first().cloned().unwrap_or_default(),
        };
        let row = (num(sigma)?, num(acc2)?, num(f1)?);
        match out.iter_mut().find(|(n, _)| *n == name) {
            Some((_, rows)) => rows.push(row),
            None => out.push((name, vec![row])),
        }
    }
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// A self-contained line chart: Acc-2 solid, F1 dashed, one colour per
/// report, with a legend naming each predictor.
fn curves_svg(reports: &[RobustnessReport]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 180.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let lo = reports.iter().map(|r| r.interval.min).fold(f64::INFINITY, f64::min);
    let hi = reports.iter().map(|r| r.interval.max).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let x = |v: f64| left + (v - lo) / (hi - lo) * pw;
    let y = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let title = reports
        .first()
        .map(|r| format!("{} ({})", r.kind, r.indicator))
        .unwrap_or_default();
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, left + pw / 2.0, xml_escape(&title));
    // axes and ticks
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" text-anchor="end">{:.1}</text><line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="#ddd"/>"##,
            left - 6.0,
            y(v) + 4.0,
            v,
            y(v),
            left + pw,
            y(v)
        );
        let xv = lo + (hi - lo) * v;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x(xv),
            top + ph + 16.0,
            format_tick(xv)
        );
    }
    let xlabel = reports.first().map(|r| r.indicator.clone()).unwrap_or_else(|| "sigma".into());
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, xml_escape(&xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">metric</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts = |f: fn(&LevelMetrics) -> f64| {
            r.levels
                .iter()
                .map(|l| format!("{:.2},{:.2}", x(l.sigma), y(f(l))))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, r#"<g class="series" data-name="{}">"#, xml_escape(&series_name(r)));
        let _ = writeln!(s, r#"<polyline class="acc2" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts(|l| l.acc2));
        let _ = writeln!(
            s,
            r#"<polyline class="f1" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="5,3" points="{}"/>"#,
            pts(|l| l.f1)
        );
        let _ = writeln!(s, "</g>");
    }

    let lx = left + pw + 16.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = top + 10.0 + i as f64 * 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            xml_escape(&format!("{} (AIR {:.3})", series_name(r), r.air_acc2))
        );
    }
    let ly = top + 10.0 + reports.len() as f64 * 20.0 + 10.0;
    let _ = writeln!(s, r##"<text x="{lx}" y="{ly}" fill="#555">solid: Acc-2, dashed: F1</text>"##);
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    format!("{r}")
}

// ---------------------------------------------------------------------------
// Augmentation

/// Write `copies` noised copies of every instance in `dataset` into
/// `out_dir` and return the manifest of the copies (same labels, ids
/// suffixed with `-aug{n}`). Copy `n` of instance `id` uses a seed derived
/// from the spec seed, the id and `n`.
pub fn augment(
    dataset: &Dataset,
    spec: &NoiseSpec,
    copies: usize,
    out_dir: &Path,
    opts: &MaterializeOptions,
) -> Result<Dataset, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let units: Vec<(usize, usize)> = (0..dataset.instances.len()).flat_map(|i| (0..copies).map(move |c| (i, c))).collect();
    let instances = units
        .par_iter()
        .map(|&(i, c)| {
            let inst = &dataset.instances[i];
            let mut s = spec.clone();
            s.seed = derive_seed(spec.seed, &[inst.id.as_bytes(), &(c as u64).to_le_bytes()]);
            let id = format!("{}-aug{c}", inst.id);
            let noised = materialize(inst, &id, &s, out_dir, opts)?;
            Ok(Instance {
                id,
                label: inst.label,
                split: inst.split.clone(),
                media: noised.media,
                features: noised.features,
                transcript: noised.transcript,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let out = Dataset { instances };
    out.save(&out_dir.join("manifest.json"))?;
    Ok(out)
}

/// A transcript loader that tolerates missing files by returning `None`.
pub fn try_load_transcript(path: Option<&Path>) -> Option<Transcript> {
    path.and_then(|p| text_noise::load_asr_variant(p).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rec(label: f64, prediction: f64) -> PredictionRecord {
        PredictionRecord {
            id: String::new(),
            label,
            prediction,
            sigma: 0.0,
            repeat: 0,
        }
    }

    #[test]
    fn interior_points() {
        assert_eq!(default_points(&Interval::new(0.0, 11.0, 1.0)).unwrap(), (1..=10).map(f64::from).collect::<Vec<_>>());
        let p = default_points(&Interval::new(0.0, 1.0, 0.1)).unwrap();
        for (k, v) in p.iter().enumerate() {
            assert_abs_diff_eq!(*v, (k + 1) as f64 / 11.0, epsilon = 1e-15);
        }
        assert!(matches!(default_points(&Interval::new(1.0, 1.0, 0.1)), Err(EvalError::BadInterval { .. })));
        assert_eq!(Interval::new(0.0, 100.0, 10.0).step_grid().unwrap().len(), 11);
    }

    #[test]
    fn air_of_constants_and_scaling() {
        let iv = Interval::new(0.0, 10.0, 1.0);
        let pts = default_points(&iv).unwrap();
        let vals: Vec<(f64, f64)> = pts.iter().map(|&p| (p, 0.8)).collect();
        assert_eq!(air(&vals, &pts, &iv, true).unwrap(), 0.8);
        assert_abs_diff_eq!(air(&vals, &pts, &iv, false).unwrap(), 8.0, epsilon = 1e-12);
        assert!(matches!(air(&vals[1..], &pts, &iv, true), Err(EvalError::MissingLevel(_))));
    }

    #[test]
    fn binary_metrics_by_hand() {
        // truth: 4 positive, 4 negative; 3 TP, 1 FN, 3 TN, 1 FP
        let recs = [
            rec(1.0, 0.5),
            rec(2.0, 1.0),
            rec(0.0, 3.0),
            rec(1.5, -1.0),
            rec(-1.0, -0.5),
            rec(-2.0, -2.0),
            rec(-0.5, -0.1),
            rec(-1.0, 0.2),
        ];
        let m = acc2_f1(&recs, LabelType::Regression).unwrap();
        assert_eq!(m.acc2, 0.75);
        // both classes: precision 3/4, recall 3/4, f1 0.75, weights 1/2
        assert_abs_diff_eq!(m.f1, 0.75, epsilon = 1e-12);
        let wrong: Vec<_> = [1.0, -2.0, 0.5].iter().map(|&l| rec(l, -l - 0.1)).collect();
        assert_eq!(acc2_f1(&wrong, LabelType::Regression).unwrap().acc2, 0.0);
        assert!(acc2_f1(&[], LabelType::Regression).is_err());
        let b = acc2_f1(&[rec(1.0, 0.9), rec(0.0, 0.2)], LabelType::Binary).unwrap();
        assert_eq!((b.acc2, b.f1), (1.0, 1.0));
    }

    #[test]
    fn predictions_csv_errors_name_the_line() {
        let ok = parse_predictions_csv("id,prediction\na,0.5\nb,-1\n", "p").unwrap();
        assert_eq!(ok, vec![("a".into(), 0.5), ("b".into(), -1.0)]);
        let err = parse_predictions_csv("id,prediction\na,0.5\nb,oops\n", "p").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(parse_predictions_csv("name,value\n", "p").is_err());
    }

    #[test]
    fn presets_cover_the_table() {
        let g = SweepPlan::preset("G-Blur").unwrap();
        assert_eq!(g.interval, Interval::new(0.0, 10.0, 1.0));
        assert_eq!(indicator_scale(g.noise_kind().unwrap()), 10.0);
        let spec = g.spec_for(5.0, "x", 0).unwrap();
        assert_eq!(spec.items[0].intensity, 0.5);
        assert_eq!(SweepPlan::preset("BG-Park").unwrap().params["asset"], "park");
        assert!(SweepPlan::preset("nope").is_none());
        let json = g.to_json_pretty();
        assert_eq!(SweepPlan::from_json(&json).unwrap(), g);
    }

    #[test]
    fn seeds_vary_with_every_coordinate() {
        let base = instance_seed(1, 0.5, "a", 0);
        assert_ne!(base, instance_seed(2, 0.5, "a", 0));
        assert_ne!(base, instance_seed(1, 0.6, "a", 0));
        assert_ne!(base, instance_seed(1, 0.5, "b", 0));
        assert_ne!(base, instance_seed(1, 0.5, "a", 1));
        assert_eq!(base, instance_seed(1, 0.5, "a", 0));
    }

    #[test]
    fn predictor_spec_json() {
        let json = r#"{"name":"m","mode":"command","command":["python","p.py","{manifest}","{output}"]}"#;
        let spec: PredictorSpec = serde_json::from_str(json).unwrap();
        assert!(spec.stateless);
        assert_eq!(spec.label_type, LabelType::Regression);
        assert!(matches!(spec.source, PredictorSource::Command { .. }));
    }
}
