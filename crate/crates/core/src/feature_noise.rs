//! Feature-level erasure on extracted `T × D` feature sequences, and the
//! binary container used to exchange them.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! offset  size     field
//! 0       4        magic  b"VNAF"
//! 4       4        version (u32) = 1
//! 8       8        T, timesteps (u64)
//! 16      8        D, dimensions (u64)
//! 24      4·T·D    values, row-major f32
//! ..      T        mask, one byte per timestep (1 = valid, 0 = dropped)
//! ```
//!
//! A JSON sidecar (`<file>.json`) carries the modality tag and provenance.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

pub const MAGIC: &[u8; 4] = b"VNAF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid feature sequence: {0}")]
    Invalid(String),
    #[error("timestep range {start}..{end} outside sequence of {len}")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    values: Vec<f32>,
    mask: Vec<bool>,
    dims: usize,
    pub modality: String,
}

impl FeatureSeq {
    pub fn new(values: Vec<f32>, timesteps: usize, dims: usize, modality: &str) -> Result<Self, FeatureError> {
        if values.len() != timesteps * dims {
            return Err(FeatureError::Invalid(format!(
                "{} values for {timesteps}x{dims}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            mask: vec![true; timesteps],
            dims,
            modality: modality.to_string(),
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self, FeatureError> {
        if mask.len() != self.mask.len() {
            return Err(FeatureError::Invalid("mask length differs from T".into()));
        }
        for (t, &valid) in mask.iter().enumerate() {
            if !valid {
                self.row_mut(t).fill(0.0);
            }
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn timesteps(&self) -> usize {
        self.mask.len()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    fn row_mut(&mut self, t: usize) -> &mut [f32] {
        &mut self.values[t * self.dims..(t + 1) * self.dims]
    }

    fn drop_step(&mut self, t: usize) {
        self.row_mut(t).fill(0.0);
        self.mask[t] = false;
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    fn check_range(&self, range: &Range<usize>) -> Result<(), FeatureError> {
        if range.start > range.end || range.end > self.timesteps() {
            return Err(FeatureError::RangeOutOfBounds {
                start: range.start,
                end: range.end,
                len: self.timesteps(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let t = self.timesteps();
        let mut out = Vec::with_capacity(24 + self.values.len() * 4 + t);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(t as u64).to_le_bytes());
        out.extend_from_slice(&(self.dims as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(self.mask.iter().map(|&m| m as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8], modality: &str) -> Result<Self, String> {
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err("missing VNAF header".into());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let t = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let n = t.checked_mul(d).ok_or("dimension overflow")?;
        let expected = 24 + n * 4 + t;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        let values = bytes[24..24 + n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mask = bytes[24 + n * 4..].iter().map(|&b| b != 0).collect();
        Ok(Self {
            values,
            mask,
            dims: d,
            modality: modality.to_string(),
        })
    }
}

/// JSON sidecar stored next to a feature file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub modality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_features(path: &Path, fs: &FeatureSeq, provenance: Option<serde_json::Value>) -> Result<(), FeatureError> {
    let io = |source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::write(path, fs.to_bytes()).map_err(io)?;
    let sidecar = FeatureSidecar {
        modality: fs.modality.clone(),
        provenance,
    };
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes")).map_err(io)
}

pub fn read_features(path: &Path) -> Result<FeatureSeq, FeatureError> {
    let bytes = std::fs::read(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let sidecar: FeatureSidecar = match std::fs::read(sidecar_path(path)) {
        Ok(b) => serde_json::from_slice(&b).map_err(|e| FeatureError::Format {
            path: sidecar_path(path),
            reason: e.to_string(),
        })?,
        Err(_) => FeatureSidecar::default(),
    };
    FeatureSeq::from_bytes(&bytes, &sidecar.modality).map_err(|reason| FeatureError::Format {
        path: path.to_path_buf(),
        reason,
    })
}

/// Zero each valid timestep in `range` independently with probability
/// `missing_rate`.
pub fn random_drop_range(fs: &FeatureSeq, range: Range<usize>, missing_rate: f64, seed: u64) -> Result<FeatureSeq, FeatureError> {
    fs.check_range(&range)?;
    let mut out = fs.clone();
    let mut rng = SeededRng::new(seed);
    for t in range {
        if out.mask[t] && rng.bernoulli(missing_rate) {
            out.drop_step(t);
        }
    }
    Ok(out)
}

pub fn random_drop(fs: &FeatureSeq, missing_rate: f64, seed: u64) -> FeatureSeq {
    random_drop_range(fs, 0..fs.timesteps(), missing_rate, seed).expect("full range is in bounds")
}

/// Length of the erased block: `round(rate · T)`, half-up, with rate 1
/// always covering everything.
pub fn block_len(missing_rate: f64, timesteps: usize) -> usize {
    if missing_rate >= 1.0 {
        return timesteps;
    }
    ((missing_rate * timesteps as f64 + 0.5).floor() as usize).min(timesteps)
}

/// Zero one contiguous block of `round(rate · len)` timesteps inside `range`
/// at a seeded-uniform position.
pub fn structural_drop_range(fs: &FeatureSeq, range: Range<usize>, missing_rate: f64, seed: u64) -> Result<FeatureSeq, FeatureError> {
    fs.check_range(&range)?;
    let len = block_len(missing_rate, range.len());
    let mut out = fs.clone();
    if len == 0 {
        return Ok(out);
    }
    let mut rng = SeededRng::new(seed);
    let start = range.start + rng.below((range.len() - len + 1) as u64) as usize;
    for t in start..start + len {
        out.drop_step(t);
    }
    Ok(out)
}

pub fn structural_drop(fs: &FeatureSeq, missing_rate: f64, seed: u64) -> FeatureSeq {
    structural_drop_range(fs, 0..fs.timesteps(), missing_rate, seed).expect("full range is in bounds")
}
