//! Word-level attacks on transcripts and ingestion of externally produced
//! ASR-error transcripts.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{parse_json, ConfigError};
use crate::rng::SeededRng;

/// Token used for replacements when no lexicon is supplied.
pub const UNKNOWN_TOKEN: &str = "[UNK]";

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("word range {start}..{end} outside transcript of {len} words")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error("replacement lexicon is empty")]
    EmptyLexicon,
    #[error("word {index} has no timing; time-addressed text noise needs aligned words")]
    MissingWordTimes { index: usize },
    #[error("word {index}: {reason}")]
    BadTiming { index: usize, reason: String },
    #[error(transparent)]
    Parse(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_s: Option<f64>,
}

impl Word {
    pub fn new(token: impl Into<String>) -> Self {
        Self {
            token: token.into(),
            start_s: None,
            end_s: None,
        }
    }

    pub fn timed(token: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            token: token.into(),
            start_s: Some(start_s),
            end_s: Some(end_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub language: String,
    pub words: Vec<Word>,
}

impl Transcript {
    pub fn new(language: &str, words: Vec<Word>) -> Self {
        Self {
            language: language.to_string(),
            words,
        }
    }

    pub fn from_tokens(language: &str, text: &str) -> Self {
        Self::new(language, text.split_whitespace().map(Word::new).collect())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.token.as_str()).collect()
    }

    /// Word times, where present, must be ordered and non-overlapping.
    pub fn check_timing(&self) -> Result<(), TextError> {
        let mut last_end = f64::NEG_INFINITY;
        for (index, w) in self.words.iter().enumerate() {
            let bad = |reason: &str| TextError::BadTiming {
                index,
                reason: reason.to_string(),
            };
            if let (Some(s), Some(e)) = (w.start_s, w.end_s) {
                if !(s <= e) {
                    return Err(bad("end precedes start"));
                }
            }
            if let Some(s) = w.start_s.or(w.end_s) {
                if s < last_end {
                    return Err(bad("overlaps the previous word"));
                }
            }
            if let Some(e) = w.end_s.or(w.start_s) {
                last_end = e;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TextError> {
        let t: Transcript = parse_json(text)?;
        t.check_timing()?;
        Ok(t)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serialization is infallible")
    }

    /// Indices of the words whose timing intersects `[start_s, end_s)`.
    pub fn words_in_time(&self, start_s: f64, end_s: f64) -> Result<Range<usize>, TextError> {
        let mut first = None;
        let mut last = None;
        for (index, w) in self.words.iter().enumerate() {
            let (s, e) = match (w.start_s, w.end_s) {
                (Some(s), Some(e)) => (s, e),
                _ => return Err(TextError::MissingWordTimes { index }),
            };
            let hit = s < end_s && (e > start_s || (s == e && s >= start_s));
            if hit {
                first.get_or_insert(index);
                last = Some(index);
            }
        }
        Ok(match (first, last) {
            (Some(a), Some(b)) => a..b + 1,
            _ => 0..0,
        })
    }

    fn check_range(&self, range: &Range<usize>) -> Result<(), TextError> {
        if range.start > range.end || range.end > self.words.len() {
            return Err(TextError::RangeOutOfBounds {
                start: range.start,
                end: range.end,
                len: self.words.len(),
            });
        }
        Ok(())
    }
}

/// Remove each in-range word independently with probability `intensity`.
pub fn erase_words(t: &Transcript, range: Range<usize>, intensity: f64, seed: u64) -> Result<Transcript, TextError> {
    t.check_range(&range)?;
    let mut rng = SeededRng::new(seed);
    let words = t
        .words
        .iter()
        .enumerate()
        .filter(|(i, _)| !range.contains(i) || !rng.bernoulli(intensity))
        .map(|(_, w)| w.clone())
        .collect();
    Ok(Transcript {
        language: t.language.clone(),
        words,
    })
}

/// Replace each in-range word with probability `intensity` by a uniform draw
/// from `lexicon`, or by [`UNKNOWN_TOKEN`] without one. Timing is kept.
pub fn replace_words(
    t: &Transcript,
    range: Range<usize>,
    intensity: f64,
    seed: u64,
    lexicon: Option<&[String]>,
) -> Result<Transcript, TextError> {
    t.check_range(&range)?;
    if lexicon.is_some_and(|l| l.is_empty()) {
        return Err(TextError::EmptyLexicon);
    }
    let mut rng = SeededRng::new(seed);
    let mut out = t.clone();
    for w in &mut out.words[range] {
        if rng.bernoulli(intensity) {
            w.token = match lexicon {
                Some(l) => l[rng.below(l.len() as u64) as usize].clone(),
                None => UNKNOWN_TOKEN.to_string(),
            };
        }
    }
    Ok(out)
}

/// Read an ASR output transcript produced by an external recognizer.
pub fn load_asr_variant(path: &Path) -> Result<Transcript, TextError> {
    let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Transcript::from_json(&text)
}
