//! Deterministic multimodal noise injection and robustness evaluation for
//! video-language models.
//!
//! The crate is organised by modality carrier ([`audio_noise::PcmBuffer`],
//! [`video_noise::FrameSeq`], [`text_noise::Transcript`],
//! [`feature_noise::FeatureSeq`]), a declarative noise [`config`], a
//! transcoder-driven [`media_io`] pipeline, the robustness
//! [`evaluation`] harness and an HTTP [`service`].

pub mod audio_noise;
pub mod config;
pub mod engine;
pub mod evaluation;
pub mod feature_noise;
pub mod media_io;
pub mod rng;
pub mod service;
pub mod text_noise;
pub mod video_noise;

pub use config::{NoiseItem, NoiseKind, NoiseSpec, RandomSpecParams, ValidatedSpec};
pub use media_io::{MediaError, MediaMeta};
