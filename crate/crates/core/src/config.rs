//! Flat `key=value` configuration.
//!
//! ```text
//! # vidtok defaults
//! patch_size=14
//! merge_factor=2
//! prune_threshold=0.1
//! fps=1
//! max_frames=180
//! max_total_tokens=16384
//! max_vision_tokens=10240
//! encoder=identity
//! proj_dim=64
//! seed=0
//! ```
//!
//! Unknown keys are rejected. Missing keys keep their defaults.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::TokenBudget;
use crate::video::{EncoderPlug, RandomProjectionEncoder, SamplingPolicy, VideoTokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Identity,
    RandomProjection,
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(EncoderKind::Identity),
            "randproj" => Ok(EncoderKind::RandomProjection),
            other => Err(Error::Config(format!(
                "unknown encoder {other:?} (expected identity or randproj)"
            ))),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Identity => "identity",
            EncoderKind::RandomProjection => "randproj",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub patch_size: usize,
    pub merge_factor: usize,
    pub prune_threshold: f64,
    pub fps: f64,
    pub max_frames: usize,
    pub max_total_tokens: usize,
    pub max_vision_tokens: usize,
    pub encoder: EncoderKind,
    pub proj_dim: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            patch_size: 14,
            merge_factor: 2,
            prune_threshold: 0.1,
            fps: SamplingPolicy::DEFAULT_FPS,
            max_frames: SamplingPolicy::DEFAULT_MAX_FRAMES,
            max_total_tokens: TokenBudget::DEFAULT_MAX_TOTAL,
            max_vision_tokens: TokenBudget::DEFAULT_MAX_VISION,
            encoder: EncoderKind::Identity,
            proj_dim: RandomProjectionEncoder::DEFAULT_DIM,
            seed: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl Config {
    /// Parse a config file on top of the defaults.
    pub fn parse(src: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "patch_size" => self.patch_size = parse_value(key, value)?,
            "merge_factor" => self.merge_factor = parse_value(key, value)?,
            "prune_threshold" => self.prune_threshold = parse_value(key, value)?,
            "fps" => self.fps = parse_value(key, value)?,
            "max_frames" => self.max_frames = parse_value(key, value)?,
            "max_total_tokens" => self.max_total_tokens = parse_value(key, value)?,
            "max_vision_tokens" => self.max_vision_tokens = parse_value(key, value)?,
            "encoder" => self.encoder = value.parse()?,
            "proj_dim" => self.proj_dim = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.merge_factor == 0 || self.proj_dim == 0 {
            return Err(Error::Config(
                "patch_size, merge_factor and proj_dim must be positive".into(),
            ));
        }
        if self.prune_threshold.is_nan() || self.prune_threshold < 0.0 {
            return Err(Error::Config("prune_threshold must be >= 0".into()));
        }
        self.budget()?;
        self.policy()?;
        Ok(())
    }

    pub fn budget(&self) -> Result<TokenBudget> {
        TokenBudget::new(self.max_total_tokens, self.max_vision_tokens)
    }

    pub fn policy(&self) -> Result<SamplingPolicy> {
        SamplingPolicy::new(self.fps, self.max_frames)
    }

    pub fn encoder_plug(&self) -> Result<EncoderPlug> {
        match self.encoder {
            EncoderKind::Identity => Ok(EncoderPlug::identity()),
            EncoderKind::RandomProjection => {
                EncoderPlug::random_projection(self.proj_dim, self.seed)
            }
        }
    }

    pub fn tokenizer(&self) -> Result<VideoTokenizer> {
        self.validate()?;
        let mut tok = VideoTokenizer::new(self.encoder_plug()?);
        tok.patch_size = self.patch_size;
        tok.merge = self.merge_factor;
        tok.threshold = self.prune_threshold;
        tok.budget = self.budget()?;
        tok.policy = self.policy()?;
        Ok(tok)
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "patch_size={}", self.patch_size)?;
        writeln!(f, "merge_factor={}", self.merge_factor)?;
        writeln!(f, "prune_threshold={}", self.prune_threshold)?;
        writeln!(f, "fps={}", self.fps)?;
        writeln!(f, "max_frames={}", self.max_frames)?;
        writeln!(f, "max_total_tokens={}", self.max_total_tokens)?;
        writeln!(f, "max_vision_tokens={}", self.max_vision_tokens)?;
        writeln!(f, "encoder={}", self.encoder)?;
        writeln!(f, "proj_dim={}", self.proj_dim)?;
        writeln!(f, "seed={}", self.seed)
    }
}
