//! Line-based `key = value` settings.
//!
//! Layers apply in order defaults, file, `FGVC_SEED`, command-line flags;
//! a later layer overrides an earlier one key by key.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::pipeline::{CodecParams, FusionWeight, PriorKind, PriorSource};
use crate::prior::PowerLawProfile;
use crate::qctrl::ControlConfig;

pub const SEED_ENV: &str = "FGVC_SEED";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}")]
    InvalidValue { key: String, value: String },
}

/// Codec parameters plus encoder policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub params: CodecParams,
    pub t_star: Option<usize>,
    pub target_quality: Option<f64>,
    pub reuse_history: bool,
    pub control: ControlConfig,
    /// Variance-profile sidecar replacing the power-law prior.
    pub profile: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            params: CodecParams::default(),
            t_star: None,
            target_quality: None,
            reuse_history: true,
            control: ControlConfig::default(),
            profile: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "gop_len",
    "overlap",
    "temporal",
    "spatial",
    "steps",
    "beta_start",
    "beta_end",
    "coeffs_per_chunk",
    "kl_cap",
    "gamma",
    "prior",
    "prior_amplitude",
    "prior_exponent",
    "eps_var",
    "profile",
    "base_seed",
    "t_star",
    "target_quality",
    "reuse_history",
    "anchors",
    "eps",
    "max_iters",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl Settings {
    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        let bad = || ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "gop_len" => p.gop_len = parse(key, value)?,
            "overlap" => p.overlap = parse(key, value)?,
            "temporal" => p.transform.temporal = parse(key, value)?,
            "spatial" => p.transform.spatial = parse(key, value)?,
            "steps" => p.steps = parse(key, value)?,
            "beta_start" => p.beta_start = parse(key, value)?,
            "beta_end" => p.beta_end = parse(key, value)?,
            "coeffs_per_chunk" => p.chunk_rule.coeffs_per_chunk = parse(key, value)?,
            "kl_cap" => p.chunk_rule.kl_cap = parse(key, value)?,
            "gamma" => {
                p.gamma = if value == "linear" {
                    FusionWeight::Linear
                } else {
                    FusionWeight::Constant(parse(key, value)?)
                }
            }
            "prior" => {
                p.prior.kind = match value {
                    "joint" => PriorKind::Joint,
                    "framewise" => PriorKind::Framewise,
                    _ => return Err(bad()),
                }
            }
            "prior_amplitude" | "prior_exponent" => {
                let v: f64 = parse(key, value)?;
                let mut pl = match p.prior.source {
                    PriorSource::PowerLaw(pl) => pl,
                    PriorSource::Profile(_) => PowerLawProfile::default(),
                };
                if key == "prior_amplitude" {
                    pl.amplitude = v;
                } else {
                    pl.exponent = v;
                }
                p.prior.source = PriorSource::PowerLaw(pl);
            }
            "eps_var" => p.prior.eps_var = parse(key, value)?,
            "profile" => self.profile = Some(PathBuf::from(value)),
            "base_seed" => p.base_seed = parse(key, value)?,
            "t_star" => self.t_star = Some(parse(key, value)?),
            "target_quality" => self.target_quality = Some(parse(key, value)?),
            "reuse_history" => self.reuse_history = parse(key, value)?,
            "anchors" => self.control.anchors = parse(key, value)?,
            "eps" => self.control.eps = parse(key, value)?,
            "max_iters" => self.control.max_iters = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a config file body. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Resolves all layers: defaults, then `file`, then `env_seed`, then `flags`.
    pub fn resolve(file: Option<&str>, env_seed: Option<&str>, flags: &[(&str, String)]) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        if let Some(text) = file {
            s.apply_file(text)?;
        }
        if let Some(seed) = env_seed {
            s.set("base_seed", seed.trim())?;
        }
        for (k, v) in flags {
            s.set(k, v)?;
        }
        Ok(s)
    }
}
