//! Experiment configuration: a flat `key = value` file plus CLI overrides.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `architecture` | `linear`, `residual` or `nonlinear` | `linear` |
//! | `d`, `m` | data dimensions | `2`, `d` |
//! | `l` | depth (linear, residual) | `2` |
//! | `r` | shortcut depth, residual only | `1` |
//! | `slope` | activation slope `a`, nonlinear only | `0.5` |
//! | `fixture` | `f1` or a fixture path; fixes `d` and `m` | generated |
//! | `y_scale` | multiplies `Y` of the fixture | `1` |
//! | `transforms` | `identity` or `random` | `random` |
//! | `cond_max` | condition bound for random transforms | `10` |
//! | `seed` | 64-bit seed for every random draw | `0` |
//! | `samples` | gradient-dominance samples | `10000` |
//! | `rc_samples` | regularity samples per search level and re-check | `2000` |
//! | `gamma` | regularity weight in `(0, 1)` | `0.5` |
//! | `delta` | `eta_min` or a positive number | `eta_min` |
//! | `gd_radius` | overrides the sampling radius | analytic radius |
//! | `eps_hi`, `eps_levels` | regularity search lattice | `1`, `40` |
//! | `epsilon` | skips the search and uses this radius | searched |
//! | `descent_iters` | iteration budget | `5000` |
//! | `descent_start` | start displacement as a fraction of the radius | `0.5` |
//! | `step` | fixed step size | half the inverse curvature |
//! | `output` | report path | stdout |
//! | `format` | `json` or `csv` | `json` |
//!
//! Unknown keys, duplicate keys and malformed values are errors.

use std::path::PathBuf;

use landscape_core::minimizers::DEFAULT_COND_MAX;
use landscape_core::networks::Architecture;
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPolicy {
    EtaMin,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Generated,
    F1,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformPolicy {
    Identity,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub architecture: Architecture,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub l: usize,
    pub r: Option<usize>,
    pub slope: Option<f64>,
    pub fixture: DataSource,
    pub y_scale: f64,
    pub transforms: TransformPolicy,
    pub cond_max: f64,
    pub seed: u64,
    pub samples: usize,
    pub rc_samples: usize,
    pub gamma: f64,
    pub delta: DeltaPolicy,
    pub gd_radius: Option<f64>,
    pub eps_hi: f64,
    pub eps_levels: usize,
    pub epsilon: Option<f64>,
    pub descent_iters: usize,
    pub descent_start: f64,
    pub step: Option<f64>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Linear,
            d: None,
            m: None,
            l: 2,
            r: None,
            slope: None,
            fixture: DataSource::Generated,
            y_scale: 1.0,
            transforms: TransformPolicy::Random,
            cond_max: DEFAULT_COND_MAX,
            seed: 0,
            samples: 10_000,
            rc_samples: 2_000,
            gamma: 0.5,
            delta: DeltaPolicy::EtaMin,
            gd_radius: None,
            eps_hi: 1.0,
            eps_levels: 40,
            epsilon: None,
            descent_iters: 5_000,
            descent_start: 0.5,
            step: None,
            output: None,
            format: Format::Json,
        }
    }
}

/// Which parts of a run a command needs; landscape checks need `m = d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Generate,
    Minimize,
    Landscape,
}

fn bad(field: &str, message: impl Into<String>) -> LabError {
    LabError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T, LabError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| bad(field, format!("`{v}`: {e}")))
}

fn positive(field: &str, v: f64) -> Result<f64, LabError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(field, format!("must be positive and finite, got {v}")))
    }
}

pub fn parse_architecture(v: &str) -> Result<Architecture, LabError> {
    match v {
        "linear" => Ok(Architecture::Linear),
        "residual" => Ok(Architecture::Residual),
        "nonlinear" => Ok(Architecture::Nonlinear),
        _ => Err(bad("architecture", format!("unknown architecture `{v}`"))),
    }
}

pub fn parse_delta(v: &str) -> Result<DeltaPolicy, LabError> {
    if v == "eta_min" {
        Ok(DeltaPolicy::EtaMin)
    } else {
        Ok(DeltaPolicy::Fixed(positive("delta", num("delta", v)?)?))
    }
}

pub fn parse_format(v: &str) -> Result<Format, LabError> {
    match v {
        "json" => Ok(Format::Json),
        "csv" => Ok(Format::Csv),
        _ => Err(bad("format", format!("expected json or csv, got `{v}`"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), LabError> {
        match key {
            "architecture" => self.architecture = parse_architecture(v)?,
            "d" => self.d = Some(num(key, v)?),
            "m" => self.m = Some(num(key, v)?),
            "l" => self.l = num(key, v)?,
            "r" => self.r = Some(num(key, v)?),
            "slope" => self.slope = Some(num(key, v)?),
            "fixture" => {
                self.fixture = match v {
                    "f1" => DataSource::F1,
                    "generated" => DataSource::Generated,
                    path => DataSource::File(PathBuf::from(path)),
                }
            }
            "y_scale" => self.y_scale = num(key, v)?,
            "transforms" => {
                self.transforms = match v {
                    "identity" => TransformPolicy::Identity,
                    "random" => TransformPolicy::Random,
                    _ => return Err(bad(key, format!("expected identity or random, got `{v}`"))),
                }
            }
            "cond_max" => self.cond_max = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "rc_samples" => self.rc_samples = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "delta" => self.delta = parse_delta(v)?,
            "gd_radius" => self.gd_radius = Some(positive(key, num(key, v)?)?),
            "eps_hi" => self.eps_hi = num(key, v)?,
            "eps_levels" => self.eps_levels = num(key, v)?,
            "epsilon" => self.epsilon = Some(positive(key, num(key, v)?)?),
            "descent_iters" => self.descent_iters = num(key, v)?,
            "descent_start" => self.descent_start = num(key, v)?,
            "step" => self.step = Some(positive(key, num(key, v)?)?),
            "output" => self.output = Some(PathBuf::from(v)),
            "format" => self.format = parse_format(v)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, LabError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad("<file>", format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(bad(k, format!("line {}: duplicate key", i + 1)));
            }
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn shortcut_depth(&self) -> usize {
        self.r.unwrap_or(1)
    }

    pub fn activation_slope(&self) -> f64 {
        self.slope.unwrap_or(0.5)
    }

    /// Checks field ranges and architecture compatibility for `scope`.
    pub fn validate(&self, scope: Scope) -> Result<(), LabError> {
        if self.r.is_some() && self.architecture != Architecture::Residual {
            return Err(bad("r", "only valid for the residual architecture"));
        }
        if self.slope.is_some() && self.architecture != Architecture::Nonlinear {
            return Err(bad("slope", "only valid for the nonlinear architecture"));
        }
        if let Some(a) = self.slope {
            if !(a > 0.0 && a < 1.0) {
                return Err(bad("slope", format!("must lie in (0, 1), got {a}")));
            }
        }
        if self.l == 0 {
            return Err(bad("l", "must be at least 1"));
        }
        if self.architecture == Architecture::Nonlinear && self.l != 2 {
            return Err(bad("l", "the nonlinear architecture has exactly two layers"));
        }
        if self.r == Some(0) {
            return Err(bad("r", "must be at least 1"));
        }
        if self.d == Some(0) {
            return Err(bad("d", "must be positive"));
        }
        if let (Some(d), Some(m)) = (self.d, self.m) {
            if m < d {
                return Err(bad("m", format!("m = {m} < d = {d}")));
            }
            let square_needed = scope == Scope::Landscape || self.architecture != Architecture::Linear;
            if square_needed && scope != Scope::Generate && m != d {
                return Err(bad("m", "this command needs m = d"));
            }
        }
        positive("y_scale", self.y_scale)?;
        if !(self.cond_max >= 1.0) {
            return Err(bad("cond_max", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if scope == Scope::Landscape {
            if self.samples == 0 {
                return Err(bad("samples", "must be positive"));
            }
            if self.rc_samples == 0 {
                return Err(bad("rc_samples", "must be positive"));
            }
            positive("eps_hi", self.eps_hi)?;
            if self.eps_levels < 2 {
                return Err(bad("eps_levels", "must be at least 2"));
            }
            if !(self.descent_start > 0.0 && self.descent_start < 1.0) {
                return Err(bad("descent_start", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}
