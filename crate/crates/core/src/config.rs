//! Experiment files.
//!
//! ```json
//! {
//!   "model": "qm-contextual",
//!   "analyzers": {
//!     "A":  {"orientation": [0, 0, 1]},
//!     "A'": {"orientation": {"theta": "90deg", "phi": 0}},
//!     "B":  {"orientation": {"theta": "45deg"}, "epsilon": 0.1, "eta": 0.8},
//!     "B'": {"orientation": {"theta": "135deg"}, "smearing": "delta"}
//!   },
//!   "settings": [["A", "B"], ["A", "B'"], ["A'", "B'"], ["A'", "B"]],
//!   "pairs": 1000000, "runs": 10, "mode": "fresh", "seed": 1
//! }
//! ```
//!
//! Unknown keys are rejected. Angles are radians unless written as strings
//! with a `deg` suffix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{ChshDirections, RunConfig, SamplingMode, DEFAULT_PAIRS, DEFAULT_RUNS};
use crate::error::{Error, Result};
use crate::geometry::{Angle, Direction, SmearingKind};
use crate::models::{contextual_sampler, Model};
use crate::quantum::{AnalyzerSpec, SettingPair};

pub const DEFAULT_HERBERT_LEVEL: f64 = 0.9999;

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub model: Option<String>,
    #[serde(default)]
    pub analyzers: BTreeMap<String, AnalyzerEntry>,
    #[serde(default)]
    pub settings: Vec<[String; 2]>,
    pub pairs: Option<u64>,
    pub runs: Option<u64>,
    pub mode: Option<SamplingMode>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub record_pairs: bool,
    pub herbert: Option<HerbertOptions>,
    pub scan: Option<ScanOptions>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerEntry {
    pub orientation: Direction,
    #[serde(default)]
    pub epsilon: f64,
    /// Defaults to `uniform-cap` when `epsilon > 0`, `delta` otherwise.
    pub smearing: Option<SmearingKind>,
    #[serde(default = "one")]
    pub eta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HerbertOptions {
    pub thetas: Vec<Angle>,
    #[serde(default = "default_level")]
    pub ci_level: f64,
}

fn default_level() -> f64 {
    DEFAULT_HERBERT_LEVEL
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScanOptions {
    pub start: Angle,
    pub stop: Angle,
    pub steps: usize,
    /// Analyzer names whose smearing and efficiency the scan uses.
    pub first: Option<String>,
    pub second: Option<String>,
}

impl ScanOptions {
    /// `steps` evenly spaced angles from `start` to `stop` inclusive.
    pub fn grid(&self) -> Result<Vec<f64>> {
        let (a, b) = (self.start.radians(), self.stop.radians());
        match self.steps {
            0 => Err(Error::Config("scan grid is empty (steps = 0)".into())),
            1 => Ok(vec![a]),
            n => Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()),
        }
    }
}

/// Command-line values that replace file fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub pairs: Option<u64>,
    pub runs: Option<u64>,
    pub model: Option<String>,
    pub mode: Option<SamplingMode>,
    pub workers: Option<usize>,
}

/// 1-based line of the first occurrence of `needle`, for error messages.
fn line_of(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

fn at_line(text: Option<&str>, needle: &str, msg: String) -> Error {
    match text.and_then(|t| line_of(t, needle)) {
        Some(line) => Error::Config(format!("line {line}: {msg}")),
        None => Error::Config(msg),
    }
}

impl ExperimentFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file = Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config error: "))))?;
        Ok((file, text))
    }

    /// Validates names and values and applies `overrides`. `source` is the
    /// original text, used to point errors at a line.
    pub fn resolve(&self, overrides: &Overrides, source: Option<&str>) -> Result<Experiment> {
        let model_name = overrides
            .model
            .clone()
            .or_else(|| self.model.clone())
            .unwrap_or_else(contextual_sampler_name);
        let model: Model = model_name
            .parse()
            .map_err(|e: Error| at_line(source, &model_name, e.to_string()))?;

        let mut analyzers = BTreeMap::new();
        for (name, entry) in &self.analyzers {
            let kind = entry.smearing.unwrap_or(if entry.epsilon > 0.0 {
                SmearingKind::UniformCap
            } else {
                SmearingKind::Delta
            });
            let spec = AnalyzerSpec::new(entry.orientation, kind, entry.epsilon, entry.eta)
                .map_err(|e| at_line(source, &format!("\"{name}\""), format!("analyzer `{name}`: {e}")))?;
            analyzers.insert(name.clone(), spec);
        }
        let lookup = |name: &str| {
            analyzers
                .get(name)
                .copied()
                .ok_or_else(|| at_line(source, &format!("\"{name}\""), format!("unknown analyzer `{name}`")))
        };

        let mut settings = Vec::with_capacity(self.settings.len());
        for [first, second] in &self.settings {
            settings.push(SettingPair::new(lookup(first)?, lookup(second)?));
        }

        let scan_analyzers = match &self.scan {
            Some(s) => {
                let pick = |n: &Option<String>| n.as_deref().map(&lookup).transpose();
                (pick(&s.first)?, pick(&s.second)?)
            }
            None => (None, None),
        };

        Ok(Experiment {
            model,
            settings,
            setting_labels: self.settings.clone(),
            pairs: overrides.pairs.or(self.pairs).unwrap_or(DEFAULT_PAIRS),
            runs: overrides.runs.or(self.runs).unwrap_or(DEFAULT_RUNS),
            mode: overrides.mode.or(self.mode).unwrap_or_default(),
            seed: overrides.seed.or(self.seed),
            workers: overrides.workers.or(self.workers).unwrap_or(0),
            record_pairs: self.record_pairs,
            herbert: self.herbert.clone(),
            scan: self.scan.clone(),
            scan_analyzers,
        })
    }
}

fn contextual_sampler_name() -> String {
    Model::QmContextual(contextual_sampler()).name()
}

/// A validated experiment file with overrides applied.
#[derive(Debug, Clone, Serialize)]
pub struct Experiment {
    pub model: Model,
    pub settings: Vec<SettingPair>,
    pub setting_labels: Vec<[String; 2]>,
    pub pairs: u64,
    pub runs: u64,
    pub mode: SamplingMode,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub workers: usize,
    pub record_pairs: bool,
    pub herbert: Option<HerbertOptions>,
    pub scan: Option<ScanOptions>,
    #[serde(skip)]
    pub scan_analyzers: (Option<AnalyzerSpec>, Option<AnalyzerSpec>),
}

impl Experiment {
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (set \"seed\" or pass --seed)".into()))
    }

    /// Settings for a CHSH run; standard coplanar angles when none are given.
    pub fn chsh_settings(&self) -> Result<Vec<SettingPair>> {
        if self.settings.is_empty() {
            return Ok(ChshDirections::standard().setting_pairs().to_vec());
        }
        ChshDirections::from_settings(&self.settings)?;
        Ok(self.settings.clone())
    }

    pub fn run_config(&self, settings: Vec<SettingPair>) -> Result<RunConfig> {
        let cfg = RunConfig {
            model: self.model,
            settings,
            pairs_per_run: self.pairs,
            runs: self.runs,
            mode: self.mode,
            seed: self.require_seed()?,
            workers: self.workers,
            record_pairs: self.record_pairs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
