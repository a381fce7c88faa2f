use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::files::DetectionFormat;
use super::{IoError, Result};
use crate::filter::{BoxModel, Thresholds};
use crate::metrics::MetricSettings;
use crate::sim::{preset, Scenario};

/// What produces the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The confusion-aware joint filter.
    Ntype,
    /// One standard filter per type, blind to confusion.
    Independent,
    /// Raw detections reported as estimates of their detector's type.
    Detections,
    /// All three on the same detection stream.
    Compare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ntype => "ntype",
            Mode::Independent => "independent",
            Mode::Detections => "detections",
            Mode::Compare => "compare",
        }
    }
}

/// Existing detection (and optional truth) files to track on instead of
/// simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFiles {
    pub detections: PathBuf,
    #[serde(default = "default_format")]
    pub format: DetectionFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

fn default_format() -> DetectionFormat {
    DetectionFormat::SimCsv
}

/// Birth and mixture-reduction settings of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub birth_weight: f64,
    pub birth_cov_diag: [f64; 6],
    pub prune: f64,
    pub merge: f64,
    pub extract: f64,
    pub max_components: usize,
}

impl Default for FilterSettings {
    fn default() -> Self {
        let t = Thresholds::default();
        Self {
            birth_weight: 1e-4,
            birth_cov_diag: [100.0, 100.0, 25.0, 25.0, 20.0, 20.0],
            prune: t.prune,
            merge: t.merge,
            extract: t.extract,
            max_components: t.max_components,
        }
    }
}

impl FilterSettings {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            prune: self.prune,
            merge: self.merge,
            extract: self.extract,
            max_components: self.max_components,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of a built-in scenario; exclusive with `scenario`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    /// Overrides the scenario's seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputFiles>,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub metrics: MetricSettings,
}

fn default_mode() -> Mode {
    Mode::Ntype
}

fn default_replicates() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            scenario: None,
            seed: None,
            mode: default_mode(),
            replicates: default_replicates(),
            out: default_out(),
            input: None,
            filter: FilterSettings::default(),
            metrics: MetricSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            ..Self::default()
        }
    }

    /// The scenario this run describes, with the seed override applied.
    pub fn resolve_scenario(&self) -> Result<Scenario> {
        let mut scn = match (&self.preset, &self.scenario) {
            (Some(_), Some(_)) => {
                return Err(IoError::Invalid(
                    "set either preset or [scenario], not both".into(),
                ));
            }
            (Some(name), None) => {
                preset(name).map_err(|e| IoError::Invalid(format!("preset: {e}")))?
            }
            (None, Some(s)) => s.clone(),
            (None, None) => {
                return Err(IoError::Invalid(
                    "no scenario: set preset or [scenario]".into(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            scn.seed = seed;
        }
        Ok(scn)
    }

    pub fn box_model(&self, scn: &Scenario) -> BoxModel {
        scn.filter_model(
            self.filter.birth_weight,
            self.filter.birth_cov_diag,
            self.filter.thresholds(),
        )
    }

    /// Checks every field; errors name the offending entry.
    pub fn validate(&self) -> Result<()> {
        let scn = self.resolve_scenario()?;
        scn.validate()
            .map_err(|e| IoError::Invalid(e.to_string()))?;
        self.box_model(&scn)
            .build::<f64>()
            .map_err(|e| IoError::Invalid(format!("filter: {e}")))?;
        if self.replicates == 0 {
            return Err(IoError::Invalid("replicates must be at least 1".into()));
        }
        self.metrics
            .validate()
            .map_err(|e| IoError::Invalid(format!("metrics: {e}")))?;
        if !(self.metrics.gate >= 0.0) {
            return Err(IoError::Invalid(format!(
                "metrics.gate = {} must be non-negative",
                self.metrics.gate
            )));
        }
        if let Some(input) = &self.input {
            for p in std::iter::once(&input.detections).chain(&input.truth) {
                if !p.is_file() {
                    return Err(IoError::Invalid(format!(
                        "input file {} does not exist",
                        p.display()
                    )));
                }
            }
            if input.format == DetectionFormat::Mot && scn.n_types != 1 {
                return Err(IoError::Invalid(format!(
                    "MOT input needs a single-type scenario, got {} types",
                    scn.n_types
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| IoError::Invalid(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| IoError::Invalid(e.to_string()))
    }
}

/// Reads and validates a TOML run configuration. Relative input paths are
/// taken relative to the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| IoError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    if let Some(input) = &mut cfg.input {
        for p in std::iter::once(&mut input.detections).chain(input.truth.as_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    cfg.validate().map_err(|e| IoError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}
