//! Experiment configuration: loading, defaults and validation.
//!
//! A config is JSON or TOML. A run manifest written by an experiment is
//! also accepted; its `config` block is used.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{set_distance, Admissibility, AngularSet};
use crate::model::{AngularMixture, IncrementModel, ModelSpec};
use crate::radial::RadialLaw;
use crate::simulate::{check_admissible, Estimator, StoppingRule};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub theta: AngularSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_b: Option<AngularSet>,
    pub delta: f64,
    pub u: Vec<f64>,
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub stopping: StoppingOverrides,
    /// Big-jump split threshold as a fraction of `u`.
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Also run crude paths against the halfspace `uA` and the cone together.
    #[serde(default = "yes")]
    pub paired_halfspace: bool,
    /// `ε` of the `k(u)` schedule recorded in manifests.
    #[serde(default = "default_ku_eps")]
    pub ku_eps: f64,
    /// Accept Weibull laws with `β >= 1` (warns).
    #[serde(default)]
    pub allow_light_tail: bool,
    /// Replaces the computed drift; only for degenerate test models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_override: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_split() -> f64 {
    0.25
}

fn yes() -> bool {
    true
}

fn default_ku_eps() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

/// Every problem found in a config, in a form that serializes to JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn single(field: &str, message: impl Into<String>) -> Self {
        Self { valid: false, issues: vec![Issue { field: field.into(), message: message.into() }] }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl From<ValidationReport> for Error {
    fn from(r: ValidationReport) -> Self {
        Error::Validation(r.issues.into_iter().map(|i| format!("{}: {}", i.field, i.message)).collect())
    }
}

/// A config that passed validation, with the objects built from it.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub model: IncrementModel,
    pub theta: AngularSet,
    pub theta_b: Option<AngularSet>,
    pub admissibility: Admissibility,
    /// L1 distance between the swollen sets, when `theta_b` is present.
    pub distance: Option<f64>,
    pub warnings: Vec<String>,
}

impl Validated {
    /// Stopping rule at level `u` with the configured overrides.
    pub fn rule(&self, u: f64) -> Result<StoppingRule> {
        let base = StoppingRule::default_for(&self.model, u)?;
        StoppingRule::new(
            &self.model,
            u,
            self.config.stopping.n_max.unwrap_or(base.n_max),
            self.config.stopping.rho.unwrap_or(base.rho),
        )
    }
}

fn read(path: &Path) -> std::result::Result<(String, bool), ValidationReport> {
    let text = std::fs::read_to_string(path).map_err(|e| ValidationReport::single("", format!("{}: {e}", path.display())))?;
    Ok((text, path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))))
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, json: bool, field: &str) -> std::result::Result<T, ValidationReport> {
    let r = if json { serde_json::from_str(text).map_err(|e| e.to_string()) } else { toml::from_str(text).map_err(|e| e.to_string()) };
    r.map_err(|e| ValidationReport::single(field, e))
}

/// Reads a model block from its own JSON or TOML file.
pub fn load_model(path: &Path) -> std::result::Result<ModelSpec, ValidationReport> {
    let (text, json) = read(path)?;
    parse(&text, json, "model")
}

/// Reads an angular set: a JSON list of caps, or a table with a `theta` list.
pub fn load_theta(path: &Path) -> std::result::Result<AngularSet, ValidationReport> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Wrapped {
        theta: AngularSet,
    }
    let (text, json) = read(path)?;
    if json {
        if let Ok(set) = serde_json::from_str::<AngularSet>(&text) {
            return Ok(set);
        }
    }
    parse::<Wrapped>(&text, json, "theta").map(|w| w.theta)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ValidationReport> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ValidationReport::single("", e.to_string()))?;
        let v = match v.get("config") {
            Some(inner) if v.get("tool").is_some() => inner.clone(),
            _ => v,
        };
        serde_json::from_value(v).map_err(|e| ValidationReport::single("", e.to_string()))
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, ValidationReport> {
        let v: toml::Table = toml::from_str(text).map_err(|e| ValidationReport::single("", e.to_string()))?;
        let v = match v.get("config") {
            Some(toml::Value::Table(inner)) if v.contains_key("tool") => inner.clone(),
            _ => v,
        };
        v.try_into().map_err(|e: toml::de::Error| ValidationReport::single("", e.to_string()))
    }

    /// Reads JSON (`.json`) or TOML (anything else).
    pub fn load(path: &Path) -> std::result::Result<Self, ValidationReport> {
        let (text, json) = read(path)?;
        if json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn validate(&self) -> std::result::Result<Validated, ValidationReport> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();
        let mut issue = |field: &str, message: String| issues.push(Issue { field: field.into(), message });

        let radial = self.model.radial;
        if let Err(e) = radial.validate() {
            issue("model.radial", e.to_string());
        }
        if matches!(radial, RadialLaw::Weibull { .. } | RadialLaw::Exponential { .. }) && !radial.is_heavy_tail_admissible() {
            let msg = format!("{} is light tailed", radial.name());
            if self.allow_light_tail {
                log::warn!("{msg}; accepted because allow_light_tail is set");
                warnings.push(msg);
            } else {
                issue("model.radial", format!("{msg}; set allow_light_tail to run it anyway"));
            }
        }
        if let Err(e) = self.model.weight.validate() {
            issue("model.weight", e.to_string());
        }
        let model = match AngularMixture::from_caps(&self.model.core, self.model.off_direction.clone(), self.model.weight) {
            Err(e) => {
                issue("model.core", e.to_string());
                None
            }
            Ok(mix) => {
                let built = match &self.drift_override {
                    Some(c) => {
                        warnings.push(format!("drift overridden with {c:?}; A4 is not certified"));
                        IncrementModel::with_drift(radial, mix, c)
                    }
                    None => IncrementModel::new(radial, mix),
                };
                match built {
                    Ok(m) => Some(m),
                    Err(e) => {
                        issue("model", e.to_string());
                        None
                    }
                }
            }
        };
        let dim = self.model.core.first().map(|c| c.center.dim());

        if !(self.delta > 0.0 && self.delta.is_finite()) {
            issue("delta", format!("must be positive, got {}", self.delta));
        }
        if dim.is_some_and(|d| d != self.theta.dim()) {
            issue("theta", format!("dimension {} does not match the model", self.theta.dim()));
        }
        let mut admissibility = None;
        if self.delta > 0.0 {
            match check_admissible(&self.theta, self.delta) {
                Ok(a) => admissibility = Some(a),
                Err(e) => issue("delta", e.to_string()),
            }
        }
        let mut distance = None;
        if let Some(b) = &self.theta_b {
            if b.dim() != self.theta.dim() {
                issue("theta_b", "dimension differs from theta".into());
            } else if self.delta > 0.0 {
                if let Err(e) = check_admissible(b, self.delta) {
                    issue("theta_b", e.to_string());
                }
                match (self.theta.swell(self.delta), b.swell(self.delta)) {
                    (Ok(sa), Ok(sb)) => {
                        let d = set_distance(&sa, &sb);
                        if !(d > 0.0) {
                            issue("theta_b", "swollen sets overlap; the two-cone diagnostic needs them disjoint".into());
                        }
                        distance = Some(d);
                    }
                    (Err(e), _) | (_, Err(e)) => issue("theta_b", e.to_string()),
                }
            }
        }

        if self.u.is_empty() {
            issue("u", "grid is empty".into());
        }
        if self.u.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
            issue("u", "levels must be positive and finite".into());
        }
        if self.u.windows(2).any(|w| !(w[1] > w[0])) {
            issue("u", "grid must be strictly increasing".into());
        }
        if self.paths == 0 {
            issue("paths", "must be positive".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            issue("split_fraction", format!("must lie in (0,1), got {}", self.split_fraction));
        }
        if !(self.ku_eps > 0.0) {
            issue("ku_eps", "must be positive".into());
        }
        if let Some(rho) = self.stopping.rho {
            if !(rho >= 1.0) {
                issue("stopping.rho", format!("must be at least 1, got {rho}"));
            }
        }
        if let (Some(m), Some(n_max), Some(&top)) = (&model, self.stopping.n_max, self.u.last()) {
            let need = top / m.drift().min_component();
            if (n_max as f64) < need {
                issue("stopping.n_max", format!("{n_max} is below u/min c = {need} at the largest u"));
            }
        }

        match (issues.is_empty(), model, admissibility) {
            (true, Some(model), Some(admissibility)) => Ok(Validated {
                config: self.clone(),
                model,
                theta: self.theta.clone(),
                theta_b: self.theta_b.clone(),
                admissibility,
                distance,
                warnings,
            }),
            _ => Err(ValidationReport { valid: false, issues }),
        }
    }
}
