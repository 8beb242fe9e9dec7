//! Experiment configuration: per-experiment defaults, JSON files and
//! command-line overrides merged in that order.

use std::path::PathBuf;

use hga_core::{GaConfig, HierConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Schema(serde_json::Error),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("config key `{key}`: {reason}")]
    Range { key: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SoftTsp,
    AdaptiveTsp,
    ConstraintSwitch,
    Regression,
    WeightedRegression,
    Oracle,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::SoftTsp => "soft_tsp",
            Self::AdaptiveTsp => "adaptive_tsp",
            Self::ConstraintSwitch => "constraint_switch",
            Self::Regression => "regression",
            Self::WeightedRegression => "weighted_regression",
            Self::Oracle => "oracle",
        }
    }

    fn is_tsp(self) -> bool {
        matches!(
            self,
            Self::SoftTsp | Self::AdaptiveTsp | Self::ConstraintSwitch | Self::Oracle
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyConfig {
    Uniform { value: f64 },
    /// Independent draws from `U[lo, hi]`.
    Range { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub vertices: usize,
    /// Seeds the point set and random penalties, independently of the solver seed.
    pub seed: u64,
    pub penalties: PenaltyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Ascending-power coefficients of the generating polynomial.
    pub coeffs: Vec<f64>,
    pub noise_std: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
    /// Seeds the noise, independently of the solver seed.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub delta: f64,
    /// Loss weight for x > 0; 1 means plain Huber.
    pub positive_x_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// `seed` fields of both levels are replaced by each run's seed.
    pub meta: GaConfig,
    pub sub: GaConfig,
    /// Sub-solver generations per meta generation.
    pub k_subgens: usize,
    pub meta_generations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    /// Schedule steps for adaptive training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_steps: Option<usize>,
    /// Switch points for the constraint-switch experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_at: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let hier = if experiment.is_tsp() {
            HierConfig::soft_tsp(0)
        } else {
            HierConfig::regression(0)
        };
        let mut cfg = Self {
            experiment,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            meta: hier.meta,
            sub: hier.sub,
            k_subgens: hier.k_subgens,
            meta_generations: 30,
            instance: None,
            dataset: None,
            oracle: None,
            adaptive_steps: None,
            switch_at: None,
        };
        let instance = |vertices, penalties| InstanceConfig {
            vertices,
            seed: 0,
            penalties,
        };
        match experiment {
            Experiment::SoftTsp => {
                cfg.instance = Some(instance(30, PenaltyConfig::Uniform { value: 0.4 }));
            }
            Experiment::AdaptiveTsp => {
                cfg.instance = Some(instance(30, PenaltyConfig::Range { lo: 0.05, hi: 0.45 }));
                cfg.adaptive_steps = Some(5);
            }
            Experiment::ConstraintSwitch => {
                cfg.instance = Some(instance(30, PenaltyConfig::Uniform { value: 0.1 }));
                cfg.switch_at = Some(vec![0, 5, 10, 20]);
            }
            Experiment::Oracle => {
                cfg.instance = Some(instance(7, PenaltyConfig::Range { lo: 0.0, hi: 0.5 }));
            }
            Experiment::Regression => {
                cfg.dataset = Some(DatasetConfig {
                    coeffs: vec![4.0, 3.0, 4.0],
                    noise_std: 0.2,
                    x_lo: 0.0,
                    x_hi: 5.0,
                    points: 100,
                    seed: 0,
                });
                cfg.oracle = Some(OracleConfig {
                    delta: 0.2,
                    positive_x_weight: 1.0,
                });
            }
            Experiment::WeightedRegression => {
                cfg.dataset = Some(DatasetConfig {
                    coeffs: vec![4.0, 3.0, 4.0, 0.0, -5.0, 0.0, 1.0],
                    noise_std: 0.2,
                    x_lo: -2.0,
                    x_hi: 2.0,
                    points: 100,
                    seed: 0,
                });
                cfg.oracle = Some(OracleConfig {
                    delta: 0.2,
                    positive_x_weight: 10.0,
                });
            }
        }
        cfg
    }

    /// Two-level solver configuration for one seed.
    pub fn hier(&self, seed: u64) -> HierConfig {
        HierConfig {
            meta: self.meta.with_seed(seed),
            sub: self.sub.with_seed(seed),
            k_subgens: self.k_subgens,
            meta_generations: self.meta_generations,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |key: &str, reason: String| ConfigError::Range {
            key: key.to_string(),
            reason,
        };
        let level = |prefix: &str, ga: &GaConfig| {
            ga.validate().map_err(|e| match e {
                hga_core::Error::InvalidParameter { name, reason } => range(&format!("{prefix}.{name}"), reason),
                other => range(prefix, other.to_string()),
            })
        };
        level("meta", &self.meta)?;
        level("sub", &self.sub)?;
        if self.seeds.is_empty() {
            return Err(range("seeds", "needs at least one seed".into()));
        }
        if self.k_subgens == 0 {
            return Err(range("k_subgens", "must be at least 1".into()));
        }

        let tsp = self.experiment.is_tsp();
        let misplaced = [
            ("instance", self.instance.is_some() != tsp),
            ("dataset", self.dataset.is_some() == tsp),
            ("oracle", self.oracle.is_some() == tsp),
            (
                "adaptive_steps",
                self.adaptive_steps.is_some() != (self.experiment == Experiment::AdaptiveTsp),
            ),
            (
                "switch_at",
                self.switch_at.is_some() != (self.experiment == Experiment::ConstraintSwitch),
            ),
        ];
        if let Some((key, _)) = misplaced.iter().find(|(_, bad)| *bad) {
            return Err(range(
                key,
                format!("missing or not applicable to {}", self.experiment.name()),
            ));
        }

        if let Some(inst) = &self.instance {
            if inst.vertices == 0 {
                return Err(range("instance.vertices", "must be positive".into()));
            }
            match inst.penalties {
                PenaltyConfig::Uniform { value } if !(value >= 0.0 && value.is_finite()) => {
                    return Err(range("instance.penalties.value", format!("{value} must be >= 0")));
                }
                PenaltyConfig::Range { lo, hi } if !(lo >= 0.0 && lo <= hi && hi.is_finite()) => {
                    return Err(range("instance.penalties", format!("need 0 <= lo <= hi, got [{lo}, {hi}]")));
                }
                _ => {}
            }
            if self.experiment == Experiment::Oracle && inst.vertices > hga_core::OracleLimit::default().max_n {
                return Err(range(
                    "instance.vertices",
                    format!("exact oracle supports at most {} vertices", hga_core::OracleLimit::default().max_n),
                ));
            }
            if self.experiment == Experiment::ConstraintSwitch && inst.vertices < hga_core::soft_tsp::SWITCH_HIGH_COUNT {
                return Err(range(
                    "instance.vertices",
                    format!("needs at least {} vertices", hga_core::soft_tsp::SWITCH_HIGH_COUNT),
                ));
            }
        }
        if let Some(0) = self.adaptive_steps {
            return Err(range("adaptive_steps", "must be at least 1".into()));
        }
        if let Some(ts) = &self.switch_at {
            if let Some(t) = ts.iter().find(|&&t| t > self.meta_generations) {
                return Err(range("switch_at", format!("{t} exceeds meta_generations")));
            }
        }
        if let Some(ds) = &self.dataset {
            if ds.coeffs.is_empty() {
                return Err(range("dataset.coeffs", "needs at least one coefficient".into()));
            }
            if !(ds.noise_std >= 0.0) {
                return Err(range("dataset.noise_std", format!("{} must be >= 0", ds.noise_std)));
            }
            if !(ds.x_lo < ds.x_hi) {
                return Err(range("dataset.x_lo", "must be below x_hi".into()));
            }
            if ds.points < 2 {
                return Err(range("dataset.points", "needs at least 2 points".into()));
            }
        }
        if let Some(o) = &self.oracle {
            if !(o.delta > 0.0) {
                return Err(range("oracle.delta", format!("{} must be positive", o.delta)));
            }
            if !(o.positive_x_weight > 0.0 && o.positive_x_weight.is_finite()) {
                return Err(range("oracle.positive_x_weight", "must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Turns `a.b.c=value` into `{"a":{"b":{"c":value}}}`. The value is parsed
/// as JSON when possible and taken as a string otherwise.
pub fn parse_override(s: &str) -> Result<Value, ConfigError> {
    let (key, raw) = s
        .split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| ConfigError::Override(s.to_string()))?;
    let mut value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), value);
        value = Value::Object(m);
    }
    Ok(value)
}

/// Layers to merge on top of an experiment's defaults.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub file: Option<PathBuf>,
    /// Patches applied after the file, in order.
    pub patches: Vec<Value>,
}

/// Builds the effective configuration: defaults, then the file, then patches.
pub fn parse_config(experiment: Experiment, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut value = serde_json::to_value(ExperimentConfig::defaults(experiment)).expect("config serializes");
    if let Some(path) = &overrides.file {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.clone(),
            source,
        })?;
        let file: Value = serde_json::from_str(&text).map_err(|source| ConfigError::Json {
            path: path.clone(),
            source,
        })?;
        merge(&mut value, file);
    }
    for p in &overrides.patches {
        merge(&mut value, p.clone());
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(ConfigError::Schema)?;
    if cfg.experiment != experiment {
        return Err(ConfigError::Range {
            key: "experiment".into(),
            reason: format!("config is for {}, command runs {}", cfg.experiment.name(), experiment.name()),
        });
    }
    cfg.validate()?;
    Ok(cfg)
}
