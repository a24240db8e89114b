//! TOML problem description.
//!
//! ```toml
//! n_params = 48
//! n_sensors = 32
//! n_steps = 16
//! wave_speed = 4.0      # optional
//! decay = 0.05          # optional
//! seed = 0              # optional
//! noise_sigma = 0.1     # optional, default 0.1 × max kernel amplitude
//!
//! [prior]               # optional, default exponential, variance 1, ℓ = n_params/8
//! kind = "exponential"
//! variance = 1.0
//! length_scale = 6.0
//!
//! [weights]             # optional
//! cost = [1.0, 2.0, ...] # one positive weight per sensor
//!
//! [mask]                # optional; zeroes the listed parameters
//! params = [0, 1, 2]
//! steps = [0, 1]        # optional, default every step
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lti::{assemble_k, DataSpaceHessian, LtiProblem, ModelError, PriorKind, PriorSpec, WaveSpec, WeightSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default = "default_kind")]
    pub kind: PriorKind,
    #[serde(default = "one")]
    pub variance: f64,
    pub length_scale: Option<f64>,
}

fn default_kind() -> PriorKind {
    PriorKind::Exponential
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSection {
    pub params: Vec<usize>,
    pub steps: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n_params: usize,
    pub n_sensors: usize,
    pub n_steps: usize,
    #[serde(default = "default_speed")]
    pub wave_speed: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub seed: u64,
    pub noise_sigma: Option<f64>,
    pub prior: Option<PriorSection>,
    pub weights: Option<WeightsSection>,
    pub mask: Option<MaskSection>,
}

fn default_speed() -> f64 {
    WaveSpec::standard().wave_speed
}

fn default_decay() -> f64 {
    WaveSpec::standard().decay
}

impl ProblemConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The configuration of the standard desk-scale benchmark.
    pub fn standard() -> Self {
        let w = WaveSpec::standard();
        Self {
            n_params: w.n_params,
            n_sensors: w.n_sensors,
            n_steps: w.n_steps,
            wave_speed: w.wave_speed,
            decay: w.decay,
            seed: w.seed,
            noise_sigma: None,
            prior: None,
            weights: None,
            mask: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("n_params", self.n_params),
            ("n_sensors", self.n_sensors),
            ("n_steps", self.n_steps),
        ] {
            if v == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        if !(self.wave_speed > 0.0) || !self.wave_speed.is_finite() {
            return Err(invalid("wave_speed", format!("must be positive, got {}", self.wave_speed)));
        }
        if !(self.decay >= 0.0) || !self.decay.is_finite() {
            return Err(invalid("decay", format!("must be nonnegative, got {}", self.decay)));
        }
        if let Some(s) = self.noise_sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(invalid("noise_sigma", format!("must be positive, got {s}")));
            }
        }
        if let Some(p) = &self.prior {
            if !(p.variance > 0.0) || !p.variance.is_finite() {
                return Err(invalid("prior.variance", format!("must be positive, got {}", p.variance)));
            }
            if let Some(l) = p.length_scale {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(invalid("prior.length_scale", format!("must be positive, got {l}")));
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.cost.len() != self.n_sensors {
                return Err(invalid(
                    "weights.cost",
                    format!("expected {} entries, got {}", self.n_sensors, w.cost.len()),
                ));
            }
            if let Some(c) = w.cost.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
                return Err(invalid("weights.cost", format!("entries must be positive, got {c}")));
            }
        }
        if let Some(m) = &self.mask {
            if let Some(p) = m.params.iter().find(|&&p| p >= self.n_params) {
                return Err(invalid("mask.params", format!("index {p} out of range for {} parameters", self.n_params)));
            }
            if let Some(t) = m.steps.iter().flatten().find(|&&t| t >= self.n_steps) {
                return Err(invalid("mask.steps", format!("step {t} out of range for {} steps", self.n_steps)));
            }
        }
        Ok(())
    }

    pub fn wave_spec(&self) -> WaveSpec {
        WaveSpec {
            n_params: self.n_params,
            n_sensors: self.n_sensors,
            n_steps: self.n_steps,
            wave_speed: self.wave_speed,
            decay: self.decay,
            seed: self.seed,
        }
    }

    pub fn prior_spec(&self) -> PriorSpec {
        match &self.prior {
            None => PriorSpec::default_for(self.n_params),
            Some(p) => PriorSpec {
                kind: p.kind,
                variance: p.variance,
                length_scale: p.length_scale.unwrap_or(self.n_params as f64 / 8.0),
            },
        }
    }

    pub fn problem(&self) -> Result<LtiProblem, ConfigError> {
        Ok(self.wave_spec().build_with(self.prior_spec(), self.noise_sigma)?)
    }

    /// `None` when neither `[weights]` nor `[mask]` is present.
    pub fn weight_spec(&self, problem: &LtiProblem) -> Option<WeightSpec> {
        if self.weights.is_none() && self.mask.is_none() {
            return None;
        }
        let mut w = WeightSpec::uniform(problem);
        if let Some(ws) = &self.weights {
            w.cost_weights.clone_from(&ws.cost);
        }
        if let Some(m) = &self.mask {
            let nt = problem.n_steps();
            let all: Vec<usize> = (0..nt).collect();
            let steps = m.steps.as_deref().unwrap_or(&all);
            for &p in &m.params {
                for &t in steps {
                    w.mask_weights[p * nt + t] = 0.0;
                }
            }
        }
        Some(w)
    }

    pub fn assemble(&self) -> Result<(LtiProblem, DataSpaceHessian), ConfigError> {
        let problem = self.problem()?;
        let weights = self.weight_spec(&problem);
        let k = assemble_k(&problem, weights.as_ref())?;
        Ok((problem, k))
    }
}
