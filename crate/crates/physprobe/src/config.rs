//! JSON run configuration. Every key is optional; omitted keys take the
//! defaults below and unknown keys are rejected by name.

use std::path::PathBuf;

use physprobe_core::envproto::Environment;
use physprobe_core::evalkit::SWEEP_DTS;
use physprobe_core::nnet::Selection;
use physprobe_core::{HeavierConfig, HeavierEnv, TowersConfig, TowersEnv, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Heavier(HeavierConfig),
    Towers(TowersConfig),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Heavier(HeavierConfig::default())
    }
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Environment + Send>, Error> {
        Ok(match self {
            EnvSpec::Heavier(c) => Box::new(HeavierEnv::new(*c)?),
            EnvSpec::Towers(c) => Box::new(TowersEnv::new(*c)?),
        })
    }

    /// Short condition tag used in summaries, e.g. `heavier beta=10`.
    pub fn condition(&self) -> String {
        match self {
            EnvSpec::Heavier(c) => format!("heavier beta={}", c.beta),
            EnvSpec::Towers(c) => {
                let a = match c.actuator {
                    physprobe_core::Actuator::Direct => "direct",
                    physprobe_core::Actuator::Fist => "fist",
                };
                format!("towers {a} dt={}", c.control_dt)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Total environment steps per evaluation.
    pub step_budget: usize,
    /// Replace the policy's interaction choices with uniform draws.
    pub randomized: bool,
    /// Also run the randomized baseline and write the comparison table.
    pub compare_randomized: bool,
    pub dts: Vec<f64>,
    pub sweep_episodes: usize,
    pub selection: Selection,
    /// Confidence parameter of the successive-elimination oracle.
    pub oracle_delta: f64,
    /// Number of leading episodes whose body positions are dumped.
    pub trace_episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            step_budget: 10_000,
            randomized: false,
            compare_randomized: false,
            dts: SWEEP_DTS.to_vec(),
            sweep_episodes: 50,
            selection: Selection::Sample,
            oracle_delta: 0.05,
            trace_episodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Master seed; copied into `train.seed` when the config is resolved.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
            out: PathBuf::from("runs/latest"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies command-line overrides and ties the training seed to the run seed.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, Error> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), Error> {
        match &self.env {
            EnvSpec::Heavier(c) => c.validate()?,
            EnvSpec::Towers(c) => c.validate()?,
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.eval.dts.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::Config("eval.dts must be positive".into()));
        }
        if !(self.eval.oracle_delta > 0.0 && self.eval.oracle_delta < 1.0) {
            return Err(Error::Config("eval.oracle_delta must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
