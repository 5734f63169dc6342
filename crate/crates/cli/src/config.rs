use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use invbench::eval::{Caps, EvalSettings};
use invbench::losses::LossSpec;
use invbench::models::{ModelConfig, ModelKind, Schedule};
use invbench::problems::{BallisticsConfig, KinematicsConfig, Problem, ProblemKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn err<T>(m: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(m.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub train_samples: usize,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self { train_samples: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSettings {
    /// Timing is the only non-reproducible output; disable it for
    /// byte-identical reports.
    pub enabled: bool,
    /// Posterior samples drawn per timed call; repeats are
    /// `eval.timing_repeats`.
    pub samples: usize,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            samples: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSettings {
    pub kinematics_target: Vec<f64>,
    pub ballistics_target: Vec<f64>,
    /// Posterior samples behind the contour, mode and histogram.
    pub samples: usize,
    /// Arms or trajectories written out individually.
    pub lines: usize,
    pub trajectory_steps: usize,
    pub bins: usize,
    /// Histogram covers `target ± hist_half_width`.
    pub hist_half_width: f64,
}

impl Default for PlotSettings {
    fn default() -> Self {
        Self {
            kinematics_target: vec![1.5, 0.0],
            ballistics_target: vec![5.0],
            samples: 1000,
            lines: 100,
            trajectory_steps: 64,
            bins: 40,
            hist_half_width: 4.0,
        }
    }
}

/// Everything a run depends on. Keys left out take their defaults, except
/// `seed`, which must always be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_problems")]
    pub problems: Vec<ProblemKind>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub data: DataSettings,
    #[serde(default)]
    pub kinematics: KinematicsConfig,
    #[serde(default)]
    pub ballistics: BallisticsConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: Schedule,
    /// Loss overrides keyed by model id; other models use their default.
    #[serde(default)]
    pub losses: BTreeMap<String, LossSpec>,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub timing: TimingSettings,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub plot: PlotSettings,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_problems() -> Vec<ProblemKind> {
    vec![ProblemKind::Kinematics, ProblemKind::Ballistics]
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output(),
            problems: default_problems(),
            models: default_models(),
            data: DataSettings::default(),
            kinematics: KinematicsConfig::default(),
            ballistics: BallisticsConfig::default(),
            model: ModelConfig::default(),
            schedule: Schedule::default(),
            losses: BTreeMap::new(),
            eval: EvalSettings::default(),
            timing: TimingSettings::default(),
            caps: Caps::default(),
            plot: PlotSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn problem(&self, kind: ProblemKind) -> Problem {
        match kind {
            ProblemKind::Kinematics => Problem::Kinematics(self.kinematics.clone()),
            ProblemKind::Ballistics => Problem::Ballistics(self.ballistics.clone()),
        }
    }

    pub fn loss_for(&self, kind: ModelKind) -> LossSpec {
        self.losses
            .get(kind.id())
            .cloned()
            .unwrap_or_else(|| LossSpec::new(kind.default_loss()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed > i64::MAX as u64 {
            return err("seed must fit in a signed 64-bit integer");
        }
        if self.problems.is_empty() || self.models.is_empty() {
            return err("problems and models must not be empty");
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return err(format!("model {} listed twice", m.id()));
            }
        }
        for p in &self.problems {
            self.problem(*p).validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        self.model.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.schedule.validate().map_err(|e| ConfigError(e.to_string()))?;
        for (id, spec) in &self.losses {
            let kind: ModelKind = id.parse().map_err(|_| ConfigError(format!("[losses.{id}]: unknown model")))?;
            spec.validate().map_err(|e| ConfigError(format!("[losses.{id}]: {e}")))?;
            if !kind.accepts(spec.kind) {
                return err(format!("[losses.{id}]: {} cannot be trained with {}", kind.label(), spec.kind.name()));
            }
        }
        if self.data.train_samples == 0 {
            return err("data.train_samples must be positive");
        }
        let e = &self.eval;
        if e.conditions == 0 || e.samples == 0 || e.max_draws == 0 || e.timing_repeats == 0 {
            return err("eval counts must be positive");
        }
        if e.eps.is_some_and(|v| !(v > 0.0)) {
            return err("eval.eps must be positive");
        }
        e.kernel.validate().map_err(|x| ConfigError(format!("eval.kernel: {x}")))?;
        if self.timing.samples == 0 {
            return err("timing.samples must be positive");
        }
        if !(self.caps.err_post > 0.0 && self.caps.err_resim > 0.0) {
            return err("caps must be positive");
        }
        let p = &self.plot;
        if p.kinematics_target.len() != 2 || p.ballistics_target.len() != 1 {
            return err("plot targets need 2 (kinematics) and 1 (ballistics) entries");
        }
        if p.samples < 100 || p.lines == 0 || p.bins == 0 || p.trajectory_steps < 2 || !(p.hist_half_width > 0.0) {
            return err("plot needs samples >= 100 and positive line, bin and width settings");
        }
        Ok(())
    }
}
