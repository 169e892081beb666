//! Run configuration: one TOML file per experiment, every section optional
//! and filled from environment-specific defaults.
//!
//! ```toml
//! env = "pendulum"
//! seed = 0
//!
//! [controller]
//! horizon = 20
//! samples = 64
//! lambda = 0.1
//! beta = 0.8
//! explore_prob = 0.5
//! smoothing = { window = 5, order = 2 }   # or "none"
//!
//! [trainer]
//! lr = 1e-4
//! weight_decay = 8e-5
//! batch_size = 50
//! episodes = 15
//! grad_weighting = "self-normalized"      # or "as-printed"
//!
//! [demo]
//! count = 20
//! noise_level = 0.0
//! expert_samples = 256                    # optional, defaults to controller.samples
//!
//! [eval]
//! episodes = 10
//! noise_levels = [0.0, 0.2, 0.5]
//!
//! [paths]
//! demos = "runs/pendulum/demos.bin"
//! checkpoints = "runs/pendulum/checkpoint.json"
//! reports = "runs/pendulum/reports"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demos::default_sanity_floor;
use crate::dynamics::NoiseSpec;
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::mppi::ControllerConfig;
use crate::optim::OptimizerKind;
use crate::smoothing::Smoothing;
use crate::trainer::{GradWeighting, TrainConfig};

pub const SEED_ENV_VAR: &str = "RHIRL_SEED";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    env: String,
    seed: Option<u64>,
    /// Task duration T; defaults to the environment's.
    horizon: Option<usize>,
    #[serde(default)]
    controller: ControllerSection,
    #[serde(default)]
    trainer: TrainerSection,
    #[serde(default)]
    demo: DemoSection,
    #[serde(default)]
    eval: EvalSection,
    #[serde(default)]
    paths: PathsSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    horizon: Option<usize>,
    samples: Option<usize>,
    lambda: Option<f64>,
    beta: Option<f64>,
    explore_prob: Option<f64>,
    smoothing: Option<SmoothingSetting>,
    noise_samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SmoothingSetting {
    Named(String),
    Filter { window: usize, order: usize },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainerSection {
    lr: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    episodes: Option<usize>,
    grad_weighting: Option<GradWeighting>,
    optimizer: Option<OptimizerKind>,
    hidden: Option<Vec<usize>>,
    eval_every: Option<usize>,
    env_noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoSection {
    count: Option<usize>,
    noise_level: Option<f64>,
    sanity_floor: Option<f64>,
    expert_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    episodes: Option<usize>,
    noise_levels: Option<Vec<f64>>,
    ablation_horizons: Option<Vec<usize>>,
    ablation_budget: Option<u64>,
    ablation_eval_points: Option<usize>,
    bound_horizons: Option<Vec<usize>>,
    bound_episodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    demos: Option<PathBuf>,
    checkpoints: Option<PathBuf>,
    reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoSettings {
    pub count: usize,
    pub noise_level: f64,
    pub sanity_floor: f64,
    /// Rollout count M for the expert; `None` uses the run controller's.
    pub expert_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSettings {
    pub episodes: usize,
    pub noise_levels: Vec<f64>,
    pub ablation_horizons: Vec<usize>,
    pub ablation_budget: u64,
    pub ablation_eval_points: usize,
    pub bound_horizons: Vec<usize>,
    pub bound_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Paths {
    pub demos: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub env: String,
    pub seed: u64,
    pub horizon: usize,
    /// Controller for training, evaluation and the expert.
    pub controller: ControllerConfig,
    /// Trainer settings; `trainer.controller` mirrors `controller`.
    pub trainer: TrainConfig,
    pub demo: DemoSettings,
    pub eval: EvalSettings,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::usage(format!("invalid config: {e}")))?;
        Self::resolve(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Defaults for an environment, as if the file only named it.
    pub fn defaults(env: &str) -> Result<Self> {
        Self::resolve(FileConfig {
            env: env.to_string(),
            ..FileConfig::default()
        })
    }

    fn resolve(file: FileConfig) -> Result<Self> {
        let env = make_env(&file.env).map_err(|_| {
            Error::usage(format!(
                "unknown environment `{}` (expected one of {:?})",
                file.env,
                crate::envs::ENV_NAMES
            ))
        })?;
        let name = file.env.clone();
        let seed = file.seed.unwrap_or(0);
        let horizon = file.horizon.unwrap_or(env.spec.horizon);

        let mut controller = ControllerConfig::for_env(&name)?;
        let c = &file.controller;
        if let Some(v) = c.horizon {
            controller.horizon = v;
        }
        if let Some(v) = c.samples {
            controller.samples = v;
        }
        if let Some(v) = c.lambda {
            controller.lambda = v;
        }
        if let Some(v) = c.beta {
            controller.noise = NoiseSpec::beta(v)?;
        }
        if let Some(v) = c.explore_prob {
            controller.explore_prob = v;
        }
        if let Some(v) = c.noise_samples {
            controller.noise_samples = v;
        }
        if let Some(s) = &c.smoothing {
            controller.smoothing = match s {
                SmoothingSetting::Named(n) if n == "none" => Smoothing::None,
                SmoothingSetting::Named(n) if n == "savitzky-golay" => Smoothing::default(),
                SmoothingSetting::Named(n) => {
                    return Err(Error::usage(format!(
                        "unknown smoothing `{n}` (use \"none\" or a window/order table)"
                    )))
                }
                SmoothingSetting::Filter { window, order } => Smoothing::SavitzkyGolay {
                    window: *window,
                    order: *order,
                },
            };
        }

        let demo = DemoSettings {
            count: file.demo.count.unwrap_or(20),
            noise_level: file.demo.noise_level.unwrap_or(0.0),
            sanity_floor: file.demo.sanity_floor.unwrap_or_else(|| default_sanity_floor(&name)),
            expert_samples: file.demo.expert_samples,
        };

        let mut trainer = TrainConfig::for_env(&name)?;
        let t = &file.trainer;
        trainer.seed = seed;
        trainer.controller = controller.clone();
        if let Some(v) = t.lr {
            trainer.lr = v;
        }
        if let Some(v) = t.weight_decay {
            trainer.weight_decay = v;
        }
        if let Some(v) = t.batch_size {
            trainer.batch_size = v;
        }
        if let Some(v) = t.episodes {
            trainer.episodes = v;
        }
        if let Some(v) = t.grad_weighting {
            trainer.grad_weighting = v;
        }
        if let Some(v) = t.optimizer {
            trainer.optimizer = v;
        }
        if let Some(v) = &t.hidden {
            trainer.hidden = v.clone();
        }
        trainer.eval_every = t.eval_every.unwrap_or(5);
        trainer.env_noise = t.env_noise.unwrap_or(demo.noise_level);

        let eval = EvalSettings {
            episodes: file.eval.episodes.unwrap_or(10),
            noise_levels: file
                .eval
                .noise_levels
                .clone()
                .unwrap_or_else(|| crate::demos::NOISE_LEVELS.to_vec()),
            ablation_horizons: file.eval.ablation_horizons.clone().unwrap_or_else(|| vec![5, 20, 100]),
            ablation_budget: file.eval.ablation_budget.unwrap_or(10_000_000),
            ablation_eval_points: file.eval.ablation_eval_points.unwrap_or(10),
            bound_horizons: file
                .eval
                .bound_horizons
                .clone()
                .unwrap_or_else(|| vec![25, 50, 100, 200]),
            bound_episodes: file.eval.bound_episodes.unwrap_or(20),
        };
        trainer.eval_episodes = eval.episodes;

        let base = PathBuf::from("runs").join(&name);
        let paths = Paths {
            demos: file.paths.demos.clone().unwrap_or_else(|| base.join("demos.bin")),
            checkpoints: file
                .paths
                .checkpoints
                .clone()
                .unwrap_or_else(|| base.join("checkpoint.json")),
            reports: file.paths.reports.clone().unwrap_or_else(|| base.join("reports")),
        };

        let cfg = RunConfig {
            env: name,
            seed,
            horizon,
            controller,
            trainer,
            demo,
            eval,
            paths,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replace the seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.trainer.seed = seed;
    }

    /// Apply `RHIRL_SEED` if set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| Error::usage(format!("{SEED_ENV_VAR} must be an unsigned integer, got `{v}`")))?;
            self.set_seed(seed);
        }
        Ok(())
    }

    pub fn set_controller_horizon(&mut self, k: usize) {
        self.controller.horizon = k;
        self.trainer.controller.horizon = k;
    }

    /// Controller used to generate demonstrations.
    pub fn expert_controller(&self) -> ControllerConfig {
        let mut c = self.controller.clone();
        if let Some(m) = self.demo.expert_samples {
            c.samples = m;
        }
        c
    }

    pub fn environment(&self) -> Result<Environment> {
        Ok(make_env(&self.env)?.with_horizon(self.horizon))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::usage("task duration T must be at least 1"));
        }
        self.environment()?.spec.validate()?;
        self.controller.validate()?;
        self.trainer.validate()?;
        if self.trainer.controller != self.controller {
            return Err(Error::usage("trainer controller differs from the run controller"));
        }
        if self.demo.count < 1 {
            return Err(Error::usage("demo count must be at least 1"));
        }
        check_level("demo noise level", self.demo.noise_level)?;
        self.expert_controller().validate()?;
        if self.demo.sanity_floor.is_nan() {
            return Err(Error::usage("demo sanity floor must be a number"));
        }
        if self.eval.episodes < 1 {
            return Err(Error::usage("evaluation needs at least one episode"));
        }
        for &level in &self.eval.noise_levels {
            check_level("evaluation noise level", level)?;
        }
        if self.eval.ablation_horizons.iter().any(|&k| k < 1) {
            return Err(Error::usage("ablation horizons must be >= 1"));
        }
        if self.eval.ablation_eval_points < 1 {
            return Err(Error::usage("ablation_eval_points must be >= 1"));
        }
        if self.eval.bound_horizons.iter().any(|&t| t < 1) || self.eval.bound_episodes < 1 {
            return Err(Error::usage("bound check needs positive horizons and episode count"));
        }
        Ok(())
    }
}

fn check_level(what: &str, level: f64) -> Result<()> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::usage(format!("{what} must be a finite value >= 0, got {level}")));
    }
    Ok(())
}
