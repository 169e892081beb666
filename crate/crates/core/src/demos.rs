//! Expert demonstrations: generation with a ground-truth MPPI expert and a
//! state-only binary file format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "RHIRLDMO"
//! version    u32
//! header_len u64
//! header     header_len bytes of JSON (DemoHeader)
//! payload    N × T × n f64, row-major
//! ```
//!
//! A JSON sidecar (`<file>.json`) mirrors the header.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{StateVec, Trajectory};
use crate::envs::{EnvSpec, Environment, INTEGRATOR};
use crate::error::{Error, Result};
use crate::mppi::{run_episode, ControllerConfig};
use crate::rng::{tag, RngStream};

pub const MAGIC: &[u8; 8] = b"RHIRLDMO";
pub const VERSION: u32 = 1;

/// Noise presets used throughout the experiments.
pub const NOISE_LEVELS: [f64; 3] = [0.0, 0.2, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub env: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub horizon: usize,
    pub dt: f64,
    pub integrator: String,
    /// Variance level of the expert's control noise, `Σ_true = level · I`.
    pub noise_level: f64,
    pub count: usize,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub expert_mean_return: f64,
    pub expert_std_return: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub header: DemoHeader,
    /// Each trajectory holds the visited states `x_0 … x_{T-1}`.
    pub trajectories: Vec<Trajectory>,
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = crate::cost::compensated_sum(values.iter().copied()) / n;
    let var = crate::cost::compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

/// Initial state of episode `index` under `seed`.
///
/// Demos and evaluation episodes share this, so evaluation episode `i`
/// starts where demonstration `i` started.
pub fn initial_state(env: &Environment, seed: u64, index: usize) -> StateVec {
    env.sample_initial(&mut RngStream::derive(seed, &[tag::INIT_STATE, index as u64]).rng())
}

/// Lowest acceptable expert mean return per environment.
pub fn default_sanity_floor(env: &str) -> f64 {
    match env {
        crate::envs::pendulum::NAME => -400.0,
        crate::envs::cartpole::NAME => -500.0,
        crate::envs::double_integrator::NAME => -60.0,
        _ => f64::NEG_INFINITY,
    }
}

/// Roll out the ground-truth-cost expert `count` times with control noise
/// `Σ_true = noise_level · I` and keep the visited states.
pub fn generate_demos(
    env: &Environment,
    noise_level: f64,
    count: usize,
    expert: &ControllerConfig,
    seed: u64,
    sanity_floor: f64,
) -> Result<DemoSet> {
    if count < 1 {
        return Err(Error::usage("demo count must be at least 1"));
    }
    if !(noise_level >= 0.0) || !noise_level.is_finite() {
        return Err(Error::usage(format!("noise level must be >= 0, got {noise_level}")));
    }
    expert.validate()?;
    env.spec.validate()?;
    let outcomes = (0..count)
        .into_par_iter()
        .map(|i| {
            let x0 = initial_state(env, seed, i);
            let stream = RngStream::derive(seed, &[tag::DEMO, i as u64]);
            run_episode(env, &env.cost, expert, noise_level, stream, Some(x0))
        })
        .collect::<Result<Vec<_>>>()?;
    let returns: Vec<f64> = outcomes.iter().map(|o| o.ground_truth_return).collect();
    let (mean, std) = mean_std(&returns);
    if mean < sanity_floor {
        return Err(Error::SanityFloor {
            mean,
            floor: sanity_floor,
        });
    }
    let header = DemoHeader {
        env: env.name().to_string(),
        state_dim: env.spec.state_dim,
        control_dim: env.spec.control_dim,
        horizon: env.spec.horizon,
        dt: env.spec.dt,
        integrator: INTEGRATOR.to_string(),
        noise_level,
        count,
        seed,
        controller: expert.clone(),
        expert_mean_return: mean,
        expert_std_return: std,
        returns,
    };
    Ok(DemoSet {
        header,
        trajectories: outcomes.into_iter().map(|o| o.states).collect(),
    })
}

impl DemoSet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.header.horizon
    }

    /// Check the set against the environment it is about to be used with.
    pub fn validate_for(&self, spec: &EnvSpec) -> Result<()> {
        if self.header.env != spec.name {
            return Err(Error::EnvMismatch {
                expected: spec.name.clone(),
                found: self.header.env.clone(),
            });
        }
        if self.header.horizon != spec.horizon {
            return Err(Error::format(format!(
                "demos have T = {}, environment expects T = {}",
                self.header.horizon, spec.horizon
            )));
        }
        if self.header.state_dim != spec.state_dim {
            return Err(Error::format(format!(
                "demos have state dimension {}, environment expects {}",
                self.header.state_dim, spec.state_dim
            )));
        }
        self.check_shape()
    }

    fn check_shape(&self) -> Result<()> {
        let h = &self.header;
        if self.trajectories.is_empty() || self.trajectories.len() != h.count {
            return Err(Error::format(format!(
                "header declares {} trajectories, found {}",
                h.count,
                self.trajectories.len()
            )));
        }
        for (i, tau) in self.trajectories.iter().enumerate() {
            if tau.len() != h.horizon || tau.dim() != h.state_dim {
                return Err(Error::format(format!(
                    "trajectory {i} has {} states of dimension {}, expected {} of dimension {}",
                    tau.len(),
                    tau.dim(),
                    h.horizon,
                    h.state_dim
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check_shape()?;
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::format(e.to_string()))?;
        let payload_len = self.header.count * self.header.horizon * self.header.state_dim * 8;
        let mut out = Vec::with_capacity(20 + header.len() + payload_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for tau in &self.trajectories {
            for v in tau.as_flat() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("not a demonstration file (bad magic)"));
        }
        let mut word = [0u8; 4];
        read_exact(&mut r, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::format(format!("unsupported demo file version {version}")));
        }
        let mut len = [0u8; 8];
        read_exact(&mut r, &mut len)?;
        let header_len = u64::from_le_bytes(len) as usize;
        if header_len > r.len() {
            return Err(Error::format("demo header is truncated"));
        }
        let header: DemoHeader =
            serde_json::from_slice(&r[..header_len]).map_err(|e| Error::format(format!("corrupt demo header: {e}")))?;
        r = &r[header_len..];
        let per_traj = header
            .horizon
            .checked_mul(header.state_dim)
            .ok_or_else(|| Error::format("demo header dimensions overflow"))?;
        let expected = per_traj
            .checked_mul(header.count)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| Error::format("demo header dimensions overflow"))?;
        if r.len() != expected {
            return Err(Error::format(format!(
                "demo payload has {} bytes, header implies {expected}",
                r.len()
            )));
        }
        let mut trajectories = Vec::with_capacity(header.count);
        for chunk in r.chunks_exact(per_traj * 8) {
            let flat: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            trajectories.push(Trajectory::from_flat(header.state_dim, flat)?);
        }
        let set = DemoSet { header, trajectories };
        set.check_shape()?;
        Ok(set)
    }

    /// Write the binary file and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        write_file(path, &bytes)?;
        let sidecar = serde_json::to_vec_pretty(&self.header).map_err(|e| Error::format(e.to_string()))?;
        write_file(&sidecar_path(path), &sidecar)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::format("demo file is truncated"))
}
