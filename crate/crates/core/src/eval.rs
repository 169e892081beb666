//! Scoring protocols: return ratios, noise transfer, horizon ablation and
//! the state-marginal divergence trend.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{compensated_sum, CostParams, StateCost};
use crate::demos::{initial_state, mean_std, DemoSet};
use crate::dynamics::Trajectory;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mppi::{run_episode, ControllerConfig};
use crate::rng::{tag, RngStream};
use crate::trainer::{expected_env_steps, train, TrainConfig, TrainIo, TrainState};

/// Score of a policy relative to the expert, for rewards (negated costs).
///
/// Returns here are negative, so the plain quotient `mean / expert` would
/// grow as the policy gets worse. For a negative expert mean the ratio is
/// `expert / mean`, which is 1 at expert level and larger when the policy
/// does better; for a positive expert mean it is `mean / expert`. Negative
/// ratios are clipped to 0.
pub fn return_ratio(mean: f64, expert_mean: f64) -> f64 {
    let r = if expert_mean < 0.0 {
        expert_mean / mean.min(-f64::MIN_POSITIVE)
    } else if expert_mean > 0.0 {
        mean / expert_mean
    } else if mean >= 0.0 {
        1.0
    } else {
        0.0
    };
    r.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: String,
    pub noise_level: f64,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub expert_mean_return: f64,
    pub ratio: f64,
    /// Episodes use seeds `seed` with indices `0..episodes`.
    pub seed: u64,
    pub returns: Vec<f64>,
    /// Not written to report files, which must not depend on timing.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

pub const REPORT_HEADER: &str = "env,noise_level,episodes,mean_return,std_return,expert_mean_return,ratio,seed";

impl EvalReport {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.env,
            self.noise_level,
            self.episodes,
            self.mean_return,
            self.std_return,
            self.expert_mean_return,
            self.ratio,
            self.seed
        )
    }
}

pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::format(e.to_string()))
}

/// Ground-truth returns of MPPI under `cost` over `episodes` episodes.
///
/// Episode `i` starts from `initial_state(env, seed, i)`, so with the demo
/// seed the episodes start where the demonstrations did.
pub fn rollout_returns<C: StateCost + ?Sized>(
    cost: &C,
    env: &Environment,
    noise_level: f64,
    episodes: usize,
    cfg: &ControllerConfig,
    seed: u64,
) -> Result<Vec<(f64, Trajectory)>> {
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let x0 = initial_state(env, seed, i);
            let stream = RngStream::derive(seed, &[tag::EVAL, i as u64]);
            let out = run_episode(env, cost, cfg, noise_level, stream, Some(x0))?;
            Ok((out.ground_truth_return, out.states))
        })
        .collect()
}

/// Run MPPI under the given cost and score it with the ground truth.
pub fn evaluate_policy<C: StateCost + ?Sized>(
    cost: &C,
    env: &Environment,
    noise_level: f64,
    episodes: usize,
    cfg: &ControllerConfig,
    seed: u64,
    expert_mean_return: f64,
) -> Result<EvalReport> {
    if episodes < 1 {
        return Err(Error::usage("evaluation needs at least one episode"));
    }
    let start = Instant::now();
    let returns: Vec<f64> = rollout_returns(cost, env, noise_level, episodes, cfg, seed)?
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let (mean, std) = mean_std(&returns);
    Ok(EvalReport {
        env: env.name().to_string(),
        noise_level,
        episodes,
        mean_return: mean,
        std_return: std,
        expert_mean_return,
        ratio: return_ratio(mean, expert_mean_return),
        seed,
        returns,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Re-optimise control under a fixed cost at each noise level; ratios are
/// against the noise-free expert.
pub fn transfer_eval<C: StateCost + ?Sized>(
    cost: &C,
    env: &Environment,
    noise_levels: &[f64],
    episodes: usize,
    cfg: &ControllerConfig,
    seed: u64,
    noise_free_expert_mean: f64,
) -> Result<Vec<EvalReport>> {
    noise_levels
        .iter()
        .map(|&level| evaluate_policy(cost, env, level, episodes, cfg, seed, noise_free_expert_mean))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub env_steps: u64,
    pub mean_return: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub horizon: usize,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn csv(&self) -> String {
        let mut out = String::from("env_steps,mean_return,std\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.env_steps, p.mean_return, p.std));
        }
        out
    }

    pub fn returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_return).collect()
    }

    /// Last value of the trailing moving average.
    pub fn final_smoothed(&self, window: usize) -> f64 {
        moving_average(&self.returns(), window)
            .last()
            .copied()
            .unwrap_or(f64::NAN)
    }

    /// First env-step count at which the smoothed curve reaches `level`.
    pub fn steps_to_level(&self, level: f64, window: usize) -> Option<u64> {
        moving_average(&self.returns(), window)
            .iter()
            .zip(&self.points)
            .find(|(v, _)| **v >= level)
            .map(|(_, p)| p.env_steps)
    }

    /// First env-step count at which the smoothed curve covers `frac` of
    /// the way from its first to its final value.
    pub fn steps_to_fraction(&self, frac: f64, window: usize) -> Option<u64> {
        let smooth = moving_average(&self.returns(), window);
        let (first, last) = (*smooth.first()?, *smooth.last()?);
        let target = first + frac * (last - first);
        let rising = last >= first;
        smooth
            .iter()
            .zip(&self.points)
            .find(|(v, _)| if rising { **v >= target } else { **v <= target })
            .map(|(_, p)| p.env_steps)
    }
}

/// Trailing moving average; the first entries average what is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            compensated_sum(values[lo..=i].iter().copied()) / (i + 1 - lo) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSettings {
    /// Training budget in environment steps, identical for every K.
    pub budget: u64,
    /// Evaluations spread evenly over each run, besides the one at step 0.
    pub eval_points: usize,
    pub eval_episodes: usize,
}

/// Train one cost per horizon K under the same step budget and record a
/// learning curve for each, scored by MPPI running at that K.
pub fn ablate_horizon(
    base: &TrainConfig,
    env: &Environment,
    demos: &DemoSet,
    horizons: &[usize],
    settings: &AblationSettings,
) -> Result<Vec<LearningCurve>> {
    if horizons.len() < 2 {
        return Err(Error::usage("horizon ablation needs at least two K values"));
    }
    if settings.eval_points < 1 || settings.eval_episodes < 1 {
        return Err(Error::usage("ablation needs eval_points >= 1 and eval_episodes >= 1"));
    }
    let big_t = env.spec.horizon;
    horizons
        .iter()
        .map(|&k| {
            let mut cfg = base.clone();
            cfg.controller.horizon = k;
            cfg.eval_every = 0;
            cfg.validate()?;
            let per_episode = expected_env_steps(1, big_t, &cfg.controller);
            let episodes = ((settings.budget / per_episode) as usize).max(1);
            let evaluate = |state: &TrainState| -> Result<CurvePoint> {
                let r = evaluate_policy(
                    &state.params,
                    env,
                    cfg.env_noise,
                    settings.eval_episodes,
                    &cfg.controller,
                    demos.header.seed,
                    demos.header.expert_mean_return,
                )?;
                Ok(CurvePoint {
                    episode: state.episode,
                    env_steps: state.env_steps,
                    mean_return: r.mean_return,
                    std: r.std_return,
                })
            };
            let mut state = TrainState::fresh(&cfg, env.spec.state_dim)?;
            let mut points = vec![evaluate(&state)?];
            let points_n = settings.eval_points.min(episodes);
            for i in 1..=points_n {
                cfg.episodes = episodes * i / points_n;
                state = train(
                    &cfg,
                    env,
                    demos,
                    TrainIo {
                        resume: Some(state),
                        ..TrainIo::default()
                    },
                )?
                .state;
                points.push(evaluate(&state)?);
            }
            Ok(LearningCurve { horizon: k, points })
        })
        .collect()
}

/// Histogram over selected state coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub dims: Vec<usize>,
    /// Bin edges per projected dimension (bins + 1 values each).
    pub edges: Vec<Vec<f64>>,
    /// Row-major bin masses, summing to 1.
    pub masses: Vec<f64>,
    pub samples: usize,
}

/// `⌈∛n⌉` bins per dimension, reduced while cells would average fewer than
/// five samples.
pub fn default_bins(samples: usize, dims: usize) -> usize {
    let mut bins = (samples as f64).cbrt().ceil().max(1.0) as usize;
    let full = bins;
    while bins > 1 && (samples as f64) / (bins as f64).powi(dims as i32) < 5.0 {
        bins -= 1;
    }
    if bins < full {
        log::warn!("only {samples} samples: widened histogram from {full} to {bins} bins per dimension");
    }
    bins
}

/// Equal-width edges covering both sample sets.
pub fn shared_edges(sets: &[&[Vec<f64>]], dims: &[usize], bins: usize) -> Result<Vec<Vec<f64>>> {
    dims.iter()
        .map(|&d| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for set in sets {
                for x in set.iter() {
                    let v = *x
                        .get(d)
                        .ok_or_else(|| Error::usage(format!("sample has no coordinate {d}")))?;
                    if !v.is_finite() {
                        return Err(Error::numeric(d, "non-finite sample"));
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if !lo.is_finite() {
                return Err(Error::usage("no samples to bin"));
            }
            if hi <= lo {
                hi = lo + 1.0;
            }
            Ok((0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect())
        })
        .collect()
}

impl MarginalEstimate {
    pub fn from_samples(samples: &[Vec<f64>], dims: &[usize], edges: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::usage("no samples to bin"));
        }
        if dims.is_empty() || dims.len() != edges.len() || edges.iter().any(|e| e.len() < 2) {
            return Err(Error::usage(
                "need one edge vector (>= 2 values) per projected dimension",
            ));
        }
        let sizes: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let cells: usize = sizes.iter().product();
        let mut counts = vec![0u64; cells];
        for x in samples {
            let mut idx = 0;
            for ((&d, e), &nb) in dims.iter().zip(&edges).zip(&sizes) {
                let v = x[d];
                let (lo, hi) = (e[0], e[nb]);
                let b = if v <= lo {
                    0
                } else if v >= hi {
                    nb - 1
                } else {
                    (e.partition_point(|&edge| edge <= v) - 1).min(nb - 1)
                };
                idx = idx * nb + b;
            }
            counts[idx] += 1;
        }
        let n = samples.len() as f64;
        Ok(Self {
            dims: dims.to_vec(),
            edges,
            masses: counts.into_iter().map(|c| c as f64 / n).collect(),
            samples: samples.len(),
        })
    }
}

/// Half the L1 distance between two histograms on the same bins.
pub fn tv_distance(a: &MarginalEstimate, b: &MarginalEstimate) -> Result<f64> {
    if a.edges != b.edges || a.dims != b.dims {
        return Err(Error::usage("histograms use different bins"));
    }
    Ok(0.5 * compensated_sum(a.masses.iter().zip(&b.masses).map(|(p, q)| (p - q).abs())))
}

/// Plug-in total variation between two sample sets projected on `dims`.
pub fn tv_between(a: &[Vec<f64>], b: &[Vec<f64>], dims: &[usize]) -> Result<f64> {
    let bins = default_bins(a.len().min(b.len()), dims.len());
    let edges = shared_edges(&[a, b], dims, bins)?;
    let ha = MarginalEstimate::from_samples(a, dims, edges.clone())?;
    let hb = MarginalEstimate::from_samples(b, dims, edges)?;
    tv_distance(&ha, &hb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvPoint {
    pub horizon: usize,
    pub samples: usize,
    pub tv: f64,
    /// `T · D_TV`, the cumulative quantity the growth exponent is fitted to.
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvTrend {
    pub points: Vec<TvPoint>,
    /// Least-squares slope of `log(T · D_TV)` against `log T`.
    pub exponent: f64,
}

impl TvTrend {
    pub fn csv(&self) -> String {
        let mut out = String::from("horizon,samples,tv,cumulative\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.horizon, p.samples, p.tv, p.cumulative));
        }
        out
    }
}

/// Slope of the least-squares line through `(x, y)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::usage("slope fit needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::usage("slope fit needs distinct x values"));
    }
    Ok(sxy / sxx)
}

fn pooled(trajs: &[(f64, Trajectory)]) -> Vec<Vec<f64>> {
    trajs
        .iter()
        .flat_map(|(_, tau)| tau.states().map(<[f64]>::to_vec))
        .collect()
}

/// For each task duration T: roll out the ground-truth expert and the
/// learned cost from the same initial states, pool the visited states, and
/// compare the time-averaged marginals on the projection `dims`.
#[allow(clippy::too_many_arguments)]
pub fn tv_trend(
    env: &Environment,
    learned: &CostParams,
    cfg: &ControllerConfig,
    horizons: &[usize],
    episodes: usize,
    dims: &[usize],
    seed: u64,
    noise_level: f64,
) -> Result<TvTrend> {
    if horizons.len() < 2 || episodes < 1 {
        return Err(Error::usage("trend needs at least two horizons and one episode each"));
    }
    let mut points = Vec::with_capacity(horizons.len());
    for &big_t in horizons {
        let env_t = env.clone().with_horizon(big_t);
        let expert = rollout_returns(&env_t.cost, &env_t, noise_level, episodes, cfg, seed)?;
        let mine = rollout_returns(learned, &env_t, noise_level, episodes, cfg, seed)?;
        let (a, b) = (pooled(&expert), pooled(&mine));
        let tv = tv_between(&a, &b, dims)?;
        points.push(TvPoint {
            horizon: big_t,
            samples: a.len(),
            tv,
            cumulative: big_t as f64 * tv,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.horizon as f64).ln()).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| p.cumulative.max(f64::MIN_POSITIVE).ln())
        .collect();
    let exponent = fit_slope(&xs, &ys)?;
    Ok(TvTrend { points, exponent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ratio_convention() {
        assert_eq!(return_ratio(-100.0, -100.0), 1.0);
        assert!(return_ratio(-120.0, -100.0) < 1.0);
        assert!(return_ratio(-80.0, -100.0) > 1.0);
        assert_eq!(return_ratio(50.0, 100.0), 0.5);
        assert_eq!(return_ratio(-50.0, 100.0), 0.0);
    }

    #[test]
    fn moving_average_and_plateau() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        let curve = LearningCurve {
            horizon: 5,
            points: [-10.0, -5.0, -2.0, -1.0, -1.0]
                .iter()
                .enumerate()
                .map(|(i, &r)| CurvePoint {
                    episode: i,
                    env_steps: 100 * i as u64,
                    mean_return: r,
                    std: 0.0,
                })
                .collect(),
        };
        assert_eq!(curve.final_smoothed(1), -1.0);
        assert_eq!(curve.steps_to_fraction(0.9, 1), Some(300));
        assert_eq!(curve.steps_to_fraction(0.5, 1), Some(100));
    }

    #[test]
    fn histogram_masses_sum_to_one() {
        let mut rng = RngStream::new(3, 0).rng();
        let xs: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![rng.gen::<f64>(), rng.sample(StandardNormal)])
            .collect();
        let edges = shared_edges(&[&xs], &[0, 1], 7).unwrap();
        let h = MarginalEstimate::from_samples(&xs, &[0, 1], edges).unwrap();
        assert_eq!(h.masses.len(), 49);
        assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_samples_have_zero_tv() {
        let mut rng = RngStream::new(4, 0).rng();
        let xs: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.sample(StandardNormal)]).collect();
        assert_eq!(tv_between(&xs, &xs, &[0]).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_supports_have_tv_one() {
        let a: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0]).collect();
        let b: Vec<Vec<f64>> = (0..100).map(|i| vec![10.0 + i as f64 / 100.0]).collect();
        assert!((tv_between(&a, &b, &[0]).unwrap() - 1.0).abs() < 1e-12);
    }

    fn normal_pdf(x: f64, mu: f64) -> f64 {
        (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn gaussian_tv_matches_quadrature() {
        let shift = 1.0;
        // Trapezoid rule for ½∫|p − q| on a wide grid.
        let (lo, hi, n) = (-12.0, 13.0, 200_000);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| 0.5 * (normal_pdf(x, 0.0) - normal_pdf(x, shift)).abs();
        let mut exact = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            exact += f(lo + i as f64 * h);
        }
        exact *= h;

        let mut rng = RngStream::new(11, 0).rng();
        let m = 200_000;
        let a: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.sample::<f64, _>(StandardNormal)]).collect();
        let b: Vec<Vec<f64>> = (0..m)
            .map(|_| vec![shift + rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let est = tv_between(&a, &b, &[0]).unwrap();
        assert!((est - exact).abs() < 0.02, "{est} vs {exact}");
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [25.0f64, 50.0, 100.0, 200.0].iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = [25.0f64, 50.0, 100.0, 200.0]
            .iter()
            .map(|t| (3.0 * t * t).ln())
            .collect();
        assert!((fit_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn few_samples_widen_bins() {
        assert_eq!(default_bins(1000, 1), 10);
        assert!(default_bins(100, 2) <= 4);
    }
}
