use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use rhirl::config::RunConfig;
use rhirl::demos::{generate_demos, DemoSet};
use rhirl::eval::{
    ablate_horizon, evaluate_policy, reports_csv, to_json, transfer_eval, tv_trend, AblationSettings, EvalReport,
};
use rhirl::trainer::{metrics_csv, metrics_jsonl, train, Checkpoint, MetricRow, TrainIo, TrainState};
use rhirl::Error;

#[derive(Parser)]
#[command(name = "rhirl", version, about = "Receding-horizon inverse reinforcement learning")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the receding horizon K.
    #[arg(short = 'K', long = "horizon")]
    horizon: Option<usize>,
    /// Override the task duration T.
    #[arg(short = 'T', long = "duration")]
    duration: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations.
    GenDemos {
        #[command(flatten)]
        common: Common,
        /// Control-noise variance level of the expert.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a cost from demonstrations.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a learned cost at each configured noise level.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Demonstrations whose expert return is the reference.
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Evaluate only at this noise level.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Re-optimise a cost learned without noise in noisy environments.
    EvalTransfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Noise-free demonstrations (reference expert return).
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Train under a fixed step budget for several receding horizons.
    AblateK {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Comma-separated K values.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Environment-step budget per K.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Fit the growth of the state-marginal divergence with T.
    CheckBound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated task durations.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<usize>>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Usage(_) => 2,
        Error::SanityFloor { .. } => 3,
        Error::EnvMismatch { .. } | Error::Format(_) => 4,
        Error::Numeric { .. } | Error::Training { .. } => 5,
        Error::Io { .. } => 1,
    }
}

fn load_config(common: &Common) -> rhirl::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config).map_err(|e| match e {
        Error::Io { path, source } => Error::usage(format!("cannot read config {}: {source}", path.display())),
        other => other,
    })?;
    cfg.apply_env_overrides()?;
    if let Some(k) = common.horizon {
        cfg.set_controller_horizon(k);
    }
    if let Some(t) = common.duration {
        cfg.horizon = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> rhirl::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_demos(cfg: &RunConfig, path: Option<&PathBuf>) -> rhirl::Result<DemoSet> {
    let path = path.unwrap_or(&cfg.paths.demos);
    let demos = DemoSet::load(path)?;
    demos.validate_for(&cfg.environment()?.spec)?;
    Ok(demos)
}

fn load_params(cfg: &RunConfig, path: Option<&PathBuf>) -> rhirl::Result<rhirl::cost::CostParams> {
    let path = path.unwrap_or(&cfg.paths.checkpoints);
    let ckpt = Checkpoint::load(path)?;
    ckpt.validate_for(&cfg.env, cfg.environment()?.spec.state_dim, &cfg.trainer.hidden)?;
    ckpt.params()
}

fn print_report(r: &EvalReport) {
    println!(
        "{:<18} noise {:<4} mean {:>9.2} ± {:<7.2} expert {:>9.2} ratio {:.3} ({:.1}s)",
        r.env, r.noise_level, r.mean_return, r.std_return, r.expert_mean_return, r.ratio, r.wall_clock_secs
    );
}

fn print_progress(rows: &[MetricRow]) {
    if let Some(last) = rows.last() {
        match (last.eval_return, last.eval_ratio) {
            (Some(ret), Some(ratio)) => println!(
                "episode {:>4}  env steps {:>10}  eval return {:>9.2}  ratio {:.3}",
                last.episode + 1,
                last.env_steps,
                ret,
                ratio
            ),
            _ => log::info!("episode {} done, {} env steps", last.episode + 1, last.env_steps),
        }
    }
}

fn run(cli: Cli) -> rhirl::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::usage(format!("cannot size worker pool: {e}")))?;
    }
    match cli.command {
        Command::GenDemos {
            common,
            noise,
            count,
            out,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = noise {
                cfg.demo.noise_level = n;
            }
            if let Some(c) = count {
                cfg.demo.count = c;
            }
            cfg.validate()?;
            let env = cfg.environment()?;
            let start = Instant::now();
            let demos = generate_demos(
                &env,
                cfg.demo.noise_level,
                cfg.demo.count,
                &cfg.expert_controller(),
                cfg.seed,
                cfg.demo.sanity_floor,
            )?;
            let path = out.unwrap_or_else(|| cfg.paths.demos.clone());
            demos.save(&path)?;
            println!(
                "wrote {} demos to {} (expert return {:.2} ± {:.2}, {:.1}s)",
                demos.len(),
                path.display(),
                demos.header.expert_mean_return,
                demos.header.expert_std_return,
                start.elapsed().as_secs_f64()
            );
        }
        Command::Train {
            common,
            demos,
            out,
            resume,
        } => {
            let cfg = load_config(&common)?;
            let env = cfg.environment()?;
            let demos = load_demos(&cfg, demos.as_ref())?;
            let resume = match resume {
                Some(p) => {
                    let ckpt = Checkpoint::load(&p)?;
                    ckpt.validate_for(&cfg.env, env.spec.state_dim, &cfg.trainer.hidden)?;
                    Some(TrainState::from_checkpoint(&ckpt)?)
                }
                None => None,
            };
            let ckpt_path = out.unwrap_or_else(|| cfg.paths.checkpoints.clone());
            let outcome = train(
                &cfg.trainer,
                &env,
                &demos,
                TrainIo {
                    checkpoint: Some(ckpt_path.clone()),
                    resume,
                    on_episode: Some(print_progress),
                },
            )?;
            write(&cfg.paths.reports.join("metrics.csv"), &metrics_csv(&outcome.log))?;
            write(&cfg.paths.reports.join("metrics.jsonl"), &metrics_jsonl(&outcome.log)?)?;
            println!(
                "trained {} episodes ({} env steps); checkpoint {}",
                outcome.state.episode,
                outcome.state.env_steps,
                ckpt_path.display()
            );
        }
        Command::Eval {
            common,
            checkpoint,
            demos,
            noise,
        } => {
            let cfg = load_config(&common)?;
            let env = cfg.environment()?;
            let params = load_params(&cfg, checkpoint.as_ref())?;
            let demos = load_demos(&cfg, demos.as_ref())?;
            let levels = noise.map_or_else(|| cfg.eval.noise_levels.clone(), |n| vec![n]);
            let mut reports = Vec::new();
            for level in levels {
                let r = evaluate_policy(
                    &params,
                    &env,
                    level,
                    cfg.eval.episodes,
                    &cfg.controller,
                    demos.header.seed,
                    demos.header.expert_mean_return,
                )?;
                print_report(&r);
                reports.push(r);
            }
            write(&cfg.paths.reports.join("eval.csv"), &reports_csv(&reports))?;
            write(&cfg.paths.reports.join("eval.json"), &to_json(&reports)?)?;
        }
        Command::EvalTransfer {
            common,
            checkpoint,
            demos,
        } => {
            let cfg = load_config(&common)?;
            let env = cfg.environment()?;
            let params = load_params(&cfg, checkpoint.as_ref())?;
            let demos = load_demos(&cfg, demos.as_ref())?;
            if demos.header.noise_level != 0.0 {
                return Err(Error::usage(format!(
                    "transfer needs noise-free reference demos, these have noise level {}",
                    demos.header.noise_level
                )));
            }
            let reports = transfer_eval(
                &params,
                &env,
                &cfg.eval.noise_levels,
                cfg.eval.episodes,
                &cfg.controller,
                demos.header.seed,
                demos.header.expert_mean_return,
            )?;
            for r in &reports {
                print_report(r);
            }
            write(&cfg.paths.reports.join("transfer.csv"), &reports_csv(&reports))?;
            write(&cfg.paths.reports.join("transfer.json"), &to_json(&reports)?)?;
        }
        Command::AblateK {
            common,
            demos,
            ks,
            budget,
        } => {
            let cfg = load_config(&common)?;
            let env = cfg.environment()?;
            let demos = load_demos(&cfg, demos.as_ref())?;
            let ks = ks.unwrap_or_else(|| cfg.eval.ablation_horizons.clone());
            let settings = AblationSettings {
                budget: budget.unwrap_or(cfg.eval.ablation_budget),
                eval_points: cfg.eval.ablation_eval_points,
                eval_episodes: cfg.eval.episodes,
            };
            let curves = ablate_horizon(&cfg.trainer, &env, &demos, &ks, &settings)?;
            for c in &curves {
                write(
                    &cfg.paths.reports.join(format!("ablation_k{}.csv", c.horizon)),
                    &c.csv(),
                )?;
                println!(
                    "K = {:<4} points {:>3}  final smoothed return {:>9.2}  steps to 90% {}",
                    c.horizon,
                    c.points.len(),
                    c.final_smoothed(3),
                    c.steps_to_fraction(0.9, 3).map_or("-".into(), |s| s.to_string())
                );
            }
            write(&cfg.paths.reports.join("ablation.json"), &to_json(&curves)?)?;
        }
        Command::CheckBound {
            common,
            checkpoint,
            durations,
        } => {
            let cfg = load_config(&common)?;
            let env = cfg.environment()?;
            let params = load_params(&cfg, checkpoint.as_ref())?;
            let horizons = durations.unwrap_or_else(|| cfg.eval.bound_horizons.clone());
            let dims: Vec<usize> = (0..env.spec.state_dim.min(2)).collect();
            let trend = tv_trend(
                &env,
                &params,
                &cfg.controller,
                &horizons,
                cfg.eval.bound_episodes,
                &dims,
                cfg.seed,
                cfg.demo.noise_level,
            )?;
            for p in &trend.points {
                println!("T = {:<4} D_TV {:.4}  T·D_TV {:.3}", p.horizon, p.tv, p.cumulative);
            }
            println!("growth exponent {:.3}", trend.exponent);
            write(&cfg.paths.reports.join("bound.csv"), &trend.csv())?;
            write(&cfg.paths.reports.join("bound.json"), &to_json(&trend)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
