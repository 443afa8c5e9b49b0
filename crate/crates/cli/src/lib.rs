//! Command-line pipeline: train a BNN model, certify or synthesise policies,
//! and simulate them.

pub mod config;
pub mod error;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use reachcert::certify::{self, CertificationResult};
use reachcert::env::{random_safe_state, simulate, Label, Stepper, Trajectory};
use reachcert::grid::Grid;
use reachcert::nn::{forward, Architecture, WeightSet};
use reachcert::policy::{fit_posterior, learn_initial_policy, Inference, NeuralPolicy, Policy, StoredPolicy};
use reachcert::posterior::{Dataset, HmcConfig, Posterior, ViConfig};
use reachcert::report::{self, Report};
use reachcert::rng::stream;
use reachcert::synthesize::{max_cert, train_nn_policy, ActionGrid};

pub use config::RunConfig;
use config::{require_file, StartKind, StepperKind};
pub use error::{CliError, CliResult};

const SIM_STREAM: u64 = 0x73696d;

#[derive(Debug, Parser)]
#[command(name = "reachcert", version, about = "Reach-avoid certification for BNN dynamics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Builtin layout name or layout JSON file.
    #[arg(long = "env", global = true)]
    pub environment: Option<String>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Caps the worker threads; also read from REACHCERT_WORKERS.
    #[arg(long, global = true, env = "REACHCERT_WORKERS")]
    pub workers: Option<usize>,
    /// Record wall-clock runtime in report.json.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InferenceKind {
    Hmc,
    Vi,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a BNN posterior, either to a dataset or by episodic learning on the
    /// environment (which also yields a learned policy).
    TrainBnn {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        inference: Option<InferenceKind>,
        /// HMC samples kept.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Certified lower bounds for a policy.
    Certify {
        #[arg(long)]
        posterior: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        n_s: Option<usize>,
        #[arg(long)]
        strict: bool,
    },
    /// Tabular policy maximising the certified bound.
    Synthesize {
        #[arg(long)]
        posterior: Option<PathBuf>,
        #[arg(long)]
        n_s: Option<usize>,
        #[arg(long)]
        actions_per_dim: Option<usize>,
    },
    /// Neural policy trained against the certified value tables.
    SynthesizeNn {
        #[arg(long)]
        posterior: Option<PathBuf>,
        /// Neural policy to start from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        n_s: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Roll a policy out and measure how often it reaches the goal safely.
    Simulate {
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        posterior: Option<PathBuf>,
        #[arg(long = "trajectories")]
        n_trajectories: Option<usize>,
        #[arg(long, value_enum)]
        stepper: Option<StepperKind>,
        #[arg(long, value_enum)]
        start: Option<StartKind>,
    },
}

/// Merges the config file and flags into the effective configuration.
pub fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(s) = g.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &g.output {
        cfg.output = o.clone();
    }
    if let Some(e) = &g.environment {
        cfg.environment = e.clone();
    }
    if let Some(h) = g.horizon {
        cfg.horizon = h;
    }
    if let Some(s) = g.sigma {
        cfg.sigma = s;
    }
    match &cli.command {
        Command::TrainBnn { data, inference, samples, burn_in, episodes } => {
            if let Some(d) = data {
                cfg.data = Some(d.clone());
            }
            match inference {
                Some(InferenceKind::Hmc) if !matches!(cfg.learn.inference, Inference::Hmc(_)) => {
                    cfg.learn.inference = Inference::Hmc(HmcConfig::default())
                }
                Some(InferenceKind::Vi) if !matches!(cfg.learn.inference, Inference::Vi(_)) => {
                    cfg.learn.inference = Inference::Vi(ViConfig::default())
                }
                _ => {}
            }
            if let Inference::Hmc(h) = &mut cfg.learn.inference {
                if let Some(n) = samples {
                    h.n_samples = *n;
                }
                if let Some(b) = burn_in {
                    h.burn_in = *b;
                }
            } else if samples.is_some() || burn_in.is_some() {
                return Err(CliError::user("--samples and --burn-in apply to HMC only"));
            }
            if let Some(e) = episodes {
                cfg.learn.episodes = *e;
            }
        }
        Command::Certify { posterior, policy, n_s, strict } => {
            set_path(&mut cfg.posterior, posterior);
            set_path(&mut cfg.policy, policy);
            if let Some(n) = n_s {
                cfg.certify.n_s = *n;
            }
            cfg.certify.strict |= strict;
        }
        Command::Synthesize { posterior, n_s, actions_per_dim } => {
            set_path(&mut cfg.posterior, posterior);
            if let Some(n) = n_s {
                cfg.certify.n_s = *n;
                cfg.synthesis.n_s = *n;
            }
            if let Some(t) = actions_per_dim {
                cfg.synthesis.actions_per_dim = *t;
            }
        }
        Command::SynthesizeNn { posterior, init, n_s, epochs } => {
            set_path(&mut cfg.posterior, posterior);
            set_path(&mut cfg.policy, init);
            if let Some(n) = n_s {
                cfg.certify.n_s = *n;
            }
            if let Some(e) = epochs {
                cfg.synthesis.nn.epochs = *e;
            }
        }
        Command::Simulate { policy, posterior, n_trajectories, stepper, start } => {
            set_path(&mut cfg.policy, policy);
            set_path(&mut cfg.posterior, posterior);
            if let Some(n) = n_trajectories {
                cfg.simulate.n_trajectories = *n;
            }
            if let Some(s) = stepper {
                cfg.simulate.stepper = *s;
            }
            if let Some(s) = start {
                cfg.simulate.start = *s;
            }
        }
    }
    cfg.propagate_seed()?;
    Ok(cfg)
}

fn set_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if let Some(p) = flag {
        *slot = Some(p.clone());
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve(&cli)?;
    if let Some(w) = cli.global.workers {
        if w == 0 {
            return Err(CliError::user("--workers must be at least 1"));
        }
        let pool =
            rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| CliError::internal(e.to_string()))?;
        return pool.install(|| dispatch(&cli.command, &cfg, cli.global.timing));
    }
    dispatch(&cli.command, &cfg, cli.global.timing)
}

fn dispatch(command: &Command, cfg: &RunConfig, timing: bool) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.output)
        .map_err(|e| CliError::user(format!("cannot create {}: {e}", cfg.output.display())))?;
    let start = Instant::now();
    let mut report = Report::new(cfg.digest()?);
    match command {
        Command::TrainBnn { .. } => train_bnn(cfg)?,
        Command::Certify { .. } => {
            let (spec, grid, posterior) = model(cfg)?;
            let policy = StoredPolicy::load(&require_file(cfg.policy.as_ref(), "policy")?)?;
            check_policy(&policy, &grid, posterior.arch())?;
            let mut res = certify::run(&posterior, &policy, &spec, &grid, &cfg.certify)?;
            res.provenance.policy_digest = Some(policy.digest()?);
            report = report.with_metrics(&res.metrics);
            write_result(cfg, &grid, spec.position_dim(), &res)?;
        }
        Command::Synthesize { .. } => {
            let (spec, grid, posterior) = model(cfg)?;
            let agrid = ActionGrid::new(cfg.synthesis.actions_per_dim, cfg.puck.action_dim())?;
            let (policy, mut res) = max_cert(&posterior, &spec, &grid, &agrid, &cfg.certify, &cfg.synthesis)?;
            std::fs::write(cfg.output.join("actions.csv"), report::action_table_csv(&policy))?;
            let stored = StoredPolicy::from(policy);
            stored.save(&cfg.output.join("policy.rcp"))?;
            res.provenance.policy_digest = Some(stored.digest()?);
            report = report.with_metrics(&res.metrics);
            write_result(cfg, &grid, spec.position_dim(), &res)?;
        }
        Command::SynthesizeNn { .. } => {
            let (spec, grid, posterior) = model(cfg)?;
            let init = match &cfg.policy {
                Some(p) => match StoredPolicy::load(&require_file(Some(p), "initial policy")?)? {
                    StoredPolicy::Neural(n) => Some(n),
                    StoredPolicy::Tabular(_) => return Err(CliError::user("the initial policy must be neural")),
                },
                None => None,
            };
            let (policy, mut res): (NeuralPolicy, CertificationResult) =
                train_nn_policy(&posterior, &spec, &grid, &cfg.certify, &cfg.synthesis, init.as_ref())?;
            let stored = StoredPolicy::from(policy);
            stored.save(&cfg.output.join("policy.rcp"))?;
            res.provenance.policy_digest = Some(stored.digest()?);
            report = report.with_metrics(&res.metrics);
            write_result(cfg, &grid, spec.position_dim(), &res)?;
        }
        Command::Simulate { .. } => {
            let perf = simulate_cmd(cfg)?;
            report.performance = Some(perf);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if timing {
        report.runtime_s = Some(elapsed);
    }
    report.save(&cfg.output.join("report.json"))?;
    print_report(&report);
    println!("runtime_s: {elapsed:.3}");
    Ok(())
}

fn print_report(r: &Report) {
    let show = |name: &str, v: Option<f64>| {
        if let Some(v) = v {
            println!("{name}: {v:.6}");
        }
    };
    show("performance", r.performance);
    show("avg_lower_bound", r.avg_lower_bound);
    show("coverage", r.coverage);
}

fn model(cfg: &RunConfig) -> CliResult<(reachcert::env::ReachAvoidSpec, Grid, Posterior)> {
    let spec = cfg.spec()?;
    let grid = cfg.grid(&spec)?;
    let posterior = Posterior::load(&require_file(cfg.posterior.as_ref(), "posterior")?)?;
    let arch = posterior.arch();
    let (n, m) = (cfg.puck.state_dim(), cfg.puck.action_dim());
    if arch.input_dim() != n + m || arch.output_dim() != n {
        return Err(CliError::user(format!(
            "posterior network maps {} → {} values, the system needs {} → {n}",
            arch.input_dim(),
            arch.output_dim(),
            n + m
        )));
    }
    Ok((spec, grid, posterior))
}

fn check_policy(policy: &StoredPolicy, grid: &Grid, dynamics: &Architecture) -> CliResult<()> {
    let action_dim = dynamics.input_dim() - grid.dim();
    if policy.action_dim() != action_dim {
        return Err(CliError::user(format!(
            "policy has {} actions, the model takes {action_dim}",
            policy.action_dim()
        )));
    }
    match policy {
        StoredPolicy::Tabular(t) if t.grid().dim() != grid.dim() => Err(CliError::user(format!(
            "policy grid has {} axes, the certification grid {}",
            t.grid().dim(),
            grid.dim()
        ))),
        StoredPolicy::Neural(n) if n.arch().input_dim() != grid.dim() => {
            Err(CliError::user("policy network input does not match the state"))
        }
        _ => Ok(()),
    }
}

fn write_result(cfg: &RunConfig, grid: &Grid, pos_dims: usize, res: &CertificationResult) -> CliResult<()> {
    report::write_certification(&cfg.output, grid, res)?;
    let ppm = report::heatmap_ppm(grid, res.k0(), pos_dims.min(2), cfg.heatmap_scale)?;
    std::fs::write(cfg.output.join("heatmap.ppm"), ppm)?;
    Ok(())
}

fn train_bnn(cfg: &RunConfig) -> CliResult<()> {
    let seed = cfg.seed()?;
    let out = &cfg.output;
    let (posterior, data) = match &cfg.data {
        Some(path) => {
            let path = require_file(Some(path), "dataset")?;
            let data = Dataset::load(&path)?;
            let arch = Architecture::mlp(data.input_dim(), &cfg.learn.hidden, data.target_dim(), cfg.learn.activation)?;
            (fit_posterior(&data, &arch, &cfg.learn.inference, seed)?, data)
        }
        None => {
            let spec = cfg.spec()?;
            let grid = cfg.grid(&spec)?;
            let learned = learn_initial_policy(&spec, &cfg.puck, &grid, &cfg.learn)?;
            StoredPolicy::from(learned.policy).save(&out.join("learned_policy.rcp"))?;
            learned.dataset.save(&out.join("dataset.csv"))?;
            (learned.posterior, learned.dataset)
        }
    };
    posterior.save(&out.join("posterior.rcp"))?;
    let mse = fit_mse(&posterior, &data)?;
    println!("rows: {}", data.len());
    println!("mse: {mse:.6e}");
    if let Some(rate) = posterior.provenance().details.get("acceptance_rate").and_then(|v| v.as_f64()) {
        println!("acceptance_rate: {rate:.4}");
    }
    let fit = serde_json::json!({
        "version": 1,
        "rows": data.len(),
        "mse": mse,
        "posterior": posterior.kind(),
        "provenance": posterior.provenance(),
    });
    std::fs::write(
        out.join("fit.json"),
        serde_json::to_string_pretty(&fit).map_err(|e| CliError::internal(e.to_string()))?,
    )?;
    Ok(())
}

/// Mean squared error of the posterior-mean network on the data.
fn fit_mse(posterior: &Posterior, data: &Dataset) -> CliResult<f64> {
    let w = WeightSet::unflatten(posterior.arch(), &posterior.mean_params())?;
    let mut total = 0.0;
    for (x, y) in data.inputs().iter().zip(data.targets()) {
        let p = forward(posterior.arch(), &w, x)?;
        total += p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

fn simulate_cmd(cfg: &RunConfig) -> CliResult<f64> {
    let seed = cfg.seed()?;
    let n = cfg.simulate.n_trajectories;
    if n == 0 {
        return Err(CliError::user("at least one trajectory is required"));
    }
    let spec = cfg.spec()?;
    let policy = StoredPolicy::load(&require_file(cfg.policy.as_ref(), "policy")?)?;
    if policy.action_dim() != cfg.puck.action_dim() {
        return Err(CliError::user("policy action size does not match the system"));
    }
    let posterior = match cfg.simulate.stepper {
        StepperKind::Bnn => Some(Posterior::load(&require_file(cfg.posterior.as_ref(), "posterior")?)?),
        StepperKind::True => None,
    };
    let stepper = match &posterior {
        Some(p) => Stepper::Bnn(p),
        None => Stepper::True { params: cfg.puck, sigma: cfg.sigma },
    };
    let layout_start = cfg.layout()?.start;
    let trajectories: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[SIM_STREAM, i as u64]);
            let x0 = match cfg.simulate.start {
                StartKind::Layout => {
                    let mut x = layout_start.clone();
                    x.resize(cfg.puck.state_dim(), 0.0);
                    x
                }
                StartKind::Random => random_safe_state(&spec, &mut rng)?,
            };
            if spec.classify(&x0) == Label::Unsafe {
                return Err(reachcert::Error::Config("start state is unsafe".into()));
            }
            simulate(&spec, &stepper, &policy, &x0, &mut rng)
        })
        .collect::<reachcert::Result<_>>()?;
    std::fs::write(cfg.output.join("outcomes.csv"), report::outcomes_csv(&trajectories))?;
    Ok(report::performance(&trajectories)?)
}

/// Exit status for a finished run.
pub fn exit_code(result: &CliResult<()>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(e) => e.code,
    }
}
