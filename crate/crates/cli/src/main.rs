//! `zo`: single runs, seed ensembles, T_eps sweeps and diagnostic suites.
//!
//! Exit status: 0 on success, 1 when a diagnostic check fails or a run
//! errors at runtime, 2 for invalid configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use zo_core::diagnostics::{estimate_c0, C0Cache, C0Estimate};
use zo_core::experiments::{
    run_experiment, run_suite, sweep_dimension, sweep_precision, write_sweep, DiagnoseOptions,
    ExperimentConfig, Suite,
};
use zo_core::problems::{estimate_sigma, RowMode, SigmaEstimate};
use zo_core::{RandomStream, Setting, ZoError};

#[derive(Parser)]
#[command(name = "zo", version, about = "Zeroth-order optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one setting over a list of seeds.
    Run(ConfigArgs),
    /// Empirical T_eps against dimension at a fixed precision.
    SweepD {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dimensions, e.g. 2,4,8,16,32.
        #[arg(long = "d-sweep", value_delimiter = ',')]
        d_sweep: Option<Vec<usize>>,
    },
    /// Empirical T_eps against precision at a fixed dimension.
    SweepEps {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Precisions, e.g. 0.4,0.2,0.1,0.05.
        #[arg(long = "eps-list", value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
    },
    /// Run a diagnostic suite: moments, smoothing, variance, proposition1 or all.
    Diagnose {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiply a declared constant, e.g. L=0.5 (repeatable).
        #[arg(long = "scale-constant", value_parser = parse_scale)]
        scale_constant: Vec<(String, f64)>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Small Monte Carlo budgets (smoke test).
        #[arg(long)]
        quick: bool,
    },
    /// Measure c0 (and sigma0/sigma1 when the problem is stochastic).
    EstimateConstants {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "n-draws", default_value_t = 200_000)]
        n_draws: usize,
        #[arg(long = "n-probes", default_value_t = 8)]
        n_probes: usize,
    },
}

/// Every config field, settable on the command line; flags override the
/// file given with `--config`.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    setting: Option<Setting>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    rows: Option<RowMode>,
    #[arg(long = "data-seed")]
    data_seed: Option<u64>,
    #[arg(long)]
    value: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long = "c0-cache")]
    c0_cache: Option<PathBuf>,
    #[arg(long = "row-stride")]
    row_stride: Option<usize>,
    #[arg(long = "max-horizon")]
    max_horizon: Option<usize>,
    #[arg(long = "scale-constant", value_parser = parse_scale)]
    scale_constant: Vec<(String, f64)>,
    /// Also write a gnuplot script next to sweep output.
    #[arg(long)]
    gnuplot: bool,
}

fn parse_scale(s: &str) -> Result<(String, f64), String> {
    let (name, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=FACTOR, got {s:?}"))?;
    let f: f64 = v.parse().map_err(|e| format!("bad factor {v:?}: {e}"))?;
    Ok((name.trim().to_string(), f))
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)
                .with_context(|| format!("reading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { c.$target = v.clone(); })*
            };
        }
        set!(problem => problem, setting => setting, estimator => estimator, seeds => seeds,
             out => out, d => d, mu => mu, l => l, temperature => temperature, m => m,
             rows => rows, data_seed => data_seed, value => value, row_stride => row_stride,
             max_horizon => max_horizon);
        macro_rules! set_opt {
            ($($field:ident),* $(,)?) => {
                $(if self.$field.is_some() { c.$field = self.$field.clone(); })*
            };
        }
        set_opt!(eps, eta, alpha, sigma0, c0, c0_cache);
        if self.horizon.is_some() {
            c.horizon = self.horizon;
        }
        for (k, v) in &self.scale_constant {
            c.scale_constants.insert(k.clone(), *v);
        }
        c.gnuplot |= self.gnuplot;
        Ok(c)
    }
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct ConstantsReport {
    problem: String,
    d: usize,
    c0: Option<C0Estimate>,
    sigma: Option<SigmaEstimate>,
}

/// `Ok(true)` when everything passed.
fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let agg = run_experiment(&cfg)?;
            for w in &agg.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} on {} (d = {}): T = {}, eta = {:.4e}, alpha = {:.4e}",
                agg.setting, agg.problem, agg.d, agg.horizon, agg.eta, agg.alpha
            );
            println!(
                "{:?} over {} seeds: mean {:.6e}, std {:.3e}, diverged {}",
                agg.metric,
                agg.n_seeds,
                agg.mean_final_metric,
                agg.std_final_metric,
                agg.n_diverged
            );
            println!("wrote {}", cfg.out.display());
            Ok(true)
        }
        Command::SweepD { cfg, d_sweep } => {
            let mut c = cfg.resolve()?;
            if d_sweep.is_some() {
                c.d_sweep = d_sweep;
            }
            let ds = c
                .d_sweep
                .clone()
                .ok_or(ZoError::Parameter("sweep-d needs --d-sweep".into()))?;
            let r = sweep_dimension(&c, &ds)?;
            write_sweep(&r, &c.out, c.gnuplot)?;
            print_sweep(&r);
            Ok(true)
        }
        Command::SweepEps { cfg, eps_list } => {
            let mut c = cfg.resolve()?;
            if eps_list.is_some() {
                c.eps_list = eps_list;
            }
            let eps = c
                .eps_list
                .clone()
                .ok_or(ZoError::Parameter("sweep-eps needs --eps-list".into()))?;
            let r = sweep_precision(&c, &eps)?;
            write_sweep(&r, &c.out, c.gnuplot)?;
            print_sweep(&r);
            Ok(true)
        }
        Command::Diagnose {
            suite,
            seed,
            scale_constant,
            out,
            quick,
        } => {
            let suite: Suite = suite.parse()?;
            let mut opts = if quick {
                DiagnoseOptions::quick()
            } else {
                DiagnoseOptions::default()
            };
            opts.seed = seed;
            opts.scale_constants = scale_constant.into_iter().collect::<BTreeMap<_, _>>();
            for f in opts.scale_constants.values() {
                if !(f.is_finite() && *f > 0.0) {
                    return Err(ZoError::Parameter(format!(
                        "scale factors must be positive (got {f})"
                    ))
                    .into());
                }
            }
            let outcome = run_suite(suite, &opts)?;
            for r in &outcome.reports {
                println!("{}", r.summary_line());
            }
            for r in outcome.reports.iter().filter(|r| !r.passed) {
                println!("\n{}", r.to_table());
            }
            write_json(out.join(format!("diagnose_{suite}.json")), &outcome)?;
            let failed = outcome.reports.iter().filter(|r| !r.passed).count();
            println!("{suite}: {} checks, {failed} failed", outcome.reports.len());
            Ok(outcome.passed)
        }
        Command::EstimateConstants {
            cfg,
            n_draws,
            n_probes,
        } => {
            let c = cfg.resolve()?;
            c.validate()?;
            let p = c.build_problem(c.d)?;
            let mut stream = RandomStream::new(c.seeds[0]);
            let alpha = c.alpha.unwrap_or(0.1);
            let c0 = if p.classes.lipschitz {
                Some(estimate_c0(&p, alpha, n_draws, n_probes, &mut stream)?)
            } else {
                None
            };
            let sigma = if p.has_oracle() {
                Some(estimate_sigma(
                    &p,
                    n_probes,
                    n_draws.min(100_000),
                    &mut stream,
                )?)
            } else {
                None
            };
            if let Some(e) = &c0 {
                println!("c0_hat = {:.4} (d = {}, alpha = {alpha})", e.c0_hat, e.d);
                let path = c
                    .c0_cache
                    .clone()
                    .unwrap_or_else(|| c.out.join("c0_cache.json"));
                let mut cache = if path.exists() {
                    C0Cache::load(&path)?
                } else {
                    C0Cache::default()
                };
                cache.insert(p.id(), p.dim(), e.c0_hat);
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir)?;
                }
                cache.save(&path)?;
                println!("updated {}", path.display());
            }
            if let Some(s) = &sigma {
                println!(
                    "sigma0_hat = {:.4e}, sigma1_hat = {:?}",
                    s.sigma0_hat, s.sigma1_hat
                );
            }
            if c0.is_none() && sigma.is_none() {
                bail!(ZoError::Capability(format!(
                    "problem {:?} is neither Lipschitz-tagged nor stochastic",
                    p.id()
                )));
            }
            write_json(
                c.out.join("constants.json"),
                &ConstantsReport {
                    problem: p.id().to_string(),
                    d: p.dim(),
                    c0,
                    sigma,
                },
            )?;
            Ok(true)
        }
    }
}

fn print_sweep(r: &zo_core::experiments::SweepResult) {
    for row in &r.rows {
        let t = row
            .t_eps
            .map_or_else(|| "censored".to_string(), |t| t.to_string());
        println!("d = {:>4}  eps = {:<10}  T_eps = {t}", row.d, row.epsilon);
    }
    match &r.fit {
        Some(f) => println!("log-log slope {:.3} (R^2 = {:.3})", f.slope, f.r_squared),
        None => println!("too few uncensored rows to fit"),
    }
}

/// Configuration problems exit with 2, everything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ZoError>() {
        Some(
            ZoError::Parameter(_)
            | ZoError::MissingConstant(_)
            | ZoError::UnknownId { .. }
            | ZoError::Constant(_)
            | ZoError::Dimension(_)
            | ZoError::Size(_)
            | ZoError::Capability(_)
            | ZoError::Json(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("ZO_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
