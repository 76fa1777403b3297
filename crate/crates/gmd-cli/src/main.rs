use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gmd_core::dynamics;
use gmd_core::harness::{self, ExperimentConfig, Suite};
use serde_json::{Map, Value};

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "gmd", version, about = "Generalized momentum methods: runs, simulations, sweeps and checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a discrete method and write its trace CSV.
    Run(Flags),
    /// Integrate a continuous-time dynamics and write the trajectory CSV.
    Simulate(Flags),
    /// Run one experiment per λ and write the rate summary CSV.
    Sweep(Flags),
    /// Run the invariant check suites.
    Check {
        /// spaces, objectives, schedules, discrete, continuous, diagnostics or all
        suite: Option<String>,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Default)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gmd_f, gmd or gmd_b
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// euclidean, euclidean_ball, entropy_simplex or squared_p_norm
    #[arg(long)]
    mirror: Option<String>,
    /// quadratic, logistic, double_well or styblinski_tang
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    /// hd, ad or mod
    #[arg(long)]
    dynamics: Option<String>,
    /// exponential or polynomial
    #[arg(long)]
    time_scale: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
    /// Track the iterate history and the E column.
    #[arg(long)]
    diag_ck: bool,
    #[arg(long)]
    history_cap: Option<usize>,
    /// Comma-separated λ values for sweep.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

impl Flags {
    fn overlay(&self, command: &str) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("command".into(), command.into());
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.into(), v);
            }
        };
        put("method", self.method.clone().map(Value::from));
        put("lambda", self.lambda.map(Value::from));
        put("c", self.c.map(Value::from));
        put("mu", self.mu.map(Value::from));
        put("mirror", self.mirror.clone().map(Value::from));
        put("problem", self.problem.clone().map(Value::from));
        put("dim", self.dim.map(Value::from));
        put("kappa", self.kappa.map(Value::from));
        put("iters", self.iters.map(Value::from));
        put("dt", self.dt.map(Value::from));
        put("tmax", self.tmax.map(Value::from));
        put("dynamics", self.dynamics.clone().map(Value::from));
        put("time_scale", self.time_scale.clone().map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("out", self.out.clone().map(Value::from));
        put("diag_ck", self.diag_ck.then_some(Value::Bool(true)));
        put("history_cap", self.history_cap.map(Value::from));
        put("lambdas", self.lambdas.clone().map(Value::from));
        m
    }

    fn load(&self, command: &str) -> gmd_core::Result<ExperimentConfig> {
        harness::load_config(self.config.as_deref(), self.overlay(command))
    }
}

fn sink(out: Option<&str>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(
            std::fs::File::create(Path::new(p)).with_context(|| format!("cannot create {p}"))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn execute(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Run(flags) => {
            let cfg = flags.load("run")?;
            let trace = harness::run_experiment(&cfg, cfg.lambda)?;
            let row = harness::summarize(cfg.lambda, &trace.records);
            log::info!("slope_gap = {:?}, slope_min_grad_sq = {:?}", row.slope_gap, row.slope_min_grad_sq);
            harness::write_trace(&trace.records, sink(cfg.out.as_deref())?)?;
        }
        Cmd::Simulate(flags) => {
            let cfg = flags.load("simulate")?;
            let traj = dynamics::integrate(&cfg.continuous_run()?)?;
            log::info!("C_f drift = {:.3e}", dynamics::cf_drift(&traj));
            harness::write_trajectory(&traj, sink(cfg.out.as_deref())?)?;
        }
        Cmd::Sweep(flags) => {
            let cfg = flags.load("sweep")?;
            let rows = harness::sweep_lambda(&cfg, &cfg.lambdas);
            for r in rows.iter().filter(|r| r.status != "ok") {
                log::warn!("λ = {}: {}", r.lambda, r.status);
            }
            harness::write_sweep(&rows, sink(cfg.out.as_deref())?)?;
        }
        Cmd::Check { suite, flags } => {
            let mut overlay = flags.overlay("check");
            if let Some(s) = suite {
                overlay.insert("suite".into(), s.into());
            }
            let cfg = harness::load_config(flags.config.as_deref(), overlay)?;
            let results = harness::check(cfg.suite);
            let mut out = sink(cfg.out.as_deref())?;
            for r in &results {
                writeln!(out, "{r}")?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            writeln!(out, "{} checks, {failed} failed ({})", results.len(), Suite::name(&cfg.suite))?;
            out.flush()?;
            if failed > 0 {
                return Ok(EXIT_CHECK);
            }
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<gmd_core::Error>() {
        Some(e) if e.is_divergence() => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
