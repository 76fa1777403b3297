//! Experiment configuration, CSV I/O, λ sweeps and the invariant check suites.
//!
//! Configs are flat JSON objects. Flags from the command line are merged on
//! top of the file as another JSON object before deserializing, so unknown
//! keys are rejected the same way in both places.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::diagnostics::{
    averaged_gap_bound_check, bregman_gradient_lower_bound_check, fit_rate_range, gmd_b_error_bound, gmd_error_bound,
    heavy_ball_residual, max_cf_increment, structural_identity_residuals, RateColumn, TraceRecord,
};
use crate::dynamics::{self, ContinuousRun, Dynamics, TimeScale, Trajectory};
use crate::error::{Error, Result};
use crate::methods::{run, MethodKind, RunConfig, Trace, DEFAULT_HISTORY_CAP};
use crate::objectives::{
    finite_difference_gradient, make_logistic, make_nonconvex_2d, make_quadratic, NonconvexKind, Objective,
    ProblemInstance,
};
use crate::rng::{normal_vec, seeded, simplex_point, uniform_vec};
use crate::schedules::{asymptotic_growth_check, Schedule, ScheduleParams};
use crate::spaces::{DualPoint, MirrorMap, PrimalPoint};
use crate::vecops::{max_abs_diff, norm2, sub};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    #[default]
    Run,
    Simulate,
    Sweep,
    Check,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorChoice {
    #[default]
    Euclidean,
    EuclideanBall,
    EntropySimplex,
    SquaredPNorm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Quadratic,
    Logistic,
    DoubleWell,
    StyblinskiTang,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsChoice {
    Hd,
    Ad,
    #[default]
    Mod,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScaleChoice {
    Exponential,
    #[default]
    Polynomial,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Spaces,
    Objectives,
    Schedules,
    Discrete,
    Continuous,
    Diagnostics,
    #[default]
    All,
}

impl Suite {
    pub const MODULES: [Suite; 6] =
        [Suite::Spaces, Suite::Objectives, Suite::Schedules, Suite::Discrete, Suite::Continuous, Suite::Diagnostics];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Spaces => "spaces",
            Suite::Objectives => "objectives",
            Suite::Schedules => "schedules",
            Suite::Discrete => "discrete",
            Suite::Continuous => "continuous",
            Suite::Diagnostics => "diagnostics",
            Suite::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub command: Command,
    pub method: MethodKind,
    pub lambda: f64,
    pub c: f64,
    pub mu: f64,
    pub mirror: MirrorChoice,
    /// Ball radius for euclidean_ball.
    pub radius: f64,
    /// Exponent for squared_p_norm.
    pub p: f64,
    pub problem: ProblemKind,
    /// Ignored by the 2-D nonconvex problems.
    pub dim: usize,
    pub kappa: f64,
    /// Largest eigenvalue of the quadratic.
    pub l: f64,
    /// Sample count for logistic.
    pub samples: usize,
    pub seed: u64,
    pub iters: usize,
    pub dt: f64,
    pub tmax: f64,
    pub dynamics: DynamicsChoice,
    pub time_scale: TimeScaleChoice,
    pub eta: f64,
    pub time_power: f64,
    pub h_scale: f64,
    pub diag_ck: bool,
    pub history_cap: usize,
    pub lambdas: Vec<f64>,
    pub suite: Suite,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: Command::Run,
            method: MethodKind::GmdF,
            lambda: 1.0,
            c: 0.5,
            mu: 1.0,
            mirror: MirrorChoice::Euclidean,
            radius: 1.0,
            p: 1.5,
            problem: ProblemKind::Quadratic,
            dim: 10,
            kappa: 100.0,
            l: 1.0,
            samples: 200,
            seed: 0,
            iters: 1000,
            dt: 1e-3,
            tmax: 10.0,
            dynamics: DynamicsChoice::Mod,
            time_scale: TimeScaleChoice::Polynomial,
            eta: 1.0,
            time_power: 1.0,
            h_scale: 1.0,
            diag_ck: false,
            history_cap: DEFAULT_HISTORY_CAP,
            lambdas: vec![0.0, 0.5, 1.0],
            suite: Suite::All,
            out: None,
        }
    }
}

/// An objective whose unconstrained optimum lies outside the feasible set;
/// hides the optimum so no gap is reported against it.
#[derive(Debug)]
struct NoOptimum(Arc<dyn Objective>);

impl Objective for NoOptimum {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn dimension(&self) -> usize {
        self.0.dimension()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }
    fn gradient(&self, x: &[f64]) -> DualPoint {
        self.0.gradient(x)
    }
    fn smoothness(&self) -> f64 {
        self.0.smoothness()
    }
    fn weak_convexity(&self) -> f64 {
        self.0.weak_convexity()
    }
    fn domain_box(&self) -> Option<f64> {
        self.0.domain_box()
    }
}

impl ExperimentConfig {
    pub fn dimension(&self) -> usize {
        match self.problem {
            ProblemKind::DoubleWell | ProblemKind::StyblinskiTang => 2,
            _ => self.dim,
        }
    }

    pub fn objective(&self) -> Result<Arc<dyn Objective>> {
        let n = self.dimension();
        Ok(match self.problem {
            ProblemKind::Quadratic => Arc::new(make_quadratic(n, self.kappa, self.l)?),
            ProblemKind::Logistic => Arc::new(make_logistic(self.samples, n, self.seed)?),
            ProblemKind::DoubleWell => make_nonconvex_2d(NonconvexKind::DoubleWell),
            ProblemKind::StyblinskiTang => make_nonconvex_2d(NonconvexKind::StyblinskiTang),
        })
    }

    pub fn mirror_map(&self) -> Result<MirrorMap> {
        let n = self.dimension();
        match self.mirror {
            MirrorChoice::Euclidean => MirrorMap::euclidean(n, self.mu),
            MirrorChoice::EuclideanBall => MirrorMap::euclidean_ball(n, self.mu, self.radius),
            MirrorChoice::EntropySimplex => MirrorMap::entropy_simplex(n, self.mu),
            MirrorChoice::SquaredPNorm => MirrorMap::squared_p_norm(n, self.mu, self.p),
        }
    }

    /// Seeded start: a simplex point for the entropy map, a normal draw
    /// pulled into half the radius for the ball, uniform in 3/4 of the box for
    /// box-limited objectives, and a standard normal otherwise.
    pub fn problem_instance(&self) -> Result<ProblemInstance> {
        let mut objective = self.objective()?;
        let mirror = self.mirror_map()?;
        let n = self.dimension();
        let mut rng = seeded(self.seed);
        let x0 = match (self.mirror, objective.domain_box()) {
            (MirrorChoice::EntropySimplex, _) => simplex_point(&mut rng, n),
            (MirrorChoice::EuclideanBall, _) => {
                let v = normal_vec(&mut rng, n);
                let r = norm2(&v);
                let cap = 0.5 * self.radius;
                if r > cap {
                    v.iter().map(|x| x * cap / r).collect()
                } else {
                    v
                }
            }
            (_, Some(b)) => uniform_vec(&mut rng, n, -0.75 * b, 0.75 * b),
            _ => normal_vec(&mut rng, n),
        };
        if let Some(xs) = objective.optimum_point() {
            if mirror.is_constrained() && !mirror.is_feasible(&xs, 1e-12) {
                objective = Arc::new(NoOptimum(objective));
            }
        }
        ProblemInstance::new(objective, mirror, PrimalPoint(x0))
    }

    pub fn run_config(&self, lambda: f64) -> RunConfig {
        let mut rc = RunConfig::new(self.method, lambda, self.c, self.iters);
        rc.track_ck = self.diag_ck;
        rc.history_cap = self.history_cap;
        rc
    }

    pub fn continuous_run(&self) -> Result<ContinuousRun> {
        let p = self.problem_instance()?;
        let time_scale = match self.time_scale {
            TimeScaleChoice::Exponential => TimeScale::Exponential { eta: self.eta },
            TimeScaleChoice::Polynomial => TimeScale::Polynomial { p: self.time_power },
        };
        let dynamics = match self.dynamics {
            DynamicsChoice::Hd => Dynamics::Hd,
            DynamicsChoice::Ad => Dynamics::Ad,
            DynamicsChoice::Mod => Dynamics::Mod { lambda: self.lambda, h_scale: self.h_scale },
        };
        let z0 = if dynamics == Dynamics::Hd { DualPoint::zeros(p.x0.len()) } else { p.z0 };
        Ok(ContinuousRun {
            dynamics,
            time_scale,
            mirror: p.mirror,
            objective: p.objective,
            x0: p.x0,
            z0,
            t0: 0.0,
            dt: self.dt,
            t_max: self.tmax,
        })
    }

    /// Rejects invalid combinations, naming the violated constraint.
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("mu", self.mu)?;
        if self.command == Command::Check {
            return Ok(());
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be at least 1".into()));
        }
        let problem = self.problem_instance()?;
        match self.command {
            Command::Run => self.run_config(self.lambda).validate(&problem),
            Command::Sweep => {
                if self.lambdas.is_empty() {
                    return Err(Error::InvalidConfig("lambdas must list at least one value".into()));
                }
                self.lambdas.iter().try_for_each(|&l| self.run_config(l).validate(&problem))
            }
            Command::Simulate => {
                pos("dt", self.dt)?;
                if self.tmax < self.dt {
                    return Err(Error::InvalidConfig(format!("tmax must be at least dt, got {}", self.tmax)));
                }
                if self.dynamics == DynamicsChoice::Mod && self.lambda < 0.0 {
                    return Err(Error::InvalidConfig(format!("mod dynamics need λ ≥ 0, got {}", self.lambda)));
                }
                Ok(())
            }
            Command::Check => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut Map<String, Value>, overlay: Map<String, Value>) {
    for (k, v) in overlay {
        base.insert(k, v);
    }
}

/// Parses a flat JSON document (if given), overlays `flags`, fills defaults
/// and validates.
pub fn parse_config(text: Option<&str>, flags: Map<String, Value>) -> Result<ExperimentConfig> {
    let mut doc = match text {
        Some(t) => match serde_json::from_str::<Value>(t) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(Error::InvalidConfig("config must be a flat key-value object".into())),
            Err(e) => return Err(Error::InvalidConfig(format!("malformed config: {e}"))),
        },
        None => Map::new(),
    };
    merge(&mut doc, flags);
    let cfg: ExperimentConfig =
        serde_json::from_value(Value::Object(doc)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, flags: Map<String, Value>) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|source| Error::Io { path: p.to_path_buf(), source })?),
        None => None,
    };
    parse_config(text.as_deref(), flags)
}

// ---------------------------------------------------------------- CSV

pub const TRACE_HEADER: [&str; 11] =
    ["k", "f_y", "f_x", "grad_norm_dual", "min_grad_sq", "gap", "A", "H", "B", "C_f", "E"];

/// 17 significant digits, enough to re-parse every f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.f_y),
            fmt_f64(r.f_x),
            fmt_f64(r.grad_norm_dual),
            fmt_f64(r.min_grad_sq),
            fmt_opt(r.gap),
            fmt_opt(r.big_a),
            fmt_opt(r.big_h),
            fmt_opt(r.big_b),
            fmt_opt(r.c_f),
            fmt_opt(r.e),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

pub fn emit_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    write_trace(records, BufWriter::new(f)).map_err(csv_err(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rd.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::InvalidArgument(format!("{}: unexpected header {:?}", path.display(), header)));
    }
    let bad = |line: usize, col: &str| Error::InvalidArgument(format!("{}: line {line}: bad {col}", path.display()));
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let line = i + 2;
        let opt = |j: usize| -> Result<Option<f64>> {
            let s = &row[j];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(line, TRACE_HEADER[j]))
            }
        };
        let req = |j: usize| opt(j)?.ok_or_else(|| bad(line, TRACE_HEADER[j]));
        out.push(TraceRecord {
            k: row[0].parse().map_err(|_| bad(line, "k"))?,
            f_y: req(1)?,
            f_x: req(2)?,
            grad_norm_dual: req(3)?,
            min_grad_sq: req(4)?,
            gap: opt(5)?,
            big_a: opt(6)?,
            big_h: opt(7)?,
            big_b: opt(8)?,
            c_f: opt(9)?,
            e: opt(10)?,
        });
    }
    Ok(out)
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> std::result::Result<(), csv::Error> {
    let n = traj.x.first().map(|x| x.len()).unwrap_or(0);
    let cf = dynamics::conserved_cf(traj);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "f".to_string(), "C_f".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for j in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.t[j]), fmt_f64(traj.f[j]), fmt_f64(cf[j])];
        row.extend(traj.x[j].iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    write_trajectory(traj, BufWriter::new(f)).map_err(csv_err(path))
}

// ---------------------------------------------------------------- sweeps

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub slope_gap: Option<f64>,
    pub slope_min_grad_sq: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_min_grad_sq: Option<f64>,
    /// "ok" or the error that stopped the run.
    pub status: String,
}

/// Rate fits over k ∈ [iters/10, iters].
pub fn summarize(lambda: f64, records: &[TraceRecord]) -> SweepRow {
    let k_end = records.last().map(|r| r.k).unwrap_or(0);
    let k_start = (k_end / 10).max(1);
    let slope = |c| fit_rate_range(records, c, k_start, k_end).ok().map(|f| f.slope);
    SweepRow {
        lambda,
        slope_gap: slope(RateColumn::Gap),
        slope_min_grad_sq: slope(RateColumn::MinGradSq),
        final_gap: records.last().and_then(|r| r.gap),
        final_min_grad_sq: records.last().map(|r| r.min_grad_sq),
        status: "ok".into(),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, lambda: f64) -> Result<Trace> {
    let problem = cfg.problem_instance()?;
    run(&cfg.run_config(lambda), &problem)
}

/// One independent run per λ, in parallel. Failed runs keep their row with
/// the error in `status`.
pub fn sweep_lambda(base: &ExperimentConfig, lambdas: &[f64]) -> Vec<SweepRow> {
    lambdas
        .par_iter()
        .map(|&lambda| match run_experiment(base, lambda) {
            Ok(tr) => summarize(lambda, &tr.records),
            Err(e) => SweepRow {
                lambda,
                slope_gap: None,
                slope_min_grad_sq: None,
                final_gap: None,
                final_min_grad_sq: None,
                status: e.to_string(),
            },
        })
        .collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "slope_gap", "slope_min_grad_sq", "final_gap", "final_min_grad_sq", "status"])?;
    for r in rows {
        w.write_record([
            fmt_f64(r.lambda),
            fmt_opt(r.slope_gap),
            fmt_opt(r.slope_min_grad_sq),
            fmt_opt(r.final_gap),
            fmt_opt(r.final_min_grad_sq),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- checks

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub direction: Direction,
    pub passed: bool,
    pub note: Option<String>,
}

impl CheckResult {
    pub fn new(
        suite: &'static str,
        name: impl Into<String>,
        measured: Result<f64>,
        limit: f64,
        direction: Direction,
    ) -> Self {
        let (measured, note) = match measured {
            Ok(v) => (v, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        let passed = match direction {
            Direction::AtMost => measured <= limit,
            Direction::AtLeast => measured >= limit,
        };
        CheckResult { suite, name: name.into(), measured, limit, direction, passed, note }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.direction {
            Direction::AtMost => "<=",
            Direction::AtLeast => ">=",
        };
        write!(
            f,
            "{} {}/{} measured={:.3e} {op} {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.limit
        )?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

/// Largest C_k^f increment relative to the problem scale. Positive values
/// above 1e-8 mean the monotonicity check fails.
pub fn cf_monotonicity(trace: &Trace) -> Result<f64> {
    max_cf_increment(&trace.records)
        .map(|v| v / trace.scale)
        .ok_or_else(|| Error::Unavailable("C_f column is empty".into()))
}

fn quad_problem(n: usize, kappa: f64, seed: u64) -> Result<ProblemInstance> {
    let f: Arc<dyn Objective> = Arc::new(make_quadratic(n, kappa, 1.0)?);
    ProblemInstance::new(f, MirrorMap::euclidean(n, 1.0)?, PrimalPoint(normal_vec(&mut seeded(seed), n)))
}

fn simplex_problem(n: usize, seed: u64) -> Result<ProblemInstance> {
    let cfg = ExperimentConfig { dim: n, seed, mirror: MirrorChoice::EntropySimplex, ..Default::default() };
    cfg.problem_instance()
}

fn double_well_problem(seed: u64) -> Result<ProblemInstance> {
    // μ = L makes the λ = 0 schedule constant-H with μ/(L·H) = 1
    let f = make_nonconvex_2d(NonconvexKind::DoubleWell);
    let mirror = MirrorMap::euclidean(2, f.smoothness())?;
    ProblemInstance::new(f, mirror, PrimalPoint(uniform_vec(&mut seeded(seed), 2, -1.5, 1.5)))
}

fn max_over<I: IntoIterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    it.into_iter().try_fold(f64::NEG_INFINITY, |m, v| Ok(m.max(v?)))
}

fn check_spaces() -> Vec<CheckResult> {
    const S: &str = "spaces";
    let mut out = Vec::new();
    let maps: Vec<(&str, Result<MirrorMap>)> = vec![
        ("euclidean", MirrorMap::euclidean(5, 2.0)),
        ("euclidean_ball", MirrorMap::euclidean_ball(5, 1.0, 1.0)),
        ("entropy_simplex", MirrorMap::entropy_simplex(5, 1.0)),
        ("squared_p_norm", MirrorMap::squared_p_norm(5, 1.0, 1.5)),
    ];
    for (name, m) in maps {
        let m = match m {
            Ok(m) => m,
            Err(e) => {
                out.push(CheckResult::new(S, format!("{name}_construct"), Err(e), 0.0, Direction::AtMost));
                continue;
            }
        };
        let mut rng = seeded(11);
        let (mut sandwich, mut identity, mut infeasible) = (f64::INFINITY, 0.0f64, 0.0f64);
        for _ in 0..200 {
            let z = DualPoint(normal_vec(&mut rng, 5));
            let w = DualPoint(normal_vec(&mut rng, 5));
            let u = DualPoint(normal_vec(&mut rng, 5));
            let d = m.bregman(&z, &w);
            let dn = m.space().dual_norm_of(&sub(&z, &w));
            // 0 ≤ D_ψ*(z, w) ≤ ‖z − w‖*²/(2·modulus)
            sandwich = sandwich.min(d).min(dn * dn / (2.0 * m.modulus()) - d);
            identity = identity.max(m.three_point_identity_residual(&u, &z, &w).map(f64::abs).unwrap_or(f64::INFINITY));
            if !m.is_feasible(&m.grad_conj(&z), 1e-12) {
                infeasible += 1.0;
            }
        }
        out.push(CheckResult::new(
            S,
            format!("{name}_bregman_sandwich_slack"),
            Ok(sandwich),
            -1e-12,
            Direction::AtLeast,
        ));
        out.push(CheckResult::new(S, format!("{name}_three_point_identity"), Ok(identity), 1e-9, Direction::AtMost));
        out.push(CheckResult::new(
            S,
            format!("{name}_conjugate_gradient_infeasible"),
            Ok(infeasible),
            0.0,
            Direction::AtMost,
        ));
    }
    out
}

fn check_objectives() -> Vec<CheckResult> {
    const S: &str = "objectives";
    let mut out = Vec::new();
    let zoo: Vec<(&str, Result<Arc<dyn Objective>>)> = vec![
        ("quadratic", make_quadratic(10, 100.0, 1.0).map(|q| Arc::new(q) as Arc<dyn Objective>)),
        ("logistic", make_logistic(100, 5, 3).map(|q| Arc::new(q) as Arc<dyn Objective>)),
        ("double_well", Ok(make_nonconvex_2d(NonconvexKind::DoubleWell))),
        ("styblinski_tang", Ok(make_nonconvex_2d(NonconvexKind::StyblinskiTang))),
    ];
    for (name, f) in zoo {
        let f = match f {
            Ok(f) => f,
            Err(e) => {
                out.push(CheckResult::new(S, format!("{name}_construct"), Err(e), 0.0, Direction::AtMost));
                continue;
            }
        };
        let n = f.dimension();
        let b = f.domain_box().unwrap_or(2.0);
        let mut rng = seeded(5);
        let draw = |rng: &mut _| uniform_vec(rng, n, -b, b);
        let fd = max_over((0..100).map(|_| {
            let x = draw(&mut rng);
            let g = f.gradient(&x);
            let h = 1e-6 * 1f64.max(norm2(&x));
            let fd = finite_difference_gradient(f.as_ref(), &x, h)?;
            Ok(max_abs_diff(&g, &fd) / 1f64.max(norm2(&g)))
        }));
        out.push(CheckResult::new(S, format!("{name}_gradient_fd_rel_err"), fd, 1e-5, Direction::AtMost));
        let curv = (0..100)
            .map(|_| {
                let (x, y) = (draw(&mut rng), draw(&mut rng));
                norm2(&sub(&f.gradient(&x), &f.gradient(&y))) / norm2(&sub(&x, &y))
            })
            .fold(0.0, f64::max);
        out.push(CheckResult::new(
            S,
            format!("{name}_curvature_over_l"),
            Ok(curv / f.smoothness()),
            1.0,
            Direction::AtMost,
        ));
    }
    out
}

fn check_schedules() -> Vec<CheckResult> {
    const S: &str = "schedules";
    let mut out = Vec::new();
    for lambda in [0.0, 0.5, 1.0, 2.0] {
        let params = ScheduleParams::new(lambda, 0.5, 1.0, 10.0);
        let res = Schedule::build(params, 1000).map(|s| {
            // a_k²/A_k² = cμ/(L·H_k) in logs
            (1..=1000)
                .map(|k| (2.0 * (s.ln_a(k) - s.ln_big_a(k)) + s.ln_big_h(k) - params.ratio().ln()).abs())
                .fold(0.0, f64::max)
        });
        out.push(CheckResult::new(S, format!("lambda{lambda}_defining_relation"), res, 1e-10, Direction::AtMost));
        let growth = Schedule::build(params, 2000)
            .and_then(|s| asymptotic_growth_check(&s))
            .map(|g| (g.fitted - g.predicted).abs() / 1f64.max(g.predicted.abs()));
        out.push(CheckResult::new(S, format!("lambda{lambda}_growth_rel_err"), growth, 0.1, Direction::AtMost));
    }
    out
}

fn check_discrete() -> Vec<CheckResult> {
    const S: &str = "discrete";
    let mut out = Vec::new();
    let mono = |p: Result<ProblemInstance>, m: MethodKind, lambda: f64| {
        let p = p?;
        cf_monotonicity(&run(&RunConfig::new(m, lambda, 0.5, 500), &p)?)
    };
    out.push(CheckResult::new(
        S,
        "cf_monotone_euclidean_gmd_f",
        mono(quad_problem(10, 100.0, 1), MethodKind::GmdF, 1.0),
        1e-8,
        Direction::AtMost,
    ));
    out.push(CheckResult::new(
        S,
        "cf_monotone_euclidean_gmd",
        mono(quad_problem(10, 100.0, 1), MethodKind::Gmd, 0.5),
        1e-8,
        Direction::AtMost,
    ));
    out.push(CheckResult::new(
        S,
        "cf_monotone_entropy_gmd_f",
        mono(simplex_problem(10, 2), MethodKind::GmdF, 1.0),
        1e-8,
        Direction::AtMost,
    ));

    let feas = (|| {
        let p = simplex_problem(10, 2)?;
        let tr = run(&RunConfig::new(MethodKind::GmdF, 1.0, 0.5, 500).with_diagnostics(), &p)?;
        let h = tr.history.ok_or_else(|| Error::Internal("history missing".into()))?;
        Ok(h.y
            .iter()
            .map(|y| {
                let neg = y.iter().fold(0.0f64, |m, v| m.max(-v));
                neg.max((y.iter().sum::<f64>() - 1.0).abs())
            })
            .fold(0.0, f64::max))
    })();
    out.push(CheckResult::new(S, "simplex_feasibility", feas, 1e-9, Direction::AtMost));

    let equiv = |a: (MethodKind, f64, f64), b: (MethodKind, f64, f64)| -> Result<f64> {
        let p = quad_problem(10, 100.0, 3)?;
        let ta = run(&RunConfig::new(a.0, a.1, a.2, 100).with_diagnostics(), &p)?;
        let tb = run(&RunConfig::new(b.0, b.1, b.2, 100).with_diagnostics(), &p)?;
        let (ha, hb) = (ta.history.unwrap(), tb.history.unwrap());
        Ok(ha.y.iter().zip(&hb.y).chain(ha.x.iter().zip(&hb.x)).map(|(u, v)| max_abs_diff(u, v)).fold(0.0, f64::max))
    };
    out.push(CheckResult::new(
        S,
        "gmd_equals_gmd_f_at_lambda1",
        equiv((MethodKind::Gmd, 1.0, 0.5), (MethodKind::GmdF, 1.0, 0.5)),
        1e-12,
        Direction::AtMost,
    ));
    out.push(CheckResult::new(
        S,
        "gmd_b_equals_gmd_at_c1",
        equiv((MethodKind::GmdB, 1.0, 1.0), (MethodKind::Gmd, 1.0, 1.0)),
        1e-10,
        Direction::AtMost,
    ));
    let hb = |n_kappa: f64, iso: Option<f64>| -> Result<f64> {
        let p = quad_problem(10, n_kappa, 4)?;
        let tr = run(&RunConfig::new(MethodKind::Gmd, 0.0, 0.5, 100).with_diagnostics(), &p)?;
        heavy_ball_residual(tr.history.as_ref().unwrap(), &tr.schedule, &p.mirror, iso)
    };
    out.push(CheckResult::new(S, "heavy_ball_two_term_isotropic", hb(1.0, Some(1.0)), 1e-9, Direction::AtMost));
    out.push(CheckResult::new(S, "heavy_ball_gradient_difference_form", hb(100.0, None), 1e-9, Direction::AtMost));
    out
}

/// max |C_t^f − C_0^f| / scale, max |C_t| / scale over 20 checkpoints, and
/// the drift ratio between steps `coarse_dt` and `coarse_dt/2`.
pub fn continuous_conservation(
    dynamics: Dynamics,
    time_scale: TimeScale,
    dt: f64,
    t_max: f64,
    coarse_dt: f64,
) -> Result<(f64, f64, f64)> {
    let p = quad_problem(3, 10.0, 9)?;
    let scale = p.scale();
    let base = ContinuousRun {
        dynamics,
        time_scale,
        mirror: p.mirror,
        objective: p.objective.clone(),
        x0: p.x0.clone(),
        z0: p.z0.clone(),
        t0: 0.0,
        dt,
        t_max,
    };
    let tr = dynamics::integrate(&base)?;
    let cf = dynamics::cf_drift(&tr) / scale;
    let ct =
        dynamics::conserved_c(&tr, &dynamics::checkpoints(&tr, 20))?.into_iter().fold(0.0f64, |m, v| m.max(v.abs()))
            / scale;
    let coarse = dynamics::cf_drift(&dynamics::integrate(&ContinuousRun { dt: coarse_dt, ..base.clone() })?);
    let fine = dynamics::cf_drift(&dynamics::integrate(&ContinuousRun { dt: coarse_dt / 2.0, ..base })?);
    Ok((cf, ct, coarse / fine))
}

fn check_continuous() -> Vec<CheckResult> {
    const S: &str = "continuous";
    let mut out = Vec::new();
    for (name, d, ts) in [
        ("mod0_exponential", Dynamics::momentum(0.0), TimeScale::Exponential { eta: 0.5 }),
        ("mod1_polynomial", Dynamics::momentum(1.0), TimeScale::Polynomial { p: 1.0 }),
    ] {
        match continuous_conservation(d, ts, 1e-3, 10.0, 0.02) {
            Ok((cf, ct, ratio)) => {
                out.push(CheckResult::new(S, format!("{name}_cf_drift"), Ok(cf), 1e-5, Direction::AtMost));
                out.push(CheckResult::new(S, format!("{name}_c_max"), Ok(ct), 1e-4, Direction::AtMost));
                out.push(CheckResult::new(
                    S,
                    format!("{name}_cf_drift_halving_ratio"),
                    Ok(ratio),
                    8.0,
                    Direction::AtLeast,
                ));
            }
            Err(e) => out.push(CheckResult::new(S, format!("{name}_integrate"), Err(e), 0.0, Direction::AtMost)),
        }
    }
    let avg = (|| {
        let f: Arc<dyn Objective> = Arc::new(make_quadratic(1, 1.0, 1.0)?);
        let run = ContinuousRun {
            dynamics: Dynamics::Hd,
            time_scale: TimeScale::Polynomial { p: 1.0 },
            mirror: MirrorMap::euclidean(1, 1.0)?,
            objective: f,
            x0: PrimalPoint(vec![1.5]),
            z0: DualPoint(vec![0.0]),
            t0: 0.0,
            dt: 1e-3,
            t_max: 20.0,
        };
        dynamics::avg_gradient_bound_check(&dynamics::integrate(&run)?, 0.0, 0.01).map(|r| r.max_ratio)
    })();
    out.push(CheckResult::new(S, "hd_averaged_gradient_bound_ratio", avg, 1.01, Direction::AtMost));
    out
}

fn check_diagnostics() -> Vec<CheckResult> {
    const S: &str = "diagnostics";
    let mut out = Vec::new();
    let identity = |p: Result<ProblemInstance>, m: MethodKind, lambda: f64| -> Result<f64> {
        let p = p?;
        let tr = run(&RunConfig::new(m, lambda, 0.5, 100).with_diagnostics(), &p)?;
        let r = structural_identity_residuals(tr.history.as_ref().unwrap(), &tr.schedule, &p.mirror, 100)?;
        Ok(r.iter().fold(0.0f64, |a, v| a.max(v.abs())) / p.scale())
    };
    out.push(CheckResult::new(
        S,
        "identity_gmd_f_euclidean",
        identity(quad_problem(10, 100.0, 5), MethodKind::GmdF, 1.0),
        1e-8,
        Direction::AtMost,
    ));
    out.push(CheckResult::new(
        S,
        "identity_gmd_b_euclidean",
        identity(quad_problem(10, 100.0, 5), MethodKind::GmdB, 0.5),
        1e-8,
        Direction::AtMost,
    ));
    out.push(CheckResult::new(
        S,
        "identity_gmd_f_entropy",
        identity(simplex_problem(10, 6), MethodKind::GmdF, 1.0),
        1e-8,
        Direction::AtMost,
    ));

    // most negative slack of the per-step error bound, over the problem scale
    let bound = |p: Result<ProblemInstance>, m: MethodKind, lambda: f64, eps_h: f64| -> Result<f64> {
        let p = p?;
        let tr = run(&RunConfig::new(m, lambda, 0.5, 300).with_diagnostics(), &p)?;
        let h = tr.history.as_ref().unwrap();
        let mut worst = f64::INFINITY;
        for k in 1..=300 {
            let c = if m == MethodKind::GmdB {
                gmd_b_error_bound(h, &tr.schedule, &p.mirror, eps_h, k)?
            } else {
                gmd_error_bound(h, &tr.schedule, &p.mirror, eps_h, k)?
            };
            worst = worst.min(c.slack);
        }
        Ok(worst / p.scale())
    };
    let l_dw = make_nonconvex_2d(NonconvexKind::DoubleWell).smoothness();
    out.push(CheckResult::new(
        S,
        "error_bound_gmd_convex",
        bound(quad_problem(10, 100.0, 7), MethodKind::Gmd, 1.0, 0.0),
        -1e-8,
        Direction::AtLeast,
    ));
    out.push(CheckResult::new(
        S,
        "error_bound_gmd_b_convex",
        bound(quad_problem(10, 100.0, 7), MethodKind::GmdB, 1.0, 0.0),
        -1e-8,
        Direction::AtLeast,
    ));
    out.push(CheckResult::new(
        S,
        "error_bound_gmd_double_well",
        bound(double_well_problem(1), MethodKind::Gmd, 0.0, l_dw),
        -1e-8,
        Direction::AtLeast,
    ));
    out.push(CheckResult::new(
        S,
        "error_bound_gmd_b_double_well",
        bound(double_well_problem(1), MethodKind::GmdB, 0.0, l_dw),
        -1e-8,
        Direction::AtLeast,
    ));

    let lower = (|| {
        let p = quad_problem(10, 100.0, 8)?;
        let tr = run(&RunConfig::new(MethodKind::Gmd, 1.0, 0.5, 100).with_diagnostics(), &p)?;
        let h = tr.history.as_ref().unwrap();
        let mut worst = f64::INFINITY;
        for i in 1..=100 {
            let r = bregman_gradient_lower_bound_check(h, &tr.schedule, &p.mirror, i)?;
            worst = worst.min((r.lhs - r.rhs) / 1f64.max(r.lhs.abs()));
        }
        Ok(worst)
    })();
    out.push(CheckResult::new(S, "gradient_lower_bound_rel_slack", lower, -1e-12, Direction::AtLeast));

    let explicit = (|| {
        let p = quad_problem(10, 100.0, 10)?;
        let tr = run(&RunConfig::new(MethodKind::GmdF, 0.0, 0.5, 2000), &p)?;
        averaged_gap_bound_check(&tr, &p, 0.0).map(|r| -r.min_slack / p.scale())
    })();
    out.push(CheckResult::new(S, "averaged_gap_explicit_bound_lambda0", explicit, 1e-9, Direction::AtMost));
    out
}

pub fn check(suite: Suite) -> Vec<CheckResult> {
    let one = |s: Suite| match s {
        Suite::Spaces => check_spaces(),
        Suite::Objectives => check_objectives(),
        Suite::Schedules => check_schedules(),
        Suite::Discrete => check_discrete(),
        Suite::Continuous => check_continuous(),
        Suite::Diagnostics => check_diagnostics(),
        Suite::All => unreachable!(),
    };
    match suite {
        Suite::All => Suite::MODULES.par_iter().flat_map(|&s| one(s)).collect(),
        s => one(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn flags(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = parse_config(
            Some(r#"{"method": "gmd_f", "lambda": 1, "c": 0.5, "problem": "quadratic", "iters": 100}"#),
            Map::new(),
        )
        .unwrap();
        assert_eq!(cfg.mu, 1.0);
        assert_eq!(cfg.mirror, MirrorChoice::Euclidean);
        assert_eq!((cfg.dim, cfg.kappa, cfg.seed, cfg.iters), (10, 100.0, 0, 100));
    }

    #[test]
    fn flags_override_file() {
        let cfg = parse_config(Some(r#"{"iters": 100, "seed": 3}"#), flags(json!({"iters": 7}))).unwrap();
        assert_eq!((cfg.iters, cfg.seed), (7, 3));
    }

    #[test]
    fn rejections_name_the_constraint() {
        let e = parse_config(Some(r#"{"lambda": 0, "c": 1, "mu": 1}"#), Map::new()).unwrap_err();
        assert!(matches!(e, Error::InfeasibleSchedule(_)));
        assert!(e.to_string().contains("λ=0 requires cμ/L < 1"), "{e}");
        let e = parse_config(Some(r#"{"method": "gmd", "mirror": "entropy_simplex"}"#), Map::new()).unwrap_err();
        assert!(e.to_string().contains("X ≡ E"), "{e}");
        let e = parse_config(Some(r#"{"iterations": 5}"#), Map::new()).unwrap_err();
        assert!(e.to_string().contains("iterations"), "{e}");
        assert!(parse_config(Some("[1, 2]"), Map::new()).is_err());
        assert!(parse_config(Some("{"), Map::new()).is_err());
    }

    #[test]
    fn config_round_trips() {
        let cfg = ExperimentConfig {
            lambda: 0.3,
            c: 0.1 + 0.2,
            mirror: MirrorChoice::SquaredPNorm,
            out: Some("a.csv".into()),
            lambdas: vec![0.1, 0.7],
            ..Default::default()
        };
        let back = parse_config(Some(&cfg.to_json()), Map::new()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn trace_csv_round_trip_and_empty() {
        let cfg = ExperimentConfig { iters: 50, diag_ck: true, ..Default::default() };
        let tr = run_experiment(&cfg, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_trace(&tr.records, &path).unwrap();
        assert_eq!(read_trace(&path).unwrap(), tr.records);
        emit_trace(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "k,f_y,f_x,grad_norm_dual,min_grad_sq,gap,A,H,B,C_f,E\n");
        assert!(emit_trace(&[], &dir.path().join("missing/t.csv")).is_err());
    }

    #[test]
    fn gap_empty_without_known_optimum() {
        let cfg = ExperimentConfig { mirror: MirrorChoice::EntropySimplex, iters: 5, ..Default::default() };
        let tr = run_experiment(&cfg, 1.0).unwrap();
        let mut buf = Vec::new();
        write_trace(&tr.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[5], "");
    }

    #[test]
    fn sweep_rows_match_single_runs() {
        let cfg = ExperimentConfig { iters: 200, ..Default::default() };
        let rows = sweep_lambda(&cfg, &[0.5, 0.5, 1.0]);
        assert_eq!(rows[0], rows[1]);
        let single = summarize(1.0, &run_experiment(&cfg, 1.0).unwrap().records);
        assert_eq!(rows[2], single);
        let bad = sweep_lambda(&ExperimentConfig { c: 1.0, ..cfg }, &[0.0, 1.0]);
        assert_ne!(bad[0].status, "ok");
        assert_eq!(bad[1].status, "ok");
    }

    #[test]
    fn nonconvex_problem_is_two_dimensional() {
        let cfg = ExperimentConfig { problem: ProblemKind::DoubleWell, dim: 10, ..Default::default() };
        let p = cfg.problem_instance().unwrap();
        assert_eq!(p.x0.len(), 2);
        assert!(p.x0.iter().all(|v| v.abs() <= 1.5));
    }

    #[test]
    fn flipped_dual_update_breaks_monotonicity() {
        let p = quad_problem(10, 100.0, 1).unwrap();
        let mut rc = RunConfig::new(MethodKind::GmdF, 1.0, 0.5, 200);
        assert!(cf_monotonicity(&run(&rc, &p).unwrap()).unwrap() <= 1e-8);
        rc.flip_dual_update = true;
        let worst = cf_monotonicity(&run(&rc, &p).unwrap()).unwrap();
        assert!(worst > 1e-8, "{worst}");
    }

    #[test]
    fn check_results_format() {
        let r = CheckResult::new("x", "y", Ok(0.5), 1.0, Direction::AtMost);
        assert!(r.passed && r.to_string().starts_with("PASS x/y"));
        let r = CheckResult::new("x", "y", Err(Error::Internal("boom".into())), 1.0, Direction::AtMost);
        assert!(!r.passed && r.to_string().contains("boom"));
    }

    #[test]
    fn every_suite_passes() {
        let results = check(Suite::All);
        let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.to_string()).collect();
        assert!(failed.is_empty(), "{failed:#?}");
        let cont = check(Suite::Continuous);
        assert!(!cont.is_empty() && cont.iter().all(|r| r.suite == "continuous"));
    }
}
