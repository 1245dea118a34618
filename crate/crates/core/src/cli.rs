//! Batch front end: load an experiment file, run one task, write a table.
//!
//! Exit codes: `0` success, `1` identity violation, `2` parse or
//! validation error, `3` numerical failure or unwritable output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clock::{check_convolution_split, check_integration_by_parts, ExpClock, TimeLaw};
use crate::config::{ExperimentConfig, FamilyConfig, OutputFormat, Params};
use crate::entropy::{
    dv_log_mgf, dv_optimal_tilt, entropy_chain_rule, joint_relative_entropy, relative_entropy, tilted_tail_bound,
    JointDistribution,
};
use crate::error::Error;
use crate::ldp::{
    check_hamiltonian_convergence, path_rate, rate_table, semigroup_convergence_check, PathSpec, ScaledFamily,
};
use crate::markov::{Distribution, Generator, StateFunction};
use crate::nonlinear::{apply_h, nonlinear_semigroup, nonlinear_semigroup_scaled, t_plus};
use crate::resolvent::{
    fixed_point_resolvent, pseudo_resolvent_check, resolvent_contraction_check, resolvent_iterate_semigroup,
    resolvent_with, strong_continuity_check, variational_value, SolverOptions,
};

pub const TASKS: [&str; 8] = [
    "resolvent",
    "semigroup",
    "iterate",
    "variational-scan",
    "check-identities",
    "ldp-hamiltonian",
    "ldp-rates",
    "path-rate",
];

#[derive(Debug, Parser)]
#[command(name = "nlsemigroup", about = "Nonlinear resolvents and semigroups of finite Markov chains")]
pub struct Args {
    /// Experiment file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task to run; overrides `task` in the config.
    #[arg(long)]
    pub task: Option<String>,
    /// Output path; overrides `out` in the config. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the random source; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation { .. } => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } | Error::Singular => CliError::Numerical(e),
            Error::InvalidArgument { name, reason } => CliError::field(name, reason),
            other => CliError::field("model", other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format_number(*v),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Num(v) if v.is_finite() => (*v).into(),
            Cell::Num(v) => format_number(*v).into(),
            Cell::Text(s) => s.clone().into(),
        }
    }
}

/// 17 significant digits, `.` as separator, independent of locale.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn num(v: f64) -> Cell {
    Cell::Num(v)
}

fn int(v: usize) -> Cell {
    Cell::Int(v as i64)
}

fn text(s: impl Into<String>) -> Cell {
    Cell::Text(s.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self, task: &str) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| serde_json::Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = serde_json::json!({ "task": task, "columns": self.columns, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).expect("tables serialize");
        s.push('\n');
        s
    }
}

/// Output of a task; `violations` counts failed identity checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub task: String,
    pub table: Table,
    pub violations: usize,
}

impl Report {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.table.to_csv(),
            OutputFormat::Json => self.table.to_json(&self.task),
        }
    }
}

/// Parses arguments, runs the task and writes the output; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(report) => {
            if report.violations > 0 {
                eprintln!("{} identity check(s) failed", report.violations);
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(args: &Args) -> CliResult<Report> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(CliError::Parse)?,
        None => ExperimentConfig::default(),
    };
    if args.task.is_some() {
        config.task = args.task.clone();
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    if args.out.is_some() {
        config.out = args.out.clone();
    }
    let report = run(&config)?;
    let rendered = report.render(config.format.unwrap_or_default());
    match &config.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => std::io::stdout().lock().write_all(rendered.as_bytes())?,
    }
    Ok(report)
}

/// Runs the configured task.
pub fn run(config: &ExperimentConfig) -> CliResult<Report> {
    let task = config
        .task
        .clone()
        .ok_or_else(|| CliError::field("task", format!("missing; expected one of {}", TASKS.join(", "))))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.unwrap_or(0));
    let p = &config.params;
    let opts = solver_options(p)?;
    let (table, violations) = match task.as_str() {
        "resolvent" => (task_resolvent(config, &mut rng, opts)?, 0),
        "semigroup" => (task_semigroup(config, &mut rng)?, 0),
        "iterate" => (task_iterate(config, &mut rng, opts)?, 0),
        "variational-scan" => (task_variational_scan(config, &mut rng, opts)?, 0),
        "check-identities" => {
            let checks = identity_battery(&mut rng)?;
            let mut table = Table::new(&["check", "residual", "tolerance", "status"]);
            let mut failed = 0;
            for c in &checks {
                if !c.passed() {
                    failed += 1;
                }
                let status = if c.passed() { "pass" } else { "fail" };
                table.push(vec![text(c.name), num(c.residual), num(c.tolerance), text(status)]);
            }
            (table, failed)
        }
        "ldp-hamiltonian" => (task_ldp_hamiltonian(config)?, 0),
        "ldp-rates" => (task_ldp_rates(config)?, 0),
        "path-rate" => (task_path_rate(config)?, 0),
        other => {
            return Err(CliError::field(
                "task",
                format!("unknown task `{other}`; expected one of {}", TASKS.join(", ")),
            ))
        }
    };
    Ok(Report {
        task,
        table,
        violations,
    })
}

fn solver_options(p: &Params) -> CliResult<SolverOptions> {
    let mut opts = SolverOptions::default();
    if let Some(tol) = p.tol {
        positive("params.tol", tol)?;
        opts.tol = tol;
    }
    if let Some(max_iter) = p.max_iter {
        if max_iter == 0 {
            return Err(CliError::field("params.max_iter", "must be at least 1"));
        }
        opts.max_iter = max_iter;
    }
    Ok(opts)
}

fn positive(field: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::field(field, format!("must be finite and > 0, got {v}")))
    }
}

fn nonnegative(field: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(CliError::field(field, format!("must be finite and >= 0, got {v}")))
    }
}

fn required<T: Clone>(field: &str, v: &Option<T>) -> CliResult<T> {
    v.clone().ok_or_else(|| CliError::field(field, "required for this task"))
}

fn model(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> CliResult<Generator> {
    let m = config
        .model
        .as_ref()
        .ok_or_else(|| CliError::field("model", "required for this task"))?;
    Ok(m.build(rng)?)
}

fn state_function(q: &Generator, field: &str, values: Vec<f64>) -> CliResult<StateFunction> {
    StateFunction::for_generator(q, values).map_err(|e| CliError::field(field, e.to_string()))
}

fn label(q: &Generator, x: usize) -> Cell {
    text(q.space().labels()[x].clone())
}

fn task_resolvent(config: &ExperimentConfig, rng: &mut ChaCha8Rng, opts: SolverOptions) -> CliResult<Table> {
    let p = &config.params;
    let lambda = positive("params.lambda", required("params.lambda", &p.lambda)?)?;
    let q = model(config, rng)?;
    let h = state_function(&q, "params.h", required("params.h", &p.h)?)?;
    let sol = fixed_point_resolvent(&q, lambda, &h, opts.tol, opts.max_iter)?;
    let mut table = Table::new(&["state", "h", "value", "residual"]);
    for x in 0..q.size() {
        table.push(vec![label(&q, x), num(h.get(x)), num(sol.f.get(x)), num(sol.residual)]);
    }
    Ok(table)
}

fn task_semigroup(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> CliResult<Table> {
    let p = &config.params;
    let t = nonnegative("params.t", required("params.t", &p.t)?)?;
    let r = positive("params.r", p.r.unwrap_or(1.0))?;
    let q = model(config, rng)?;
    let f = state_function(&q, "params.f", required("params.f", &p.f)?)?;
    let v = nonlinear_semigroup_scaled(&q, r, t, &f)?;
    let mut table = Table::new(&["state", "f", "value"]);
    for x in 0..q.size() {
        table.push(vec![label(&q, x), num(f.get(x)), num(v.get(x))]);
    }
    Ok(table)
}

fn task_iterate(config: &ExperimentConfig, rng: &mut ChaCha8Rng, opts: SolverOptions) -> CliResult<Table> {
    let p = &config.params;
    let t = nonnegative("params.t", required("params.t", &p.t)?)?;
    let ms = p.m.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
    if ms.is_empty() || ms.contains(&0) {
        return Err(CliError::field("params.m", "need positive iteration counts"));
    }
    let q = model(config, rng)?;
    let h = state_function(&q, "params.h", required("params.h", &p.h)?)?;
    let exact = nonlinear_semigroup(&q, t, &h)?;
    let mut table = Table::new(&["m", "state", "value", "exact", "error"]);
    for &m in &ms {
        let approx = resolvent_iterate_semigroup(&q, t, m, &h, opts)?;
        let error = approx.sup_distance(&exact)?;
        for x in 0..q.size() {
            table.push(vec![int(m), label(&q, x), num(approx.get(x)), num(exact.get(x)), num(error)]);
        }
    }
    Ok(table)
}

fn task_variational_scan(config: &ExperimentConfig, rng: &mut ChaCha8Rng, opts: SolverOptions) -> CliResult<Table> {
    let p = &config.params;
    let lambda = positive("params.lambda", required("params.lambda", &p.lambda)?)?;
    let eps = p.epsilons.clone().unwrap_or_else(|| vec![0.0, 0.01, 0.1]);
    for &e in &eps {
        nonnegative("params.epsilons", e)?;
    }
    let samples = p.samples.unwrap_or(200);
    if samples == 0 {
        return Err(CliError::field("params.samples", "must be at least 1"));
    }
    let q = model(config, rng)?;
    let h = state_function(&q, "params.h", required("params.h", &p.h)?)?;
    let star = resolvent_with(&q, lambda, &h, opts)?;
    let directions: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..q.size()).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let mut table = Table::new(&["state", "epsilon", "best", "optimum", "excess"]);
    for x in 0..q.size() {
        for &e in &eps {
            let mut best = f64::NEG_INFINITY;
            for eta in &directions {
                let phi: Vec<f64> = star.values().iter().zip(eta).map(|(f, d)| f + e * d).collect();
                let phi = StateFunction::for_generator(&q, phi)?;
                best = best.max(variational_value(&q, lambda, &h, &phi, x)?);
            }
            table.push(vec![label(&q, x), num(e), num(best), num(star.get(x)), num(best - star.get(x))]);
        }
    }
    Ok(table)
}

fn family(config: &ExperimentConfig) -> CliResult<ScaledFamily> {
    let default = FamilyConfig {
        kind: "ehrenfest".into(),
        n_list: vec![8, 16, 32, 64],
        birth: None,
        death: None,
    };
    Ok(config.family.as_ref().unwrap_or(&default).build()?)
}

type TestFn = fn(f64) -> f64;

/// Test functions on `[0, 1]` selectable by name.
pub fn named_function(name: &str) -> Option<TestFn> {
    let f: TestFn = match name {
        "const" => |_| 1.0,
        "x" => |x| x,
        "x2" => |x| x * x,
        "sin2pi" => |x| (2.0 * std::f64::consts::PI * x).sin(),
        _ => return None,
    };
    Some(f)
}

fn interval(p: &Params) -> CliResult<(f64, f64)> {
    let [a, b] = p.interval.unwrap_or([0.1, 0.9]);
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(CliError::field("params.interval", format!("need 0 < a < b < 1, got [{a}, {b}]")));
    }
    Ok((a, b))
}

fn task_ldp_hamiltonian(config: &ExperimentConfig) -> CliResult<Table> {
    let p = &config.params;
    let fam = family(config)?;
    let inner = interval(p)?;
    let t = nonnegative("params.t", p.t.unwrap_or(0.5))?;
    let names = p
        .functions
        .clone()
        .unwrap_or_else(|| vec!["x".into(), "x2".into(), "sin2pi".into()]);
    let mut table = Table::new(&["check", "function", "n", "error", "ratio"]);
    for name in &names {
        let f = named_function(name).ok_or_else(|| {
            CliError::field("params.functions", format!("unknown function `{name}` (const, x, x2, sin2pi)"))
        })?;
        let hamiltonian = check_hamiltonian_convergence(&fam, &f, inner)?;
        let semigroup = if fam.levels().len() >= 2 {
            semigroup_convergence_check(&fam, &f, t, inner)?
        } else {
            Vec::new()
        };
        for (check, errors) in [("hamiltonian", hamiltonian), ("semigroup", semigroup)] {
            let mut previous: Option<f64> = None;
            for e in errors {
                let ratio = previous.map_or(text(""), |prev| num(prev / e.error));
                table.push(vec![text(check), text(name.clone()), int(e.n), num(e.error), ratio]);
                previous = Some(e.error);
            }
        }
    }
    Ok(table)
}

fn task_ldp_rates(config: &ExperimentConfig) -> CliResult<Table> {
    let p = &config.params;
    let fam = family(config)?;
    let times = p.times.clone().unwrap_or_else(|| vec![0.5]);
    for &t in &times {
        positive("params.times", t)?;
    }
    let pairs: Vec<(f64, f64)> = required("params.pairs", &p.pairs)?
        .into_iter()
        .map(|[x, y]| (x, y))
        .collect();
    let table = rate_table(&fam, &times, &pairs)?;
    let mut out = Table::new(&["n", "t", "x", "y", "value"]);
    for r in table.rows() {
        out.push(vec![int(r.n), num(r.t), num(r.x), num(r.y), num(r.value)]);
    }
    Ok(out)
}

fn task_path_rate(config: &ExperimentConfig) -> CliResult<Table> {
    let p = &config.params;
    let fam = family(config)?;
    let n_ref = p.n_ref.unwrap_or_else(|| *fam.level_sizes().last().expect("families are nonempty"));
    let times = required("params.path_times", &p.path_times)?;
    let points = required("params.path_points", &p.path_points)?;
    let center = p.initial_center.unwrap_or(0.5);
    let scale = nonnegative("params.initial_scale", p.initial_scale.unwrap_or(0.0))?;
    let path = PathSpec::new(times, points, move |x| scale * (x - center).powi(2))?;
    let depth = p.depth.unwrap_or(3);
    let rate = path_rate(&fam, n_ref, &path, depth)?;
    let mut table = Table::new(&["n", "depth", "value"]);
    for (d, v) in rate.per_depth.iter().enumerate() {
        table.push(vec![int(n_ref), int(d), num(*v)]);
    }
    Ok(table)
}

/// One line of the identity battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

fn check(name: &'static str, residual: f64, tolerance: f64) -> IdentityCheck {
    // NaN residuals must fail.
    let residual = if residual.is_nan() { f64::INFINITY } else { residual };
    IdentityCheck {
        name,
        residual,
        tolerance,
    }
}

fn random_fn(rng: &mut ChaCha8Rng, q: &Generator, bound: f64) -> StateFunction {
    let v = (0..q.size()).map(|_| rng.random_range(-bound..=bound)).collect();
    StateFunction::for_generator(q, v).expect("sizes match")
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn two_state() -> Generator {
    Generator::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).expect("valid generator")
}

/// `(k, c)` for the clock test functions `t^k e^{−ct}`.
pub fn clock_battery() -> impl Iterator<Item = (i32, f64)> {
    (0..=4).flat_map(|k| [0.0, 0.5, 1.0, 2.0].into_iter().map(move |c| (k, c)))
}

/// The cross-module battery run by `check-identities`.
pub fn identity_battery(rng: &mut ChaCha8Rng) -> CliResult<Vec<IdentityCheck>> {
    let opts = SolverOptions::default();
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q = Generator::random(rng, 5, 1.0)?;
        let f = random_fn(rng, &q, 1.0);
        let hf = apply_h(&q, &f)?;
        for lambda in [0.01, 0.1, 1.0] {
            let h = f.combine(1.0, &hf, -lambda)?;
            worst = worst.max(resolvent_with(&q, lambda, &h, opts)?.sup_distance(&f)?);
        }
    }
    out.push(check("left_inverse", worst, 1e-7));

    let mut worst = 0.0f64;
    for _ in 0..10 {
        let q = Generator::random(rng, 5, 1.0)?;
        let h = random_fn(rng, &q, 1.0);
        for (a, b) in [(0.05, 0.2), (0.1, 1.0)] {
            worst = worst.max(pseudo_resolvent_check(&q, a, b, &h, opts)?);
        }
    }
    out.push(check("pseudo_resolvent", worst, 1e-7));

    let (mut excess, mut shift, mut order) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..50 {
        let q = Generator::random(rng, 6, 1.0)?;
        let lambda = [0.1, 1.0, 5.0][k % 3];
        let h1 = random_fn(rng, &q, 1.0);
        let h2 = random_fn(rng, &q, 1.0);
        let (lhs, rhs) = resolvent_contraction_check(&q, lambda, &h1, &h2, opts)?;
        excess = excess.max(lhs - rhs);
        let c = rng.random_range(-3.0..3.0);
        let r = resolvent_with(&q, lambda, &h1, opts)?;
        let rc = resolvent_with(&q, lambda, &h1.map(|v| v + c), opts)?;
        shift = shift.max(rc.sup_distance(&r.map(|v| v + c))?);
        let upper = h1.combine(1.0, &h2.map(f64::abs), 1.0)?;
        let ru = resolvent_with(&q, lambda, &upper, opts)?;
        order = order.max(r.values().iter().zip(ru.values()).map(|(a, b)| a - b).fold(0.0, f64::max));
    }
    out.push(check("contraction", excess.max(0.0), 1e-9));
    out.push(check("shift_covariance", shift, 1e-10));
    out.push(check("monotonicity", order, 1e-9));

    let q = two_state();
    let h = StateFunction::for_generator(&q, vec![1.0, 0.0])?;
    let pts = strong_continuity_check(&q, &h, &[0.1, 0.01, 1e-3, 1e-6], opts)?;
    let identity = pts.iter().map(|p| (p.gap - p.scaled_h).abs()).fold(0.0, f64::max);
    out.push(check("strong_continuity_identity", identity, 1e-9));
    out.push(check("strong_continuity_small_lambda", pts[3].gap, 1e-5));

    let exact = nonlinear_semigroup(&q, 1.0, &h)?;
    let errors = [8, 16, 32, 64]
        .iter()
        .map(|&m| resolvent_iterate_semigroup(&q, 1.0, m, &h, opts)?.sup_distance(&exact).map_err(Into::into))
        .collect::<CliResult<Vec<f64>>>()?;
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let ratio = if monotone { errors[3] / errors[0] } else { f64::INFINITY };
    out.push(check("iterate_to_semigroup_ratio", ratio, 0.25));

    let (mut gap, mut above) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let q = Generator::random(rng, 4, 1.0)?;
        let h = random_fn(rng, &q, 1.0);
        let star = resolvent_with(&q, 0.3, &h, SolverOptions::with_tol(1e-12))?;
        for x in 0..4 {
            gap = gap.max((variational_value(&q, 0.3, &h, &star, x)? - star.get(x)).abs());
        }
        for _ in 0..20 {
            let eta = random_fn(rng, &q, 1.0);
            let eps = rng.random_range(0.0..0.2);
            let phi = star.combine(1.0, &eta, eps)?;
            for x in 0..4 {
                above = above.max(variational_value(&q, 0.3, &h, &phi, x)? - star.get(x));
            }
        }
    }
    out.push(check("variational_optimality", gap, 1e-7));
    out.push(check("variational_lower_bound", above.max(0.0), 1e-9));

    let (mut eq, mut ineq) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(2..=10);
        let mu = Distribution::from_mass(random_simplex(rng, n))?;
        let nu = Distribution::from_mass(random_simplex(rng, n))?;
        let f = StateFunction::from_values((0..n).map(|_| rng.random_range(-5.0..5.0)).collect())?;
        let lmgf = dv_log_mgf(&f, &mu)?;
        let (_, attained) = dv_optimal_tilt(&f, &mu)?;
        eq = eq.max((attained - lmgf).abs());
        let pairing: f64 = nu.mass().iter().zip(f.values()).map(|(p, v)| p * v).sum();
        ineq = ineq.max(pairing - relative_entropy(&nu, &mu)?.value() - lmgf);
    }
    out.push(check("dv_equality", eq, 1e-10));
    out.push(check("dv_inequality", ineq.max(0.0), 1e-12));

    let mut chain = 0.0f64;
    for _ in 0..100 {
        let nu = JointDistribution::new(3, 4, random_simplex(rng, 12))?;
        let mu = JointDistribution::new(3, 4, random_simplex(rng, 12))?;
        let split = entropy_chain_rule(&nu, &mu)?;
        chain = chain.max((split.total().value() - joint_relative_entropy(&nu, &mu)?.value()).abs());
    }
    out.push(check("entropy_chain_rule", chain, 1e-12));

    let (mut parts, mut split) = (0.0f64, 0.0f64);
    for (k, c) in clock_battery() {
        let z = move |t: f64| t.powi(k) * (-c * t).exp();
        for lambda in [0.5, 1.0, 2.0, 3.0] {
            parts = parts.max(check_integration_by_parts(&ExpClock::new(lambda)?, z)?.residual);
        }
        for (a, b) in [(0.2, 0.7), (0.5, 2.0), (1.0, 3.0), (2.0, 3.0)] {
            split = split.max(check_convolution_split(a, b, z)?.residual);
        }
    }
    out.push(check("clock_integration_by_parts", parts, 1e-8));
    out.push(check("clock_convolution_split", split, 1e-8));

    let (mut concat, mut below) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let q = Generator::random(rng, 4, 1.0)?;
        let h = random_fn(rng, &q, 1.0);
        let (a, b) = (rng.random_range(0.2..1.0), rng.random_range(0.2..1.0));
        let joint = TimeLaw::exponential(a)?.convolve(TimeLaw::exponential(b)?);
        let lhs = t_plus(&q, &joint, &h)?;
        let rhs = t_plus(&q, &TimeLaw::exponential(a)?, &t_plus(&q, &TimeLaw::exponential(b)?, &h)?)?;
        concat = concat.max(rhs.values().iter().zip(lhs.values()).map(|(r, l)| r - l).fold(0.0, f64::max));
        let r = resolvent_with(&q, a, &h, opts)?;
        let tp = t_plus(&q, &TimeLaw::exponential(a)?, &h)?;
        below = below.max(r.values().iter().zip(tp.values()).map(|(r, t)| r - t).fold(0.0, f64::max));
    }
    out.push(check("t_plus_concatenation", concat, 1e-8));
    out.push(check("resolvent_below_t_plus", below, 1e-8));

    let mut law = 0.0f64;
    for _ in 0..10 {
        let q = Generator::random(rng, 6, 1.0)?;
        let f = random_fn(rng, &q, 1.0);
        let (s, t) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let direct = nonlinear_semigroup(&q, s + t, &f)?;
        let composed = nonlinear_semigroup(&q, s, &nonlinear_semigroup(&q, t, &f)?)?;
        law = law.max(direct.sup_distance(&composed)?);
    }
    out.push(check("semigroup_law", law, 1e-9));

    let mut tail = 0.0f64;
    for _ in 0..200 {
        let mu = random_simplex(rng, 20);
        let g: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let weights: Vec<f64> = mu.iter().zip(&g).map(|(m, g)| m * g.exp()).collect();
        let nu = Distribution::from_weights(weights)?;
        let mu = Distribution::from_mass(mu)?;
        let r = rng.random_range(0.5..5.0);
        let budget = relative_entropy(&nu, &mu)?.value() / r;
        let eps = rng.random_range(0.01..0.5);
        let tail_states = rng.random_range(1..20);
        let mu_tail: f64 = mu.mass()[..tail_states].iter().sum();
        let nu_tail: f64 = nu.mass()[..tail_states].iter().sum();
        tail = tail.max(nu_tail - tilted_tail_bound(mu_tail.min(1.0), r, budget, eps)?);
    }
    out.push(check("tilted_tail_bound", tail.max(0.0), 0.0));

    Ok(out)
}
