//! Large deviations for density-scaled birth–death chains.
//!
//! Level `n` lives on the grid `{0, 1/n, …, 1}` and jumps up at rate
//! `n·b(x)` and down at rate `n·d(x)`; the speed is `r_n = n`. The scaled
//! Hamiltonians `H_n f = r_n⁻¹ e^{-r_n f} A_n e^{r_n f}` converge on the
//! interior to `Hf(x) = b(x)(e^{f'(x)} − 1) + d(x)(e^{−f'(x)} − 1)`, and on
//! each finite level the conditional rate `sup_f f(y) − V_n(t)f(x)` is
//! `−r_n⁻¹ log p_t(x, y)`.
//!
//! The comparison principle for the limit equation is *not* verified here:
//! the finite levels inherit uniqueness from the contractive resolvent
//! solver, and the limit operator is taken as given.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::markov::{transition_matrix, transition_row, Generator, StateFunction, StateSpace};
use crate::nonlinear::{hamiltonian, nonlinear_semigroup_scaled};

/// Probabilities below this are reported as an infinite rate.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

/// Step of the central difference used by the built-in limit Hamiltonian.
pub const DERIVATIVE_STEP: f64 = 1e-5;

const GRID_TOL: f64 = 1e-9;

type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Evaluates the limit operator `Hf(x)` for a function `f` on `[0, 1]`.
pub trait LimitHamiltonian: Send + Sync {
    fn eval(&self, x: f64, f: &dyn Fn(f64) -> f64) -> f64;
}

impl<F> LimitHamiltonian for F
where
    F: Fn(f64, &dyn Fn(f64) -> f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        self(x, f)
    }
}

/// Per-particle birth and death intensities `b, d` on `[0, 1]`.
#[derive(Clone)]
pub struct DensityModel {
    name: String,
    birth: RateFn,
    death: RateFn,
}

impl fmt::Debug for DensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityModel").field("name", &self.name).finish_non_exhaustive()
    }
}

impl DensityModel {
    pub fn new(
        name: impl Into<String>,
        birth: impl Fn(f64) -> f64 + Send + Sync + 'static,
        death: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            birth: Arc::new(birth),
            death: Arc::new(death),
        }
    }

    /// `b(x) = 1 − x`, `d(x) = x`.
    pub fn ehrenfest() -> Self {
        Self::new("ehrenfest", |x| 1.0 - x, |x| x)
    }

    /// `b` and `d` given by polynomial coefficients in increasing degree.
    pub fn polynomial(birth: Vec<f64>, death: Vec<f64>) -> Result<Self> {
        for (name, c) in [("birth", &birth), ("death", &death)] {
            if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(name, "need at least one finite coefficient"));
            }
        }
        let horner = |c: Vec<f64>| move |x: f64| c.iter().rev().fold(0.0, |acc, a| acc * x + a);
        Ok(Self::new("birth-death", horner(birth), horner(death)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn birth(&self, x: f64) -> f64 {
        (self.birth)(x)
    }

    pub fn death(&self, x: f64) -> f64 {
        (self.death)(x)
    }

    /// The limit Hamiltonian `b(x)(e^{p} − 1) + d(x)(e^{−p} − 1)` with
    /// `p = f'(x)` taken by a central difference of step [`DERIVATIVE_STEP`].
    pub fn limit_hamiltonian(&self) -> Arc<dyn LimitHamiltonian> {
        let model = self.clone();
        Arc::new(move |x: f64, f: &dyn Fn(f64) -> f64| {
            let h = DERIVATIVE_STEP;
            let p = (f(x + h) - f(x - h)) / (2.0 * h);
            model.birth(x) * p.exp_m1() + model.death(x) * (-p).exp_m1()
        })
    }
}

/// One level `(E_n, A_n, r_n, η_n)` of a scaled family.
#[derive(Debug, Clone)]
pub struct Level {
    n: usize,
    generator: Generator,
    speed: f64,
    grid: Vec<f64>,
}

impl Level {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Embedded grid points `η_n(i) = i/n`.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `f ∘ η_n` as a state function on this level.
    pub fn restrict(&self, f: &dyn Fn(f64) -> f64) -> Result<StateFunction> {
        StateFunction::for_generator(&self.generator, self.grid.iter().map(|&x| f(x)).collect())
    }

    /// Grid index of `x`, which must lie on the grid.
    pub fn index_of(&self, x: f64) -> Result<usize> {
        let scaled = x * self.n as f64;
        let k = scaled.round();
        if !(0.0..=self.n as f64).contains(&k) || (scaled - k).abs() > GRID_TOL {
            return Err(Error::arg("x", format!("{x} is not a point of the grid with n = {}", self.n)));
        }
        Ok(k as usize)
    }

    /// Nearest grid index, ties to the lower index; `x` is clamped to `[0, 1]`.
    pub fn snap(&self, x: f64) -> usize {
        let scaled = (x.clamp(0.0, 1.0) * self.n as f64 - 0.5).ceil();
        scaled.clamp(0.0, self.n as f64) as usize
    }

    /// Grid indices whose points fall in `[a, b]`.
    fn indices_in(&self, a: f64, b: f64) -> Vec<usize> {
        (0..=self.n)
            .filter(|&i| self.grid[i] >= a - 1e-12 && self.grid[i] <= b + 1e-12)
            .collect()
    }
}

/// Levels of a density-scaled family together with the limit Hamiltonian.
#[derive(Clone)]
pub struct ScaledFamily {
    levels: Vec<Level>,
    limit: Arc<dyn LimitHamiltonian>,
}

impl fmt::Debug for ScaledFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScaledFamily").field("levels", &self.levels).finish_non_exhaustive()
    }
}

impl ScaledFamily {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> Result<&Level> {
        self.levels.iter().find(|l| l.n == n).ok_or(Error::UnknownLevel(n))
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n).collect()
    }

    /// Replaces the limit Hamiltonian.
    pub fn with_limit(mut self, limit: Arc<dyn LimitHamiltonian>) -> Self {
        self.limit = limit;
        self
    }

    pub fn limit_hamiltonian(&self, x: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        self.limit.eval(x, f)
    }
}

/// Assembles the birth–death generators of `model` for each `n` in the
/// strictly increasing `n_list`, with speeds `r_n = n`.
pub fn build_density_family(model: &DensityModel, n_list: &[usize]) -> Result<ScaledFamily> {
    if n_list.is_empty() {
        return Err(Error::arg("n_list", "need at least one level"));
    }
    if n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("n_list", "levels must be positive and strictly increasing"));
    }
    let levels = n_list
        .iter()
        .map(|&n| build_level(model, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaledFamily {
        levels,
        limit: model.limit_hamiltonian(),
    })
}

fn build_level(model: &DensityModel, n: usize) -> Result<Level> {
    let nf = n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 / nf).collect();
    let mut transitions = Vec::with_capacity(2 * n);
    for (i, &x) in grid.iter().enumerate() {
        let (b, d) = (model.birth(x), model.death(x));
        let interior = i > 0 && i < n;
        for (name, v, used) in [("birth", b, i < n), ("death", d, i > 0)] {
            let bad = !v.is_finite() || v < 0.0 || (interior && v <= 0.0);
            if used && bad {
                return Err(Error::arg(name, format!("rate {v} at x = {x} must be positive inside (0, 1)")));
            }
        }
        if i < n && b > 0.0 {
            transitions.push((i, i + 1, nf * b));
        }
        if i > 0 && d > 0.0 {
            transitions.push((i, i - 1, nf * d));
        }
    }
    let generator = Generator::from_transitions(StateSpace::indexed(n + 1)?, &transitions)?;
    Ok(Level {
        n,
        generator,
        speed: nf,
        grid,
    })
}

/// `H_n(f ∘ η_n)` on level `n`.
pub fn apply_hn(family: &ScaledFamily, n: usize, f: &dyn Fn(f64) -> f64) -> Result<StateFunction> {
    let level = family.level(n)?;
    let g = level.restrict(f)?;
    StateFunction::for_generator(&level.generator, hamiltonian(&level.generator, level.speed, g.values()))
}

/// A per-level error or deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelError {
    pub n: usize,
    pub error: f64,
}

fn check_inner_interval(a: f64, b: f64) -> Result<()> {
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(Error::arg("interval", format!("need 0 < a < b < 1, got [{a}, {b}]")));
    }
    Ok(())
}

/// `max_{x ∈ [a,b] ∩ E_n} |H_n f(x) − Hf(x)|` for each level.
pub fn check_hamiltonian_convergence(
    family: &ScaledFamily,
    f: &dyn Fn(f64) -> f64,
    interval: (f64, f64),
) -> Result<Vec<LevelError>> {
    let (a, b) = interval;
    check_inner_interval(a, b)?;
    family
        .levels
        .iter()
        .map(|level| {
            let inner = level.indices_in(a, b);
            if inner.is_empty() {
                return Err(Error::arg("interval", format!("no grid point of level {} in [{a}, {b}]", level.n)));
            }
            let hn = apply_hn(family, level.n, f)?;
            let error = inner
                .iter()
                .map(|&i| (hn.get(i) - family.limit_hamiltonian(level.grid[i], f)).abs())
                .fold(0.0, f64::max);
            Ok(LevelError { n: level.n, error })
        })
        .collect()
}

fn rate_from_probability(p: f64, speed: f64) -> f64 {
    if p < PROBABILITY_FLOOR {
        f64::INFINITY
    } else {
        -p.ln() / speed
    }
}

/// `I_t^{(n)}(y | x) = −r_n⁻¹ log p_t^{(n)}(x, y)`; `+∞` when the
/// probability is below [`PROBABILITY_FLOOR`].
pub fn finite_dim_rate(family: &ScaledFamily, n: usize, t: f64, x: f64, y: f64) -> Result<f64> {
    ensure_positive("t", t)?;
    let level = family.level(n)?;
    let (i, j) = (level.index_of(x)?, level.index_of(y)?);
    let row = transition_row(&level.generator, t, i)?;
    Ok(rate_from_probability(row[j], level.speed))
}

/// The indicator-family lower bound on the conditional rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreRate {
    /// `sup_{0 ≤ c ≤ c_max} c − V_n(t)(c·1_y)(x)`.
    pub value: f64,
    /// Gap exponent: `I − value = r_n⁻¹ log(1 + e^{−r_n c_max θ})`.
    /// `None` for `c_max = 0`; `+∞` when `p_t(x, y) = 1`.
    pub theta: Option<f64>,
}

impl LegendreRate {
    /// Upper bound on the distance to the exact rate at speed `speed` and
    /// the `c_max` used to compute `self`.
    pub fn gap_bound(&self, speed: f64, c_max: f64) -> f64 {
        match self.theta {
            None => f64::INFINITY,
            Some(theta) => (-speed * c_max * theta).exp().ln_1p() / speed,
        }
    }
}

/// Evaluates `c − V_n(t)(c·1_y)(x)` over `c ∈ [0, c_max]`. The objective is
/// nondecreasing in `c`, so the supremum is attained at `c_max`.
pub fn conditional_rate_legendre(
    family: &ScaledFamily,
    n: usize,
    t: f64,
    x: f64,
    y: f64,
    c_max: f64,
) -> Result<LegendreRate> {
    ensure_positive("t", t)?;
    ensure_nonnegative("c_max", c_max)?;
    let level = family.level(n)?;
    let (i, j) = (level.index_of(x)?, level.index_of(y)?);
    if c_max == 0.0 {
        return Ok(LegendreRate { value: 0.0, theta: None });
    }
    let mut indicator = vec![0.0; level.n + 1];
    indicator[j] = c_max;
    let f = StateFunction::for_generator(&level.generator, indicator)?;
    let v = nonlinear_semigroup_scaled(&level.generator, level.speed, t, &f)?;
    let value = c_max - v.get(i);
    let p = transition_row(&level.generator, t, i)?[j];
    let theta = if p >= 1.0 {
        f64::INFINITY
    } else {
        1.0 + (p / (1.0 - p)).ln() / (level.speed * c_max)
    };
    Ok(LegendreRate {
        value,
        theta: Some(theta),
    })
}

/// A piecewise-linear trajectory in `[0, 1]` with an initial cost.
#[derive(Clone)]
pub struct PathSpec {
    times: Vec<f64>,
    points: Vec<f64>,
    initial_rate: RateFn,
}

impl fmt::Debug for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathSpec")
            .field("times", &self.times)
            .field("points", &self.points)
            .finish_non_exhaustive()
    }
}

impl PathSpec {
    pub fn new(
        times: Vec<f64>,
        points: Vec<f64>,
        initial_rate: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() {
            return Err(Error::arg("path", "need at least two times and one point per time"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
            return Err(Error::arg("times", "must start at 0 and increase strictly"));
        }
        if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::arg("points", format!("{p} lies outside [0, 1]")));
        }
        Ok(Self {
            times,
            points,
            initial_rate: Arc::new(initial_rate),
        })
    }

    /// Path with zero initial cost.
    pub fn free_start(times: Vec<f64>, points: Vec<f64>) -> Result<Self> {
        Self::new(times, points, |_| 0.0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `γ(s)` by linear interpolation.
    pub fn at(&self, s: f64) -> f64 {
        let k = self.times.partition_point(|&t| t <= s).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (x0, x1) = (self.points[k - 1], self.points[k]);
        let w = ((s - t0) / (t1 - t0)).clamp(0.0, 1.0);
        x0 + w * (x1 - x0)
    }

    /// The specified times with every interval bisected `depth` times.
    pub fn refined_times(&self, depth: u32) -> Vec<f64> {
        let pieces = 1usize << depth;
        let mut out = vec![self.times[0]];
        for w in self.times.windows(2) {
            for k in 1..=pieces {
                out.push(if k == pieces {
                    w[1]
                } else {
                    w[0] + (w[1] - w[0]) * k as f64 / pieces as f64
                });
            }
        }
        out
    }
}

/// Partition sums of a path at successive refinement depths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRate {
    /// Supremum over the evaluated partitions.
    pub value: f64,
    /// `I₀(γ(0)) + Σ_i I_{Δt_i}(γ(t_i) | γ(t_{i−1}))` at depth `0, 1, …`.
    pub per_depth: Vec<f64>,
}

/// The path rate functional at reference level `n_ref`, evaluated on the
/// nested dyadic refinements of the path's partition up to `depth`.
///
/// Partition points are snapped to the nearest grid point (ties toward the
/// lower index).
pub fn path_rate(family: &ScaledFamily, n_ref: usize, path: &PathSpec, depth: u32) -> Result<PathRate> {
    let level = family.level(n_ref)?;
    let start = (path.initial_rate)(path.points[0]);
    if start.is_nan() || start < 0.0 {
        return Err(Error::arg("initial_rate", format!("must be nonnegative, got {start}")));
    }
    let mut kernels: HashMap<u64, DMatrix<f64>> = HashMap::new();
    let mut per_depth = Vec::with_capacity(depth as usize + 1);
    for d in 0..=depth {
        let times = path.refined_times(d);
        let states: Vec<usize> = times.iter().map(|&s| level.snap(path.at(s))).collect();
        let mut total = start;
        for (w, s) in times.windows(2).zip(states.windows(2)) {
            let dt = w[1] - w[0];
            let p = match kernels.get(&dt.to_bits()) {
                Some(m) => m[(s[0], s[1])],
                None => {
                    let m = transition_matrix(&level.generator, dt)?;
                    let p = m[(s[0], s[1])];
                    kernels.insert(dt.to_bits(), m);
                    p
                }
            };
            total += rate_from_probability(p, level.speed);
        }
        per_depth.push(total);
    }
    let value = per_depth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PathRate { value, per_depth })
}

/// `max_{x ∈ [a,b] ∩ E_n} |V_n(t)(f∘η_n)(x) − V_N(t)(f∘η_N)(x)|` for each
/// level `n` below the finest level `N`; the finest solution is linearly
/// interpolated to `x`.
pub fn semigroup_convergence_check(
    family: &ScaledFamily,
    f: &dyn Fn(f64) -> f64,
    t: f64,
    interval: (f64, f64),
) -> Result<Vec<LevelError>> {
    let (a, b) = interval;
    check_inner_interval(a, b)?;
    ensure_nonnegative("t", t)?;
    let (finest, coarse) = match family.levels.split_last() {
        Some((finest, coarse)) if !coarse.is_empty() => (finest, coarse),
        _ => return Err(Error::arg("family", "need at least two levels")),
    };
    let evolve = |level: &Level| -> Result<StateFunction> {
        nonlinear_semigroup_scaled(&level.generator, level.speed, t, &level.restrict(f)?)
    };
    let reference = evolve(finest)?;
    let interpolate = |x: f64| {
        let s = x * finest.n as f64;
        let k = (s.floor() as usize).min(finest.n - 1);
        let w = s - k as f64;
        (1.0 - w) * reference.get(k) + w * reference.get(k + 1)
    };
    coarse
        .iter()
        .map(|level| {
            let inner = level.indices_in(a, b);
            if inner.is_empty() {
                return Err(Error::arg("interval", format!("no grid point of level {} in [{a}, {b}]", level.n)));
            }
            let v = evolve(level)?;
            let error = inner
                .iter()
                .map(|&i| (v.get(i) - interpolate(level.grid[i])).abs())
                .fold(0.0, f64::max);
            Ok(LevelError { n: level.n, error })
        })
        .collect()
}

/// One row `(n, t, x, y, value)` of a rate table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// Rows of conditional rates, ordered by `(n, t, x, y)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTable {
    rows: Vec<RateRow>,
}

impl RateTable {
    pub fn rows(&self) -> &[RateRow] {
        &self.rows
    }

    fn push(&mut self, row: RateRow) -> Result<()> {
        if row.value.is_nan() || row.value < -1e-12 {
            return Err(Error::arg("rate", format!("negative rate {} at n = {}", row.value, row.n)));
        }
        self.rows.push(row);
        Ok(())
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.n.cmp(&b.n)
                .then(a.t.total_cmp(&b.t))
                .then(a.x.total_cmp(&b.x))
                .then(a.y.total_cmp(&b.y))
        });
    }
}

/// `finite_dim_rate` for every level, time and `(x, y)` pair. Pairs that
/// are not grid points of a level are skipped for that level.
pub fn rate_table(family: &ScaledFamily, times: &[f64], pairs: &[(f64, f64)]) -> Result<RateTable> {
    let mut table = RateTable::default();
    for level in &family.levels {
        for &t in times {
            ensure_positive("t", t)?;
            let p = transition_matrix(&level.generator, t)?;
            for &(x, y) in pairs {
                let (Ok(i), Ok(j)) = (level.index_of(x), level.index_of(y)) else {
                    continue;
                };
                table.push(RateRow {
                    n: level.n,
                    t,
                    x,
                    y,
                    value: rate_from_probability(p[(i, j)], level.speed),
                })?;
            }
        }
    }
    table.sort();
    Ok(table)
}
