//! Finite-state chain primitives: validated generators, state functions,
//! distributions, and the linear semigroup and resolvent of a chain.
//!
//! Matrix exponentials are computed by uniformization. With
//! `q = max_x |Q(x,x)|` and `P = I + Q/q`,
//!
//! ```text
//! e^{tQ} = sum_k Poisson(qt; k) P^k
//! ```
//!
//! which only ever adds nonnegative terms, so probabilities stay in `[0, 1]`
//! and tiny transition probabilities keep their relative precision.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{ensure_nonnegative, ensure_positive, Error, GeneratorError, Result};

/// Row-sum tolerance applied when validating a generator.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOL: f64 = 1e-12;

/// Poisson tail mass at which the uniformization series is truncated.
pub const POISSON_TAIL_TOL: f64 = 1e-14;

/// Above this value of `q t` the matrix exponential is assembled by squaring.
const SQUARING_THRESHOLD: f64 = 32.0;

/// Ordered, distinct state labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::StateSpace("at least one state is required".into()));
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::StateSpace(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { labels })
    }

    /// States labelled `"0"`, `"1"`, ..., `"n-1"`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }
}

fn check_same(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::SpaceMismatch { expected, found })
    }
}

/// Rate matrix of a continuous-time Markov chain on a finite space.
///
/// Off-diagonal entries are jump rates, rows sum to zero. The uniformized
/// jump matrix `I + Q/q` is cached at construction.
#[derive(Debug, Clone)]
pub struct Generator {
    space: Arc<StateSpace>,
    rates: DMatrix<f64>,
    unif_rate: f64,
    jump: DMatrix<f64>,
}

/// Checks `rates` and wraps it as a [`Generator`] on `space`.
///
/// Non-finite entries are reported first, then negative off-diagonal rates,
/// then row sums outside [`ROW_SUM_TOL`].
pub fn validate_generator(space: StateSpace, rates: DMatrix<f64>) -> Result<Generator> {
    let (rows, cols) = rates.shape();
    if rows == 0 || cols == 0 {
        return Err(GeneratorError::Empty.into());
    }
    if rows != cols {
        return Err(GeneratorError::NotSquare { rows, cols }.into());
    }
    check_same(space.size(), rows)?;
    for row in 0..rows {
        for col in 0..cols {
            if !rates[(row, col)].is_finite() {
                return Err(GeneratorError::NonFinite { row, col }.into());
            }
        }
    }
    for row in 0..rows {
        for col in 0..cols {
            if row != col && rates[(row, col)] < 0.0 {
                return Err(GeneratorError::NegativeOffDiagonal { row, col }.into());
            }
        }
    }
    for row in 0..rows {
        let sum: f64 = rates.row(row).iter().sum();
        if sum.abs() > ROW_SUM_TOL {
            return Err(GeneratorError::RowSum { row, sum }.into());
        }
    }
    Ok(Generator::assemble(Arc::new(space), rates))
}

impl Generator {
    fn assemble(space: Arc<StateSpace>, rates: DMatrix<f64>) -> Self {
        let n = rates.nrows();
        let unif_rate = (0..n).map(|x| rates[(x, x)].abs()).fold(0.0, f64::max);
        let jump = if unif_rate > 0.0 {
            DMatrix::identity(n, n) + &rates / unif_rate
        } else {
            DMatrix::identity(n, n)
        };
        Self {
            space,
            rates,
            unif_rate,
            jump,
        }
    }

    pub fn new(space: StateSpace, rates: DMatrix<f64>) -> Result<Self> {
        validate_generator(space, rates)
    }

    /// Builds a generator from dense rows on an indexed state space.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(GeneratorError::Empty.into());
        }
        for r in rows {
            if r.len() != n {
                return Err(GeneratorError::NotSquare {
                    rows: n,
                    cols: r.len(),
                }
                .into());
            }
        }
        let rates = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        validate_generator(StateSpace::indexed(n)?, rates)
    }

    /// Builds a generator from `(from, to, rate)` triples; the diagonal is
    /// set to the negated off-diagonal row sum. Repeated pairs accumulate.
    pub fn from_transitions(space: StateSpace, transitions: &[(usize, usize, f64)]) -> Result<Self> {
        let n = space.size();
        let mut rates = DMatrix::zeros(n, n);
        for &(from, to, rate) in transitions {
            if from >= n || to >= n {
                return Err(Error::arg(
                    "transitions",
                    format!("index ({from},{to}) out of range for {n} states"),
                ));
            }
            if from == to {
                return Err(Error::arg(
                    "transitions",
                    format!("self-transition at state {from}; diagonals are inferred"),
                ));
            }
            rates[(from, to)] += rate;
        }
        for x in 0..n {
            let out: f64 = (0..n).filter(|&y| y != x).map(|y| rates[(x, y)]).sum();
            rates[(x, x)] = -out;
        }
        validate_generator(space, rates)
    }

    /// Off-diagonal rates drawn from `U[0, max_rate]` on an indexed space.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, max_rate: f64) -> Result<Self> {
        let mut rates = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut out = 0.0;
            for y in 0..n {
                if x != y {
                    let r = rng.random::<f64>() * max_rate;
                    rates[(x, y)] = r;
                    out += r;
                }
            }
            rates[(x, x)] = -out;
        }
        validate_generator(StateSpace::indexed(n)?, rates)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub(crate) fn space_arc(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[(from, to)]
    }

    /// `max_x |Q(x,x)|`, the uniformization rate.
    pub fn uniformization_rate(&self) -> f64 {
        self.unif_rate
    }

    /// Rebuilds with the same state space; the caller guarantees validity.
    pub(crate) fn with_rates_unchecked(&self, rates: DMatrix<f64>) -> Self {
        Self::assemble(Arc::clone(&self.space), rates)
    }

    pub(crate) fn check_fn(&self, f: &StateFunction) -> Result<()> {
        check_same(self.size(), f.len())
    }
}

/// A real-valued function on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction {
    space: Arc<StateSpace>,
    values: Vec<f64>,
}

impl StateFunction {
    pub fn new(space: &StateSpace, values: Vec<f64>) -> Result<Self> {
        Self::on(Arc::new(space.clone()), values)
    }

    pub(crate) fn on(space: Arc<StateSpace>, values: Vec<f64>) -> Result<Self> {
        check_same(space.size(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg("values", format!("non-finite value at state {i}")));
        }
        Ok(Self { space, values })
    }

    /// Values may be non-finite only where the caller documents it.
    pub(crate) fn on_unchecked(space: Arc<StateSpace>, values: Vec<f64>) -> Self {
        debug_assert_eq!(space.size(), values.len());
        Self { space, values }
    }

    /// Function on an indexed state space of matching size.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let space = StateSpace::indexed(values.len())?;
        Self::new(&space, values)
    }

    /// Function on the state space of `q`.
    pub fn for_generator(q: &Generator, values: Vec<f64>) -> Result<Self> {
        Self::on(Arc::clone(q.space_arc()), values)
    }

    pub fn constant(q: &Generator, c: f64) -> Result<Self> {
        Self::for_generator(q, vec![c; q.size()])
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖self − other‖∞`.
    pub fn sup_distance(&self, other: &StateFunction) -> Result<f64> {
        check_same(self.len(), other.len())?;
        Ok(sup_distance(&self.values, &other.values))
    }

    /// Pointwise map, keeping the state space.
    pub fn map(&self, mut op: impl FnMut(f64) -> f64) -> StateFunction {
        StateFunction::on_unchecked(
            Arc::clone(&self.space),
            self.values.iter().map(|&v| op(v)).collect(),
        )
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &StateFunction, b: f64) -> Result<StateFunction> {
        check_same(self.len(), other.len())?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(StateFunction::on_unchecked(Arc::clone(&self.space), values))
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> StateFunction {
        StateFunction::on_unchecked(Arc::clone(&self.space), values)
    }
}

impl fmt::Display for StateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A probability vector on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    space: Arc<StateSpace>,
    mass: Vec<f64>,
}

impl Distribution {
    pub fn new(space: &StateSpace, mass: Vec<f64>) -> Result<Self> {
        check_same(space.size(), mass.len())?;
        if let Some(i) = mass.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::arg(
                "mass",
                format!("entry {i} is {} (must be finite and >= 0)", mass[i]),
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::arg("mass", format!("entries sum to {total}, expected 1")));
        }
        Ok(Self {
            space: Arc::new(space.clone()),
            mass,
        })
    }

    /// Distribution on an indexed space.
    pub fn from_mass(mass: Vec<f64>) -> Result<Self> {
        let space = StateSpace::indexed(mass.len())?;
        Self::new(&space, mass)
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::arg(
                "weights",
                "must be nonnegative with a positive finite total",
            ));
        }
        Self::from_mass(weights.into_iter().map(|w| w / total).collect())
    }

    pub(crate) fn on_unchecked(space: Arc<StateSpace>, mass: Vec<f64>) -> Self {
        Self { space, mass }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub(crate) fn space_arc(&self) -> &Arc<StateSpace> {
        &self.space
    }
}

/// Poisson(`mean`) weights generated in log space, so they never overflow
/// and the leading `e^{-mean}` may underflow harmlessly.
struct PoissonWeights {
    mean: f64,
    ln_mean: f64,
    k: usize,
    ln_weight: f64,
}

impl PoissonWeights {
    fn new(mean: f64) -> Self {
        Self {
            mean,
            ln_mean: mean.ln(),
            k: 0,
            ln_weight: -mean,
        }
    }

    fn weight(&self) -> f64 {
        self.ln_weight.exp()
    }

    /// Upper bound on the mass of all terms after the current one, or `None`
    /// while the weights are still increasing.
    fn tail_bound(&self) -> Option<f64> {
        let next = self.k as f64 + 1.0;
        if next <= self.mean {
            return None;
        }
        let ratio = self.mean / next;
        Some(self.weight() * ratio / (1.0 - ratio))
    }

    fn advance(&mut self) {
        self.k += 1;
        self.ln_weight += self.ln_mean - (self.k as f64).ln();
    }
}

/// `e^{tQ}` applied to a column vector. When `v ≥ 0` the series is run until
/// every entry is accurate to [`POISSON_TAIL_TOL`] in relative terms; for
/// signed vectors the tail is bounded relative to `‖v‖∞`.
pub(crate) fn uniformized_action(q: &Generator, t: f64, v: &[f64]) -> Vec<f64> {
    let qt = q.unif_rate * t;
    if qt == 0.0 {
        return v.to_vec();
    }
    let nonneg = v.iter().all(|&x| x >= 0.0);
    let scale = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    if scale == 0.0 {
        return vec![0.0; v.len()];
    }
    let mut term = DVector::from_column_slice(v);
    let mut next = DVector::zeros(v.len());
    let mut acc = vec![0.0; v.len()];
    let mut poisson = PoissonWeights::new(qt);
    loop {
        let w = poisson.weight();
        if w > 0.0 {
            for (a, t) in acc.iter_mut().zip(term.iter()) {
                *a += w * t;
            }
        }
        if let Some(tail) = poisson.tail_bound() {
            let floor = if nonneg {
                acc.iter().copied().fold(f64::INFINITY, f64::min)
            } else {
                scale
            };
            if tail == 0.0 || tail * scale <= POISSON_TAIL_TOL * floor {
                break;
            }
        }
        q.jump.mul_to(&term, &mut next);
        std::mem::swap(&mut term, &mut next);
        poisson.advance();
    }
    acc
}

fn uniformized_matrix(q: &Generator, t: f64) -> DMatrix<f64> {
    let n = q.size();
    let qt = q.unif_rate * t;
    let mut term = DMatrix::identity(n, n);
    let mut acc = DMatrix::zeros(n, n);
    let mut poisson = PoissonWeights::new(qt);
    loop {
        let w = poisson.weight();
        if w > 0.0 {
            acc += &term * w;
        }
        if let Some(tail) = poisson.tail_bound() {
            let floor = acc.iter().copied().fold(f64::INFINITY, f64::min);
            if tail == 0.0 || tail <= POISSON_TAIL_TOL * floor {
                break;
            }
        }
        term = &q.jump * &term;
        poisson.advance();
    }
    acc
}

/// `e^{tQ}`, the matrix of transition probabilities over time `t`.
pub fn transition_matrix(q: &Generator, t: f64) -> Result<DMatrix<f64>> {
    ensure_nonnegative("t", t)?;
    let n = q.size();
    let qt = q.unif_rate * t;
    if qt == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let mut halvings = 0;
    let mut step = t;
    while q.unif_rate * step > SQUARING_THRESHOLD {
        step /= 2.0;
        halvings += 1;
    }
    let mut p = uniformized_matrix(q, step);
    for _ in 0..halvings {
        p = &p * &p;
    }
    Ok(p)
}

/// Row `x` of `e^{tQ}`: the law of the chain at time `t` started from `x`.
pub fn transition_row(q: &Generator, t: f64, x: usize) -> Result<Vec<f64>> {
    ensure_nonnegative("t", t)?;
    if x >= q.size() {
        return Err(Error::arg("x", format!("state {x} out of range")));
    }
    let qt = q.unif_rate * t;
    let n = q.size();
    let mut row = vec![0.0; n];
    row[x] = 1.0;
    if qt == 0.0 {
        return Ok(row);
    }
    // Row vectors evolve under the transpose.
    let jump_t = q.jump.transpose();
    let mut term = DVector::from_vec(row);
    let mut next = DVector::zeros(n);
    let mut acc = vec![0.0; n];
    let mut poisson = PoissonWeights::new(qt);
    loop {
        let w = poisson.weight();
        if w > 0.0 {
            for (a, t) in acc.iter_mut().zip(term.iter()) {
                *a += w * t;
            }
        }
        if let Some(tail) = poisson.tail_bound() {
            let floor = acc.iter().copied().fold(f64::INFINITY, f64::min);
            if tail == 0.0 || tail <= POISSON_TAIL_TOL * floor {
                break;
            }
        }
        jump_t.mul_to(&term, &mut next);
        std::mem::swap(&mut term, &mut next);
        poisson.advance();
    }
    Ok(acc)
}

/// The linear semigroup `S(t)u = e^{tQ}u`.
pub fn semigroup_apply(q: &Generator, t: f64, u: &StateFunction) -> Result<StateFunction> {
    ensure_nonnegative("t", t)?;
    q.check_fn(u)?;
    Ok(u.with_values(uniformized_action(q, t, u.values())))
}

/// `S(t)v` at each of the nondecreasing `times`, stepping the semigroup
/// forward from one time to the next.
pub(crate) fn semigroup_path(q: &Generator, times: &[f64], v: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    let mut current = v.to_vec();
    let mut now = 0.0;
    for &t in times {
        debug_assert!(t >= now);
        current = uniformized_action(q, t - now, &current);
        now = t;
        out.push(current.clone());
    }
    out
}

/// `(I − λQ)^{-1}u`, the integral of `S(t)u` against the exponential law of
/// mean `λ`.
pub fn linear_resolvent_apply(q: &Generator, lambda: f64, u: &StateFunction) -> Result<StateFunction> {
    ensure_positive("lambda", lambda)?;
    q.check_fn(u)?;
    let values = solve_shifted(q.rates(), lambda, u.values())?;
    Ok(u.with_values(values))
}

/// Solves `(I − λM)x = b` by dense LU.
pub(crate) fn solve_shifted(m: &DMatrix<f64>, lambda: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.nrows();
    let system = DMatrix::identity(n, n) - m * lambda;
    let x = system
        .lu()
        .solve(&DVector::from_column_slice(b))
        .ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x.iter().copied().collect())
}
