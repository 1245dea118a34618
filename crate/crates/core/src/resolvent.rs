//! The nonlinear resolvent `R(λ)h`, the solution `f` of `f − λHf = h`.
//!
//! On a finite space the equation is solved classically. The solution lies
//! in the box `[min h, max h]` because `R(λ)` is monotone and fixes
//! constants. On that box `λH` is Lipschitz in sup-norm with constant
//! `L = 2λ q e^{osc h}`, where `q` is the largest exit rate, and when
//! `L < 1/2` plain Picard iteration `f ← h + λHf` is used.
//!
//! Otherwise the solver runs policy iteration on the tilts of the
//! variational representation: starting from the linear resolvent
//! `(I − λQ)^{-1}h`, each step replaces `f` by the value of the
//! exponentially tilted candidate `φ = f`,
//!
//! ```text
//! f ← f + (I − λQ^f)^{-1}(h − f + λHf),
//! ```
//!
//! which is Newton's method for `f − λHf = h`. Every iterate is a lower bound
//! for `R(λ)h` and the sequence increases to it, for every `λ > 0`.
//!
//! The outer loop built on the pseudo-resolvent identity is available as
//! [`pseudo_resolvent_solve`].

use nalgebra::DMatrix;

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::markov::{solve_shifted, Generator, StateFunction};
use crate::nonlinear::hamiltonian;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 2_000_000;

/// Picard iteration is used while its contraction estimate is below this.
const PICARD_CONTRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on `‖f − h − λHf‖∞` at exit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Which iteration produced a [`ResolventSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    Picard,
    PolicyIteration,
    PseudoResolvent,
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub f: StateFunction,
    pub iterations: usize,
    /// `‖f − h − λHf‖∞`.
    pub residual: f64,
    pub path: SolverPath,
}

/// A generator together with its exponential tilt by `φ`.
#[derive(Debug, Clone)]
pub struct TiltedChain {
    base: Generator,
    tilt: StateFunction,
    tilted: Generator,
}

impl TiltedChain {
    pub fn base(&self) -> &Generator {
        &self.base
    }

    pub fn tilt(&self) -> &StateFunction {
        &self.tilt
    }

    /// Rates `Q(x,y) e^{φ(y)−φ(x)}` off the diagonal.
    pub fn tilted(&self) -> &Generator {
        &self.tilted
    }
}

/// Generator of the chain reweighted by the exponential martingale of `φ`.
pub fn tilted_generator(q: &Generator, phi: &StateFunction) -> Result<TiltedChain> {
    q.check_fn(phi)?;
    let n = q.size();
    let p = phi.values();
    let mut rates = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut out = 0.0;
        for y in 0..n {
            if y != x {
                let r = q.rate(x, y) * (p[y] - p[x]).exp();
                if !r.is_finite() {
                    return Err(Error::arg("phi", format!("tilted rate ({x},{y}) overflows")));
                }
                rates[(x, y)] = r;
                out += r;
            }
        }
        rates[(x, x)] = -out;
    }
    Ok(TiltedChain {
        base: q.clone(),
        tilt: phi.clone(),
        tilted: q.with_rates_unchecked(rates),
    })
}

fn exit_rate_bound(q: &Generator) -> f64 {
    q.uniformization_rate()
}

/// Solves `f − λHf = h` to residual `tol`.
pub fn fixed_point_resolvent(
    q: &Generator,
    lambda: f64,
    h: &StateFunction,
    tol: f64,
    max_iter: usize,
) -> Result<ResolventSolution> {
    ensure_positive("lambda", lambda)?;
    ensure_positive("tol", tol)?;
    q.check_fn(h)?;
    // Work with h shifted so its maximum is zero; R commutes with shifts.
    let top = h.max();
    let shifted: Vec<f64> = h.values().iter().map(|v| v - top).collect();
    let (mut f, iterations, residual, path) = solve_shifted_resolvent(q, lambda, &shifted, tol, max_iter)?;
    f.iter_mut().for_each(|v| *v += top);
    Ok(ResolventSolution {
        f: h.with_values(f),
        iterations,
        residual,
        path,
    })
}

fn solve_shifted_resolvent(
    q: &Generator,
    lambda: f64,
    h: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64, SolverPath)> {
    let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo).exp();
    let exit = exit_rate_bound(q);
    if 2.0 * lambda * exit * spread < PICARD_CONTRACTION {
        picard(q, lambda, h, (lo, hi), tol, max_iter).map(|(f, k, r)| (f, k, r, SolverPath::Picard))
    } else {
        policy_iteration(q, lambda, h, (lo, hi), tol, max_iter).map(|(f, k, r)| (f, k, r, SolverPath::PolicyIteration))
    }
}

fn resolvent_residual(q: &Generator, lambda: f64, h: &[f64], f: &[f64]) -> (Vec<f64>, f64) {
    let hf = hamiltonian(q, 1.0, f);
    let residual = f
        .iter()
        .zip(h)
        .zip(&hf)
        .fold(0.0f64, |m, ((fv, hv), g)| m.max((fv - hv - lambda * g).abs()));
    (hf, residual)
}

/// `f ← h + λHf`, clamped to `[lo, hi]`.
fn picard(
    q: &Generator,
    lambda: f64,
    h: &[f64],
    (lo, hi): (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let mut f = h.to_vec();
    let mut residual = f64::INFINITY;
    for iteration in 0..=max_iter {
        let (hf, r) = resolvent_residual(q, lambda, h, &f);
        residual = r;
        if residual <= tol {
            return Ok((f, iteration, residual));
        }
        if !residual.is_finite() {
            break;
        }
        for ((fv, hv), g) in f.iter_mut().zip(h).zip(&hf) {
            *fv = (hv + lambda * g).clamp(lo, hi);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Newton steps on the tilts, starting from the linear resolvent.
fn policy_iteration(
    q: &Generator,
    lambda: f64,
    h: &[f64],
    (lo, hi): (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = h.len();
    let mut f = solve_shifted(q.rates(), lambda, h)?;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for iteration in 1..=max_iter {
        let (hf, residual) = resolvent_residual(q, lambda, h, &f);
        if residual <= tol {
            return Ok((f, iteration, residual));
        }
        // Quadratic convergence ends at roundoff; stop once it stops helping.
        if residual < best {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 {
                return Err(Error::NotConverged {
                    iterations: iteration,
                    residual,
                });
            }
        }
        let mut tilted = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut out = 0.0;
            for y in 0..n {
                let rate = q.rate(x, y);
                if y != x && rate > 0.0 {
                    let r = rate * (f[y] - f[x]).exp();
                    tilted[(x, y)] = r;
                    out += r;
                }
            }
            if !out.is_finite() {
                return Err(Error::arg("h", "oscillation too large: tilted rates overflow"));
            }
            tilted[(x, x)] = -out;
        }
        let rhs: Vec<f64> = (0..n).map(|x| h[x] - f[x] + lambda * hf[x]).collect();
        let step = solve_shifted(&tilted, lambda, &rhs)?;
        for (fv, d) in f.iter_mut().zip(step) {
            *fv = (*fv + d).clamp(lo, hi);
        }
    }
    let (_, residual) = resolvent_residual(q, lambda, h, &f);
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// `R(λ)h` with [`SolverOptions::default`].
pub fn resolvent(q: &Generator, lambda: f64, h: &StateFunction) -> Result<StateFunction> {
    resolvent_with(q, lambda, h, SolverOptions::default())
}

pub fn resolvent_with(q: &Generator, lambda: f64, h: &StateFunction, opts: SolverOptions) -> Result<StateFunction> {
    Ok(fixed_point_resolvent(q, lambda, h, opts.tol, opts.max_iter)?.f)
}

/// Solves `f − λHf = h` through `g ← R(α)((1 − α/λ)g + (α/λ)h)`, a
/// `(1 − α/λ)`-contraction, with each inner `R(α)` solved by
/// [`fixed_point_resolvent`].
pub fn pseudo_resolvent_solve(
    q: &Generator,
    lambda: f64,
    alpha: f64,
    h: &StateFunction,
    opts: SolverOptions,
) -> Result<ResolventSolution> {
    ensure_positive("lambda", lambda)?;
    ensure_positive("alpha", alpha)?;
    if alpha > lambda {
        return Err(Error::arg("alpha", format!("must not exceed lambda ({alpha} > {lambda})")));
    }
    q.check_fn(h)?;
    let ratio = alpha / lambda;
    let inner_tol = (opts.tol * ratio * 0.5).max(1e-15);
    let mut g = h.values().to_vec();
    let mut residual = f64::INFINITY;
    for iteration in 0..=opts.max_iter {
        let hg = hamiltonian(q, 1.0, &g);
        residual = g
            .iter()
            .zip(h.values())
            .zip(&hg)
            .fold(0.0, |m, ((gv, hv), d)| m.max((gv - hv - lambda * d).abs()));
        if residual <= opts.tol {
            return Ok(ResolventSolution {
                f: h.with_values(g),
                iterations: iteration,
                residual,
                path: SolverPath::PseudoResolvent,
            });
        }
        let mixed: Vec<f64> = g
            .iter()
            .zip(h.values())
            .map(|(gv, hv)| (1.0 - ratio) * gv + ratio * hv)
            .collect();
        let inner = fixed_point_resolvent(q, alpha, &h.with_values(mixed), inner_tol, opts.max_iter)?;
        g = inner.f.into_values();
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// `R(t/m)^m h`, which tends to `V(t)h` as `m` grows.
pub fn resolvent_iterate_semigroup(
    q: &Generator,
    t: f64,
    m: usize,
    h: &StateFunction,
    opts: SolverOptions,
) -> Result<StateFunction> {
    ensure_nonnegative("t", t)?;
    if m == 0 {
        return Err(Error::arg("m", "must be at least 1"));
    }
    q.check_fn(h)?;
    if t == 0.0 {
        return Ok(h.clone());
    }
    let step = t / m as f64;
    let mut f = h.clone();
    for _ in 0..m {
        f = resolvent_with(q, step, &f, opts)?;
    }
    Ok(f)
}

/// Value of the entropy-penalized objective at the tilted path law `Q^φ`:
///
/// ```text
/// [(I − λQ^φ)^{-1}(h − φ + λHφ)](x) + φ(x)
/// ```
///
/// This lower-bounds `R(λ)h(x)` and equals it at `φ = R(λ)h`.
pub fn variational_value(q: &Generator, lambda: f64, h: &StateFunction, phi: &StateFunction, x: usize) -> Result<f64> {
    ensure_positive("lambda", lambda)?;
    q.check_fn(h)?;
    q.check_fn(phi)?;
    if x >= q.size() {
        return Err(Error::arg("x", format!("state {x} out of range")));
    }
    let chain = tilted_generator(q, phi)?;
    let hphi = hamiltonian(q, 1.0, phi.values());
    let rhs: Vec<f64> = h
        .values()
        .iter()
        .zip(phi.values())
        .zip(&hphi)
        .map(|((hv, p), g)| hv - p + lambda * g)
        .collect();
    let solved = solve_shifted(chain.tilted().rates(), lambda, &rhs)?;
    Ok(solved[x] + phi.get(x))
}

/// `(‖R(λ)h₁ − R(λ)h₂‖, ‖h₁ − h₂‖)`.
pub fn resolvent_contraction_check(
    q: &Generator,
    lambda: f64,
    h1: &StateFunction,
    h2: &StateFunction,
    opts: SolverOptions,
) -> Result<(f64, f64)> {
    let r1 = resolvent_with(q, lambda, h1, opts)?;
    let r2 = resolvent_with(q, lambda, h2, opts)?;
    Ok((r1.sup_distance(&r2)?, h1.sup_distance(h2)?))
}

/// `‖R(β)h − R(α)((1 − α/β)R(β)h + (α/β)h)‖` for `0 < α < β`.
pub fn pseudo_resolvent_check(q: &Generator, alpha: f64, beta: f64, h: &StateFunction, opts: SolverOptions) -> Result<f64> {
    ensure_positive("alpha", alpha)?;
    if !(beta > alpha) || !beta.is_finite() {
        return Err(Error::arg("beta", format!("need 0 < alpha < beta, got alpha={alpha}, beta={beta}")));
    }
    let rb = resolvent_with(q, beta, h, opts)?;
    let ratio = alpha / beta;
    let mixed = rb.combine(1.0 - ratio, h, ratio)?;
    let ra = resolvent_with(q, alpha, &mixed, opts)?;
    rb.sup_distance(&ra)
}

/// One row of [`strong_continuity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityPoint {
    pub lambda: f64,
    /// `‖R(λ)h − h‖`.
    pub gap: f64,
    /// `λ‖H R(λ)h‖`, equal to the gap up to solver tolerance.
    pub scaled_h: f64,
}

/// Gap between `R(λ)h` and `h` for a positive, decreasing list of `λ`.
pub fn strong_continuity_check(
    q: &Generator,
    h: &StateFunction,
    lambdas: &[f64],
    opts: SolverOptions,
) -> Result<Vec<ContinuityPoint>> {
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::arg("lambdas", "must be strictly decreasing"));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let f = resolvent_with(q, lambda, h, opts)?;
            let hf = hamiltonian(q, 1.0, f.values());
            Ok(ContinuityPoint {
                lambda,
                gap: f.sup_distance(h)?,
                scaled_h: lambda * hf.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            })
        })
        .collect()
}
