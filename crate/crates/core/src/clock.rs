//! Exponential clocks `τ_λ` (mean `λ`) with Gauss–Laguerre quadrature, the
//! two exponential-clock identities used by the resolvent, and a small
//! algebra of time laws (point masses, exponentials, mixtures,
//! convolutions) for the `T⁺` operator.

use std::sync::{Arc, OnceLock};

use crate::error::{ensure_positive, Error, Result};
use crate::quadrature::{gauss_laguerre, integrate_interval};

pub const DEFAULT_ORDER: usize = 64;

/// Exponential law with mean `λ`, discretized by an `order`-point
/// Gauss–Laguerre rule mapped to the density `λ⁻¹ e^{-t/λ}`.
#[derive(Debug, Clone)]
pub struct ExpClock {
    mean: f64,
    rule: Arc<(Vec<f64>, Vec<f64>)>,
}

fn standard_rule(order: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static DEFAULT: OnceLock<Arc<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let build = |order| {
        let (nodes, mut weights) = gauss_laguerre(order);
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Arc::new((nodes, weights))
    };
    if order == DEFAULT_ORDER {
        Arc::clone(DEFAULT.get_or_init(|| build(DEFAULT_ORDER)))
    } else {
        build(order)
    }
}

impl ExpClock {
    pub fn new(mean: f64) -> Result<Self> {
        Self::with_order(mean, DEFAULT_ORDER)
    }

    pub fn with_order(mean: f64, order: usize) -> Result<Self> {
        ensure_positive("lambda", mean)?;
        if order == 0 {
            return Err(Error::arg("order", "must be at least 1"));
        }
        Ok(Self {
            mean,
            rule: standard_rule(order),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn order(&self) -> usize {
        self.rule.0.len()
    }

    /// Quadrature times `λ x_i`.
    pub fn nodes(&self) -> Vec<f64> {
        self.rule.0.iter().map(|x| self.mean * x).collect()
    }

    /// Normalized weights; they sum to one.
    pub fn weights(&self) -> &[f64] {
        &self.rule.1
    }

    /// `∫ z dτ_λ` for `z` sampled at [`ExpClock::nodes`].
    pub fn exp_integral(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.order() {
            return Err(Error::arg(
                "samples",
                format!("expected {} samples, got {}", self.order(), samples.len()),
            ));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg("samples", format!("non-finite sample at node {i}")));
        }
        Ok(samples.iter().zip(self.weights()).map(|(z, w)| z * w).sum())
    }

    /// `∫ z dτ_λ` for a function `z`.
    pub fn integrate(&self, z: impl Fn(f64) -> f64) -> Result<f64> {
        let samples: Vec<f64> = self.nodes().into_iter().map(z).collect();
        self.exp_integral(&samples)
    }
}

/// See [`ExpClock::exp_integral`].
pub fn exp_integral(clock: &ExpClock, samples: &[f64]) -> Result<f64> {
    clock.exp_integral(samples)
}

/// Both sides of an exponential-clock identity and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Result<Self> {
        if !(lhs.is_finite() && rhs.is_finite()) {
            return Err(Error::arg("z", "quadrature produced a non-finite value"));
        }
        Ok(Self {
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
        })
    }
}

/// `λ ∫ z dτ_λ` against `∫ (∫_0^t z(s) ds) τ_λ(dt)`.
///
/// The outer integral uses the clock's Laguerre rule; the inner one over
/// `[0, t]` uses composite Gauss–Legendre panels.
pub fn check_integration_by_parts(clock: &ExpClock, z: impl Fn(f64) -> f64) -> Result<IdentityCheck> {
    let lhs = clock.mean() * clock.integrate(&z)?;
    let rhs = clock.integrate(|t| integrate_interval(&z, 0.0, t, 0.5))?;
    IdentityCheck::new(lhs, rhs)
}

/// `∫ z dτ_β` against
/// `(α/β) ∫ z dτ_α + (1 − α/β) ∫∫ z(s + u) τ_β(du) τ_α(ds)`, `0 < α < β`.
pub fn check_convolution_split(alpha: f64, beta: f64, z: impl Fn(f64) -> f64) -> Result<IdentityCheck> {
    check_convolution_split_with_order(alpha, beta, z, DEFAULT_ORDER)
}

pub fn check_convolution_split_with_order(
    alpha: f64,
    beta: f64,
    z: impl Fn(f64) -> f64,
    order: usize,
) -> Result<IdentityCheck> {
    ensure_positive("alpha", alpha)?;
    if !(beta > alpha) || !beta.is_finite() {
        return Err(Error::arg("beta", format!("need 0 < alpha < beta, got alpha={alpha}, beta={beta}")));
    }
    let clock_a = ExpClock::with_order(alpha, order)?;
    let clock_b = ExpClock::with_order(beta, order)?;
    let ratio = alpha / beta;
    let lhs = clock_b.integrate(&z)?;
    let direct = clock_a.integrate(&z)?;
    let nested = clock_a.integrate(|s| {
        clock_b
            .nodes()
            .iter()
            .zip(clock_b.weights())
            .map(|(u, w)| w * z(s + u))
            .sum()
    })?;
    IdentityCheck::new(lhs, ratio * direct + (1.0 - ratio) * nested)
}

/// A probability law on `[0, ∞)` built from point masses and exponential
/// clocks by finite mixtures and convolutions.
#[derive(Debug, Clone)]
pub enum TimeLaw {
    Point(f64),
    Exponential(ExpClock),
    Mixture(Vec<(f64, TimeLaw)>),
    Convolution(Box<TimeLaw>, Box<TimeLaw>),
}

impl TimeLaw {
    pub fn exponential(mean: f64) -> Result<Self> {
        Ok(TimeLaw::Exponential(ExpClock::new(mean)?))
    }

    pub fn convolve(self, other: TimeLaw) -> Self {
        TimeLaw::Convolution(Box::new(self), Box::new(other))
    }

    /// Discrete atoms `(time, weight)` sorted by time, with equal times merged.
    pub fn atoms(&self) -> Result<Vec<(f64, f64)>> {
        let mut atoms = self.raw_atoms()?;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (t, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == t => last.1 += w,
                _ => merged.push((t, w)),
            }
        }
        Ok(merged)
    }

    fn raw_atoms(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            TimeLaw::Point(t) => {
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(Error::arg("clock", format!("point mass at invalid time {t}")));
                }
                Ok(vec![(*t, 1.0)])
            }
            TimeLaw::Exponential(clock) => Ok(clock
                .nodes()
                .into_iter()
                .zip(clock.weights().iter().copied())
                .collect()),
            TimeLaw::Mixture(parts) => {
                if parts.is_empty() {
                    return Err(Error::arg("clock", "empty mixture"));
                }
                let total: f64 = parts.iter().map(|(w, _)| w).sum();
                if parts.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::arg("clock", "mixture weights must be nonnegative and sum to 1"));
                }
                let mut out = Vec::new();
                for (w, law) in parts {
                    out.extend(law.raw_atoms()?.into_iter().map(|(t, v)| (t, w * v)));
                }
                Ok(out)
            }
            TimeLaw::Convolution(a, b) => {
                let a = a.raw_atoms()?;
                let b = b.raw_atoms()?;
                let mut out = Vec::with_capacity(a.len() * b.len());
                for &(s, ws) in &a {
                    for &(u, wu) in &b {
                        out.push((s + u, ws * wu));
                    }
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_a_probability_rule() {
        let clock = ExpClock::new(0.7).unwrap();
        assert_eq!(clock.order(), 64);
        let total: f64 = clock.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(clock.weights().iter().all(|&w| w > 0.0));
        assert!(ExpClock::new(0.0).is_err());
        assert!(ExpClock::new(-1.0).is_err());
    }

    #[test]
    fn exp_integral_examples() {
        let clock = ExpClock::new(1.7).unwrap();
        assert!((clock.integrate(|_| 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((clock.integrate(|t| t).unwrap() - 1.7).abs() < 1e-12);
        let half = ExpClock::new(0.5).unwrap();
        let v = half.integrate(|t| (-t).exp()).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-13);
        assert!(clock.exp_integral(&[1.0; 3]).is_err());
        let mut bad = vec![0.0; 64];
        bad[3] = f64::NAN;
        assert!(clock.exp_integral(&bad).is_err());
    }

    #[test]
    fn integration_by_parts_examples() {
        let clock = ExpClock::new(2.3).unwrap();
        let c = check_integration_by_parts(&clock, |_| 1.0).unwrap();
        assert!((c.lhs - 2.3).abs() < 1e-12 && c.residual < 1e-12);
        let unit = ExpClock::new(1.0).unwrap();
        let c = check_integration_by_parts(&unit, |t| t).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-12 && (c.rhs - 1.0).abs() < 1e-12);
        assert!(c.residual <= 1e-8);
        let c = check_integration_by_parts(&unit, |t| (-t).exp()).unwrap();
        assert!((c.lhs - 0.5).abs() < 1e-12 && (c.rhs - 0.5).abs() < 1e-12);
        assert!(c.residual <= 1e-10);
    }

    #[test]
    fn convolution_split_examples() {
        let c = check_convolution_split(0.4, 1.1, |_| 1.0).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-13 && c.residual < 1e-13);
        let c = check_convolution_split(0.5, 2.0, |t| (-t).exp()).unwrap();
        assert!((c.lhs - 1.0 / 3.0).abs() < 1e-12);
        assert!(c.residual <= 1e-9);
        let c = check_convolution_split(1.0, 3.0, |t| t).unwrap();
        assert!((c.lhs - 3.0).abs() < 1e-11 && (c.rhs - 3.0).abs() < 1e-11);
        assert!(c.residual <= 1e-8);
        assert!(check_convolution_split(2.0, 2.0, |t| t).is_err());
        assert!(check_convolution_split(3.0, 2.0, |t| t).is_err());
    }

    #[test]
    fn time_law_atoms() {
        let law = TimeLaw::Mixture(vec![
            (0.25, TimeLaw::Point(1.0)),
            (0.75, TimeLaw::Point(1.0).convolve(TimeLaw::Point(0.5))),
        ]);
        assert_eq!(law.atoms().unwrap(), vec![(1.0, 0.25), (1.5, 0.75)]);
        let erlang = TimeLaw::exponential(1.0)
            .unwrap()
            .convolve(TimeLaw::exponential(1.0).unwrap());
        let atoms = erlang.atoms().unwrap();
        let mass: f64 = atoms.iter().map(|a| a.1).sum();
        let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!((mean - 2.0).abs() < 1e-10);
        assert!(TimeLaw::Point(-1.0).atoms().is_err());
        assert!(TimeLaw::Mixture(vec![(0.5, TimeLaw::Point(1.0))]).atoms().is_err());
    }
}
