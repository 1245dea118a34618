//! Relative entropy on finite spaces, Donsker–Varadhan duality, the chain
//! rule, path entropy of tilted chains and the entropy-controlled tail bound.

use std::fmt;
use std::ops::Add;

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::markov::{uniformized_action, Distribution, Generator, StateFunction};
use crate::nonlinear::hamiltonian;
use crate::quadrature::adaptive_simpson;
use crate::resolvent::tilted_generator;

/// Absolute tolerance of the time integral in [`path_relative_entropy`].
pub const PATH_QUADRATURE_TOL: f64 = 1e-10;

/// A relative entropy in `[0, +∞]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EntropyValue(f64);

impl EntropyValue {
    pub const ZERO: EntropyValue = EntropyValue(0.0);
    pub const INFINITE: EntropyValue = EntropyValue(f64::INFINITY);

    /// Rounds tiny negative values from cancellation up to zero.
    pub(crate) fn from_raw(v: f64) -> Self {
        EntropyValue(v.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Add for EntropyValue {
    type Output = EntropyValue;

    fn add(self, rhs: Self) -> Self {
        EntropyValue(self.0 + rhs.0)
    }
}

impl fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "inf")
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::SpaceMismatch { expected, found })
    }
}

fn kl(nu: &[f64], mu: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&p, &q) in nu.iter().zip(mu) {
        if p > 0.0 {
            if q <= 0.0 {
                return f64::INFINITY;
            }
            s += p * (p / q).ln();
        }
    }
    s
}

/// `S(ν | μ) = Σ ν log(ν/μ)`, with `0 log 0 = 0` and `+∞` when `ν ≪ μ` fails.
pub fn relative_entropy(nu: &Distribution, mu: &Distribution) -> Result<EntropyValue> {
    check_len(mu.len(), nu.len())?;
    Ok(EntropyValue::from_raw(kl(nu.mass(), mu.mass())))
}

/// `log Σ e^{f(x)} μ(x)`, shifted by the maximum of `f` over the support of `μ`.
pub fn dv_log_mgf(f: &StateFunction, mu: &Distribution) -> Result<f64> {
    check_len(mu.len(), f.len())?;
    Ok(log_mgf(f.values(), mu.mass()))
}

fn log_mgf(f: &[f64], mu: &[f64]) -> f64 {
    let m = f
        .iter()
        .zip(mu)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = f
        .iter()
        .zip(mu)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, &w)| w * (v - m).exp())
        .sum();
    m + s.ln()
}

/// The maximizer `ν* ∝ e^{f} μ` of `⟨f, ν⟩ − S(ν | μ)` and the attained value.
pub fn dv_optimal_tilt(f: &StateFunction, mu: &Distribution) -> Result<(Distribution, f64)> {
    check_len(mu.len(), f.len())?;
    let lse = log_mgf(f.values(), mu.mass());
    let mass: Vec<f64> = f
        .values()
        .iter()
        .zip(mu.mass())
        .map(|(&v, &w)| if w > 0.0 { w * (v - lse).exp() } else { 0.0 })
        .collect();
    let total: f64 = mass.iter().sum();
    let mass: Vec<f64> = mass.into_iter().map(|m| m / total).collect();
    let pairing: f64 = mass.iter().zip(f.values()).map(|(p, v)| p * v).sum();
    let value = pairing - kl(&mass, mu.mass());
    Ok((Distribution::on_unchecked(mu.space_arc().clone(), mass), value))
}

/// A probability law on a product space `X × Y`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl JointDistribution {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("joint", "both factors need at least one state"));
        }
        check_len(rows * cols, mass.len())?;
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::arg("joint", "entries must be finite and >= 0"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > crate::markov::MASS_TOL {
            return Err(Error::arg("joint", format!("entries sum to {total}, expected 1")));
        }
        Ok(Self { rows, cols, mass })
    }

    pub fn from_weights(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::arg("joint", "weights need a positive finite total"));
        }
        Self::new(rows, cols, weights.into_iter().map(|w| w / total).collect())
    }

    /// `ν₁ ⊗ ν₂`.
    pub fn product(first: &Distribution, second: &Distribution) -> Self {
        let mass = first
            .mass()
            .iter()
            .flat_map(|a| second.mass().iter().map(move |b| a * b))
            .collect();
        Self {
            rows: first.len(),
            cols: second.len(),
            mass,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn row(&self, x: usize) -> &[f64] {
        &self.mass[x * self.cols..(x + 1) * self.cols]
    }

    pub fn first_marginal(&self) -> Vec<f64> {
        (0..self.rows).map(|x| self.row(x).iter().sum()).collect()
    }
}

/// The two terms of the entropy chain rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRule {
    /// `S(ν₁ | μ₁)` on the first factor.
    pub marginal: EntropyValue,
    /// `Σ_x ν₁(x) S(ν(·|x) | μ(·|x))`.
    pub conditional: EntropyValue,
}

impl ChainRule {
    pub fn total(&self) -> EntropyValue {
        self.marginal + self.conditional
    }
}

/// Splits `S(ν | μ)` on `X × Y` into the marginal entropy on `X` and the
/// averaged entropy of the conditional kernels.
pub fn entropy_chain_rule(nu: &JointDistribution, mu: &JointDistribution) -> Result<ChainRule> {
    if nu.shape() != mu.shape() {
        let (a, b) = (nu.mass.len(), mu.mass.len());
        return Err(Error::SpaceMismatch { expected: b, found: a });
    }
    let nu1 = nu.first_marginal();
    let mu1 = mu.first_marginal();
    let marginal = kl(&nu1, &mu1);
    let mut conditional = 0.0;
    for x in 0..nu.rows {
        if nu1[x] <= 0.0 {
            continue;
        }
        if mu1[x] <= 0.0 {
            conditional = f64::INFINITY;
            break;
        }
        let nu_k: Vec<f64> = nu.row(x).iter().map(|v| v / nu1[x]).collect();
        let mu_k: Vec<f64> = mu.row(x).iter().map(|v| v / mu1[x]).collect();
        conditional += nu1[x] * kl(&nu_k, &mu_k);
    }
    Ok(ChainRule {
        marginal: EntropyValue::from_raw(marginal),
        conditional: EntropyValue::from_raw(conditional),
    })
}

/// `S(ν | μ)` for joint laws, computed directly on the product space.
pub fn joint_relative_entropy(nu: &JointDistribution, mu: &JointDistribution) -> Result<EntropyValue> {
    check_len(mu.mass.len(), nu.mass.len())?;
    Ok(EntropyValue::from_raw(kl(&nu.mass, &mu.mass)))
}

/// `S_t(Q^φ | P_x)` for the chain tilted by `φ` and started at `x`:
///
/// ```text
/// E[φ(X_t)] − φ(x) − ∫_0^t E[Hφ(X_s)] ds
/// ```
///
/// with expectations under the tilted generator. The time integral uses
/// adaptive Simpson to [`PATH_QUADRATURE_TOL`].
pub fn path_relative_entropy(q: &Generator, phi: &StateFunction, x: usize, t: f64) -> Result<EntropyValue> {
    ensure_nonnegative("t", t)?;
    if x >= q.size() {
        return Err(Error::arg("x", format!("state {x} out of range")));
    }
    let chain = tilted_generator(q, phi)?;
    let tilted = chain.tilted();
    if t == 0.0 {
        return Ok(EntropyValue::ZERO);
    }
    let hphi = hamiltonian(q, 1.0, phi.values());
    if hphi.iter().all(|&v| v == 0.0) {
        return Ok(EntropyValue::ZERO);
    }
    let terminal = uniformized_action(tilted, t, phi.values())[x];
    let mut running = |s: f64| uniformized_action(tilted, s, &hphi)[x];
    let integral = adaptive_simpson(&mut running, 0.0, t, PATH_QUADRATURE_TOL);
    Ok(EntropyValue::from_raw(terminal - phi.get(x) - integral))
}

/// Additive slack `ε / (e · r · max(M, ε))` carried by [`tilted_tail_bound`].
pub fn tail_bound_slack(r: f64, budget: f64, eps: f64) -> f64 {
    eps / (std::f64::consts::E * r * budget.max(eps))
}

/// Bound on `ν(Kᶜ)` for any `ν` with `r⁻¹ S(ν | μ) ≤ M`:
///
/// ```text
/// ε + μ(Kᶜ) e^{rM/ε} + ε / (e · r · max(M, ε))
/// ```
///
/// The last term absorbs the negative part of `t log t` on the region where
/// `dν/dμ` falls below the threshold `e^{rM/ε}`.
pub fn tilted_tail_bound(tail_mass: f64, r: f64, budget: f64, eps: f64) -> Result<f64> {
    ensure_positive("eps", eps)?;
    ensure_positive("r", r)?;
    ensure_nonnegative("budget", budget)?;
    if !(0.0..=1.0).contains(&tail_mass) {
        return Err(Error::arg("tail_mass", format!("must lie in [0, 1], got {tail_mass}")));
    }
    let amplified = if tail_mass == 0.0 {
        0.0
    } else {
        tail_mass * (r * budget / eps).exp()
    };
    Ok(eps + amplified + tail_bound_slack(r, budget, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::transition_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(v: Vec<f64>) -> Distribution {
        Distribution::from_mass(v).unwrap()
    }

    fn random_dist(rng: &mut impl Rng, n: usize) -> Distribution {
        Distribution::from_weights((0..n).map(|_| rng.random::<f64>() + 1e-3).collect()).unwrap()
    }

    #[test]
    fn relative_entropy_examples() {
        let mu = dist(vec![0.5, 0.5]);
        assert_eq!(relative_entropy(&mu, &mu).unwrap(), EntropyValue::ZERO);
        let s = relative_entropy(&dist(vec![0.25, 0.75]), &mu).unwrap();
        let oracle = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
        assert!((s.value() - oracle).abs() < 1e-15);
        assert!((s.value() - 0.13081204).abs() < 1e-8);
        let inf = relative_entropy(&dist(vec![1.0, 0.0]), &dist(vec![0.0, 1.0])).unwrap();
        assert!(!inf.is_finite());
        assert!(relative_entropy(&mu, &dist(vec![1.0])).is_err());
    }

    #[test]
    fn log_mgf_examples() {
        let mu = dist(vec![0.5, 0.5]);
        let c = StateFunction::from_values(vec![3.25, 3.25]).unwrap();
        assert!((dv_log_mgf(&c, &mu).unwrap() - 3.25).abs() < 1e-15);
        let f = StateFunction::from_values(vec![0.0, 3f64.ln()]).unwrap();
        assert!((dv_log_mgf(&f, &mu).unwrap() - 2f64.ln()).abs() < 1e-15);
        for t in [0.1, 1.0, 30.0, 400.0] {
            let f = StateFunction::from_values(vec![-t, t]).unwrap();
            let exact = t + (0.5 * (1.0 + (-2.0 * t).exp())).ln();
            assert!((dv_log_mgf(&f, &mu).unwrap() - exact).abs() < 1e-12 * t.max(1.0));
        }
    }

    #[test]
    fn optimal_tilt_examples() {
        let mu = dist(vec![0.5, 0.5]);
        let c = StateFunction::from_values(vec![2.0, 2.0]).unwrap();
        let (nu, v) = dv_optimal_tilt(&c, &mu).unwrap();
        assert!((nu.mass()[0] - 0.5).abs() < 1e-15 && (v - 2.0).abs() < 1e-15);
        let f = StateFunction::from_values(vec![0.0, 3f64.ln()]).unwrap();
        let (nu, v) = dv_optimal_tilt(&f, &mu).unwrap();
        assert!((nu.mass()[0] - 0.25).abs() < 1e-15 && (nu.mass()[1] - 0.75).abs() < 1e-15);
        assert!((v - 2f64.ln()).abs() < 1e-12);
        let skew = dist(vec![1e-9, 1.0 - 1e-9]);
        let f = StateFunction::from_values(vec![10.0, 0.0]).unwrap();
        let (nu, v) = dv_optimal_tilt(&f, &skew).unwrap();
        let e10 = 10f64.exp();
        let expect = e10 * 1e-9 / (e10 * 1e-9 + (1.0 - 1e-9));
        assert!((nu.mass()[0] - expect).abs() < 1e-15);
        assert!((v - dv_log_mgf(&f, &skew).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b, c, d) = (
            random_dist(&mut rng, 3),
            random_dist(&mut rng, 4),
            random_dist(&mut rng, 3),
            random_dist(&mut rng, 4),
        );
        let nu = JointDistribution::product(&a, &b);
        let mu = JointDistribution::product(&c, &d);
        let split = entropy_chain_rule(&nu, &mu).unwrap();
        assert!((split.marginal.value() - relative_entropy(&a, &c).unwrap().value()).abs() < 1e-14);
        assert!((split.conditional.value() - relative_entropy(&b, &d).unwrap().value()).abs() < 1e-14);
        let same = entropy_chain_rule(&nu, &nu).unwrap();
        assert_eq!((same.marginal, same.conditional), (EntropyValue::ZERO, EntropyValue::ZERO));
    }

    #[test]
    fn chain_rule_conventions() {
        // ν has no mass on row 1, so μ's row 1 is irrelevant.
        let nu = JointDistribution::new(2, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let mu = JointDistribution::new(2, 2, vec![0.25, 0.25, 0.5, 0.0]).unwrap();
        let split = entropy_chain_rule(&nu, &mu).unwrap();
        assert_eq!(split.conditional, EntropyValue::ZERO);
        assert!((split.marginal.value() - 2f64.ln()).abs() < 1e-15);
        // μ₁(x) = 0 where ν₁(x) > 0.
        let mu = JointDistribution::new(2, 2, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let split = entropy_chain_rule(&nu, &mu).unwrap();
        assert!(!split.conditional.is_finite() && !split.marginal.is_finite());
        assert!(!joint_relative_entropy(&nu, &mu).unwrap().is_finite());
        let other = JointDistribution::new(1, 4, vec![0.25; 4]).unwrap();
        assert!(entropy_chain_rule(&nu, &other).is_err());
    }

    /// Entropy of the law of `(X_0, X_h, ..., X_{kh})` under the tilted chain
    /// against the base chain, summed step by step through the chain rule.
    fn skeleton_entropy(q: &Generator, phi: &StateFunction, x: usize, t: f64, h: f64) -> f64 {
        let tilted = tilted_generator(q, phi).unwrap();
        let pq = transition_matrix(tilted.tilted(), h).unwrap();
        let pp = transition_matrix(q, h).unwrap();
        let n = q.size();
        let steps = (t / h).round() as usize;
        let mut law = vec![0.0; n];
        law[x] = 1.0;
        let step_kl: Vec<f64> = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| pq[(a, b)] > 0.0)
                    .map(|b| pq[(a, b)] * (pq[(a, b)] / pp[(a, b)]).ln())
                    .sum()
            })
            .collect();
        let mut total = 0.0;
        for _ in 0..steps {
            total += law.iter().zip(&step_kl).map(|(p, k)| p * k).sum::<f64>();
            law = (0..n).map(|b| (0..n).map(|a| law[a] * pq[(a, b)]).sum()).collect();
        }
        total
    }

    #[test]
    fn path_entropy_examples() {
        let q = Generator::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        let c = StateFunction::for_generator(&q, vec![1.0, 1.0]).unwrap();
        assert_eq!(path_relative_entropy(&q, &c, 0, 3.0).unwrap(), EntropyValue::ZERO);
        let phi = StateFunction::for_generator(&q, vec![0.0, 2f64.ln()]).unwrap();
        assert_eq!(path_relative_entropy(&q, &phi, 0, 0.0).unwrap(), EntropyValue::ZERO);
        let s = path_relative_entropy(&q, &phi, 0, 1.0).unwrap();
        let oracle = skeleton_entropy(&q, &phi, 0, 1.0, 1e-3);
        assert!(s.value() > 0.0);
        assert!((s.value() - oracle).abs() < 1e-3, "{} vs {}", s.value(), oracle);
        assert!(path_relative_entropy(&q, &phi, 0, -1.0).is_err());
    }

    #[test]
    fn path_entropy_is_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let q = Generator::random(&mut rng, 4, 1.5).unwrap();
            let phi = StateFunction::for_generator(&q, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let mut last = 0.0;
            for k in 1..=10 {
                let s = path_relative_entropy(&q, &phi, 1, 0.25 * k as f64).unwrap().value();
                assert!(s >= last - 1e-9, "{s} < {last}");
                last = s;
            }
        }
    }

    #[test]
    fn tail_bound_examples() {
        let slack = tail_bound_slack(10.0, 0.0, 0.1);
        assert!((tilted_tail_bound(0.01, 10.0, 0.0, 0.1).unwrap() - (0.11 + slack)).abs() < 1e-15);
        assert!(tilted_tail_bound(0.0, 3.0, 2.0, 0.2).unwrap() <= 0.2 + tail_bound_slack(3.0, 2.0, 0.2));
        assert!(tilted_tail_bound(0.1, 1.0, 1.0, 0.0).is_err());
        assert!(tilted_tail_bound(1.5, 1.0, 1.0, 0.1).is_err());
        let a = tilted_tail_bound(0.01, 2.0, 0.5, 0.1).unwrap();
        assert!(tilted_tail_bound(0.02, 2.0, 0.5, 0.1).unwrap() > a);
        assert!(tilted_tail_bound(0.01, 2.0, 0.6, 0.1).unwrap() > a);
    }

    #[test]
    fn tail_bound_holds_for_sampled_tilts() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 500 {
            let n = 20;
            let mu = random_dist(&mut rng, n);
            let r = rng.random_range(0.5..20.0);
            let budget = rng.random_range(0.0..2.0);
            let eps = rng.random_range(0.01..0.5);
            let scale = rng.random_range(0.0..5.0);
            let f = StateFunction::from_values((0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap();
            let (nu, _) = dv_optimal_tilt(&f, &mu).unwrap();
            if relative_entropy(&nu, &mu).unwrap().value() / r > budget {
                continue;
            }
            let tail: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.3).collect();
            let mu_tail: f64 = tail.iter().map(|&i| mu.mass()[i]).sum::<f64>().min(1.0);
            let nu_tail: f64 = tail.iter().map(|&i| nu.mass()[i]).sum();
            assert!(nu_tail <= tilted_tail_bound(mu_tail, r, budget, eps).unwrap() + 1e-15);
            checked += 1;
        }
    }
}
