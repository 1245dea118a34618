//! The nonlinear generator `Hf = e^{-f} Q e^{f}`, its speed-`r` version
//! `H[r]f = r⁻¹ e^{-rf} Q e^{rf}`, the log-Laplace semigroup
//! `V(t)f = log e^{tQ} e^{f}` with its scaled form, and `T⁺(τ)h = ∫ V(t)h τ(dt)`.

use crate::clock::TimeLaw;
use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::markov::{semigroup_path, uniformized_action, Generator, StateFunction};

/// `(H[r]f)(x) = r⁻¹ Σ_{y≠x} Q(x,y) (e^{r(f(y)−f(x))} − 1)`.
///
/// Writing the sum without the diagonal makes constants map to exactly zero.
pub(crate) fn hamiltonian(q: &Generator, r: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let rates = q.rates();
    (0..n)
        .map(|x| {
            let mut s = 0.0;
            for y in 0..n {
                let rate = rates[(x, y)];
                if y != x && rate > 0.0 {
                    s += rate * (r * (f[y] - f[x])).exp_m1();
                }
            }
            s / r
        })
        .collect()
}

/// `Hf = e^{-f} Q e^{f}`.
pub fn apply_h(q: &Generator, f: &StateFunction) -> Result<StateFunction> {
    q.check_fn(f)?;
    Ok(f.with_values(hamiltonian(q, 1.0, f.values())))
}

/// `H[r]f = r⁻¹ e^{-rf} Q e^{rf}`.
pub fn apply_h_scaled(q: &Generator, r: f64, f: &StateFunction) -> Result<StateFunction> {
    ensure_positive("r", r)?;
    q.check_fn(f)?;
    Ok(f.with_values(hamiltonian(q, r, f.values())))
}

/// `r⁻¹ log e^{tQ} e^{rf}` evaluated with a max shift so that `e^{r(f − max f)} ≤ 1`.
pub(crate) fn log_laplace(q: &Generator, r: f64, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = f.iter().map(|v| (r * (v - m)).exp()).collect();
    let evolved = uniformized_action(q, t, &shifted);
    finish_log(m, r, &evolved)
}

fn finish_log(m: f64, r: f64, evolved: &[f64]) -> Result<Vec<f64>> {
    if let Some(x) = evolved.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::arg(
            "f",
            format!("exponential moment underflows at state {x}; oscillation of r·f is too large for this chain"),
        ));
    }
    Ok(evolved.iter().map(|w| m + w.ln() / r).collect())
}

/// `V(t)f = log e^{tQ} e^{f}`.
pub fn nonlinear_semigroup(q: &Generator, t: f64, f: &StateFunction) -> Result<StateFunction> {
    nonlinear_semigroup_scaled(q, 1.0, t, f)
}

/// `V_r(t)f = r⁻¹ log e^{tQ} e^{rf}`.
pub fn nonlinear_semigroup_scaled(q: &Generator, r: f64, t: f64, f: &StateFunction) -> Result<StateFunction> {
    ensure_positive("r", r)?;
    ensure_nonnegative("t", t)?;
    q.check_fn(f)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(f.with_values(log_laplace(q, r, t, f.values())?))
}

/// `T⁺(τ)h = ∫ V(t)h τ(dt)`, integrated over the atoms of `law`.
pub fn t_plus(q: &Generator, law: &TimeLaw, h: &StateFunction) -> Result<StateFunction> {
    q.check_fn(h)?;
    let atoms = law.atoms()?;
    let m = h.max();
    let shifted: Vec<f64> = h.values().iter().map(|v| (v - m).exp()).collect();
    let times: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let path = semigroup_path(q, &times, &shifted);
    let mut out = vec![0.0; h.len()];
    for ((_, weight), evolved) in atoms.iter().zip(&path) {
        let values = finish_log(m, 1.0, evolved)?;
        for (o, v) in out.iter_mut().zip(values) {
            *o += weight * v;
        }
    }
    Ok(h.with_values(out))
}
