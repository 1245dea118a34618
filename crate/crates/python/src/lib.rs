//! Python bindings: generators, the nonlinear semigroup and resolvent,
//! entropy functionals and the birth–death rate tools.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nlsemigroup::cli::{named_function, run};
use nlsemigroup::clock::TimeLaw;
use nlsemigroup::config::ExperimentConfig;
use nlsemigroup::ldp::{self, DensityModel, PathSpec, ScaledFamily};
use nlsemigroup::resolvent::{fixed_point_resolvent, SolverOptions};
use nlsemigroup::{entropy, markov, nonlinear, resolvent, Distribution, Error, StateFunction, StateSpace};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotConverged { .. } | Error::Singular => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for Result<T, Error> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A continuous-time Markov generator on a finite labelled state space.
#[pyclass(name = "Generator", module = "nlsemigroup", frozen)]
struct PyGenerator {
    inner: nlsemigroup::Generator,
}

impl PyGenerator {
    fn func(&self, values: Vec<f64>) -> PyResult<StateFunction> {
        StateFunction::for_generator(&self.inner, values).py()
    }
}

#[pymethods]
impl PyGenerator {
    #[new]
    #[pyo3(signature = (rates, labels = None))]
    fn new(rates: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> PyResult<Self> {
        let n = rates.len();
        if rates.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("rates must be a square list of lists"));
        }
        let space = match labels {
            Some(l) => StateSpace::new(l),
            None => StateSpace::indexed(n),
        }
        .py()?;
        let matrix = DMatrix::from_fn(n, n, |i, j| rates[i][j]);
        Ok(Self {
            inner: nlsemigroup::Generator::new(space, matrix).py()?,
        })
    }

    /// Random generator with off-diagonal rates uniform on `[0, max_rate]`.
    #[staticmethod]
    #[pyo3(signature = (states, max_rate = 1.0, seed = 0))]
    fn random(states: usize, max_rate: f64, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: nlsemigroup::Generator::random(&mut rng, states, max_rate).py()?,
        })
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.space().labels().to_vec()
    }

    fn rates(&self) -> Vec<Vec<f64>> {
        rows(self.inner.rates())
    }

    fn transition_matrix(&self, t: f64) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&markov::transition_matrix(&self.inner, t).py()?))
    }

    fn semigroup(&self, t: f64, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.func(u)?;
        Ok(markov::semigroup_apply(&self.inner, t, &u).py()?.into_values())
    }

    fn linear_resolvent(&self, lam: f64, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.func(u)?;
        Ok(markov::linear_resolvent_apply(&self.inner, lam, &u).py()?.into_values())
    }

    /// `Hf = e^{-f} Q e^{f}`.
    fn apply_h(&self, f: Vec<f64>) -> PyResult<Vec<f64>> {
        let f = self.func(f)?;
        Ok(nonlinear::apply_h(&self.inner, &f).py()?.into_values())
    }

    /// `V(t)f = log e^{tQ} e^{f}`.
    fn nonlinear_semigroup(&self, t: f64, f: Vec<f64>) -> PyResult<Vec<f64>> {
        let f = self.func(f)?;
        Ok(nonlinear::nonlinear_semigroup(&self.inner, t, &f).py()?.into_values())
    }

    /// Solves `f − λHf = h`; returns `(f, residual, iterations)`.
    #[pyo3(signature = (lam, h, tol = resolvent::DEFAULT_TOL, max_iter = resolvent::DEFAULT_MAX_ITER))]
    fn resolvent(&self, lam: f64, h: Vec<f64>, tol: f64, max_iter: usize) -> PyResult<(Vec<f64>, f64, usize)> {
        let h = self.func(h)?;
        let sol = fixed_point_resolvent(&self.inner, lam, &h, tol, max_iter).py()?;
        Ok((sol.f.into_values(), sol.residual, sol.iterations))
    }

    /// `R(t/m)^m h`.
    fn resolvent_iterate(&self, t: f64, m: usize, h: Vec<f64>) -> PyResult<Vec<f64>> {
        let h = self.func(h)?;
        Ok(resolvent::resolvent_iterate_semigroup(&self.inner, t, m, &h, SolverOptions::default())
            .py()?
            .into_values())
    }

    fn variational_value(&self, lam: f64, h: Vec<f64>, phi: Vec<f64>, x: usize) -> PyResult<f64> {
        let (h, phi) = (self.func(h)?, self.func(phi)?);
        resolvent::variational_value(&self.inner, lam, &h, &phi, x).py()
    }

    /// `∫ V(t)h τ(dt)` for an exponential clock of the given mean.
    fn t_plus(&self, mean: f64, h: Vec<f64>) -> PyResult<Vec<f64>> {
        let h = self.func(h)?;
        let law = TimeLaw::exponential(mean).py()?;
        Ok(nonlinear::t_plus(&self.inner, &law, &h).py()?.into_values())
    }

    /// Rates of the chain tilted by `phi`.
    fn tilted(&self, phi: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let phi = self.func(phi)?;
        Ok(rows(resolvent::tilted_generator(&self.inner, &phi).py()?.tilted().rates()))
    }

    fn path_relative_entropy(&self, phi: Vec<f64>, x: usize, t: f64) -> PyResult<f64> {
        let phi = self.func(phi)?;
        Ok(entropy::path_relative_entropy(&self.inner, &phi, x, t).py()?.value())
    }

    fn __repr__(&self) -> String {
        format!("Generator(size={})", self.inner.size())
    }
}

/// `S(ν | μ)`; `inf` when `ν` is not absolutely continuous.
#[pyfunction]
fn relative_entropy(nu: Vec<f64>, mu: Vec<f64>) -> PyResult<f64> {
    let (nu, mu) = (Distribution::from_mass(nu).py()?, Distribution::from_mass(mu).py()?);
    Ok(entropy::relative_entropy(&nu, &mu).py()?.value())
}

/// `log Σ μ(x) e^{f(x)}`.
#[pyfunction]
fn dv_log_mgf(f: Vec<f64>, mu: Vec<f64>) -> PyResult<f64> {
    let (f, mu) = (StateFunction::from_values(f).py()?, Distribution::from_mass(mu).py()?);
    entropy::dv_log_mgf(&f, &mu).py()
}

/// Runs a TOML experiment (same grammar as the command line) and returns
/// the rendered table.
#[pyfunction]
fn run_config(text: &str) -> PyResult<String> {
    let config = ExperimentConfig::from_toml(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = run(&config).map_err(|e| match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    })?;
    Ok(report.render(config.format.unwrap_or_default()))
}

/// Birth–death density chains on `{0, 1/n, …, 1}` at speed `n`.
#[pyclass(name = "DensityFamily", module = "nlsemigroup", frozen)]
struct PyDensityFamily {
    inner: ScaledFamily,
}

fn test_function(name: &str) -> PyResult<fn(f64) -> f64> {
    named_function(name).ok_or_else(|| PyValueError::new_err(format!("unknown function `{name}` (const, x, x2, sin2pi)")))
}

#[pymethods]
impl PyDensityFamily {
    /// Rates `n(1 − x)` up and `n x` down.
    #[staticmethod]
    fn ehrenfest(n_list: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: ldp::build_density_family(&DensityModel::ehrenfest(), &n_list).py()?,
        })
    }

    /// Polynomial birth and death rates, coefficients in increasing degree.
    #[staticmethod]
    fn birth_death(birth: Vec<f64>, death: Vec<f64>, n_list: Vec<usize>) -> PyResult<Self> {
        let model = DensityModel::polynomial(birth, death).py()?;
        Ok(Self {
            inner: ldp::build_density_family(&model, &n_list).py()?,
        })
    }

    #[getter]
    fn level_sizes(&self) -> Vec<usize> {
        self.inner.level_sizes()
    }

    fn generator(&self, n: usize) -> PyResult<PyGenerator> {
        Ok(PyGenerator {
            inner: self.inner.level(n).py()?.generator().clone(),
        })
    }

    fn finite_dim_rate(&self, n: usize, t: f64, x: f64, y: f64) -> PyResult<f64> {
        ldp::finite_dim_rate(&self.inner, n, t, x, y).py()
    }

    /// `(value, theta)` of the indicator-family lower bound.
    fn conditional_rate(&self, n: usize, t: f64, x: f64, y: f64, c_max: f64) -> PyResult<(f64, Option<f64>)> {
        let r = ldp::conditional_rate_legendre(&self.inner, n, t, x, y, c_max).py()?;
        Ok((r.value, r.theta))
    }

    /// Partition sums at depths `0..=depth`; the initial cost is
    /// `initial_scale·(x − initial_center)²`.
    #[pyo3(signature = (n_ref, times, points, depth = 3, initial_center = 0.5, initial_scale = 0.0))]
    fn path_rate(
        &self,
        n_ref: usize,
        times: Vec<f64>,
        points: Vec<f64>,
        depth: u32,
        initial_center: f64,
        initial_scale: f64,
    ) -> PyResult<Vec<f64>> {
        let path = PathSpec::new(times, points, move |x: f64| initial_scale * (x - initial_center).powi(2)).py()?;
        Ok(ldp::path_rate(&self.inner, n_ref, &path, depth).py()?.per_depth)
    }

    /// `[(n, error)]` of `H_n f` against the limit on `[a, b]`.
    fn hamiltonian_errors(&self, function: &str, a: f64, b: f64) -> PyResult<Vec<(usize, f64)>> {
        let f = test_function(function)?;
        let errors = ldp::check_hamiltonian_convergence(&self.inner, &f, (a, b)).py()?;
        Ok(errors.into_iter().map(|e| (e.n, e.error)).collect())
    }

    /// `[(n, deviation)]` of `V_n(t)f` from the finest level on `[a, b]`.
    fn semigroup_deviations(&self, function: &str, t: f64, a: f64, b: f64) -> PyResult<Vec<(usize, f64)>> {
        let f = test_function(function)?;
        let errors = ldp::semigroup_convergence_check(&self.inner, &f, t, (a, b)).py()?;
        Ok(errors.into_iter().map(|e| (e.n, e.error)).collect())
    }
}

#[pymodule(name = "nlsemigroup")]
fn nlsemigroup_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyDensityFamily>()?;
    m.add_function(wrap_pyfunction!(relative_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(dv_log_mgf, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
