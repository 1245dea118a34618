use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlsemigroup::clock::{exp_integral, ExpClock, TimeLaw};
use nlsemigroup::entropy::{dv_log_mgf, dv_optimal_tilt, path_relative_entropy, relative_entropy};
use nlsemigroup::ldp::{
    apply_hn, build_density_family, conditional_rate_legendre, finite_dim_rate, path_rate, DensityModel, PathSpec,
};
use nlsemigroup::markov::{linear_resolvent_apply, semigroup_apply, transition_matrix};
use nlsemigroup::nonlinear::{apply_h, nonlinear_semigroup, t_plus};
use nlsemigroup::resolvent::{resolvent, resolvent_with, tilted_generator, variational_value, SolverOptions};
use nlsemigroup::{Distribution, Generator, StateFunction};

fn chain(seed: u64, n: usize, max_rate: f64) -> (Generator, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Generator::random(&mut rng, n, max_rate).unwrap();
    (q, rng)
}

fn func(rng: &mut ChaCha8Rng, q: &Generator, bound: f64) -> StateFunction {
    let v = (0..q.size()).map(|_| rng.random_range(-bound..=bound)).collect();
    StateFunction::for_generator(q, v).unwrap()
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn dist(a: &StateFunction, b: &StateFunction) -> f64 {
    a.sup_distance(b).unwrap()
}

fn max_excess(a: &StateFunction, b: &StateFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn kl(nu: &[f64], mu: &[f64]) -> f64 {
    nu.iter()
        .zip(mu)
        .map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chapman_kolmogorov(seed in any::<u64>(), n in 1usize..=8, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let (q, _) = chain(seed, n, 1.0);
        let joint = transition_matrix(&q, s + t).unwrap();
        let split = transition_matrix(&q, s).unwrap() * transition_matrix(&q, t).unwrap();
        prop_assert!((joint - &split).abs().max() <= 1e-9);
        for row in split.row_iter() {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn linear_resolvent_is_clock_average_of_semigroup(
        seed in any::<u64>(), n in 2usize..=6, lambda in 0.05f64..=2.0,
    ) {
        // Keeps max |Q(x,x)| ≤ 5.
        let (q, mut rng) = chain(seed, n, 5.0 / (n - 1) as f64);
        let u = func(&mut rng, &q, 1.0);
        let clock = ExpClock::new(lambda).unwrap();
        let direct = linear_resolvent_apply(&q, lambda, &u).unwrap();
        let paths: Vec<StateFunction> = clock.nodes().iter().map(|&t| semigroup_apply(&q, t, &u).unwrap()).collect();
        for x in 0..n {
            let samples: Vec<f64> = paths.iter().map(|p| p.get(x)).collect();
            prop_assert!((exp_integral(&clock, &samples).unwrap() - direct.get(x)).abs() <= 1e-6);
        }
    }

    #[test]
    fn linear_semigroup_is_monotone(seed in any::<u64>(), n in 2usize..=6, t in 0.0f64..3.0) {
        let (q, mut rng) = chain(seed, n, 1.0);
        let u = func(&mut rng, &q, 1.0);
        let bump = func(&mut rng, &q, 1.0).map(f64::abs);
        let v = u.combine(1.0, &bump, 1.0).unwrap();
        let (pu, pv) = (semigroup_apply(&q, t, &u).unwrap(), semigroup_apply(&q, t, &v).unwrap());
        prop_assert!(max_excess(&pu, &pv) <= 1e-12);
    }

    #[test]
    fn dv_duality_both_directions(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = simplex(&mut rng, n);
        let nu = simplex(&mut rng, n);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (mu_d, nu_d) = (Distribution::from_mass(mu.clone()).unwrap(), Distribution::from_mass(nu.clone()).unwrap());
        let s = relative_entropy(&nu_d, &mu_d).unwrap().value();
        let fs = StateFunction::from_values(f.clone()).unwrap();
        let pairing: f64 = nu.iter().zip(&f).map(|(a, b)| a * b).sum();
        let lmgf = dv_log_mgf(&fs, &mu_d).unwrap();
        prop_assert!(pairing - s <= lmgf + 1e-12);
        let (tilt, value) = dv_optimal_tilt(&fs, &mu_d).unwrap();
        let tilt_pairing: f64 = tilt.mass().iter().zip(&f).map(|(a, b)| a * b).sum();
        prop_assert!((tilt_pairing - kl(tilt.mass(), &mu) - lmgf).abs() <= 1e-10);
        prop_assert!((value - lmgf).abs() <= 1e-10);

        // S(ν|μ) = sup_g ⟨g,ν⟩ − log μ(e^g), attained at g = log(ν/μ).
        let g: Vec<f64> = nu.iter().zip(&mu).map(|(a, b)| (a / b).ln()).collect();
        let gs = StateFunction::from_values(g.clone()).unwrap();
        let g_pairing: f64 = nu.iter().zip(&g).map(|(a, b)| a * b).sum();
        prop_assert!((g_pairing - dv_log_mgf(&gs, &mu_d).unwrap() - s).abs() <= 1e-10);
    }

    #[test]
    fn relative_entropy_is_jointly_convex(seed in any::<u64>(), n in 2usize..=8, w in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n1, n2, m1, m2) = (simplex(&mut rng, n), simplex(&mut rng, n), simplex(&mut rng, n), simplex(&mut rng, n));
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| w * x + (1.0 - w) * y).collect::<Vec<f64>>();
        let s = |nu: Vec<f64>, mu: Vec<f64>| {
            relative_entropy(&Distribution::from_mass(nu).unwrap(), &Distribution::from_mass(mu).unwrap())
                .unwrap()
                .value()
        };
        let lhs = s(mix(&n1, &n2), mix(&m1, &m2));
        let rhs = w * s(n1, m1) + (1.0 - w) * s(n2, m2);
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn path_entropy_grows_with_horizon(seed in any::<u64>(), n in 2usize..=5) {
        let (q, mut rng) = chain(seed, n, 1.0);
        let phi = func(&mut rng, &q, 1.0);
        let x = rng.random_range(0..n);
        let mut previous = 0.0;
        for k in 0..=8 {
            let s = path_relative_entropy(&q, &phi, x, 0.25 * k as f64).unwrap().value();
            prop_assert!(s >= -1e-12);
            prop_assert!(s >= previous - 1e-9, "S at t={} is {s} < {previous}", 0.25 * k as f64);
            previous = s;
        }
    }

    #[test]
    fn nonlinear_semigroup_laws(seed in any::<u64>(), s in 0.0f64..=1.0, t in 0.0f64..=1.0, c in -3.0f64..3.0) {
        let (q, mut rng) = chain(seed, 6, 1.0);
        let f = func(&mut rng, &q, 1.0);
        let g = func(&mut rng, &q, 1.0);
        let vt = nonlinear_semigroup(&q, t, &f).unwrap();
        let composed = nonlinear_semigroup(&q, s, &vt).unwrap();
        prop_assert!(dist(&nonlinear_semigroup(&q, s + t, &f).unwrap(), &composed) <= 1e-9);
        let shifted = nonlinear_semigroup(&q, t, &f.map(|v| v + c)).unwrap();
        prop_assert!(dist(&shifted, &vt.map(|v| v + c)) <= 1e-12);
        let vg = nonlinear_semigroup(&q, t, &g).unwrap();
        prop_assert!(dist(&vt, &vg) <= dist(&f, &g) + 1e-12);
    }

    #[test]
    fn nonlinear_generator_is_first_order_derivative(seed in any::<u64>()) {
        let (q, mut rng) = chain(seed, 5, 1.0);
        let f = func(&mut rng, &q, 1.0);
        let hf = apply_h(&q, &f).unwrap();
        let err = |delta: f64| {
            let v = nonlinear_semigroup(&q, delta, &f).unwrap();
            let quotient = v.combine(1.0 / delta, &f, -1.0 / delta).unwrap();
            dist(&quotient, &hf)
        };
        let ratio = err(1e-3) / err(5e-4);
        prop_assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn resolvent_order_and_shift(seed in any::<u64>(), lambda in 0.01f64..5.0, c in -3.0f64..3.0) {
        let (q, mut rng) = chain(seed, 5, 1.0);
        let h1 = func(&mut rng, &q, 2.0);
        let h2 = h1.combine(1.0, &func(&mut rng, &q, 1.0).map(f64::abs), 1.0).unwrap();
        let r1 = resolvent(&q, lambda, &h1).unwrap();
        let r2 = resolvent(&q, lambda, &h2).unwrap();
        prop_assert!(max_excess(&r1, &r2) <= 1e-9);
        prop_assert!(dist(&r1, &r2) <= dist(&h1, &h2) + 1e-9);
        let rc = resolvent(&q, lambda, &h1.map(|v| v + c)).unwrap();
        prop_assert!(dist(&rc, &r1.map(|v| v + c)) <= 1e-10);
        let tp = t_plus(&q, &TimeLaw::exponential(lambda).unwrap(), &h1).unwrap();
        prop_assert!(max_excess(&r1, &tp) <= 1e-8);
    }

    #[test]
    fn variational_value_is_a_lower_bound(seed in any::<u64>(), lambda in 0.05f64..3.0, eps in 0.0f64..1.0) {
        let (q, mut rng) = chain(seed, 4, 1.0);
        let h = func(&mut rng, &q, 1.0);
        let star = resolvent_with(&q, lambda, &h, SolverOptions::with_tol(1e-12)).unwrap();
        let phi = star.combine(1.0, &func(&mut rng, &q, 1.0), eps).unwrap();
        for x in 0..4 {
            prop_assert!(variational_value(&q, lambda, &h, &phi, x).unwrap() <= star.get(x) + 1e-9);
            prop_assert!((variational_value(&q, lambda, &h, &star, x).unwrap() - star.get(x)).abs() <= 1e-7);
        }
    }

    #[test]
    fn constant_tilt_is_the_base_chain(seed in any::<u64>(), c in -5.0f64..5.0) {
        let (q, _) = chain(seed, 5, 1.0);
        let tilt = tilted_generator(&q, &StateFunction::constant(&q, c).unwrap()).unwrap();
        let diff: DMatrix<f64> = tilt.tilted().rates() - q.rates();
        prop_assert!(diff.abs().max() <= 1e-12);
    }

    #[test]
    fn scaled_hamiltonian_ignores_constants(c in -10.0f64..10.0, k in 0usize..3) {
        let family = build_density_family(&DensityModel::ehrenfest(), &[4, 8, 16]).unwrap();
        let n = [4, 8, 16][k];
        let f = |x: f64| (3.0 * x).sin();
        let base = apply_hn(&family, n, &f).unwrap();
        let shifted = apply_hn(&family, n, &move |x: f64| (3.0 * x).sin() + c).unwrap();
        prop_assert!(dist(&base, &shifted) <= 1e-12);
    }

    #[test]
    fn legendre_rate_stays_below_exact_rate(
        i in 0usize..=8, j in 0usize..=8, t in 0.05f64..2.0, c_max in 0.0f64..20.0,
    ) {
        let family = build_density_family(&DensityModel::ehrenfest(), &[8]).unwrap();
        let (x, y) = (i as f64 / 8.0, j as f64 / 8.0);
        let exact = finite_dim_rate(&family, 8, t, x, y).unwrap();
        prop_assert!(exact >= -1e-12);
        let lower = conditional_rate_legendre(&family, 8, t, x, y, c_max).unwrap();
        prop_assert!(lower.value <= exact + 1e-12);
        prop_assert!(exact - lower.value <= lower.gap_bound(8.0, c_max) + 1e-12);
    }

    #[test]
    fn path_rate_grows_under_refinement(points in prop::collection::vec(0.0f64..=1.0, 2..5)) {
        let family = build_density_family(&DensityModel::ehrenfest(), &[16]).unwrap();
        let times: Vec<f64> = (0..points.len()).map(|k| k as f64 / (points.len() - 1) as f64).collect();
        let path = PathSpec::free_start(times, points).unwrap();
        let rate = path_rate(&family, 16, &path, 3).unwrap();
        for w in rate.per_depth.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "{:?}", rate.per_depth);
        }
        prop_assert_eq!(rate.value, *rate.per_depth.last().unwrap());
    }
}

#[test]
fn equilibrium_rate_decreases_in_time() {
    let family = build_density_family(&DensityModel::ehrenfest(), &[32]).unwrap();
    let rates: Vec<f64> = [0.1, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&t| finite_dim_rate(&family, 32, t, 0.25, 0.5).unwrap())
        .collect();
    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
    assert!(rates[4] < 0.15);
}
