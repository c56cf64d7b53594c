mod common;

use common::{rng, sample_gp};
use mfk_core::kernels::{self, basis_matrix};
use mfk_core::kriging::{self, concentrated_neg_log_likelihood, gls_fit};
use mfk_core::{
    BasisSpec, FitOptions, FittedKriging, KernelFamily, KernelSpec, KrigingProblem,
    LevelParameters, ThetaBounds, NUGGET,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn se(d: usize, theta: f64) -> KernelSpec {
    KernelSpec::isotropic(KernelFamily::SquaredExponential, d, theta).unwrap()
}

fn lhs_1d(r: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| vec![(i as f64 + r.random_range(0.25..0.75)) / n as f64])
        .collect()
}

/// Prior draw with constant trend 0.5 and unit variance.
fn simulated_problem(seed: u64, n: usize, theta: f64) -> KrigingProblem {
    let mut r = rng(seed);
    let design = lhs_1d(&mut r, n);
    let params = LevelParameters {
        kernel: se(1, theta),
        trend: BasisSpec::constant(1),
        scaling: None,
        beta: vec![0.5],
        beta_rho: None,
        sigma2: 1.0,
    };
    let y = sample_gp(&mut r, &design, &params);
    KrigingProblem::new(design, y, BasisSpec::constant(1), se(1, theta)).unwrap()
}

fn dense_gls(r: &DMatrix<f64>, f: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let ri = r.clone().try_inverse().unwrap();
    let a = f.transpose() * &ri * f;
    let beta = a.try_inverse().unwrap() * f.transpose() * &ri * y;
    let res = y - f * &beta;
    let s2 = (res.transpose() * &ri * &res)[(0, 0)] / (f.nrows() - f.ncols()) as f64;
    (beta, s2)
}

fn random_spd_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| r.random::<f64>()).collect())
        .collect();
    let k = KernelSpec::isotropic(KernelFamily::Matern52, d, r.random_range(0.05..0.3)).unwrap();
    let mut rm = kernels::correlation_matrix(&k, &pts).unwrap();
    for i in 0..n {
        rm[(i, i)] += 1e-3;
    }
    let f = basis_matrix(&BasisSpec::linear(d), &pts).unwrap();
    let y = DVector::from_iterator(n, (0..n).map(|_| r.random_range(-3.0..3.0)));
    (rm, f, y)
}

fn assert_gls_matches(seed: u64, n: usize, d: usize) {
    let (rm, f, y) = random_spd_problem(seed, n, d);
    let est = gls_fit(&rm, &f, y.as_slice()).unwrap();
    let (beta, s2) = dense_gls(&rm, &f, &y);
    for (a, b) in est.beta.iter().zip(beta.iter()) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "beta {a} vs {b}");
    }
    assert!(
        (est.sigma2 - s2).abs() <= 1e-8 * s2,
        "sigma2 {} vs {s2}",
        est.sigma2
    );
}

#[test]
fn gls_matches_dense_inverse_on_ten_points() {
    assert_gls_matches(7, 10, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn gls_matches_dense_inverse_up_to_twenty_points(seed in any::<u64>(), n in 5usize..=20, d in 1usize..=3) {
        prop_assume!(n > d + 1);
        assert_gls_matches(seed, n, d);
    }
}

#[test]
fn likelihood_prefers_true_lengthscale() {
    let wins = (0..50u64)
        .filter(|&seed| {
            let p = simulated_problem(seed, 30, 0.3);
            let near = concentrated_neg_log_likelihood(&p, &[0.3]).unwrap();
            let far = concentrated_neg_log_likelihood(&p, &[3.0]).unwrap();
            near < far
        })
        .count();
    assert!(wins >= 48, "NLL(0.3) < NLL(3.0) in only {wins}/50 seeds");
}

#[test]
fn doubling_responses_shifts_likelihood_by_a_constant() {
    let p = simulated_problem(3, 20, 0.3);
    let mut q = p.clone();
    q.responses.iter_mut().for_each(|y| *y *= 2.0);
    let shift = 19.0 * 4.0f64.ln();
    for theta in [0.05, 0.2, 0.7, 2.0] {
        let a = concentrated_neg_log_likelihood(&p, &[theta]).unwrap();
        let b = concentrated_neg_log_likelihood(&q, &[theta]).unwrap();
        assert!(
            (b - a - shift).abs() < 1e-8 * (1.0 + a.abs()),
            "theta {theta}"
        );
    }
}

#[test]
fn two_point_likelihood_matches_hand_expansion() {
    // R = [[1+τ, c], [c, 1+τ]], F = 1, y = (a, b): β̂ = (a+b)/2, σ̂² = (a-b)²/(2(1+τ-c)).
    let (a, b, theta) = (0.4, -1.1, 0.5);
    let p = KrigingProblem::new(
        vec![vec![0.0], vec![0.3]],
        vec![a, b],
        BasisSpec::constant(1),
        se(1, theta),
    )
    .unwrap();
    let c = (-(0.3f64 / theta).powi(2)).exp();
    let s2 = (a - b) * (a - b) / (2.0 * (1.0 + NUGGET - c));
    let det = (1.0 + NUGGET).powi(2) - c * c;
    let expected = s2.ln() + det.ln();
    let got = concentrated_neg_log_likelihood(&p, &[theta]).unwrap();
    assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
}

#[test]
fn lengthscale_recovered_within_factor_two() {
    let opts = FitOptions::new(ThetaBounds::for_sides(&[1.0]).unwrap()).with_seed(11);
    let hits = (0..25u64)
        .filter(|&seed| {
            let p = simulated_problem(100 + seed, 40, 0.2);
            let fit = kriging::fit(&p, &opts).unwrap();
            let ratio = fit.lengthscales()[0] / 0.2;
            (0.5..=2.0).contains(&ratio)
        })
        .count();
    assert!(hits >= 20, "recovered within factor 2 in only {hits}/25");
}

#[test]
fn fitted_lengthscale_is_invariant_to_response_scaling() {
    let p = simulated_problem(5, 25, 0.25);
    let opts = FitOptions::new(ThetaBounds::for_sides(&[1.0]).unwrap()).with_seed(2);
    let base = kriging::fit(&p, &opts).unwrap().lengthscales()[0];
    for c in [3.0, -0.5, 1e3] {
        let mut q = p.clone();
        q.responses.iter_mut().for_each(|y| *y *= c);
        let th = kriging::fit(&q, &opts).unwrap().lengthscales()[0];
        assert!((th - base).abs() <= 1e-6 * base, "c = {c}: {th} vs {base}");
    }
}

#[test]
fn fit_is_within_bounds_beats_start_and_is_deterministic() {
    let p = simulated_problem(9, 30, 0.3);
    let bounds = ThetaBounds::for_sides(&[1.0]).unwrap();
    let opts = FitOptions::new(bounds.clone()).with_seed(4);
    let a = kriging::fit(&p, &opts).unwrap();
    let b = kriging::fit(&p, &opts).unwrap();
    assert_eq!(a.lengthscales(), b.lengthscales());
    assert_eq!(a.beta(), b.beta());
    let th = a.lengthscales()[0];
    assert!(th >= bounds.lower[0] && th <= bounds.upper[0]);
    let center = (bounds.lower[0] * bounds.upper[0]).sqrt();
    let at_center = concentrated_neg_log_likelihood(&p, &[center]).unwrap();
    assert!(a.neg_log_likelihood() <= at_center);
    let at_fit = concentrated_neg_log_likelihood(&p, &[th]).unwrap();
    assert!((a.neg_log_likelihood() - at_fit).abs() < 1e-9 * (1.0 + at_fit.abs()));
}

#[test]
fn cholesky_factor_reproduces_correlation_matrix() {
    let p = simulated_problem(13, 25, 0.3);
    let fit = kriging::fit(
        &p,
        &FitOptions::new(ThetaBounds::for_sides(&[1.0]).unwrap()),
    )
    .unwrap();
    let l = fit.cholesky_factor();
    let r = kernels::regularized_correlation_matrix(fit.kernel(), fit.design()).unwrap();
    let err = (&l * l.transpose() - &r).norm() / r.norm();
    assert!(err <= 1e-8, "relative Frobenius error {err:e}");
}

#[test]
fn prediction_matches_dense_formula_in_one_dimension() {
    let design: Vec<Vec<f64>> = [0.05, 0.3, 0.45, 0.7, 0.9]
        .iter()
        .map(|x| vec![*x])
        .collect();
    let y = vec![1.2, -0.3, 0.1, 0.8, 2.0];
    let kernel = KernelSpec::new(KernelFamily::Matern52, vec![0.25]).unwrap();
    let trend = BasisSpec::linear(1);
    let rm = kernels::regularized_correlation_matrix(&kernel, &design).unwrap();
    let f = basis_matrix(&trend, &design).unwrap();
    let yv = DVector::from_vec(y.clone());
    let (beta, s2) = dense_gls(&rm, &f, &yv);
    let p = KrigingProblem::new(design.clone(), y, trend, kernel.clone()).unwrap();
    let model = FittedKriging::from_parameters(p, beta.iter().copied().collect(), s2).unwrap();
    let ri = rm.try_inverse().unwrap();
    for x in [0.0, 0.17, 0.5, 0.63, 0.99, 1.4] {
        let r = DVector::from_iterator(
            5,
            design
                .iter()
                .map(|d| kernels::correlation(&kernel, &[x], d).unwrap()),
        );
        let mean = beta[0] + beta[1] * x + (r.transpose() * &ri * (&yv - &f * &beta))[(0, 0)];
        let var = s2 * (1.0 + NUGGET - (r.transpose() * &ri * &r)[(0, 0)]);
        let (m, v) = model.predict(&[x]).unwrap();
        assert!((m - mean).abs() <= 1e-9 * (1.0 + mean.abs()), "mean at {x}");
        assert!((v - var).abs() <= 1e-9 * s2, "variance at {x}");
    }
}

#[test]
fn interpolates_design_points() {
    for seed in 0..10u64 {
        let p = simulated_problem(200 + seed, 20, 0.2);
        let fit = kriging::fit(
            &p,
            &FitOptions::new(ThetaBounds::for_sides(&[1.0]).unwrap()),
        )
        .unwrap();
        for (x, y) in p.design.iter().zip(&p.responses) {
            let (m, v) = fit.predict(x).unwrap();
            assert!((m - y).abs() <= 1e-8 * (1.0 + y.abs()), "mean at {x:?}");
            assert!(v <= 1e-10 * fit.sigma2(), "variance {v:e} at {x:?}");
        }
    }
}

#[test]
fn variance_nonnegative_on_random_probes() {
    let mut r = rng(77);
    let design: Vec<Vec<f64>> = (0..15)
        .map(|_| vec![r.random::<f64>(), r.random::<f64>()])
        .collect();
    let y: Vec<f64> = design
        .iter()
        .map(|x| (5.0 * x[0]).sin() + x[1] * x[1])
        .collect();
    let p = KrigingProblem::new(design, y, BasisSpec::linear(2), se(2, 0.3)).unwrap();
    let fit = kriging::fit(
        &p,
        &FitOptions::new(ThetaBounds::for_sides(&[1.0, 1.0]).unwrap()),
    )
    .unwrap();
    for _ in 0..1000 {
        let x = [r.random_range(-0.2..1.2), r.random_range(-0.2..1.2)];
        let (_, v) = fit.predict(&x).unwrap();
        assert!(v >= 0.0);
    }
}
