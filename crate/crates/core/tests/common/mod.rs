#![allow(dead_code)]

use mfk_core::{BasisSpec, KernelFamily, KernelSpec, LevelParameters, MultiFidelityData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn shuffle(rng: &mut ChaCha8Rng, idx: &mut [usize]) {
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
}

/// Random nested designs: a jittered Latin hypercube (points kept to the middle
/// half of their strata, so no two points nearly coincide), then `D_t` is a
/// random subset of `D_{t-1}`.
pub fn random_nested(rng: &mut ChaCha8Rng, sizes: &[usize], d: usize) -> Vec<Vec<Vec<f64>>> {
    let n = sizes[0];
    let mut base = vec![vec![0.0; d]; n];
    for k in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle(rng, &mut perm);
        for (i, p) in perm.into_iter().enumerate() {
            base[i][k] = (p as f64 + rng.random_range(0.25..0.75)) / n as f64;
        }
    }
    let mut designs = vec![base];
    for &n in &sizes[1..] {
        let prev = designs.last().unwrap();
        let mut idx: Vec<usize> = (0..prev.len()).collect();
        shuffle(rng, &mut idx);
        designs.push(idx[..n].iter().map(|&i| prev[i].clone()).collect());
    }
    designs
}

/// A random instance with known parameters (moderate conditioning).
pub struct Instance {
    pub data: MultiFidelityData,
    pub params: Vec<LevelParameters>,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let s = if r.random::<bool>() { 2 } else { 3 };
    let d = r.random_range(1..=3usize);
    let n1 = r.random_range(10..=20usize);
    let mut sizes = vec![n1];
    for t in 1..s {
        let lo = 4;
        let hi = sizes[t - 1];
        sizes.push(r.random_range(lo..=hi.max(lo)));
    }
    // top level needs at least 4 points; keep monotone
    for t in 1..s {
        sizes[t] = sizes[t].min(sizes[t - 1]);
    }
    let designs = random_nested(&mut r, &sizes, d);
    let mut params = Vec::new();
    for t in 0..s {
        let family = if r.random::<bool>() {
            KernelFamily::Matern52
        } else {
            KernelFamily::SquaredExponential
        };
        let hi = if family == KernelFamily::Matern52 {
            0.8
        } else {
            0.3
        };
        let theta: Vec<f64> = (0..d)
            .map(|_| r.random_range(0.06..hi) * (d as f64).sqrt())
            .collect();
        let trend = if r.random::<bool>() {
            BasisSpec::linear(d)
        } else {
            BasisSpec::constant(d)
        };
        let beta: Vec<f64> = (0..trend.size())
            .map(|_| r.random_range(-2.0..2.0))
            .collect();
        let (scaling, beta_rho) = if t == 0 {
            (None, None)
        } else if r.random::<bool>() {
            (
                Some(BasisSpec::constant(d)),
                Some(vec![r.random_range(-2.0..2.0)]),
            )
        } else {
            let g = BasisSpec::linear(d);
            let b: Vec<f64> = (0..g.size()).map(|_| r.random_range(-1.5..1.5)).collect();
            (Some(g), Some(b))
        };
        params.push(LevelParameters {
            kernel: KernelSpec::new(family, theta).unwrap(),
            trend,
            scaling,
            beta,
            beta_rho,
            sigma2: r.random_range(0.1..3.0),
        });
    }
    let observations = sample_prior(&mut r, &designs, &params);
    let data = MultiFidelityData::new(designs, observations).unwrap();
    Instance { data, params }
}

/// Draws observations from the autoregressive prior level by level:
/// `z_1 ~ GP(f_1ᵀβ_1, σ_1² r_1)`, `z_t = ρ_{t-1} z_{t-1} + δ_t` on the nested designs.
pub fn sample_prior(
    rng: &mut ChaCha8Rng,
    designs: &[Vec<Vec<f64>>],
    params: &[LevelParameters],
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (t, (design, p)) in designs.iter().zip(params).enumerate() {
        let delta = sample_gp(rng, design, p);
        let z: Vec<f64> = design
            .iter()
            .zip(&delta)
            .map(|(x, dv)| {
                let lower = if t == 0 {
                    0.0
                } else {
                    let j = designs[t - 1].iter().position(|q| q == x).unwrap();
                    p.rho(x).unwrap() * out[t - 1][j]
                };
                lower + dv
            })
            .collect();
        out.push(z);
    }
    out
}

/// One draw of `GP(f(x)ᵀβ, σ² r)` at the given points (small jitter for the factorization).
pub fn sample_gp(rng: &mut ChaCha8Rng, design: &[Vec<f64>], p: &LevelParameters) -> Vec<f64> {
    let n = design.len();
    let mut k = mfk_core::kernels::correlation_matrix(&p.kernel, design).unwrap() * p.sigma2;
    for i in 0..n {
        k[(i, i)] += 1e-8 * p.sigma2;
    }
    let l = k
        .cholesky()
        .expect("jittered covariance is positive definite")
        .l();
    let e =
        nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let draw = l * e;
    design
        .iter()
        .enumerate()
        .map(|(i, x)| p.trend.dot(x, &p.beta) + draw[i])
        .collect()
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// `|a - b| / max(|b|, scale)`.
pub fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / b.abs().max(scale)
}
