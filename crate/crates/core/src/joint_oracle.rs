//! Co-kriging through the full joint covariance of all levels.
//!
//! This is the direct form of the autoregressive model: stack every
//! observation of every level into one Gaussian vector, build its covariance
//! `V` from the level-to-level covariance recursion and condition on it. It
//! costs `O(N³)` in the stacked size `N = Σ|D_t|` and exists to check the
//! recursive predictor in [`crate::cokriging`]; it never estimates anything.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};

use crate::cokriging::{LevelParameters, MultiFidelityData};
use crate::error::{Error, Result};
use crate::kernels::effective_correlation;
use crate::kriging::{clamp_variance_factor, factorize};

pub const DEFAULT_ORACLE_CAP: usize = 200;

/// `ρ_i(x)` for `i = 1..s-1` (the factor linking level `i` to level `i + 1`).
fn rho(params: &[LevelParameters], i: usize, x: &[f64]) -> f64 {
    params[i]
        .rho(x)
        .expect("levels above the first carry a scaling function")
}

/// Regression vector `h'_t(x)`: `f_j(x)` scaled by `∏_{i=j}^{t-1} ρ_i(x)`, for `j = 1..t`.
pub fn h_prime(params: &[LevelParameters], x: &[f64], t: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 1..=t {
        let scale: f64 = (j..t).map(|i| rho(params, i, x)).product();
        out.extend(
            params[j - 1]
                .trend
                .evaluate(x)
                .into_iter()
                .map(|f| scale * f),
        );
    }
    out
}

/// `cov(Z_t(x), Z_t(x'))` = `Σ_j σ_j² (∏_{i=j}^{t-1} ρ_i(x) ρ_i(x')) r̃_j(x, x')`.
fn same_level(params: &[LevelParameters], t: usize, x: &[f64], y: &[f64]) -> f64 {
    (1..=t)
        .map(|j| {
            let scale: f64 = (j..t)
                .map(|i| rho(params, i, x) * rho(params, i, y))
                .product();
            params[j - 1].sigma2 * scale * effective_correlation(&params[j - 1].kernel, x, y)
        })
        .sum()
}

/// `cov(Z_t(x), Z_{t'}(x'))`. For `t > t'` the lower covariance is carried up by
/// `∏_{i=t'}^{t-1} ρ_i(x)`; `t < t'` is taken by symmetry.
pub fn cross_covariance(
    params: &[LevelParameters],
    t: usize,
    t_prime: usize,
    x: &[f64],
    x_prime: &[f64],
) -> f64 {
    if t < t_prime {
        return cross_covariance(params, t_prime, t, x_prime, x);
    }
    let carry: f64 = (t_prime..t).map(|i| rho(params, i, x)).product();
    carry * same_level(params, t_prime, x, x_prime)
}

#[derive(Debug, Clone)]
pub struct JointModel {
    params: Vec<LevelParameters>,
    /// `(level, point)` for every stacked observation, level-major.
    stacked: Vec<(usize, Vec<f64>)>,
    v: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    h: DMatrix<f64>,
    beta: DVector<f64>,
    weights: DVector<f64>,
}

impl JointModel {
    pub fn new(data: &MultiFidelityData, params: &[LevelParameters]) -> Result<Self> {
        Self::with_cap(data, params, DEFAULT_ORACLE_CAP)
    }

    pub fn with_cap(
        data: &MultiFidelityData,
        params: &[LevelParameters],
        cap: usize,
    ) -> Result<Self> {
        let s = data.levels();
        if params.len() != s {
            return Err(Error::contract(format!(
                "{} parameter sets for {s} levels",
                params.len()
            )));
        }
        for (t, p) in params.iter().enumerate() {
            if (t == 0) != p.scaling.is_none() || p.scaling.is_some() != p.beta_rho.is_some() {
                return Err(Error::contract(format!(
                    "level {}: scaling must be present exactly for levels >= 2",
                    t + 1
                )));
            }
        }
        let size: usize = (1..=s).map(|t| data.design(t).len()).sum();
        if size > cap {
            return Err(Error::OracleTooLarge { size, cap });
        }

        let stacked: Vec<(usize, Vec<f64>)> = (1..=s)
            .flat_map(|t| data.design(t).iter().map(move |p| (t, p.clone())))
            .collect();
        let z = DVector::from_iterator(
            size,
            (1..=s).flat_map(|t| data.observations(t).iter().copied()),
        );
        let beta = DVector::from_iterator(
            params.iter().map(|p| p.beta.len()).sum(),
            params.iter().flat_map(|p| p.beta.iter().copied()),
        );

        let v = DMatrix::from_fn(size, size, |a, b| {
            let (ta, xa) = &stacked[a];
            let (tb, xb) = &stacked[b];
            cross_covariance(params, *ta, *tb, xa, xb)
        });
        let p_total = beta.len();
        let mut h = DMatrix::zeros(size, p_total);
        for (a, (t, x)) in stacked.iter().enumerate() {
            for (k, v) in h_prime(params, x, *t).into_iter().enumerate() {
                h[(a, k)] = v;
            }
        }
        let chol = factorize(v.clone())?;
        let weights = chol.solve(&(z - &h * &beta));
        Ok(JointModel {
            params: params.to_vec(),
            stacked,
            v,
            chol,
            h,
            beta,
            weights,
        })
    }

    pub fn levels(&self) -> usize {
        self.params.len()
    }

    pub fn covariance_matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn trend_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn h_prime(&self, x: &[f64], t: usize) -> Vec<f64> {
        h_prime(&self.params, x, t)
    }

    pub fn cross_covariance(&self, t: usize, t_prime: usize, x: &[f64], x_prime: &[f64]) -> f64 {
        cross_covariance(&self.params, t, t_prime, x, x_prime)
    }

    /// `t_s(x)`: covariance between `Z_s(x)` and every stacked observation.
    fn cross_vector(&self, x: &[f64]) -> DVector<f64> {
        let s = self.levels();
        DVector::from_iterator(
            self.stacked.len(),
            self.stacked
                .iter()
                .map(|(t, p)| cross_covariance(&self.params, s, *t, x, p)),
        )
    }

    /// Top-level posterior `(mean, variance)`.
    pub fn joint_predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let dim = self.params[0].kernel.dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        let s = self.levels();
        let tx = self.cross_vector(x);
        let hx = DVector::from_vec(h_prime(&self.params, x, s));
        let mean = hx.dot(&self.beta) + tx.dot(&self.weights);
        let prior = same_level(&self.params, s, x, x);
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&tx)
            .ok_or_else(|| Error::IllConditioned("triangular solve failed".into()))?;
        let factor = clamp_variance_factor((prior - w.norm_squared()) / prior)?;
        Ok((mean, factor * prior))
    }
}
