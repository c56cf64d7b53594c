//! Stationary correlation kernels and the regression / scaling bases.
//!
//! All kriging models in this crate share one numerical convention: the
//! correlation matrix of a design carries an additive [`NUGGET`] on its
//! diagonal, and the same nugget is added whenever a prediction point
//! coincides exactly with a design point (see [`effective_correlation`]).
//! With that convention interpolation at design points is exact up to
//! round-off rather than up to the nugget.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal inflation applied to every correlation matrix before factorization.
pub const NUGGET: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "squared-exponential")]
    SquaredExponential,
    #[serde(rename = "matern-5/2")]
    Matern52,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "squared-exponential",
            KernelFamily::Matern52 => "matern-5/2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "squared-exponential" | "se" | "gaussian" => Some(KernelFamily::SquaredExponential),
            "matern-5/2" | "matern52" => Some(KernelFamily::Matern52),
            _ => None,
        }
    }
}

/// A kernel family together with one lengthscale per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::contract("kernel needs at least one lengthscale"));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::contract(format!(
                "lengthscales must be positive and finite, got {bad}"
            )));
        }
        Ok(KernelSpec {
            family,
            lengthscales,
        })
    }

    pub fn isotropic(family: KernelFamily, dim: usize, lengthscale: f64) -> Result<Self> {
        Self::new(family, vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn with_lengthscales(&self, lengthscales: Vec<f64>) -> Result<Self> {
        Self::new(self.family, lengthscales)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Correlation without dimension checks; callers validate once per batch.
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let h2 = scaled_sq_dist(&self.lengthscales, x, y);
                (-h2).exp()
            }
            KernelFamily::Matern52 => {
                let h = scaled_sq_dist(&self.lengthscales, x, y).sqrt();
                let s = 5f64.sqrt() * h;
                (1.0 + s + 5.0 * h * h / 3.0) * (-s).exp()
            }
        }
    }
}

fn scaled_sq_dist(lengthscales: &[f64], x: &[f64], y: &[f64]) -> f64 {
    lengthscales
        .iter()
        .zip(x.iter().zip(y))
        .map(|(l, (a, b))| {
            let d = (a - b) / l;
            d * d
        })
        .sum()
}

/// Correlation `r(x, y)`; equals 1 when `x == y`.
pub fn correlation(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.check_dim(x)?;
    spec.check_dim(y)?;
    Ok(spec.eval(x, y))
}

/// Correlation plus [`NUGGET`] when the two points are identical coordinate-wise.
pub fn effective_correlation(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    let r = spec.eval(x, y);
    if x == y {
        r + NUGGET
    } else {
        r
    }
}

/// Dense correlation matrix of a point set; unit diagonal, no nugget.
pub fn correlation_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::contract(
            "correlation matrix needs at least one point",
        ));
    }
    for p in points {
        spec.check_dim(p)?;
    }
    let n = points.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in 0..i {
            let v = spec.eval(&points[i], &points[j]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}

/// Correlation matrix with the nugget added to the diagonal, ready for Cholesky.
pub fn regularized_correlation_matrix(
    spec: &KernelSpec,
    points: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    let mut r = correlation_matrix(spec, points)?;
    for i in 0..r.nrows() {
        r[(i, i)] += NUGGET;
    }
    Ok(r)
}

/// Vector of effective correlations between `x` and every design point.
pub(crate) fn cross_correlation(spec: &KernelSpec, x: &[f64], design: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        design.len(),
        design.iter().map(|p| effective_correlation(spec, x, p)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Constant,
    Linear,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Constant => "constant",
            BasisKind::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(BasisKind::Constant),
            "linear" => Some(BasisKind::Linear),
            _ => None,
        }
    }
}

/// Regression basis: `(1)` or `(1, x_1, ..., x_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub dim: usize,
}

impl BasisSpec {
    pub fn constant(dim: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Constant,
            dim,
        }
    }

    pub fn linear(dim: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Linear,
            dim,
        }
    }

    pub fn size(&self) -> usize {
        match self.kind {
            BasisKind::Constant => 1,
            BasisKind::Linear => self.dim + 1,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            BasisKind::Constant => vec![1.0],
            BasisKind::Linear => std::iter::once(1.0).chain(x.iter().copied()).collect(),
        }
    }

    /// `basis(x) . coefficients`
    pub fn dot(&self, x: &[f64], coefficients: &[f64]) -> f64 {
        match self.kind {
            BasisKind::Constant => coefficients[0],
            BasisKind::Linear => {
                coefficients[0]
                    + x.iter()
                        .zip(&coefficients[1..])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            }
        }
    }
}

/// Rows are basis evaluations at each point.
pub fn basis_matrix(spec: &BasisSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = spec.size();
    let mut f = DMatrix::zeros(points.len(), p);
    for (i, x) in points.iter().enumerate() {
        if spec.kind == BasisKind::Linear && x.len() != spec.dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                found: x.len(),
            });
        }
        for (j, v) in spec.evaluate(x).into_iter().enumerate() {
            f[(i, j)] = v;
        }
    }
    Ok(f)
}
