//! Single-level universal kriging.
//!
//! Trend coefficients and process variance are profiled out in closed form
//! (generalized least squares); only the lengthscales are searched, by a
//! multi-start simplex over `log θ` on the concentrated likelihood
//! `(n - p) ln σ̂²(θ) + ln det R(θ)`.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{self, BasisSpec, KernelSpec, NUGGET};
use crate::optim::{nelder_mead, SimplexOptions};

/// Residuals at most this far from zero (relative to the data) mean the
/// trend alone interpolates the responses.
const ZERO_RESIDUAL_REL: f64 = 1e-10;
/// Process variance used on the zero-residual path, relative to the response scale.
const SIGMA2_FLOOR_REL: f64 = 1e-12;
/// Round-off allowance for negative posterior variance factors.
pub const NEGATIVE_VARIANCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct KrigingProblem {
    pub design: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    pub trend: BasisSpec,
    pub kernel: KernelSpec,
}

impl KrigingProblem {
    pub fn new(
        design: Vec<Vec<f64>>,
        responses: Vec<f64>,
        trend: BasisSpec,
        kernel: KernelSpec,
    ) -> Result<Self> {
        check_design(&design, &responses, kernel.dim(), trend.size())?;
        Ok(KrigingProblem {
            design,
            responses,
            trend,
            kernel,
        })
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }
}

pub(crate) fn check_design(
    design: &[Vec<f64>],
    responses: &[f64],
    dim: usize,
    trend_size: usize,
) -> Result<()> {
    if design.len() != responses.len() {
        return Err(Error::contract(format!(
            "{} design points but {} responses",
            design.len(),
            responses.len()
        )));
    }
    if design.len() < trend_size + 1 {
        return Err(Error::contract(format!(
            "need at least {} points for a trend of size {trend_size}, got {}",
            trend_size + 1,
            design.len()
        )));
    }
    for p in design {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
    }
    for (i, p) in design.iter().enumerate() {
        if design[..i].contains(p) {
            return Err(Error::DuplicateDesignPoint(p.clone()));
        }
    }
    if let Some(bad) = responses.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite response {bad}")));
    }
    Ok(())
}

/// Closed-form trend and variance estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsEstimate {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

/// Generalized least squares on a correlation matrix used exactly as given.
pub fn gls_fit(r: &DMatrix<f64>, f: &DMatrix<f64>, y: &[f64]) -> Result<GlsEstimate> {
    let chol = factorize(r.clone())?;
    let (beta, sigma2, _) = gls(&chol, f, &DVector::from_column_slice(y))?;
    Ok(GlsEstimate {
        beta: beta.iter().copied().collect(),
        sigma2,
    })
}

pub(crate) fn factorize(r: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(r).ok_or_else(|| {
        Error::IllConditioned("correlation matrix is not numerically positive definite".into())
    })
}

pub(crate) fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// Returns `(β̂, σ̂², y - Hβ̂)`.
pub(crate) fn gls(
    chol: &Cholesky<f64, Dyn>,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, f64, DVector<f64>)> {
    let n = h.nrows();
    let p = h.ncols();
    if n <= p {
        return Err(Error::contract(format!(
            "GLS needs more observations ({n}) than trend terms ({p})"
        )));
    }
    let l = chol.l();
    let ht = l
        .solve_lower_triangular(h)
        .ok_or_else(|| Error::IllConditioned("triangular solve failed".into()))?;
    let yt = l
        .solve_lower_triangular(y)
        .ok_or_else(|| Error::IllConditioned("triangular solve failed".into()))?;
    if !full_column_rank(&ht) {
        return Err(Error::SingularTrend {
            block: "trend".into(),
        });
    }
    let qr = ht.clone().qr();
    let rhs = qr.q().transpose() * &yt;
    let beta = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::SingularTrend {
            block: "trend".into(),
        })?;
    let whitened = &yt - &ht * &beta;
    let sigma2 = whitened.norm_squared() / (n - p) as f64;
    let residual = y - h * &beta;
    Ok((beta, sigma2, residual))
}

/// Column-pivot-free rank test on the R factor of a QR decomposition.
pub(crate) fn full_column_rank(m: &DMatrix<f64>) -> bool {
    if m.ncols() == 0 {
        return true;
    }
    if m.nrows() < m.ncols() {
        return false;
    }
    let col_scale = m.column_iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if col_scale == 0.0 {
        return false;
    }
    let r = m.clone().qr().r();
    r.diagonal().iter().all(|d| d.abs() > 1e-10 * col_scale)
}

/// Concentrated negative log-likelihood `(n - p) ln σ̂²(θ) + ln det R(θ)`.
pub fn concentrated_neg_log_likelihood(problem: &KrigingProblem, theta: &[f64]) -> Result<f64> {
    let h = kernels::basis_matrix(&problem.trend, &problem.design)?;
    let est = Estimation {
        design: &problem.design,
        responses: &DVector::from_column_slice(&problem.responses),
        trend: &h,
        kernel: &problem.kernel,
    };
    Ok(est.profile(theta)?.nll)
}

/// Box for the lengthscale search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ThetaBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::contract(
                "theta bounds must have matching, nonzero length",
            ));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(*lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::contract(format!(
                    "theta bounds need 0 < lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(ThetaBounds { lower, upper })
    }

    /// `[1e-2, 10]` times each side length of the input box.
    pub fn for_sides(sides: &[f64]) -> Result<Self> {
        Self::new(
            sides.iter().map(|s| 1e-2 * s).collect(),
            sides.iter().map(|s| 10.0 * s).collect(),
        )
    }

    /// Degenerate box pinning every lengthscale.
    pub fn fixed(theta: &[f64]) -> Result<Self> {
        Self::new(theta.to_vec(), theta.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn log_lower(&self) -> Vec<f64> {
        self.lower.iter().map(|v| v.ln()).collect()
    }

    fn log_upper(&self) -> Vec<f64> {
        self.upper.iter().map(|v| v.ln()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub bounds: ThetaBounds,
    /// Number of simplex starts; the first is the log-space center of the box.
    pub restarts: usize,
    pub seed: u64,
    pub simplex: SimplexOptions,
}

impl FitOptions {
    pub fn new(bounds: ThetaBounds) -> Self {
        FitOptions {
            bounds,
            restarts: 5,
            seed: 0,
            simplex: SimplexOptions::default(),
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub(crate) struct Profile {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub nll: f64,
}

/// A likelihood problem over an arbitrary trend matrix.
pub(crate) struct Estimation<'a> {
    pub design: &'a [Vec<f64>],
    pub responses: &'a DVector<f64>,
    pub trend: &'a DMatrix<f64>,
    pub kernel: &'a KernelSpec,
}

impl Estimation<'_> {
    pub fn profile(&self, theta: &[f64]) -> Result<Profile> {
        let kernel = self.kernel.with_lengthscales(theta.to_vec())?;
        let r = kernels::regularized_correlation_matrix(&kernel, self.design)?;
        let chol = factorize(r)?;
        let (beta, sigma2, _) = gls(&chol, self.trend, self.responses)?;
        let dof = (self.design.len() - self.trend.ncols()) as f64;
        let nll = dof * sigma2.ln() + log_det(&chol);
        if !nll.is_finite() {
            return Err(Error::IllConditioned(format!(
                "non-finite likelihood at theta = {theta:?}"
            )));
        }
        Ok(Profile { beta, sigma2, nll })
    }

    fn response_scale(&self) -> f64 {
        self.responses.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// True when the trend alone reproduces the responses.
    fn zero_residual(&self) -> Result<bool> {
        let identity = DMatrix::<f64>::identity(self.design.len(), self.design.len());
        let chol = factorize(identity)?;
        let (_, _, residual) = gls(&chol, self.trend, self.responses)?;
        let worst = residual.amax();
        Ok(worst <= ZERO_RESIDUAL_REL * (1.0 + self.response_scale()))
    }

    fn sigma2_floor(&self) -> f64 {
        SIGMA2_FLOOR_REL * self.response_scale().powi(2).max(1.0)
    }

    /// Multi-start search over `log θ`; returns the chosen lengthscales and their profile.
    pub fn estimate(
        &self,
        options: &FitOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Profile)> {
        if options.bounds.dim() != self.kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.dim(),
                found: options.bounds.dim(),
            });
        }
        if !full_column_rank(self.trend) {
            return Err(Error::SingularTrend {
                block: "trend".into(),
            });
        }
        let lo = options.bounds.log_lower();
        let hi = options.bounds.log_upper();
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();

        if self.zero_residual()? {
            let theta: Vec<f64> = center.iter().map(|v| v.exp()).collect();
            let mut profile = self.profile_floored(&theta)?;
            profile.sigma2 = self.sigma2_floor();
            return Ok((theta, profile));
        }

        let restarts = options.restarts.max(1);
        let mut starts = vec![center];
        for _ in 1..restarts {
            starts.push(
                lo.iter()
                    .zip(&hi)
                    .map(|(a, b)| if b > a { rng.random_range(*a..=*b) } else { *a })
                    .collect(),
            );
        }

        let objective = |u: &[f64]| -> f64 {
            let theta: Vec<f64> = u.iter().map(|v| v.exp()).collect();
            self.profile(&theta).map(|p| p.nll).unwrap_or(f64::INFINITY)
        };
        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in &starts {
            let res = nelder_mead(objective, start, &lo, &hi, options.simplex);
            if res.value.is_finite() && best.as_ref().is_none_or(|(_, v)| res.value < *v) {
                best = Some((res.x, res.value));
            }
        }
        let (u, _) = best.ok_or_else(|| {
            Error::FitFailed("every likelihood start was numerically ill-conditioned".into())
        })?;
        let theta: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        let profile = self.profile(&theta)?;
        Ok((theta, profile))
    }

    /// Profile that tolerates an exactly-zero σ̂² (log taken of the floor).
    fn profile_floored(&self, theta: &[f64]) -> Result<Profile> {
        let kernel = self.kernel.with_lengthscales(theta.to_vec())?;
        let r = kernels::regularized_correlation_matrix(&kernel, self.design)?;
        let chol = factorize(r)?;
        let (beta, sigma2, _) = gls(&chol, self.trend, self.responses)?;
        let dof = (self.design.len() - self.trend.ncols()) as f64;
        let nll = dof * sigma2.max(self.sigma2_floor()).ln() + log_det(&chol);
        Ok(Profile { beta, sigma2, nll })
    }
}

/// Posterior machinery shared by single-level kriging and every co-kriging level:
/// a factorized correlation matrix plus the stored solve `R⁻¹(y - Hβ)`.
#[derive(Debug, Clone)]
pub(crate) struct GpCore {
    pub design: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
    pub chol: Cholesky<f64, Dyn>,
    pub alpha: DVector<f64>,
    // L⁻¹(y - Hβ); the mean correction is formed as (L⁻¹r)ᵀ(L⁻¹e) rather than rᵀα,
    // which keeps interpolation tight when R is nearly singular
    whitened: DVector<f64>,
    pub sigma2: f64,
}

/// `r̃ᵀα` and the variance factor `1 - r̃ᵀR⁻¹r̃` at one point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Local {
    pub correction: f64,
    pub factor: f64,
}

impl GpCore {
    pub fn assemble(
        design: Vec<Vec<f64>>,
        kernel: KernelSpec,
        chol: Cholesky<f64, Dyn>,
        residual: &DVector<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::contract(format!(
                "process variance must be positive, got {sigma2}"
            )));
        }
        let alpha = chol.solve(residual);
        let whitened = chol
            .l_dirty()
            .solve_lower_triangular(residual)
            .ok_or_else(|| Error::IllConditioned("triangular solve failed".into()))?;
        Ok(GpCore {
            design,
            kernel,
            chol,
            alpha,
            whitened,
            sigma2,
        })
    }

    pub fn with_parameters(
        design: Vec<Vec<f64>>,
        kernel: KernelSpec,
        residual: &DVector<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        let r = kernels::regularized_correlation_matrix(&kernel, &design)?;
        let chol = factorize(r)?;
        Self::assemble(design, kernel, chol, residual, sigma2)
    }

    pub fn local(&self, x: &[f64]) -> Result<Local> {
        if x.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.dim(),
                found: x.len(),
            });
        }
        // At a design point r̃ is a column of LLᵀ: L⁻¹r̃ is a row of L and
        // r̃ᵀR̃⁻¹r̃ = 1 + τ, so the factor is exactly zero. Computing the difference
        // would leave an ulp of σ², which is large after a near-singular fit.
        if let Some(i) = self.design.iter().position(|p| p.as_slice() == x) {
            let l = self.chol.l_dirty();
            let correction = (0..=i).map(|j| l[(i, j)] * self.whitened[j]).sum();
            return Ok(Local {
                correction,
                factor: 0.0,
            });
        }
        let r = kernels::cross_correlation(&self.kernel, x, &self.design);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&r)
            .ok_or_else(|| Error::IllConditioned("triangular solve failed".into()))?;
        let correction = v.dot(&self.whitened);
        let raw = 1.0 + NUGGET - v.norm_squared();
        Ok(Local {
            correction,
            factor: clamp_variance_factor(raw)?,
        })
    }

    pub fn n(&self) -> usize {
        self.design.len()
    }
}

pub(crate) fn clamp_variance_factor(raw: f64) -> Result<f64> {
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -NEGATIVE_VARIANCE_SLACK {
        Ok(0.0)
    } else {
        Err(Error::InternalConsistency(format!(
            "posterior variance factor {raw:e} is negative beyond round-off"
        )))
    }
}

/// A fitted single-level model.
#[derive(Debug, Clone)]
pub struct FittedKriging {
    pub(crate) core: GpCore,
    pub(crate) trend: BasisSpec,
    pub(crate) beta: Vec<f64>,
    pub(crate) responses: Vec<f64>,
    pub(crate) neg_log_likelihood: f64,
}

impl FittedKriging {
    /// Builds the model for fixed parameters, skipping estimation.
    pub fn from_parameters(problem: KrigingProblem, beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        if beta.len() != problem.trend.size() {
            return Err(Error::contract(format!(
                "trend has {} terms but {} coefficients were given",
                problem.trend.size(),
                beta.len()
            )));
        }
        let h = kernels::basis_matrix(&problem.trend, &problem.design)?;
        let y = DVector::from_column_slice(&problem.responses);
        let residual = &y - &h * DVector::from_column_slice(&beta);
        let core = GpCore::with_parameters(problem.design, problem.kernel, &residual, sigma2)?;
        let nll = core_nll(&core, &residual, problem.trend.size());
        Ok(FittedKriging {
            core,
            trend: problem.trend,
            beta,
            responses: problem.responses,
            neg_log_likelihood: nll,
        })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.core.sigma2
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.core.kernel.lengthscales
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.core.kernel
    }

    pub fn trend(&self) -> BasisSpec {
        self.trend
    }

    pub fn design(&self) -> &[Vec<f64>] {
        &self.core.design
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn neg_log_likelihood(&self) -> f64 {
        self.neg_log_likelihood
    }

    /// Lower Cholesky factor of the regularized correlation matrix.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.core.chol.l()
    }

    /// Posterior `(mean, variance)` at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let local = self.core.local(x)?;
        let mean = self.trend.dot(x, &self.beta) + local.correction;
        Ok((mean, self.core.sigma2 * local.factor))
    }
}

/// Concentrated likelihood evaluated at stored (not necessarily optimal) parameters.
pub(crate) fn core_nll(core: &GpCore, residual: &DVector<f64>, p: usize) -> f64 {
    let quad = residual.dot(&core.alpha);
    let dof = core.n().saturating_sub(p).max(1) as f64;
    dof * (quad / dof).max(f64::MIN_POSITIVE).ln() + log_det(&core.chol)
}

/// Fits lengthscales by concentrated maximum likelihood, then β̂ and σ̂² in closed form.
pub fn fit(problem: &KrigingProblem, options: &FitOptions) -> Result<FittedKriging> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    fit_with_rng(problem, options, &mut rng)
}

pub(crate) fn fit_with_rng(
    problem: &KrigingProblem,
    options: &FitOptions,
    rng: &mut ChaCha8Rng,
) -> Result<FittedKriging> {
    let h = kernels::basis_matrix(&problem.trend, &problem.design)?;
    let y = DVector::from_column_slice(&problem.responses);
    let est = Estimation {
        design: &problem.design,
        responses: &y,
        trend: &h,
        kernel: &problem.kernel,
    };
    let (theta, profile) = est.estimate(options, rng)?;
    let mut fixed = problem.clone();
    fixed.kernel = problem.kernel.with_lengthscales(theta)?;
    let mut fitted = FittedKriging::from_parameters(
        fixed,
        profile.beta.iter().copied().collect(),
        profile.sigma2,
    )?;
    fitted.neg_log_likelihood = profile.nll;
    Ok(fitted)
}
