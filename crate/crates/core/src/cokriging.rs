//! Recursive autoregressive co-kriging over `s` nested fidelity levels.
//!
//! Level `t` is modeled as `ρ_{t-1}(x) · [level t-1 posterior] + δ_t(x)` with
//! `ρ_{t-1}(x) = g(x)ᵀβ_ρ`. Because the designs are nested, each level is an
//! ordinary kriging fit whose trend matrix is `[G ⊙ z_{t-1}(D_t) | F_t]`, and
//! prediction runs bottom-up:
//!
//! ```text
//! μ_t(x)  = ρ_{t-1}(x) μ_{t-1}(x) + f_t(x)ᵀβ_t + r̃_t(x)ᵀ R_t⁻¹ (z_t - ρ_{t-1}(D_t) ⊙ z_{t-1}(D_t) - F_t β_t)
//! s²_t(x) = ρ_{t-1}(x)² s²_{t-1}(x) + σ_t² (1 - r̃_t(x)ᵀ R_t⁻¹ r̃_t(x))
//! ```

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, BasisSpec, KernelSpec};
use crate::kriging::{
    self, core_nll, Estimation, FitOptions, FittedKriging, GpCore, KrigingProblem,
};

/// Bases and kernel for one level. Level 1 has no scaling basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub trend: BasisSpec,
    pub scaling: Option<BasisSpec>,
    pub kernel: KernelSpec,
}

impl LevelConfig {
    pub fn base(trend: BasisSpec, kernel: KernelSpec) -> Self {
        LevelConfig {
            trend,
            scaling: None,
            kernel,
        }
    }

    pub fn upper(trend: BasisSpec, scaling: BasisSpec, kernel: KernelSpec) -> Self {
        LevelConfig {
            trend,
            scaling: Some(scaling),
            kernel,
        }
    }

    /// Same bases and kernel family at every level; constant trend and scaling.
    pub fn constant_stack(kernel: KernelSpec, levels: usize) -> Vec<LevelConfig> {
        let d = kernel.dim();
        (0..levels)
            .map(|t| LevelConfig {
                trend: BasisSpec::constant(d),
                scaling: (t > 0).then(|| BasisSpec::constant(d)),
                kernel: kernel.clone(),
            })
            .collect()
    }
}

fn check_configs(configs: &[LevelConfig], levels: usize, dim: usize) -> Result<()> {
    if configs.len() != levels {
        return Err(Error::contract(format!(
            "{} level configs for {levels} levels",
            configs.len()
        )));
    }
    for (t, c) in configs.iter().enumerate() {
        if (t == 0) != c.scaling.is_none() {
            return Err(Error::contract(format!(
                "level {} must {}have a scaling basis",
                t + 1,
                if t == 0 { "not " } else { "" }
            )));
        }
        if c.kernel.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.kernel.dim(),
            });
        }
    }
    Ok(())
}

/// Nested designs `D_s ⊆ … ⊆ D_1` with per-level observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFidelityData {
    designs: Vec<Vec<Vec<f64>>>,
    observations: Vec<Vec<f64>>,
    /// `parents[t][i]`: index in `D_{t-1}` of point `i` of `D_t` (empty for level 1).
    parents: Vec<Vec<usize>>,
}

impl MultiFidelityData {
    pub fn new(designs: Vec<Vec<Vec<f64>>>, observations: Vec<Vec<f64>>) -> Result<Self> {
        if designs.is_empty() {
            return Err(Error::contract("at least one level is required"));
        }
        if designs.len() != observations.len() {
            return Err(Error::contract(format!(
                "{} designs but {} observation vectors",
                designs.len(),
                observations.len()
            )));
        }
        let dim = designs[0].first().map_or(0, Vec::len);
        for (t, (d, z)) in designs.iter().zip(&observations).enumerate() {
            if d.is_empty() {
                return Err(Error::contract(format!("level {} design is empty", t + 1)));
            }
            if d.len() != z.len() {
                return Err(Error::contract(format!(
                    "level {}: {} points but {} observations",
                    t + 1,
                    d.len(),
                    z.len()
                )));
            }
            if let Some(p) = d.iter().find(|p| p.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
        }
        let mut parents = vec![Vec::new()];
        for t in 1..designs.len() {
            let mut idx = Vec::with_capacity(designs[t].len());
            for (i, p) in designs[t].iter().enumerate() {
                let j = designs[t - 1].iter().position(|q| q == p).ok_or_else(|| {
                    Error::Validation(format!(
                        "nesting violated: point {i} of level {} is not in level {}",
                        t + 1,
                        t
                    ))
                })?;
                idx.push(j);
            }
            parents.push(idx);
        }
        Ok(MultiFidelityData {
            designs,
            observations,
            parents,
        })
    }

    pub fn levels(&self) -> usize {
        self.designs.len()
    }

    pub fn dim(&self) -> usize {
        self.designs[0][0].len()
    }

    /// Design of level `t` (1-based).
    pub fn design(&self, t: usize) -> &[Vec<f64>] {
        &self.designs[t - 1]
    }

    pub fn observations(&self, t: usize) -> &[f64] {
        &self.observations[t - 1]
    }

    pub fn designs(&self) -> &[Vec<Vec<f64>>] {
        &self.designs
    }

    pub fn all_observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    /// `z_{t-1}(D_t)`: lower-level observations at the points of level `t ≥ 2`.
    pub fn lower_at(&self, t: usize) -> Vec<f64> {
        self.parents[t - 1]
            .iter()
            .map(|&j| self.observations[t - 2][j])
            .collect()
    }

    /// Appends `x` to `D_1 … D_ℓ` with `values[t-1]` observed at level `t`, `ℓ = values.len()`.
    pub fn with_point(&self, x: &[f64], values: &[f64]) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if values.is_empty() || values.len() > self.levels() {
            return Err(Error::contract(format!(
                "expected between 1 and {} level values, got {}",
                self.levels(),
                values.len()
            )));
        }
        if self.designs[0].iter().any(|p| p.as_slice() == x) {
            return Err(Error::DuplicateDesignPoint(x.to_vec()));
        }
        let mut next = self.clone();
        for (t, v) in values.iter().enumerate() {
            next.designs[t].push(x.to_vec());
            next.observations[t].push(*v);
            if t > 0 {
                let parent = next.designs[t - 1].len() - 1;
                next.parents[t].push(parent);
            }
        }
        Ok(next)
    }
}

/// Every parameter of one level; enough to rebuild it without estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelParameters {
    pub kernel: KernelSpec,
    pub trend: BasisSpec,
    pub scaling: Option<BasisSpec>,
    pub beta: Vec<f64>,
    pub beta_rho: Option<Vec<f64>>,
    pub sigma2: f64,
}

impl LevelParameters {
    pub fn config(&self) -> LevelConfig {
        LevelConfig {
            trend: self.trend,
            scaling: self.scaling,
            kernel: self.kernel.clone(),
        }
    }

    /// `ρ_{t-1}(x)`, or `None` at level 1.
    pub fn rho(&self, x: &[f64]) -> Option<f64> {
        match (&self.scaling, &self.beta_rho) {
            (Some(g), Some(b)) => Some(g.dot(x, b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedLevel {
    level: usize,
    core: GpCore,
    trend: BasisSpec,
    beta: Vec<f64>,
    scaling: Option<(BasisSpec, Vec<f64>)>,
    neg_log_likelihood: f64,
}

impl FittedLevel {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_rho(&self) -> Option<&[f64]> {
        self.scaling.as_ref().map(|(_, b)| b.as_slice())
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

    pub fn neg_log_likelihood(&self) -> f64 {
        self.neg_log_likelihood
    }

    /// Stored solve `R_t⁻¹(z_t - ρ(D_t) ⊙ z_{t-1}(D_t) - F_t β_t)`.
    pub fn residual_solve(&self) -> &[f64] {
        self.core.alpha.as_slice()
    }

    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.core.chol.l()
    }

    /// `ρ_{t-1}(x)`; contract violation at level 1.
    pub fn rho(&self, x: &[f64]) -> Result<f64> {
        match &self.scaling {
            Some((g, b)) => Ok(g.dot(x, b)),
            None => Err(Error::contract("level 1 has no scaling function")),
        }
    }

    pub fn parameters(&self) -> LevelParameters {
        LevelParameters {
            kernel: self.core.kernel.clone(),
            trend: self.trend,
            scaling: self.scaling.as_ref().map(|(g, _)| *g),
            beta: self.beta.clone(),
            beta_rho: self.scaling.as_ref().map(|(_, b)| b.clone()),
            sigma2: self.core.sigma2,
        }
    }

    fn from_parameters(
        level: usize,
        data: &MultiFidelityData,
        params: &LevelParameters,
    ) -> Result<Self> {
        let design = data.design(level).to_vec();
        let z = DVector::from_column_slice(data.observations(level));
        if params.beta.len() != params.trend.size() {
            return Err(Error::contract(format!(
                "level {level}: trend has {} terms, {} coefficients given",
                params.trend.size(),
                params.beta.len()
            )));
        }
        let f = kernels::basis_matrix(&params.trend, &design)?;
        let mut residual = z - f * DVector::from_column_slice(&params.beta);
        let scaling = match (level, params.scaling, &params.beta_rho) {
            (1, None, None) => None,
            (t, Some(g), Some(b)) if t > 1 => {
                if b.len() != g.size() {
                    return Err(Error::contract(format!(
                        "level {level}: scaling has {} terms, {} coefficients given",
                        g.size(),
                        b.len()
                    )));
                }
                let lower = data.lower_at(level);
                for (i, x) in design.iter().enumerate() {
                    residual[i] -= g.dot(x, b) * lower[i];
                }
                Some((g, b.clone()))
            }
            _ => {
                return Err(Error::contract(format!(
                    "level {level}: scaling basis and coefficients must be present exactly for levels >= 2"
                )))
            }
        };
        let p = params.trend.size() + scaling.as_ref().map_or(0, |(g, _)| g.size());
        let core =
            GpCore::with_parameters(design, params.kernel.clone(), &residual, params.sigma2)?;
        let nll = core_nll(&core, &residual, p);
        Ok(FittedLevel {
            level,
            core,
            trend: params.trend,
            beta: params.beta.clone(),
            scaling,
            neg_log_likelihood: nll,
        })
    }
}

/// `[G ⊙ z_{t-1}(D_t) | F_t]`, scaling block first.
fn extended_trend(
    design: &[Vec<f64>],
    lower: &[f64],
    scaling: &BasisSpec,
    trend: &BasisSpec,
) -> Result<(DMatrix<f64>, usize)> {
    let g = kernels::basis_matrix(scaling, design)?;
    let f = kernels::basis_matrix(trend, design)?;
    let q = g.ncols();
    let mut h = DMatrix::zeros(design.len(), q + f.ncols());
    for i in 0..design.len() {
        for j in 0..q {
            h[(i, j)] = g[(i, j)] * lower[i];
        }
        for j in 0..f.ncols() {
            h[(i, q + j)] = f[(i, j)];
        }
    }
    if !kriging::full_column_rank(&h.columns(0, q).into_owned()) {
        return Err(Error::SingularTrend {
            block: "scaling".into(),
        });
    }
    if !kriging::full_column_rank(&f) {
        return Err(Error::SingularTrend {
            block: "trend".into(),
        });
    }
    if !kriging::full_column_rank(&h) {
        return Err(Error::SingularTrend {
            block: "scaling/trend (collinear)".into(),
        });
    }
    Ok((h, q))
}

/// Fits level `t`: plain kriging for `t = 1`, kriging on the extended trend otherwise.
pub fn fit_level(
    t: usize,
    data: &MultiFidelityData,
    config: &LevelConfig,
    options: &FitOptions,
    rng: &mut ChaCha8Rng,
) -> Result<FittedLevel> {
    if t == 0 || t > data.levels() {
        return Err(Error::contract(format!(
            "level {t} out of range 1..={}",
            data.levels()
        )));
    }
    let design = data.design(t);
    if t == 1 {
        let problem = KrigingProblem::new(
            design.to_vec(),
            data.observations(1).to_vec(),
            config.trend,
            config.kernel.clone(),
        )?;
        let fitted = kriging::fit_with_rng(&problem, options, rng)?;
        return Ok(level_from_kriging(fitted));
    }
    let scaling = config
        .scaling
        .ok_or_else(|| Error::contract(format!("level {t} needs a scaling basis")))?;
    let q = scaling.size();
    kriging::check_design(
        design,
        data.observations(t),
        data.dim(),
        q + config.trend.size(),
    )?;
    let lower = data.lower_at(t);
    let (h, q) = extended_trend(design, &lower, &scaling, &config.trend)?;
    let z = DVector::from_column_slice(data.observations(t));
    let est = Estimation {
        design,
        responses: &z,
        trend: &h,
        kernel: &config.kernel,
    };
    let (theta, profile) = est.estimate(options, rng)?;
    let params = LevelParameters {
        kernel: config.kernel.with_lengthscales(theta)?,
        trend: config.trend,
        scaling: Some(scaling),
        beta: profile.beta.iter().skip(q).copied().collect(),
        beta_rho: Some(profile.beta.iter().take(q).copied().collect()),
        sigma2: profile.sigma2,
    };
    let mut level = FittedLevel::from_parameters(t, data, &params)?;
    level.neg_log_likelihood = profile.nll;
    Ok(level)
}

fn level_from_kriging(k: FittedKriging) -> FittedLevel {
    FittedLevel {
        level: 1,
        core: k.core,
        trend: k.trend,
        beta: k.beta,
        scaling: None,
        neg_log_likelihood: k.neg_log_likelihood,
    }
}

/// Per-level posterior summary at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBreakdown {
    /// `μ_{Z_t}(x)` for `t = 1..s`.
    pub means: Vec<f64>,
    /// `s²_{Z_t}(x)` for `t = 1..s`.
    pub variances: Vec<f64>,
    /// Share of `s²_{Z_s}(x)` attributable to each level; sums to the top variance.
    pub contributions: Vec<f64>,
    /// `σ_t²(1 - r̃_tᵀR_t⁻¹r̃_t)(x)`, the level's own variance term.
    pub local_variances: Vec<f64>,
    /// `ρ_{t-1}(x)` for `t = 2..s` (index 0 holds level 2).
    pub rho: Vec<f64>,
}

impl PredictionBreakdown {
    pub fn levels(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self) -> f64 {
        *self.means.last().expect("at least one level")
    }

    pub fn variance(&self) -> f64 {
        *self.variances.last().expect("at least one level")
    }

    /// Variances at every level if levels `1..=ell` were observed at this point.
    pub fn hypothetical_after(&self, ell: usize) -> Result<Vec<f64>> {
        let s = self.levels();
        if ell == 0 || ell > s {
            return Err(Error::contract(format!("level {ell} out of range 1..={s}")));
        }
        let mut out = vec![0.0; s];
        for t in ell..s {
            let rho = self.rho[t - 1];
            out[t] = rho * rho * out[t - 1] + self.local_variances[t];
        }
        Ok(out)
    }
}

/// Fitted recursive co-kriging model.
#[derive(Debug, Clone)]
pub struct MultiFidelityModel {
    levels: Vec<FittedLevel>,
    data: MultiFidelityData,
    configs: Vec<LevelConfig>,
}

impl MultiFidelityModel {
    /// Fits levels `1..s` in order; one RNG seeded from `options.seed` feeds every multi-start.
    pub fn fit(
        data: MultiFidelityData,
        configs: Vec<LevelConfig>,
        options: &FitOptions,
    ) -> Result<Self> {
        check_configs(&configs, data.levels(), data.dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let levels = (1..=data.levels())
            .map(|t| fit_level(t, &data, &configs[t - 1], options, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiFidelityModel {
            levels,
            data,
            configs,
        })
    }

    /// Builds the model for known parameters.
    pub fn from_parameters(data: MultiFidelityData, params: &[LevelParameters]) -> Result<Self> {
        let configs: Vec<LevelConfig> = params.iter().map(LevelParameters::config).collect();
        check_configs(&configs, data.levels(), data.dim())?;
        let levels = params
            .iter()
            .enumerate()
            .map(|(i, p)| FittedLevel::from_parameters(i + 1, &data, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiFidelityModel {
            levels,
            data,
            configs,
        })
    }

    /// Same parameters, new data.
    pub fn with_data_frozen(&self, data: MultiFidelityData) -> Result<Self> {
        Self::from_parameters(data, &self.parameters())
    }

    pub fn parameters(&self) -> Vec<LevelParameters> {
        self.levels.iter().map(FittedLevel::parameters).collect()
    }

    pub fn levels(&self) -> &[FittedLevel] {
        &self.levels
    }

    pub fn level(&self, t: usize) -> &FittedLevel {
        &self.levels[t - 1]
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn data(&self) -> &MultiFidelityData {
        &self.data
    }

    pub fn configs(&self) -> &[LevelConfig] {
        &self.configs
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub(crate) fn restore_likelihoods(&mut self, values: &[f64]) {
        for (level, v) in self.levels.iter_mut().zip(values) {
            level.neg_log_likelihood = *v;
        }
    }

    /// `ρ_{t-1}(x)` for level `t ≥ 2`.
    pub fn rho_eval(&self, t: usize, x: &[f64]) -> Result<f64> {
        if t == 0 || t > self.levels.len() {
            return Err(Error::contract(format!("no level {t}")));
        }
        self.levels[t - 1].rho(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<PredictionBreakdown> {
        let s = self.levels.len();
        let mut means = Vec::with_capacity(s);
        let mut variances = Vec::with_capacity(s);
        let mut local_variances = Vec::with_capacity(s);
        let mut rho = Vec::with_capacity(s.saturating_sub(1));
        for level in &self.levels {
            let local = level.core.local(x)?;
            let own_mean = level.trend.dot(x, &level.beta) + local.correction;
            let own_var = level.core.sigma2 * local.factor;
            match &level.scaling {
                None => {
                    means.push(own_mean);
                    variances.push(own_var);
                }
                Some((g, b)) => {
                    let r = g.dot(x, b);
                    let prev_mean = *means.last().expect("level 1 precedes");
                    let prev_var: f64 = *variances.last().expect("level 1 precedes");
                    means.push(r * prev_mean + own_mean);
                    variances.push(r * r * prev_var + own_var);
                    rho.push(r);
                }
            }
            local_variances.push(own_var);
        }
        let mut contributions = vec![0.0; s];
        let mut weight = 1.0;
        for t in (0..s).rev() {
            contributions[t] = weight * local_variances[t];
            if t > 0 {
                weight *= rho[t - 1] * rho[t - 1];
            }
        }
        Ok(PredictionBreakdown {
            means,
            variances,
            contributions,
            local_variances,
            rho,
        })
    }

    /// Variances at `x` for every level after hypothetically observing levels `1..=ell` there.
    pub fn hypothetical_variance_after(&self, x: &[f64], ell: usize) -> Result<Vec<f64>> {
        self.predict(x)?.hypothetical_after(ell)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::kriging::ThetaBounds;

    fn se(theta: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::SquaredExponential, vec![theta]).unwrap()
    }

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| vec![*x]).collect()
    }

    fn two_level(params2: LevelParameters) -> MultiFidelityModel {
        let d1 = pts(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let d2 = pts(&[0.0, 0.4, 0.8]);
        let z1: Vec<f64> = d1.iter().map(|x| (5.0 * x[0]).sin()).collect();
        let z2: Vec<f64> = d2.iter().map(|x| 2.0 * (5.0 * x[0]).sin() + x[0]).collect();
        let data = MultiFidelityData::new(vec![d1, d2], vec![z1, z2]).unwrap();
        let p1 = LevelParameters {
            kernel: se(0.3),
            trend: BasisSpec::constant(1),
            scaling: None,
            beta: vec![0.0],
            beta_rho: None,
            sigma2: 1.0,
        };
        MultiFidelityModel::from_parameters(data, &[p1, params2]).unwrap()
    }

    #[test]
    fn rho_evaluation() {
        let p = |g: BasisSpec, b: Vec<f64>| LevelParameters {
            kernel: se(0.5),
            trend: BasisSpec::constant(1),
            scaling: Some(g),
            beta: vec![0.0],
            beta_rho: Some(b),
            sigma2: 0.1,
        };
        let m = two_level(p(BasisSpec::constant(1), vec![1.0]));
        assert_eq!(m.rho_eval(2, &[0.37]).unwrap(), 1.0);
        let m = two_level(p(BasisSpec::constant(1), vec![0.0]));
        assert_eq!(m.rho_eval(2, &[0.91]).unwrap(), 0.0);
        let m = two_level(p(BasisSpec::linear(1), vec![0.5, -2.0]));
        assert!((m.rho_eval(2, &[0.25]).unwrap() - 0.0).abs() < 1e-15);
        assert!(matches!(m.rho_eval(1, &[0.25]), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_rho_decouples_levels() {
        let params2 = LevelParameters {
            kernel: se(0.5),
            trend: BasisSpec::constant(1),
            scaling: Some(BasisSpec::constant(1)),
            beta: vec![0.3],
            beta_rho: Some(vec![0.0]),
            sigma2: 0.7,
        };
        let m = two_level(params2);
        let d2 = m.data().design(2).to_vec();
        let z2 = m.data().observations(2).to_vec();
        let plain = FittedKriging::from_parameters(
            KrigingProblem::new(d2, z2, BasisSpec::constant(1), se(0.5)).unwrap(),
            vec![0.3],
            0.7,
        )
        .unwrap();
        for x in [0.05, 0.33, 0.5, 0.97] {
            let b = m.predict(&[x]).unwrap();
            let (mu, var) = plain.predict(&[x]).unwrap();
            assert!((b.mean() - mu).abs() < 1e-12);
            assert!((b.variance() - var).abs() < 1e-12);
        }
    }

    #[test]
    fn hypothetical_variances() {
        let params2 = LevelParameters {
            kernel: se(0.5),
            trend: BasisSpec::constant(1),
            scaling: Some(BasisSpec::constant(1)),
            beta: vec![0.0],
            beta_rho: Some(vec![1.7]),
            sigma2: 0.2,
        };
        let m = two_level(params2);
        let x = [0.63];
        let b = m.predict(&x).unwrap();
        assert_eq!(
            m.hypothetical_variance_after(&x, 2).unwrap(),
            vec![0.0, 0.0]
        );
        let h1 = m.hypothetical_variance_after(&x, 1).unwrap();
        assert_eq!(h1[0], 0.0);
        assert_eq!(h1[1], b.local_variances[1]);
        let drop = b.variance() - h1[1];
        assert!((drop - b.contributions[0]).abs() <= 1e-12 * b.variance());
    }

    #[test]
    fn nesting_is_checked_by_identity() {
        let d1 = pts(&[0.0, 0.5, 1.0]);
        let d2 = pts(&[0.5 + 1e-12]);
        let err = MultiFidelityData::new(vec![d1, d2], vec![vec![0.0; 3], vec![0.0]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn with_point_preserves_nesting_and_rejects_duplicates() {
        let d1 = pts(&[0.0, 0.5, 1.0]);
        let d2 = pts(&[0.5, 1.0]);
        let data = MultiFidelityData::new(vec![d1, d2], vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0]])
            .unwrap();
        let more = data.with_point(&[0.25], &[7.0, 8.0]).unwrap();
        assert_eq!(more.lower_at(2), vec![2.0, 3.0, 7.0]);
        assert!(
            MultiFidelityData::new(more.designs().to_vec(), more.all_observations().to_vec())
                .is_ok()
        );
        assert!(matches!(
            data.with_point(&[0.5], &[1.0]),
            Err(Error::DuplicateDesignPoint(_))
        ));
        assert!(matches!(
            data.with_point(&[0.3], &[]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn exact_scaling_relation_is_recovered() {
        let d1: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let d2: Vec<Vec<f64>> = d1.iter().step_by(2).cloned().collect();
        let z1: Vec<f64> = d1.iter().map(|x| (4.0 * x[0]).cos() + x[0]).collect();
        let z2: Vec<f64> = d2
            .iter()
            .map(|x| 2.0 * ((4.0 * x[0]).cos() + x[0]))
            .collect();
        let data = MultiFidelityData::new(vec![d1, d2], vec![z1, z2]).unwrap();
        let configs = LevelConfig::constant_stack(se(0.3), 2);
        let opts = FitOptions::new(ThetaBounds::for_sides(&[1.0]).unwrap()).with_seed(1);
        let m = MultiFidelityModel::fit(data, configs, &opts).unwrap();
        let rho = m.level(2).beta_rho().unwrap()[0];
        assert!((rho - 2.0).abs() < 1e-6, "rho = {rho}");
        assert!(m.level(2).sigma2() > 0.0);
    }

    #[test]
    fn zero_lower_level_makes_scaling_singular() {
        let d1 = pts(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let d2 = pts(&[0.0, 0.5, 0.75, 1.0]);
        let data =
            MultiFidelityData::new(vec![d1, d2], vec![vec![0.0; 5], vec![1.0, 2.0, 0.0, 3.0]])
                .unwrap();
        let opts = FitOptions::new(ThetaBounds::for_sides(&[1.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = LevelConfig::upper(BasisSpec::constant(1), BasisSpec::constant(1), se(0.3));
        let err = fit_level(2, &data, &cfg, &opts, &mut rng).unwrap_err();
        match err {
            Error::SingularTrend { block } => assert_eq!(block, "scaling"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
