//! Sequential design for the co-kriging model.
//!
//! One iteration: find `x̃ = argmax s²_{Z_s}(x)`, compare the variance that would
//! remain after running the cheaper levels at `x̃` with the IMSE of the current
//! model, pick how deep to run, observe levels `1..=ℓ` at `x̃` and update the model.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cokriging::{MultiFidelityModel, PredictionBreakdown};
use crate::error::{Error, Result};
use crate::format;
use crate::kriging::{FitOptions, ThetaBounds};
use crate::optim::{nelder_mead, SimplexOptions};

/// Relative slack under which two variances count as tied in the argmax scan.
const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputMeasure {
    Uniform,
    WeightedSample {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

/// Input box `Q` and the measure `μ` used to average the variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub measure: InputMeasure,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Validation(
                "domain bounds must have matching, nonzero length".into(),
            ));
        }
        if let Some((lo, hi)) = lower.iter().zip(&upper).find(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Validation(format!(
                "domain needs lower < upper, got [{lo}, {hi}]"
            )));
        }
        Ok(Domain {
            lower,
            upper,
            measure: InputMeasure::Uniform,
        })
    }

    pub fn unit(dim: usize) -> Self {
        Domain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
            measure: InputMeasure::Uniform,
        }
    }

    pub fn with_weighted_sample(
        mut self,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::Validation(
                "one weight per sample point required".into(),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Validation("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("weights sum to {total}, not 1")));
        }
        if let Some(p) = points.iter().find(|p| !self.contains(p)) {
            return Err(Error::Validation(format!(
                "sample point {p:?} outside the domain"
            )));
        }
        self.measure = InputMeasure::WeightedSample { points, weights };
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sides(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Default lengthscale box for fits on this domain.
    pub fn theta_bounds(&self) -> Result<ThetaBounds> {
        ThetaBounds::for_sides(&self.sides())
    }

    fn uniform_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }

    /// Tensor grid, `per_dim` nodes per axis, in lexicographic order.
    fn grid(&self, per_dim: usize, midpoints: bool) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                (0..per_dim)
                    .map(|i| {
                        let frac = if midpoints {
                            (i as f64 + 0.5) / per_dim as f64
                        } else if per_dim == 1 {
                            0.5
                        } else {
                            i as f64 / (per_dim - 1) as f64
                        };
                        l + (u - l) * frac
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// Per-level run costs, strictly increasing with fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    costs: Vec<f64>,
}

impl CostModel {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::Validation(
                "cost model needs at least one level".into(),
            ));
        }
        if costs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Validation("costs must be positive".into()));
        }
        if costs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "costs must increase strictly with level".into(),
            ));
        }
        Ok(CostModel { costs })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn levels(&self) -> usize {
        self.costs.len()
    }

    /// Cost of running levels `1..=ell` at one point.
    pub fn through(&self, ell: usize) -> f64 {
        self.costs[..ell].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Search {
    /// `per_dim` equally spaced nodes per axis, bounds included.
    Grid {
        per_dim: usize,
    },
    Random {
        n: usize,
        seed: u64,
    },
    /// Random candidates; the best `starts` of them are polished by a simplex search.
    MultistartLocal {
        candidates: usize,
        starts: usize,
        seed: u64,
    },
}

impl Search {
    /// Grid up to two dimensions, random candidates with local polish beyond.
    pub fn default_for(dim: usize) -> Self {
        match dim {
            1 => Search::Grid { per_dim: 1001 },
            2 => Search::Grid { per_dim: 101 },
            _ => Search::MultistartLocal {
                candidates: 4096,
                starts: 5,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Quadrature {
    /// Midpoint rule, `per_dim` cells per axis.
    Grid {
        per_dim: usize,
    },
    MonteCarlo {
        n: usize,
        seed: u64,
    },
}

impl Quadrature {
    pub fn default_for(dim: usize) -> Self {
        match dim {
            1 => Quadrature::Grid { per_dim: 512 },
            2 => Quadrature::Grid { per_dim: 48 },
            _ => Quadrature::MonteCarlo { n: 4096, seed: 0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelRule {
    /// Smallest `ℓ` whose remaining variance at `x̃` falls below the IMSE.
    PaperImse,
    /// `ℓ` maximizing variance removed per unit cost.
    CostWeighted,
}

/// Anything that exposes a top-level posterior variance.
pub trait VarianceField {
    fn dim(&self) -> usize;
    fn top_variance(&self, x: &[f64]) -> Result<f64>;
}

impl VarianceField for MultiFidelityModel {
    fn dim(&self) -> usize {
        MultiFidelityModel::dim(self)
    }

    fn top_variance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict(x)?.variance())
    }
}

fn lex_sort(points: &mut [Vec<f64>]) {
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Scans candidates in the given order, keeping the first of any tie.
fn scan<F: VarianceField + ?Sized>(field: &F, candidates: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in candidates.iter().enumerate() {
        let v = field.top_variance(x)?;
        let better = match best {
            None => true,
            Some((_, b)) => v > b + TIE_REL * b.abs().max(f64::MIN_POSITIVE),
        };
        if better {
            best = Some((i, v));
        }
    }
    let (i, v) = best.ok_or_else(|| Error::contract("search budget must be at least 1"))?;
    Ok((candidates[i].clone(), v))
}

/// `argmax_x s²_{Z_s}(x)` over the domain.
pub fn argmax_variance<F: VarianceField + ?Sized>(
    field: &F,
    domain: &Domain,
    search: &Search,
) -> Result<Vec<f64>> {
    if field.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            found: domain.dim(),
        });
    }
    match *search {
        Search::Grid { per_dim } => {
            if per_dim == 0 {
                return Err(Error::contract("search budget must be at least 1"));
            }
            Ok(scan(field, &domain.grid(per_dim, false))?.0)
        }
        Search::Random { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cands: Vec<Vec<f64>> = (0..n).map(|_| domain.uniform_point(&mut rng)).collect();
            lex_sort(&mut cands);
            Ok(scan(field, &cands)?.0)
        }
        Search::MultistartLocal {
            candidates,
            starts,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cands: Vec<Vec<f64>> = (0..candidates.max(1))
                .map(|_| domain.uniform_point(&mut rng))
                .collect();
            lex_sort(&mut cands);
            let mut scored = cands
                .into_iter()
                .map(|x| field.top_variance(&x).map(|v| (x, v)))
                .collect::<Result<Vec<_>>>()?;
            // stable: equal variances keep lexicographic order
            scored.sort_by(|a, b| b.1.total_cmp(&a.1));
            let mut best = scored[0].clone();
            let opts = SimplexOptions {
                max_evals: 200,
                initial_step: 0.05,
                ..SimplexOptions::default()
            };
            for (start, _) in scored.iter().take(starts.max(1)) {
                let res = nelder_mead(
                    |x| field.top_variance(x).map(|v| -v).unwrap_or(f64::INFINITY),
                    start,
                    &domain.lower,
                    &domain.upper,
                    opts,
                );
                let v = -res.value;
                if v > best.1 + TIE_REL * best.1.abs() {
                    best = (res.x, v);
                }
            }
            Ok(best.0)
        }
    }
}

/// IMSE estimate, with a standard error for Monte Carlo rules (zero otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImseEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// `∫_Q s²_{Z_s}(x) dμ(x)` under the domain's input measure.
pub fn compute_imse<F: VarianceField + ?Sized>(
    field: &F,
    domain: &Domain,
    quadrature: &Quadrature,
) -> Result<f64> {
    Ok(estimate_imse(field, domain, quadrature)?.value)
}

pub fn estimate_imse<F: VarianceField + ?Sized>(
    field: &F,
    domain: &Domain,
    quadrature: &Quadrature,
) -> Result<ImseEstimate> {
    if field.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            found: domain.dim(),
        });
    }
    if let InputMeasure::WeightedSample { points, weights } = &domain.measure {
        let mut total = 0.0;
        for (x, w) in points.iter().zip(weights) {
            total += w * field.top_variance(x)?;
        }
        return Ok(ImseEstimate {
            value: total,
            std_error: 0.0,
        });
    }
    match *quadrature {
        Quadrature::Grid { per_dim } => {
            if per_dim == 0 {
                return Err(Error::contract("quadrature needs at least one node"));
            }
            let nodes = domain.grid(per_dim, true);
            let mut total = 0.0;
            for x in &nodes {
                total += field.top_variance(x)?;
            }
            Ok(ImseEstimate {
                value: total / nodes.len() as f64,
                std_error: 0.0,
            })
        }
        Quadrature::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(Error::contract("quadrature needs at least one node"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let v = field.top_variance(&domain.uniform_point(&mut rng))?;
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / n as f64;
            let var = if n > 1 {
                ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0)
            } else {
                0.0
            };
            Ok(ImseEstimate {
                value: mean,
                std_error: (var / n as f64).sqrt(),
            })
        }
    }
}

/// Level choice from a prediction breakdown at `x̃`.
pub fn choose_level_from(
    breakdown: &PredictionBreakdown,
    imse: f64,
    cost: &CostModel,
    rule: LevelRule,
) -> Result<usize> {
    let s = breakdown.levels();
    if cost.levels() != s {
        return Err(Error::contract(format!(
            "cost model has {} levels, model has {s}",
            cost.levels()
        )));
    }
    let remaining = |ell: usize| -> Result<f64> { Ok(breakdown.hypothetical_after(ell)?[s - 1]) };
    match rule {
        LevelRule::PaperImse => {
            for ell in 1..s {
                if remaining(ell)? < imse {
                    return Ok(ell);
                }
            }
            Ok(s)
        }
        LevelRule::CostWeighted => {
            let total = breakdown.variance();
            let mut best = (1, f64::NEG_INFINITY);
            for ell in 1..=s {
                let ratio = (total - remaining(ell)?) / cost.through(ell);
                if ratio > best.1 {
                    best = (ell, ratio);
                }
            }
            Ok(best.0)
        }
    }
}

/// Deepest level to run at `x̃`; levels `1..=ℓ` are all run there.
pub fn choose_level(
    model: &MultiFidelityModel,
    x: &[f64],
    imse: f64,
    cost: &CostModel,
    rule: LevelRule,
) -> Result<usize> {
    choose_level_from(&model.predict(x)?, imse, cost, rule)
}

/// How parameters are treated when the model is updated.
#[derive(Debug, Clone)]
pub enum Update<'a> {
    /// Keep every parameter; only the data and factorizations change.
    Frozen,
    /// Re-estimate all levels.
    Refit(&'a FitOptions),
}

/// Adds `x̃` to `D_1 … D_ℓ` with `values[t-1]` observed at level `t` and rebuilds the model.
pub fn enrich(
    model: &MultiFidelityModel,
    x: &[f64],
    values: &[f64],
    update: Update<'_>,
) -> Result<MultiFidelityModel> {
    let data = model.data().with_point(x, values)?;
    match update {
        Update::Frozen => model.with_data_frozen(data),
        Update::Refit(options) => MultiFidelityModel::fit(data, model.configs().to_vec(), options),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefitPolicy {
    Never,
    Every(usize),
    Always,
}

impl RefitPolicy {
    fn refit_at(self, iteration: usize) -> bool {
        match self {
            RefitPolicy::Never => false,
            RefitPolicy::Always => true,
            RefitPolicy::Every(k) => k > 0 && iteration.is_multiple_of(k),
        }
    }
}

/// Evaluates the code hierarchy.
pub trait Simulator {
    fn levels(&self) -> usize;
    fn evaluate(&self, level: usize, x: &[f64]) -> std::result::Result<f64, String>;
}

#[derive(Debug, Clone)]
pub struct LoopSettings {
    pub budget: f64,
    pub rule: LevelRule,
    pub search: Search,
    pub quadrature: Quadrature,
    pub refit: RefitPolicy,
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub x: Vec<f64>,
    pub level: usize,
    /// Observed values for levels `1..=level`.
    pub values: Vec<f64>,
    pub imse_before: f64,
    pub imse_after: f64,
    pub cum_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum StopReason {
    /// The next chosen level set would exceed the budget.
    Budget,
    /// The maximum-variance point is already a level-1 design point.
    Saturated,
    SimulatorFailed(String),
    UpdateFailed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentTrace {
    pub dim: usize,
    pub levels: usize,
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
}

impl EnrichmentTrace {
    pub fn new(dim: usize, levels: usize) -> Self {
        EnrichmentTrace {
            dim,
            levels,
            rows: Vec::new(),
            stop: StopReason::Budget,
        }
    }

    /// False when the loop was cut short by a failure.
    pub fn is_complete(&self) -> bool {
        matches!(self.stop, StopReason::Budget | StopReason::Saturated)
    }

    pub fn header(dim: usize, levels: usize) -> Vec<String> {
        let mut h = vec!["iter".to_string()];
        h.extend((0..dim).map(|k| format!("x_{k}")));
        h.push("level".into());
        h.extend((1..=levels).map(|t| format!("z_{t}")));
        h.extend(["imse_before", "imse_after", "cum_cost"].map(String::from));
        h
    }

    /// CSV: `iter, x_0..x_{d-1}, level, z_1..z_s, imse_before, imse_after, cum_cost`;
    /// `z_t` is empty for levels not run in that iteration.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Validation(format!("writing trace: {e}"));
        w.write_record(Self::header(self.dim, self.levels))
            .map_err(to_err)?;
        for row in &self.rows {
            let mut rec = vec![row.iter.to_string()];
            rec.extend(row.x.iter().map(|v| format::float(*v)));
            rec.push(row.level.to_string());
            rec.extend((0..self.levels).map(|t| {
                row.values
                    .get(t)
                    .map_or(String::new(), |v| format::float(*v))
            }));
            rec.push(format::float(row.imse_before));
            rec.push(format::float(row.imse_after));
            rec.push(format::float(row.cum_cost));
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush()
            .map_err(|e| Error::Validation(format!("writing trace: {e}")))?;
        Ok(())
    }

    /// Parses a trace written by [`write_csv`](Self::write_csv); the stop reason is not stored.
    pub fn read_csv<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let dim = cols.iter().filter(|c| c.starts_with("x_")).count();
        let levels = cols.iter().filter(|c| c.starts_with("z_")).count();
        let expected = Self::header(dim, levels);
        if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() || levels == 0 {
            return Err(parse_err(1, format!("unexpected trace header {cols:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            if rec.len() != expected.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", expected.len(), rec.len()),
                ));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(line, format!("column {}: {e}", expected[k])))
            };
            let int = |k: usize| -> Result<usize> {
                rec[k]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err(line, format!("column {}: {e}", expected[k])))
            };
            let iter = int(0)?;
            let x = (1..=dim).map(num).collect::<Result<Vec<_>>>()?;
            let level = int(dim + 1)?;
            if level == 0 || level > levels {
                return Err(parse_err(line, format!("level {level} out of range")));
            }
            let values = (0..level)
                .map(|t| num(dim + 2 + t))
                .collect::<Result<Vec<_>>>()?;
            let base = dim + 2 + levels;
            rows.push(TraceRow {
                iter,
                x,
                level,
                values,
                imse_before: num(base)?,
                imse_after: num(base + 1)?,
                cum_cost: num(base + 2)?,
            });
        }
        Ok(EnrichmentTrace {
            dim,
            levels,
            rows,
            stop: StopReason::Budget,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub trace: EnrichmentTrace,
    pub model: MultiFidelityModel,
    pub initial_imse: f64,
}

/// Runs argmax → level choice → observe → update until the budget would be exceeded.
pub fn run_loop<S: Simulator + ?Sized>(
    initial: MultiFidelityModel,
    domain: &Domain,
    cost: &CostModel,
    settings: &LoopSettings,
    simulator: &S,
) -> Result<LoopOutcome> {
    let s = initial.level_count();
    if cost.levels() != s || simulator.levels() != s {
        return Err(Error::contract(format!(
            "model has {s} levels, cost model {}, simulator {}",
            cost.levels(),
            simulator.levels()
        )));
    }
    let mut trace = EnrichmentTrace::new(initial.dim(), s);
    let mut model = initial;
    let mut imse = compute_imse(&model, domain, &settings.quadrature)?;
    let initial_imse = imse;
    let mut cum_cost = 0.0;
    if settings.budget < cost.through(1) {
        return Ok(LoopOutcome {
            trace,
            model,
            initial_imse,
        });
    }
    let mut iter = 0;
    loop {
        let x = argmax_variance(&model, domain, &settings.search)?;
        if model.data().design(1).contains(&x) {
            trace.stop = StopReason::Saturated;
            break;
        }
        let level = choose_level(&model, &x, imse, cost, settings.rule)?;
        let step = cost.through(level);
        if cum_cost + step > settings.budget {
            trace.stop = StopReason::Budget;
            break;
        }
        let mut values = Vec::with_capacity(level);
        for t in 1..=level {
            match simulator.evaluate(t, &x) {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(v) => {
                    values.clear();
                    trace.stop = StopReason::SimulatorFailed(format!("level {t} returned {v}"));
                    break;
                }
                Err(msg) => {
                    values.clear();
                    trace.stop = StopReason::SimulatorFailed(format!("level {t}: {msg}"));
                    break;
                }
            }
        }
        if values.is_empty() {
            break;
        }
        iter += 1;
        let update = if settings.refit.refit_at(iter) {
            Update::Refit(&settings.fit)
        } else {
            Update::Frozen
        };
        let next = match enrich(&model, &x, &values, update) {
            Ok(m) => m,
            Err(e) => {
                trace.stop = StopReason::UpdateFailed(e.to_string());
                break;
            }
        };
        let imse_after = compute_imse(&next, domain, &settings.quadrature)?;
        cum_cost += step;
        trace.rows.push(TraceRow {
            iter,
            x,
            level,
            values,
            imse_before: imse,
            imse_after,
            cum_cost,
        });
        model = next;
        imse = imse_after;
    }
    Ok(LoopOutcome {
        trace,
        model,
        initial_imse,
    })
}
