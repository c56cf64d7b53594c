//! Turns a [`RunConfig`] into a domain, level configurations, a simulator and data.

use mfk_core::sequential::Simulator;
use mfk_core::testbed::{self, builtin_problem, nested_lhs, TestProblem};
use mfk_core::{
    BasisSpec, CostModel, Domain, Error, FitOptions, KernelSpec, LevelConfig, MultiFidelityData,
    Result,
};

use crate::config::RunConfig;
use crate::simulator::CommandSimulator;

pub enum Code {
    Builtin(TestProblem),
    Command(CommandSimulator),
}

impl Code {
    pub fn simulator(&self) -> &dyn Simulator {
        match self {
            Code::Builtin(p) => p,
            Code::Command(c) => c,
        }
    }
}

pub struct Setup {
    pub domain: Domain,
    pub data: MultiFidelityData,
    pub code: Option<Code>,
    pub configs: Vec<LevelConfig>,
    pub fit: FitOptions,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        return Err(invalid("design.sizes is empty"));
    }
    if sizes[0] < 2 {
        return Err(invalid("design.sizes[0] must be at least 2"));
    }
    if let Some(t) = sizes.windows(2).position(|w| w[1] > w[0]) {
        return Err(invalid(format!(
            "design.sizes must be non-increasing: level {} has {} points but level {} has {}",
            t + 2,
            sizes[t + 1],
            t + 1,
            sizes[t]
        )));
    }
    if sizes.contains(&0) {
        return Err(invalid("design.sizes must be positive"));
    }
    Ok(())
}

fn bounding_box(data: &MultiFidelityData) -> Result<Domain> {
    let d = data.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in data.design(1) {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    Domain::new(lo, hi)
        .map_err(|_| invalid("cannot infer the input box from the data; set problem.lower/upper"))
}

fn code(cfg: &RunConfig) -> Result<Option<Code>> {
    let p = &cfg.problem;
    match (&p.builtin, &p.command) {
        (Some(_), Some(_)) => Err(invalid("problem.builtin and problem.command are exclusive")),
        (Some(name), None) => builtin_problem(name)
            .map(|b| Some(Code::Builtin(b)))
            .ok_or_else(|| {
                let known: Vec<&str> = testbed::builtin_problems().iter().map(|b| b.name).collect();
                invalid(format!(
                    "unknown built-in problem {name:?} (known: {})",
                    known.join(", ")
                ))
            }),
        (None, Some(cmd)) => {
            let (program, args) = cmd
                .split_first()
                .ok_or_else(|| invalid("problem.command is empty"))?;
            let levels = p
                .levels
                .ok_or_else(|| invalid("problem.levels is required with problem.command"))?;
            let mut program = std::path::PathBuf::from(program);
            if program.components().count() > 1 {
                program = cfg.resolve(&program);
                if !program.exists() {
                    return Err(Error::Io {
                        path: program,
                        source: std::io::ErrorKind::NotFound.into(),
                    });
                }
            }
            Ok(Some(Code::Command(CommandSimulator {
                program,
                args: args.to_vec(),
                levels,
            })))
        }
        (None, None) => Ok(None),
    }
}

fn observe(code: &Code, design: &testbed::NestedDesign) -> Result<MultiFidelityData> {
    let sim = code.simulator();
    let mut observations = Vec::new();
    for (i, pts) in design.levels.iter().enumerate() {
        let mut z = Vec::with_capacity(pts.len());
        for x in pts {
            let v = sim.evaluate(i + 1, x).map_err(|message| Error::Simulator {
                level: i + 1,
                message,
            })?;
            if !v.is_finite() {
                return Err(Error::Simulator {
                    level: i + 1,
                    message: format!("non-finite value {v} at {x:?}"),
                });
            }
            z.push(v);
        }
        observations.push(z);
    }
    MultiFidelityData::new(design.levels.clone(), observations)
}

impl Setup {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let code = code(cfg)?;
        let p = &cfg.problem;
        let explicit = match (&p.lower, &p.upper) {
            (Some(lo), Some(hi)) => Some(
                Domain::new(lo.clone(), hi.clone())
                    .map_err(|e| invalid(format!("problem.lower/upper: {e}")))?,
            ),
            (None, None) => None,
            _ => return Err(invalid("problem.lower and problem.upper go together")),
        };
        let (domain, data) = if let Some(dir) = &p.data_dir {
            let dir = cfg.resolve(dir);
            if !dir.is_dir() {
                return Err(Error::Io {
                    path: dir,
                    source: std::io::ErrorKind::NotFound.into(),
                });
            }
            let data = testbed::io::load_data(&dir, p.levels)?;
            let domain = match (explicit, &code) {
                (Some(q), _) => q,
                (None, Some(Code::Builtin(b))) => b.domain.clone(),
                (None, _) => bounding_box(&data)?,
            };
            (domain, data)
        } else {
            let code = code
                .as_ref()
                .ok_or_else(|| invalid("problem needs data_dir, builtin or command"))?;
            let sizes = &cfg
                .design
                .as_ref()
                .ok_or_else(|| invalid("[design] sizes are required without problem.data_dir"))?
                .sizes;
            check_sizes(sizes)?;
            let levels = code.simulator().levels();
            if sizes.len() != levels {
                return Err(invalid(format!(
                    "design.sizes has {} entries but the problem has {levels} levels",
                    sizes.len()
                )));
            }
            let domain = match (explicit, code) {
                (Some(q), _) => q,
                (None, Code::Builtin(b)) => b.domain.clone(),
                (None, Code::Command(_)) => {
                    return Err(invalid(
                        "problem.lower/upper are required with problem.command",
                    ))
                }
            };
            let design = nested_lhs(sizes, &domain, cfg.seed)?;
            (domain, observe(code, &design)?)
        };
        if domain.dim() != data.dim() {
            return Err(invalid(format!(
                "input box has dimension {} but the data has {}",
                domain.dim(),
                data.dim()
            )));
        }
        if let Some(c) = &code {
            if c.simulator().levels() != data.levels() {
                return Err(invalid(format!(
                    "data has {} levels but the problem has {}",
                    data.levels(),
                    c.simulator().levels()
                )));
            }
        }
        let configs = level_configs(cfg, &domain, data.levels())?;
        if cfg.fit.restarts == 0 {
            return Err(invalid("fit.restarts must be at least 1"));
        }
        let fit = FitOptions::new(domain.theta_bounds()?)
            .with_restarts(cfg.fit.restarts)
            .with_seed(cfg.seed);
        Ok(Setup {
            domain,
            data,
            code,
            configs,
            fit,
        })
    }

    pub fn costs(&self, cfg: &RunConfig) -> Result<CostModel> {
        let seq = cfg.sequential()?;
        let costs = match (&seq.costs, &self.code) {
            (Some(c), _) => c.clone(),
            (None, Some(Code::Builtin(b))) => b.costs.clone(),
            (None, _) => return Err(invalid("sequential.costs is required")),
        };
        if costs.len() != self.data.levels() {
            return Err(invalid(format!(
                "sequential.costs has {} entries for {} levels",
                costs.len(),
                self.data.levels()
            )));
        }
        CostModel::new(costs).map_err(|e| invalid(format!("sequential.costs: {e}")))
    }
}

fn level_configs(cfg: &RunConfig, domain: &Domain, levels: usize) -> Result<Vec<LevelConfig>> {
    let m = &cfg.model;
    if m.level.len() > levels {
        return Err(invalid(format!(
            "{} [[model.level]] entries for {levels} levels",
            m.level.len()
        )));
    }
    let d = domain.dim();
    let start: Vec<f64> = domain.sides().iter().map(|s| 0.3 * s).collect();
    (1..=levels)
        .map(|t| {
            let o = m.level.get(t - 1).cloned().unwrap_or_default();
            let kernel = KernelSpec::new(o.kernel.unwrap_or(m.kernel), start.clone())?;
            let trend = BasisSpec {
                kind: o.trend.unwrap_or(m.trend),
                dim: d,
            };
            if t == 1 {
                if o.scaling.is_some() {
                    return Err(invalid("level 1 takes no scaling basis"));
                }
                Ok(LevelConfig::base(trend, kernel))
            } else {
                let scaling = BasisSpec {
                    kind: o.scaling.unwrap_or(m.scaling),
                    dim: d,
                };
                Ok(LevelConfig::upper(trend, scaling, kernel))
            }
        })
        .collect()
}
