//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//!
//! [problem]
//! builtin = "forrester"          # or: data_dir = "runs/data", command = ["./sim"], levels = 2
//! # lower = [0.0]                # input box; defaults to the built-in box or the data's bounding box
//! # upper = [1.0]
//!
//! [design]
//! sizes = [12, 6]                # level-1 first; ignored when data_dir is given
//!
//! [model]
//! kernel = "squared-exponential" # or "matern-5/2"
//! trend = "constant"             # or "linear"
//! scaling = "constant"
//! # [[model.level]]              # per-level overrides, level 1 first
//! # kernel = "matern-5/2"
//!
//! [fit]
//! restarts = 5
//!
//! [sequential]
//! costs = [1.0, 5.0]             # defaults to the built-in costs
//! budget = 30.0
//! rule = "paper-imse"            # or "cost-weighted"
//! refit = "always"               # "never", "always" or { every = 3 }
//! # search = { kind = "grid", per_dim = 1001 }
//! # quadrature = { kind = "monte-carlo", n = 4096, seed = 1 }
//! ```

use std::path::{Path, PathBuf};

use mfk_core::sequential::RefitPolicy;
use mfk_core::{BasisKind, Error, KernelFamily, LevelRule, Quadrature, Result, Search};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fit: FitConfig,
    pub sequential: Option<SequentialConfig>,
    /// Directory holding the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub builtin: Option<String>,
    pub data_dir: Option<PathBuf>,
    /// External program run as `program args… <level> <x_0> … <x_{d-1}>`, printing one number.
    pub command: Option<Vec<String>>,
    pub levels: Option<usize>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_kernel")]
    pub kernel: KernelFamily,
    #[serde(default = "default_basis")]
    pub trend: BasisKind,
    #[serde(default = "default_basis")]
    pub scaling: BasisKind,
    #[serde(default)]
    pub level: Vec<LevelOverride>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: default_kernel(),
            trend: default_basis(),
            scaling: default_basis(),
            level: Vec::new(),
        }
    }
}

fn default_kernel() -> KernelFamily {
    KernelFamily::SquaredExponential
}

fn default_basis() -> BasisKind {
    BasisKind::Constant
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelOverride {
    pub kernel: Option<KernelFamily>,
    pub trend: Option<BasisKind>,
    pub scaling: Option<BasisKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: default_restarts(),
        }
    }
}

fn default_restarts() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequentialConfig {
    pub costs: Option<Vec<f64>>,
    pub budget: f64,
    #[serde(default = "default_rule")]
    pub rule: LevelRule,
    #[serde(default = "default_refit")]
    pub refit: RefitPolicy,
    pub search: Option<Search>,
    pub quadrature: Option<Quadrature>,
}

fn default_rule() -> LevelRule {
    LevelRule::PaperImse
}

fn default_refit() -> RefitPolicy {
    RefitPolicy::Always
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(&text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn sequential(&self) -> Result<&SequentialConfig> {
        self.sequential
            .as_ref()
            .ok_or_else(|| Error::Validation("config has no [sequential] section".into()))
    }
}
