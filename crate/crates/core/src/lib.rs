//! Multi-fidelity co-kriging surrogates with sequential design.
//!
//! - [`kernels`]: correlation kernels and regression bases
//! - [`kriging`]: single-level universal kriging with profile-likelihood fitting
//! - [`cokriging`]: the recursive `s`-level autoregressive model
//! - [`joint_oracle`]: the same model through its full joint covariance (test oracle)
//! - [`sequential`]: maximum-variance search, IMSE and level choice, enrichment loop
//! - [`testbed`]: nested designs, analytic test problems, file formats

pub mod cokriging;
pub mod error;
mod format;
pub mod joint_oracle;
pub mod kernels;
pub mod kriging;
pub mod optim;
pub mod sequential;
pub mod testbed;

pub use cokriging::{
    LevelConfig, LevelParameters, MultiFidelityData, MultiFidelityModel, PredictionBreakdown,
};
pub use error::{Error, Result};
pub use kernels::{BasisKind, BasisSpec, KernelFamily, KernelSpec, NUGGET};
pub use kriging::{FitOptions, FittedKriging, KrigingProblem, ThetaBounds};
pub use sequential::{CostModel, Domain, EnrichmentTrace, LevelRule, Quadrature, Search};
pub use testbed::NestedDesign;
