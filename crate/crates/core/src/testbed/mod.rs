//! Designs, analytic test problems and on-disk formats.

mod design;
pub mod io;
mod problems;

pub use design::{nested_lhs, validate_nesting, NestedDesign, NestingViolation};
pub use problems::{builtin_problem, builtin_problems, TestProblem};
