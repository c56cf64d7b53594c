use crate::cokriging::MultiFidelityData;
use crate::error::{Error, Result};
use crate::sequential::{CostModel, Domain, Simulator};
use crate::testbed::NestedDesign;

type LevelFn = fn(&[f64]) -> f64;

/// An analytic code hierarchy, cheapest level first.
#[derive(Debug, Clone)]
pub struct TestProblem {
    pub name: &'static str,
    pub domain: Domain,
    pub levels: Vec<LevelFn>,
    pub costs: Vec<f64>,
}

impl TestProblem {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Level `t` (1-based) at `x`.
    pub fn eval(&self, t: usize, x: &[f64]) -> f64 {
        (self.levels[t - 1])(x)
    }

    /// Runs every level on its design.
    pub fn observe(&self, design: &NestedDesign) -> Result<MultiFidelityData> {
        if design.levels.len() != self.levels.len() {
            return Err(Error::contract(format!(
                "{} has {} levels, design has {}",
                self.name,
                self.levels.len(),
                design.levels.len()
            )));
        }
        let observations = design
            .levels
            .iter()
            .enumerate()
            .map(|(i, pts)| pts.iter().map(|x| self.eval(i + 1, x)).collect())
            .collect();
        MultiFidelityData::new(design.levels.clone(), observations)
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel::new(self.costs.clone()).expect("built-in costs are increasing")
    }
}

impl Simulator for TestProblem {
    fn levels(&self) -> usize {
        self.levels.len()
    }

    fn evaluate(&self, level: usize, x: &[f64]) -> std::result::Result<f64, String> {
        if level == 0 || level > self.levels.len() {
            return Err(format!("{} has no level {level}", self.name));
        }
        if x.len() != self.dim() {
            return Err(format!("expected {} inputs, got {}", self.dim(), x.len()));
        }
        Ok(self.eval(level, x))
    }
}

fn forrester(x: &[f64]) -> f64 {
    let x = x[0];
    (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
}

fn forrester_cheap(x: &[f64]) -> f64 {
    0.5 * forrester(x) + 10.0 * (x[0] - 0.5) - 5.0
}

fn currin(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let decay = if x2 > 0.0 {
        1.0 - (-1.0 / (2.0 * x2)).exp()
    } else {
        1.0
    };
    let num = 2300.0 * x1.powi(3) + 1900.0 * x1.powi(2) + 2092.0 * x1 + 60.0;
    let den = 100.0 * x1.powi(3) + 500.0 * x1.powi(2) + 4.0 * x1 + 20.0;
    decay * num / den
}

/// Average of the expensive function over four shifted corners.
fn currin_cheap(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let lo = (x2 - 0.05).max(0.0);
    0.25 * (currin(&[x1 + 0.05, x2 + 0.05])
        + currin(&[x1 + 0.05, lo])
        + currin(&[x1 - 0.05, x2 + 0.05])
        + currin(&[x1 - 0.05, lo]))
}

fn chain_mid(x: &[f64]) -> f64 {
    0.75 * forrester(x) + 4.0 * (x[0] - 0.5)
}

fn chain_low(x: &[f64]) -> f64 {
    0.5 * chain_mid(x) + 10.0 * (x[0] - 0.5) - 5.0
}

/// `forrester` (1D, 2 levels), `currin` (2D, 2 levels), `forrester3` (1D, 3 levels).
pub fn builtin_problems() -> Vec<TestProblem> {
    vec![
        TestProblem {
            name: "forrester",
            domain: Domain::unit(1),
            levels: vec![forrester_cheap, forrester],
            costs: vec![1.0, 5.0],
        },
        TestProblem {
            name: "currin",
            domain: Domain::unit(2),
            levels: vec![currin_cheap, currin],
            costs: vec![1.0, 10.0],
        },
        TestProblem {
            name: "forrester3",
            domain: Domain::unit(1),
            levels: vec![chain_low, chain_mid, forrester],
            costs: vec![1.0, 4.0, 16.0],
        },
    ]
}

pub fn builtin_problem(name: &str) -> Option<TestProblem> {
    builtin_problems().into_iter().find(|p| p.name == name)
}
