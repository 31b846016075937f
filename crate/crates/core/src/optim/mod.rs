//! Dense linear, quadratic and mixed-integer linear programming.
//!
//! Everything else in the crate reduces to three solvers:
//!
//! * [`solve_lp`]: bounded-variable primal simplex on a dense tableau, with a
//!   dual simplex used for warm starts after bound changes.
//! * [`solve_qp`]: primal active-set method for strictly convex QPs.
//! * [`solve_milp`]: best-first branch and bound over binary variables.
//!
//! Problem sizes in this crate stay in the low hundreds of rows and columns,
//! so all factorizations are dense.

mod lp;
mod milp;
mod qp;

use nalgebra::{DMatrix, DVector};

pub use lp::solve_lp;
pub use milp::{solve_milp, solve_milp_with, MilpOptions};
pub use qp::{solve_qp, solve_qp_warm};

use crate::{Error, Result};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Distance from {0, 1} under which a binary counts as integral.
pub const INT_TOL: f64 = 1e-6;
/// Default relative MILP gap, applied as `rel_gap * (1 + |incumbent|)`.
pub const DEFAULT_REL_GAP: f64 = 1e-9;

/// `min cost'x  s.t.  a_ub x <= b_ub,  a_eq x = b_eq,  lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl LinearProgram {
    /// An LP over `n` free variables with no constraints.
    pub fn new(cost: DVector<f64>) -> Self {
        let n = cost.len();
        Self {
            cost,
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ub = a;
        self.b_ub = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cost.len();
        let check = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found,
                })
            }
        };
        check("inequality columns", n, self.a_ub.ncols())?;
        check("inequality rhs", self.a_ub.nrows(), self.b_ub.len())?;
        check("equality columns", n, self.a_eq.ncols())?;
        check("equality rhs", self.a_eq.nrows(), self.b_eq.len())?;
        check("lower bounds", n, self.lower.len())?;
        check("upper bounds", n, self.upper.len())?;
        if self.b_ub.iter().chain(self.b_eq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite right-hand side".into()));
        }
        if self.a_ub.iter().chain(self.a_eq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite constraint coefficient".into()));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY {
                return Err(Error::InvalidInput(format!("empty bound range on variable {j}")));
            }
        }
        Ok(())
    }

    /// Largest violation of constraints and bounds at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        if self.a_ub.nrows() > 0 {
            let r = &self.a_ub * x - &self.b_ub;
            worst = r.iter().fold(worst, |w, &v| w.max(v));
        }
        if self.a_eq.nrows() > 0 {
            let r = &self.a_eq * x - &self.b_eq;
            worst = r.iter().fold(worst, |w, &v| w.max(v.abs()));
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

/// `min 1/2 x'Hx + linear'x  s.t.  a_ub x <= b_ub,  a_eq x = b_eq`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ub = a;
        self.b_ub = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Binary-constrained LP.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub base: LinearProgram,
    pub integrality: Vec<usize>,
    pub sense: Sense,
}

impl MilpProblem {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let n = self.base.num_vars();
        for &j in &self.integrality {
            if j >= n {
                return Err(Error::InvalidInput(format!("binary index {j} out of range")));
            }
            if self.base.lower[j] < 0.0 || self.base.upper[j] > 1.0 {
                return Err(Error::InvalidInput(format!(
                    "binary variable {j} has bounds outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Branch and bound stopped at the node limit; `point`/`value` hold the
    /// incumbent (if any) and `gap` the remaining bound gap.
    NodeLimit,
    /// No solution strictly better than the supplied cutoff exists.
    Cutoff,
}

/// Multipliers of an LP or QP, in the convention
/// `grad f + a_ub' ineq + a_eq' eq - reduced = 0` with `ineq >= 0`.
#[derive(Debug, Clone)]
pub struct Duals {
    pub ineq: DVector<f64>,
    pub eq: DVector<f64>,
    /// Bound multipliers (LP only; zero for QPs).
    pub reduced: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub point: DVector<f64>,
    pub value: f64,
    pub duals: Option<Duals>,
    /// Active inequality indices (QP) or inequalities holding with equality (LP).
    pub active_set: Vec<usize>,
    /// Absolute bound gap (MILP only).
    pub gap: f64,
    /// Branch-and-bound nodes whose relaxation was solved (MILP only).
    pub nodes: usize,
}

impl SolveResult {
    pub(crate) fn without_solution(status: SolveStatus, n: usize) -> Self {
        let value = match status {
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        Self {
            status,
            point: DVector::zeros(n),
            value,
            duals: None,
            active_set: Vec::new(),
            gap: f64::INFINITY,
            nodes: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
