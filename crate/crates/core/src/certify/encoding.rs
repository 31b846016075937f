//! Column and row bookkeeping for mixed-integer encodings.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::optim::{solve_milp_with, LinearProgram, MilpOptions, MilpProblem, Sense, SolveResult};
use crate::{Error, Result};

/// Affine expression `sum_j c_j v_j + constant` over encoding columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        Self {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    /// `self += c * v_j`.
    pub fn add_term(&mut self, j: usize, c: f64) -> &mut Self {
        if c != 0.0 {
            self.terms.push((j, c));
        }
        self
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Expr) -> &mut Self {
        if c != 0.0 {
            self.terms.extend(other.terms.iter().map(|&(j, v)| (j, c * v)));
            self.constant += c * other.constant;
        }
        self
    }

    pub fn scaled(&self, c: f64) -> Expr {
        let mut e = Expr::default();
        e.axpy(c, self);
        e
    }

    pub fn minus(&self, other: &Expr) -> Expr {
        let mut e = self.clone();
        e.axpy(-1.0, other);
        e
    }

    pub fn eval(&self, point: &DVector<f64>) -> f64 {
        self.terms.iter().map(|&(j, c)| c * point[j]).sum::<f64>() + self.constant
    }
}

/// Variables, named blocks and constraints of a mixed-integer linear model.
///
/// Rows are stored as expressions: `le` rows mean `expr <= 0`, `eq` rows
/// mean `expr = 0`. Every binary column belongs to exactly one one-hot group.
#[derive(Debug, Clone, Default)]
pub struct MiEncoding {
    lower: Vec<f64>,
    upper: Vec<f64>,
    binary: Vec<bool>,
    blocks: Vec<(String, Range<usize>)>,
    le_rows: Vec<Expr>,
    eq_rows: Vec<Expr>,
    one_hot: Vec<Range<usize>>,
}

impl MiEncoding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: impl Into<String>, len: usize, lower: f64, upper: f64) -> Range<usize> {
        let start = self.lower.len();
        self.lower.extend(std::iter::repeat_n(lower, len));
        self.upper.extend(std::iter::repeat_n(upper, len));
        self.binary.extend(std::iter::repeat_n(false, len));
        self.blocks.push((name.into(), start..start + len));
        start..start + len
    }

    pub fn add_free_block(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        self.add_block(name, len, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Binary block whose entries sum to one.
    pub fn add_one_hot(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        let r = self.add_block(name, len, 0.0, 1.0);
        for j in r.clone() {
            self.binary[j] = true;
        }
        let mut sum = Expr::constant(-1.0);
        for j in r.clone() {
            sum.add_term(j, 1.0);
        }
        self.eq(sum);
        self.one_hot.push(r.clone());
        r
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn blocks(&self) -> &[(String, Range<usize>)] {
        &self.blocks
    }

    pub fn one_hot_groups(&self) -> &[Range<usize>] {
        &self.one_hot
    }

    pub fn num_cols(&self) -> usize {
        self.lower.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.binary.iter().filter(|b| **b).count()
    }

    pub fn num_rows(&self) -> usize {
        self.le_rows.len() + self.eq_rows.len()
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.binary[j]
    }

    /// `expr <= 0`.
    pub fn le(&mut self, expr: Expr) {
        self.le_rows.push(expr);
    }

    /// `expr = 0`.
    pub fn eq(&mut self, expr: Expr) {
        self.eq_rows.push(expr);
    }

    /// Fixes column `j` to `value` through its bounds.
    pub fn fix(&mut self, j: usize, value: f64) {
        self.lower[j] = value;
        self.upper[j] = value;
    }

    /// Blocks are disjoint, contiguous and cover all columns; every binary
    /// lies in exactly one one-hot group.
    pub fn check_invariants(&self) -> Result<()> {
        let mut next = 0;
        for (name, r) in &self.blocks {
            if r.start != next {
                return Err(Error::InvalidInput(format!("block {name} is not contiguous")));
            }
            next = r.end;
        }
        if next != self.num_cols() {
            return Err(Error::InvalidInput("columns outside any block".into()));
        }
        let mut seen = vec![0usize; self.num_cols()];
        for g in &self.one_hot {
            for j in g.clone() {
                seen[j] += 1;
            }
        }
        for j in 0..self.num_cols() {
            if self.binary[j] != (seen[j] == 1) || seen[j] > 1 {
                return Err(Error::InvalidInput(format!("binary column {j} not in exactly one group")));
            }
        }
        Ok(())
    }

    fn dense(&self, rows: &[Expr]) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(rows.len(), self.num_cols());
        let mut b = DVector::zeros(rows.len());
        for (i, e) in rows.iter().enumerate() {
            for &(j, c) in &e.terms {
                a[(i, j)] += c;
            }
            b[i] = -e.constant;
        }
        (a, b)
    }

    /// The model as a MILP optimizing `objective` (its constant is dropped).
    pub fn to_milp(&self, objective: &Expr, sense: Sense) -> MilpProblem {
        let mut cost = DVector::zeros(self.num_cols());
        for &(j, c) in &objective.terms {
            cost[j] += c;
        }
        let (a_ub, b_ub) = self.dense(&self.le_rows);
        let (a_eq, b_eq) = self.dense(&self.eq_rows);
        let base = LinearProgram::new(cost)
            .with_inequalities(a_ub, b_ub)
            .with_equalities(a_eq, b_eq)
            .with_bounds(DVector::from_column_slice(&self.lower), DVector::from_column_slice(&self.upper));
        MilpProblem {
            base,
            integrality: (0..self.num_cols()).filter(|&j| self.binary[j]).collect(),
            sense,
        }
    }

    /// Solves with `objective`; the returned value includes its constant.
    pub fn solve(&self, objective: &Expr, sense: Sense, opts: &MilpOptions) -> Result<SolveResult> {
        let mut opts = opts.clone();
        opts.cutoff = opts.cutoff.map(|c| c - objective.constant);
        let mut r = solve_milp_with(&self.to_milp(objective, sense), &opts)?;
        r.value += objective.constant;
        Ok(r)
    }

    /// Any feasible point.
    pub fn feasible_point(&self) -> Result<Option<DVector<f64>>> {
        let r = self.solve(&Expr::default(), Sense::Minimize, &MilpOptions::default())?;
        Ok(r.is_optimal().then_some(r.point))
    }
}
