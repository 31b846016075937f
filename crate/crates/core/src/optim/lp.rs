//! Bounded-variable simplex on a dense tableau.
//!
//! The LP is brought into the form `[A_ub I; A_eq 0] (x, s) = (b_ub, b_eq)`
//! with slack bounds `s >= 0`, and artificial columns are added only for
//! rows whose slack cannot start basic. Phase 1 drives the artificials to
//! zero, after which nonbasic artificials are dropped and the rest are fixed
//! at zero. The final tableau is kept so branch and bound can change bounds
//! and re-optimize with the dual simplex.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{FEAS_TOL, Duals, LinearProgram, SolveResult, SolveStatus};
use crate::{Error, Result};

const PIV_TOL: f64 = 1e-9;
/// Pivots smaller than this fraction of their row are rejected.
const REL_PIV_TOL: f64 = 1e-8;
const OPT_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 300;
const DEGENERATE_LIMIT: usize = 100;

/// Solves an LP from scratch.
pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult> {
    lp.validate()?;
    let (tab, outcome) = Tableau::from_lp(lp)?;
    let n = lp.num_vars();
    Ok(match outcome {
        LpOutcome::Optimal => {
            let point = tab.primal();
            let value = tab.objective();
            let duals = tab.duals(lp)?;
            let active_set = if lp.a_ub.nrows() > 0 {
                let r = &lp.a_ub * &point - &lp.b_ub;
                (0..r.len()).filter(|&i| r[i] > -1e-9).collect()
            } else {
                Vec::new()
            };
            SolveResult {
                status: SolveStatus::Optimal,
                point,
                value,
                duals: Some(duals),
                active_set,
                gap: 0.0,
                nodes: 0,
            }
        }
        LpOutcome::Infeasible => SolveResult::without_solution(SolveStatus::Infeasible, n),
        LpOutcome::Unbounded => SolveResult::without_solution(SolveStatus::Unbounded, n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

/// Immutable standard-form data shared between clones of a tableau.
#[derive(Debug)]
struct Shared {
    /// Constraint matrix over all current columns (structural, slack, artificial).
    a: DMatrix<f64>,
    rhs: DVector<f64>,
    /// Factor each original row was multiplied by.
    row_scale: DVector<f64>,
    n_struct: usize,
    n_ineq: usize,
}

/// Divides each row by its largest coefficient so big-M rows do not
/// dominate pivoting and tolerances.
fn equilibrate(a: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let scale = DVector::from_fn(a.nrows(), |i, _| {
        let big = a.row(i).amax();
        if big > 0.0 { 1.0 / big } else { 1.0 }
    });
    let mut a = a.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= scale[i];
    }
    (a, b.component_mul(&scale), scale)
}

enum Ratio {
    Unbounded,
    Flip(f64),
    Pivot(usize, f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Tableau {
    shared: Arc<Shared>,
    m: usize,
    nc: usize,
    /// `B^-1 A`, row-major.
    tab: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Reduced costs for `cost`.
    d: Vec<f64>,
    since_refactor: usize,
    pub(crate) pivots: usize,
}

impl Tableau {
    /// Builds the tableau and runs both simplex phases.
    pub(crate) fn from_lp(lp: &LinearProgram) -> Result<(Self, LpOutcome)> {
        let n = lp.num_vars();
        let m1 = lp.a_ub.nrows();
        let m2 = lp.a_eq.nrows();
        let m = m1 + m2;
        let (a_ub, b_ub, s_ub) = equilibrate(&lp.a_ub, &lp.b_ub);
        let (a_eq, b_eq, s_eq) = equilibrate(&lp.a_eq, &lp.b_eq);

        // Starting values of structural columns.
        let mut x0 = vec![0.0; n];
        let mut st0 = vec![State::Free; n];
        for j in 0..n {
            if lp.lower[j].is_finite() {
                x0[j] = lp.lower[j];
                st0[j] = State::Lower;
            } else if lp.upper[j].is_finite() {
                x0[j] = lp.upper[j];
                st0[j] = State::Upper;
            }
        }

        // Row residuals with structurals at their starting values decide
        // which rows need an artificial.
        let mut resid = vec![0.0; m];
        for i in 0..m {
            let (row_rhs, dot) = if i < m1 {
                (b_ub[i], (0..n).map(|j| a_ub[(i, j)] * x0[j]).sum::<f64>())
            } else {
                let k = i - m1;
                (b_eq[k], (0..n).map(|j| a_eq[(k, j)] * x0[j]).sum::<f64>())
            };
            resid[i] = row_rhs - dot;
        }
        let needs_art: Vec<bool> = (0..m).map(|i| i >= m1 || resid[i] < 0.0).collect();
        let n_art = needs_art.iter().filter(|&&b| b).count();
        let nc = n + m1 + n_art;

        let mut a = DMatrix::zeros(m, nc);
        let mut rhs = DVector::zeros(m);
        for i in 0..m1 {
            for j in 0..n {
                a[(i, j)] = a_ub[(i, j)];
            }
            a[(i, n + i)] = 1.0;
            rhs[i] = b_ub[i];
        }
        for k in 0..m2 {
            for j in 0..n {
                a[(m1 + k, j)] = a_eq[(k, j)];
            }
            rhs[m1 + k] = b_eq[k];
        }

        let mut lo = Vec::with_capacity(nc);
        let mut hi = Vec::with_capacity(nc);
        lo.extend(lp.lower.iter().copied());
        hi.extend(lp.upper.iter().copied());
        lo.extend(std::iter::repeat_n(0.0, m1 + n_art));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m1 + n_art));

        let mut x = x0;
        x.extend(std::iter::repeat_n(0.0, m1 + n_art));
        let mut state = st0;
        state.extend(std::iter::repeat_n(State::Lower, m1 + n_art));
        let mut basis = vec![0; m];
        let mut tab = vec![0.0; m * nc];
        let mut cost1 = vec![0.0; nc];

        let mut art = n + m1;
        for i in 0..m {
            let (col, sign) = if needs_art[i] {
                let s = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
                a[(i, art)] = s;
                cost1[art] = 1.0;
                art += 1;
                (art - 1, s)
            } else {
                (n + i, 1.0)
            };
            basis[i] = col;
            state[col] = State::Basic(i);
            x[col] = resid[i].abs();
            // B is diagonal with entries +-1, so B^-1 A just flips row signs.
            for j in 0..nc {
                tab[i * nc + j] = sign * a[(i, j)];
            }
        }

        let mut row_scale = s_ub.as_slice().to_vec();
        row_scale.extend_from_slice(s_eq.as_slice());
        let shared = Arc::new(Shared {
            a,
            rhs,
            row_scale: DVector::from_vec(row_scale),
            n_struct: n,
            n_ineq: m1,
        });
        let mut t = Tableau {
            shared,
            m,
            nc,
            tab,
            cost: cost1,
            lo,
            hi,
            x,
            state,
            basis,
            d: vec![0.0; nc],
            since_refactor: 0,
            pivots: 0,
        };
        let max_iter = 50 * (m + nc) + 1000;

        if n_art > 0 {
            t.recompute_reduced_costs();
            t.run_primal(max_iter)?;
            // Absolute test: big-M rows must not loosen the tolerance.
            let infeas = (n + m1..nc).map(|j| t.x[j]).fold(0.0, f64::max);
            if infeas > FEAS_TOL {
                return Ok((t, LpOutcome::Infeasible));
            }
            t.retire_artificials()?;
        }

        let mut cost = vec![0.0; t.nc];
        cost[..n].copy_from_slice(lp.cost.as_slice());
        t.cost = cost;
        t.recompute_reduced_costs();
        let outcome = t.run_primal(max_iter)?;
        let outcome = if outcome == LpOutcome::Optimal {
            t.polish()?
        } else {
            outcome
        };
        Ok((t, outcome))
    }

    /// Drops nonbasic artificial columns and fixes basic ones at zero.
    fn retire_artificials(&mut self) -> Result<()> {
        let first_art = self.shared.n_struct + self.shared.n_ineq;
        // Pivot basic artificials out where a usable column exists.
        for r in 0..self.m {
            if self.basis[r] < first_art {
                continue;
            }
            let row = &self.tab[r * self.nc..(r + 1) * self.nc];
            let mut best = None;
            let mut best_abs = 1e-7;
            for j in 0..first_art {
                if matches!(self.state[j], State::Basic(_)) {
                    continue;
                }
                if row[j].abs() > best_abs {
                    best_abs = row[j].abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                let leaving = self.basis[r];
                self.pivot(r, j);
                self.state[leaving] = State::Lower;
                self.x[leaving] = 0.0;
            }
        }

        let keep: Vec<usize> = (0..self.nc)
            .filter(|&j| j < first_art || matches!(self.state[j], State::Basic(_)))
            .collect();
        if keep.len() < self.nc {
            let nc = keep.len();
            let mut tab = vec![0.0; self.m * nc];
            for i in 0..self.m {
                for (k, &j) in keep.iter().enumerate() {
                    tab[i * nc + k] = self.tab[i * self.nc + j];
                }
            }
            let mut remap = vec![usize::MAX; self.nc];
            for (k, &j) in keep.iter().enumerate() {
                remap[j] = k;
            }
            let a = self.shared.a.select_columns(keep.iter());
            self.shared = Arc::new(Shared {
                a,
                rhs: self.shared.rhs.clone(),
                row_scale: self.shared.row_scale.clone(),
                n_struct: self.shared.n_struct,
                n_ineq: self.shared.n_ineq,
            });
            self.tab = tab;
            self.lo = keep.iter().map(|&j| self.lo[j]).collect();
            self.hi = keep.iter().map(|&j| self.hi[j]).collect();
            self.x = keep.iter().map(|&j| self.x[j]).collect();
            self.state = keep.iter().map(|&j| self.state[j]).collect();
            self.basis = self.basis.iter().map(|&j| remap[j]).collect();
            self.nc = nc;
        }
        for j in first_art..self.nc {
            self.lo[j] = 0.0;
            self.hi[j] = 0.0;
        }
        self.d = vec![0.0; self.nc];
        Ok(())
    }

    fn recompute_reduced_costs(&mut self) {
        let nc = self.nc;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * nc..(i + 1) * nc];
                for (dj, &t) in self.d.iter_mut().zip(row) {
                    *dj -= cb * t;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let nc = self.nc;
        let piv = self.tab[r * nc + j];
        let inv = 1.0 / piv;
        let mut nz = Vec::with_capacity(nc);
        {
            let row = &mut self.tab[r * nc..(r + 1) * nc];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    nz.push(k);
                }
            }
            row[j] = 1.0;
        }
        let prow: Vec<f64> = nz.iter().map(|&k| self.tab[r * nc + k]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * nc + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * nc..(i + 1) * nc];
            for (&k, &p) in nz.iter().zip(&prow) {
                row[k] -= f * p;
            }
            row[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for (&k, &p) in nz.iter().zip(&prow) {
                self.d[k] -= f * p;
            }
            self.d[j] = 0.0;
        }
        let leaving = self.basis[r];
        self.basis[r] = j;
        self.state[j] = State::Basic(r);
        // Caller assigns the leaving column's nonbasic state.
        self.state[leaving] = State::Lower;
        self.since_refactor += 1;
        self.pivots += 1;
    }

    /// Recomputes `B^-1 A`, basic values and reduced costs from the original data.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let nc = self.nc;
        if m == 0 {
            self.since_refactor = 0;
            return Ok(());
        }
        let sh = &self.shared;
        let b = sh.a.select_columns(self.basis.iter());
        let lu = b.lu();
        let inv_a = lu
            .solve(&sh.a)
            .ok_or_else(|| Error::Numerical("singular basis during refactorization".into()))?;
        let mut r = sh.rhs.clone();
        for j in 0..nc {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                r.axpy(-self.x[j], &sh.a.column(j), 1.0);
            }
        }
        let xb = lu
            .solve(&r)
            .ok_or_else(|| Error::Numerical("singular basis during refactorization".into()))?;
        for i in 0..m {
            for j in 0..nc {
                self.tab[i * nc + j] = inv_a[(i, j)];
            }
            self.x[self.basis[i]] = xb[i];
        }
        self.recompute_reduced_costs();
        self.since_refactor = 0;
        Ok(())
    }

    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.nc {
            let dj = self.d[j];
            let dir = match self.state[j] {
                State::Basic(_) => continue,
                State::Lower if dj < -OPT_TOL && self.hi[j] > self.lo[j] => 1.0,
                State::Upper if dj > OPT_TOL && self.hi[j] > self.lo[j] => -1.0,
                State::Free if dj < -OPT_TOL => 1.0,
                State::Free if dj > OPT_TOL => -1.0,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = dj.abs();
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn ratio(&self, j: usize, dir: f64, bland: bool) -> Ratio {
        let nc = self.nc;
        let range = self.hi[j] - self.lo[j];
        let own = if range.is_finite() { range } else { f64::INFINITY };
        let col_max = (0..self.m).fold(0.0f64, |acc, i| acc.max(self.tab[i * nc + j].abs()));
        let piv_tol = PIV_TOL.max(REL_PIV_TOL * col_max);

        if bland {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = dir * self.tab[i * nc + j];
                let b = self.basis[i];
                let lim = if a > piv_tol && self.lo[b].is_finite() {
                    (self.x[b] - self.lo[b]).max(0.0) / a
                } else if a < -piv_tol && self.hi[b].is_finite() {
                    (self.hi[b] - self.x[b]).max(0.0) / -a
                } else {
                    continue;
                };
                let better = match best {
                    None => true,
                    Some((bi, bt)) => lim < bt || (lim == bt && b < self.basis[bi]),
                };
                if better {
                    best = Some((i, lim));
                }
            }
            return match best {
                Some((_, t)) if own <= t => Ratio::Flip(own),
                Some((i, t)) => Ratio::Pivot(i, t),
                None if own.is_finite() => Ratio::Flip(own),
                None => Ratio::Unbounded,
            };
        }

        // Harris two-pass ratio test.
        let mut theta = f64::INFINITY;
        for i in 0..self.m {
            let a = dir * self.tab[i * nc + j];
            let b = self.basis[i];
            if a > piv_tol && self.lo[b].is_finite() {
                theta = theta.min((self.x[b] - self.lo[b] + PRIMAL_TOL) / a);
            } else if a < -piv_tol && self.hi[b].is_finite() {
                theta = theta.min((self.hi[b] - self.x[b] + PRIMAL_TOL) / -a);
            }
        }
        if own <= theta {
            return if own.is_finite() {
                Ratio::Flip(own)
            } else {
                Ratio::Unbounded
            };
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            let a = dir * self.tab[i * nc + j];
            let b = self.basis[i];
            let lim = if a > piv_tol && self.lo[b].is_finite() {
                (self.x[b] - self.lo[b]) / a
            } else if a < -piv_tol && self.hi[b].is_finite() {
                (self.hi[b] - self.x[b]) / -a
            } else {
                continue;
            };
            if lim <= theta {
                let mag = a.abs();
                if best.is_none_or(|(_, _, bm)| mag > bm) {
                    best = Some((i, lim.max(0.0), mag));
                }
            }
        }
        match best {
            Some((i, t, _)) => Ratio::Pivot(i, t),
            None => Ratio::Unbounded,
        }
    }

    fn step(&mut self, j: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        let nc = self.nc;
        self.x[j] += delta;
        for i in 0..self.m {
            let a = self.tab[i * nc + j];
            if a != 0.0 {
                self.x[self.basis[i]] -= delta * a;
            }
        }
    }

    fn run_primal(&mut self, max_iter: usize) -> Result<LpOutcome> {
        let mut bland = false;
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let Some((j, dir)) = self.price(bland) else {
                return Ok(LpOutcome::Optimal);
            };
            let t = match self.ratio(j, dir, bland) {
                Ratio::Unbounded => return Ok(LpOutcome::Unbounded),
                Ratio::Flip(t) => {
                    self.step(j, dir * t);
                    if dir > 0.0 {
                        self.x[j] = self.hi[j];
                        self.state[j] = State::Upper;
                    } else {
                        self.x[j] = self.lo[j];
                        self.state[j] = State::Lower;
                    }
                    t
                }
                Ratio::Pivot(r, t) => {
                    self.step(j, dir * t);
                    let leaving = self.basis[r];
                    let a = dir * self.tab[r * self.nc + j];
                    self.pivot(r, j);
                    if a > 0.0 {
                        self.x[leaving] = self.lo[leaving];
                        self.state[leaving] = State::Lower;
                    } else {
                        self.x[leaving] = self.hi[leaving];
                        self.state[leaving] = State::Upper;
                    }
                    t
                }
            };
            if t <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
        }
        Err(Error::IterationCap(max_iter))
    }

    fn dual(&mut self, max_iter: usize) -> Result<LpOutcome> {
        let nc = self.nc;
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let mut leave = None;
            let mut worst = 0.0;
            for i in 0..self.m {
                let b = self.basis[i];
                let below = self.lo[b] - self.x[b];
                let above = self.x[b] - self.hi[b];
                let viol = below.max(above);
                let tol = PRIMAL_TOL * (1.0 + self.x[b].abs());
                if viol > tol && viol > worst {
                    worst = viol;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                return Ok(LpOutcome::Optimal);
            };
            let b = self.basis[r];
            let below = self.x[b] < self.lo[b];
            let target = if below { self.lo[b] } else { self.hi[b] };
            let lowest_index = degenerate > DEGENERATE_LIMIT;

            let row_max = self.tab[r * nc..(r + 1) * nc].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let piv_tol = PIV_TOL.max(REL_PIV_TOL * row_max);
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..nc {
                let a = self.tab[r * nc + j];
                if a.abs() <= piv_tol {
                    continue;
                }
                // x_b moves by -a * delta_j; pick the sign of delta_j that
                // pushes x_b toward its violated bound.
                let up = if below { a < 0.0 } else { a > 0.0 };
                let ok = match self.state[j] {
                    State::Basic(_) => false,
                    State::Lower => up && self.hi[j] > self.lo[j],
                    State::Upper => !up && self.hi[j] > self.lo[j],
                    State::Free => true,
                };
                if !ok {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                let better = match best {
                    None => true,
                    Some((_, br, bm)) => {
                        if lowest_index {
                            ratio < br - 1e-12
                        } else {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > bm)
                        }
                    }
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            let Some((j, ratio, _)) = best else {
                // Accumulated round-off can hide entering columns.
                if self.since_refactor > 0 {
                    self.refactor()?;
                    continue;
                }
                return Ok(LpOutcome::Infeasible);
            };
            let a = self.tab[r * nc + j];
            let delta = (self.x[b] - target) / a;
            self.step(j, delta);
            self.x[b] = target;
            self.pivot(r, j);
            self.state[b] = if below { State::Lower } else { State::Upper };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
        Err(Error::IterationCap(max_iter))
    }

    /// Refactors if residuals drifted and re-runs the simplex until clean.
    fn polish(&mut self) -> Result<LpOutcome> {
        let max_iter = 50 * (self.m + self.nc) + 1000;
        for _ in 0..3 {
            let scale = 1.0 + self.shared.rhs.amax();
            if self.residual() <= 1e-9 * scale && self.since_refactor < REFACTOR_EVERY / 2 {
                return Ok(LpOutcome::Optimal);
            }
            self.refactor()?;
            match self.dual(max_iter)? {
                LpOutcome::Optimal => {}
                other => return Ok(other),
            }
            match self.run_primal(max_iter)? {
                LpOutcome::Optimal => {}
                other => return Ok(other),
            }
            if self.residual() <= 1e-9 * scale {
                return Ok(LpOutcome::Optimal);
            }
        }
        Ok(LpOutcome::Optimal)
    }

    fn residual(&self) -> f64 {
        if self.m == 0 {
            return 0.0;
        }
        let x = DVector::from_column_slice(&self.x);
        let r = &self.shared.a * x - &self.shared.rhs;
        r.amax()
    }

    /// Changes the bounds of a structural column, keeping the basis.
    pub(crate) fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if let State::Basic(_) = self.state[j] {
            return;
        }
        let (val, st) = if lo == hi || (self.d[j] >= 0.0 && lo.is_finite()) {
            (lo, State::Lower)
        } else if hi.is_finite() {
            (hi, State::Upper)
        } else if lo.is_finite() {
            (lo, State::Lower)
        } else {
            (0.0, State::Free)
        };
        let delta = val - self.x[j];
        self.step(j, delta);
        self.x[j] = val;
        self.state[j] = st;
    }

    /// Re-optimizes after bound changes (dual simplex, then primal cleanup).
    pub(crate) fn reoptimize(&mut self) -> Result<LpOutcome> {
        let max_iter = 50 * (self.m + self.nc) + 1000;
        match self.dual(max_iter)? {
            LpOutcome::Optimal => {}
            other => return Ok(other),
        }
        match self.run_primal(max_iter)? {
            LpOutcome::Optimal => self.polish(),
            other => Ok(other),
        }
    }

    pub(crate) fn objective(&self) -> f64 {
        (0..self.shared.n_struct)
            .map(|j| self.cost[j] * self.x[j])
            .sum()
    }

    pub(crate) fn primal(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x[..self.shared.n_struct])
    }

    pub(crate) fn value(&self, j: usize) -> f64 {
        self.x[j]
    }

    pub(crate) fn bytes(&self) -> usize {
        8 * (self.tab.len() + 5 * self.nc)
    }

    fn duals(&self, lp: &LinearProgram) -> Result<Duals> {
        let m = self.m;
        let n = self.shared.n_struct;
        let m1 = self.shared.n_ineq;
        let y = if m == 0 {
            DVector::zeros(0)
        } else {
            let b = self.shared.a.select_columns(self.basis.iter());
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| self.cost[j]));
            b.transpose()
                .lu()
                .solve(&cb)
                .ok_or_else(|| Error::Numerical("singular basis while computing duals".into()))?
                .component_mul(&self.shared.row_scale)
        };
        let ineq = DVector::from_iterator(m1, (0..m1).map(|i| (-y[i]).max(0.0)));
        let eq = DVector::from_iterator(m - m1, (m1..m).map(|i| -y[i]));
        let mut reduced = lp.cost.clone();
        if m1 > 0 {
            reduced += lp.a_ub.transpose() * &ineq;
        }
        if m > m1 {
            reduced += lp.a_eq.transpose() * &eq;
        }
        debug_assert_eq!(reduced.len(), n);
        Ok(Duals { ineq, eq, reduced })
    }
}
