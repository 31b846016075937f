//! Primal active-set method for strictly convex quadratic programs.

use nalgebra::{DMatrix, DVector};

use super::{solve_lp, Duals, LinearProgram, QuadraticProgram, SolveResult, SolveStatus};
use crate::{Error, Result};

const STEP_TOL: f64 = 1e-12;
const MULT_TOL: f64 = 1e-10;

/// Solves a strictly convex QP, starting from a Phase-1 feasible point.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<SolveResult> {
    solve_qp_warm(qp, &[])
}

/// Solves a strictly convex QP with `initial` as the starting working set.
///
/// The warm start is used only when the equality-constrained problem on
/// `initial` is solvable and its minimizer is feasible; otherwise the solver
/// falls back to a Phase-1 LP point with an empty working set.
pub fn solve_qp_warm(qp: &QuadraticProgram, initial: &[usize]) -> Result<SolveResult> {
    let n = qp.linear.len();
    validate(qp)?;
    let m = qp.a_ub.nrows();

    let mut start = None;
    if !initial.is_empty() {
        let mut w: Vec<usize> = initial.iter().copied().filter(|&i| i < m).collect();
        w.sort_unstable();
        w.dedup();
        if let Some((x, _)) = eqp(qp, &w) {
            if max_ineq_violation(qp, &x) <= 1e-9 {
                start = Some((x, w));
            }
        }
    }
    let (mut x, mut work) = match start {
        Some(s) => s,
        None => {
            let lp = LinearProgram::new(DVector::zeros(n))
                .with_inequalities(qp.a_ub.clone(), qp.b_ub.clone())
                .with_equalities(qp.a_eq.clone(), qp.b_eq.clone());
            let r = solve_lp(&lp)?;
            if r.status != SolveStatus::Optimal {
                return Ok(SolveResult::without_solution(SolveStatus::Infeasible, n));
            }
            (r.point, Vec::new())
        }
    };

    let max_iter = 100 * (n + m) + 100;
    for _ in 0..max_iter {
        let (target, nu) = eqp(qp, &work)
            .ok_or_else(|| Error::Numerical("singular KKT matrix in active-set QP".into()))?;
        let p = &target - &x;
        if p.amax() <= STEP_TOL * (1.0 + x.amax()) {
            // Stationary on the working set: check multiplier signs.
            let mut worst: Option<(usize, f64)> = None;
            for (k, &i) in work.iter().enumerate() {
                let lam = nu[k];
                if lam < -MULT_TOL && worst.is_none_or(|(_, w)| lam < w) {
                    worst = Some((i, lam));
                }
            }
            match worst {
                Some((i, _)) => work.retain(|&w| w != i),
                None => {
                    x = target;
                    let mut ineq = DVector::zeros(m);
                    for (k, &i) in work.iter().enumerate() {
                        ineq[i] = nu[k].max(0.0);
                    }
                    let eq = DVector::from_iterator(
                        qp.a_eq.nrows(),
                        (0..qp.a_eq.nrows()).map(|k| nu[work.len() + k]),
                    );
                    let value = qp.objective(&x);
                    return Ok(SolveResult {
                        status: SolveStatus::Optimal,
                        point: x,
                        value,
                        duals: Some(Duals {
                            ineq,
                            eq,
                            reduced: DVector::zeros(n),
                        }),
                        active_set: work,
                        gap: 0.0,
                        nodes: 0,
                    });
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if work.binary_search(&i).is_ok() {
                continue;
            }
            let row = qp.a_ub.row(i);
            let ap = row.dot(&p.transpose());
            if ap > 1e-14 {
                let slack = qp.b_ub[i] - row.dot(&x.transpose());
                let a_i = (slack / ap).max(0.0);
                if a_i < alpha {
                    alpha = a_i;
                    blocking = Some(i);
                }
            }
        }
        x += alpha * p;
        if let Some(i) = blocking {
            let pos = work.binary_search(&i).unwrap_err();
            work.insert(pos, i);
        }
    }
    Err(Error::IterationCap(max_iter))
}

fn validate(qp: &QuadraticProgram) -> Result<()> {
    let n = qp.linear.len();
    if qp.hessian.nrows() != n || qp.hessian.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "QP Hessian",
            expected: n,
            found: qp.hessian.nrows(),
        });
    }
    if qp.a_ub.ncols() != n || qp.a_eq.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "QP constraint columns",
            expected: n,
            found: qp.a_ub.ncols().min(qp.a_eq.ncols()),
        });
    }
    if qp.a_ub.nrows() != qp.b_ub.len() || qp.a_eq.nrows() != qp.b_eq.len() {
        return Err(Error::InvalidInput("QP right-hand side length mismatch".into()));
    }
    let asym = (&qp.hessian - qp.hessian.transpose()).amax();
    if asym > 1e-10 * (1.0 + qp.hessian.amax()) {
        return Err(Error::NotPositiveDefinite("Hessian is not symmetric"));
    }
    if qp.hessian.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("QP Hessian"));
    }
    Ok(())
}

fn max_ineq_violation(qp: &QuadraticProgram, x: &DVector<f64>) -> f64 {
    let mut worst = 0.0f64;
    if qp.a_ub.nrows() > 0 {
        worst = (&qp.a_ub * x - &qp.b_ub).max().max(0.0);
    }
    if qp.a_eq.nrows() > 0 {
        worst = worst.max((&qp.a_eq * x - &qp.b_eq).amax());
    }
    worst
}

/// Minimizer of the QP with `work` inequalities (and all equalities) held
/// as equalities, plus the multipliers (working rows first, then equalities).
fn eqp(qp: &QuadraticProgram, work: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = qp.linear.len();
    let k = work.len() + qp.a_eq.nrows();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    for j in 0..n {
        rhs[j] = -qp.linear[j];
    }
    let mut put = |r: usize, row: nalgebra::DVectorView<f64>, b: f64| {
        for j in 0..n {
            kkt[(n + r, j)] = row[j];
            kkt[(j, n + r)] = row[j];
        }
        rhs[n + r] = b;
    };
    for (r, &i) in work.iter().enumerate() {
        let row = qp.a_ub.row(i).transpose();
        put(r, row.column(0), qp.b_ub[i]);
    }
    for e in 0..qp.a_eq.nrows() {
        let row = qp.a_eq.row(e).transpose();
        put(work.len() + e, row.column(0), qp.b_eq[e]);
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let nu = sol.rows(n, k).into_owned();
    Some((x, nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_halfline() {
        // min x^2  s.t.  x >= 1
        let qp = QuadraticProgram::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1))
            .with_inequalities(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, -1.0));
        let r = solve_qp(&qp).unwrap();
        assert!(r.is_optimal());
        assert!((r.point[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.active_set, vec![0]);
        assert!((r.duals.unwrap().ineq[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn unconstrained_minimum() {
        let qp = QuadraticProgram::new(DMatrix::identity(3, 3) * 2.0, DVector::zeros(3));
        let r = solve_qp(&qp).unwrap();
        assert!(r.point.amax() < 1e-14);
        assert!(r.active_set.is_empty());
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let qp = QuadraticProgram::new(h, DVector::zeros(2));
        assert!(matches!(solve_qp(&qp), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn infeasible_constraints() {
        let qp = QuadraticProgram::new(DMatrix::identity(1, 1), DVector::zeros(1)).with_inequalities(
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[-1.0, -1.0]),
        );
        assert_eq!(solve_qp(&qp).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        // min |x - (2, 2)|^2 over the unit box.
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2) * 2.0, DVector::from_element(2, -4.0))
            .with_inequalities(
                DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
                DVector::from_column_slice(&[1.0, 1.0, 0.0, 0.0]),
            );
        let cold = solve_qp(&qp).unwrap();
        let warm = solve_qp_warm(&qp, &[0, 1]).unwrap();
        assert_eq!(cold.active_set, vec![0, 1]);
        assert_eq!(warm.active_set, vec![0, 1]);
        assert!((&cold.point - &warm.point).amax() < 1e-12);
    }
}
