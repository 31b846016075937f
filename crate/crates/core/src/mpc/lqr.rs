use nalgebra::{DMatrix, DVector};

use crate::geometry::Polytope;
use crate::{Error, Result};

const DARE_MAX_ITER: usize = 100_000;
const DARE_TOL: f64 = 1e-12;
const MOAS_MAX_STEPS: usize = 500;

fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let bp = b.transpose() * p;
    let s = r + &bp * b;
    let gain = s
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("R + B'PB"))?
        .solve(&(&bp * a));
    let next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
    Ok((&next + next.transpose()) * 0.5)
}

/// Stabilizing solution of the discrete-time algebraic Riccati equation by
/// fixed-point iteration from `P = Q`.
pub fn dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::DimensionMismatch {
            what: "Riccati data",
            expected: n,
            found: b.nrows(),
        });
    }
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITER {
        let next = riccati_step(a, b, q, r, &p)?;
        let change = (&next - &p).amax();
        p = next;
        if !change.is_finite() {
            break;
        }
        if change <= DARE_TOL {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence(DARE_MAX_ITER))
}

/// `K = -(R + B'PB)^{-1} B'PA`, so that `u = K x`.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bp = b.transpose() * p;
    let s = r + &bp * b;
    Ok(-s
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("R + B'PB"))?
        .solve(&(&bp * a)))
}

/// Schur stability via a power bound: some `‖A^k‖_F < 1` with `k <= 1000`.
pub fn is_schur_stable(a: &DMatrix<f64>) -> bool {
    let mut ak = a.clone();
    for _ in 0..1000 {
        let nrm = ak.norm();
        if nrm < 1.0 {
            return true;
        }
        if !nrm.is_finite() || nrm > 1e12 {
            return false;
        }
        ak = a * &ak;
    }
    false
}

/// Largest set of states from which `x+ = A_cl x` never leaves `constraints`
/// (Gilbert–Tan): rows `C A^t x <= d` are stacked until the next step adds
/// only redundant rows.
pub fn max_output_admissible_set(a_cl: &DMatrix<f64>, constraints: &Polytope) -> Result<Polytope> {
    if a_cl.nrows() != constraints.dim() || a_cl.ncols() != constraints.dim() {
        return Err(Error::DimensionMismatch {
            what: "closed-loop matrix",
            expected: constraints.dim(),
            found: a_cl.nrows(),
        });
    }
    if !is_schur_stable(a_cl) {
        return Err(Error::NotStable);
    }
    let c = constraints.a().clone();
    let d = constraints.b().clone();
    let mut set = constraints.clone();
    let mut at = a_cl.clone();
    for _ in 0..MOAS_MAX_STEPS {
        let ct = &c * &at;
        let mut fresh = Vec::new();
        for i in 0..ct.nrows() {
            let row: DVector<f64> = ct.row(i).transpose();
            let tol = 1e-9 * (1.0 + row.norm());
            match set.maximize(&row)? {
                Some((v, _)) if v <= d[i] + tol => {}
                Some(_) => fresh.push(i),
                None => return Err(Error::EmptyPolytope),
            }
        }
        if fresh.is_empty() {
            return set.remove_redundant();
        }
        let extra = Polytope::new(ct.select_rows(fresh.iter()), d.select_rows(fresh.iter()))?;
        set = set.intersect(&extra)?;
        at = a_cl * at;
    }
    Err(Error::IterationCap(MOAS_MAX_STEPS))
}
