//! Linear MPC: condensation of the finite-horizon problem into a parametric
//! QP, the per-state solution, the explicit piecewise-affine law, and the
//! LQR terminal ingredients (Riccati cost, maximal output admissible set).

mod explicit;
mod lqr;
mod pwa;
mod systems;

use nalgebra::{DMatrix, DVector};

use crate::geometry::Polytope;
use crate::optim::{solve_qp, QuadraticProgram, SolveStatus};
use crate::{Error, Result};

pub use explicit::{explicit_mpc, explicit_mpc_with, feasible_set, ExplicitOptions};
pub use lqr::{dare, is_schur_stable, lqr_gain, max_output_admissible_set};
pub use pwa::{PwaFunction, PwaRegion, LOCATE_TOL};
pub use systems::{double_integrator, lqr_terminal_set, scalar_unstable};

/// Rows of `G` with no entry above this magnitude are pure state constraints.
const ZERO_ROW_TOL: f64 = 1e-12;

/// Finite-horizon problem: minimize `x_N'P x_N + sum_k (x_k'Q x_k + u_k'R u_k)`
/// subject to `x_{k+1} = A x_k + B u_k`, `x_k ∈ X`, `u_k ∈ U` for `k < N`, and `x_N ∈ T`.
#[derive(Debug, Clone)]
pub struct OcpSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub horizon: usize,
    pub state_set: Polytope,
    pub input_set: Polytope,
    pub terminal_set: Polytope,
}

impl OcpSpec {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.input_dim();
        let square = |mat: &DMatrix<f64>, k: usize, what: &'static str| {
            if mat.shape() == (k, k) {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected: k,
                    found: mat.nrows().max(mat.ncols()),
                })
            }
        };
        square(&self.a, n, "dynamics matrix")?;
        square(&self.q, n, "state weight")?;
        square(&self.p, n, "terminal weight")?;
        square(&self.r, m, "input weight")?;
        if self.b.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "input matrix",
                expected: n,
                found: self.b.nrows(),
            });
        }
        for (set, k, what) in [
            (&self.state_set, n, "state set"),
            (&self.input_set, m, "input set"),
            (&self.terminal_set, n, "terminal set"),
        ] {
            if set.dim() != k {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: k,
                    found: set.dim(),
                });
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let psd = |mat: &DMatrix<f64>, what: &'static str| {
            let sym = (mat - mat.transpose()).amax() <= 1e-10 * (1.0 + mat.amax());
            let eig = mat.clone().symmetric_eigen().eigenvalues.min();
            if sym && eig >= -1e-10 {
                Ok(())
            } else {
                Err(Error::NotPositiveDefinite(what))
            }
        };
        psd(&self.q, "state weight")?;
        psd(&self.p, "terminal weight")?;
        if self.r.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("input weight"));
        }
        if !self.state_set.contains_polytope(&self.terminal_set, 1e-9)? {
            return Err(Error::InvalidInput("terminal set is not contained in the state set".into()));
        }
        Ok(())
    }
}

/// `min_u 1/2 u'H u + x'F u  s.t.  G u <= w + S x` over the stacked input sequence.
#[derive(Debug, Clone)]
pub struct ParametricQp {
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub w: DVector<f64>,
    pub s: DMatrix<f64>,
    /// State dimension.
    pub n: usize,
    /// Input dimension per stage.
    pub m: usize,
}

impl ParametricQp {
    pub fn num_inputs(&self) -> usize {
        self.h.nrows()
    }

    /// Whether row `i` involves no decision variable.
    pub fn is_state_row(&self, i: usize) -> bool {
        self.g.row(i).amax() <= ZERO_ROW_TOL
    }

    /// The QP at a fixed state, without the pure state rows.
    pub fn at(&self, x: &DVector<f64>) -> QuadraticProgram {
        let rows: Vec<usize> = (0..self.g.nrows()).filter(|&i| !self.is_state_row(i)).collect();
        let rhs = &self.w + &self.s * x;
        QuadraticProgram::new(self.h.clone(), self.f.transpose() * x)
            .with_inequalities(self.g.select_rows(rows.iter()), rhs.select_rows(rows.iter()))
    }

    /// Whether `x` satisfies the rows that involve no decision variable.
    pub fn state_rows_hold(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.g.nrows())
            .filter(|&i| self.is_state_row(i))
            .all(|i| self.w[i] + self.s.row(i).transpose().dot(x) >= -tol)
    }
}

/// Prediction matrices: stacked states `(x_0, ..., x_N) = Sx x + Su u`.
fn prediction(spec: &OcpSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m, nh) = (spec.state_dim(), spec.input_dim(), spec.horizon);
    let mut sx = DMatrix::zeros((nh + 1) * n, n);
    let mut su = DMatrix::zeros((nh + 1) * n, nh * m);
    let mut ak = DMatrix::identity(n, n);
    for k in 0..=nh {
        sx.view_mut((k * n, 0), (n, n)).copy_from(&ak);
        if k > 0 {
            // Block row k: [A^{k-1}B, ..., AB, B, 0, ...].
            let prev = su.view(((k - 1) * n, 0), (n, nh * m)).into_owned();
            let mut row = &spec.a * prev;
            row.view_mut((0, (k - 1) * m), (n, m)).copy_from(&spec.b);
            su.view_mut((k * n, 0), (n, nh * m)).copy_from(&row);
        }
        ak = &spec.a * ak;
    }
    (sx, su)
}

/// Eliminates the predicted states, leaving a QP in the input sequence.
pub fn condense(spec: &OcpSpec) -> Result<ParametricQp> {
    spec.validate()?;
    let (n, m, nh) = (spec.state_dim(), spec.input_dim(), spec.horizon);
    let (sx, su) = prediction(spec);

    let mut qbar = DMatrix::zeros((nh + 1) * n, (nh + 1) * n);
    for k in 0..nh {
        qbar.view_mut((k * n, k * n), (n, n)).copy_from(&spec.q);
    }
    qbar.view_mut((nh * n, nh * n), (n, n)).copy_from(&spec.p);
    let mut rbar = DMatrix::zeros(nh * m, nh * m);
    for k in 0..nh {
        rbar.view_mut((k * m, k * m), (m, m)).copy_from(&spec.r);
    }
    let mut h = (su.transpose() * &qbar * &su + rbar) * 2.0;
    h = (&h + h.transpose()) * 0.5;
    let f = sx.transpose() * &qbar * &su * 2.0;
    if h.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("condensed Hessian"));
    }

    let (hx, kx) = (spec.state_set.a(), spec.state_set.b());
    let (hu, ku) = (spec.input_set.a(), spec.input_set.b());
    let (ht, kt) = (spec.terminal_set.a(), spec.terminal_set.b());
    let rows = nh * (hx.nrows() + hu.nrows()) + ht.nrows();
    let mut g = DMatrix::zeros(rows, nh * m);
    let mut w = DVector::zeros(rows);
    let mut s = DMatrix::zeros(rows, n);
    let mut at = 0;
    let mut put_state = |k: usize, hmat: &DMatrix<f64>, kvec: &DVector<f64>, at: &mut usize| {
        let sxk = sx.view((k * n, 0), (n, n));
        let suk = su.view((k * n, 0), (n, nh * m));
        let c = hmat.nrows();
        g.view_mut((*at, 0), (c, nh * m)).copy_from(&(hmat * suk));
        s.view_mut((*at, 0), (c, n)).copy_from(&(-(hmat * sxk)));
        w.rows_mut(*at, c).copy_from(kvec);
        *at += c;
    };
    for k in 0..nh {
        put_state(k, hx, kx, &mut at);
    }
    put_state(nh, ht, kt, &mut at);
    for k in 0..nh {
        let c = hu.nrows();
        g.view_mut((at, k * m), (c, m)).copy_from(hu);
        w.rows_mut(at, c).copy_from(ku);
        at += c;
    }
    debug_assert_eq!(at, rows);
    Ok(ParametricQp { h, f, g, w, s, n, m })
}

/// Optimal input sequence at state `x`.
pub fn mpc_sequence(qp: &ParametricQp, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != qp.n {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: qp.n,
            found: x.len(),
        });
    }
    if !qp.state_rows_hold(x, 1e-9) {
        return Err(Error::InfeasibleState);
    }
    let r = solve_qp(&qp.at(x))?;
    match r.status {
        SolveStatus::Optimal => Ok(r.point),
        _ => Err(Error::InfeasibleState),
    }
}

/// First optimal input `u*(0)` at state `x`: the implicit MPC law.
pub fn mpc_point(qp: &ParametricQp, x: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(mpc_sequence(qp, x)?.rows(0, qp.m).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn scalar_point_law() {
        let qp = condense(&scalar_unstable()).unwrap();
        assert_eq!(qp.num_inputs(), 2);
        assert!((mpc_point(&qp, &v(0.5)).unwrap()[0] + 0.5).abs() < 1e-9);
        assert!((mpc_point(&qp, &v(2.0)).unwrap()[0] + 1.0).abs() < 1e-9);
        assert!((mpc_point(&qp, &v(-2.0)).unwrap()[0] - 1.0).abs() < 1e-9);
        assert!(matches!(mpc_point(&qp, &v(3.0)), Err(Error::InfeasibleState)));
    }

    #[test]
    fn one_step_unconstrained_is_lqr_like() {
        let mut spec = scalar_unstable();
        spec.horizon = 1;
        spec.terminal_set = spec.state_set.clone();
        let qp = condense(&spec).unwrap();
        // -(R + B'PB)^{-1} B'PA = -6/6 = -1 per unit state.
        let x = 0.3;
        let u = mpc_point(&qp, &v(x)).unwrap()[0];
        assert!((u + x).abs() < 1e-12);
    }
}
