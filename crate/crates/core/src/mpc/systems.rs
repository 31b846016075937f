//! The two reference systems used throughout the tests and the CLI.

use nalgebra::DMatrix;

use super::{dare, lqr_gain, max_output_admissible_set, OcpSpec};
use crate::geometry::Polytope;
use crate::Result;

/// Unstable scalar system `x+ = 1.2 x + u` with `|x| <= 10`, `|u| <= 1`,
/// weights `Q = 3.8`, `R = 1`, `P = 5`, horizon 2 and terminal set `[-1, 1]`.
pub fn scalar_unstable() -> OcpSpec {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    OcpSpec {
        a: s(6.0 / 5.0),
        b: s(1.0),
        q: s(19.0 / 5.0),
        r: s(1.0),
        p: s(5.0),
        horizon: 2,
        state_set: Polytope::from_box(&[-10.0], &[10.0]).expect("box"),
        input_set: Polytope::from_box(&[-1.0], &[1.0]).expect("box"),
        terminal_set: Polytope::from_box(&[-1.0], &[1.0]).expect("box"),
    }
}

/// Discretized double integrator with `|x1| <= 25`, `|x2| <= 5`, `|u| <= 1`,
/// `Q = I`, `R = 1`, horizon 3, Riccati terminal cost and the maximal output
/// admissible set of the LQR loop as terminal set.
pub fn double_integrator() -> Result<OcpSpec> {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::identity(1, 1);
    let state_set = Polytope::from_box(&[-25.0, -5.0], &[25.0, 5.0])?;
    let input_set = Polytope::from_box(&[-1.0], &[1.0])?;
    let p = dare(&a, &b, &q, &r)?;
    let terminal_set = lqr_terminal_set(&a, &b, &r, &p, &state_set, &input_set)?;
    Ok(OcpSpec {
        a,
        b,
        q,
        r,
        p,
        horizon: 3,
        state_set,
        input_set,
        terminal_set,
    })
}

/// Maximal output admissible set of `x+ = (A + BK) x` under `x ∈ X`, `K x ∈ U`.
pub fn lqr_terminal_set(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
    state_set: &Polytope,
    input_set: &Polytope,
) -> Result<Polytope> {
    let k = lqr_gain(a, b, r, p)?;
    let through_gain = Polytope::new(input_set.a() * &k, input_set.b().clone())?;
    let admissible = state_set.intersect(&through_gain)?;
    max_output_admissible_set(&(a + b * k), &admissible)
}
