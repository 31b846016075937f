//! Explicit solution of the parametric QP by active-set enumeration.

use nalgebra::{DMatrix, DVector};

use super::{ParametricQp, PwaFunction, PwaRegion};
use crate::geometry::{envelope, union_is_convex, Polytope, FULL_DIM_TOL};
use crate::{Error, Result};

/// Two affine laws within this distance are considered identical.
const LAW_TOL: f64 = 1e-9;
/// Smallest singular value ratio accepted for the active constraint gradients.
const LICQ_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ExplicitOptions {
    /// Merge regions carrying the same law whenever their union is convex.
    pub merge: bool,
}

impl Default for ExplicitOptions {
    fn default() -> Self {
        Self { merge: true }
    }
}

/// Explicit control law with default options.
pub fn explicit_mpc(qp: &ParametricQp) -> Result<PwaFunction> {
    explicit_mpc_with(qp, &ExplicitOptions::default())
}

/// Enumerates every active set of at most `n_u` linearly independent
/// constraints, derives its affine optimizer and critical region, and keeps
/// the full-dimensional regions in canonical (size, then lexicographic) order.
pub fn explicit_mpc_with(qp: &ParametricQp, opts: &ExplicitOptions) -> Result<PwaFunction> {
    let (n, nu, m) = (qp.n, qp.num_inputs(), qp.m);
    let hinv = qp
        .h
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("condensed Hessian"))?
        .inverse();

    // Drop constraints that are redundant in the joint (x, u) space; this
    // also collapses duplicated rows that would otherwise violate LICQ.
    let total = qp.g.nrows();
    let mut joint = DMatrix::zeros(total, n + nu);
    joint.view_mut((0, 0), (total, n)).copy_from(&(-&qp.s));
    joint.view_mut((0, n), (total, nu)).copy_from(&qp.g);
    let joint = Polytope::new(joint, qp.w.clone())?.remove_redundant()?;
    let mut state_rows = Vec::new();
    let mut dec_rows = Vec::new();
    for i in 0..joint.num_rows() {
        if joint.a().view((i, n), (1, nu)).amax() <= 1e-12 {
            state_rows.push(i);
        } else {
            dec_rows.push(i);
        }
    }
    let g = joint.a().view((0, n), (joint.num_rows(), nu)).select_rows(dec_rows.iter());
    let s = -joint.a().view((0, 0), (joint.num_rows(), n)).select_rows(dec_rows.iter());
    let w = joint.b().select_rows(dec_rows.iter());
    let state_poly = Polytope::new(
        joint.a().view((0, 0), (joint.num_rows(), n)).select_rows(state_rows.iter()),
        joint.b().select_rows(state_rows.iter()),
    )?;
    let rows = g.nrows();
    log::debug!("explicit MPC: {rows} decision rows, {} state rows", state_rows.len());

    let ft = qp.f.transpose();
    let mut regions: Vec<PwaRegion> = Vec::new();
    let mut skipped = 0usize;
    for k in 0..=nu.min(rows) {
        for act in combinations(rows, k) {
            let ga = g.select_rows(act.iter());
            if k > 0 {
                let sv = ga.clone().svd(false, false).singular_values;
                if sv.min() <= LICQ_TOL * sv.max().max(1.0) {
                    skipped += 1;
                    log::debug!("active set {act:?} violates LICQ, skipped");
                    continue;
                }
            }
            // u(x) = L x + l0 and, for k > 0, -lambda(x) = D x + d0.
            let (l, l0, dual) = if k == 0 {
                (-(&hinv * &ft), DVector::zeros(nu), None)
            } else {
                let sa = s.select_rows(act.iter());
                let wa = w.select_rows(act.iter());
                let minv = (&ga * &hinv * ga.transpose())
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("singular active-set Gram matrix".into()))?
                    .inverse();
                let t = &sa + &ga * &hinv * &ft;
                let neg_lam_x = &minv * &t;
                let neg_lam_0 = &minv * &wa;
                let l = -(&hinv * (&ft - ga.transpose() * &neg_lam_x));
                let l0 = &hinv * (ga.transpose() * &neg_lam_0);
                (l, l0, Some((neg_lam_x, neg_lam_0)))
            };
            let mut ra: Vec<f64> = Vec::new();
            let mut rb: Vec<f64> = Vec::new();
            let mut empty = false;
            let mut push = |row: DVector<f64>, rhs: f64| {
                let nrm = row.norm();
                if nrm <= 1e-10 {
                    if rhs < -1e-9 {
                        empty = true;
                    }
                    return;
                }
                ra.extend(row.iter().map(|v| v / nrm));
                rb.push(rhs / nrm);
            };
            let in_act: Vec<bool> = (0..rows).map(|i| act.contains(&i)).collect();
            for i in 0..rows {
                if in_act[i] {
                    continue;
                }
                let gi = g.row(i);
                let row = (gi * &l - s.row(i)).transpose();
                push(row, w[i] - (gi * &l0)[0]);
            }
            if let Some((dx, d0)) = dual {
                for r in 0..k {
                    push(dx.row(r).transpose(), -d0[r]);
                }
            }
            if empty {
                continue;
            }
            let cr = Polytope::new(DMatrix::from_row_slice(rb.len(), n, &ra), DVector::from_vec(rb))?
                .intersect(&state_poly)?;
            match cr.chebyshev() {
                Ok((_, r)) if r > FULL_DIM_TOL => {}
                Ok(_) | Err(Error::EmptyPolytope) => continue,
                Err(Error::Unbounded) => {}
                Err(e) => return Err(e),
            }
            let gain = l.rows(0, m).into_owned();
            let offset = l0.rows(0, m).into_owned();
            regions.push(PwaRegion::new(cr.remove_redundant()?, gain, offset)?);
        }
    }
    if skipped > 0 {
        log::info!("explicit MPC: {skipped} active sets skipped for violating LICQ");
    }
    if regions.is_empty() {
        return Err(Error::EmptyPolytope);
    }
    log::debug!("explicit MPC: {} critical regions before merging", regions.len());
    if opts.merge {
        regions = merge_regions(regions)?;
    }
    let domain = hull_of_union(&regions)?;
    PwaFunction::new(domain, regions)
}

/// The stored feasible set of an explicit law.
pub fn feasible_set(pwa: &PwaFunction) -> Polytope {
    pwa.domain.clone()
}

fn merge_regions(mut regions: Vec<PwaRegion>) -> Result<Vec<PwaRegion>> {
    loop {
        let mut merged = false;
        'search: for i in 0..regions.len() {
            for j in (i + 1)..regions.len() {
                if !regions[i].same_law(&regions[j], LAW_TOL) {
                    continue;
                }
                if union_is_convex(&regions[i].poly, &regions[j].poly)? {
                    let env = envelope(&regions[i].poly, &regions[j].poly)?.remove_redundant()?;
                    regions[i].poly = env;
                    regions.remove(j);
                    merged = true;
                    break 'search;
                }
            }
        }
        if !merged {
            return Ok(regions);
        }
    }
}

/// Rows of the regions that are valid for every region. For a union that is
/// itself convex (as the feasible set is), this reproduces the union.
fn hull_of_union(regions: &[PwaRegion]) -> Result<Polytope> {
    let n = regions[0].poly.dim();
    let mut ra: Vec<f64> = Vec::new();
    let mut rb: Vec<f64> = Vec::new();
    for (i, ri) in regions.iter().enumerate() {
        let p = &ri.poly;
        for r in 0..p.num_rows() {
            let c = p.a().row(r).transpose();
            let tol = 1e-9 * (1.0 + c.norm());
            let mut valid = true;
            for (j, rj) in regions.iter().enumerate() {
                if i == j {
                    continue;
                }
                match rj.poly.maximize(&c) {
                    Ok(Some((v, _))) if v > p.b()[r] + tol => {
                        valid = false;
                        break;
                    }
                    Ok(_) => {}
                    Err(Error::Unbounded) => {
                        valid = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if valid {
                ra.extend(c.iter());
                rb.push(p.b()[r]);
            }
        }
    }
    Polytope::new(DMatrix::from_row_slice(rb.len(), n, &ra), DVector::from_vec(rb))?.remove_redundant()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in (i + 1)..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert!(combinations(2, 3).is_empty());
    }
}
