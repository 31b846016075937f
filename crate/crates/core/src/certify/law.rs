//! Region-selector encoding of an explicit PWA law.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::{Expr, MiEncoding};
use crate::geometry::Polytope;
use crate::mpc::{PwaFunction, LOCATE_TOL};
use crate::{Error, Result};

/// Columns of an encoded law.
#[derive(Debug, Clone)]
pub struct LawVars {
    pub u: Range<usize>,
    pub rho: Range<usize>,
    /// Original region index of each selector.
    pub regions: Vec<usize>,
}

/// Every sampled domain point must lie in some region.
pub fn check_coverage(pwa: &PwaFunction, domain: &Polytope, samples: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in domain.sample_uniform(&mut rng, samples)? {
        if pwa.locate(&x, LOCATE_TOL).is_none() {
            return Err(Error::CoverageGap(x.iter().copied().collect()));
        }
    }
    Ok(())
}

fn max_over(domain: &Polytope, c: &DVector<f64>) -> Result<f64> {
    Ok(domain.maximize(c)?.ok_or(Error::EmptyPolytope)?.0)
}

/// Adds one selector per region meeting `domain`, with
/// `A_i x <= b_i + M (1 - rho_i)` and `|u - K_i x - c_i| <= M (1 - rho_i)`.
/// Every big-M constant is the exact LP bound of the relaxed row over `domain`.
pub fn add_pwa_law(enc: &mut MiEncoding, pwa: &PwaFunction, domain: &Polytope, x: Range<usize>) -> Result<LawVars> {
    let (n, m) = (pwa.state_dim(), pwa.output_dim());
    if x.len() != n || domain.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "encoded law input",
            expected: n,
            found: x.len(),
        });
    }
    let mut kept = Vec::new();
    for (i, r) in pwa.regions.iter().enumerate() {
        let both = r.poly.intersect(domain)?;
        if !both.is_empty()? {
            kept.push((i, both));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyPolytope);
    }
    // Range of each law coordinate over its own region.
    let mut u_lo = vec![f64::INFINITY; m];
    let mut u_hi = vec![f64::NEG_INFINITY; m];
    for (i, both) in &kept {
        let r = &pwa.regions[*i];
        for k in 0..m {
            let g = r.gain.row(k).transpose();
            u_hi[k] = u_hi[k].max(max_over(both, &g)? + r.offset[k]);
            u_lo[k] = u_lo[k].min(-max_over(both, &(-&g))? + r.offset[k]);
        }
    }
    let u = enc.add_block("u", m, f64::NEG_INFINITY, f64::INFINITY);
    let rho = enc.add_one_hot("rho", kept.len());
    for (slot, (i, _)) in kept.iter().enumerate() {
        let r = &pwa.regions[*i];
        let sel = rho.start + slot;
        for row in 0..r.poly.num_rows() {
            let a = r.poly.a().row(row).transpose();
            let big = (max_over(domain, &a)? - r.poly.b()[row]).max(0.0);
            let mut e = Expr::constant(-r.poly.b()[row] - big);
            for (t, col) in x.clone().enumerate() {
                e.add_term(col, a[t]);
            }
            e.add_term(sel, big);
            enc.le(e);
        }
        for k in 0..m {
            let g = r.gain.row(k).transpose();
            let l_hi = max_over(domain, &g)? + r.offset[k];
            let l_lo = -max_over(domain, &(-&g))? + r.offset[k];
            let big = (u_hi[k] - l_lo).max(l_hi - u_lo[k]).max(0.0);
            let mut diff = Expr::var(u.start + k);
            for (t, col) in x.clone().enumerate() {
                diff.add_term(col, -g[t]);
            }
            diff.constant -= r.offset[k];
            for sign in [1.0, -1.0] {
                let mut e = diff.scaled(sign);
                e.add_term(sel, big).constant -= big;
                enc.le(e);
            }
        }
    }
    Ok(LawVars {
        u,
        rho,
        regions: kept.into_iter().map(|(i, _)| i).collect(),
    })
}

/// `K_MPC = sum_i rho_i K_i` as an `m x n` grid of expressions.
pub fn law_gain_expr(pwa: &PwaFunction, vars: &LawVars) -> Vec<Vec<Expr>> {
    let (n, m) = (pwa.state_dim(), pwa.output_dim());
    (0..m)
        .map(|k| {
            (0..n)
                .map(|r| {
                    let mut e = Expr::default();
                    for (slot, &i) in vars.regions.iter().enumerate() {
                        e.add_term(vars.rho.start + slot, pwa.regions[i].gain[(k, r)]);
                    }
                    e
                })
                .collect()
        })
        .collect()
}

/// Stand-alone law encoding over `domain` with input block `x` constrained to it.
pub fn encode_pwa_law(pwa: &PwaFunction, domain: &Polytope) -> Result<(MiEncoding, Range<usize>, LawVars)> {
    check_coverage(pwa, domain, 1000, 0xc0)?;
    let mut enc = MiEncoding::new();
    let x = enc.add_free_block("x", pwa.state_dim());
    add_domain(&mut enc, x.clone(), domain);
    let vars = add_pwa_law(&mut enc, pwa, domain, x.clone())?;
    Ok((enc, x, vars))
}

/// `A x <= b` on columns `x`.
pub fn add_domain(enc: &mut MiEncoding, x: Range<usize>, domain: &Polytope) {
    for row in 0..domain.num_rows() {
        let mut e = Expr::constant(-domain.b()[row]);
        for (t, col) in x.clone().enumerate() {
            e.add_term(col, domain.a()[(row, t)]);
        }
        enc.le(e);
    }
}

/// Law value and gain recovered by fixing `x`.
pub fn recover_law(pwa: &PwaFunction, x: &DVector<f64>) -> Result<Option<(DVector<f64>, DMatrix<f64>)>> {
    let (mut enc, xs, vars) = encode_pwa_law(pwa, &pwa.domain)?;
    for (j, col) in xs.enumerate() {
        enc.fix(col, x[j]);
    }
    let gain = law_gain_expr(pwa, &vars);
    Ok(enc.feasible_point()?.map(|p| {
        let u = DVector::from_fn(vars.u.len(), |k, _| p[vars.u.start + k]);
        let k = DMatrix::from_fn(gain.len(), pwa.state_dim(), |a, b| gain[a][b].eval(&p));
        (u, k)
    }))
}
