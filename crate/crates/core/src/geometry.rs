//! Polytopes in H-representation `{x : A x <= b}`.
//!
//! All queries reduce to LPs; there is no vertex enumeration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::{solve_lp, LinearProgram, SolveStatus};
use crate::{Error, Result};

/// Chebyshev radius above which a polytope counts as full-dimensional.
pub const FULL_DIM_TOL: f64 = 1e-9;

/// Slack under which a row is treated as implied by the others.
const REDUNDANCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolytope", into = "RawPolytope")]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Row-major wire form used by the JSON schemas.
#[derive(Serialize, Deserialize)]
struct RawPolytope {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Only needed when `A` has no rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl TryFrom<RawPolytope> for Polytope {
    type Error = Error;

    fn try_from(raw: RawPolytope) -> Result<Self> {
        let n = match (raw.a.first(), raw.dim) {
            (Some(row), _) => row.len(),
            (None, Some(d)) => d,
            (None, None) => return Err(Error::InvalidInput("polytope without rows needs `dim`".into())),
        };
        if raw.a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("ragged polytope matrix".into()));
        }
        let a = DMatrix::from_fn(raw.a.len(), n, |i, j| raw.a[i][j]);
        Polytope::new(a, DVector::from_vec(raw.b))
    }
}

impl From<Polytope> for RawPolytope {
    fn from(p: Polytope) -> Self {
        let a = (0..p.a.nrows()).map(|i| p.a.row(i).iter().copied().collect()).collect();
        let dim = (p.a.nrows() == 0).then_some(p.a.ncols());
        RawPolytope {
            a,
            b: p.b.iter().copied().collect(),
            dim,
        }
    }
}

impl Polytope {
    /// Builds `{x : a x <= b}`. All-zero rows with nonnegative offset are dropped;
    /// an all-zero row with negative offset is rejected as malformed.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "polytope offsets",
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite polytope data".into()));
        }
        let mut keep = Vec::with_capacity(a.nrows());
        for i in 0..a.nrows() {
            if a.row(i).amax() == 0.0 {
                if b[i] < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "all-zero row {i} with negative offset {}",
                        b[i]
                    )));
                }
                continue;
            }
            keep.push(i);
        }
        if keep.len() == a.nrows() {
            return Ok(Self { a, b });
        }
        Ok(Self {
            a: a.select_rows(keep.iter()),
            b: b.select_rows(keep.iter()),
        })
    }

    /// The whole space `R^n`.
    pub fn universe(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        }
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                what: "box bounds",
                expected: lo.len(),
                found: hi.len(),
            });
        }
        let n = lo.len();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for j in 0..n {
            a[(2 * j, j)] = 1.0;
            b[2 * j] = hi[j];
            a[(2 * j + 1, j)] = -1.0;
            b[2 * j + 1] = -lo[j];
        }
        Self::new(a, b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    /// Same set with every row scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Self {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..a.nrows() {
            let nrm = a.row(i).norm();
            a.row_mut(i).unscale_mut(nrm);
            b[i] /= nrm;
        }
        Self { a, b }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_dim(x.len())?;
        Ok(self.max_violation(x) <= tol)
    }

    /// `max_i (a_i x - b_i)`, or `-inf` for the universe.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.a.nrows())
            .map(|i| self.a.row(i).transpose().dot(x) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// [`max_violation`](Self::max_violation) with every row measured in unit-norm scaling.
    pub fn normalized_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.a.nrows())
            .map(|i| {
                let row = self.a.row(i);
                (row.transpose().dot(x) - self.b[i]) / row.norm()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        other.check_dim(self.dim())?;
        let n = self.dim();
        let m = self.num_rows() + other.num_rows();
        let mut a = DMatrix::zeros(m, n);
        a.rows_mut(0, self.num_rows()).copy_from(&self.a);
        a.rows_mut(self.num_rows(), other.num_rows()).copy_from(&other.a);
        let b = DVector::from_iterator(m, self.b.iter().chain(other.b.iter()).copied());
        Ok(Self { a, b })
    }

    /// Appends the halfspace `row x <= rhs`.
    pub fn with_row(&self, row: &[f64], rhs: f64) -> Result<Polytope> {
        let extra = Polytope::new(DMatrix::from_row_slice(1, row.len(), row), DVector::from_element(1, rhs))?;
        self.intersect(&extra)
    }

    pub fn is_empty(&self) -> Result<bool> {
        let n = self.dim();
        let lp = LinearProgram::new(DVector::zeros(n)).with_inequalities(self.a.clone(), self.b.clone());
        Ok(solve_lp(&lp)?.status == SolveStatus::Infeasible)
    }

    /// `max c'x` over the polytope: `Ok(Some((value, argmax)))`, `Ok(None)` when
    /// empty, `Err(Unbounded)` when unbounded above.
    pub fn maximize(&self, c: &DVector<f64>) -> Result<Option<(f64, DVector<f64>)>> {
        self.check_dim(c.len())?;
        let lp = LinearProgram::new(-c).with_inequalities(self.a.clone(), self.b.clone());
        let r = solve_lp(&lp)?;
        match r.status {
            SolveStatus::Optimal => Ok(Some((-r.value, r.point))),
            SolveStatus::Infeasible => Ok(None),
            _ => Err(Error::Unbounded),
        }
    }

    /// Center and radius of the largest inscribed ball.
    pub fn chebyshev(&self) -> Result<(DVector<f64>, f64)> {
        let n = self.dim();
        let m = self.num_rows();
        let mut a = DMatrix::zeros(m, n + 1);
        a.view_mut((0, 0), (m, n)).copy_from(&self.a);
        for i in 0..m {
            a[(i, n)] = self.a.row(i).norm();
        }
        let mut cost = DVector::zeros(n + 1);
        cost[n] = -1.0;
        let mut lower = DVector::from_element(n + 1, f64::NEG_INFINITY);
        lower[n] = 0.0;
        let upper = DVector::from_element(n + 1, f64::INFINITY);
        let lp = LinearProgram::new(cost)
            .with_inequalities(a, self.b.clone())
            .with_bounds(lower, upper);
        let r = solve_lp(&lp)?;
        match r.status {
            SolveStatus::Optimal => Ok((r.point.rows(0, n).into_owned(), r.point[n])),
            SolveStatus::Infeasible => Err(Error::EmptyPolytope),
            _ => Err(Error::Unbounded),
        }
    }

    /// True when the Chebyshev radius exceeds [`FULL_DIM_TOL`]; empty sets are not full-dimensional.
    pub fn is_full_dimensional(&self) -> Result<bool> {
        match self.chebyshev() {
            Ok((_, r)) => Ok(r > FULL_DIM_TOL),
            Err(Error::EmptyPolytope) => Ok(false),
            Err(Error::Unbounded) => Ok(true),
            Err(e) => Err(e),
        }
    }

    /// Drops rows implied by the others. Rows are first normalized and exact
    /// duplicates collapsed; each remaining row is then tested by maximizing it
    /// over the other kept rows.
    pub fn remove_redundant(&self) -> Result<Polytope> {
        if self.is_empty()? {
            return Err(Error::EmptyPolytope);
        }
        let p = self.normalized();
        let mut rows: Vec<usize> = Vec::new();
        'outer: for i in 0..p.num_rows() {
            for &k in &rows {
                let same = (p.a.row(i) - p.a.row(k)).amax() <= 1e-12;
                if same {
                    if p.b[i] < p.b[k] {
                        rows.retain(|&r| r != k);
                        rows.push(i);
                    }
                    continue 'outer;
                }
            }
            rows.push(i);
        }
        rows.sort_unstable();

        let mut keep = vec![true; rows.len()];
        for t in 0..rows.len() {
            let i = rows[t];
            // The tested row itself is relaxed by 1 so the LP stays bounded.
            let mut sel: Vec<usize> = (0..rows.len()).filter(|&s| s != t && keep[s]).map(|s| rows[s]).collect();
            sel.push(i);
            let a = p.a.select_rows(sel.iter());
            let mut b = p.b.select_rows(sel.iter());
            b[sel.len() - 1] += 1.0;
            let c = p.a.row(i).transpose();
            let lp = LinearProgram::new(-c).with_inequalities(a, b);
            let r = solve_lp(&lp)?;
            if r.status == SolveStatus::Optimal && -r.value <= p.b[i] + REDUNDANCY_TOL {
                keep[t] = false;
            }
        }
        let kept: Vec<usize> = (0..rows.len()).filter(|&t| keep[t]).map(|t| rows[t]).collect();
        Ok(Self {
            a: p.a.select_rows(kept.iter()),
            b: p.b.select_rows(kept.iter()),
        })
    }

    /// Whether every point of `other` satisfies every row of `self` within `tol`.
    pub fn contains_polytope(&self, other: &Polytope, tol: f64) -> Result<bool> {
        for i in 0..self.num_rows() {
            let c = self.a.row(i).transpose();
            match other.maximize(&c) {
                Ok(Some((v, _))) if v > self.b[i] + tol => return Ok(false),
                Ok(_) => {}
                Err(Error::Unbounded) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Per-coordinate bounds of the polytope, by `2n` LPs.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            hi[j] = self.maximize(&e)?.ok_or(Error::EmptyPolytope)?.0;
            e[j] = -1.0;
            lo[j] = -self.maximize(&e)?.ok_or(Error::EmptyPolytope)?.0;
        }
        Ok((lo, hi))
    }

    /// `count` points drawn uniformly from the polytope by rejection from its
    /// bounding box. Fails when the acceptance rate drops below 1e-4.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R, count: usize) -> Result<Vec<DVector<f64>>> {
        let (lo, hi) = self.bounding_box()?;
        let n = self.dim();
        let mut out = Vec::with_capacity(count);
        let mut tries = 0usize;
        while out.len() < count {
            tries += 1;
            if tries > 10_000 && (out.len() as f64) < 1e-4 * tries as f64 {
                return Err(Error::SamplerStarvation);
            }
            let x = DVector::from_fn(n, |j, _| {
                if hi[j] > lo[j] {
                    rng.gen_range(lo[j]..=hi[j])
                } else {
                    lo[j]
                }
            });
            if self.max_violation(&x) <= 0.0 {
                out.push(x);
            }
        }
        Ok(out)
    }

    /// Points of a possibly lower-dimensional polytope: random convex
    /// combinations of LP maximizers in random directions.
    pub fn sample_by_lp<R: Rng>(&self, rng: &mut R, count: usize) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        let mut anchors = Vec::new();
        for _ in 0..(2 * n + 2) {
            let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let (_, x) = self.maximize(&c)?.ok_or(Error::EmptyPolytope)?;
            anchors.push(x);
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let w: Vec<f64> = anchors.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            let mut x = DVector::zeros(n);
            for (wk, ak) in w.iter().zip(&anchors) {
                x += ak * (wk / s);
            }
            out.push(x);
        }
        Ok(out)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what: "polytope dimension",
                expected: self.dim(),
                found: n,
            })
        }
    }
}

/// Rows of `p` valid on `q` together with rows of `q` valid on `p`: the
/// smallest polytope with facets from both that contains `p ∪ q`.
pub fn envelope(p: &Polytope, q: &Polytope) -> Result<Polytope> {
    let valid_rows = |src: &Polytope, other: &Polytope| -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for i in 0..src.num_rows() {
            let c = src.a.row(i).transpose();
            let tol = 1e-9 * (1.0 + c.norm());
            match other.maximize(&c) {
                Ok(Some((v, _))) if v <= src.b[i] + tol => out.push(i),
                Ok(None) => out.push(i),
                Ok(Some(_)) | Err(Error::Unbounded) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    };
    let rp = valid_rows(p, q)?;
    let rq = valid_rows(q, p)?;
    let a = DMatrix::from_fn(rp.len() + rq.len(), p.dim(), |r, c| {
        if r < rp.len() {
            p.a[(rp[r], c)]
        } else {
            q.a[(rq[r - rp.len()], c)]
        }
    });
    let b = DVector::from_fn(rp.len() + rq.len(), |r, _| {
        if r < rp.len() {
            p.b[rp[r]]
        } else {
            q.b[rq[r - rp.len()]]
        }
    });
    Polytope::new(a, b)
}

/// Whether `p ∪ q` is convex, i.e. equals [`envelope`]`(p, q)` up to a
/// measure-zero set. Checks that no point of the envelope violates a
/// non-envelope row of `p` and a non-envelope row of `q` by a positive margin.
pub fn union_is_convex(p: &Polytope, q: &Polytope) -> Result<bool> {
    let env = envelope(p, q)?.normalized();
    let pn = p.normalized();
    let qn = q.normalized();
    let outside = |src: &Polytope| -> Vec<usize> {
        (0..src.num_rows())
            .filter(|&i| {
                !(0..env.num_rows()).any(|k| {
                    (src.a.row(i) - env.a.row(k)).amax() <= 1e-9 && (src.b[i] - env.b[k]).abs() <= 1e-9
                })
            })
            .collect()
    };
    let op = outside(&pn);
    let oq = outside(&qn);
    let n = p.dim();
    for &i in &op {
        for &j in &oq {
            // max t  s.t.  env,  -a_i x + t <= -b_i,  -c_j x + t <= -d_j,  t <= 1
            let m = env.num_rows() + 2;
            let mut a = DMatrix::zeros(m, n + 1);
            let mut b = DVector::zeros(m);
            a.view_mut((0, 0), (env.num_rows(), n)).copy_from(&env.a);
            b.rows_mut(0, env.num_rows()).copy_from(&env.b);
            let r = env.num_rows();
            for c in 0..n {
                a[(r, c)] = -pn.a[(i, c)];
                a[(r + 1, c)] = -qn.a[(j, c)];
            }
            a[(r, n)] = 1.0;
            a[(r + 1, n)] = 1.0;
            b[r] = -pn.b[i];
            b[r + 1] = -qn.b[j];
            let mut cost = DVector::zeros(n + 1);
            cost[n] = -1.0;
            let mut upper = DVector::from_element(n + 1, f64::INFINITY);
            upper[n] = 1.0;
            let lower = DVector::from_element(n + 1, f64::NEG_INFINITY);
            let lp = LinearProgram::new(cost)
                .with_inequalities(a, b)
                .with_bounds(lower, upper);
            let res = solve_lp(&lp)?;
            if res.status == SolveStatus::Optimal && -res.value > FULL_DIM_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
