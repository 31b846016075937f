//! Exact maxout representations of continuous PWA laws.
//!
//! A scalar PWA function is first written in lattice form
//! `F = max_i min_{j in S_i} l_j`, then rewritten as a difference of two
//! convex functions `max(P) - max(Q)`, each a maximum of affine terms. One
//! maxout layer with two neurons (channels `P` and `Q`) and output weights
//! `(1, -1)` then reproduces `F` exactly.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::certify::{certify_exact, Certificate, CertifySettings};
use crate::geometry::Polytope;
use crate::maxout::{MaxoutLayer, MaxoutNetwork};
use crate::mpc::PwaFunction;
use crate::optim::{solve_lp, LinearProgram, SolveStatus};
use crate::{Error, Result};

/// Dominance slack below which a term never strictly attains the maximum.
const PRUNE_TOL: f64 = 1e-9;
/// Coefficient distance under which two affine terms are the same term.
const SAME_TERM_TOL: f64 = 1e-9;
const SANITY_SAMPLES: usize = 1000;
const SANITY_TOL: f64 = 1e-7;
pub const DEFAULT_TERM_CAP: usize = 10_000;

/// `x -> coef'x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTerm {
    pub coef: DVector<f64>,
    pub constant: f64,
}

impl AffineTerm {
    pub fn new(coef: DVector<f64>, constant: f64) -> Self {
        Self { coef, constant }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(DVector::zeros(n), 0.0)
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.coef.dot(x) + self.constant
    }

    fn plus(&self, other: &AffineTerm) -> AffineTerm {
        AffineTerm::new(&self.coef + &other.coef, self.constant + other.constant)
    }

    fn neg(&self) -> AffineTerm {
        AffineTerm::new(-&self.coef, -self.constant)
    }

    fn close_to(&self, other: &AffineTerm) -> bool {
        (&self.coef - &other.coef).amax() <= SAME_TERM_TOL && (self.constant - other.constant).abs() <= SAME_TERM_TOL
    }

    fn lex_cmp(&self, other: &AffineTerm) -> Ordering {
        for (a, b) in self.coef.iter().chain([self.constant].iter()).zip(other.coef.iter().chain([other.constant].iter())) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

fn max_of(terms: &[AffineTerm], x: &DVector<f64>) -> f64 {
    terms.iter().map(|t| t.eval(x)).fold(f64::NEG_INFINITY, f64::max)
}

/// `F(x) = max_i min_{j in sets[i]} pieces[j](x)`.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub pieces: Vec<AffineTerm>,
    pub sets: Vec<Vec<usize>>,
}

impl Lattice {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.sets
            .iter()
            .map(|s| s.iter().map(|&j| self.pieces[j].eval(x)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `F(x) = max(p_terms) - max(q_terms)`.
#[derive(Debug, Clone)]
pub struct DcDecomposition {
    pub p_terms: Vec<AffineTerm>,
    pub q_terms: Vec<AffineTerm>,
}

impl DcDecomposition {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        max_of(&self.p_terms, x) - max_of(&self.q_terms, x)
    }
}

/// Lattice representation of output coordinate `dim` of `pwa`.
///
/// For each region `i`, `S_i` collects the pieces that lie above piece `i`
/// everywhere on region `i` (one LP per pair). Identical pieces are merged,
/// and sets that contain another set are dropped since their minimum can
/// never exceed it.
pub fn lattice_rep(pwa: &PwaFunction, dim: usize) -> Result<Lattice> {
    if dim >= pwa.output_dim() {
        return Err(Error::DimensionMismatch {
            what: "output coordinate",
            expected: pwa.output_dim(),
            found: dim,
        });
    }
    let raw: Vec<AffineTerm> = pwa
        .regions
        .iter()
        .map(|r| AffineTerm::new(r.gain.row(dim).transpose(), r.offset[dim]))
        .collect();
    // Unique pieces; piece_of[i] is the unique index of region i's piece.
    let mut pieces: Vec<AffineTerm> = Vec::new();
    let mut piece_of = Vec::with_capacity(raw.len());
    for t in &raw {
        match pieces.iter().position(|u| u.close_to(t)) {
            Some(k) => piece_of.push(k),
            None => {
                piece_of.push(pieces.len());
                pieces.push(t.clone());
            }
        }
    }
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for (i, region) in pwa.regions.iter().enumerate() {
        let own = &pieces[piece_of[i]];
        let mut set = Vec::new();
        for (j, pj) in pieces.iter().enumerate() {
            if j == piece_of[i] {
                set.push(j);
                continue;
            }
            // min over the region of (l_j - l_i)
            let diff = &own.coef - &pj.coef;
            let worst = match region.poly.maximize(&diff)? {
                Some((v, _)) => -(v + own.constant - pj.constant),
                None => continue,
            };
            if worst >= -1e-9 {
                set.push(j);
            }
        }
        sets.push(set);
    }
    sets.sort();
    sets.dedup();
    let keep: Vec<bool> = (0..sets.len())
        .map(|b| !(0..sets.len()).any(|a| a != b && sets[a].len() < sets[b].len() && sets[a].iter().all(|j| sets[b].contains(j))))
        .collect();
    let sets: Vec<Vec<usize>> = sets.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect();
    let lattice = Lattice { pieces, sets };

    let mut rng = ChaCha8Rng::seed_from_u64(0x1a77);
    for x in pwa.domain.sample_uniform(&mut rng, SANITY_SAMPLES)? {
        let want = pwa.eval(&x)?[dim];
        let got = lattice.eval(&x);
        if (got - want).abs() > SANITY_TOL {
            return Err(Error::LatticeViolation((got - want).abs()));
        }
    }
    Ok(lattice)
}

/// Rewrites a lattice as a difference of two maxima of affine terms, pruning
/// terms that never attain their maximum on `domain`.
pub fn dc_decompose(lattice: &Lattice, domain: &Polytope, cap: usize) -> Result<DcDecomposition> {
    let n = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0xdc);
    let probes = domain.sample_uniform(&mut rng, 200)?;
    let mut acc: Option<DcDecomposition> = None;
    for set in &lattice.sets {
        // min_j l_j = 0 - max_j (-l_j)
        let term = DcDecomposition {
            p_terms: vec![AffineTerm::zero(n)],
            q_terms: set.iter().map(|&j| lattice.pieces[j].neg()).collect(),
        };
        let next = match acc {
            None => term,
            Some(prev) => dc_max(&prev, &term, cap)?,
        };
        acc = Some(DcDecomposition {
            p_terms: prune(next.p_terms, domain, &probes)?,
            q_terms: prune(next.q_terms, domain, &probes)?,
        });
    }
    let dc = acc.ok_or_else(|| Error::InvalidInput("lattice without sets".into()))?;
    Ok(dc)
}

/// `max(p1 - q1, p2 - q2) = max(p1 + q2, p2 + q1) - (q1 + q2)`.
fn dc_max(a: &DcDecomposition, b: &DcDecomposition, cap: usize) -> Result<DcDecomposition> {
    let p_len = a.p_terms.len() * b.q_terms.len() + b.p_terms.len() * a.q_terms.len();
    let q_len = a.q_terms.len() * b.q_terms.len();
    if p_len > cap || q_len > cap {
        return Err(Error::TermExplosion(p_len.max(q_len)));
    }
    let sum = |xs: &[AffineTerm], ys: &[AffineTerm]| -> Vec<AffineTerm> {
        xs.iter().flat_map(|x| ys.iter().map(move |y| x.plus(y))).collect()
    };
    let mut p = sum(&a.p_terms, &b.q_terms);
    p.extend(sum(&b.p_terms, &a.q_terms));
    Ok(DcDecomposition {
        p_terms: p,
        q_terms: sum(&a.q_terms, &b.q_terms),
    })
}

/// Removes duplicates and terms that never strictly attain `max(terms)` on
/// `domain`, then sorts the survivors lexicographically.
pub fn prune(terms: Vec<AffineTerm>, domain: &Polytope, probes: &[DVector<f64>]) -> Result<Vec<AffineTerm>> {
    let mut uniq: Vec<AffineTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        if !uniq.iter().any(|u| u.close_to(&t)) {
            uniq.push(t);
        }
    }
    uniq.sort_by(|a, b| a.lex_cmp(b));
    if uniq.len() <= 1 {
        return Ok(uniq);
    }
    // Strict winners at probe points are certainly needed.
    let mut essential = vec![false; uniq.len()];
    for x in probes {
        let vals: Vec<f64> = uniq.iter().map(|t| t.eval(x)).collect();
        let (mut best, mut second) = (0usize, f64::NEG_INFINITY);
        for k in 1..vals.len() {
            if vals[k] > vals[best] {
                second = vals[best];
                best = k;
            } else if vals[k] > second {
                second = vals[k];
            }
        }
        if vals[best] - second > PRUNE_TOL {
            essential[best] = true;
        }
    }
    let mut alive = vec![true; uniq.len()];
    for k in 0..uniq.len() {
        if essential[k] {
            continue;
        }
        let others: Vec<usize> = (0..uniq.len()).filter(|&j| j != k && alive[j]).collect();
        if others.is_empty() {
            continue;
        }
        if max_excess(&uniq[k], others.iter().map(|&j| &uniq[j]), domain)? <= PRUNE_TOL {
            alive[k] = false;
        }
    }
    Ok(uniq.into_iter().zip(alive).filter(|(_, a)| *a).map(|(t, _)| t).collect())
}

/// `max_{x in domain} t(x) - max_k others_k(x)`, as an LP over `(x, z)`.
fn max_excess<'a>(t: &AffineTerm, others: impl Iterator<Item = &'a AffineTerm>, domain: &Polytope) -> Result<f64> {
    let n = domain.dim();
    let others: Vec<&AffineTerm> = others.collect();
    let m = others.len() + domain.num_rows();
    let mut a = DMatrix::zeros(m, n + 1);
    let mut b = DVector::zeros(m);
    // s_k(x) - z <= 0  ->  c_k'x - z <= -d_k
    for (r, s) in others.iter().enumerate() {
        for j in 0..n {
            a[(r, j)] = s.coef[j];
        }
        a[(r, n)] = -1.0;
        b[r] = -s.constant;
    }
    let off = others.len();
    a.view_mut((off, 0), (domain.num_rows(), n)).copy_from(domain.a());
    b.rows_mut(off, domain.num_rows()).copy_from(domain.b());
    let mut cost = DVector::zeros(n + 1);
    for j in 0..n {
        cost[j] = -t.coef[j];
    }
    cost[n] = 1.0;
    let r = solve_lp(&LinearProgram::new(cost).with_inequalities(a, b))?;
    match r.status {
        SolveStatus::Optimal => Ok(-r.value + t.constant),
        SolveStatus::Infeasible => Err(Error::EmptyPolytope),
        _ => Err(Error::Unbounded),
    }
}

/// Pads a term list to `p` entries by repeating its first term.
fn pad(mut terms: Vec<AffineTerm>, p: usize) -> Vec<AffineTerm> {
    let first = terms[0].clone();
    while terms.len() < p {
        terms.push(first.clone());
    }
    terms
}

/// Single hidden layer with neurons `2k` (convex part) and `2k + 1`
/// (concave part) for every output `k`, and output weights `(1, -1)`.
pub fn network_from_dc(parts: &[DcDecomposition]) -> Result<MaxoutNetwork> {
    let n = parts
        .first()
        .and_then(|d| d.p_terms.first())
        .map(|t| t.coef.len())
        .ok_or_else(|| Error::InvalidInput("empty decomposition".into()))?;
    if parts.iter().any(|d| d.p_terms.is_empty() || d.q_terms.is_empty()) {
        return Err(Error::InvalidInput("decomposition with an empty term list".into()));
    }
    let p = parts
        .iter()
        .map(|d| d.p_terms.len().max(d.q_terms.len()))
        .max()
        .unwrap_or(1);
    let m = parts.len();
    let mut w = DMatrix::zeros(2 * m * p, n);
    let mut b = DVector::zeros(2 * m * p);
    let mut out = DMatrix::zeros(m, 2 * m);
    for (k, d) in parts.iter().enumerate() {
        for (neuron, list) in [(2 * k, &d.p_terms), (2 * k + 1, &d.q_terms)] {
            for (c, t) in pad(list.clone(), p).iter().enumerate() {
                let row = neuron * p + c;
                w.row_mut(row).copy_from(&t.coef.transpose());
                b[row] = t.constant;
            }
        }
        out[(k, 2 * k)] = 1.0;
        out[(k, 2 * k + 1)] = -1.0;
    }
    MaxoutNetwork::new(vec![MaxoutLayer::new(w, b, p)?], out, DVector::zeros(m))
}

/// Lattice plus DC rewriting for every output coordinate, checked against
/// the law on random samples of its domain.
pub fn decompose_all(pwa: &PwaFunction, cap: usize) -> Result<Vec<DcDecomposition>> {
    let mut parts = Vec::with_capacity(pwa.output_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let samples = pwa.domain.sample_uniform(&mut rng, SANITY_SAMPLES)?;
    for k in 0..pwa.output_dim() {
        let lattice = lattice_rep(pwa, k)?;
        let dc = dc_decompose(&lattice, &pwa.domain, cap)?;
        for x in &samples {
            let err = (dc.eval(x) - pwa.eval(x)?[k]).abs();
            if err > SANITY_TOL {
                return Err(Error::LatticeViolation(err));
            }
        }
        log::info!(
            "output {k}: {} lattice sets, {} convex and {} concave terms",
            lattice.sets.len(),
            dc.p_terms.len(),
            dc.q_terms.len()
        );
        parts.push(dc);
    }
    Ok(parts)
}

/// Type-(i) network (one hidden layer, two maxout neurons per output) that
/// represents `pwa` on its domain. Exactness is only checked on samples here;
/// see [`build_exact_type1`].
pub fn synthesize_type1(pwa: &PwaFunction) -> Result<MaxoutNetwork> {
    network_from_dc(&decompose_all(pwa, DEFAULT_TERM_CAP)?)
}

/// [`synthesize_type1`] followed by a MILP certificate of exactness over the
/// law's domain.
pub fn build_exact_type1(pwa: &PwaFunction, settings: &CertifySettings) -> Result<(MaxoutNetwork, Certificate)> {
    let net = synthesize_type1(pwa)?;
    let cert = certify_exact(pwa, &net, settings)?;
    Ok((net, cert))
}

/// Hinge construction for a scalar law of one variable. Writing the law as
/// its rightmost piece plus `sum_k c_k max(0, t_k - x)` over the breakpoints
/// `t_k`, positive `c_k` go to the convex neuron and negative ones to the
/// concave neuron. Channels are the affine pieces of each neuron, left to right.
pub fn build_exact_1d(pwa: &PwaFunction) -> Result<MaxoutNetwork> {
    if pwa.state_dim() != 1 || pwa.output_dim() != 1 {
        return Err(Error::InvalidInput("hinge construction needs a scalar law of one variable".into()));
    }
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(pwa.regions.len());
    for r in &pwa.regions {
        let (lo, hi) = r.poly.bounding_box()?;
        pieces.push((lo[0], hi[0], r.gain[(0, 0)], r.offset[0]));
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pieces.windows(2) {
        if (w[0].1 - w[1].0).abs() > 1e-9 {
            return Err(Error::UnsortedRegions);
        }
    }
    let last = pieces[pieces.len() - 1];
    let right = AffineTerm::new(DVector::from_element(1, last.2), last.3);
    let mut up: Vec<(f64, f64)> = Vec::new();
    let mut down: Vec<(f64, f64)> = Vec::new();
    for w in pieces.windows(2) {
        let change = w[1].2 - w[0].2;
        if change > 1e-12 {
            up.push((w[0].1, change));
        } else if change < -1e-12 {
            down.push((w[0].1, -change));
        }
    }
    // Piece j of base + sum_k c_k max(0, t_k - x): hinges k >= j active.
    let pieces_of = |base: &AffineTerm, hinges: &[(f64, f64)]| -> Vec<AffineTerm> {
        (0..=hinges.len())
            .map(|j| {
                let mut t = base.clone();
                for &(tk, ck) in &hinges[j..] {
                    t.coef[0] -= ck;
                    t.constant += ck * tk;
                }
                t
            })
            .collect()
    };
    let dc = DcDecomposition {
        p_terms: pieces_of(&right, &up),
        q_terms: pieces_of(&AffineTerm::zero(1), &down),
    };
    network_from_dc(&[dc])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{condense, explicit_mpc, scalar_unstable};

    fn scalar_law() -> PwaFunction {
        explicit_mpc(&condense(&scalar_unstable()).unwrap()).unwrap()
    }

    #[test]
    fn hinge_construction_reproduces_reference_weights() {
        let net = build_exact_1d(&scalar_law()).unwrap();
        let l = &net.layers[0];
        assert_eq!(l.channels, 2);
        for (got, want) in l.weights.iter().zip([-1.0, 0.0, -1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{}", l.weights);
        }
        for (got, want) in l.bias.iter().zip([0.0, -1.0, -1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{}", l.bias);
        }
        assert_eq!(net.out_weights.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn scalar_lattice_sets() {
        let law = scalar_law();
        let lat = lattice_rep(&law, 0).unwrap();
        assert_eq!(lat.pieces.len(), 3);
        assert_eq!(lat.sets.len(), 2);
        let dc = dc_decompose(&lat, &law.domain, DEFAULT_TERM_CAP).unwrap();
        assert_eq!(dc.p_terms.len(), 2);
        assert_eq!(dc.q_terms.len(), 2);
    }
}
