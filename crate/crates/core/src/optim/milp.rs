//! Best-first branch and bound over binary variables.
//!
//! Nodes are ordered by relaxation bound with FIFO tie-breaking, and the
//! branching variable is the most fractional binary (lowest index on ties),
//! so identical inputs always explore identical trees. Each child is
//! re-optimized from its parent's final tableau with the dual simplex while
//! the stored tableaux fit in a memory budget; beyond that, children are
//! solved from scratch.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use nalgebra::DVector;

use super::lp::{solve_lp, LpOutcome, Tableau};
use super::{LinearProgram, MilpProblem, Sense, SolveResult, SolveStatus, DEFAULT_REL_GAP, INT_TOL};
use crate::Result;

#[derive(Debug, Clone)]
pub struct MilpOptions {
    /// Absolute optimality gap.
    pub gap_tol: f64,
    /// Relative gap, applied as `rel_gap * (1 + |incumbent|)`.
    pub rel_gap: f64,
    pub node_limit: usize,
    /// Only solutions strictly better than this objective value are sought.
    pub cutoff: Option<f64>,
    /// Memory budget for warm-start tableaux held by open nodes.
    pub warm_start_bytes: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 0.0,
            rel_gap: DEFAULT_REL_GAP,
            node_limit: 1_000_000,
            cutoff: None,
            warm_start_bytes: 1 << 30,
        }
    }
}

/// Solves a MILP with the given absolute gap and node limit.
pub fn solve_milp(p: &MilpProblem, gap_tol: f64, node_limit: usize) -> Result<SolveResult> {
    solve_milp_with(
        p,
        &MilpOptions {
            gap_tol,
            node_limit,
            ..MilpOptions::default()
        },
    )
}

struct Node {
    /// Lower bound (minimization form) inherited from the parent relaxation.
    bound: f64,
    seq: u64,
    fixes: Rc<Vec<(usize, f64)>>,
    warm: Option<Rc<Tableau>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the greatest: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    value: f64,
    point: DVector<f64>,
}

pub fn solve_milp_with(p: &MilpProblem, opts: &MilpOptions) -> Result<SolveResult> {
    p.validate()?;
    let n = p.base.num_vars();
    let flip = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut lp: LinearProgram = p.base.clone();
    lp.cost *= flip;
    let binaries = {
        let mut b = p.integrality.clone();
        b.sort_unstable();
        b.dedup();
        b
    };
    let cutoff = opts.cutoff.map(|c| flip * c);
    let gap_of = |inc: f64| opts.gap_tol.max(opts.rel_gap * (1.0 + inc.abs()));

    let mut incumbent: Option<Incumbent> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        fixes: Rc::new(Vec::new()),
        warm: None,
    });
    let mut stored = 0usize;
    let mut nodes = 0usize;
    let mut unbounded_root = false;

    let threshold = |inc: &Option<Incumbent>| -> f64 {
        match (inc, cutoff) {
            (Some(i), _) => i.value - gap_of(i.value),
            (None, Some(c)) => c - gap_of(c),
            (None, None) => f64::INFINITY,
        }
    };

    while let Some(node) = heap.peek() {
        if node.bound >= threshold(&incumbent) {
            break;
        }
        if nodes >= opts.node_limit {
            break;
        }
        let node = heap.pop().expect("peeked");
        let tab = match node.warm {
            Some(rc) => {
                let t = match Rc::try_unwrap(rc) {
                    Ok(t) => {
                        stored -= 1;
                        t
                    }
                    Err(rc) => (*rc).clone(),
                };
                let mut t = t;
                let &(j, v) = node.fixes.last().expect("warm nodes carry a fix");
                t.set_bounds(j, v, v);
                let out = t.reoptimize()?;
                nodes += 1;
                if out != LpOutcome::Optimal {
                    continue;
                }
                t
            }
            None => {
                let mut sub = lp.clone();
                for &(j, v) in node.fixes.iter() {
                    sub.lower[j] = v;
                    sub.upper[j] = v;
                }
                let (t, out) = Tableau::from_lp(&sub)?;
                nodes += 1;
                match out {
                    LpOutcome::Optimal => t,
                    LpOutcome::Infeasible => continue,
                    LpOutcome::Unbounded => {
                        if node.fixes.is_empty() {
                            unbounded_root = true;
                            break;
                        }
                        continue;
                    }
                }
            }
        };
        let bound = tab.objective();
        if bound >= threshold(&incumbent) {
            continue;
        }

        let fixed: Vec<bool> = {
            let mut f = vec![false; n];
            for &(j, _) in node.fixes.iter() {
                f[j] = true;
            }
            f
        };
        let mut branch: Option<(usize, f64)> = None;
        let mut tiny: Option<(usize, f64)> = None;
        for &j in &binaries {
            if fixed[j] {
                continue;
            }
            let v = tab.value(j);
            let frac = v.min(1.0 - v).max(0.0);
            if frac > INT_TOL {
                if branch.is_none_or(|(_, f)| frac > f) {
                    branch = Some((j, frac));
                }
            } else if frac > 1e-12 && tiny.is_none_or(|(_, f)| frac > f) {
                tiny = Some((j, frac));
            }
        }

        if branch.is_none() {
            // Integral within tolerance: substitute the rounded binaries as
            // constants and re-solve, so big-M rows hold without slack.
            let rounded: Vec<(usize, f64)> = binaries
                .iter()
                .map(|&j| (j, if fixed[j] { tab.value(j) } else { tab.value(j).round() }))
                .collect();
            let polished = polish(&lp, &rounded)?;
            if let Some((val, point)) = &polished {
                let better = match (&incumbent, cutoff) {
                    (Some(i), _) => *val < i.value,
                    (None, Some(c)) => *val < c,
                    (None, None) => true,
                };
                if better {
                    incumbent = Some(Incumbent {
                        value: *val,
                        point: point.clone(),
                    });
                }
            }
            let polished = polished.map(|(v, _)| v);
            let settled = match polished {
                Some(val) => val - bound <= gap_of(val),
                None => false,
            };
            if settled {
                continue;
            }
            // A relaxation that only looks integral under the row tolerance
            // can hide better assignments in this subtree.
            if tiny.is_none() {
                tiny = binaries.iter().find(|&&j| !fixed[j]).map(|&j| (j, 0.0));
            }
            if tiny.is_none() {
                continue;
            }
            branch = tiny;
        }

        let (j, _) = branch.expect("branch variable chosen");
        let parent = Rc::new(tab);
        let warm = if stored.saturating_add(1).saturating_mul(parent.bytes()) <= opts.warm_start_bytes {
            stored += 1;
            Some(parent)
        } else {
            None
        };
        for v in [0.0, 1.0] {
            let mut fixes = (*node.fixes).clone();
            fixes.push((j, v));
            seq += 1;
            heap.push(Node {
                bound,
                seq,
                fixes: Rc::new(fixes),
                warm: warm.clone(),
            });
        }
    }

    if unbounded_root {
        let mut r = SolveResult::without_solution(SolveStatus::Unbounded, n);
        r.nodes = nodes;
        return Ok(r);
    }

    let open_bound = heap.peek().map(|nd| nd.bound);
    let limit_hit = match open_bound {
        Some(b) => b < threshold(&incumbent) && nodes >= opts.node_limit,
        None => false,
    };
    Ok(match incumbent {
        Some(inc) => {
            let gap = match open_bound {
                Some(b) if limit_hit => (inc.value - b).max(0.0),
                _ => 0.0,
            };
            SolveResult {
                status: if limit_hit {
                    SolveStatus::NodeLimit
                } else {
                    SolveStatus::Optimal
                },
                value: flip * inc.value,
                point: inc.point,
                duals: None,
                active_set: Vec::new(),
                gap,
                nodes,
            }
        }
        None => {
            let status = if limit_hit {
                SolveStatus::NodeLimit
            } else if cutoff.is_some() {
                SolveStatus::Cutoff
            } else {
                SolveStatus::Infeasible
            };
            let mut r = SolveResult::without_solution(status, n);
            r.nodes = nodes;
            r
        }
    })
}

/// Solves the continuous part with the binaries held at `fixed` exactly.
fn polish(lp: &LinearProgram, fixed: &[(usize, f64)]) -> Result<Option<(f64, DVector<f64>)>> {
    let n = lp.num_vars();
    let mut value_of = vec![None; n];
    for &(j, v) in fixed {
        value_of[j] = Some(v.round());
    }
    let free: Vec<usize> = (0..n).filter(|&j| value_of[j].is_none()).collect();
    let constant: f64 = fixed.iter().map(|&(j, v)| lp.cost[j] * v.round()).sum();
    let shift = |a: &nalgebra::DMatrix<f64>, b: &DVector<f64>| {
        let mut b = b.clone();
        for &(j, v) in fixed {
            b -= a.column(j) * v.round();
        }
        (a.select_columns(free.iter()), b)
    };
    let (a_ub, b_ub) = shift(&lp.a_ub, &lp.b_ub);
    let (a_eq, b_eq) = shift(&lp.a_eq, &lp.b_eq);
    let sub = LinearProgram {
        cost: lp.cost.select_rows(free.iter()),
        a_ub,
        b_ub,
        a_eq,
        b_eq,
        lower: lp.lower.select_rows(free.iter()),
        upper: lp.upper.select_rows(free.iter()),
    };
    let r = solve_lp(&sub)?;
    if !r.is_optimal() {
        return Ok(None);
    }
    let mut point = DVector::zeros(n);
    for (k, &j) in free.iter().enumerate() {
        point[j] = r.point[k];
    }
    for &(j, v) in fixed {
        point[j] = v.round();
    }
    Ok(Some((r.value + constant, point)))
}
