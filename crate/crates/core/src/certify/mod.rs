//! Exact maximum error and error Lipschitz constant of a maxout network
//! approximating an explicit PWA law, by mixed-integer linear programming.
//!
//! The network is encoded with one selector binary per channel and big-M
//! rows; the law with one selector per region. A norm of a vector or matrix
//! expression is maximized by enumerating its sign patterns, one MILP each,
//! with the best value so far passed on as a cutoff.

mod encoding;
mod law;
mod network;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encoding::{Expr, MiEncoding};
pub use law::{add_domain, add_pwa_law, check_coverage, encode_pwa_law, law_gain_expr, recover_law, LawVars};
pub use network::{
    add_network_gain, add_network_output, encode_network_gain, encode_network_output, network_output_expr,
    recover_gain, recover_output, NetworkVars,
};

use crate::geometry::Polytope;
use crate::maxout::MaxoutNetwork;
use crate::mpc::{PwaFunction, LOCATE_TOL};
use crate::optim::{MilpOptions, Sense, SolveStatus};
use crate::{Error, Result};

pub const DEFAULT_BIG_M: f64 = 1e4;
/// Largest error accepted by [`certify_exact`].
pub const EXACT_TOL: f64 = 1e-6;

/// Tie margin for one-dimensional inputs, and for higher dimensions.
pub fn default_epsilon(input_dim: usize) -> f64 {
    if input_dim == 1 {
        1e-5
    } else {
        1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alpha {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "inf")]
    Inf,
}

impl Alpha {
    pub fn vector_norm(self, v: &DVector<f64>) -> f64 {
        match self {
            Alpha::One => v.iter().map(|a| a.abs()).sum(),
            Alpha::Inf => v.amax(),
        }
    }

    /// Induced matrix norm: largest absolute column sum for 1, row sum for inf.
    pub fn matrix_norm(self, m: &DMatrix<f64>) -> f64 {
        let (outer, inner) = match self {
            Alpha::One => (m.ncols(), m.nrows()),
            Alpha::Inf => (m.nrows(), m.ncols()),
        };
        (0..outer)
            .map(|a| {
                (0..inner)
                    .map(|b| match self {
                        Alpha::One => m[(b, a)].abs(),
                        Alpha::Inf => m[(a, b)].abs(),
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alpha::One => "1",
            Alpha::Inf => "inf",
        })
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "one" => Ok(Alpha::One),
            "inf" | "infinity" | "∞" => Ok(Alpha::Inf),
            _ => Err(Error::InvalidInput(format!("unsupported norm {s:?}; use 1 or inf"))),
        }
    }
}

/// A big-M style constant: a fixed value for every layer, or per-layer
/// values from interval arithmetic over the domain's bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Fixed(f64),
    Auto,
}

impl FromStr for Bound {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bound::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Bound::Fixed(v)),
            _ => Err(Error::InvalidInput(format!("big-M must be a positive number or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifySettings {
    /// Bound on preactivation spreads in the output encoding.
    pub big_m: Bound,
    /// Bound on partial gain entries in the gain encoding.
    pub w_bound: Bound,
    /// Tie margin for the Lipschitz MILP; `None` picks [`default_epsilon`].
    pub epsilon: Option<f64>,
    pub gap_tol: f64,
    pub node_limit: usize,
    /// Domain samples for the bound pre-flight check and the initial cutoff.
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            big_m: Bound::Fixed(DEFAULT_BIG_M),
            w_bound: Bound::Fixed(DEFAULT_BIG_M),
            epsilon: None,
            gap_tol: 1e-9,
            node_limit: 2_000_000,
            samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    MaxError,
    Lipschitz,
}

/// Constants actually used in the encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsedSettings {
    pub big_m: Vec<f64>,
    pub w_bound: Vec<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub alpha: Alpha,
    pub value: f64,
    pub witness: Vec<f64>,
    /// Law region selected at the witness.
    pub region: usize,
    /// Absolute bound gap: the true value lies in `[value, value + gap]`.
    /// Infinite (stored as `null`) when a node limit left no finite bound.
    #[serde(with = "gap_serde")]
    pub gap: f64,
    pub settings: UsedSettings,
    /// Seconds.
    pub wall_time: f64,
    pub status: SolveStatus,
    pub nodes: usize,
}

mod gap_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(gap: &f64, s: S) -> Result<S::Ok, S::Error> {
        gap.is_finite().then_some(*gap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Certificate {
    pub fn witness(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.witness)
    }

    /// Recomputes the certified quantity at the witness in plain arithmetic,
    /// using the law piece of the selected region.
    pub fn replay(&self, pwa: &PwaFunction, net: &MaxoutNetwork) -> Result<f64> {
        let x = self.witness();
        let region = pwa
            .regions
            .get(self.region)
            .ok_or_else(|| Error::InvalidInput(format!("no region {}", self.region)))?;
        Ok(match self.kind {
            CertificateKind::MaxError => self.alpha.vector_norm(&(region.apply(&x) - net.eval(&x)?)),
            CertificateKind::Lipschitz => self.alpha.matrix_norm(&(&region.gain - net.local_gain(&x)?)),
        })
    }
}

fn check_dims(pwa: &PwaFunction, net: &MaxoutNetwork, domain: &Polytope) -> Result<()> {
    if net.input_dim() != pwa.state_dim() || domain.dim() != pwa.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "network input",
            expected: pwa.state_dim(),
            found: net.input_dim(),
        });
    }
    if net.output_dim() != pwa.output_dim() {
        return Err(Error::DimensionMismatch {
            what: "network output",
            expected: pwa.output_dim(),
            found: net.output_dim(),
        });
    }
    Ok(())
}

/// Interval bounds over a box: per layer, the largest gap between a neuron's
/// output and any of its channels, and the largest partial gain entry.
fn interval_bounds(net: &MaxoutNetwork, lo: &DVector<f64>, hi: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let (mut lo, mut hi) = (lo.clone(), hi.clone());
    let n = net.input_dim();
    let mut gain_abs = DMatrix::<f64>::identity(n, n);
    let mut spreads = Vec::new();
    let mut gains = Vec::new();
    for layer in &net.layers {
        let wp = layer.weights.map(|v| v.max(0.0));
        let wn = layer.weights.map(|v| v.min(0.0));
        let z_hi = &wp * &hi + &wn * &lo + &layer.bias;
        let z_lo = &wp * &lo + &wn * &hi + &layer.bias;
        let tilde = layer.weights.abs() * &gain_abs;
        gains.push(tilde.max());
        let mut spread = 0.0f64;
        let mut next_lo = DVector::zeros(layer.neurons);
        let mut next_hi = DVector::zeros(layer.neurons);
        let mut next_gain = DMatrix::zeros(layer.neurons, n);
        for s in 0..layer.neurons {
            let rows = layer.channel_rows(s);
            let q_hi = rows.clone().map(|r| z_hi[r]).fold(f64::NEG_INFINITY, f64::max);
            let q_lo = rows.clone().map(|r| z_lo[r]).fold(f64::NEG_INFINITY, f64::max);
            for r in rows.clone() {
                spread = spread.max(q_hi - z_lo[r]);
                for c in 0..n {
                    next_gain[(s, c)] = f64::max(next_gain[(s, c)], tilde[(r, c)]);
                }
            }
            next_lo[s] = q_lo;
            next_hi[s] = q_hi;
        }
        spreads.push(spread);
        lo = next_lo;
        hi = next_hi;
        gain_abs = next_gain;
    }
    (spreads, gains)
}

/// Largest preactivation spread and partial gain entry per layer at `x`
/// (winning channels as in the forward pass).
fn observed_bounds(net: &MaxoutNetwork, x: &DVector<f64>, spreads: &mut [f64], gains: &mut [f64]) {
    let mut y = x.clone();
    let mut g = DMatrix::<f64>::identity(x.len(), x.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let z = &layer.weights * &y + &layer.bias;
        let tilde = &layer.weights * &g;
        gains[i] = gains[i].max(tilde.amax());
        let mut next = DVector::zeros(layer.neurons);
        let mut next_g = DMatrix::zeros(layer.neurons, x.len());
        for s in 0..layer.neurons {
            let rows = layer.channel_rows(s);
            let mut best = rows.start;
            for r in rows.clone() {
                if z[r] > z[best] {
                    best = r;
                }
            }
            for r in rows.clone() {
                spreads[i] = spreads[i].max(z[best] - z[r]).max(z[r].abs());
            }
            next[s] = z[best];
            next_g.row_mut(s).copy_from(&tilde.row(best));
        }
        y = next;
        g = next_g;
    }
}

/// Resolves the big-M constants and checks them on domain samples.
fn resolve_bounds(
    net: &MaxoutNetwork,
    domain: &Polytope,
    samples: &[DVector<f64>],
    settings: &CertifySettings,
    eps: f64,
    with_gain: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = domain.bounding_box()?;
    let (spreads, gains) = interval_bounds(net, &lo, &hi);
    let layers = net.layers.len();
    let resolve = |b: Bound, auto: &[f64]| -> Vec<f64> {
        match b {
            Bound::Fixed(v) => vec![v; layers],
            Bound::Auto => auto.iter().map(|v| 1.01 * v + 1.0 + eps).collect(),
        }
    };
    let big_m = resolve(settings.big_m, &spreads);
    let w_bound = resolve(settings.w_bound, &gains);
    let mut seen_spread = vec![0.0; layers];
    let mut seen_gain = vec![0.0; layers];
    for x in samples {
        observed_bounds(net, x, &mut seen_spread, &mut seen_gain);
    }
    for i in 0..layers {
        if seen_spread[i] + eps > big_m[i] {
            return Err(Error::InvalidBigM {
                bound: big_m[i],
                observed: seen_spread[i],
            });
        }
        if with_gain && i > 0 && seen_gain[i] > w_bound[i] {
            return Err(Error::InvalidBigM {
                bound: w_bound[i],
                observed: seen_gain[i],
            });
        }
    }
    Ok((big_m, w_bound))
}

/// Smallest gap between a neuron's winning channel and its runner-up.
fn channel_margin(net: &MaxoutNetwork, x: &DVector<f64>) -> f64 {
    let mut y = x.clone();
    let mut margin = f64::INFINITY;
    for layer in &net.layers {
        let z = &layer.weights * &y + &layer.bias;
        y = DVector::from_fn(layer.neurons, |s, _| {
            let mut vals: Vec<f64> = layer.channel_rows(s).map(|r| z[r]).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            if vals.len() > 1 {
                margin = margin.min(vals[0] - vals[1]);
            }
            vals[0]
        });
    }
    margin
}

/// Sign patterns `{-1, 1}^len`.
fn sign_patterns(len: usize) -> Vec<Vec<f64>> {
    (0..1usize << len)
        .map(|mask| (0..len).map(|b| if mask >> b & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect()
}

struct Best {
    value: f64,
    upper: f64,
    point: Option<DVector<f64>>,
    status: SolveStatus,
    nodes: usize,
}

/// Maximizes `max_k objectives[k]` over the encoding. `floor` is a value
/// known to be attained (from sampling), used as the initial cutoff.
fn maximize_all(enc: &MiEncoding, objectives: &[Expr], floor: Option<f64>, settings: &CertifySettings) -> Result<Best> {
    let mut best = Best {
        value: f64::NEG_INFINITY,
        upper: f64::NEG_INFINITY,
        point: None,
        status: SolveStatus::Optimal,
        nodes: 0,
    };
    let margin = |v: f64| 1e-6 * (1.0 + v.abs());
    for (k, obj) in objectives.iter().enumerate() {
        let cutoff = match (&best.point, floor) {
            (Some(_), _) => Some(best.value),
            (None, Some(f)) => Some(f - margin(f)),
            (None, None) => None,
        };
        let opts = MilpOptions {
            gap_tol: settings.gap_tol,
            node_limit: settings.node_limit,
            cutoff,
            ..MilpOptions::default()
        };
        let r = enc.solve(obj, Sense::Maximize, &opts)?;
        best.nodes += r.nodes;
        log::debug!("objective {k}: {:?}, value {:e}, {} nodes", r.status, r.value, r.nodes);
        match r.status {
            SolveStatus::Optimal | SolveStatus::NodeLimit => {
                if r.status == SolveStatus::NodeLimit {
                    best.status = SolveStatus::NodeLimit;
                }
                let upper = if r.gap.is_finite() { r.value + r.gap } else { f64::INFINITY };
                best.upper = best.upper.max(upper);
                if r.value.is_finite() && r.value > best.value {
                    best.value = r.value;
                    best.point = Some(r.point);
                }
            }
            SolveStatus::Cutoff => {
                if let Some(c) = cutoff {
                    best.upper = best.upper.max(c);
                }
            }
            SolveStatus::Infeasible => {}
            SolveStatus::Unbounded => return Err(Error::Unbounded),
        }
    }
    if best.point.is_none() && floor.is_some() {
        log::debug!("no solution above the sampled floor, retrying without cutoff");
        return maximize_all(enc, objectives, None, settings);
    }
    Ok(best)
}

/// Best sampled value and its point.
type Floor = Option<(f64, DVector<f64>)>;

fn keep_max(acc: Floor, v: f64, x: &DVector<f64>) -> Floor {
    match acc {
        Some((a, _)) if a >= v => acc,
        _ => Some((v, x.clone())),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: CertificateKind,
    alpha: Alpha,
    best: Best,
    floor: Floor,
    pwa: &PwaFunction,
    law: &LawVars,
    x: &std::ops::Range<usize>,
    used: UsedSettings,
    start: Instant,
) -> Result<Certificate> {
    let (value, witness, region) = match (best.point, floor) {
        (Some(point), _) => {
            let slot = law.rho.clone().max_by(|&a, &b| point[a].total_cmp(&point[b])).expect("regions");
            let witness: Vec<f64> = x.clone().map(|j| point[j]).collect();
            (best.value, witness, law.regions[slot - law.rho.start])
        }
        // Node limit before any incumbent: the best sample is the partial answer.
        (None, Some((v, p))) if best.status == SolveStatus::NodeLimit => {
            let region = pwa.locate(&p, LOCATE_TOL).ok_or(Error::CoverageGap(p.iter().copied().collect()))?;
            (v, p.iter().copied().collect(), region)
        }
        (None, _) if kind == CertificateKind::Lipschitz => return Err(Error::AllBoundary),
        (None, _) => return Err(Error::EmptyPolytope),
    };
    let gap = (best.upper - value).max(0.0);
    Ok(Certificate {
        kind,
        alpha,
        // Round-off can leave every signed objective slightly below zero.
        value: value.max(0.0),
        witness,
        region,
        gap,
        settings: used,
        wall_time: start.elapsed().as_secs_f64(),
        status: best.status,
        nodes: best.nodes,
    })
}

fn domain_samples(domain: &Polytope, settings: &CertifySettings) -> Result<Vec<DVector<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    domain.sample_uniform(&mut rng, settings.samples)
}

/// `max_{x in domain} ||pi(x) - Phi(x)||_alpha` with an exact output encoding.
pub fn max_error(
    pwa: &PwaFunction,
    net: &MaxoutNetwork,
    domain: &Polytope,
    alpha: Alpha,
    settings: &CertifySettings,
) -> Result<Certificate> {
    let start = Instant::now();
    check_dims(pwa, net, domain)?;
    let samples = domain_samples(domain, settings)?;
    let (big_m, _) = resolve_bounds(net, domain, &samples, settings, 0.0, false)?;
    check_coverage(pwa, domain, settings.samples, settings.seed ^ 0x5a)?;

    let mut enc = MiEncoding::new();
    let x = enc.add_free_block("x", pwa.state_dim());
    add_domain(&mut enc, x.clone(), domain);
    let law = add_pwa_law(&mut enc, pwa, domain, x.clone())?;
    let nv = add_network_output(&mut enc, net, x.clone(), &big_m, 0.0)?;
    let out = network_output_expr(net, &nv);
    let err: Vec<Expr> = out.iter().enumerate().map(|(k, o)| Expr::var(law.u.start + k).minus(o)).collect();
    let objectives: Vec<Expr> = match alpha {
        Alpha::Inf => err.iter().flat_map(|e| [e.clone(), e.scaled(-1.0)]).collect(),
        Alpha::One => sign_patterns(err.len())
            .into_iter()
            .map(|signs| {
                let mut o = Expr::default();
                for (e, s) in err.iter().zip(signs) {
                    o.axpy(s, e);
                }
                o
            })
            .collect(),
    };
    let floor = samples
        .iter()
        .filter_map(|x| Some((alpha.vector_norm(&(pwa.eval(x).ok()? - net.eval(x).ok()?)), x)))
        .fold(None, |acc, (v, x)| keep_max(acc, v, x));
    log::info!(
        "max-error MILP: {} columns ({} binary), {} rows, {} objectives",
        enc.num_cols(),
        enc.num_binaries(),
        enc.num_rows(),
        objectives.len()
    );
    let best = maximize_all(&enc, &objectives, floor.as_ref().map(|f| f.0), settings)?;
    let used = UsedSettings {
        big_m,
        w_bound: Vec::new(),
        epsilon: 0.0,
    };
    finish(CertificateKind::MaxError, alpha, best, floor, pwa, &law, &x, used, start)
}

/// `max ||K_MPC(x) - K_NN(x)||_alpha` over `domain` minus the `eps`-margin
/// around activation boundaries.
pub fn lipschitz(
    pwa: &PwaFunction,
    net: &MaxoutNetwork,
    domain: &Polytope,
    alpha: Alpha,
    settings: &CertifySettings,
) -> Result<Certificate> {
    let start = Instant::now();
    check_dims(pwa, net, domain)?;
    let eps = settings.epsilon.unwrap_or_else(|| default_epsilon(pwa.state_dim()));
    if eps <= 0.0 {
        return Err(Error::InvalidInput("the Lipschitz encoding needs a positive tie margin".into()));
    }
    let samples = domain_samples(domain, settings)?;
    let (big_m, w_bound) = resolve_bounds(net, domain, &samples, settings, eps, true)?;
    check_coverage(pwa, domain, settings.samples, settings.seed ^ 0x5a)?;

    let (n, m) = (pwa.state_dim(), pwa.output_dim());
    let mut enc = MiEncoding::new();
    let x = enc.add_free_block("x", n);
    add_domain(&mut enc, x.clone(), domain);
    let law = add_pwa_law(&mut enc, pwa, domain, x.clone())?;
    let k_mpc = law_gain_expr(pwa, &law);
    let nv = add_network_output(&mut enc, net, x.clone(), &big_m, eps)?;
    let k_nn = add_network_gain(&mut enc, net, &nv, &w_bound)?;
    let diff: Vec<Vec<Expr>> = (0..m)
        .map(|k| (0..n).map(|r| k_mpc[k][r].minus(&k_nn[k][r])).collect())
        .collect();
    let mut objectives = Vec::new();
    match alpha {
        Alpha::Inf => {
            for row in &diff {
                for signs in sign_patterns(n) {
                    let mut o = Expr::default();
                    for (e, s) in row.iter().zip(signs) {
                        o.axpy(s, e);
                    }
                    objectives.push(o);
                }
            }
        }
        Alpha::One => {
            for r in 0..n {
                for signs in sign_patterns(m) {
                    let mut o = Expr::default();
                    for (k, s) in signs.into_iter().enumerate() {
                        o.axpy(s, &diff[k][r]);
                    }
                    objectives.push(o);
                }
            }
        }
    }
    let floor = samples
        .iter()
        .filter(|x| channel_margin(net, x) > 2.0 * eps)
        .filter_map(|x| {
            let i = pwa.locate(x, LOCATE_TOL)?;
            Some((alpha.matrix_norm(&(&pwa.regions[i].gain - net.local_gain(x).ok()?)), x))
        })
        .fold(None, |acc, (v, x)| keep_max(acc, v, x));
    log::info!(
        "Lipschitz MILP: {} columns ({} binary), {} rows, {} objectives",
        enc.num_cols(),
        enc.num_binaries(),
        enc.num_rows(),
        objectives.len()
    );
    let best = maximize_all(&enc, &objectives, floor.as_ref().map(|f| f.0), settings)?;
    let used = UsedSettings {
        big_m,
        w_bound,
        epsilon: eps,
    };
    finish(CertificateKind::Lipschitz, alpha, best, floor, pwa, &law, &x, used, start)
}

/// Certifies `max ||pi - Phi||_inf <= EXACT_TOL` over the law's domain.
pub fn certify_exact(pwa: &PwaFunction, net: &MaxoutNetwork, settings: &CertifySettings) -> Result<Certificate> {
    let cert = max_error(pwa, net, &pwa.domain, Alpha::Inf, settings)?;
    if cert.value + cert.gap > EXACT_TOL {
        return Err(Error::CertificationFailure {
            value: cert.value + cert.gap,
            tol: EXACT_TOL,
        });
    }
    Ok(cert)
}
