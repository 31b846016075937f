//! Big-M encodings of a maxout network's output and local gain.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::encoding::{Expr, MiEncoding};
use crate::maxout::MaxoutNetwork;
use crate::{Error, Result};

/// Columns of an encoded network.
#[derive(Debug, Clone)]
pub struct NetworkVars {
    pub x: Range<usize>,
    /// Neuron outputs per hidden layer.
    pub hidden: Vec<Range<usize>>,
    /// Channel selectors per hidden layer, one per weight row.
    pub delta: Vec<Range<usize>>,
}

fn check_layers(net: &MaxoutNetwork, what: &'static str, values: &[f64]) -> Result<()> {
    if values.len() != net.layers.len() {
        return Err(Error::DimensionMismatch {
            what,
            expected: net.layers.len(),
            found: values.len(),
        });
    }
    Ok(())
}

/// Adds the network on input columns `x`. Per neuron `s` with output `q_s`
/// and channel values `z_j`:
/// `q_s <= z_j + M (1 - d_j)`, `q_s >= z_j + eps (1 - d_j)`, `sum_j d_j = 1`.
/// `big_m` holds one constant per hidden layer.
pub fn add_network_output(
    enc: &mut MiEncoding,
    net: &MaxoutNetwork,
    x: Range<usize>,
    big_m: &[f64],
    eps: f64,
) -> Result<NetworkVars> {
    check_layers(net, "big-M constants", big_m)?;
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "encoded network input",
            expected: net.input_dim(),
            found: x.len(),
        });
    }
    let mut input: Vec<usize> = x.clone().collect();
    let mut hidden = Vec::with_capacity(net.layers.len());
    let mut delta = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let q = enc.add_free_block(format!("q{}", i + 1), layer.neurons);
        let mut d_start = None;
        for s in 0..layer.neurons {
            let d = enc.add_one_hot(format!("delta{}_{}", i + 1, s + 1), layer.channels);
            d_start.get_or_insert(d.start);
            for (c, row) in layer.channel_rows(s).enumerate() {
                let mut z = Expr::constant(layer.bias[row]);
                for (t, &col) in input.iter().enumerate() {
                    z.add_term(col, layer.weights[(row, t)]);
                }
                let dj = d.start + c;
                // q - z + M d - M <= 0
                let mut upper = Expr::var(q.start + s).minus(&z);
                upper.add_term(dj, big_m[i]).constant -= big_m[i];
                enc.le(upper);
                // z + eps - eps d - q <= 0
                let mut lower = z.minus(&Expr::var(q.start + s));
                lower.add_term(dj, -eps).constant += eps;
                enc.le(lower);
            }
        }
        let start = d_start.expect("layers have neurons");
        delta.push(start..start + layer.weights.nrows());
        input = q.clone().collect();
        hidden.push(q);
    }
    Ok(NetworkVars { x, hidden, delta })
}

/// `W_out q^(l) + b_out` as expressions.
pub fn network_output_expr(net: &MaxoutNetwork, vars: &NetworkVars) -> Vec<Expr> {
    let last = vars.hidden.last().expect("at least one hidden layer");
    (0..net.output_dim())
        .map(|k| {
            let mut e = Expr::constant(net.out_bias[k]);
            for (t, col) in last.clone().enumerate() {
                e.add_term(col, net.out_weights[(k, t)]);
            }
            e
        })
        .collect()
}

/// Adds the gain constraints and returns `K_NN` as an `m x n` grid of
/// expressions. The first layer needs no auxiliary columns since its partial
/// gain is the constant weight matrix; deeper layers get one bounded product
/// column per channel and input coordinate. `w_bound` holds one bound per
/// hidden layer (the first entry is unused).
pub fn add_network_gain(
    enc: &mut MiEncoding,
    net: &MaxoutNetwork,
    vars: &NetworkVars,
    w_bound: &[f64],
) -> Result<Vec<Vec<Expr>>> {
    check_layers(net, "gain bounds", w_bound)?;
    let n = net.input_dim();
    // xi^(i): neurons x n
    let mut xi: Vec<Vec<Expr>> = (0..n)
        .map(|s| (0..n).map(|r| Expr::constant(if s == r { 1.0 } else { 0.0 })).collect())
        .collect();
    for (i, layer) in net.layers.iter().enumerate() {
        let rows = layer.weights.nrows();
        let d = &vars.delta[i];
        let mut next: Vec<Vec<Expr>> = vec![vec![Expr::default(); n]; layer.neurons];
        if i == 0 {
            for h in 0..rows {
                for r in 0..n {
                    next[h / layer.channels][r].add_term(d.start + h, layer.weights[(h, r)]);
                }
            }
        } else {
            let wb = w_bound[i];
            let prod = enc.add_block(format!("xi{}", i + 1), rows * n, -wb, wb);
            for h in 0..rows {
                for r in 0..n {
                    let mut wt = Expr::default();
                    for (t, row) in xi.iter().enumerate() {
                        wt.axpy(layer.weights[(h, t)], &row[r]);
                    }
                    let col = prod.start + h * n + r;
                    let dh = d.start + h;
                    // -wb d <= xi~ <= wb d
                    let mut e = Expr::var(col);
                    e.add_term(dh, -wb);
                    enc.le(e);
                    let mut e = Expr::var(col).scaled(-1.0);
                    e.add_term(dh, -wb);
                    enc.le(e);
                    // |xi~ - W~| <= wb (1 - d)
                    let mut e = Expr::var(col).minus(&wt);
                    e.add_term(dh, wb).constant -= wb;
                    enc.le(e);
                    let mut e = wt.minus(&Expr::var(col));
                    e.add_term(dh, wb).constant -= wb;
                    enc.le(e);
                    next[h / layer.channels][r].add_term(col, 1.0);
                }
            }
        }
        xi = next;
    }
    Ok((0..net.output_dim())
        .map(|k| {
            (0..n)
                .map(|r| {
                    let mut e = Expr::default();
                    for (t, row) in xi.iter().enumerate() {
                        e.axpy(net.out_weights[(k, t)], &row[r]);
                    }
                    e
                })
                .collect()
        })
        .collect())
}

/// Stand-alone output encoding with a free input block `x`.
pub fn encode_network_output(net: &MaxoutNetwork, big_m: f64, eps: f64) -> Result<(MiEncoding, NetworkVars)> {
    let mut enc = MiEncoding::new();
    let x = enc.add_free_block("x", net.input_dim());
    let vars = add_network_output(&mut enc, net, x, &vec![big_m; net.layers.len()], eps)?;
    Ok((enc, vars))
}

/// Output encoding (with `eps`) plus gain encoding.
pub fn encode_network_gain(
    net: &MaxoutNetwork,
    big_m: f64,
    w_bound: f64,
    eps: f64,
) -> Result<(MiEncoding, NetworkVars, Vec<Vec<Expr>>)> {
    let (mut enc, vars) = encode_network_output(net, big_m, eps)?;
    let gain = add_network_gain(&mut enc, net, &vars, &vec![w_bound; net.layers.len()])?;
    Ok((enc, vars, gain))
}

/// Network output recovered by fixing `x` and solving the feasibility
/// problem; `None` when infeasible.
pub fn recover_output(net: &MaxoutNetwork, x: &DVector<f64>, big_m: f64, eps: f64) -> Result<Option<DVector<f64>>> {
    let (mut enc, vars) = encode_network_output(net, big_m, eps)?;
    for (j, col) in vars.x.clone().enumerate() {
        enc.fix(col, x[j]);
    }
    let out = network_output_expr(net, &vars);
    Ok(enc
        .feasible_point()?
        .map(|p| DVector::from_iterator(out.len(), out.iter().map(|e| e.eval(&p)))))
}

/// Local gain recovered by fixing `x`; `None` when infeasible, which for
/// `eps > 0` happens within the margin of an activation boundary.
pub fn recover_gain(
    net: &MaxoutNetwork,
    x: &DVector<f64>,
    big_m: f64,
    w_bound: f64,
    eps: f64,
) -> Result<Option<DMatrix<f64>>> {
    let (mut enc, vars, gain) = encode_network_gain(net, big_m, w_bound, eps)?;
    for (j, col) in vars.x.clone().enumerate() {
        enc.fix(col, x[j]);
    }
    Ok(enc
        .feasible_point()?
        .map(|p| DMatrix::from_fn(gain.len(), net.input_dim(), |k, r| gain[k][r].eval(&p))))
}
