//! Sampling an explicit law and fitting maxout networks to the samples by
//! minibatch gradient descent on the mean squared error.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::maxout::MaxoutNetwork;
use crate::mpc::{mpc_point, ParametricQp, PwaFunction};
use crate::{Error, Result};

/// Samples `(x_i, pi(x_i))`, one per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct Dataset {
    /// `D x n`.
    pub inputs: DMatrix<f64>,
    /// `D x m`.
    pub targets: DMatrix<f64>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RawDataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    seed: u64,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        let rows = |v: &[Vec<f64>], what| -> Result<DMatrix<f64>> {
            let cols = v.first().map_or(0, Vec::len);
            if let Some(bad) = v.iter().find(|r| r.len() != cols) {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: cols,
                    found: bad.len(),
                });
            }
            Ok(DMatrix::from_fn(v.len(), cols, |i, j| v[i][j]))
        };
        Dataset::new(rows(&raw.inputs, "dataset inputs")?, rows(&raw.targets, "dataset targets")?, raw.seed)
    }
}

impl From<Dataset> for RawDataset {
    fn from(d: Dataset) -> Self {
        let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
        RawDataset {
            inputs: rows(&d.inputs),
            targets: rows(&d.targets),
            seed: d.seed,
        }
    }
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, seed: u64) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::InvalidInput("dataset has no samples".into()));
        }
        if targets.nrows() != inputs.nrows() {
            return Err(Error::DimensionMismatch {
                what: "dataset targets",
                expected: inputs.nrows(),
                found: targets.nrows(),
            });
        }
        Ok(Self { inputs, targets, seed })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn input(&self, i: usize) -> DVector<f64> {
        self.inputs.row(i).transpose()
    }

    pub fn target(&self, i: usize) -> DVector<f64> {
        self.targets.row(i).transpose()
    }

    /// Largest deviation of the stored targets from the first input of the
    /// online MPC solution.
    pub fn target_deviation(&self, qp: &ParametricQp) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            let u = mpc_point(qp, &self.input(i))?;
            worst = worst.max((u - self.target(i)).amax());
        }
        Ok(worst)
    }
}

/// `count` points drawn uniformly from the law's domain by rejection from
/// its bounding box, labelled with the law.
pub fn sample_dataset(pwa: &PwaFunction, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidInput("dataset size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = pwa.domain.sample_uniform(&mut rng, count)?;
    let (n, m) = (pwa.state_dim(), pwa.output_dim());
    let mut inputs = DMatrix::zeros(count, n);
    let mut targets = DMatrix::zeros(count, m);
    for (i, x) in points.iter().enumerate() {
        inputs.set_row(i, &x.transpose());
        targets.set_row(i, &pwa.eval(x)?.transpose());
    }
    Dataset::new(inputs, targets, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch: 64,
            step: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub network: MaxoutNetwork,
    /// MSE of the retained parameters after each epoch.
    pub trace: Vec<f64>,
    pub options: TrainOptions,
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Epochs whose MSE regressed, each halving the step.
    pub halvings: usize,
}

/// Forward and backward passes without per-sample allocation.
struct Scratch {
    /// Input followed by every hidden layer output.
    acts: Vec<Vec<f64>>,
    winners: Vec<Vec<usize>>,
    out: Vec<f64>,
    grad_y: Vec<f64>,
    grad_prev: Vec<f64>,
    /// Flat offsets of each hidden layer's weights; biases follow them.
    offsets: Vec<usize>,
    out_offset: usize,
}

impl Scratch {
    fn new(net: &MaxoutNetwork) -> Self {
        let mut acts = vec![vec![0.0; net.input_dim()]];
        let mut offsets = Vec::with_capacity(net.layers.len());
        let mut at = 0;
        for l in &net.layers {
            acts.push(vec![0.0; l.neurons]);
            offsets.push(at);
            at += l.weights.len() + l.bias.len();
        }
        let widest = acts.iter().map(Vec::len).max().unwrap_or(0);
        Self {
            acts,
            winners: net.layers.iter().map(|l| vec![0; l.neurons]).collect(),
            out: vec![0.0; net.output_dim()],
            grad_y: Vec::with_capacity(widest),
            grad_prev: Vec::with_capacity(widest),
            offsets,
            out_offset: at,
        }
    }

    fn forward(&mut self, net: &MaxoutNetwork, x: impl Iterator<Item = f64>) {
        for (slot, v) in self.acts[0].iter_mut().zip(x) {
            *slot = v;
        }
        for (i, l) in net.layers.iter().enumerate() {
            let (prev, rest) = self.acts.split_at_mut(i + 1);
            let input = &prev[i];
            let output = &mut rest[0];
            for s in 0..l.neurons {
                let mut best = f64::NEG_INFINITY;
                let mut k = 0;
                for (c, row) in l.channel_rows(s).enumerate() {
                    let z = l.bias[row] + input.iter().enumerate().map(|(t, v)| l.weights[(row, t)] * v).sum::<f64>();
                    if z > best {
                        best = z;
                        k = c;
                    }
                }
                output[s] = best;
                self.winners[i][s] = k;
            }
        }
        let last = self.acts.last().expect("input layer");
        for (k, o) in self.out.iter_mut().enumerate() {
            *o = net.out_bias[k] + last.iter().enumerate().map(|(t, v)| net.out_weights[(k, t)] * v).sum::<f64>();
        }
    }

    /// Adds `d loss / d params` for the output gradient `g_out` of the last forward pass.
    fn backward(&mut self, net: &MaxoutNetwork, g_out: &[f64], grad: &mut [f64]) {
        let last = self.acts.last().expect("input layer");
        let cols = last.len();
        self.grad_y.clear();
        self.grad_y.resize(cols, 0.0);
        for (k, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (t, &v) in last.iter().enumerate() {
                grad[self.out_offset + k * cols + t] += g * v;
                self.grad_y[t] += g * net.out_weights[(k, t)];
            }
            grad[self.out_offset + net.out_weights.len() + k] += g;
        }
        for (i, l) in net.layers.iter().enumerate().rev() {
            let input = &self.acts[i];
            let cols = input.len();
            let w_at = self.offsets[i];
            let b_at = w_at + l.weights.len();
            self.grad_prev.clear();
            self.grad_prev.resize(cols, 0.0);
            for s in 0..l.neurons {
                let g = self.grad_y[s];
                if g == 0.0 {
                    continue;
                }
                let row = s * l.channels + self.winners[i][s];
                for (t, &v) in input.iter().enumerate() {
                    grad[w_at + row * cols + t] += g * v;
                    self.grad_prev[t] += g * l.weights[(row, t)];
                }
                grad[b_at + row] += g;
            }
            std::mem::swap(&mut self.grad_y, &mut self.grad_prev);
        }
    }
}

fn check_dims(net: &MaxoutNetwork, data: &Dataset) -> Result<()> {
    if net.input_dim() != data.state_dim() || net.output_dim() != data.output_dim() {
        return Err(Error::InvalidInput(format!(
            "network maps R^{} -> R^{} but the data maps R^{} -> R^{}",
            net.input_dim(),
            net.output_dim(),
            data.state_dim(),
            data.output_dim()
        )));
    }
    Ok(())
}

/// `(1/D) sum_i |pi(x_i) - Phi(x_i)|_2^2`.
pub fn mse(net: &MaxoutNetwork, data: &Dataset) -> Result<f64> {
    check_dims(net, data)?;
    let mut scratch = Scratch::new(net);
    let mut total = 0.0;
    for i in 0..data.len() {
        scratch.forward(net, data.inputs.row(i).iter().copied());
        total += scratch
            .out
            .iter()
            .zip(data.targets.row(i).iter())
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// Mean squared error over the given rows and its gradient with respect to
/// [`MaxoutNetwork::params`]. Only the winning channel of each neuron
/// (lowest index at ties) receives gradient.
pub fn gradient(net: &MaxoutNetwork, data: &Dataset, rows: &[usize]) -> Result<(f64, Vec<f64>)> {
    check_dims(net, data)?;
    if rows.is_empty() {
        return Err(Error::InvalidInput("gradient over an empty batch".into()));
    }
    let mut scratch = Scratch::new(net);
    let mut grad = vec![0.0; net.param_count()];
    let loss = accumulate(net, data, rows, &mut scratch, &mut grad);
    Ok((loss, grad))
}

fn accumulate(net: &MaxoutNetwork, data: &Dataset, rows: &[usize], scratch: &mut Scratch, grad: &mut [f64]) -> f64 {
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    let mut g_out = vec![0.0; net.output_dim()];
    for &i in rows {
        scratch.forward(net, data.inputs.row(i).iter().copied());
        for (k, g) in g_out.iter_mut().enumerate() {
            let r = scratch.out[k] - data.targets[(i, k)];
            loss += r * r;
            *g = 2.0 * r * scale;
        }
        scratch.backward(net, &g_out, grad);
    }
    loss * scale
}

/// Network of the given topology with every parameter uniform in [-0.5, 0.5].
pub fn init_network<R: Rng>(
    input_dim: usize,
    topology: &[(usize, usize)],
    output_dim: usize,
    rng: &mut R,
) -> Result<MaxoutNetwork> {
    let mut net = MaxoutNetwork::zeros(input_dim, topology, output_dim)?;
    let values: Vec<f64> = (0..net.param_count()).map(|_| rng.gen_range(-0.5..=0.5)).collect();
    net.set_params(&values)?;
    Ok(net)
}

/// Minibatch SGD on the MSE. After every epoch the MSE is recomputed on the
/// full dataset; if it regressed, the previous parameters are restored and
/// the step is halved.
pub fn train(topology: &[(usize, usize)], data: &Dataset, opts: &TrainOptions) -> Result<TrainReport> {
    if opts.batch == 0 || opts.step.is_nan() || opts.step <= 0.0 {
        return Err(Error::InvalidInput("batch must be positive and step > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut net = init_network(data.state_dim(), topology, data.output_dim(), &mut rng)?;
    let initial = mse(&net, data)?;
    let mut best = (initial, net.params());
    let mut step = opts.step;
    let mut trace = Vec::with_capacity(opts.epochs);
    let mut halvings = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut scratch = Scratch::new(&net);
    let mut grad = vec![0.0; net.param_count()];
    let mut params = best.1.clone();

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(opts.batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            accumulate(&net, data, rows, &mut scratch, &mut grad);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
            net.set_params(&params)?;
        }
        let now = mse(&net, data)?;
        if !now.is_finite() || now > 1e6 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence(epoch + 1));
        }
        if now > best.0 {
            step *= 0.5;
            halvings += 1;
            params.clone_from(&best.1);
            net.set_params(&params)?;
        } else {
            best = (now, params.clone());
        }
        trace.push(best.0);
        if (epoch + 1) % 100 == 0 {
            debug!("epoch {}: mse {:.3e}, step {:.3e}", epoch + 1, best.0, step);
        }
    }
    let final_mse = mse(&net, data)?;
    info!(
        "trained {:?} for {} epochs: mse {:.3e} -> {:.3e}",
        topology, opts.epochs, initial, final_mse
    );
    Ok(TrainReport {
        network: net,
        trace,
        options: *opts,
        initial_mse: initial,
        final_mse,
        halvings,
    })
}
