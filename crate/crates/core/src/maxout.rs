//! Feed-forward maxout networks: each hidden neuron outputs the maximum of
//! `p` affine channels of the previous layer.
//!
//! Channels of neuron `s` occupy rows `s*p .. (s+1)*p` of the layer weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Two channel values closer than this count as a tie.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MaxoutLayer {
    /// `(p * w) x w_prev`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// Channels per neuron.
    pub channels: usize,
    /// Neurons.
    pub neurons: usize,
}

impl MaxoutLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, channels: usize) -> Result<Self> {
        if channels == 0 || !weights.nrows().is_multiple_of(channels) || weights.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "{} weight rows cannot be split into neurons of {channels} channels",
                weights.nrows()
            )));
        }
        if bias.len() != weights.nrows() {
            return Err(Error::DimensionMismatch {
                what: "layer bias",
                expected: weights.nrows(),
                found: bias.len(),
            });
        }
        let neurons = weights.nrows() / channels;
        Ok(Self {
            weights,
            bias,
            channels,
            neurons,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Row indices of the channels of neuron `s`.
    pub fn channel_rows(&self, s: usize) -> std::ops::Range<usize> {
        s * self.channels..(s + 1) * self.channels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct MaxoutNetwork {
    pub layers: Vec<MaxoutLayer>,
    pub out_weights: DMatrix<f64>,
    pub out_bias: DVector<f64>,
}

/// Winning channel (offset within the neuron) of every neuron, plus the
/// neurons whose runner-up channel is within [`TIE_TOL`] of the winner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    pub winners: Vec<Vec<usize>>,
    /// `(layer, neuron)` pairs with a near tie.
    pub ties: Vec<(usize, usize)>,
}

impl ActivationPattern {
    /// Binary selection vector of layer `i`, one entry per channel row.
    pub fn delta(&self, net: &MaxoutNetwork, i: usize) -> DVector<f64> {
        let layer = &net.layers[i];
        let mut d = DVector::zeros(layer.weights.nrows());
        for (s, &k) in self.winners[i].iter().enumerate() {
            d[s * layer.channels + k] = 1.0;
        }
        d
    }

    pub fn is_boundary(&self) -> bool {
        !self.ties.is_empty()
    }
}

impl MaxoutNetwork {
    pub fn new(layers: Vec<MaxoutLayer>, out_weights: DMatrix<f64>, out_bias: DVector<f64>) -> Result<Self> {
        let net = Self {
            layers,
            out_weights,
            out_bias,
        };
        net.validate()?;
        Ok(net)
    }

    /// All-zero network with the given `(neurons, channels)` per hidden layer.
    pub fn zeros(input_dim: usize, hidden: &[(usize, usize)], output_dim: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = input_dim;
        for &(w, p) in hidden {
            layers.push(MaxoutLayer::new(DMatrix::zeros(w * p, prev), DVector::zeros(w * p), p)?);
            prev = w;
        }
        Self::new(layers, DMatrix::zeros(output_dim, prev), DVector::zeros(output_dim))
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one hidden layer".into()));
        }
        let mut prev = self.layers[0].input_dim();
        if prev == 0 {
            return Err(Error::InvalidInput("zero input dimension".into()));
        }
        for layer in &self.layers {
            if layer.input_dim() != prev {
                return Err(Error::DimensionMismatch {
                    what: "layer input",
                    expected: prev,
                    found: layer.input_dim(),
                });
            }
            if layer.channels == 0
                || layer.neurons == 0
                || layer.weights.nrows() != layer.channels * layer.neurons
                || layer.bias.len() != layer.weights.nrows()
            {
                return Err(Error::InvalidInput("inconsistent layer shape".into()));
            }
            prev = layer.neurons;
        }
        if self.out_weights.ncols() != prev || self.out_weights.nrows() != self.out_bias.len() {
            return Err(Error::DimensionMismatch {
                what: "output layer",
                expected: prev,
                found: self.out_weights.ncols(),
            });
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        let ok = self
            .layers
            .iter()
            .all(|l| finite(&l.weights) && l.bias.iter().all(|v| v.is_finite()))
            && finite(&self.out_weights)
            && self.out_bias.iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidInput("non-finite network parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.out_weights.nrows()
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.input_dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                found: x.len(),
            })
        }
    }

    /// Forward pass. Also returns the hidden outputs `y^(1..l)` when asked.
    fn forward(&self, x: &DVector<f64>, mut trace: Option<&mut Vec<DVector<f64>>>) -> (DVector<f64>, ActivationPattern) {
        let mut y = x.clone();
        let mut winners = Vec::with_capacity(self.layers.len());
        let mut ties = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = &layer.weights * &y + &layer.bias;
            let mut next = DVector::zeros(layer.neurons);
            let mut win = Vec::with_capacity(layer.neurons);
            for s in 0..layer.neurons {
                let rows = layer.channel_rows(s);
                let mut k = 0;
                for j in 1..layer.channels {
                    if z[rows.start + j] > z[rows.start + k] {
                        k = j;
                    }
                }
                let top = z[rows.start + k];
                if (0..layer.channels).any(|j| j != k && top - z[rows.start + j] <= TIE_TOL) {
                    ties.push((i, s));
                }
                next[s] = top;
                win.push(k);
            }
            winners.push(win);
            y = next;
            if let Some(t) = trace.as_deref_mut() {
                t.push(y.clone());
            }
        }
        (&self.out_weights * y + &self.out_bias, ActivationPattern { winners, ties })
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x, None).0)
    }

    /// Hidden-layer outputs `y^(1), ..., y^(l)` followed by the network output.
    pub fn eval_trace(&self, x: &DVector<f64>) -> Result<(Vec<DVector<f64>>, DVector<f64>)> {
        self.check_input(x)?;
        let mut trace = Vec::with_capacity(self.layers.len());
        let (out, _) = self.forward(x, Some(&mut trace));
        Ok((trace, out))
    }

    /// Winning channel per neuron (lowest index among exact maxima); near ties are reported.
    pub fn activation_pattern(&self, x: &DVector<f64>) -> Result<ActivationPattern> {
        self.check_input(x)?;
        Ok(self.forward(x, None).1)
    }

    /// Output with every neuron forced to the channel chosen in `pattern`.
    pub fn eval_with_pattern(&self, x: &DVector<f64>, pattern: &ActivationPattern) -> Result<DVector<f64>> {
        self.check_input(x)?;
        let mut y = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            y = DVector::from_fn(layer.neurons, |s, _| {
                let row = s * layer.channels + pattern.winners[i][s];
                layer.weights.row(row).transpose().dot(&y) + layer.bias[row]
            });
        }
        Ok(&self.out_weights * y + &self.out_bias)
    }

    /// `W_out (Δ_l W_l) ... (Δ_1 W_1)` for a fixed pattern.
    pub fn gain_for_pattern(&self, pattern: &ActivationPattern) -> DMatrix<f64> {
        let mut g = DMatrix::identity(self.input_dim(), self.input_dim());
        for (i, layer) in self.layers.iter().enumerate() {
            let sel = DMatrix::from_fn(layer.neurons, layer.input_dim(), |s, c| {
                layer.weights[(s * layer.channels + pattern.winners[i][s], c)]
            });
            g = sel * g;
        }
        &self.out_weights * g
    }

    /// Jacobian of the network at `x`; fails on an activation boundary.
    pub fn local_gain(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pattern = self.activation_pattern(x)?;
        if let Some(&(layer, neuron)) = pattern.ties.first() {
            return Err(Error::BoundaryPoint { layer, neuron });
        }
        Ok(self.gain_for_pattern(&pattern))
    }

    /// Number of weights and biases.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for l in &self.layers {
            n += (l.input_dim() + 1) * l.channels * l.neurons;
        }
        n + (self.out_weights.ncols() + 1) * self.out_weights.nrows()
    }

    /// All parameters in a flat vector: per hidden layer the weights
    /// (row-major) then the biases, then the output weights and bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.transpose().iter());
            out.extend(l.bias.iter());
        }
        out.extend(self.out_weights.transpose().iter());
        out.extend(self.out_bias.iter());
        out
    }

    /// Inverse of [`params`](Self::params).
    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                found: values.len(),
            });
        }
        let mut at = 0;
        let mut take = |len: usize| {
            at += len;
            &values[at - len..at]
        };
        for l in &mut self.layers {
            let (r, c) = l.weights.shape();
            l.weights = DMatrix::from_row_slice(r, c, take(r * c));
            l.bias = DVector::from_column_slice(take(r));
        }
        let (r, c) = self.out_weights.shape();
        self.out_weights = DMatrix::from_row_slice(r, c, take(r * c));
        self.out_bias = DVector::from_column_slice(take(r));
        Ok(())
    }

    /// Hidden layer sizes as `(neurons, channels)`.
    pub fn topology(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.neurons, l.channels)).collect()
    }
}

/// Parameter count of a topology without building it.
pub fn param_count_for(input_dim: usize, hidden: &[(usize, usize)], output_dim: usize) -> usize {
    let mut n = 0;
    let mut prev = input_dim;
    for &(w, p) in hidden {
        n += (prev + 1) * p * w;
        prev = w;
    }
    n + (prev + 1) * output_dim
}

/// ReLU network `W_out max(0, ... max(0, W_1 x + b_1) ...) + b_out` as a
/// maxout network with two channels per neuron, the second fixed to zero.
pub fn relu_to_maxout(
    weights: &[DMatrix<f64>],
    biases: &[DVector<f64>],
    out_weights: DMatrix<f64>,
    out_bias: DVector<f64>,
) -> Result<MaxoutNetwork> {
    if weights.len() != biases.len() {
        return Err(Error::DimensionMismatch {
            what: "ReLU layer count",
            expected: weights.len(),
            found: biases.len(),
        });
    }
    let mut layers = Vec::with_capacity(weights.len());
    for (w, b) in weights.iter().zip(biases) {
        if b.len() != w.nrows() {
            return Err(Error::DimensionMismatch {
                what: "ReLU bias",
                expected: w.nrows(),
                found: b.len(),
            });
        }
        let mut mw = DMatrix::zeros(2 * w.nrows(), w.ncols());
        let mut mb = DVector::zeros(2 * w.nrows());
        for s in 0..w.nrows() {
            mw.row_mut(2 * s).copy_from(&w.row(s));
            mb[2 * s] = b[s];
        }
        layers.push(MaxoutLayer::new(mw, mb, 2)?);
    }
    MaxoutNetwork::new(layers, out_weights, out_bias)
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    p: usize,
    w: usize,
    #[serde(rename = "W")]
    weights: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawNetwork {
    input_dim: usize,
    layers: Vec<RawLayer>,
    #[serde(rename = "W_out")]
    out_weights: Vec<f64>,
    b_out: Vec<f64>,
}

impl TryFrom<RawNetwork> for MaxoutNetwork {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        let mut prev = raw.input_dim;
        let mut layers = Vec::with_capacity(raw.layers.len());
        for l in raw.layers {
            let rows = l.p * l.w;
            if l.weights.len() != rows * prev {
                return Err(Error::DimensionMismatch {
                    what: "serialized layer weights",
                    expected: rows * prev,
                    found: l.weights.len(),
                });
            }
            let w = DMatrix::from_row_slice(rows, prev, &l.weights);
            layers.push(MaxoutLayer::new(w, DVector::from_vec(l.b), l.p)?);
            prev = l.w;
        }
        let out = raw.b_out.len();
        if raw.out_weights.len() != out * prev {
            return Err(Error::DimensionMismatch {
                what: "serialized output weights",
                expected: out * prev,
                found: raw.out_weights.len(),
            });
        }
        let w_out = DMatrix::from_row_slice(out, prev, &raw.out_weights);
        MaxoutNetwork::new(layers, w_out, DVector::from_vec(raw.b_out))
    }
}

impl From<MaxoutNetwork> for RawNetwork {
    fn from(net: MaxoutNetwork) -> Self {
        let row_major = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<f64>>();
        RawNetwork {
            input_dim: net.input_dim(),
            layers: net
                .layers
                .iter()
                .map(|l| RawLayer {
                    p: l.channels,
                    w: l.neurons,
                    weights: row_major(&l.weights),
                    b: l.bias.iter().copied().collect(),
                })
                .collect(),
            out_weights: row_major(&net.out_weights),
            b_out: net.out_bias.iter().copied().collect(),
        }
    }
}

/// The two-neuron, two-channel network that represents the scalar example law
/// `max{-x, -1} - max{-x - 1, 0}` exactly.
pub fn scalar_exact_network() -> MaxoutNetwork {
    let w1 = DMatrix::from_column_slice(4, 1, &[-1.0, 0.0, -1.0, 0.0]);
    let b1 = DVector::from_column_slice(&[0.0, -1.0, -1.0, 0.0]);
    let layer = MaxoutLayer::new(w1, b1, 2).expect("fixed shape");
    MaxoutNetwork::new(vec![layer], DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), DVector::zeros(1)).expect("fixed shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn scalar_exact_network_values() {
        let net = scalar_exact_network();
        assert!((net.eval(&v(0.5)).unwrap()[0] + 0.5).abs() < 1e-15);
        assert!((net.eval(&v(2.0)).unwrap()[0] + 1.0).abs() < 1e-15);
        assert!((net.eval(&v(-2.0)).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((net.local_gain(&v(0.5)).unwrap()[(0, 0)] + 1.0).abs() < 1e-15);
        assert!(net.local_gain(&v(2.0)).unwrap()[(0, 0)].abs() < 1e-15);
        assert!(matches!(net.local_gain(&v(1.0)), Err(Error::BoundaryPoint { .. })));
        let pat = net.activation_pattern(&v(0.5)).unwrap();
        assert_eq!(pat.winners, vec![vec![0, 1]]);
        assert!(net.eval(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn single_channel_is_affine() {
        let w = DMatrix::from_row_slice(1, 2, &[2.0, -3.0]);
        let layer = MaxoutLayer::new(w, DVector::from_element(1, 0.5), 1).unwrap();
        let net = MaxoutNetwork::new(vec![layer], DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let x = DVector::from_row_slice(&[0.3, 0.7]);
        assert!((net.eval(&x).unwrap()[0] - (0.6 - 2.1 + 0.5)).abs() < 1e-15);
        assert_eq!(net.activation_pattern(&x).unwrap().winners, vec![vec![0]]);
    }

    #[test]
    fn table_parameter_counts() {
        let rows1 = [(1, 4), (2, 4), (2, 3), (2, 2), (3, 2), (4, 2), (4, 1)];
        let want1 = [10, 19, 15, 11, 16, 21, 13];
        for ((w, p), want) in rows1.iter().zip(want1) {
            assert_eq!(param_count_for(1, &[(*w, *p)], 1), want);
            assert_eq!(MaxoutNetwork::zeros(1, &[(*w, *p)], 1).unwrap().param_count(), want);
        }
        let rows2 = [(2, 38), (2, 10), (2, 3), (3, 3), (5, 3), (10, 3), (23, 3)];
        let want2 = [231, 63, 21, 31, 51, 101, 231];
        for ((w, p), want) in rows2.iter().zip(want2) {
            assert_eq!(param_count_for(2, &[(*w, *p)], 1), want);
        }
    }

    #[test]
    fn relu_embedding() {
        let net = relu_to_maxout(
            &[DMatrix::from_element(1, 1, 1.0)],
            &[DVector::zeros(1)],
            DMatrix::identity(1, 1),
            DVector::zeros(1),
        )
        .unwrap();
        assert_eq!(net.eval(&v(-1.0)).unwrap()[0], 0.0);
        assert_eq!(net.eval(&v(2.0)).unwrap()[0], 2.0);
        assert_eq!(net.layers[0].weights.nrows(), 2);
    }

    #[test]
    fn json_layout() {
        let net = scalar_exact_network();
        let s = serde_json::to_string(&net).unwrap();
        assert!(s.contains("\"W\":[-1.0,0.0,-1.0,0.0]"));
        let back: MaxoutNetwork = serde_json::from_str(&s).unwrap();
        assert_eq!(back, net);
    }
}
