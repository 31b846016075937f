#![allow(dead_code)]

use maxcert::maxout::{MaxoutLayer, MaxoutNetwork};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random maxout network with at most `max_depth` hidden layers of at most
/// `max_width` neurons and `max_channels` channels, weights in [-1, 1].
pub fn random_net(
    rng: &mut ChaCha8Rng,
    input_dim: usize,
    output_dim: usize,
    max_depth: usize,
    max_width: usize,
    max_channels: usize,
) -> MaxoutNetwork {
    let depth = rng.gen_range(1..=max_depth);
    let mut prev = input_dim;
    let mut layers = Vec::new();
    for _ in 0..depth {
        let w = rng.gen_range(1..=max_width);
        let p = rng.gen_range(1..=max_channels);
        let weights = DMatrix::from_fn(w * p, prev, |_, _| rng.gen_range(-1.0..1.0));
        let bias = DVector::from_fn(w * p, |_, _| rng.gen_range(-1.0..1.0));
        layers.push(MaxoutLayer::new(weights, bias, p).unwrap());
        prev = w;
    }
    let out_w = DMatrix::from_fn(output_dim, prev, |_, _| rng.gen_range(-1.0..1.0));
    let out_b = DVector::from_fn(output_dim, |_, _| rng.gen_range(-1.0..1.0));
    MaxoutNetwork::new(layers, out_w, out_b).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-radius..radius))
}

/// Distance of the runner-up channel from the winner, minimized over all neurons.
pub fn tie_margin(net: &MaxoutNetwork, x: &DVector<f64>) -> f64 {
    let mut y = x.clone();
    let mut margin = f64::INFINITY;
    for layer in &net.layers {
        let z = &layer.weights * &y + &layer.bias;
        let mut next = DVector::zeros(layer.neurons);
        for s in 0..layer.neurons {
            let mut vals: Vec<f64> = layer.channel_rows(s).map(|r| z[r]).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            if vals.len() > 1 {
                margin = margin.min(vals[0] - vals[1]);
            }
            next[s] = vals[0];
        }
        y = next;
    }
    margin
}

/// Continuous 1-D PWA on `[breaks[0], breaks[last]]` with the given slopes
/// per interval and value `start` at the left end.
pub fn pwa_1d(breaks: &[f64], slopes: &[f64], start: f64) -> maxcert::PwaFunction {
    use maxcert::{Polytope, PwaRegion};
    let mut regions = Vec::new();
    let mut value = start;
    for k in 0..slopes.len() {
        let (lo, hi) = (breaks[k], breaks[k + 1]);
        let poly = Polytope::from_box(&[lo], &[hi]).unwrap();
        let offset = value - slopes[k] * lo;
        regions.push(
            PwaRegion::new(poly, DMatrix::from_element(1, 1, slopes[k]), DVector::from_element(1, offset)).unwrap(),
        );
        value += slopes[k] * (hi - lo);
    }
    let domain = Polytope::from_box(&[breaks[0]], &[breaks[breaks.len() - 1]]).unwrap();
    maxcert::PwaFunction::new(domain, regions).unwrap()
}

/// Random continuous 1-D PWA with up to `max_pieces` pieces on [-3, 3].
pub fn random_pwa_1d(rng: &mut ChaCha8Rng, max_pieces: usize) -> maxcert::PwaFunction {
    let pieces = rng.gen_range(1..=max_pieces);
    let mut inner: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(-2.9..2.9)).collect();
    inner.sort_by(|a, b| a.total_cmp(b));
    inner.dedup_by(|a, b| (*a - *b).abs() < 0.05);
    let mut breaks = vec![-3.0];
    breaks.extend(inner);
    breaks.push(3.0);
    let slopes: Vec<f64> = (0..breaks.len() - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
    pwa_1d(&breaks, &slopes, rng.gen_range(-1.0..1.0))
}

/// Convex PWA `max_k (c_k'x + d_k)` over a box, with one region per plane
/// that is maximal somewhere.
pub fn random_convex_pwa(rng: &mut ChaCha8Rng, n: usize, planes: usize) -> maxcert::PwaFunction {
    use maxcert::{Polytope, PwaRegion};
    let lo = vec![-2.0; n];
    let hi = vec![2.0; n];
    let domain = Polytope::from_box(&lo, &hi).unwrap();
    let c: Vec<DVector<f64>> = (0..planes).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5))).collect();
    let d: Vec<f64> = (0..planes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut regions = Vec::new();
    for k in 0..planes {
        let others: Vec<usize> = (0..planes).filter(|&j| j != k).collect();
        // c_j'x + d_j <= c_k'x + d_k
        let a = DMatrix::from_fn(others.len(), n, |r, t| c[others[r]][t] - c[k][t]);
        let b = DVector::from_fn(others.len(), |r, _| d[k] - d[others[r]]);
        let poly = Polytope::new(a, b).unwrap().intersect(&domain).unwrap();
        if poly.is_full_dimensional().unwrap() {
            let region = PwaRegion::new(
                poly.remove_redundant().unwrap(),
                DMatrix::from_fn(1, n, |_, t| c[k][t]),
                DVector::from_element(1, d[k]),
            )
            .unwrap();
            regions.push(region);
        }
    }
    maxcert::PwaFunction::new(domain, regions).unwrap()
}

/// Grid of about `count` points of the domain's bounding box that lie in the domain.
pub fn domain_grid(domain: &maxcert::Polytope, count: usize) -> Vec<DVector<f64>> {
    let (lo, hi) = domain.bounding_box().unwrap();
    let n = lo.len();
    let per = (count as f64).powf(1.0 / n as f64).ceil() as usize;
    let mut out = Vec::new();
    let total = per.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let x = DVector::from_fn(n, |j, _| {
            let k = rem % per;
            rem /= per;
            lo[j] + (hi[j] - lo[j]) * (k as f64 + 0.5) / per as f64
        });
        if domain.contains(&x, 0.0).unwrap() {
            out.push(x);
        }
    }
    out
}
