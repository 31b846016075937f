//! Problem generators shared by the benchmarks.

use maxcert::optim::{LinearProgram, MilpProblem, Sense};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feasible, bounded LP: `max c'x` over `A x <= b`, `0 <= x <= 10`, with
/// positive data so the origin is feasible.
pub fn random_lp(vars: usize, rows: usize, seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(rows, vars, |_, _| rng.gen_range(0.0..1.0));
    let b = DVector::from_fn(rows, |_, _| rng.gen_range(1.0..10.0));
    let c = DVector::from_fn(vars, |_, _| -rng.gen_range(0.1..1.0));
    LinearProgram::new(c)
        .with_inequalities(a, b)
        .with_bounds(DVector::zeros(vars), DVector::from_element(vars, 10.0))
}

/// Multi-dimensional knapsack with binary items.
pub fn knapsack(items: usize, knaps: usize, seed: u64) -> MilpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(knaps, items, |_, _| rng.gen_range(1.0..10.0));
    let cap = DVector::from_fn(knaps, |k, _| 0.4 * w.row(k).sum());
    let value = DVector::from_fn(items, |_, _| rng.gen_range(1.0..10.0));
    MilpProblem {
        base: LinearProgram::new(value)
            .with_inequalities(w, cap)
            .with_bounds(DVector::zeros(items), DVector::from_element(items, 1.0)),
        integrality: (0..items).collect(),
        sense: Sense::Maximize,
    }
}
