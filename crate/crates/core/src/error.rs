use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("state is outside the feasible set")]
    InfeasibleState,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("closed-loop matrix is not Schur stable")]
    NotStable,
    #[error("iteration cap of {0} reached")]
    IterationCap(usize),
    #[error("point lies on an activation boundary (layer {layer}, neuron {neuron})")]
    BoundaryPoint { layer: usize, neuron: usize },
    #[error("big-M bound {bound} is smaller than a sampled magnitude {observed}")]
    InvalidBigM { bound: f64, observed: f64 },
    #[error("term list grew to {0} entries, above the configured cap")]
    TermExplosion(usize),
    #[error("certification failed: certified value {value} exceeds tolerance {tol}")]
    CertificationFailure { value: f64, tol: f64 },
    #[error("lattice identity violated by {0}; the input law is probably discontinuous")]
    LatticeViolation(f64),
    #[error("domain sample {0:?} lies in no region")]
    CoverageGap(Vec<f64>),
    #[error("rejection sampler starved (acceptance rate below 1e-4)")]
    SamplerStarvation,
    #[error("training diverged at epoch {0}")]
    Divergence(usize),
    #[error("regions must be sorted and non-overlapping")]
    UnsortedRegions,
    #[error("every domain point lies within the epsilon margin of an activation boundary")]
    AllBoundary,
}

pub type Result<T> = std::result::Result<T, Error>;
