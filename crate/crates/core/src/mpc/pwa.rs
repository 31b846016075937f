use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Polytope;
use crate::{Error, Result};

/// Tolerance for point location in [`PwaFunction::locate`].
pub const LOCATE_TOL: f64 = 1e-8;

/// One affine piece `x -> K x + offset` on a closed polyhedral region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRegion", into = "RawRegion")]
pub struct PwaRegion {
    pub poly: Polytope,
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl PwaRegion {
    pub fn new(poly: Polytope, gain: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if gain.ncols() != poly.dim() || gain.nrows() != offset.len() {
            return Err(Error::DimensionMismatch {
                what: "region gain",
                expected: poly.dim(),
                found: gain.ncols(),
            });
        }
        Ok(Self { poly, gain, offset })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x + &self.offset
    }

    /// Whether two pieces carry the same affine law within `tol`.
    pub fn same_law(&self, other: &PwaRegion, tol: f64) -> bool {
        (&self.gain - &other.gain).amax() <= tol && (&self.offset - &other.offset).amax() <= tol
    }
}

#[derive(Serialize, Deserialize)]
struct RawRegion {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl TryFrom<RawRegion> for PwaRegion {
    type Error = Error;

    fn try_from(raw: RawRegion) -> Result<Self> {
        let m = raw.k.len();
        let n = raw.k.first().map_or(0, |r| r.len());
        if raw.k.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("ragged gain matrix".into()));
        }
        let rows = raw.a.len();
        if raw.a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("region matrix width differs from gain".into()));
        }
        let a = DMatrix::from_fn(rows, n, |i, j| raw.a[i][j]);
        let poly = Polytope::new(a, DVector::from_vec(raw.b))?;
        let gain = DMatrix::from_fn(m, n, |i, j| raw.k[i][j]);
        PwaRegion::new(poly, gain, DVector::from_vec(raw.offset))
    }
}

impl From<PwaRegion> for RawRegion {
    fn from(r: PwaRegion) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        RawRegion {
            a: rows(r.poly.a()),
            b: r.poly.b().iter().copied().collect(),
            k: rows(&r.gain),
            offset: r.offset.iter().copied().collect(),
        }
    }
}

/// Continuous piecewise-affine map over a polyhedral partition of `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwaFunction {
    pub domain: Polytope,
    pub regions: Vec<PwaRegion>,
}

impl PwaFunction {
    pub fn new(domain: Polytope, regions: Vec<PwaRegion>) -> Result<Self> {
        let f = Self { domain, regions };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .regions
            .first()
            .ok_or_else(|| Error::InvalidInput("PWA function without regions".into()))?;
        let (m, n) = first.gain.shape();
        if n != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                what: "PWA domain",
                expected: n,
                found: self.domain.dim(),
            });
        }
        for r in &self.regions {
            if r.gain.shape() != (m, n) || r.poly.dim() != n {
                return Err(Error::DimensionMismatch {
                    what: "PWA region",
                    expected: n,
                    found: r.poly.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.regions[0].gain.nrows()
    }

    /// Index of the region containing `x` within `tol`; among several
    /// candidates, the one with the smallest violation (lowest index on ties).
    pub fn locate(&self, x: &DVector<f64>, tol: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.regions.iter().enumerate() {
            let v = r.poly.normalized_violation(x).max(0.0);
            if v <= tol && best.is_none_or(|(_, bv)| v < bv) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let i = self.locate(x, LOCATE_TOL).ok_or(Error::InfeasibleState)?;
        Ok(self.regions[i].apply(x))
    }

    /// Region gain at `x`.
    pub fn gain_at(&self, x: &DVector<f64>) -> Result<&DMatrix<f64>> {
        let i = self.locate(x, LOCATE_TOL).ok_or(Error::InfeasibleState)?;
        Ok(&self.regions[i].gain)
    }

    /// Restricts the function to one output coordinate.
    pub fn component(&self, k: usize) -> PwaFunction {
        let regions = self
            .regions
            .iter()
            .map(|r| PwaRegion {
                poly: r.poly.clone(),
                gain: r.gain.rows(k, 1).into_owned(),
                offset: DVector::from_element(1, r.offset[k]),
            })
            .collect();
        PwaFunction {
            domain: self.domain.clone(),
            regions,
        }
    }

    /// Largest disagreement between the affine pieces of intersecting regions,
    /// over `samples` points drawn from each pairwise intersection.
    pub fn continuity_defect(&self, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for i in 0..self.regions.len() {
            for j in (i + 1)..self.regions.len() {
                let (ri, rj) = (&self.regions[i], &self.regions[j]);
                let both = ri.poly.intersect(&rj.poly)?;
                if both.is_empty()? {
                    continue;
                }
                for x in both.sample_by_lp(&mut rng, samples)? {
                    worst = worst.max((ri.apply(&x) - rj.apply(&x)).amax());
                }
            }
        }
        Ok(worst)
    }
}
