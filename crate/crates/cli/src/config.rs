//! Experiment configuration files.

use std::path::{Path, PathBuf};

use maxcert::certify::{Alpha, CertifySettings};
use maxcert::mpc::{dare, lqr_terminal_set, OcpSpec};
use maxcert::train::TrainOptions;
use maxcert::Polytope;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub networks: NetworkConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub state_box: BoxSet,
    pub input_box: BoxSet,
    pub terminal_set: TerminalSet,
    pub terminal_cost: TerminalCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn polytope(&self) -> CliResult<Polytope> {
        Ok(Polytope::from_box(&self.lo, &self.hi)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TerminalSet {
    /// A box given in the file.
    Given { lo: Vec<f64>, hi: Vec<f64> },
    /// Maximal output admissible set of the LQR closed loop.
    Moas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TerminalCost {
    Given {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
    /// Solution of the discrete algebraic Riccati equation.
    Dare,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden layers `(w, p)` of each network to train.
    pub topologies: Vec<Vec<(usize, usize)>>,
    /// Also synthesize the exact network of the law.
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainChoice {
    /// Domain of the explicit law.
    #[default]
    Feasible,
    Terminal,
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    pub alpha: Alpha,
    pub error_domain: DomainChoice,
    pub lipschitz_domain: DomainChoice,
    #[serde(flatten)]
    pub settings: CertifySettings,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            alpha: Alpha::Inf,
            error_domain: DomainChoice::Feasible,
            lipschitz_domain: DomainChoice::Terminal,
            settings: CertifySettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Dataset size; `None` picks 1000 for scalar states and 10^4 otherwise.
    pub samples: Option<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub step: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            samples: None,
            epochs: t.epochs,
            batch: t.batch,
            step: t.step,
        }
    }
}

impl TrainingConfig {
    pub fn sample_count(&self, state_dim: usize) -> usize {
        self.samples.unwrap_or(if state_dim == 1 { 1000 } else { 10_000 })
    }

    pub fn options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch: self.batch,
            step: self.step,
            seed,
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The optimal control problem, with the terminal ingredients resolved.
    pub fn ocp(&self) -> CliResult<OcpSpec> {
        let s = &self.system;
        let a = matrix(&s.a, "A")?;
        let b = matrix(&s.b, "B")?;
        let q = matrix(&s.q, "Q")?;
        let r = matrix(&s.r, "R")?;
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
            return Err(CliError::Config("A must be square and B must have as many rows as A".into()));
        }
        let state_set = s.state_box.polytope()?;
        let input_set = s.input_box.polytope()?;
        let p = match &s.terminal_cost {
            TerminalCost::Given { p } => matrix(p, "P")?,
            TerminalCost::Dare => dare(&a, &b, &q, &r)?,
        };
        let terminal_set = match &s.terminal_set {
            TerminalSet::Given { lo, hi } => Polytope::from_box(lo, hi)?,
            TerminalSet::Moas => lqr_terminal_set(&a, &b, &r, &p, &state_set, &input_set)?,
        };
        let spec = OcpSpec {
            a,
            b,
            q,
            r,
            p,
            horizon: s.horizon,
            state_set,
            input_set,
            terminal_set,
        };
        spec.validate()?;
        Ok(spec)
    }
}
