//! Subcommands and their shared plumbing.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use log::{info, warn};
use maxcert::certify::{lipschitz, max_error, Alpha, Bound, Certificate};
use maxcert::optim::SolveStatus;
use maxcert::exact::build_exact_type1;
use maxcert::mpc::{condense, explicit_mpc_with, mpc_point, ExplicitOptions, OcpSpec, ParametricQp};
use maxcert::train::{mse, sample_dataset, train, Dataset};
use maxcert::{MaxoutNetwork, Polytope, PwaFunction};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{DomainChoice, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::report::{write_report, write_trace, write_trajectory, ReportRow, TrajectoryStep};

/// Tolerance for the feasibility test of a simulation start.
const START_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "maxcert", version, about = "Explicit MPC laws, maxout networks and their certified error bounds")]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Norm for certificates: 1 or inf.
    #[arg(long, global = true)]
    pub alpha: Option<Alpha>,
    /// Tie margin of the Lipschitz encoding.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Big-M constant, or "auto" for interval bounds.
    #[arg(long, global = true)]
    pub big_m: Option<Bound>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub gap_tol: Option<f64>,
    #[arg(long, global = true)]
    pub node_limit: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the OCP explicitly and write pwa.json.
    Explicit {
        /// Keep every critical region instead of merging equal laws.
        #[arg(long)]
        no_merge: bool,
    },
    /// Build the exact network of the law and certify it.
    Synthesize {
        #[arg(long)]
        pwa: Option<PathBuf>,
    },
    /// Train networks on samples of the law.
    Train {
        #[arg(long)]
        pwa: Option<PathBuf>,
        /// Hidden layers as `w:p` pairs, e.g. `2:2` or `3:2,2:2`; defaults to
        /// every topology in the configuration.
        #[arg(long)]
        topology: Option<Topology>,
    },
    /// Certify the maximum error and the Lipschitz constant of a network.
    Certify {
        #[arg(long)]
        pwa: Option<PathBuf>,
        #[arg(long)]
        net: PathBuf,
        /// Row number written to the report.
        #[arg(long, default_value_t = 1)]
        row: usize,
    },
    /// Closed-loop simulation with a saturated controller.
    Simulate {
        #[arg(long)]
        pwa: Option<PathBuf>,
        /// Network or law file, or `mpc` for the online QP.
        #[arg(long)]
        controller: String,
        /// Initial state, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x0: Point,
        #[arg(long, default_value_t = 30)]
        steps: usize,
    },
    /// Train or synthesize, then certify, every configured network.
    Table {
        #[arg(long)]
        pwa: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology(pub Vec<(usize, usize)>);

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let layer = |t: &str| -> Option<(usize, usize)> {
            let (w, p) = t.trim().split_once(':')?;
            Some((w.trim().parse().ok()?, p.trim().parse().ok()?))
        };
        s.split(',')
            .map(|t| layer(t).filter(|&(w, p)| w > 0 && p > 0))
            .collect::<Option<Vec<_>>>()
            .filter(|v| !v.is_empty())
            .map(Topology)
            .ok_or_else(|| format!("expected positive w:p pairs separated by commas, got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .map(Point)
            .ok_or_else(|| format!("expected comma-separated numbers, got {s:?}"))
    }
}

/// Configuration with the command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        cfg.certify.alpha = alpha;
    }
    if let Some(eps) = cli.epsilon {
        if eps.is_nan() || eps <= 0.0 {
            return Err(CliError::Config("--epsilon must be positive".into()));
        }
        cfg.certify.settings.epsilon = Some(eps);
    }
    if let Some(m) = cli.big_m {
        cfg.certify.settings.big_m = m;
        cfg.certify.settings.w_bound = m;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(gap) = cli.gap_tol {
        cfg.certify.settings.gap_tol = gap;
    }
    if let Some(limit) = cli.node_limit {
        cfg.certify.settings.node_limit = limit;
    }
    Ok(cfg)
}

/// Problem data shared by the subcommands.
struct Setup {
    cfg: ExperimentConfig,
    spec: OcpSpec,
    qp: ParametricQp,
}

impl Setup {
    fn new(cfg: ExperimentConfig) -> CliResult<Self> {
        let spec = cfg.ocp()?;
        let qp = condense(&spec)?;
        Ok(Self { cfg, spec, qp })
    }

    fn law(&self, pwa: Option<&Path>) -> CliResult<PwaFunction> {
        match pwa {
            Some(path) => {
                let law: PwaFunction = read_json(path)?;
                if law.state_dim() != self.spec.state_dim() || law.output_dim() != self.spec.input_dim() {
                    return Err(CliError::Config(format!(
                        "{} does not match the configured system dimensions",
                        path.display()
                    )));
                }
                Ok(law)
            }
            None => Ok(explicit_mpc_with(&self.qp, &ExplicitOptions::default())?),
        }
    }

    fn domain(&self, which: DomainChoice, law: &PwaFunction) -> Polytope {
        match which {
            DomainChoice::Feasible => law.domain.clone(),
            DomainChoice::Terminal => self.spec.terminal_set.clone(),
            DomainChoice::State => self.spec.state_set.clone(),
        }
    }

    fn dataset(&self, law: &PwaFunction) -> CliResult<Dataset> {
        let count = self.cfg.training.sample_count(law.state_dim());
        Ok(sample_dataset(law, count, self.cfg.seed)?)
    }

    fn out(&self, name: &str) -> CliResult<PathBuf> {
        let dir = &self.cfg.output_dir;
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.clone(),
            source,
        })?;
        Ok(dir.join(name))
    }

    /// Max-error and Lipschitz certificates of `net`.
    fn certify(&self, law: &PwaFunction, net: &MaxoutNetwork) -> (CliResult<Certificate>, CliResult<Certificate>) {
        let c = &self.cfg.certify;
        let err_dom = self.domain(c.error_domain, law);
        let lip_dom = self.domain(c.lipschitz_domain, law);
        let e = max_error(law, net, &err_dom, c.alpha, &c.settings).map_err(CliError::from);
        let l = lipschitz(law, net, &lip_dom, c.alpha, &c.settings).map_err(CliError::from);
        (e, l)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_owned(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("values serialize");
    std::fs::write(path, text + "\n").map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

fn topology_tag(topology: &[(usize, usize)]) -> String {
    topology
        .iter()
        .map(|(w, p)| format!("w{w}p{p}"))
        .collect::<Vec<_>>()
        .join("_")
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let setup = Setup::new(resolve_config(cli)?)?;
    match &cli.command {
        Command::Explicit { no_merge } => cmd_explicit(&setup, *no_merge),
        Command::Synthesize { pwa } => cmd_synthesize(&setup, pwa.as_deref()),
        Command::Train { pwa, topology } => cmd_train(&setup, pwa.as_deref(), topology.as_ref()),
        Command::Certify { pwa, net, row } => cmd_certify(&setup, pwa.as_deref(), net, *row),
        Command::Simulate {
            pwa,
            controller,
            x0,
            steps,
        } => cmd_simulate(&setup, pwa.as_deref(), controller, &x0.0, *steps),
        Command::Table { pwa } => cmd_table(&setup, pwa.as_deref()),
    }
}

fn cmd_explicit(setup: &Setup, no_merge: bool) -> CliResult<()> {
    let critical = explicit_mpc_with(&setup.qp, &ExplicitOptions { merge: false })?;
    let law = if no_merge {
        critical.clone()
    } else {
        explicit_mpc_with(&setup.qp, &ExplicitOptions::default())?
    };
    let defect = law.continuity_defect(1000, setup.cfg.seed)?;
    let path = setup.out("pwa.json")?;
    write_json(&path, &law)?;
    let (lo, hi) = law.domain.bounding_box()?;
    println!("regions: {} ({} critical regions before merging)", law.regions.len(), critical.regions.len());
    println!(
        "feasible set: {} halfspaces, bounding box {:?} to {:?}",
        law.domain.num_rows(),
        lo.as_slice(),
        hi.as_slice()
    );
    println!("continuity defect: {defect:.3e}");
    println!("law written to {}", path.display());
    Ok(())
}

fn cmd_synthesize(setup: &Setup, pwa: Option<&Path>) -> CliResult<()> {
    let law = setup.law(pwa)?;
    let (net, cert) = build_exact_type1(&law, &setup.cfg.certify.settings)?;
    write_json(&setup.out("exact_network.json")?, &net)?;
    write_json(&setup.out("exact_certificate.json")?, &cert)?;
    println!(
        "exact network: topology {:?}, {} parameters, certified max error {:.3e}",
        net.topology(),
        net.param_count(),
        cert.value
    );
    Ok(())
}

fn cmd_train(setup: &Setup, pwa: Option<&Path>, topology: Option<&Topology>) -> CliResult<()> {
    let law = setup.law(pwa)?;
    let topologies = match topology {
        Some(t) => vec![t.0.clone()],
        None => setup.cfg.networks.topologies.clone(),
    };
    if topologies.is_empty() {
        return Err(CliError::Config("no topology given and none configured".into()));
    }
    let data = setup.dataset(&law)?;
    let opts = setup.cfg.training.options(setup.cfg.seed);
    for t in &topologies {
        let report = train(t, &data, &opts)?;
        let tag = topology_tag(t);
        write_json(&setup.out(&format!("net_{tag}.json"))?, &report.network)?;
        write_trace(&setup.out(&format!("trace_{tag}.csv"))?, report.initial_mse, &report.trace)?;
        println!(
            "{tag}: {} parameters, root mse {:.3e}, {} step halvings",
            report.network.param_count(),
            report.final_mse.sqrt(),
            report.halvings
        );
    }
    Ok(())
}

/// Fills the certificate columns of `row`; true when a solve hit the node limit.
fn fill_row(row: &mut ReportRow, e: &CliResult<Certificate>, l: &CliResult<Certificate>) -> bool {
    let mut statuses = Vec::new();
    let mut limited = false;
    for (cert, slot, name) in [(e, &mut row.max_err_inf, "max-error"), (l, &mut row.lip_inf, "lipschitz")] {
        match cert {
            Ok(c) => {
                *slot = Some(c.value);
                if c.status == SolveStatus::NodeLimit {
                    statuses.push(format!("{name} node-limit"));
                    limited = true;
                }
            }
            Err(err) => statuses.push(format!("{name} failed: {err}")),
        }
    }
    row.status = if statuses.is_empty() {
        "ok".into()
    } else {
        statuses.join("; ")
    };
    limited
}

fn new_row(no: usize, net: &MaxoutNetwork) -> ReportRow {
    let (w1, p1) = net.topology()[0];
    ReportRow {
        no,
        w1,
        p1,
        num_params: net.param_count(),
        mse_root: None,
        max_err_inf: None,
        lip_inf: None,
        status: String::new(),
    }
}

fn cmd_certify(setup: &Setup, pwa: Option<&Path>, net_path: &Path, no: usize) -> CliResult<()> {
    let law = setup.law(pwa)?;
    let net: MaxoutNetwork = read_json(net_path)?;
    if net.input_dim() != law.state_dim() || net.output_dim() != law.output_dim() {
        return Err(CliError::Config(format!(
            "network maps R^{} -> R^{} but the law maps R^{} -> R^{}",
            net.input_dim(),
            net.output_dim(),
            law.state_dim(),
            law.output_dim()
        )));
    }
    let stem = net_path
        .file_stem()
        .map_or_else(|| "network".into(), |s| s.to_string_lossy().into_owned());
    let mut row = new_row(no, &net);
    row.mse_root = Some(mse(&net, &setup.dataset(&law)?)?.sqrt());
    let (e, l) = setup.certify(&law, &net);
    if let Ok(c) = &e {
        write_json(&setup.out(&format!("{stem}.max_error.json"))?, c)?;
    }
    if let Ok(c) = &l {
        write_json(&setup.out(&format!("{stem}.lipschitz.json"))?, c)?;
    }
    let limited = fill_row(&mut row, &e, &l);
    write_report(&setup.out("report.csv")?, std::slice::from_ref(&row))?;
    println!(
        "{}: max error {:?}, lipschitz {:?}, status {}",
        net_path.display(),
        row.max_err_inf,
        row.lip_inf,
        row.status
    );
    let (e, l) = (e?, l?);
    if limited {
        return Err(CliError::NodeLimit("certification"));
    }
    info!("certified in {:.2} s", e.wall_time + l.wall_time);
    Ok(())
}

enum Controller {
    Network(MaxoutNetwork),
    Law(PwaFunction),
    Mpc,
}

impl Controller {
    fn load(spec: &str) -> CliResult<Self> {
        if spec == "mpc" {
            return Ok(Controller::Mpc);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        if let Ok(net) = serde_json::from_str::<MaxoutNetwork>(&text) {
            return Ok(Controller::Network(net));
        }
        serde_json::from_str::<PwaFunction>(&text)
            .map(Controller::Law)
            .map_err(|source| CliError::Parse {
                path: path.to_owned(),
                source,
            })
    }

    fn eval(&self, qp: &ParametricQp, x: &DVector<f64>) -> CliResult<DVector<f64>> {
        Ok(match self {
            Controller::Network(net) => net.eval(x)?,
            Controller::Law(law) => law.eval(x)?,
            Controller::Mpc => mpc_point(qp, x)?,
        })
    }
}

/// A state-feedback controller; the QP is available for online MPC.
pub type Feedback<'a> = dyn Fn(&ParametricQp, &DVector<f64>) -> CliResult<DVector<f64>> + 'a;

/// Closed loop `x+ = A x + B sat(u)` from `x0`.
pub fn simulate(
    spec: &OcpSpec,
    qp: &ParametricQp,
    controller: &Feedback,
    lo: &[f64],
    hi: &[f64],
    x0: &DVector<f64>,
    steps: usize,
) -> CliResult<Vec<TrajectoryStep>> {
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let raw = controller(qp, &x)?;
        let u = DVector::from_fn(raw.len(), |k, _| raw[k].clamp(lo[k], hi[k]));
        let cost = (x.transpose() * &spec.q * &x)[0] + (u.transpose() * &spec.r * &u)[0];
        out.push(TrajectoryStep {
            state: x.iter().copied().collect(),
            input: u.iter().copied().collect(),
            stage_cost: cost,
        });
        x = &spec.a * &x + &spec.b * &u;
    }
    Ok(out)
}

fn cmd_simulate(setup: &Setup, pwa: Option<&Path>, controller: &str, x0: &[f64], steps: usize) -> CliResult<()> {
    let n = setup.spec.state_dim();
    if x0.len() != n {
        return Err(CliError::Config(format!("x0 has {} entries, the state has {n}", x0.len())));
    }
    let law = setup.law(pwa)?;
    let x0 = DVector::from_column_slice(x0);
    if !law.domain.contains(&x0, START_TOL)? {
        return Err(maxcert::Error::InfeasibleState.into());
    }
    let ctrl = Controller::load(controller)?;
    let input = &setup.cfg.system.input_box;
    let traj = simulate(
        &setup.spec,
        &setup.qp,
        &|qp, x| ctrl.eval(qp, x),
        &input.lo,
        &input.hi,
        &x0,
        steps,
    )?;
    let path = setup.out("trajectory.csv")?;
    write_trajectory(&path, &traj)?;
    let total: f64 = traj.iter().map(|s| s.stage_cost).sum();
    println!("{steps} steps, accumulated stage cost {total:.6e}, written to {}", path.display());
    Ok(())
}

/// Trains (or synthesizes) and certifies one row. Errors land in the status
/// column; the exit code of the first one is returned alongside.
fn table_row(
    setup: &Setup,
    law: &PwaFunction,
    data: &Dataset,
    no: usize,
    topology: Option<&[(usize, usize)]>,
) -> (ReportRow, Option<u8>) {
    let built = match topology {
        Some(t) => train(t, data, &setup.cfg.training.options(setup.cfg.seed)).map(|r| r.network),
        None => build_exact_type1(law, &setup.cfg.certify.settings).map(|(net, _)| net),
    };
    let net = match built {
        Ok(net) => net,
        Err(err) => {
            let err = CliError::from(err);
            let code = err.exit_code();
            warn!("row {no}: {err}");
            let (w1, p1) = topology.map_or((0, 0), |t| t[0]);
            let num_params = topology.map_or(0, |t| {
                maxcert::maxout::param_count_for(law.state_dim(), t, law.output_dim())
            });
            let row = ReportRow {
                no,
                w1,
                p1,
                num_params,
                mse_root: None,
                max_err_inf: None,
                lip_inf: None,
                status: format!("build failed: {err}"),
            };
            return (row, Some(code));
        }
    };
    let mut row = new_row(no, &net);
    let save = || -> CliResult<()> { write_json(&setup.out(&format!("row{no}_network.json"))?, &net) };
    if let Err(err) = save() {
        row.status = err.to_string();
        return (row, Some(err.exit_code()));
    }
    row.mse_root = mse(&net, data).ok().map(f64::sqrt);
    let (e, l) = setup.certify(law, &net);
    for (cert, name) in [(&e, "max_error"), (&l, "lipschitz")] {
        if let Ok(c) = cert {
            if let Err(err) = setup.out(&format!("row{no}_{name}.json")).and_then(|p| write_json(&p, c)) {
                warn!("row {no}: {err}");
            }
        }
    }
    let limited = fill_row(&mut row, &e, &l);
    info!("row {no}: {}", row.status);
    let code = match (e, l) {
        (Err(err), _) | (_, Err(err)) => Some(err.exit_code()),
        _ => limited.then_some(3),
    };
    (row, code)
}

fn cmd_table(setup: &Setup, pwa: Option<&Path>) -> CliResult<()> {
    let nets = &setup.cfg.networks;
    let path = setup.out("table.csv")?;
    if nets.topologies.is_empty() && !nets.exact {
        write_report(&path, &[])?;
        println!("no networks configured; wrote header to {}", path.display());
        return Ok(());
    }
    let law = setup.law(pwa)?;
    let data = setup.dataset(&law)?;
    let mut results: Vec<(ReportRow, Option<u8>)> = nets
        .topologies
        .iter()
        .enumerate()
        .map(|(i, t)| table_row(setup, &law, &data, i + 1, Some(t)))
        .collect();
    if nets.exact {
        results.push(table_row(setup, &law, &data, results.len() + 1, None));
    }
    let first_code = results.iter().find_map(|r| r.1);
    let rows: Vec<ReportRow> = results.into_iter().map(|r| r.0).collect();
    write_report(&path, &rows)?;
    for r in &rows {
        println!(
            "{:>3} w1={:<3} p1={:<3} #p={:<5} mse_root={:<10} max_err={:<10} lip={:<10} {}",
            r.no,
            r.w1,
            r.p1,
            r.num_params,
            fmt_opt(r.mse_root),
            fmt_opt(r.max_err_inf),
            fmt_opt(r.lip_inf),
            r.status
        );
    }
    let ok = rows.iter().filter(|r| r.succeeded()).count();
    println!("{ok} of {} rows succeeded; table written to {}", rows.len(), path.display());
    if ok == 0 {
        return Err(CliError::TableFailed(first_code.unwrap_or(3)));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3e}"))
}
