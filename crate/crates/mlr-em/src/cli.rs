//! Command line front end: `run`, `landscape`, `sweep` and `check`.
//!
//! Settings come from defaults, then an optional JSON file, then flags. The
//! effective settings are written to `config.json` next to every output.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, BoundReport, CheckMode, Iterate};
use crate::error::{MlrError, Result};
use crate::finite::{self, EmConfig, TrajectoryRecord, Variant};
use crate::io::{self, BoundRow, FiniteRow, FixedPointRow, LandscapeGridRow, PopulationRow};
use crate::model::{self, GroundTruth};
use crate::population::{self, PopulationRecord, QuadratureSpec};
use crate::seeds;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mlr-em", version, about = "EM and Easy-EM for two-component mixed linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one population or finite-sample trajectory.
    Run(CommonArgs),
    /// Locate the stationary points in the plane of beta* and an orthogonal direction.
    Landscape {
        #[command(flatten)]
        common: CommonArgs,
        /// Points per axis of the log-likelihood grid.
        #[arg(long, default_value_t = 41)]
        grid: usize,
    },
    /// Run a grid of finite-sample (or population) experiments.
    Sweep(CommonArgs),
    /// Recompute bound reports for an existing trajectory CSV.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Trajectory CSV written by `run`.
        #[arg(long)]
        trajectory: PathBuf,
    },
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// JSON settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "beta-norm")]
    beta_norm: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Use the population operator instead of samples.
    #[arg(long)]
    population: bool,
    #[arg(long = "quad-order")]
    quad_order: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Reuse all samples in every iteration.
    #[arg(long = "no-splitting")]
    no_splitting: bool,
    #[arg(long = "switch-threshold")]
    switch_threshold: Option<f64>,
    /// Also write the sampled data as `dataset.csv`.
    #[arg(long = "emit-dataset")]
    emit_dataset: bool,
    /// Add the latent labels to `dataset.csv`.
    #[arg(long = "emit-labels")]
    emit_labels: bool,
    /// Runs per sweep cell.
    #[arg(long = "seeds-per-cell")]
    seeds_per_cell: Option<usize>,
}

impl clap::ValueEnum for Variant {
    fn value_variants<'a>() -> &'a [Self] {
        &[Variant::Em, Variant::EasyEm, Variant::TwoPhase]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Variant::Em => "em",
            Variant::EasyEm => "easyem",
            Variant::TwoPhase => "twophase",
        }))
    }
}

/// Accepts a scalar or a list in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    pub fn first(&self) -> Option<T> {
        self.to_vec().into_iter().next()
    }
}

/// Settings shared by every subcommand. Grid fields hold a list for `sweep`
/// and a single value elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub d: OneOrMany<usize>,
    pub eta: Option<OneOrMany<f64>>,
    pub beta_norm: Option<f64>,
    pub sigma: Option<f64>,
    pub n: OneOrMany<usize>,
    #[serde(rename = "T")]
    pub t: OneOrMany<usize>,
    pub variant: OneOrMany<Variant>,
    pub population: bool,
    pub quad_order: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub tol: f64,
    pub max_iters: usize,
    pub splitting: bool,
    pub switch_threshold: Option<f64>,
    pub emit_dataset: bool,
    pub emit_labels: bool,
    pub seeds_per_cell: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            d: OneOrMany::One(10),
            eta: None,
            beta_norm: None,
            sigma: None,
            n: OneOrMany::One(100_000),
            t: OneOrMany::One(20),
            variant: OneOrMany::One(Variant::Em),
            population: false,
            quad_order: population::quadrature::DEFAULT_ORDER,
            seed: 0,
            jobs: 0,
            out: PathBuf::from("out"),
            tol: 1e-8,
            max_iters: 1000,
            splitting: true,
            switch_threshold: None,
            emit_dataset: false,
            emit_labels: false,
            seeds_per_cell: 10,
        }
    }
}

fn usage(msg: impl Into<String>) -> MlrError {
    MlrError::Config(msg.into())
}

impl SweepConfig {
    fn from_args(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => SweepConfig::default(),
        };
        if let Some(v) = args.d {
            cfg.d = OneOrMany::One(v);
        }
        if let Some(v) = args.eta {
            cfg.eta = Some(OneOrMany::One(v));
        }
        if let Some(v) = args.beta_norm {
            cfg.beta_norm = Some(v);
        }
        if let Some(v) = args.sigma {
            cfg.sigma = Some(v);
        }
        if let Some(v) = args.n {
            cfg.n = OneOrMany::One(v);
        }
        if let Some(v) = args.t {
            cfg.t = OneOrMany::One(v);
        }
        if let Some(v) = args.variant {
            cfg.variant = OneOrMany::One(v);
        }
        cfg.population |= args.population;
        if let Some(v) = args.quad_order {
            cfg.quad_order = v;
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = &args.out {
            cfg.out = v.clone();
        }
        if let Some(v) = args.tol {
            cfg.tol = v;
        }
        if let Some(v) = args.max_iters {
            cfg.max_iters = v;
        }
        if args.no_splitting {
            cfg.splitting = false;
        }
        if let Some(v) = args.switch_threshold {
            cfg.switch_threshold = Some(v);
        }
        cfg.emit_dataset |= args.emit_dataset || args.emit_labels;
        cfg.emit_labels |= args.emit_labels;
        if let Some(v) = args.seeds_per_cell {
            cfg.seeds_per_cell = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let check_list = |name: &str, len: usize| {
            if len == 0 {
                Err(usage(format!("`{name}` must not be empty")))
            } else {
                Ok(())
            }
        };
        check_list("d", self.d.to_vec().len())?;
        check_list("n", self.n.to_vec().len())?;
        check_list("T", self.t.to_vec().len())?;
        check_list("variant", self.variant.to_vec().len())?;
        if self.d.to_vec().contains(&0) {
            return Err(usage("d must be >= 1"));
        }
        if self.n.to_vec().contains(&0) || self.t.to_vec().contains(&0) {
            return Err(usage("n and T must be >= 1"));
        }
        if let Some(etas) = &self.eta {
            check_list("eta", etas.to_vec().len())?;
            if etas.to_vec().iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return Err(usage("eta must be positive"));
            }
        }
        for (name, v) in [("beta-norm", self.beta_norm), ("sigma", self.sigma)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(usage(format!("{name} must be positive")));
                }
            }
        }
        if !(self.tol > 0.0) {
            return Err(usage("tol must be positive"));
        }
        if self.quad_order < 8 {
            return Err(usage("quad-order must be >= 8"));
        }
        if self.seeds_per_cell == 0 {
            return Err(usage("seeds-per-cell must be >= 1"));
        }
        Ok(())
    }

    /// Resolves `(beta_norm, sigma)` for one value of `eta`.
    fn scales(&self, eta: Option<f64>) -> Result<(f64, f64)> {
        match (eta, self.beta_norm, self.sigma) {
            (Some(e), Some(b), Some(s)) => {
                if ((b / s) - e).abs() > 1e-12 * e {
                    return Err(usage(format!("eta = {e} conflicts with beta-norm / sigma = {}", b / s)));
                }
                Ok((b, s))
            }
            (Some(e), None, Some(s)) => Ok((e * s, s)),
            (Some(e), Some(b), None) => Ok((b, b / e)),
            (Some(e), None, None) => Ok((1.0, 1.0 / e)),
            (None, b, s) => Ok((b.unwrap_or(1.0), s.unwrap_or(1.0))),
        }
    }

    /// Single-run view: the first value of every grid field, with `eta`,
    /// `beta_norm` and `sigma` resolved.
    fn single(&self) -> Result<Self> {
        let eta = self.eta.as_ref().and_then(OneOrMany::first);
        let (b, s) = self.scales(eta)?;
        Ok(Self {
            d: OneOrMany::One(self.d.first().expect("validated")),
            eta: Some(OneOrMany::One(b / s)),
            beta_norm: Some(b),
            sigma: Some(s),
            n: OneOrMany::One(self.n.first().expect("validated")),
            t: OneOrMany::One(self.t.first().expect("validated")),
            variant: OneOrMany::One(self.variant.first().expect("validated")),
            ..self.clone()
        })
    }

    fn truth(&self) -> Result<GroundTruth> {
        let d = self.d.first().expect("validated");
        GroundTruth::along_first_axis(d, self.beta_norm.unwrap_or(1.0), self.sigma.unwrap_or(1.0))
    }

    fn em_config(&self) -> EmConfig {
        EmConfig {
            variant: self.variant.first().expect("validated"),
            n: self.n.first().expect("validated"),
            iterations: self.t.first().expect("validated"),
            splitting: self.splitting,
            switch_threshold: self.switch_threshold,
            seed: self.seed,
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| MlrError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let cfg = SweepConfig::from_args(&args)?.single()?;
            with_pool(cfg.jobs, || cmd_run(&cfg))
        }
        Command::Landscape { common, grid } => {
            let cfg = SweepConfig::from_args(&common)?.single()?;
            if grid < 2 {
                return Err(usage("grid must be >= 2"));
            }
            with_pool(cfg.jobs, || cmd_landscape(&cfg, grid))
        }
        Command::Sweep(args) => {
            let cfg = SweepConfig::from_args(&args)?;
            with_pool(cfg.jobs, || cmd_sweep(&cfg))
        }
        Command::Check { common, trajectory } => cmd_check(&common, &trajectory),
    }
}

fn run_id(seed: u64) -> String {
    format!("seed{seed}")
}

fn write_bounds(path: &Path, run_id: &str, reports: &[BoundReport]) -> Result<()> {
    let rows: Vec<BoundRow> = reports.iter().map(|r| BoundRow::new(run_id, r)).collect();
    io::write_rows(path, &rows)
}

fn summarize(reports: &[BoundReport]) -> (usize, usize) {
    let applicable: Vec<_> = reports.iter().filter(|r| r.applicable).collect();
    (applicable.iter().filter(|r| r.pass).count(), applicable.len())
}

fn population_bounds(records: &[PopulationRecord], truth: &GroundTruth) -> Result<Vec<BoundReport>> {
    let its: Vec<Iterate> = records.iter().map(Iterate::from).collect();
    diagnostics::check_trajectory(&its, truth.beta_norm(), truth.sigma(), CheckMode::Population)
}

fn finite_mode(cfg: &SweepConfig, d: usize) -> CheckMode {
    if cfg.splitting {
        let n = cfg.n.first().expect("validated");
        let t = cfg.t.first().expect("validated");
        CheckMode::Finite { eps_f: finite::epsilon_f(d, n, t, true), d }
    } else {
        CheckMode::Practical
    }
}

fn finite_bounds(records: &[TrajectoryRecord], truth: &GroundTruth, mode: CheckMode) -> Result<Vec<BoundReport>> {
    let its: Vec<Iterate> = records.iter().map(Iterate::from).collect();
    diagnostics::check_trajectory(&its, truth.beta_norm(), truth.sigma(), mode)
}

fn cmd_run(cfg: &SweepConfig) -> Result<()> {
    let truth = cfg.truth()?;
    let out = &cfg.out;
    let beta0 = model::random_init(truth.d(), truth.beta_norm(), cfg.seed)?;
    io::write_json(&out.join("config.json"), cfg)?;
    let reports = if cfg.population {
        let quad = QuadratureSpec::new(cfg.quad_order)?;
        let records = population::run_population_trajectory(&beta0, &truth, &quad, cfg.max_iters, cfg.tol)?;
        let rows: Vec<PopulationRow> = records.iter().map(PopulationRow::from).collect();
        io::write_rows(&out.join("trajectory.csv"), &rows)?;
        let last = records.last().expect("at least one record");
        println!("population run: {} iterations, final l2 error {:.3e}", last.iter, last.l2_error);
        population_bounds(&records, &truth)?
    } else {
        let em = cfg.em_config();
        let records = finite::run_sample_splitting(&em, &truth, &beta0)?;
        let rows: Vec<FiniteRow> = records.iter().map(FiniteRow::from).collect();
        io::write_rows(&out.join("trajectory.csv"), &rows)?;
        if cfg.emit_dataset {
            let data = model::sample_dataset(&truth, em.n, em.seed)?;
            io::write_dataset(&out.join("dataset.csv"), &data, cfg.emit_labels)?;
        }
        let last = records.last().expect("at least one record");
        println!(
            "{} run: {} iterations, eps_f {:.3e}, final l2 error {:.3e}",
            em.variant,
            last.iter,
            em.epsilon_f(truth.d()),
            last.l2_error
        );
        finite_bounds(&records, &truth, finite_mode(cfg, truth.d()))?
    };
    write_bounds(&out.join("bounds.csv"), &run_id(cfg.seed), &reports)?;
    let (pass, applicable) = summarize(&reports);
    println!("bounds: {pass}/{applicable} applicable checks pass; output in {}", out.display());
    Ok(())
}

fn cmd_landscape(cfg: &SweepConfig, grid: usize) -> Result<()> {
    let truth = cfg.truth()?;
    if truth.d() < 2 {
        return Err(usage("landscape needs d >= 2"));
    }
    let quad = QuadratureSpec::new(cfg.quad_order)?;
    let (b, sigma) = (truth.beta_norm(), truth.sigma());
    let e = population::find_fixed_point_e(0.0, b, sigma, &quad, cfg.tol.min(1e-10))?;
    let point = |c_star: f64, c_orth: f64| {
        let mut v = DVector::zeros(truth.d());
        v[0] = c_star;
        v[1] = c_orth;
        v
    };
    let mut rows = Vec::new();
    for (name, cs, co) in [
        ("origin", 0.0, 0.0),
        ("+beta_star", b, 0.0),
        ("-beta_star", -b, 0.0),
        ("+E(v)v", 0.0, e),
        ("-E(v)v", 0.0, -e),
    ] {
        let p = point(cs, co);
        let next = population::population_em_vec(&p, &truth, &quad)?;
        rows.push(FixedPointRow {
            point: name.to_string(),
            c_star: cs,
            c_orth: co,
            residual: (next - &p).norm(),
            hessian_quadform: population::hessian_quadform_along_bstar(&p, &truth, &quad)?,
            loglik: population::population_loglik(&p, &truth, &quad)?,
        });
    }
    io::write_json(&cfg.out.join("config.json"), cfg)?;
    io::write_rows(&cfg.out.join("fixed_points.csv"), &rows)?;
    let extent = 1.5 * b.max(e);
    let coords: Vec<f64> = (0..grid).map(|i| -extent + 2.0 * extent * i as f64 / (grid - 1) as f64).collect();
    let cells: Vec<(f64, f64)> = coords.iter().flat_map(|&x| coords.iter().map(move |&y| (x, y))).collect();
    let grid_rows: Vec<LandscapeGridRow> = cells
        .par_iter()
        .map(|&(x, y)| {
            population::population_loglik(&point(x, y), &truth, &quad)
                .map(|loglik| LandscapeGridRow { c_star: x, c_orth: y, loglik })
        })
        .collect::<Result<_>>()?;
    io::write_rows(&cfg.out.join("landscape_grid.csv"), &grid_rows)?;
    for r in &rows {
        println!(
            "{:>11}: residual {:.2e}, hessian along beta* {:+.4e}, loglik {:.6}",
            r.point, r.residual, r.hessian_quadform, r.loglik
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRunRow {
    pub cell: usize,
    pub run: usize,
    pub seed: u64,
    pub final_error: f64,
    pub iters_to_pi3: Option<usize>,
    pub iters_to_pi8: Option<usize>,
    pub iters_to_tol: Option<usize>,
    pub bounds_pass: usize,
    pub bounds_applicable: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub cell: usize,
    pub d: usize,
    pub eta: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub variant: String,
    pub seeds: usize,
    pub median_final_error: Option<f64>,
    pub median_iters_to_pi3: Option<f64>,
    pub median_iters_to_pi8: Option<f64>,
    pub median_iters_to_tol: Option<f64>,
    pub bound_pass_rate: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    d: usize,
    eta: Option<f64>,
    n: usize,
    t: usize,
    variant: Variant,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn first_iter(angles_and_errors: &[(usize, f64, f64)], pred: impl Fn(f64, f64) -> bool) -> Option<usize> {
    angles_and_errors.iter().find(|(_, th, err)| pred(*th, *err)).map(|(i, _, _)| *i)
}

fn sweep_run(cfg: &SweepConfig, cell: &Cell, idx: usize, run: usize, seed: u64) -> SweepRunRow {
    let attempt = || -> Result<SweepRunRow> {
        let (b, s) = cfg.scales(cell.eta)?;
        let truth = GroundTruth::along_first_axis(cell.d, b, s)?;
        let beta0 = model::random_init(cell.d, b, seed)?;
        let (path, reports) = if cfg.population {
            let quad = QuadratureSpec::new(cfg.quad_order)?;
            let recs = population::run_population_trajectory(&beta0, &truth, &quad, cfg.max_iters, cfg.tol)?;
            let path: Vec<_> = recs.iter().map(|r| (r.iter, r.sin_theta.atan2(r.cos_theta), r.l2_error)).collect();
            (path, population_bounds(&recs, &truth)?)
        } else {
            let em = EmConfig { variant: cell.variant, n: cell.n, iterations: cell.t, seed, ..cfg.em_config() };
            let recs = finite::run_sample_splitting(&em, &truth, &beta0)?;
            let path: Vec<_> = recs.iter().map(|r| (r.iter, r.sin_theta.atan2(r.cos_theta), r.l2_error)).collect();
            let mode = if cfg.splitting {
                CheckMode::Finite { eps_f: em.epsilon_f(cell.d), d: cell.d }
            } else {
                CheckMode::Practical
            };
            (path, finite_bounds(&recs, &truth, mode)?)
        };
        let (pass, applicable) = summarize(&reports);
        Ok(SweepRunRow {
            cell: idx,
            run,
            seed,
            final_error: path.last().map(|p| p.2).unwrap_or(f64::NAN),
            iters_to_pi3: first_iter(&path, |th, _| th < std::f64::consts::FRAC_PI_3),
            iters_to_pi8: first_iter(&path, |th, _| th < std::f64::consts::PI / 8.0),
            iters_to_tol: first_iter(&path, |_, e| e <= cfg.tol),
            bounds_pass: pass,
            bounds_applicable: applicable,
            error: None,
        })
    };
    attempt().unwrap_or_else(|e| SweepRunRow {
        cell: idx,
        run,
        seed,
        final_error: f64::NAN,
        iters_to_pi3: None,
        iters_to_pi8: None,
        iters_to_tol: None,
        bounds_pass: 0,
        bounds_applicable: 0,
        error: Some(e.to_string()),
    })
}

fn cmd_sweep(cfg: &SweepConfig) -> Result<()> {
    let etas: Vec<Option<f64>> = match &cfg.eta {
        Some(v) => v.to_vec().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut cells = Vec::new();
    for d in cfg.d.to_vec() {
        for &eta in &etas {
            for n in cfg.n.to_vec() {
                for t in cfg.t.to_vec() {
                    for variant in cfg.variant.to_vec() {
                        cells.push(Cell { d, eta, n, t, variant });
                    }
                }
            }
        }
    }
    for cell in &cells {
        cfg.scales(cell.eta)?;
    }
    io::write_json(&cfg.out.join("config.json"), cfg)?;
    let summaries: Vec<SweepSummaryRow> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| {
            let cell_seed = seeds::derive(cfg.seed, idx as u64);
            let runs: Vec<SweepRunRow> = (0..cfg.seeds_per_cell)
                .into_par_iter()
                .map(|j| sweep_run(cfg, cell, idx, j, seeds::derive(cell_seed, j as u64)))
                .collect();
            io::write_rows(&cfg.out.join("cells").join(format!("cell_{idx:04}.csv")), &runs)?;
            let ok: Vec<&SweepRunRow> = runs.iter().filter(|r| r.error.is_none()).collect();
            let med = |f: &dyn Fn(&SweepRunRow) -> Option<f64>| median(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let (pass, applicable) =
                ok.iter().fold((0, 0), |(p, a), r| (p + r.bounds_pass, a + r.bounds_applicable));
            let (b, s) = cfg.scales(cell.eta)?;
            Ok(SweepSummaryRow {
                cell: idx,
                d: cell.d,
                eta: b / s,
                n: cell.n,
                t: cell.t,
                variant: if cfg.population { "population".into() } else { cell.variant.to_string() },
                seeds: cfg.seeds_per_cell,
                median_final_error: med(&|r| Some(r.final_error)),
                median_iters_to_pi3: med(&|r| r.iters_to_pi3.map(|v| v as f64)),
                median_iters_to_pi8: med(&|r| r.iters_to_pi8.map(|v| v as f64)),
                median_iters_to_tol: med(&|r| r.iters_to_tol.map(|v| v as f64)),
                bound_pass_rate: (applicable > 0).then(|| pass as f64 / applicable as f64),
                failures: runs.len() - ok.len(),
            })
        })
        .collect::<Result<_>>()?;
    io::write_rows(&cfg.out.join("sweep_summary.csv"), &summaries)?;
    let failed_cells = summaries.iter().filter(|s| s.failures == s.seeds).count();
    println!("sweep: {} cells, {failed_cells} fully failed; output in {}", summaries.len(), cfg.out.display());
    if failed_cells == summaries.len() {
        return Err(MlrError::Numerical("every sweep cell failed".into()));
    }
    Ok(())
}

fn cmd_check(args: &CommonArgs, trajectory: &Path) -> Result<()> {
    let dir = trajectory.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = args.config.clone().or_else(|| Some(dir.join("config.json")).filter(|p| p.exists()));
    let base = SweepConfig::from_args(&CommonArgs { config, ..CommonArgs::default() })?;
    let cfg = merge_flags(base, args);
    cfg.validate()?;
    let cfg = cfg.single()?;
    let truth = cfg.truth()?;
    let header = io::read_header(trajectory)?;
    let reports = if header == io::POPULATION_HEADER {
        let rows: Vec<PopulationRow> = io::read_rows(trajectory)?;
        let records: Vec<PopulationRecord> = rows.iter().map(PopulationRecord::from).collect();
        population_bounds(&records, &truth)?
    } else if header == io::FINITE_HEADER {
        let rows: Vec<FiniteRow> = io::read_rows(trajectory)?;
        let records: Vec<TrajectoryRecord> = rows.iter().map(TrajectoryRecord::from).collect();
        finite_bounds(&records, &truth, finite_mode(&cfg, truth.d()))?
    } else {
        return Err(usage(format!("{}: not a trajectory CSV (header {:?})", trajectory.display(), header)));
    };
    let out = args.out.clone().unwrap_or(dir);
    write_bounds(&out.join("bounds.csv"), &run_id(cfg.seed), &reports)?;
    if args.out.is_some() {
        io::write_json(&out.join("config.json"), &cfg)?;
    }
    let (pass, applicable) = summarize(&reports);
    println!("check: {pass}/{applicable} applicable checks pass");
    Ok(())
}

/// Settings of a previous run overridden by any flag given to `check`.
fn merge_flags(base: SweepConfig, args: &CommonArgs) -> SweepConfig {
    let mut cfg = base;
    if let Some(v) = args.d {
        cfg.d = OneOrMany::One(v);
    }
    if let Some(v) = args.eta {
        cfg.eta = Some(OneOrMany::One(v));
        if args.beta_norm.is_none() && args.sigma.is_none() {
            cfg.beta_norm = None;
            cfg.sigma = None;
        }
    }
    if let Some(v) = args.beta_norm {
        cfg.beta_norm = Some(v);
    }
    if let Some(v) = args.sigma {
        cfg.sigma = Some(v);
    }
    if let Some(v) = args.n {
        cfg.n = OneOrMany::One(v);
    }
    if let Some(v) = args.t {
        cfg.t = OneOrMany::One(v);
    }
    if args.no_splitting {
        cfg.splitting = false;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg
}
