//! Finite-sample EM and Easy-EM with sample splitting.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, BoundReport, TheoremId};
use crate::error::{MlrError, Result};
use crate::geometry;
use crate::model::{self, Batch, Dataset, GroundTruth};

/// Largest condition number of the sample covariance accepted by [`em_step`].
pub const MAX_CONDITION: f64 = 1e12;
const CHUNK_ROWS: usize = 4096;
const TANH_SATURATION: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Em,
    EasyEm,
    TwoPhase,
}

impl std::str::FromStr for Variant {
    type Err = MlrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Variant::Em),
            "easyem" => Ok(Variant::EasyEm),
            "twophase" => Ok(Variant::TwoPhase),
            other => Err(MlrError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Em => "em",
            Variant::EasyEm => "easyem",
            Variant::TwoPhase => "twophase",
        })
    }
}

/// Which update produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Init,
    Em,
    EasyEm,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepKind::Init => "init",
            StepKind::Em => "em",
            StepKind::EasyEm => "easyem",
        })
    }
}

impl std::str::FromStr for StepKind {
    type Err = MlrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(StepKind::Init),
            "em" => Ok(StepKind::Em),
            "easyem" => Ok(StepKind::EasyEm),
            other => Err(MlrError::Config(format!("unknown step kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub variant: Variant,
    /// Total number of samples `n`.
    pub n: usize,
    /// Number of iterations `T`.
    pub iterations: usize,
    /// Fresh disjoint batch per iteration when true; otherwise every iteration
    /// reuses all `n` samples.
    pub splitting: bool,
    /// Cosine level at which TwoPhase leaves Easy-EM. `None` uses `epsilon_f`.
    pub switch_threshold: Option<f64>,
    pub seed: u64,
}

impl EmConfig {
    pub fn new(variant: Variant, n: usize, iterations: usize, seed: u64) -> Self {
        Self { variant, n, iterations, splitting: true, switch_threshold: None, seed }
    }

    pub fn batch_size(&self) -> usize {
        if self.splitting {
            self.n / self.iterations.max(1)
        } else {
            self.n
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(MlrError::Config("T must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(MlrError::Config("n must be >= 1".into()));
        }
        if self.splitting && self.n % self.iterations != 0 {
            return Err(MlrError::Config(format!("n = {} is not divisible by T = {}", self.n, self.iterations)));
        }
        if self.variant != Variant::EasyEm && self.batch_size() < d {
            return Err(MlrError::Config(format!(
                "batch size {} is smaller than d = {d}; the covariance solve needs at least d rows",
                self.batch_size()
            )));
        }
        if let Some(t) = self.switch_threshold {
            if !t.is_finite() {
                return Err(MlrError::Config("switch threshold must be finite".into()));
            }
        }
        Ok(())
    }

    /// Working fluctuation scale `sqrt((d / (n/T)) log n)`.
    pub fn epsilon_f(&self, d: usize) -> f64 {
        epsilon_f(d, self.n, self.iterations, self.splitting)
    }
}

pub fn epsilon_f(d: usize, n: usize, iterations: usize, splitting: bool) -> f64 {
    let per_step = if splitting { n as f64 / iterations.max(1) as f64 } else { n as f64 };
    ((d as f64 / per_step) * (n as f64).max(2.0).ln()).sqrt()
}

fn saturating_tanh(u: f64) -> f64 {
    if u > TANH_SATURATION {
        1.0
    } else if u < -TANH_SATURATION {
        -1.0
    } else {
        u.tanh()
    }
}

/// `(1/n) sum tanh(<beta, x_i> y_i / sigma^2) y_i x_i`, and optionally `(1/n) X^T X`.
/// Rows are reduced in fixed chunks combined in order, so results do not depend
/// on the thread count.
fn moments(beta: &DVector<f64>, batch: &Batch<'_>, sigma: f64, with_gram: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let n = batch.len();
    let d = batch.dim();
    let inv_s2 = 1.0 / (sigma * sigma);
    let starts: Vec<usize> = (0..n).step_by(CHUNK_ROWS).collect();
    let partials: Vec<(DVector<f64>, Option<DMatrix<f64>>)> = starts
        .par_iter()
        .map(|&start| {
            let len = CHUNK_ROWS.min(n - start);
            let xs = batch.xs.rows(start, len);
            let ys = batch.ys.rows(start, len);
            let proj = &xs * beta;
            let weights = DVector::from_fn(len, |i, _| saturating_tanh(proj[i] * ys[i] * inv_s2) * ys[i]);
            let mu = xs.tr_mul(&weights);
            let gram = with_gram.then(|| xs.tr_mul(&xs));
            (mu, gram)
        })
        .collect();
    let mut mu = DVector::zeros(d);
    let mut gram = with_gram.then(|| DMatrix::zeros(d, d));
    for (m, g) in partials {
        mu += m;
        if let (Some(acc), Some(g)) = (gram.as_mut(), g) {
            *acc += g;
        }
    }
    let inv_n = 1.0 / n as f64;
    (mu * inv_n, gram.map(|g| g * inv_n))
}

fn check_batch(beta: &DVector<f64>, batch: &Batch<'_>, sigma: f64) -> Result<()> {
    if batch.is_empty() {
        return Err(MlrError::Domain("empty batch".into()));
    }
    if beta.len() != batch.dim() {
        return Err(MlrError::Domain(format!("beta has dimension {}, batch has {}", beta.len(), batch.dim())));
    }
    if !(sigma > 0.0) {
        return Err(MlrError::Domain("sigma must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub beta: DVector<f64>,
    /// Condition number of the sample covariance.
    pub cond: f64,
}

/// EM update: solves `Sigma_hat beta' = mu_hat` with a pivoted LU factorization.
pub fn em_step(beta: &DVector<f64>, batch: &Batch<'_>, sigma: f64) -> Result<EmStep> {
    check_batch(beta, batch, sigma)?;
    if batch.len() < batch.dim() {
        return Err(MlrError::Domain(format!("batch of {} rows is smaller than d = {}", batch.len(), batch.dim())));
    }
    let (mu, gram) = moments(beta, batch, sigma, true);
    let gram = gram.expect("gram requested");
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(MlrError::IllConditioned { cond });
    }
    let beta = gram
        .lu()
        .solve(&mu)
        .ok_or_else(|| MlrError::Numerical("sample covariance is singular".into()))?;
    Ok(EmStep { beta, cond })
}

/// Easy-EM update: the EM right-hand side without the covariance solve.
pub fn easyem_step(beta: &DVector<f64>, batch: &Batch<'_>, sigma: f64) -> Result<DVector<f64>> {
    check_batch(beta, batch, sigma)?;
    Ok(moments(beta, batch, sigma, false).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub cos_theta: f64,
    pub sin_theta: f64,
    /// Signed error `min(||beta - beta*||, ||beta + beta*||)`.
    pub l2_error: f64,
    pub norm: f64,
    pub variant_used: StepKind,
    pub cond_number: Option<f64>,
    pub batch_start: usize,
    pub batch_end: usize,
    /// Per-step bound checks for the step that produced this iterate.
    pub bound_checks: BTreeMap<TheoremId, BoundReport>,
}

impl TrajectoryRecord {
    fn new(iter: usize, beta: &DVector<f64>, truth: &GroundTruth, kind: StepKind, cond: Option<f64>, range: (usize, usize)) -> Result<Self> {
        let norm = beta.norm();
        let (cos_theta, sin_theta) = if norm > 0.0 {
            let a = geometry::angle_metrics(beta, truth.beta_star())?;
            (a.cos_theta, a.sin_theta)
        } else {
            (0.0, 1.0)
        };
        Ok(Self {
            iter,
            cos_theta,
            sin_theta,
            l2_error: geometry::signed_error(beta, truth.beta_star()),
            norm,
            variant_used: kind,
            cond_number: cond,
            batch_start: range.0,
            batch_end: range.1,
            bound_checks: BTreeMap::new(),
        })
    }
}

/// Step-by-step driver. Yields the starting point first, then one record per
/// iteration, so callers can stop early.
pub struct FiniteRun {
    config: EmConfig,
    truth: GroundTruth,
    beta: DVector<f64>,
    t: usize,
    eps_f: f64,
    easy_steps: usize,
    max_easy_steps: usize,
    stable_proxies: usize,
    in_em_phase: bool,
    full: Option<Dataset>,
    last: Option<TrajectoryRecord>,
    started: bool,
    failed: bool,
}

impl FiniteRun {
    pub fn new(config: EmConfig, truth: &GroundTruth, beta0: &DVector<f64>) -> Result<Self> {
        config.validate(truth.d())?;
        if beta0.len() != truth.d() {
            return Err(MlrError::Domain(format!("beta0 has dimension {}, expected {}", beta0.len(), truth.d())));
        }
        if beta0.norm() == 0.0 || beta0.iter().any(|v| !v.is_finite()) {
            return Err(MlrError::Domain("beta0 must be finite and nonzero".into()));
        }
        let d = truth.d();
        let eps_f = config.epsilon_f(d);
        let in_em_phase = match config.variant {
            Variant::Em => true,
            Variant::EasyEm => false,
            Variant::TwoPhase => eps_f * (d as f64).sqrt() <= 1.0,
        };
        let full = if config.splitting { None } else { Some(model::sample_dataset(truth, config.n, config.seed)?) };
        Ok(Self {
            config,
            truth: truth.clone(),
            beta: beta0.clone(),
            t: 0,
            eps_f,
            easy_steps: 0,
            max_easy_steps: ((d as f64).log2().ceil() as usize).max(1),
            stable_proxies: 0,
            in_em_phase,
            full,
            last: None,
            started: false,
            failed: false,
        })
    }

    pub fn epsilon_f(&self) -> f64 {
        self.eps_f
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    fn step(&mut self) -> Result<TrajectoryRecord> {
        let b = self.config.batch_size();
        let (start, end) = if self.config.splitting { (self.t * b, (self.t + 1) * b) } else { (0, self.config.n) };
        let owned;
        let data = match &self.full {
            Some(full) => full,
            None => {
                owned = model::sample_rows(&self.truth, self.config.seed, start, end)?;
                &owned
            }
        };
        let batch = data.batch();
        let sigma = self.truth.sigma();
        let (next, kind, cond) = if self.in_em_phase {
            let s = em_step(&self.beta, &batch, sigma)?;
            (s.beta, StepKind::Em, Some(s.cond))
        } else {
            (easyem_step(&self.beta, &batch, sigma)?, StepKind::EasyEm, None)
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(MlrError::Numerical(format!("non-finite iterate at step {}", self.t + 1)));
        }
        if self.config.variant == Variant::TwoPhase && !self.in_em_phase {
            self.easy_steps += 1;
            let threshold = self.config.switch_threshold.unwrap_or(self.eps_f);
            let denom = self.beta.norm() * next.norm();
            let proxy = if denom > 0.0 { self.beta.dot(&next) / denom } else { 0.0 };
            self.stable_proxies = if proxy >= threshold { self.stable_proxies + 1 } else { 0 };
            if self.stable_proxies >= 2 || self.easy_steps >= self.max_easy_steps {
                self.in_em_phase = true;
            }
        }
        self.beta = next;
        self.t += 1;
        TrajectoryRecord::new(self.t, &self.beta, &self.truth, kind, cond, (start, end))
    }
}

impl Iterator for FiniteRun {
    type Item = Result<TrajectoryRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = if !self.started {
            self.started = true;
            TrajectoryRecord::new(0, &self.beta, &self.truth, StepKind::Init, None, (0, 0))
        } else if self.t >= self.config.iterations {
            return None;
        } else {
            self.step()
        };
        match out {
            Ok(mut rec) => {
                if let (Some(prev), true) = (&self.last, self.config.splitting) {
                    let ctx = diagnostics::FiniteContext {
                        beta_norm: self.truth.beta_norm(),
                        sigma: self.truth.sigma(),
                        eps_f: self.eps_f,
                        d: self.truth.d(),
                    };
                    for report in diagnostics::check_finite_step(prev, &rec, &ctx) {
                        rec.bound_checks.insert(report.theorem_id, report);
                    }
                }
                self.last = Some(rec.clone());
                Some(Ok(rec))
            }
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Runs all `T` iterations; the result holds the starting point plus `T` records.
pub fn run_sample_splitting(config: &EmConfig, truth: &GroundTruth, beta0: &DVector<f64>) -> Result<Vec<TrajectoryRecord>> {
    FiniteRun::new(config.clone(), truth, beta0)?.collect()
}

/// `Some(true)` when every iterate keeps norm at least `||beta*|| / 10`; `None`
/// when the starting norm is already below that floor.
pub fn norm_floor_check(trajectory: &[TrajectoryRecord], beta_norm: f64) -> Option<bool> {
    let floor = beta_norm / 10.0;
    let first = trajectory.first()?;
    if first.norm < floor {
        return None;
    }
    Some(trajectory.iter().all(|r| r.norm >= floor))
}

/// Signed error of the last record.
pub fn final_error(records: &[TrajectoryRecord]) -> Option<f64> {
    records.last().map(|r| r.l2_error)
}

pub fn bound_reports(records: &[TrajectoryRecord]) -> impl Iterator<Item = &BoundReport> {
    records.iter().flat_map(|r| r.bound_checks.values())
}
