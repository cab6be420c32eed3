//! Contraction bounds for population and finite-sample EM, evaluated against
//! recorded trajectories.
//!
//! A report is `applicable` only when the hypotheses of the bound hold at the
//! step being checked. `margin` is positive when the inequality holds with room
//! to spare, and `pass` means `margin >= -slack`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::finite::{StepKind, TrajectoryRecord};
use crate::geometry::PlanarState;
use crate::population::{PopulationRecord, PopulationStep};

/// Numerical slack for exact population bounds.
pub const POPULATION_SLACK: f64 = 1e-6;
/// Multiplier on the unspecified constants of the finite-sample bounds.
pub const FINITE_CONSTANT: f64 = 10.0;
/// SNR at which the finite-sample distance check switches to the high-SNR form.
pub const HIGH_SNR_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "Cos-T2")]
    CosT2,
    #[serde(rename = "Sin-T3")]
    SinT3,
    #[serde(rename = "Dist-T4")]
    DistT4,
    #[serde(rename = "Corollary1")]
    Corollary1,
    #[serde(rename = "FiniteCos-T6")]
    FiniteCosT6,
    #[serde(rename = "FiniteSin")]
    FiniteSin,
    #[serde(rename = "FiniteDist-lowSNR")]
    FiniteDistLowSnr,
    #[serde(rename = "FiniteDist-highSNR")]
    FiniteDistHighSnr,
    #[serde(rename = "EasyEM-T8")]
    EasyEmT8,
    #[serde(rename = "NormFloor")]
    NormFloor,
    #[serde(rename = "Bounded")]
    Bounded,
}

impl TheoremId {
    pub const ALL: [TheoremId; 11] = [
        TheoremId::CosT2,
        TheoremId::SinT3,
        TheoremId::DistT4,
        TheoremId::Corollary1,
        TheoremId::FiniteCosT6,
        TheoremId::FiniteSin,
        TheoremId::FiniteDistLowSnr,
        TheoremId::FiniteDistHighSnr,
        TheoremId::EasyEmT8,
        TheoremId::NormFloor,
        TheoremId::Bounded,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::CosT2 => "Cos-T2",
            TheoremId::SinT3 => "Sin-T3",
            TheoremId::DistT4 => "Dist-T4",
            TheoremId::Corollary1 => "Corollary1",
            TheoremId::FiniteCosT6 => "FiniteCos-T6",
            TheoremId::FiniteSin => "FiniteSin",
            TheoremId::FiniteDistLowSnr => "FiniteDist-lowSNR",
            TheoremId::FiniteDistHighSnr => "FiniteDist-highSNR",
            TheoremId::EasyEmT8 => "EasyEM-T8",
            TheoremId::NormFloor => "NormFloor",
            TheoremId::Bounded => "Bounded",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TheoremId {
    type Err = MlrError;
    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| MlrError::Config(format!("unknown theorem id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub theorem_id: TheoremId,
    /// Iteration of the iterate on the left-hand side.
    pub iter: usize,
    pub applicable: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sense {
    AtMost,
    AtLeast,
}

fn report(theorem_id: TheoremId, iter: usize, lhs: f64, rhs: f64, sense: Sense, slack: f64) -> BoundReport {
    let margin = match sense {
        Sense::AtMost => rhs - lhs,
        Sense::AtLeast => lhs - rhs,
    };
    BoundReport { theorem_id, iter, applicable: true, lhs, rhs, margin, pass: margin >= -slack }
}

fn not_applicable(theorem_id: TheoremId, iter: usize) -> BoundReport {
    BoundReport { theorem_id, iter, applicable: false, lhs: f64::NAN, rhs: f64::NAN, margin: f64::NAN, pass: true }
}

/// Cosine growth factor `sqrt(1 + eta^2 / (2/3 + eta^2))`, valid for angles in `[pi/3, pi/2)`.
pub fn kappa_cosine(eta: f64) -> f64 {
    let e2 = eta * eta;
    (1.0 + e2 / (2.0 / 3.0 + e2)).sqrt()
}

/// Angle-dependent cosine growth factor `sqrt(1 + sin^2 / (cos^2 + (1 + eta^-2)/2))`.
pub fn kappa_cosine_fine(theta: f64, eta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    (1.0 + s * s / (c * c + 0.5 * (1.0 + 1.0 / (eta * eta)))).sqrt()
}

/// Sine contraction factor `(1 + 2 eta^2 cos^2 / (1 + eta^2))^{-1/2}`.
pub fn kappa_sine(theta: f64, eta: f64) -> f64 {
    let c = theta.cos();
    let e2 = eta * eta;
    (1.0 + 2.0 * e2 / (1.0 + e2) * c * c).sqrt().recip()
}

/// Squared-sine factor of the finite-sample bounds.
pub fn kappa_sine_sq(theta: f64, eta: f64) -> f64 {
    kappa_sine(theta, eta).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceCase {
    /// `b2* < sigma` or `(sigma_2^2/sigma^2) b1 < b1*`.
    Contraction,
    /// Remaining case, bound `0.6 ||beta - beta*||`.
    Fixed,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceKappa {
    pub case: DistanceCase,
    pub kappa: f64,
    pub extra_term: f64,
}

/// Distance contraction for angles below `pi/8`. Uses `|b1*|`.
pub fn kappa_distance(state: &PlanarState) -> DistanceKappa {
    let st = state.folded();
    if st.theta() >= PI / 8.0 {
        return DistanceKappa { case: DistanceCase::NotApplicable, kappa: f64::NAN, extra_term: f64::NAN };
    }
    let sigma_sq = st.sigma * st.sigma;
    let lifted = st.sigma2_sq / sigma_sq * st.b1;
    if st.b2_star < st.sigma || lifted < st.b1_star {
        let m = lifted.min(st.b1_star);
        let kappa = (1.0 + m * m / st.sigma2_sq).sqrt().recip();
        let eta = st.snr();
        let e2 = eta * eta;
        let extra = kappa * 16.0 * st.sin_theta().powi(3) * st.beta_star_norm() * e2 / (1.0 + e2);
        DistanceKappa { case: DistanceCase::Contraction, kappa, extra_term: extra }
    } else {
        DistanceKappa { case: DistanceCase::Fixed, kappa: 0.6, extra_term: 0.0 }
    }
}

/// Lower and upper bounds on `S` at a state with `b1_star >= 0`.
pub fn s_bounds(state: &PlanarState) -> (f64, f64) {
    let st = state.folded();
    let lifted = st.sigma2_sq / (st.sigma * st.sigma) * st.b1;
    let lo = 1.0 - (1.0 + lifted.min(st.b1_star) * st.b1_star / st.sigma2_sq).sqrt().recip();
    (lo, 1.0)
}

/// `3 sqrt(sigma^2 + ||beta*||^2)`.
pub fn norm_bound(beta_norm: f64, sigma: f64) -> f64 {
    3.0 * (sigma * sigma + beta_norm * beta_norm).sqrt()
}

/// Rate of the multi-step distance envelope: the largest of `0.6`,
/// `(1 + ||beta_0||^2/sigma^2)^{-1/2}` and `sqrt(1 - 0.8 eta^2/(1 + eta^2))`.
pub fn corollary_kappa(beta0_norm: f64, sigma: f64, eta: f64) -> f64 {
    let e2 = eta * eta;
    let a = (1.0 + beta0_norm * beta0_norm / (sigma * sigma)).sqrt().recip();
    let b = (1.0 - 0.8 * e2 / (1.0 + e2)).sqrt();
    0.6f64.max(a).max(b)
}

/// One iterate seen by the checkers: norm and folded angle to `beta*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iterate {
    pub iter: usize,
    pub norm: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub kind: StepKind,
}

impl Iterate {
    fn theta(&self) -> f64 {
        self.sin_theta.atan2(self.cos_theta)
    }

    fn planar(&self, beta_norm: f64, sigma: f64) -> Result<PlanarState> {
        PlanarState::new(self.norm, beta_norm * self.cos_theta, beta_norm * self.sin_theta, sigma)
    }

    /// Distance to the copy of `beta*` on the same side as the iterate.
    fn distance(&self, beta_norm: f64) -> f64 {
        (self.norm - beta_norm * self.cos_theta).hypot(beta_norm * self.sin_theta)
    }
}

impl From<&PopulationRecord> for Iterate {
    fn from(r: &PopulationRecord) -> Self {
        Iterate { iter: r.iter, norm: r.b1, cos_theta: r.cos_theta, sin_theta: r.sin_theta, kind: StepKind::Em }
    }
}

impl From<&TrajectoryRecord> for Iterate {
    fn from(r: &TrajectoryRecord) -> Self {
        Iterate { iter: r.iter, norm: r.norm, cos_theta: r.cos_theta, sin_theta: r.sin_theta, kind: r.variant_used }
    }
}

/// Population bounds for a single step from `state` with update `step`.
pub fn check_population_step(state: &PlanarState, step: &PopulationStep, iter: usize, slack: f64) -> Vec<BoundReport> {
    let st = state.folded();
    let eta = st.snr();
    let beta_norm = st.beta_star_norm();
    let next_norm = step.b1_prime.hypot(step.b2_prime);
    let mut out = Vec::with_capacity(4);
    if next_norm == 0.0 {
        return out;
    }
    // Angle of beta' to the same-side copy of beta*.
    let along = (step.b1_prime * state.b1_star + step.b2_prime * state.b2_star).abs();
    let across = (step.b1_prime * state.b2_star - step.b2_prime * state.b1_star).abs();
    let cos_next = along / (next_norm * beta_norm);
    let sin_next = across / (next_norm * beta_norm);
    let next = Iterate { iter: iter + 1, norm: next_norm, cos_theta: cos_next, sin_theta: sin_next, kind: StepKind::Em };
    let cur = Iterate { iter, norm: st.b1, cos_theta: st.cos_theta(), sin_theta: st.sin_theta(), kind: StepKind::Em };
    out.push(cos_report(&cur, &next, eta, slack));
    out.push(sin_report(&cur, &next, eta, slack));
    out.push(dist_report(&st, &next, slack));
    out.push(report(TheoremId::Bounded, iter + 1, next_norm, norm_bound(beta_norm, st.sigma), Sense::AtMost, slack));
    out
}

fn cos_report(cur: &Iterate, next: &Iterate, eta: f64, slack: f64) -> BoundReport {
    let theta = cur.theta();
    if !(PI / 3.0..PI / 2.0).contains(&theta) {
        return not_applicable(TheoremId::CosT2, next.iter);
    }
    report(TheoremId::CosT2, next.iter, next.cos_theta, kappa_cosine(eta) * cur.cos_theta, Sense::AtLeast, slack)
}

fn sin_report(cur: &Iterate, next: &Iterate, eta: f64, slack: f64) -> BoundReport {
    let theta = cur.theta();
    if !(0.0..PI / 2.0).contains(&theta) {
        return not_applicable(TheoremId::SinT3, next.iter);
    }
    report(TheoremId::SinT3, next.iter, next.sin_theta, kappa_sine(theta, eta) * cur.sin_theta, Sense::AtMost, slack)
}

fn dist_report(state: &PlanarState, next: &Iterate, slack: f64) -> BoundReport {
    let k = kappa_distance(state);
    if k.case == DistanceCase::NotApplicable {
        return not_applicable(TheoremId::DistT4, next.iter);
    }
    let beta_norm = state.beta_star_norm();
    let rhs = k.kappa * state.aligned_error() + k.extra_term;
    report(TheoremId::DistT4, next.iter, next.distance(beta_norm), rhs, Sense::AtMost, slack)
}

/// What the trajectory checker needs to know about the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckMode {
    Population,
    /// Finite-sample run with sample splitting and fluctuation scale `eps_f`.
    Finite { eps_f: f64, d: usize },
    /// Finite-sample run reusing all samples; no bound is applicable.
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteContext {
    pub beta_norm: f64,
    pub sigma: f64,
    pub eps_f: f64,
    pub d: usize,
}

fn finite_step_from_iterates(cur: &Iterate, next: &Iterate, ctx: &FiniteContext) -> Vec<BoundReport> {
    let c = FINITE_CONSTANT;
    let eta = ctx.beta_norm / ctx.sigma;
    let theta = cur.theta();
    let floor_ok = cur.norm >= ctx.beta_norm / 10.0;
    let in_range = theta > 0.0 && theta < PI / 2.0;
    let mut out = Vec::with_capacity(4);
    let cos_id = if next.kind == StepKind::EasyEm { TheoremId::EasyEmT8 } else { TheoremId::FiniteCosT6 };
    if floor_ok && in_range {
        let fluct = if next.kind == StepKind::EasyEm {
            ctx.eps_f / (ctx.d as f64).sqrt()
        } else {
            (ctx.eps_f / (ctx.d as f64).sqrt()).max(ctx.eps_f * ctx.eps_f)
        };
        let rhs = kappa_cosine_fine(theta, eta) * (1.0 - c * ctx.eps_f) * cur.cos_theta - c * fluct;
        out.push(report(cos_id, next.iter, next.cos_theta, rhs, Sense::AtLeast, 0.0));
    } else {
        out.push(not_applicable(cos_id, next.iter));
    }
    if floor_ok && theta < PI / 2.0 && ctx.eps_f < 1.0f64.min(eta * eta) {
        let rhs = kappa_sine_sq(theta, eta) * cur.sin_theta.powi(2) + c * ctx.eps_f;
        out.push(report(TheoremId::FiniteSin, next.iter, next.sin_theta.powi(2), rhs, Sense::AtMost, 0.0));
    } else {
        out.push(not_applicable(TheoremId::FiniteSin, next.iter));
    }
    let scale = (ctx.sigma * ctx.sigma + ctx.beta_norm * ctx.beta_norm).sqrt();
    out.push(report(
        TheoremId::Bounded,
        next.iter,
        next.norm,
        norm_bound(ctx.beta_norm, ctx.sigma) + c * ctx.eps_f * scale,
        Sense::AtMost,
        0.0,
    ));
    out
}

/// Per-step finite-sample bounds for the step `prev -> cur`.
pub fn check_finite_step(prev: &TrajectoryRecord, cur: &TrajectoryRecord, ctx: &FiniteContext) -> Vec<BoundReport> {
    finite_step_from_iterates(&Iterate::from(prev), &Iterate::from(cur), ctx)
}

/// Evaluates every applicable bound over a trajectory.
pub fn check_trajectory(records: &[Iterate], beta_norm: f64, sigma: f64, mode: CheckMode) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    if records.is_empty() {
        return Ok(out);
    }
    let eta = beta_norm / sigma;
    match mode {
        CheckMode::Practical => {
            for id in TheoremId::ALL {
                out.push(not_applicable(id, records[records.len() - 1].iter));
            }
            return Ok(out);
        }
        CheckMode::Population => {
            for pair in records.windows(2) {
                let (cur, next) = (&pair[0], &pair[1]);
                out.push(cos_report(cur, next, eta, POPULATION_SLACK));
                out.push(sin_report(cur, next, eta, POPULATION_SLACK));
                out.push(dist_report(&cur.planar(beta_norm, sigma)?, next, POPULATION_SLACK));
                out.push(report(
                    TheoremId::Bounded,
                    next.iter,
                    next.norm,
                    norm_bound(beta_norm, sigma),
                    Sense::AtMost,
                    POPULATION_SLACK,
                ));
            }
            out.extend(corollary_envelope(records, beta_norm, sigma, POPULATION_SLACK));
        }
        CheckMode::Finite { eps_f, d } => {
            let ctx = FiniteContext { beta_norm, sigma, eps_f, d };
            for pair in records.windows(2) {
                out.extend(finite_step_from_iterates(&pair[0], &pair[1], &ctx));
            }
            out.extend(finite_distance(records, &ctx));
        }
    }
    out.push(norm_floor_report(records, beta_norm));
    Ok(out)
}

fn corollary_envelope(records: &[Iterate], beta_norm: f64, sigma: f64, slack: f64) -> Vec<BoundReport> {
    let eta = beta_norm / sigma;
    let e2 = eta * eta;
    let Some(start) = records.iter().position(|r| r.theta() < PI / 8.0) else {
        return vec![not_applicable(TheoremId::Corollary1, records[0].iter)];
    };
    let anchor = &records[start];
    let kappa = corollary_kappa(anchor.norm, sigma, eta);
    let d0 = anchor.distance(beta_norm);
    records[start..]
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let kt = kappa.powi(t as i32);
            let rhs = kt * d0 + t as f64 * kt * beta_norm * e2 / (1.0 + e2);
            report(TheoremId::Corollary1, r.iter, r.distance(beta_norm), rhs, Sense::AtMost, slack)
        })
        .collect()
}

fn finite_distance(records: &[Iterate], ctx: &FiniteContext) -> Vec<BoundReport> {
    let eta = ctx.beta_norm / ctx.sigma;
    let high = eta >= HIGH_SNR_THRESHOLD;
    let id = if high { TheoremId::FiniteDistHighSnr } else { TheoremId::FiniteDistLowSnr };
    let floor = ctx.beta_norm / 10.0;
    let Some(start) = records.iter().position(|r| r.theta() < PI / 70.0 && r.norm >= floor) else {
        return vec![not_applicable(id, records[records.len() - 1].iter)];
    };
    let anchor = &records[start];
    let d0 = anchor.distance(ctx.beta_norm);
    let c = FINITE_CONSTANT;
    let e2 = eta * eta;
    let kappa_low = corollary_kappa(anchor.norm, ctx.sigma, eta);
    let kappa_high = 0.95 + ctx.eps_f;
    records[start..]
        .iter()
        .enumerate()
        .map(|(t, r)| {
            if high && kappa_high >= 1.0 {
                return not_applicable(id, r.iter);
            }
            let rhs = if high {
                kappa_high.powi(t as i32) * d0 + c * ctx.eps_f * ctx.sigma
            } else {
                let kt = kappa_low.powi(t as i32);
                let scale = (ctx.sigma * ctx.sigma + ctx.beta_norm * ctx.beta_norm).sqrt();
                kt * d0 + t as f64 * kt * ctx.beta_norm * e2 / (1.0 + e2) + c * ctx.eps_f * scale
            };
            report(id, r.iter, r.distance(ctx.beta_norm), rhs, Sense::AtMost, 0.0)
        })
        .collect()
}

fn norm_floor_report(records: &[Iterate], beta_norm: f64) -> BoundReport {
    let floor = beta_norm / 10.0;
    let last = records[records.len() - 1].iter;
    if records[0].norm < floor {
        return not_applicable(TheoremId::NormFloor, last);
    }
    let min_norm = records.iter().map(|r| r.norm).fold(f64::INFINITY, f64::min);
    report(TheoremId::NormFloor, last, min_norm, floor, Sense::AtLeast, 0.0)
}
