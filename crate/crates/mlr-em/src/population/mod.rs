//! Exact infinite-sample EM in the plane of the iterate and `beta_star`.
//!
//! With `v1 = beta/||beta||`, the update is `b1' = b1_star S + R`,
//! `b2' = b2_star S` where, for `alpha_1 ~ N(0,1)`, `y ~ N(0, sigma_2^2)` and
//! `u = (alpha_1 b1 / sigma^2)(y + alpha_1 b1_star)`,
//!
//! ```text
//! S = E[tanh(u) + u tanh'(u)]
//! R = (sigma^2 + ||beta_star||^2) E[(alpha_1^2 b1 / sigma^2) tanh'(u)]
//! ```
//!
//! `S` is odd in `b1_star` and `R` is even, so integrals are taken at
//! `|b1_star|` and the sign is restored afterwards.

mod landscape;
pub mod quadrature;
pub mod radial;

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{MlrError, Result};
use crate::geometry::{self, PlanarState};
use crate::model::GroundTruth;

pub use landscape::{
    b1_limit, f_prime_at_zero, find_fixed_point_e, hessian_quadform_along_bstar, hessian_quadform_planar,
    loglik_planar, population_loglik,
};
pub use quadrature::QuadratureSpec;
pub use radial::{radial, Radial};

/// Relative disagreement between the two routes to `b1'` that is treated as a failure.
pub const CROSS_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SR {
    pub s: f64,
    pub r: f64,
    /// Set when `b1 = 0`; the values are then the limit `(0, 0)`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationStep {
    pub s: f64,
    pub r: f64,
    pub b1_prime: f64,
    pub b2_prime: f64,
    /// `b1'` from the direct integral `E[tanh(u)(y + alpha_1 b1_star) alpha_1]`.
    pub b1_prime_direct: f64,
    /// `|b1_prime - b1_prime_direct|` relative to `|b1_prime_direct|`.
    pub discrepancy: f64,
    pub degenerate: bool,
}

struct Integrals {
    s: f64,
    r: f64,
    direct: f64,
}

fn integrals(state: &PlanarState, quad: &QuadratureSpec) -> Integrals {
    let sigma_sq = state.sigma * state.sigma;
    let b1s = state.b1_star.abs();
    let sigma2 = state.sigma2();
    let scale = state.b1 / sigma_sq;
    let (mut s_acc, mut r_acc, mut d_acc) = (0.0, 0.0, 0.0);
    quad.for_each_angle(b1s, sigma2, scale, |c, s, w| {
        let h = sigma2 * s + b1s * c;
        let k = 2.0 * scale * c * h;
        let rad = radial(k);
        s_acc += w * rad.phi1;
        r_acc += w * c * c * rad.phi2;
        d_acc += w * c * h * rad.phi1;
    });
    let sign = if state.b1_star > 0.0 {
        1.0
    } else if state.b1_star < 0.0 {
        -1.0
    } else {
        0.0
    };
    Integrals {
        s: sign * s_acc / (2.0 * PI),
        r: state.total_variance() * scale * r_acc / PI,
        direct: d_acc / PI,
    }
}

/// `S` and `R` of the planar update.
pub fn compute_s_r(state: &PlanarState, quad: &QuadratureSpec) -> SR {
    if state.b1 == 0.0 {
        return SR { s: 0.0, r: 0.0, degenerate: true };
    }
    let i = integrals(state, quad);
    SR { s: i.s, r: i.r, degenerate: false }
}

/// One population EM step in planar coordinates, with the direct-integral cross-check.
pub fn population_em_step(state: &PlanarState, quad: &QuadratureSpec) -> Result<PopulationStep> {
    if state.b1 == 0.0 {
        return Ok(PopulationStep {
            s: 0.0,
            r: 0.0,
            b1_prime: 0.0,
            b2_prime: 0.0,
            b1_prime_direct: 0.0,
            discrepancy: 0.0,
            degenerate: true,
        });
    }
    let i = integrals(state, quad);
    let b1_prime = state.b1_star * i.s + i.r;
    let b2_prime = state.b2_star * i.s;
    let floor = 1e-300_f64.max(1e-14 * state.total_variance().sqrt());
    let discrepancy = (b1_prime - i.direct).abs() / i.direct.abs().max(floor);
    if !(discrepancy <= CROSS_CHECK_TOL) {
        return Err(MlrError::QuadratureMismatch { rel: discrepancy });
    }
    Ok(PopulationStep {
        s: i.s,
        r: i.r,
        b1_prime,
        b2_prime,
        b1_prime_direct: i.direct,
        discrepancy,
        degenerate: false,
    })
}

/// Population EM operator on full vectors.
pub fn population_em_vec(beta: &DVector<f64>, truth: &GroundTruth, quad: &QuadratureSpec) -> Result<DVector<f64>> {
    if beta.len() != truth.d() {
        return Err(MlrError::Domain(format!("beta has dimension {}, expected {}", beta.len(), truth.d())));
    }
    if beta.norm() == 0.0 {
        return Ok(DVector::zeros(truth.d()));
    }
    let (state, frame) = geometry::reduce_with_frame(beta, truth.beta_star(), truth.sigma())?;
    let step = population_em_step(&state, quad)?;
    Ok(geometry::lift_frame(step.b1_prime, step.b2_prime, &frame))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationRecord {
    pub iter: usize,
    pub b1: f64,
    pub b1_star: f64,
    pub b2_star: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub l2_error: f64,
    /// `S` and `R` evaluated at this iterate.
    pub s: f64,
    pub r: f64,
}

impl PopulationRecord {
    pub fn state(&self, sigma: f64) -> Result<PlanarState> {
        PlanarState::new(self.b1, self.b1_star, self.b2_star, sigma)
    }
}

/// Advances a planar state by one step. The new `b2_star` is `b2_star |R| / ||beta'||`,
/// which keeps small angles accurate.
pub fn advance(state: &PlanarState, step: &PopulationStep) -> Result<Option<PlanarState>> {
    let norm = step.b1_prime.hypot(step.b2_prime);
    if norm == 0.0 {
        return Ok(None);
    }
    let beta_sq = state.b1_star * state.b1_star + state.b2_star * state.b2_star;
    let mut b1_star = (state.b1_star * step.b1_prime + state.b2_star * step.b2_prime) / norm;
    let mut b2_star = state.b2_star * step.r.abs() / norm;
    if b1_star.abs() >= b2_star {
        b1_star = b1_star.signum() * (beta_sq - b2_star * b2_star).max(0.0).sqrt();
    } else {
        b2_star = (beta_sq - b1_star * b1_star).max(0.0).sqrt();
    }
    PlanarState::new(norm, b1_star, b2_star, state.sigma).map(Some)
}

fn record(iter: usize, state: &PlanarState, sr: (f64, f64)) -> PopulationRecord {
    PopulationRecord {
        iter,
        b1: state.b1,
        b1_star: state.b1_star,
        b2_star: state.b2_star,
        cos_theta: state.cos_theta(),
        sin_theta: state.sin_theta(),
        l2_error: state.signed_error(),
        s: sr.0,
        r: sr.1,
    }
}

/// Iterates population EM from `beta0` until the signed error is at most `tol`
/// or `max_iters` steps have been taken. Record 0 is the starting point.
pub fn run_population_trajectory(
    beta0: &DVector<f64>,
    truth: &GroundTruth,
    quad: &QuadratureSpec,
    max_iters: usize,
    tol: f64,
) -> Result<Vec<PopulationRecord>> {
    let state = geometry::reduce(beta0, truth.beta_star(), truth.sigma())?;
    run_population_planar(state, quad, max_iters, tol)
}

pub fn run_population_planar(
    mut state: PlanarState,
    quad: &QuadratureSpec,
    max_iters: usize,
    tol: f64,
) -> Result<Vec<PopulationRecord>> {
    let mut out = Vec::new();
    for iter in 0..=max_iters {
        let step = population_em_step(&state, quad)?;
        out.push(record(iter, &state, (step.s, step.r)));
        if state.signed_error() <= tol || iter == max_iters {
            break;
        }
        match advance(&state, &step)? {
            Some(next) => state = next,
            None => break,
        }
    }
    Ok(out)
}
