use std::f64::consts::PI;

use nalgebra::DVector;

use super::{population_em_step, radial, QuadratureSpec};
use crate::error::{MlrError, Result};
use crate::geometry::{self, PlanarState};
use crate::model::GroundTruth;

/// Planar coordinates used by the landscape functions. At `beta = 0` the frame is
/// taken along `beta_star`.
fn planar_or_origin(beta: &DVector<f64>, truth: &GroundTruth) -> Result<PlanarState> {
    if beta.len() != truth.d() {
        return Err(MlrError::Domain(format!("beta has dimension {}, expected {}", beta.len(), truth.d())));
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(MlrError::Domain("beta must be finite".into()));
    }
    if beta.norm() == 0.0 {
        return PlanarState::new(0.0, truth.beta_norm(), 0.0, truth.sigma());
    }
    Ok(geometry::reduce(beta, truth.beta_star(), truth.sigma())?.folded())
}

/// Population log-likelihood from planar coordinates.
///
/// `L = -log(2 pi sigma^2)/2 - (sigma^2 + ||beta*||^2 + b1^2)/(2 sigma^2) + E log cosh(u)`.
pub fn loglik_planar(state: &PlanarState, quad: &QuadratureSpec) -> f64 {
    let sigma_sq = state.sigma * state.sigma;
    let b1s = state.b1_star.abs();
    let sigma2 = state.sigma2();
    let scale = state.b1 / sigma_sq;
    let mut acc = 0.0;
    if state.b1 > 0.0 {
        quad.for_each_angle(b1s, sigma2, scale, |c, s, w| {
            let k = 2.0 * scale * c * (sigma2 * s + b1s * c);
            acc += w * radial(k).psi;
        });
    }
    -0.5 * (2.0 * PI * sigma_sq).ln() - (state.total_variance() + state.b1 * state.b1) / (2.0 * sigma_sq)
        + acc / (2.0 * PI)
}

pub fn population_loglik(beta: &DVector<f64>, truth: &GroundTruth, quad: &QuadratureSpec) -> Result<f64> {
    Ok(loglik_planar(&planar_or_origin(beta, truth)?, quad))
}

/// `<u, H u>` for `u = beta_star / ||beta_star||` and `H` the Hessian of the
/// population log-likelihood, from planar coordinates.
pub fn hessian_quadform_planar(state: &PlanarState, quad: &QuadratureSpec) -> f64 {
    let sigma_sq = state.sigma * state.sigma;
    let b1s = state.b1_star.abs();
    let b2s = state.b2_star;
    let sigma2 = state.sigma2();
    let sigma2_sq = state.sigma2_sq;
    let norm = state.beta_star_norm();
    let (ct, st) = (b1s / norm, b2s / norm);
    let scale = state.b1 / sigma_sq;
    let mut acc = 0.0;
    quad.for_each_angle(b1s, sigma2, scale, |c, s, w| {
        let h = b1s * c + sigma2 * s;
        let a = ct * c + st * (b2s / sigma2) * s;
        let rad = radial(2.0 * scale * c * h);
        let h2 = h * h;
        acc += w * (4.0 * h2 * a * a / sigma_sq * rad.m2 + 2.0 * h2 * st * st / sigma2_sq * rad.phi2);
    });
    (acc / (2.0 * PI) - 1.0) / sigma_sq
}

pub fn hessian_quadform_along_bstar(beta: &DVector<f64>, truth: &GroundTruth, quad: &QuadratureSpec) -> Result<f64> {
    Ok(hessian_quadform_planar(&planar_or_origin(beta, truth)?, quad))
}

/// `lim_{b1 -> inf} b1' = (2/pi)(b1_star atan(b1_star / sigma_2) + sigma_2)`.
pub fn b1_limit(b1_star: f64, b2_star: f64, sigma: f64) -> f64 {
    let sigma2 = sigma.hypot(b2_star);
    2.0 / PI * (b1_star * (b1_star / sigma2).atan() + sigma2)
}

/// Slope at the origin of `t -> b1'(t v)` for a unit `v` with `<beta_star, v> = b1_star`.
pub fn f_prime_at_zero(b1_star: f64, b2_star: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (s2 + 3.0 * b1_star * b1_star + b2_star * b2_star) / s2
}

/// The positive fixed point `E(v)` of `t -> b1'(t v)`, by bisection on
/// `[tol, 3 sqrt(sigma^2 + ||beta*||^2)]`.
pub fn find_fixed_point_e(b1_star: f64, b2_star: f64, sigma: f64, quad: &QuadratureSpec, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(MlrError::Domain(format!("tol must be positive, got {tol}")));
    }
    let probe = PlanarState::new(1.0, b1_star, b2_star, sigma)?;
    let g = |t: f64| -> Result<f64> {
        let st = PlanarState { b1: t, ..probe };
        Ok(population_em_step(&st, quad)?.b1_prime - t)
    };
    let mut lo = tol;
    let mut hi = 3.0 * probe.total_variance().sqrt();
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(MlrError::Numerical(format!(
            "fixed-point bracket [{lo}, {hi}] does not straddle a root (g = {g_lo}, {g_hi})"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if (hi - lo <= tol && gm.abs() <= tol) || gm == 0.0 {
            return Ok(mid);
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let gm = g(mid)?;
    if gm.abs() <= tol {
        Ok(mid)
    } else {
        Err(MlrError::Numerical(format!("bisection stalled at t = {mid} with residual {gm:e}")))
    }
}
