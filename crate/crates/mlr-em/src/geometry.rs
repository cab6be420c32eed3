//! Reduction of an iterate to the plane spanned by itself and `beta_star`.

use nalgebra::DVector;

use crate::error::{MlrError, Result};

/// Coordinates of an iterate against `beta_star` in the frame `v1 = beta/||beta||`,
/// `v2` = normalized part of `beta_star` orthogonal to `v1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarState {
    pub b1: f64,
    pub b1_star: f64,
    pub b2_star: f64,
    pub sigma: f64,
    pub sigma2_sq: f64,
}

impl PlanarState {
    pub fn new(b1: f64, b1_star: f64, b2_star: f64, sigma: f64) -> Result<Self> {
        if !(b1 >= 0.0) || !(b2_star >= 0.0) || !b1.is_finite() || !b2_star.is_finite() || !b1_star.is_finite() {
            return Err(MlrError::Domain(format!(
                "planar state needs finite b1 >= 0 and b2_star >= 0 (b1={b1}, b1*={b1_star}, b2*={b2_star})"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(MlrError::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if b1_star == 0.0 && b2_star == 0.0 {
            return Err(MlrError::Domain("beta_star must be nonzero".into()));
        }
        Ok(Self { b1, b1_star, b2_star, sigma, sigma2_sq: sigma * sigma + b2_star * b2_star })
    }

    pub fn beta_star_norm(&self) -> f64 {
        self.b1_star.hypot(self.b2_star)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2_sq.sqrt()
    }

    pub fn snr(&self) -> f64 {
        self.beta_star_norm() / self.sigma
    }

    /// `sigma^2 + ||beta_star||^2`, the second moment of `y`.
    pub fn total_variance(&self) -> f64 {
        self.sigma * self.sigma + self.b1_star * self.b1_star + self.b2_star * self.b2_star
    }

    /// Angle between the iterate and the nearer of `+-beta_star`, in `[0, pi/2]`.
    pub fn theta(&self) -> f64 {
        self.b2_star.atan2(self.b1_star.abs())
    }

    pub fn cos_theta(&self) -> f64 {
        self.b1_star.abs() / self.beta_star_norm()
    }

    pub fn sin_theta(&self) -> f64 {
        self.b2_star / self.beta_star_norm()
    }

    /// `||beta - s * beta_star||` with `s = sign(b1_star)`.
    pub fn aligned_error(&self) -> f64 {
        (self.b1 - self.b1_star.abs()).hypot(self.b2_star)
    }

    /// `min(||beta - beta_star||, ||beta + beta_star||)`.
    pub fn signed_error(&self) -> f64 {
        self.aligned_error()
    }

    /// Same state with `b1_star` replaced by `|b1_star|`.
    pub fn folded(&self) -> Self {
        Self { b1_star: self.b1_star.abs(), ..*self }
    }
}

/// Orthonormal frame of the reduction. `v2` is `None` when `beta` and `beta_star`
/// are parallel, in which case every planar vector lies along `v1`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub v1: DVector<f64>,
    pub v2: Option<DVector<f64>>,
}

fn check_pair(beta: &DVector<f64>, beta_star: &DVector<f64>) -> Result<()> {
    if beta.len() != beta_star.len() {
        return Err(MlrError::Domain(format!(
            "dimension mismatch: {} vs {}",
            beta.len(),
            beta_star.len()
        )));
    }
    if beta.norm() == 0.0 || beta_star.norm() == 0.0 {
        return Err(MlrError::Domain("zero vector has no direction".into()));
    }
    Ok(())
}

pub fn reduce_with_frame(beta: &DVector<f64>, beta_star: &DVector<f64>, sigma: f64) -> Result<(PlanarState, Frame)> {
    check_pair(beta, beta_star)?;
    let b1 = beta.norm();
    let v1 = beta / b1;
    let b1_star = beta_star.dot(&v1);
    let residual = beta_star - &v1 * b1_star;
    let b2_star = residual.norm();
    let v2 = if b2_star > 0.0 { Some(residual / b2_star) } else { None };
    Ok((PlanarState::new(b1, b1_star, b2_star, sigma)?, Frame { v1, v2 }))
}

pub fn reduce(beta: &DVector<f64>, beta_star: &DVector<f64>, sigma: f64) -> Result<PlanarState> {
    reduce_with_frame(beta, beta_star, sigma).map(|(s, _)| s)
}

/// `c1 * v1 + c2 * v2` for an orthonormal pair `(v1, v2)`.
pub fn lift(c1: f64, c2: f64, v1: &DVector<f64>, v2: &DVector<f64>) -> Result<DVector<f64>> {
    const ORTHO_TOL: f64 = 1e-10;
    if v1.len() != v2.len() {
        return Err(MlrError::Domain("frame vectors differ in dimension".into()));
    }
    let (n1, n2, dot) = (v1.norm(), v2.norm(), v1.dot(v2));
    if (n1 - 1.0).abs() > ORTHO_TOL || (n2 - 1.0).abs() > ORTHO_TOL || dot.abs() > ORTHO_TOL {
        return Err(MlrError::Domain(format!(
            "frame is not orthonormal (|v1|={n1}, |v2|={n2}, <v1,v2>={dot})"
        )));
    }
    Ok(v1 * c1 + v2 * c2)
}

/// Lift planar coordinates through a reduction frame.
pub fn lift_frame(c1: f64, c2: f64, frame: &Frame) -> DVector<f64> {
    match &frame.v2 {
        Some(v2) => &frame.v1 * c1 + v2 * c2,
        None => &frame.v1 * c1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleMetrics {
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub theta: f64,
}

/// Angle to the nearer of `+-beta_star`, folded into `[0, pi/2]`.
pub fn angle_metrics(beta: &DVector<f64>, beta_star: &DVector<f64>) -> Result<AngleMetrics> {
    check_pair(beta, beta_star)?;
    let v1 = beta / beta.norm();
    let along = beta_star.dot(&v1);
    let across = (beta_star - &v1 * along).norm();
    let r = along.abs().hypot(across);
    let (cos_theta, sin_theta) = ((along.abs() / r).min(1.0), (across / r).min(1.0));
    Ok(AngleMetrics { cos_theta, sin_theta, theta: across.atan2(along.abs()) })
}

pub fn signed_error(beta: &DVector<f64>, beta_star: &DVector<f64>) -> f64 {
    (beta - beta_star).norm().min((beta + beta_star).norm())
}
