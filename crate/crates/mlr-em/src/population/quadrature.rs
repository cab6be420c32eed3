//! Integration rules for Gaussian expectations in the `(alpha_1, y)` plane.
//!
//! Expectations over two independent normals are written in polar form
//! `alpha_1 = r cos(phi)`, `y / sigma_2 = r sin(phi)`, `s = r^2 / 2`. Every
//! integrand used here depends on the radius only through `tanh(2 s g(phi))` and
//! powers of `s`, so the radial integral has a closed form (see [`radial`]) and
//! only the angle needs a numerical rule. The angle rule is tanh-sinh on arcs
//! between the zeros of `g`, with extra break points a few widths `sigma^2 / (b1 sigma_2)`
//! away from each zero when `b1` is large.
//!
//! The table of probabilists' Gauss-Hermite nodes is kept for one-dimensional
//! normal expectations.
//!
//! [`radial`]: super::radial

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{MlrError, Result};

pub const DEFAULT_ORDER: usize = 100;
const TANH_SINH_WINDOW: f64 = 3.1;
const SPLIT_WIDTHS: f64 = 40.0;
const SPLIT_MAX_OFFSET: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    pub order: usize,
    /// Gauss-Hermite nodes for `N(0, 1)`, ascending.
    pub nodes: Vec<f64>,
    /// Matching weights, summing to one.
    pub weights: Vec<f64>,
    arc: TanhSinh,
}

#[derive(Debug, Clone)]
struct TanhSinh {
    /// Abscissae on `[-1, 1]`.
    x: Vec<f64>,
    /// `1 - |x|` computed without cancellation.
    gap: Vec<f64>,
    w: Vec<f64>,
}

impl TanhSinh {
    fn new(n: usize) -> Self {
        let h = 2.0 * TANH_SINH_WINDOW / (n - 1) as f64;
        let mut x = Vec::with_capacity(n);
        let mut gap = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let t = -TANH_SINH_WINDOW + h * i as f64;
            let u = 0.5 * PI * t.sinh();
            let cu = u.cosh();
            x.push(u.tanh());
            gap.push((-u.abs()).exp() / cu);
            w.push(h * 0.5 * PI * t.cosh() / (cu * cu));
        }
        Self { x, gap, w }
    }
}

fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

impl QuadratureSpec {
    pub fn new(order: usize) -> Result<Self> {
        if order < 8 {
            return Err(MlrError::Config(format!("quadrature order must be >= 8, got {order}")));
        }
        let (nodes, weights) = gauss_hermite(order);
        Ok(Self { order, nodes, weights, arc: TanhSinh::new(order) })
    }

    /// `E f(Z)` for `Z ~ N(0, 1)` by Gauss-Hermite.
    pub fn expect_normal(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Visits every angular node for the integrand geometry
    /// `g(phi) = scale * cos(phi) * (sigma2 sin(phi) + b1_star cos(phi))`, passing
    /// `(cos phi, sin phi, weight)`. Weights integrate over a full turn.
    pub(crate) fn for_each_angle(&self, b1_star: f64, sigma2: f64, scale: f64, mut visit: impl FnMut(f64, f64, f64)) {
        let psi = b1_star.atan2(sigma2);
        let zeros = [-0.5 * PI, 0.5 * PI, -psi, PI - psi];
        let mut cuts: Vec<f64> = Vec::with_capacity(12);
        cuts.extend_from_slice(&zeros);
        let width = if scale > 0.0 { 1.0 / (scale * sigma2) } else { f64::INFINITY };
        let offset = SPLIT_WIDTHS * width;
        if offset < SPLIT_MAX_OFFSET {
            for z in zeros {
                cuts.push(z - offset);
                cuts.push(z + offset);
            }
        }
        for c in cuts.iter_mut() {
            *c = c.rem_euclid(2.0 * PI);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let first = cuts[0];
        cuts.push(first + 2.0 * PI);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            if half <= 0.0 {
                continue;
            }
            for i in 0..self.arc.x.len() {
                let x = self.arc.x[i];
                let phi = if x > 0.0 { b - half * self.arc.gap[i] } else { a + half * self.arc.gap[i] };
                let (s, c) = phi.sin_cos();
                visit(c, s, half * self.arc.w[i]);
            }
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER).expect("default order is valid")
    }
}
