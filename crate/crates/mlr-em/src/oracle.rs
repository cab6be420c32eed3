//! Monte Carlo estimators that serve as independent references for the
//! quadrature-based population quantities.
//!
//! Draws are split into fixed-size shards, each on its own ChaCha stream, and
//! shard statistics are merged in shard order. Results depend only on the seed.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::geometry::PlanarState;
use crate::model::GroundTruth;
use crate::seeds;

pub const MIN_DRAWS: usize = 10_000;
const SHARD: usize = 1 << 16;
const TANH_SATURATION: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_draws: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `|value - mean|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (value - self.mean).abs() / self.std_error
    }

    pub fn agrees(&self, value: f64, n_se: f64) -> bool {
        (value - self.mean).abs() <= n_se * self.std_error
    }
}

/// Running mean and centered sum of squares.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n / n;
        self.m2 += other.m2 + delta * delta * self.n * other.n / n;
        self.n = n;
    }

    fn estimate(&self, seed: u64) -> McEstimate {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        McEstimate { mean: self.mean, std_error: (var / self.n).sqrt(), n_draws: self.n as usize, seed }
    }
}

fn check_draws(n_draws: usize) -> Result<()> {
    if n_draws < MIN_DRAWS {
        return Err(MlrError::Domain(format!("need at least {MIN_DRAWS} draws, got {n_draws}")));
    }
    Ok(())
}

/// Runs `sample` on every draw and returns one estimate per output slot.
fn sharded<const K: usize, F>(n_draws: usize, seed: u64, sample: F) -> [McEstimate; K]
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> [f64; K] + Sync,
{
    let shards = n_draws.div_ceil(SHARD);
    let parts: Vec<[Moments; K]> = (0..shards)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream_rng(seed, seeds::PURPOSE_ORACLE, i as u64);
            let len = SHARD.min(n_draws - i * SHARD);
            let mut m = [Moments::default(); K];
            for _ in 0..len {
                let v = sample(&mut rng);
                for (mk, vk) in m.iter_mut().zip(v) {
                    mk.push(vk);
                }
            }
            m
        })
        .collect();
    let mut total = [Moments::default(); K];
    for p in &parts {
        for (t, m) in total.iter_mut().zip(p) {
            t.merge(m);
        }
    }
    total.map(|m| m.estimate(seed))
}

fn tanh_sat(u: f64) -> f64 {
    if u.abs() > TANH_SATURATION {
        u.signum()
    } else {
        u.tanh()
    }
}

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Monte Carlo estimates of every planar quantity, from one set of draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarMc {
    pub b1_prime: McEstimate,
    pub b2_prime: McEstimate,
    pub s: McEstimate,
    pub r: McEstimate,
    pub loglik: McEstimate,
    pub hessian: McEstimate,
}

/// Samples `alpha_1, alpha_2, e` explicitly (no reduction to `sigma_2`) and
/// averages each integrand. The label is absorbed by symmetry.
pub fn mc_planar(state: &PlanarState, n_draws: usize, seed: u64) -> Result<PlanarMc> {
    check_draws(n_draws)?;
    let (b1, b1s, b2s, sigma) = (state.b1, state.b1_star, state.b2_star, state.sigma);
    let s2 = sigma * sigma;
    let total = state.total_variance();
    let norm = state.beta_star_norm();
    let (ct, st) = (b1s / norm, b2s / norm);
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * s2).ln();
    let [b1p, b2p, s, r, ll, hess] = sharded(n_draws, seed, |rng| {
        let a1 = normal(rng);
        let a2 = normal(rng);
        let e = sigma * normal(rng);
        let y = b1s * a1 + b2s * a2 + e;
        let xb = b1 * a1;
        let u = xb * y / s2;
        let t = tanh_sat(u);
        let tp = 1.0 - t * t;
        let proj = ct * a1 + st * a2;
        [
            t * y * a1,
            t * y * a2,
            t + u * tp,
            total * a1 * a1 * b1 / s2 * tp,
            log_norm - (y * y + xb * xb) / (2.0 * s2) + log_cosh(u),
            (y * y / s2 * proj * proj * tp - 1.0) / s2,
        ]
    });
    Ok(PlanarMc { b1_prime: b1p, b2_prime: b2p, s, r, loglik: ll, hessian: hess })
}

/// Estimates of `(b1', b2')` for a planar state.
pub fn mc_population_step(state: &PlanarState, n_draws: usize, seed: u64) -> Result<(McEstimate, McEstimate)> {
    let m = mc_planar(state, n_draws, seed)?;
    Ok((m.b1_prime, m.b2_prime))
}

fn check_beta(beta: &DVector<f64>, truth: &GroundTruth) -> Result<()> {
    if beta.len() != truth.d() {
        return Err(MlrError::Domain(format!("beta has dimension {}, expected {}", beta.len(), truth.d())));
    }
    Ok(())
}

/// Gradient of the population log-likelihood,
/// `(1/sigma^2)(-beta + E[y x tanh(y <x, beta> / sigma^2)])`, one estimate per coordinate.
/// Draws the full model, labels included.
pub fn mc_loglik_grad(beta: &DVector<f64>, truth: &GroundTruth, n_draws: usize, seed: u64) -> Result<Vec<McEstimate>> {
    check_draws(n_draws)?;
    check_beta(beta, truth)?;
    let d = truth.d();
    let s2 = truth.sigma() * truth.sigma();
    let bstar = truth.beta_star().clone();
    let sigma = truth.sigma();
    let shards = n_draws.div_ceil(SHARD);
    let parts: Vec<Vec<Moments>> = (0..shards)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream_rng(seed, seeds::PURPOSE_ORACLE, i as u64);
            let len = SHARD.min(n_draws - i * SHARD);
            let mut m = vec![Moments::default(); d];
            let mut x = vec![0.0; d];
            for _ in 0..len {
                for xi in x.iter_mut() {
                    *xi = normal(&mut rng);
                }
                let z = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let e = sigma * normal(&mut rng);
                let (mut dot_star, mut dot_beta) = (0.0, 0.0);
                for j in 0..d {
                    dot_star += bstar[j] * x[j];
                    dot_beta += beta[j] * x[j];
                }
                let y = z * dot_star + e;
                let w = y * tanh_sat(y * dot_beta / s2);
                for j in 0..d {
                    m[j].push((-beta[j] + w * x[j]) / s2);
                }
            }
            m
        })
        .collect();
    let mut total = vec![Moments::default(); d];
    for p in &parts {
        for (t, m) in total.iter_mut().zip(p) {
            t.merge(m);
        }
    }
    Ok(total.iter().map(|m| m.estimate(seed)).collect())
}

/// Population log-likelihood `E log(N(y; <x,beta>, sigma^2)/2 + N(y; -<x,beta>, sigma^2)/2)`.
pub fn mc_loglik(beta: &DVector<f64>, truth: &GroundTruth, n_draws: usize, seed: u64) -> Result<McEstimate> {
    check_draws(n_draws)?;
    check_beta(beta, truth)?;
    let d = truth.d();
    let sigma = truth.sigma();
    let s2 = sigma * sigma;
    let bstar = truth.beta_star().clone();
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * s2).ln();
    let [ll] = sharded(n_draws, seed, |rng| {
        let (mut dot_star, mut dot_beta) = (0.0, 0.0);
        for j in 0..d {
            let x = normal(rng);
            dot_star += bstar[j] * x;
            dot_beta += beta[j] * x;
        }
        let z = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let y = z * dot_star + sigma * normal(rng);
        [log_norm - (y * y + dot_beta * dot_beta) / (2.0 * s2) + log_cosh(y * dot_beta / s2)]
    });
    Ok(ll)
}
