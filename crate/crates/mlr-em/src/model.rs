//! Planted two-component mixed linear regression model and seeded sampling.
//!
//! Responses follow `y = z * <beta_star, x> + e` with `x ~ N(0, I_d)`,
//! `e ~ N(0, sigma^2)` and a fair random sign `z`. Each row `i` is drawn from its
//! own ChaCha stream per purpose (covariates, labels, noise), so a dataset of
//! `n` rows is a prefix of any larger dataset with the same seed.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MlrError, Result};
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    beta_star: DVector<f64>,
    sigma: f64,
}

impl GroundTruth {
    pub fn new(beta_star: DVector<f64>, sigma: f64) -> Result<Self> {
        if beta_star.is_empty() {
            return Err(MlrError::Domain("beta_star must have dimension >= 1".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(MlrError::Domain(format!("sigma must be positive and finite, got {sigma}")));
        }
        if beta_star.iter().any(|v| !v.is_finite()) || beta_star.norm() == 0.0 {
            return Err(MlrError::Domain("beta_star must be finite and nonzero".into()));
        }
        Ok(Self { beta_star, sigma })
    }

    /// `beta_star = beta_norm * e_1` in `d` dimensions.
    pub fn along_first_axis(d: usize, beta_norm: f64, sigma: f64) -> Result<Self> {
        if d == 0 {
            return Err(MlrError::Domain("d must be >= 1".into()));
        }
        let mut b = DVector::zeros(d);
        b[0] = beta_norm;
        Self::new(b, sigma)
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn d(&self) -> usize {
        self.beta_star.len()
    }

    pub fn beta_norm(&self) -> f64 {
        self.beta_star.norm()
    }

    /// Signal-to-noise ratio `||beta_star|| / sigma`.
    pub fn snr(&self) -> f64 {
        self.beta_norm() / self.sigma
    }
}

/// Response for one row. Shared by sampling and by reconstruction checks.
pub fn response(beta_star: &[f64], x: &[f64], z: i8, e: f64) -> f64 {
    let mut dot = 0.0;
    for (b, xi) in beta_star.iter().zip(x) {
        dot += b * xi;
    }
    f64::from(z) * dot + e
}

#[derive(Debug, Clone)]
pub struct Dataset {
    xs: DMatrix<f64>,
    ys: DVector<f64>,
    zs: Vec<i8>,
    seed: u64,
    first_row: usize,
}

/// Read-only view of covariates and responses. Labels are not reachable from here.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub xs: DMatrixView<'a, f64>,
    pub ys: DVectorView<'a, f64>,
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.ncols()
    }
}

impl Dataset {
    pub fn xs(&self) -> &DMatrix<f64> {
        &self.xs
    }

    pub fn ys(&self) -> &DVector<f64> {
        &self.ys
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Global index of the first stored row.
    pub fn first_row(&self) -> usize {
        self.first_row
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.ncols()
    }

    /// Latent labels. Only diagnostics and tests should call this; the EM
    /// operators take a [`Batch`], which does not carry labels.
    pub fn labels_for_diagnostics(&self) -> &[i8] {
        &self.zs
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch { xs: self.xs.as_view(), ys: self.ys.as_view() }
    }

    /// Rows `[start, end)` relative to this dataset.
    pub fn slice(&self, start: usize, end: usize) -> Batch<'_> {
        assert!(start <= end && end <= self.len(), "row range out of bounds");
        Batch {
            xs: self.xs.view((start, 0), (end - start, self.dim())),
            ys: self.ys.rows(start, end - start),
        }
    }
}

fn covariate_row(seed: u64, row: u64, d: usize, out: &mut [f64]) {
    let mut rng = seeds::stream_rng(seed, seeds::PURPOSE_COVARIATES, row);
    for v in out.iter_mut().take(d) {
        *v = StandardNormal.sample(&mut rng);
    }
}

fn label(seed: u64, row: u64) -> i8 {
    let mut rng = seeds::stream_rng(seed, seeds::PURPOSE_LABELS, row);
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

fn noise(seed: u64, row: u64, sigma: f64) -> f64 {
    let mut rng = seeds::stream_rng(seed, seeds::PURPOSE_NOISE, row);
    let e: f64 = StandardNormal.sample(&mut rng);
    sigma * e
}

/// Noise terms of rows `[start, end)`, regenerated from the seed.
pub fn regenerate_noise(truth: &GroundTruth, seed: u64, start: usize, end: usize) -> Vec<f64> {
    (start..end).map(|i| noise(seed, i as u64, truth.sigma)).collect()
}

/// Rows `[start, end)` of the infinite seeded sample stream.
pub fn sample_rows(truth: &GroundTruth, seed: u64, start: usize, end: usize) -> Result<Dataset> {
    if end <= start {
        return Err(MlrError::Domain("need at least one row".into()));
    }
    let d = truth.d();
    let n = end - start;
    let beta = truth.beta_star.as_slice();
    let mut flat = vec![0.0; n * d];
    let mut ys = DVector::zeros(n);
    let mut zs = Vec::with_capacity(n);
    for (k, row) in flat.chunks_mut(d).enumerate() {
        let i = (start + k) as u64;
        covariate_row(seed, i, d, row);
        let z = label(seed, i);
        let e = noise(seed, i, truth.sigma);
        ys[k] = response(beta, row, z, e);
        zs.push(z);
    }
    Ok(Dataset { xs: DMatrix::from_row_slice(n, d, &flat), ys, zs, seed, first_row: start })
}

pub fn sample_dataset(truth: &GroundTruth, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(MlrError::Domain("n must be >= 1".into()));
    }
    sample_rows(truth, seed, 0, n)
}

/// Uniform point on the sphere of radius `scale` in `d` dimensions.
pub fn random_init(d: usize, scale: f64, seed: u64) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(MlrError::Domain("d must be >= 1".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(MlrError::Domain(format!("scale must be positive, got {scale}")));
    }
    let mut rng = seeds::stream_rng(seed, seeds::PURPOSE_INIT, 0);
    loop {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let norm = v.norm();
        if norm > 0.0 {
            return Ok(v * (scale / norm));
        }
    }
}
