//! Multivariate-Gaussian shot generation.
//!
//! Shots are produced in fixed-size chunks; chunk `c` draws from the ChaCha
//! stream `c` of the seed, so output is identical for any thread count.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chain::DetectionModel;
use crate::error::{invalid, Error, Result};
use crate::gaussian::GaussianState;

pub const CHUNK_SHOTS: usize = 8192;

/// Relative tolerance for negative covariance eigenvalues in the fallback
/// factorization.
pub const PSD_TOL: f64 = 1e-10;

/// Row-major raw measured quadratures `(x1, p1[, x2, p2])`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotBatch {
    channels: usize,
    data: Vec<f64>,
    pub seed: Option<u64>,
    pub gains: Vec<f64>,
}

impl ShotBatch {
    pub fn new(channels: usize, data: Vec<f64>, gains: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if channels != 2 && channels != 4 {
            return Err(invalid(format!("shots need 2 or 4 columns, got {channels}")));
        }
        if data.is_empty() || data.len() % channels != 0 {
            return Err(invalid(format!("{} values do not form whole {channels}-column shots", data.len())));
        }
        if !gains.is_empty() && gains.len() * 2 != channels {
            return Err(invalid(format!("{} gains given for {} chains", gains.len(), channels / 2)));
        }
        if let Some(g) = gains.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return Err(invalid(format!("gain must be positive, got {g}")));
        }
        Ok(ShotBatch { channels, data, seed, gains })
    }

    pub fn n_shots(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn chains(&self) -> usize {
        self.channels / 2
    }

    pub fn shot(&self, j: usize) -> &[f64] {
        &self.data[j * self.channels..(j + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Contiguous sub-batch of shots `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> ShotBatch {
        ShotBatch {
            channels: self.channels,
            data: self.data[start * self.channels..end * self.channels].to_vec(),
            seed: self.seed,
            gains: self.gains.clone(),
        }
    }
}

/// Factor `cov = L Lᵀ`: Cholesky, else a clipped eigendecomposition.
pub fn factor_covariance(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    let sqrt = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// Draws `n` shots from an arbitrary Gaussian.
pub fn sample_gaussian(state: &GaussianState, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("need at least one shot"));
    }
    let l = factor_covariance(state.cov())?;
    let mean = state.mean();
    let d = mean.len();
    let mut data = vec![0.0; n * d];
    data.par_chunks_mut(CHUNK_SHOTS * d).enumerate().for_each(|(c, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let mut z = vec![0.0; d];
        for row in chunk.chunks_exact_mut(d) {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for (i, out) in row.iter_mut().enumerate() {
                *out = mean[i] + (0..d).map(|j| l[(i, j)] * z[j]).sum::<f64>();
            }
        }
    });
    Ok(data)
}

pub fn sample(model: &DetectionModel, n: usize, seed: u64) -> Result<ShotBatch> {
    let data = sample_gaussian(&model.measured, n, seed)?;
    ShotBatch::new(model.measured.mean().len(), data, model.gains.clone(), Some(seed))
}

/// Splits into `n_blocks` equal contiguous batches.
pub fn split_blocks(batch: &ShotBatch, n_blocks: usize) -> Result<Vec<ShotBatch>> {
    let n = batch.n_shots();
    if n_blocks == 0 || n % n_blocks != 0 {
        return Err(invalid(format!("{n} shots cannot be split into {n_blocks} equal blocks")));
    }
    let size = n / n_blocks;
    Ok((0..n_blocks).map(|b| batch.slice(b * size, (b + 1) * size)).collect())
}

/// Near-equal contiguous ranges covering `0..n`; the first `n % b` ranges
/// get one extra element.
pub fn block_ranges(n: usize, n_blocks: usize) -> Vec<std::ops::Range<usize>> {
    let (q, r) = (n / n_blocks, n % n_blocks);
    let mut start = 0;
    (0..n_blocks)
        .map(|b| {
            let len = q + usize::from(b < r);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}
