//! Two-mode covariance from reconstructed output moments and the Gaussian
//! negativity witness.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::GaussianState;
use crate::tables::JointMomentTable;
use crate::C64;

/// Tolerance on the imaginary part of quadrature moments assembled from
/// complex moments, relative to the largest second moment.
pub const REALITY_TOL: f64 = 1e-10;

pub const DEFAULT_WITNESS_SIGMA: f64 = 5.0;

/// Mean and covariance of two modes over `(x1, p1, x2, p2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TwoModeCovariance(GaussianState);

impl TwoModeCovariance {
    /// Validated: symmetric and physical.
    pub fn new(state: GaussianState) -> Result<Self> {
        if state.num_modes() != 2 {
            return Err(invalid("two-mode covariance needs exactly two modes"));
        }
        let checked = GaussianState::new(state.mean().clone(), state.cov().clone())?;
        Ok(TwoModeCovariance(checked))
    }

    fn unvalidated(state: GaussianState) -> Self {
        TwoModeCovariance(state)
    }

    pub fn state(&self) -> &GaussianState {
        &self.0
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        self.0.cov()
    }

    pub fn mean(&self) -> &DVector<f64> {
        self.0.mean()
    }

    fn block(&self, r: usize, c: usize) -> Matrix2<f64> {
        let s = self.cov();
        Matrix2::new(s[(r, c)], s[(r, c + 1)], s[(r + 1, c)], s[(r + 1, c + 1)])
    }

    pub fn a(&self) -> Matrix2<f64> {
        self.block(0, 0)
    }

    pub fn b(&self) -> Matrix2<f64> {
        self.block(2, 2)
    }

    pub fn c(&self) -> Matrix2<f64> {
        self.block(0, 2)
    }
}

/// Quadrature `q = c a_k + conj(c) a_k†`.
#[derive(Clone, Copy)]
struct Quad {
    mode: usize,
    c: C64,
}

fn quads() -> [Quad; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [
        Quad { mode: 0, c: C64::new(h, 0.0) },
        Quad { mode: 0, c: C64::new(0.0, -h) },
        Quad { mode: 1, c: C64::new(h, 0.0) },
        Quad { mode: 1, c: C64::new(0.0, -h) },
    ]
}

/// Normal moment index for `a_k†^dag a_k^plain` placed in mode `k`.
fn idx(mode: usize, dag: usize, plain: usize) -> [usize; 4] {
    if mode == 0 {
        [dag, plain, 0, 0]
    } else {
        [0, 0, dag, plain]
    }
}

fn add(a: [usize; 4], b: [usize; 4]) -> [usize; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

/// Covariance in symmetric ordering from normally ordered joint moments up
/// to second order.
pub fn moments_to_covariance(outputs: &JointMomentTable) -> Result<TwoModeCovariance> {
    let q = quads();
    let mut mean = DVector::zeros(4);
    for (i, qi) in q.iter().enumerate() {
        let v = qi.c * outputs.value(idx(qi.mode, 0, 1))? + qi.c.conj() * outputs.value(idx(qi.mode, 1, 0))?;
        mean[i] = v.re;
    }
    let mut second = DMatrix::zeros(4, 4);
    let mut worst_im = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let (qi, qj) = (q[i], q[j]);
            // normal-ordered part of q_i q_j
            let terms = [
                (qi.c * qj.c, add(idx(qi.mode, 0, 1), idx(qj.mode, 0, 1))),
                (qi.c * qj.c.conj(), add(idx(qi.mode, 0, 1), idx(qj.mode, 1, 0))),
                (qi.c.conj() * qj.c, add(idx(qi.mode, 1, 0), idx(qj.mode, 0, 1))),
                (qi.c.conj() * qj.c.conj(), add(idx(qi.mode, 1, 0), idx(qj.mode, 1, 0))),
            ];
            let mut v = C64::new(0.0, 0.0);
            for (w, k) in terms {
                v += w * outputs.value(k)?;
            }
            if qi.mode == qj.mode {
                // symmetrization of the single commutator [a, a†] = 1
                v += (qi.c * qj.c.conj() + qj.c * qi.c.conj()) * 0.5;
            }
            worst_im = worst_im.max(v.im.abs());
            second[(i, j)] = v.re;
        }
    }
    let scale = second.amax().max(1.0);
    if worst_im > REALITY_TOL * scale {
        return Err(Error::Format(format!("moments give complex quadrature moments (imaginary part {worst_im:.3e})")));
    }
    let cov = second - &mean * mean.transpose();
    Ok(TwoModeCovariance::unvalidated(GaussianState::unchecked(mean, cov)?))
}

/// Sign flip of the momentum of one mode.
pub fn partial_transpose(cov: &DMatrix<f64>, mode: usize) -> DMatrix<f64> {
    let mut t = cov.clone();
    let p = 2 * mode + 1;
    for k in 0..t.nrows() {
        if k != p {
            t[(p, k)] = -t[(p, k)];
            t[(k, p)] = -t[(k, p)];
        }
    }
    t
}

/// Smallest symplectic eigenvalue of the partially transposed covariance,
/// in units where vacuum has 1/2.
fn transposed_nu(cov: &DMatrix<f64>) -> f64 {
    let blk = |r: usize, c: usize| Matrix2::new(cov[(r, c)], cov[(r, c + 1)], cov[(r + 1, c)], cov[(r + 1, c + 1)]);
    let delta = blk(0, 0).determinant() + blk(2, 2).determinant() - 2.0 * blk(0, 2).determinant();
    let det = cov.determinant();
    let disc = (delta * delta - 4.0 * det).max(0.0);
    ((delta - disc.sqrt()) / 2.0).max(0.0).sqrt()
}

/// Kernel `(1 − ν)/(2ν)` with `ν` normalized so separable states have ν ≥ 1.
pub fn negativity_kernel(cov: &DMatrix<f64>) -> f64 {
    let nu = 2.0 * transposed_nu(cov);
    (1.0 - nu) / (2.0 * nu)
}

/// Central-difference gradient of the kernel with respect to the
/// covariance entries; symmetric pairs share the derivative, halved.
fn kernel_gradient(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    let mut grad = DMatrix::zeros(n, n);
    let h = 1e-6 * cov.amax().max(1.0);
    for i in 0..n {
        for j in i..n {
            let bump = |d: f64| {
                let mut c = cov.clone();
                c[(i, j)] += d;
                if i != j {
                    c[(j, i)] += d;
                }
                negativity_kernel(&c)
            };
            let d = (bump(h) - bump(-h)) / (2.0 * h);
            if i == j {
                grad[(i, i)] = d;
            } else {
                grad[(i, j)] = d / 2.0;
                grad[(j, i)] = d / 2.0;
            }
        }
    }
    grad
}

/// `(negativity, kernel)`; negativity is the kernel clipped at zero.
pub fn negativity_gaussian(cov: &TwoModeCovariance) -> Result<(f64, f64)> {
    let checked = TwoModeCovariance::new(cov.state().clone())?;
    let kernel = negativity_kernel(checked.cov());
    Ok((kernel.max(0.0), kernel))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Entangled,
    NotDetected,
    /// No block replicas, so no uncertainty to compare against.
    Withheld,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub kernel: f64,
    pub negativity: f64,
    pub kernel_error: Option<f64>,
    pub threshold_sigma: f64,
    pub verdict: Verdict,
    /// Whether the full-data covariance passed the physicality check.
    pub physical: bool,
    pub covariance: TwoModeCovariance,
    /// The test uses first and second moments only; a positive kernel
    /// certifies entanglement of any state sharing them.
    pub note: String,
}

/// Gaussian negativity witness with block-replica uncertainty.
pub fn witness_report(outputs: &JointMomentTable, threshold_sigma: f64) -> Result<WitnessReport> {
    if !(threshold_sigma > 0.0) {
        return Err(invalid("threshold must be positive"));
    }
    let cov = moments_to_covariance(outputs)?;
    let physical = TwoModeCovariance::new(cov.state().clone()).is_ok();
    let kernel = negativity_kernel(cov.cov());
    // Block kernels are propagated linearly around the full-data covariance:
    // single blocks are often too noisy to be physical on their own.
    let kernel_error = if outputs.blocks.len() >= 2 {
        let grad = kernel_gradient(cov.cov());
        let ks: Vec<f64> = outputs
            .blocks
            .iter()
            .map(|b| moments_to_covariance(b).map(|c| kernel + (c.cov() - cov.cov()).component_mul(&grad).sum()))
            .collect::<Result<_>>()?;
        let n = ks.len() as f64;
        let mean = ks.iter().sum::<f64>() / n;
        let var = ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Some(var.sqrt() / n.sqrt()).filter(|e| e.is_finite())
    } else {
        None
    };
    let verdict = match kernel_error {
        None => Verdict::Withheld,
        Some(e) if kernel > threshold_sigma * e => Verdict::Entangled,
        Some(_) => Verdict::NotDetected,
    };
    Ok(WitnessReport {
        kernel,
        negativity: kernel.max(0.0),
        kernel_error,
        threshold_sigma,
        verdict,
        physical,
        covariance: cov,
        note: "verdict depends only on first and second moments; it holds for non-Gaussian states with the same moments".into(),
    })
}
