//! Gaussian states over `M` bosonic modes in quadrature representation.
//!
//! Quadratures are ordered `x1, p1, ..., xM, pM` with `x = (a + a†)/√2` and
//! `p = -i(a - a†)/√2`, so the vacuum has variance 1/2 per quadrature.
//! The squeeze operator convention is `S(ξ) = exp((ξ* a² − ξ a†²)/2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::C64;

/// Tolerance on the symplectic positivity check.
pub const PHYSICAL_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Validated constructor: the covariance must be symmetric and satisfy
    /// `cov + iΩ/2 ≥ 0`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let s = Self::unchecked(mean, cov)?;
        // real embedding [[Σ, −Ω/2], [Ω/2, Σ]] of the Hermitian Σ + iΩ/2
        let d = s.cov.nrows();
        let half_omega = symplectic_form(d / 2) * 0.5;
        let mut h = DMatrix::zeros(2 * d, 2 * d);
        h.view_mut((0, 0), (d, d)).copy_from(&s.cov);
        h.view_mut((d, d), (d, d)).copy_from(&s.cov);
        h.view_mut((0, d), (d, d)).copy_from(&(-&half_omega));
        h.view_mut((d, 0), (d, d)).copy_from(&half_omega);
        let min = h.symmetric_eigenvalues().min();
        if min < -PHYSICAL_TOL * s.cov.amax().max(1.0) {
            return Err(Error::Unphysical(format!("cov + iΩ/2 has eigenvalue {min:.3e} < 0")));
        }
        Ok(s)
    }

    /// Shape and symmetry checks only. Used for partially transposed and
    /// other non-physical intermediate matrices.
    pub fn unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || n % 2 != 0 {
            return Err(invalid(format!("mean length {n} is not a positive even number")));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(invalid(format!("covariance is {}x{}, expected {n}x{n}", cov.nrows(), cov.ncols())));
        }
        let cov = symmetrized(&cov)?;
        Ok(GaussianState { mean, cov })
    }

    pub fn vacuum(num_modes: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(invalid("vacuum needs at least one mode"));
        }
        let n = 2 * num_modes;
        Ok(GaussianState { mean: DVector::zeros(n), cov: DMatrix::identity(n, n) * 0.5 })
    }

    pub fn thermal(n: f64) -> Result<Self> {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(invalid(format!("thermal occupation must be finite and >= 0, got {n}")));
        }
        Ok(GaussianState { mean: DVector::zeros(2), cov: DMatrix::identity(2, 2) * (n + 0.5) })
    }

    /// `S(ξ)|0⟩`; `⟨a²⟩ = −e^{iθ} sinh r cosh r`, `⟨a†a⟩ = sinh² r` for `ξ = r e^{iθ}`.
    pub fn squeezed_vacuum(xi: C64) -> Self {
        let (r, theta) = xi.to_polar();
        let a2 = -C64::from_polar(r.sinh() * r.cosh(), theta);
        Self::single_mode(C64::new(0.0, 0.0), r.sinh().powi(2), a2)
    }

    /// Displaced vacuum `|α⟩`.
    pub fn coherent(alpha: C64) -> Self {
        Self::single_mode(alpha, 0.0, C64::new(0.0, 0.0))
    }

    /// Single-mode Gaussian from its first moment `⟨a⟩` and central normally
    /// ordered second moments `⟨δa†δa⟩`, `⟨δa²⟩`. Not validated.
    pub(crate) fn single_mode(alpha: C64, n_central: f64, a2_central: C64) -> Self {
        let s2 = std::f64::consts::SQRT_2;
        let mean = DVector::from_vec(vec![s2 * alpha.re, s2 * alpha.im]);
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[
                n_central + 0.5 + a2_central.re,
                a2_central.im,
                a2_central.im,
                n_central + 0.5 - a2_central.re,
            ],
        );
        GaussianState { mean, cov }
    }

    pub fn tensor(&self, other: &GaussianState) -> GaussianState {
        let (n1, n2) = (self.mean.len(), other.mean.len());
        let mut mean = DVector::zeros(n1 + n2);
        mean.rows_mut(0, n1).copy_from(&self.mean);
        mean.rows_mut(n1, n2).copy_from(&other.mean);
        let mut cov = DMatrix::zeros(n1 + n2, n1 + n2);
        cov.view_mut((0, 0), (n1, n1)).copy_from(&self.cov);
        cov.view_mut((n1, n1), (n2, n2)).copy_from(&other.cov);
        GaussianState { mean, cov }
    }

    pub fn tensor_all(states: &[GaussianState]) -> Result<GaussianState> {
        let (first, rest) = states.split_first().ok_or_else(|| invalid("no states to combine"))?;
        Ok(rest.iter().fold(first.clone(), |acc, s| acc.tensor(s)))
    }

    pub fn num_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.num_modes() {
            return Err(invalid(format!("mode {mode} out of range for {}-mode state", self.num_modes())));
        }
        Ok(())
    }

    /// Reduced state of the listed modes, in the given order.
    pub fn reduced(&self, modes: &[usize]) -> Result<GaussianState> {
        for &m in modes {
            self.check_mode(m)?;
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.cov[(idx[r], idx[c])]);
        Ok(GaussianState { mean, cov })
    }

    /// Affine quadrature map `r -> T r + d` followed by additive noise `N`:
    /// `mean' = T mean + d`, `cov' = T cov Tᵀ + N`. Not validated.
    pub fn affine(&self, t: &DMatrix<f64>, shift: Option<&DVector<f64>>, noise: Option<&DMatrix<f64>>) -> Result<GaussianState> {
        if t.ncols() != self.mean.len() {
            return Err(invalid("affine map has wrong input dimension"));
        }
        let mut mean = t * &self.mean;
        if let Some(d) = shift {
            mean += d;
        }
        let mut cov = t * &self.cov * t.transpose();
        if let Some(n) = noise {
            cov += n;
        }
        GaussianState::unchecked(mean, cov)
    }

    /// `⟨a†a⟩` of one mode.
    pub fn photon_number(&self, mode: usize) -> Result<f64> {
        self.check_mode(mode)?;
        let (x, p) = (2 * mode, 2 * mode + 1);
        let second = self.cov[(x, x)] + self.cov[(p, p)] + self.mean[x].powi(2) + self.mean[p].powi(2);
        Ok(0.5 * (second - 1.0))
    }

    pub fn total_photon_number(&self) -> f64 {
        (0..self.num_modes()).map(|m| self.photon_number(m).unwrap_or(0.0)).sum()
    }

    /// Variance of `cos θ x + sin θ p` for one mode.
    pub fn quadrature_variance(&self, mode: usize, theta: f64) -> Result<f64> {
        self.check_mode(mode)?;
        let (x, p) = (2 * mode, 2 * mode + 1);
        let (s, c) = theta.sin_cos();
        Ok(c * c * self.cov[(x, x)] + 2.0 * c * s * self.cov[(x, p)] + s * s * self.cov[(p, p)])
    }

    /// Angle in `[0, π)` of the minimum-variance quadrature.
    pub fn min_variance_angle(&self, mode: usize) -> Result<f64> {
        self.check_mode(mode)?;
        let (x, p) = (2 * mode, 2 * mode + 1);
        let (sxx, spp, sxp) = (self.cov[(x, x)], self.cov[(p, p)], self.cov[(x, p)]);
        let theta = 0.5 * (2.0 * sxp).atan2(sxx - spp) + std::f64::consts::FRAC_PI_2;
        Ok(theta.rem_euclid(std::f64::consts::PI))
    }

    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        symplectic_eigenvalues(&self.cov)
    }

    pub fn max_abs_diff(&self, other: &GaussianState) -> f64 {
        if self.mean.len() != other.mean.len() {
            return f64::INFINITY;
        }
        let dm = (&self.mean - &other.mean).amax();
        let dc = (&self.cov - &other.cov).amax();
        dm.max(dc)
    }
}

/// Squeezing relative to vacuum in dB: `10 log10(0.5 / variance)`.
pub fn squeezing_db(min_variance: f64) -> f64 {
    10.0 * (0.5 / min_variance).log10()
}

fn symmetrized(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.amax().max(1.0);
    let asym = (cov - cov.transpose()).amax();
    if !asym.is_finite() || asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok((cov + cov.transpose()) * 0.5)
}

/// Block-diagonal symplectic form for `M` modes in `x1,p1,...` ordering.
pub fn symplectic_form(num_modes: usize) -> DMatrix<f64> {
    let n = 2 * num_modes;
    let mut omega = DMatrix::zeros(n, n);
    for k in 0..num_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues: moduli of the spectrum of `iΩ·cov`, which comes in
/// `±ν` pairs; returned as `M` values in ascending order.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = cov.nrows();
    if n == 0 || n % 2 != 0 || cov.ncols() != n {
        return Err(invalid(format!("covariance must be 2M x 2M, got {}x{}", n, cov.ncols())));
    }
    let cov = symmetrized(cov)?;
    let omega = symplectic_form(n / 2);
    let mut moduli: Vec<f64> = (omega * cov).complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    Ok(moduli.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRepr {
    num_modes: usize,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl Serialize for GaussianState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateRepr {
            num_modes: self.num_modes(),
            mean: self.mean.iter().copied().collect(),
            cov: self.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = StateRepr::deserialize(d)?;
        let n = 2 * r.num_modes;
        if r.mean.len() != n || r.cov.len() != n || r.cov.iter().any(|row| row.len() != n) {
            return Err(D::Error::custom("state dimensions do not match num_modes"));
        }
        let cov = DMatrix::from_row_iterator(n, n, r.cov.into_iter().flatten());
        GaussianState::unchecked(DVector::from_vec(r.mean), cov).map_err(D::Error::custom)
    }
}
