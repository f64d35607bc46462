//! Exact moments of Gaussian states by the Isserlis/Wick pairing theorem.
//!
//! Normally ordered moments of a Gaussian state are the moments of a formal
//! Gaussian with covariance `cov − I/2`, antinormally ordered ones use
//! `cov + I/2`, and commuting (measured) quadratures use `cov` itself. Every
//! product is a product of complex linear forms in the quadratures, so a
//! single pairing routine covers all cases.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::gaussian::GaussianState;
use crate::tables::{check_order, indices2, indices4, JointMomentTable, MomentTable, OperatorOrder};
use crate::C64;

/// Ordering convention that fixes the covariance shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ordering {
    Normal,
    Antinormal,
    /// Symmetric (Wigner) ordering; also the joint statistics of commuting observables.
    Symmetric,
}

impl From<OperatorOrder> for Ordering {
    fn from(o: OperatorOrder) -> Self {
        match o {
            OperatorOrder::Normal => Ordering::Normal,
            OperatorOrder::Antinormal => Ordering::Antinormal,
        }
    }
}

fn shifted_cov(cov: &DMatrix<f64>, ordering: Ordering) -> DMatrix<f64> {
    let n = cov.nrows();
    match ordering {
        Ordering::Normal => cov - DMatrix::identity(n, n) * 0.5,
        Ordering::Antinormal => cov + DMatrix::identity(n, n) * 0.5,
        Ordering::Symmetric => cov.clone(),
    }
}

/// Complex linear form `Σ_r c_r q_r` over the quadrature vector.
#[derive(Clone, Debug)]
pub struct LinearForm(pub Vec<C64>);

impl LinearForm {
    /// `a_k = (x_k + i p_k)/√2`.
    pub fn annihilation(dim: usize, mode: usize) -> Self {
        let mut c = vec![C64::new(0.0, 0.0); dim];
        c[2 * mode] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        c[2 * mode + 1] = C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        LinearForm(c)
    }

    pub fn creation(dim: usize, mode: usize) -> Self {
        Self::annihilation(dim, mode).conj()
    }

    pub fn conj(&self) -> Self {
        LinearForm(self.0.iter().map(|c| c.conj()).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        LinearForm(self.0.iter().map(|c| c * s).collect())
    }

    fn mean(&self, mean: &DVector<f64>) -> C64 {
        self.0.iter().zip(mean.iter()).map(|(c, m)| c * m).sum()
    }

    fn bilinear(&self, other: &LinearForm, cov: &DMatrix<f64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (r, cr) in self.0.iter().enumerate() {
            if cr.norm_sqr() == 0.0 {
                continue;
            }
            for (s, cs) in other.0.iter().enumerate() {
                acc += cr * cs * cov[(r, s)];
            }
        }
        acc
    }
}

/// `E[Π_i f_i(q)]` for `q ~ N(mean, cov)` (formal: `cov` may be indefinite).
///
/// Uses Stein's identity `E[Z1 F] = E[Z1] E[F] + Σ_j Cov(Z1, Zj) E[∂F/∂Zj]`,
/// memoized over subsets of factors.
pub fn gaussian_expectation(forms: &[&LinearForm], mean: &DVector<f64>, cov: &DMatrix<f64>) -> C64 {
    let n = forms.len();
    assert!(n <= 20, "too many factors for subset memoization");
    let mu: Vec<C64> = forms.iter().map(|f| f.mean(mean)).collect();
    let c: Vec<Vec<C64>> = forms.iter().map(|f| forms.iter().map(|g| f.bilinear(g, cov)).collect()).collect();
    expectation_from_moments(&mu, &c)
}

/// Same as [`gaussian_expectation`] with first moments and pair covariances given.
pub fn expectation_from_moments(mu: &[C64], c: &[Vec<C64>]) -> C64 {
    let n = mu.len();
    let mut memo: Vec<Option<C64>> = vec![None; 1 << n];
    fn rec(mask: usize, mu: &[C64], c: &[Vec<C64>], memo: &mut [Option<C64>]) -> C64 {
        if mask == 0 {
            return C64::new(1.0, 0.0);
        }
        if let Some(v) = memo[mask] {
            return v;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut v = mu[i] * rec(rest, mu, c, memo);
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if c[i][j] != C64::new(0.0, 0.0) {
                v += c[i][j] * rec(rest & !(1 << j), mu, c, memo);
            }
        }
        memo[mask] = Some(v);
        v
    }
    rec((1 << n) - 1, mu, c, &mut memo)
}

/// Normally ordered moments `⟨a†^l a^m⟩` of one mode up to order `k`.
pub fn wick_moments(state: &GaussianState, mode: usize, k: usize) -> Result<MomentTable> {
    wick_moments_ordered(state, mode, k, OperatorOrder::Normal)
}

/// Single-mode table in the requested ordering. For `Antinormal`, entry
/// `(l, m)` is `⟨a^l a†^m⟩`.
pub fn wick_moments_ordered(state: &GaussianState, mode: usize, k: usize, order: OperatorOrder) -> Result<MomentTable> {
    check_order(k)?;
    state.check_mode(mode)?;
    let single = state.reduced(&[mode])?;
    let cov = shifted_cov(single.cov(), order.into());
    let a = LinearForm::annihilation(2, 0);
    let ad = LinearForm::creation(2, 0);
    let mut t = MomentTable::new(k, order);
    for (l, m) in indices2(k) {
        if (l, m) == (0, 0) {
            continue;
        }
        // the ordering is carried by the covariance shift, so only the
        // multiset of factors matters
        let (f, g) = match order {
            OperatorOrder::Normal => (&ad, &a),
            OperatorOrder::Antinormal => (&a, &ad),
        };
        let forms: Vec<&LinearForm> = std::iter::repeat_n(f, l).chain(std::iter::repeat_n(g, m)).collect();
        t.set(l, m, gaussian_expectation(&forms, single.mean(), &cov));
    }
    Ok(t)
}

/// Joint table over two modes of `state`.
///
/// `Normal`: `⟨a1†^l1 a1^m1 a2†^l2 a2^m2⟩`; `Antinormal`:
/// `⟨a1^l1 a1†^m1 a2^l2 a2†^m2⟩`.
pub fn wick_joint_moments(state: &GaussianState, modes: [usize; 2], k: usize, order: OperatorOrder) -> Result<JointMomentTable> {
    check_order(k)?;
    let pair = state.reduced(&modes)?;
    let cov = shifted_cov(pair.cov(), order.into());
    let a1 = LinearForm::annihilation(4, 0);
    let a2 = LinearForm::annihilation(4, 1);
    let (c1, c2) = (a1.conj(), a2.conj());
    // first/second index of each channel refer to (dagger, plain) for normal
    // order and (plain, dagger) for antinormal; Wick does not care about the
    // position, only the multiset of factors.
    let (f1, g1, f2, g2) = match order {
        OperatorOrder::Normal => (&c1, &a1, &c2, &a2),
        OperatorOrder::Antinormal => (&a1, &c1, &a2, &c2),
    };
    Ok(JointMomentTable::from_fn(k, |[l1, m1, l2, m2]| {
        let forms: Vec<&LinearForm> = std::iter::repeat_n(f1, l1)
            .chain(std::iter::repeat_n(g1, m1))
            .chain(std::iter::repeat_n(f2, l2))
            .chain(std::iter::repeat_n(g2, m2))
            .collect();
        gaussian_expectation(&forms, pair.mean(), &cov)
    }))
}

/// Moments `E[conj(s1)^l1 s1^m1 conj(s2)^l2 s2^m2]` of commuting complex
/// random variables `s_k = (x_k + i p_k) · scale_k` whose real quadratures
/// are jointly Gaussian with the given mean and covariance.
pub fn classical_joint_moments(state: &GaussianState, scales: &[f64], k: usize) -> Result<JointMomentTable> {
    check_order(k)?;
    let dim = state.mean().len();
    let channels = dim / 2;
    if scales.len() != channels || !(1..=2).contains(&channels) {
        return Err(crate::error::invalid("classical moments need one scale per channel (1 or 2 channels)"));
    }
    // s_k = √2 · scale_k · a_k in terms of the formal annihilation form.
    let s: Vec<LinearForm> = (0..channels)
        .map(|c| LinearForm::annihilation(dim, c).scaled(std::f64::consts::SQRT_2 * scales[c]))
        .collect();
    let sc: Vec<LinearForm> = s.iter().map(LinearForm::conj).collect();
    let cov = state.cov();
    let mut t = JointMomentTable::new(k);
    for idx @ [l1, m1, l2, m2] in indices4(k) {
        if idx == [0; 4] || (channels == 1 && l2 + m2 > 0) {
            continue;
        }
        let mut forms: Vec<&LinearForm> = std::iter::repeat_n(&sc[0], l1).chain(std::iter::repeat_n(&s[0], m1)).collect();
        if channels == 2 {
            forms.extend(std::iter::repeat_n(&sc[1], l2).chain(std::iter::repeat_n(&s[1], m2)));
        }
        t.set(idx, gaussian_expectation(&forms, state.mean(), cov));
    }
    Ok(t)
}
