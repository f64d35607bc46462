//! Linear detection chain: beam splitter, phase-insensitive amplifiers,
//! optional loss and IQ mixers acting on Gaussian states.
//!
//! Every chain output is a real-linear combination of independent source
//! modes (signal, ancilla, amplifier noise, mixer ancilla, loss bath). The
//! measured covariance is obtained in one congruence from the source
//! covariance, and the noise modes seen by each envelope are read off the
//! same combinations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussian::GaussianState;
use crate::tables::{MomentTable, OperatorOrder, MAX_ORDER};
use crate::wick::wick_moments_ordered;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPlacement {
    BeforeAmp,
    AfterAmp,
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub g1: f64,
    pub g2: f64,
    pub n_amp1: f64,
    pub n_amp2: f64,
    pub n_anc: f64,
    pub n_iq1: f64,
    pub n_iq2: f64,
    pub eta: Option<f64>,
    pub loss_placement: LossPlacement,
    pub loss_n: f64,
    /// Drop the mixer-ancilla contribution from the reference noise tables.
    pub large_gain_approx: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            g1: 1e4,
            g2: 1e4,
            n_amp1: 10.0,
            n_amp2: 10.0,
            n_anc: 0.0,
            n_iq1: 0.0,
            n_iq2: 0.0,
            eta: None,
            loss_placement: LossPlacement::None,
            loss_n: 0.0,
            large_gain_approx: false,
        }
    }
}

fn check_occupation(name: &str, n: f64) -> Result<()> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(invalid(format!("{name} must be finite and >= 0, got {n}")));
    }
    Ok(())
}

fn check_gain(g: f64) -> Result<()> {
    if !(g > 1.0) || !g.is_finite() {
        return Err(invalid(format!("gain must be finite and > 1, got {g}")));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid(format!("loss factor must lie in (0, 1), got {eta}")));
    }
    Ok(())
}

impl ChainConfig {
    /// Same gain and amplifier noise on both chains.
    pub fn symmetric(g: f64, n_amp: f64) -> Self {
        ChainConfig { g1: g, g2: g, n_amp1: n_amp, n_amp2: n_amp, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_gain(self.g1)?;
        check_gain(self.g2)?;
        for (name, n) in [
            ("n_amp1", self.n_amp1),
            ("n_amp2", self.n_amp2),
            ("n_anc", self.n_anc),
            ("n_iq1", self.n_iq1),
            ("n_iq2", self.n_iq2),
            ("loss_n", self.loss_n),
        ] {
            check_occupation(name, n)?;
        }
        match (self.loss_placement, self.eta) {
            (LossPlacement::None, None) => {}
            (LossPlacement::None, Some(_)) => return Err(invalid("eta given but loss_placement is none")),
            (_, None) => return Err(invalid("loss_placement requires eta")),
            (_, Some(eta)) => {
                check_eta(eta)?;
                for g in [self.g1, self.g2] {
                    if g * eta <= 1.0 {
                        return Err(invalid(format!("effective gain g*eta = {} must exceed 1", g * eta)));
                    }
                }
            }
        }
        Ok(())
    }

    fn eta_or_one(&self) -> f64 {
        match self.loss_placement {
            LossPlacement::None => 1.0,
            _ => self.eta.unwrap_or(1.0),
        }
    }

    /// Per-chain gain applied to the signal, `g_k·η`.
    pub fn effective_gains(&self) -> [f64; 2] {
        let eta = self.eta_or_one();
        [self.g1 * eta, self.g2 * eta]
    }
}

#[derive(Clone, Copy, Debug)]
struct Term {
    mode: usize,
    coef: f64,
    dagger: bool,
}

/// `Σ coef · b` or `coef · b†` over source modes.
#[derive(Clone, Debug, Default)]
struct Combo(Vec<Term>);

impl Combo {
    fn mode(mode: usize) -> Self {
        Combo(vec![Term { mode, coef: 1.0, dagger: false }])
    }

    fn dag(&self) -> Self {
        Combo(self.0.iter().map(|t| Term { dagger: !t.dagger, ..*t }).collect())
    }

    fn scale(&self, s: f64) -> Self {
        Combo(self.0.iter().map(|t| Term { coef: t.coef * s, ..*t }).collect())
    }

    fn plus(mut self, other: &Combo) -> Self {
        self.0.extend_from_slice(&other.0);
        self
    }

    fn without(&self, modes: &[usize]) -> Self {
        Combo(self.0.iter().filter(|t| !modes.contains(&t.mode)).copied().collect())
    }

    /// Rows mapping source quadratures to `(x_O, p_O)` of `O = self`.
    fn quadrature_rows(&self, dim: usize) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(2, dim);
        for t in &self.0 {
            l[(0, 2 * t.mode)] += t.coef;
            l[(1, 2 * t.mode + 1)] += if t.dagger { -t.coef } else { t.coef };
        }
        l
    }
}

/// Single-mode state of a derived mode (which must be canonical).
fn derived_state(sources: &GaussianState, combo: &Combo) -> Result<GaussianState> {
    sources.affine(&combo.quadrature_rows(sources.mean().len()), None, None)
}

fn antinormal_table(sources: &GaussianState, combo: &Combo) -> Result<MomentTable> {
    wick_moments_ordered(&derived_state(sources, combo)?, 0, MAX_ORDER, OperatorOrder::Antinormal)
}

struct ChainModes {
    amp: usize,
    iq: usize,
    loss: usize,
}

/// Mode after loss and amplification (no mixer), plus the effective gain.
fn amplified(c: Combo, g: f64, cfg: &ChainConfig, modes: &ChainModes) -> (Combo, f64) {
    let eta = cfg.eta_or_one();
    let lossy = |c: Combo| c.scale(eta.sqrt()).plus(&Combo::mode(modes.loss).scale((1.0 - eta).sqrt()));
    let mut c = c;
    if cfg.loss_placement == LossPlacement::BeforeAmp {
        c = lossy(c);
    }
    c = c.scale(g.sqrt()).plus(&Combo::mode(modes.amp).dag().scale((g - 1.0).sqrt()));
    if cfg.loss_placement == LossPlacement::AfterAmp {
        c = lossy(c);
    }
    (c, g * eta)
}

/// Noise mode `V` of the envelope `S = c + V†`, given the mixer output `z`.
fn noise_mode(z: &Combo, g_eff: f64, signal_modes: &[usize], modes: &ChainModes, large_gain: bool) -> Combo {
    let v = z.without(signal_modes).dag().scale(1.0 / g_eff.sqrt());
    if large_gain {
        v.without(&[modes.iq]).scale(1.0 / (1.0 - 1.0 / g_eff).sqrt())
    } else {
        v
    }
}

/// Antinormally ordered moments `⟨V^r V†^s⟩` of the effective amplifier
/// noise mode once loss is folded into an effective gain `g·η`.
pub fn effective_noise_moments(g: f64, eta: f64, placement: LossPlacement, n_loss: f64, n_amp: f64, k: usize) -> Result<MomentTable> {
    check_gain(g)?;
    check_occupation("n_loss", n_loss)?;
    check_occupation("n_amp", n_amp)?;
    let cfg = ChainConfig {
        g1: g,
        g2: g,
        eta: (placement != LossPlacement::None).then_some(eta),
        loss_placement: placement,
        loss_n: n_loss,
        n_amp1: n_amp,
        n_amp2: n_amp,
        ..Default::default()
    };
    cfg.validate()?;
    // sources: signal (vacuum, irrelevant), amp noise, mixer ancilla, loss bath
    let sources = GaussianState::tensor_all(&[
        GaussianState::vacuum(1)?,
        GaussianState::thermal(n_amp)?,
        GaussianState::vacuum(1)?,
        GaussianState::thermal(n_loss)?,
    ])?;
    let modes = ChainModes { amp: 1, iq: 2, loss: 3 };
    let (c, g_eff) = amplified(Combo::mode(0), g, &cfg, &modes);
    let v = noise_mode(&c.plus(&Combo::mode(modes.iq).dag()), g_eff, &[0], &modes, true);
    Ok(antinormal_table(&sources, &v)?.truncated(k))
}

/// Gaussian description of one detection setup plus its reference moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionModel {
    /// Raw measured quadratures `(x1, p1[, x2, p2])`; `x_k + i p_k = √g_k · S_k`.
    pub measured: GaussianState,
    /// Effective gain per chain used to form envelopes.
    pub gains: Vec<f64>,
    /// Normally ordered moments of the signal.
    pub truth_signal: MomentTable,
    /// Normally ordered moments of the beam-splitter ancilla (dual path only).
    pub truth_ancilla: Option<MomentTable>,
    /// Antinormally ordered moments of each chain's noise mode.
    pub truth_noise: Vec<MomentTable>,
    pub config: ChainConfig,
}

impl DetectionModel {
    pub fn num_chains(&self) -> usize {
        self.gains.len()
    }
}

/// Measured quadratures of `z = c + iq†` with `x + ip = z`.
fn measured_rows(z: &Combo, dim: usize) -> DMatrix<f64> {
    z.quadrature_rows(dim) * std::f64::consts::FRAC_1_SQRT_2
}

fn require_single_mode(input: &GaussianState) -> Result<()> {
    if input.num_modes() != 1 {
        return Err(invalid(format!("input must be single-mode, got {} modes", input.num_modes())));
    }
    Ok(())
}

const SIGNAL: usize = 0;
const ANCILLA: usize = 1;

/// Dual-path setup: the input and a thermal ancilla meet on a balanced beam
/// splitter, and each output runs through its own amplifier chain and mixer.
pub fn build_dual_path(input: &GaussianState, config: &ChainConfig) -> Result<DetectionModel> {
    require_single_mode(input)?;
    config.validate()?;
    // signal, ancilla, amp1, amp2, iq1, iq2, loss1, loss2
    let sources = GaussianState::tensor_all(&[
        input.clone(),
        GaussianState::thermal(config.n_anc)?,
        GaussianState::thermal(config.n_amp1)?,
        GaussianState::thermal(config.n_amp2)?,
        GaussianState::thermal(config.n_iq1)?,
        GaussianState::thermal(config.n_iq2)?,
        GaussianState::thermal(config.loss_n)?,
        GaussianState::thermal(config.loss_n)?,
    ])?;
    let dim = sources.mean().len();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c1 = Combo::mode(SIGNAL).scale(h).plus(&Combo::mode(ANCILLA).scale(h));
    let c2 = Combo::mode(SIGNAL).scale(-h).plus(&Combo::mode(ANCILLA).scale(h));
    let chains = [
        (c1, config.g1, ChainModes { amp: 2, iq: 4, loss: 6 }),
        (c2, config.g2, ChainModes { amp: 3, iq: 5, loss: 7 }),
    ];
    let mut rows = DMatrix::zeros(4, dim);
    let mut gains = Vec::new();
    let mut noise = Vec::new();
    for (k, (c, g, modes)) in chains.into_iter().enumerate() {
        let (c, g_eff) = amplified(c, g, config, &modes);
        let z = c.plus(&Combo::mode(modes.iq).dag());
        rows.view_mut((2 * k, 0), (2, dim)).copy_from(&measured_rows(&z, dim));
        let v = noise_mode(&z, g_eff, &[SIGNAL, ANCILLA], &modes, config.large_gain_approx);
        noise.push(antinormal_table(&sources, &v)?);
        gains.push(g_eff);
    }
    Ok(DetectionModel {
        measured: sources.affine(&rows, None, None)?,
        gains,
        truth_signal: wick_moments_ordered(&sources, SIGNAL, MAX_ORDER, OperatorOrder::Normal)?,
        truth_ancilla: Some(wick_moments_ordered(&sources, ANCILLA, MAX_ORDER, OperatorOrder::Normal)?),
        truth_noise: noise,
        config: config.clone(),
    })
}

/// Single chain (loss, amplifier, mixer) with no beam splitter. Uses the
/// first-chain parameters of `config`.
pub fn build_single_path(input: &GaussianState, config: &ChainConfig) -> Result<DetectionModel> {
    require_single_mode(input)?;
    config.validate()?;
    let sources = GaussianState::tensor_all(&[
        input.clone(),
        GaussianState::thermal(config.n_amp1)?,
        GaussianState::thermal(config.n_iq1)?,
        GaussianState::thermal(config.loss_n)?,
    ])?;
    let dim = sources.mean().len();
    let modes = ChainModes { amp: 1, iq: 2, loss: 3 };
    let (c, g_eff) = amplified(Combo::mode(SIGNAL), config.g1, config, &modes);
    let z = c.plus(&Combo::mode(modes.iq).dag());
    let v = noise_mode(&z, g_eff, &[SIGNAL], &modes, config.large_gain_approx);
    Ok(DetectionModel {
        measured: sources.affine(&measured_rows(&z, dim), None, None)?,
        gains: vec![g_eff],
        truth_signal: wick_moments_ordered(&sources, SIGNAL, MAX_ORDER, OperatorOrder::Normal)?,
        truth_ancilla: None,
        truth_noise: vec![antinormal_table(&sources, &v)?],
        config: config.clone(),
    })
}

fn embed_mode_map(state: &GaussianState, mode: usize, block: [[f64; 2]; 2]) -> Result<DMatrix<f64>> {
    state.check_mode(mode)?;
    let n = state.mean().len();
    let mut t = DMatrix::identity(n, n);
    for r in 0..2 {
        for c in 0..2 {
            t[(2 * mode + r, 2 * mode + c)] = block[r][c];
        }
    }
    Ok(t)
}

fn require_single(noise: &GaussianState, what: &str) -> Result<()> {
    if noise.num_modes() != 1 {
        return Err(invalid(format!("{what} must be a single-mode state")));
    }
    Ok(())
}

/// Balanced beam splitter on `(a, v)`: `a1 = (a + v)/√2`, `a2 = (−a + v)/√2`.
pub fn beam_splitter(state: &GaussianState) -> Result<GaussianState> {
    if state.num_modes() != 2 {
        return Err(invalid(format!("beam splitter needs exactly 2 modes, got {}", state.num_modes())));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    #[rustfmt::skip]
    let t = DMatrix::from_row_slice(4, 4, &[
        h, 0.0, h, 0.0,
        0.0, h, 0.0, h,
        -h, 0.0, h, 0.0,
        0.0, -h, 0.0, h,
    ]);
    state.affine(&t, None, None)
}

/// Phase-insensitive amplifier `a' = √g a + √(g−1) h†` on one mode.
pub fn amplifier(state: &GaussianState, mode: usize, g: f64, noise: &GaussianState) -> Result<GaussianState> {
    check_gain(g)?;
    require_single(noise, "amplifier noise")?;
    let s = g.sqrt();
    let t = embed_mode_map(state, mode, [[s, 0.0], [0.0, s]])?;
    let z = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
    add_mode_noise(state, mode, &t, &z, g - 1.0, noise)
}

/// Beam-splitter loss `b = √η b + √(1−η) h_loss` on one mode.
pub fn loss(state: &GaussianState, mode: usize, eta: f64, env: &GaussianState) -> Result<GaussianState> {
    check_eta(eta)?;
    require_single(env, "loss environment")?;
    let s = eta.sqrt();
    let t = embed_mode_map(state, mode, [[s, 0.0], [0.0, s]])?;
    add_mode_noise(state, mode, &t, &DMatrix::identity(2, 2), 1.0 - eta, env)
}

fn add_mode_noise(state: &GaussianState, mode: usize, t: &DMatrix<f64>, z: &DMatrix<f64>, weight: f64, noise: &GaussianState) -> Result<GaussianState> {
    let n = state.mean().len();
    let mut shift = DVector::zeros(n);
    let mut extra = DMatrix::zeros(n, n);
    let mu = z * noise.mean() * weight.sqrt();
    let cov = z * noise.cov() * z * weight;
    shift.rows_mut(2 * mode, 2).copy_from(&mu);
    extra.view_mut((2 * mode, 2 * mode), (2, 2)).copy_from(&cov);
    state.affine(t, Some(&shift), Some(&extra))
}

/// Heterodyne readout of every mode of `state` with one mixer ancilla per
/// mode: `x + ip = a + v_iq†`. The result is the classical distribution of
/// the commuting measured quadratures.
pub fn iq_detect(state: &GaussianState, iq: &[GaussianState]) -> Result<GaussianState> {
    let m = state.num_modes();
    if iq.len() != m {
        return Err(invalid(format!("need {m} mixer ancillas, got {}", iq.len())));
    }
    for s in iq {
        require_single(s, "mixer ancilla")?;
    }
    let mut all = state.clone();
    for s in iq {
        all = all.tensor(s);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = DMatrix::zeros(2 * m, 4 * m);
    for k in 0..m {
        t[(2 * k, 2 * k)] = h;
        t[(2 * k + 1, 2 * k + 1)] = h;
        t[(2 * k, 2 * (m + k))] = h;
        t[(2 * k + 1, 2 * (m + k) + 1)] = -h;
    }
    all.affine(&t, None, None)
}
