//! Monte-Carlo comparison of the dual-path and single-path reconstructions
//! at equal measurement budget, and the scaling-law fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{build_dual_path, build_single_path, ChainConfig};
use crate::error::{invalid, Error, Result};
use crate::estimate::{envelope_shots, moments_from_envelopes};
use crate::gaussian::GaussianState;
use crate::math::{linear_fit, mix_seed};
use crate::reconstruction::{dpm_reconstruct, spm_reconstruct, AncillaPrior, SpmOptions};
use crate::sampler::sample;
use crate::tables::{check_order, indices2};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonGrid {
    pub n_values: Vec<usize>,
    pub n_amp_values: Vec<f64>,
    /// `(l, m)` targets, `1 ≤ l + m ≤ 4`.
    pub moments: Vec<(usize, usize)>,
    pub repeats: usize,
    pub blocks: usize,
    pub seed: u64,
    /// Chain used by both methods; `n_amp1`/`n_amp2` are replaced per cell.
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub spm: SpmOptions,
}

/// Every `(l, m)` with `1 ≤ l + m ≤ k`.
pub fn all_moments(k: usize) -> Vec<(usize, usize)> {
    indices2(k).filter(|&(l, m)| l + m > 0).collect()
}

impl ComparisonGrid {
    /// Full protocol: 5000 repetitions in 20 blocks.
    pub fn full() -> Self {
        ComparisonGrid {
            n_values: vec![10_000],
            n_amp_values: vec![10.0],
            moments: all_moments(4),
            repeats: 5000,
            blocks: 20,
            seed: 1,
            chain: ChainConfig::default(),
            spm: SpmOptions::default(),
        }
    }

    /// Same protocol with 500 repetitions.
    pub fn scaled() -> Self {
        ComparisonGrid { repeats: 500, ..Self::full() }
    }

    pub fn max_order(&self) -> usize {
        self.moments.iter().map(|(l, m)| l + m).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_amp_values.is_empty() || self.moments.is_empty() {
            return Err(invalid("grid needs at least one N, one n_amp and one moment"));
        }
        if self.blocks < 2 || self.repeats % self.blocks != 0 || self.repeats / self.blocks < 2 {
            return Err(invalid(format!("{} repetitions cannot form {} blocks of at least 2", self.repeats, self.blocks)));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(invalid(format!("N = {n} is too small")));
        }
        if self.moments.iter().any(|&(l, m)| l + m == 0) {
            return Err(invalid("moment (0,0) is not a target"));
        }
        check_order(self.max_order())?;
        for &n_amp in &self.n_amp_values {
            self.cell_chain(n_amp).validate()?;
        }
        Ok(())
    }

    fn cell_chain(&self, n_amp: f64) -> ChainConfig {
        ChainConfig { n_amp1: n_amp, n_amp2: n_amp, ..self.chain.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub l: usize,
    pub m: usize,
    pub n_shots: usize,
    pub n_amp: f64,
    /// Mean over blocks of `σ_DP / σ_SP`.
    pub ratio: f64,
    /// Spread of the block ratios over `√B`.
    pub ratio_err: f64,
    /// Standard deviations over all repetitions.
    pub sigma_dp: f64,
    pub sigma_sp: f64,
    /// Single-channel measurements consumed per repetition by each method.
    pub budget_dp: usize,
    pub budget_sp: usize,
}

impl RatioRow {
    pub fn order(&self) -> usize {
        self.l + self.m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub grid: ComparisonGrid,
    pub rows: Vec<RatioRow>,
}

impl RatioTable {
    pub fn row(&self, l: usize, m: usize, n_shots: usize, n_amp: f64) -> Option<&RatioRow> {
        self.rows.iter().find(|r| r.l == l && r.m == m && r.n_shots == n_shots && r.n_amp == n_amp)
    }

    /// Plot-ready CSV, one row per (moment, grid cell).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("l,m,order,n_shots,n_amp,ratio,ratio_err,sigma_dp,sigma_sp\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.l,
                r.m,
                r.order(),
                r.n_shots,
                r.n_amp,
                r.ratio,
                r.ratio_err,
                r.sigma_dp,
                r.sigma_sp
            ));
        }
        s
    }
}

/// `sqrt(var Re + var Im)` with the unbiased variance.
pub fn complex_std(xs: &[C64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<C64>() / n;
    (xs.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (n - 1.0)).sqrt()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// One repetition: DPM on `N` dual-channel shots, SPM on `N` reference plus
/// `N` signal shots. Returns the target moments for each method.
fn repetition(
    grid: &ComparisonGrid,
    dual: &crate::chain::DetectionModel,
    single_sig: &crate::chain::DetectionModel,
    single_ref: &crate::chain::DetectionModel,
    n: usize,
    seeds: [u64; 3],
) -> Result<(Vec<C64>, Vec<C64>)> {
    let k = grid.max_order();
    let env = moments_from_envelopes(&envelope_shots(&sample(dual, n, seeds[0])?)?, k, 1)?;
    let prior = AncillaPrior::thermal(grid.chain.n_anc);
    let dp = dpm_reconstruct(&env, &prior, k)?;
    let ref_env = moments_from_envelopes(&envelope_shots(&sample(single_ref, n, seeds[1])?)?, k, 1)?;
    let sig_env = moments_from_envelopes(&envelope_shots(&sample(single_sig, n, seeds[2])?)?, k, 1)?;
    let sp = spm_reconstruct(&sig_env, &ref_env, single_sig.gains[0], C64::new(0.0, 0.0), grid.spm, k)?;
    let pick = |t: &crate::tables::MomentTable| grid.moments.iter().map(|&(l, m)| t.value(l, m)).collect::<Result<Vec<_>>>();
    Ok((pick(&dp.signal)?, pick(&sp.signal)?))
}

pub fn run_comparison(grid: &ComparisonGrid, input: &GaussianState) -> Result<RatioTable> {
    grid.validate()?;
    let mut rows = Vec::new();
    let vacuum = GaussianState::vacuum(1)?;
    for &n_amp in &grid.n_amp_values {
        let chain = grid.cell_chain(n_amp);
        let dual = build_dual_path(input, &chain)?;
        let single_sig = build_single_path(input, &chain)?;
        let single_ref = build_single_path(&vacuum, &chain)?;
        for &n in &grid.n_values {
            let cell = mix_seed(grid.seed, &[n as u64, n_amp.to_bits()]);
            let reps: Vec<(Vec<C64>, Vec<C64>)> = (0..grid.repeats)
                .into_par_iter()
                .map(|r| {
                    let seeds = [0, 1, 2].map(|s| mix_seed(cell, &[r as u64, s]));
                    repetition(grid, &dual, &single_sig, &single_ref, n, seeds)
                })
                .collect::<Result<_>>()?;
            let per_block = grid.repeats / grid.blocks;
            for (t, &(l, m)) in grid.moments.iter().enumerate() {
                let dp: Vec<C64> = reps.iter().map(|r| r.0[t]).collect();
                let sp: Vec<C64> = reps.iter().map(|r| r.1[t]).collect();
                let ratios: Vec<f64> = dp
                    .chunks(per_block)
                    .zip(sp.chunks(per_block))
                    .map(|(d, s)| complex_std(d) / complex_std(s))
                    .collect();
                let (ratio, spread) = mean_std(&ratios);
                rows.push(RatioRow {
                    l,
                    m,
                    n_shots: n,
                    n_amp,
                    ratio,
                    ratio_err: spread / (grid.blocks as f64).sqrt(),
                    sigma_dp: complex_std(&dp),
                    sigma_sp: complex_std(&sp),
                    budget_dp: 2 * n,
                    budget_sp: n + n,
                });
            }
        }
    }
    Ok(RatioTable { grid: grid.clone(), rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseFit {
    pub a: f64,
    pub b: f64,
    pub k: usize,
    /// RMS of `ln σ − ln fit`.
    pub residual: f64,
}

/// Residual bound used to accept a noise-scaling fit.
pub const NOISE_FIT_MAX_RESIDUAL: f64 = 0.1;

const B_MAX: f64 = 1e3;

/// Least squares in log space of `σ = a (n_amp + b)^{k/2}` with `b ≥ 0`.
pub fn fit_noise_scaling(n_amp: &[f64], sigma: &[f64], k: usize) -> Result<NoiseFit> {
    if n_amp.len() != sigma.len() || n_amp.len() < 3 {
        return Err(Error::Fit("need at least 3 matching points".into()));
    }
    if k == 0 || sigma.iter().any(|s| !(*s > 0.0)) || n_amp.iter().any(|n| !(*n >= 0.0)) {
        return Err(Error::Fit("need k >= 1, positive sigma and nonnegative n_amp".into()));
    }
    let e = k as f64 / 2.0;
    let logs: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
    // for fixed b the optimal ln a is the mean residual
    let eval = |b: f64| -> (f64, f64) {
        let r: Vec<f64> = n_amp.iter().zip(&logs).map(|(n, l)| l - e * (n + b).ln()).collect();
        let ln_a = r.iter().sum::<f64>() / r.len() as f64;
        let ss = r.iter().map(|x| (x - ln_a).powi(2)).sum::<f64>();
        (ln_a, ss)
    };
    // the minimum may sit at b = 0, so the search starts from the boundary
    let (mut lo, mut hi) = (0.0f64, B_MAX);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (eval(x1).1, eval(x2).1);
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1).1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2).1;
        }
    }
    let mut b = 0.5 * (lo + hi);
    if eval(0.0).1 <= eval(b).1 {
        b = 0.0;
    }
    if b > 0.999 * B_MAX {
        return Err(Error::Fit(format!("offset b ran to the search bound {B_MAX}")));
    }
    let (ln_a, ss) = eval(b);
    Ok(NoiseFit { a: ln_a.exp(), b, k, residual: (ss / n_amp.len() as f64).sqrt() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub rate: f64,
    pub prefactor: f64,
    pub rate_err: f64,
}

/// `σ = A e^{c k}` by linear regression of `ln σ` on `k`.
pub fn fit_order_scaling(orders: &[usize], sigma: &[f64]) -> Result<OrderFit> {
    if orders.len() != sigma.len() || orders.len() < 2 {
        return Err(Error::Fit("need at least 2 matching points".into()));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Fit("sigma must be positive".into()));
    }
    let x: Vec<f64> = orders.iter().map(|&k| k as f64).collect();
    let y: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
    let (c0, c1, se, _) = linear_fit(&x, &y);
    Ok(OrderFit { rate: c1, prefactor: c0.exp(), rate_err: se })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_err: f64,
}

/// Log-log slope of `σ` against `N`; needs 3 points spanning 1.5 decades.
pub fn fit_n_scaling(n: &[usize], sigma: &[f64]) -> Result<SlopeFit> {
    if n.len() != sigma.len() || n.len() < 3 {
        return Err(Error::Fit("need at least 3 matching points".into()));
    }
    let (lo, hi) = (n.iter().min().copied().unwrap_or(0), n.iter().max().copied().unwrap_or(0));
    if lo == 0 || (hi as f64 / lo as f64).log10() < 1.5 - 1e-9 {
        return Err(Error::Fit("N values must span at least 1.5 decades".into()));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Fit("sigma must be positive".into()));
    }
    let x: Vec<f64> = n.iter().map(|&v| (v as f64).ln()).collect();
    let y: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
    let (_, slope, slope_err, _) = linear_fit(&x, &y);
    Ok(SlopeFit { slope, slope_err })
}

/// Weighted slope of the ratio against `log10 N`, using the ratio
/// uncertainties as weights.
pub fn ratio_slope_vs_log_n(rows: &[&RatioRow]) -> Result<SlopeFit> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.ratio_err > 0.0)) {
        return Err(Error::Fit("need at least 2 rows with positive uncertainty".into()));
    }
    let w: Vec<f64> = rows.iter().map(|r| 1.0 / r.ratio_err.powi(2)).collect();
    let x: Vec<f64> = rows.iter().map(|r| (r.n_shots as f64).log10()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all rows share one N".into()));
    }
    let sxy: f64 = w.iter().zip(&x).zip(&y).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    Ok(SlopeFit { slope: sxy / sxx, slope_err: (1.0 / sxx).sqrt() })
}

/// Geometric mean of `σ` over the target moments of each order, per method:
/// `(orders, σ_dp, σ_sp)` for one grid cell.
pub fn sigma_by_order(table: &RatioTable, n_shots: usize, n_amp: f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut orders: Vec<usize> = table.rows.iter().map(RatioRow::order).collect();
    orders.sort_unstable();
    orders.dedup();
    let mut dp = Vec::new();
    let mut sp = Vec::new();
    for &k in &orders {
        let rows: Vec<&RatioRow> = table.rows.iter().filter(|r| r.order() == k && r.n_shots == n_shots && r.n_amp == n_amp).collect();
        let gm = |f: fn(&RatioRow) -> f64| (rows.iter().map(|r| f(r).ln()).sum::<f64>() / rows.len() as f64).exp();
        dp.push(gm(|r| r.sigma_dp));
        sp.push(gm(|r| r.sigma_sp));
    }
    (orders, dp, sp)
}

/// A fit that may have failed; failures are kept with their message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct FitOutcome<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> From<Result<T>> for FitOutcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(fit) => FitOutcome { fit: Some(fit), error: None },
            Err(e) => FitOutcome { fit: None, error: Some(e.to_string()) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFitRow {
    pub n_shots: usize,
    pub n_amp: f64,
    pub dp: FitOutcome<OrderFit>,
    pub sp: FitOutcome<OrderFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFitRow {
    pub l: usize,
    pub m: usize,
    pub n_amp: f64,
    pub dp: FitOutcome<SlopeFit>,
    pub sp: FitOutcome<SlopeFit>,
    /// Weighted slope of the ratio against `log10 N`.
    pub ratio: FitOutcome<SlopeFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseFitRow {
    pub l: usize,
    pub m: usize,
    pub n_shots: usize,
    pub dp: FitOutcome<NoiseFit>,
    pub sp: FitOutcome<NoiseFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFits {
    pub order: Vec<OrderFitRow>,
    /// Present when the grid has several N values.
    pub n_scaling: Vec<SlopeFitRow>,
    /// Present when the grid has several n_amp values.
    pub noise_scaling: Vec<NoiseFitRow>,
}

/// Every fit the grid supports.
pub fn fit_all(table: &RatioTable) -> ComparisonFits {
    let g = &table.grid;
    let mut out = ComparisonFits { order: vec![], n_scaling: vec![], noise_scaling: vec![] };
    for &n_amp in &g.n_amp_values {
        for &n in &g.n_values {
            let (orders, dp, sp) = sigma_by_order(table, n, n_amp);
            out.order.push(OrderFitRow { n_shots: n, n_amp, dp: fit_order_scaling(&orders, &dp).into(), sp: fit_order_scaling(&orders, &sp).into() });
        }
    }
    for &(l, m) in &g.moments {
        if g.n_values.len() > 1 {
            for &n_amp in &g.n_amp_values {
                let rows: Vec<&RatioRow> = table.rows.iter().filter(|r| r.l == l && r.m == m && r.n_amp == n_amp).collect();
                let ns: Vec<usize> = rows.iter().map(|r| r.n_shots).collect();
                let dp: Vec<f64> = rows.iter().map(|r| r.sigma_dp).collect();
                let sp: Vec<f64> = rows.iter().map(|r| r.sigma_sp).collect();
                out.n_scaling.push(SlopeFitRow {
                    l,
                    m,
                    n_amp,
                    dp: fit_n_scaling(&ns, &dp).into(),
                    sp: fit_n_scaling(&ns, &sp).into(),
                    ratio: ratio_slope_vs_log_n(&rows).into(),
                });
            }
        }
        if g.n_amp_values.len() > 1 {
            for &n in &g.n_values {
                let rows: Vec<&RatioRow> = table.rows.iter().filter(|r| r.l == l && r.m == m && r.n_shots == n).collect();
                let na: Vec<f64> = rows.iter().map(|r| r.n_amp).collect();
                let dp: Vec<f64> = rows.iter().map(|r| r.sigma_dp).collect();
                let sp: Vec<f64> = rows.iter().map(|r| r.sigma_sp).collect();
                out.noise_scaling.push(NoiseFitRow {
                    l,
                    m,
                    n_shots: n,
                    dp: fit_noise_scaling(&na, &dp, l + m).into(),
                    sp: fit_noise_scaling(&na, &sp, l + m).into(),
                });
            }
        }
    }
    out
}
