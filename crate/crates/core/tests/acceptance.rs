//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary is always
//! printed. `cargo test -p dualpath --test acceptance`.

use std::f64::consts::FRAC_PI_3;
use std::process::ExitCode;
use std::time::Instant;

use dualpath::benchmark::{
    fit_n_scaling, fit_noise_scaling, fit_order_scaling, ratio_slope_vs_log_n, run_comparison, sigma_by_order, ComparisonGrid, RatioRow, RatioTable,
    NOISE_FIT_MAX_RESIDUAL,
};
use dualpath::chain::{amplifier, beam_splitter, build_dual_path, build_single_path, effective_noise_moments, ChainConfig, LossPlacement};
use dualpath::entanglement::{negativity_gaussian, negativity_kernel, partial_transpose, witness_report, TwoModeCovariance, Verdict};
use dualpath::estimate::{estimate_moments, estimate_moments_blocks, exact_envelope_moments};
use dualpath::gaussian::{symplectic_form, GaussianState};
use dualpath::reconstruction::{
    combinations, dpm_reconstruct, reference_noise_joint, reference_output_moments, spm_noise_from_reference, spm_output_moments, spm_signal, AncillaPrior,
    SpmOptions,
};
use dualpath::sampler::sample;
use dualpath::tables::{indices2, MomentTable, OperatorOrder};
use dualpath::wick::{wick_joint_moments, wick_moments};
use dualpath::C64;
use nalgebra::{DMatrix, DVector};

// Tolerances, pinned.
const ROUND_TRIP_TOL: f64 = 1e-9;
const Z_MAX: f64 = 5.0;
const MIN_PASS_FRACTION: f64 = 0.99;
const STAT_SEEDS: u64 = 100;
const STAT_SHOTS: usize = 100_000;
const RATIO_BAND: f64 = 0.1;
const ORDER4_SIGMA: f64 = 3.0;
const RATIO_SLOPE_SIGMA: f64 = 3.0;
const N_SLOPE: f64 = -0.5;
const N_SLOPE_TOL: f64 = 0.1;
const NEGATIVITY_TOL: f64 = 1e-10;
const CONSERVATION_TOL: f64 = 1e-10;
const WITNESS_SHOTS: usize = 1_000_000;
const WITNESS_SIGMA: f64 = 5.0;
/// The reported photon number of the squeezed input, rounded.
const REFERENCE_PHOTON_NUMBER: f64 = 0.27;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn section3_chain() -> ChainConfig {
    ChainConfig::symmetric(1e4, 10.0)
}

fn inputs() -> Vec<(&'static str, GaussianState)> {
    vec![
        ("vacuum", GaussianState::vacuum(1).unwrap()),
        ("thermal(1)", GaussianState::thermal(1.0).unwrap()),
        ("coherent(1+i)", GaussianState::coherent(C64::new(1.0, 1.0))),
        ("squeezed(0.5i)", GaussianState::squeezed_vacuum(C64::new(0.0, 0.5))),
        ("squeezed(0.3e^{i pi/3})", GaussianState::squeezed_vacuum(C64::from_polar(0.3, FRAC_PI_3))),
    ]
}

fn squeezed_05i() -> GaussianState {
    GaussianState::squeezed_vacuum(C64::new(0.0, 0.5))
}

fn criterion_1() -> Outcome {
    let cfg = section3_chain();
    let g = cfg.g1;
    let vac = GaussianState::vacuum(1).unwrap();
    let mut worst = [0.0f64; 3];
    let mut detail = Vec::new();
    for (name, input) in inputs() {
        let oracle = wick_moments(&input, 0, 4).unwrap();

        let dual = build_dual_path(&input, &cfg).unwrap();
        let r = dpm_reconstruct(&exact_envelope_moments(&dual, 4).unwrap(), &AncillaPrior::vacuum(), 4).unwrap();
        let d_dpm = r.signal.max_abs_diff(&oracle);

        let reference = build_single_path(&vac, &cfg).unwrap();
        let single = build_single_path(&input, &cfg).unwrap();
        let noise = spm_noise_from_reference(&spm_output_moments(&exact_envelope_moments(&reference, 4).unwrap(), g).unwrap(), g, C64::new(0.0, 0.0), SpmOptions::default()).unwrap();
        let a = spm_signal(&spm_output_moments(&exact_envelope_moments(&single, 4).unwrap(), g).unwrap(), &noise, g).unwrap();
        let d_spm = a.max_abs_diff(&oracle);

        let vac_run = build_dual_path(&vac, &cfg).unwrap();
        let nj = reference_noise_joint(&exact_envelope_moments(&vac_run, 4).unwrap(), 4).unwrap();
        let out = reference_output_moments(&exact_envelope_moments(&dual, 4).unwrap(), &nj, 4).unwrap();
        let post = beam_splitter(&input.tensor(&vac)).unwrap();
        let d_ref = out.max_abs_diff(&wick_joint_moments(&post, [0, 1], 4, OperatorOrder::Normal).unwrap());

        for (w, d) in worst.iter_mut().zip([d_dpm, d_spm, d_ref]) {
            *w = w.max(d);
        }
        detail.push(format!("{name}: {d_dpm:.1e}/{d_spm:.1e}/{d_ref:.1e}"));
    }
    let pass = worst.iter().all(|w| *w <= ROUND_TRIP_TOL);
    Outcome {
        id: 1,
        name: "analytic round-trip",
        pass,
        detail: format!("max |dev| dpm {:.2e}, spm {:.2e}, refstate {:.2e} (tol {ROUND_TRIP_TOL:e}); {}", worst[0], worst[1], worst[2], detail.join(", ")),
    }
}

/// Largest component-wise |dev|/SE; `None` if a deviation has no error bar.
fn z_score(v: C64, truth: C64, se: C64) -> Option<f64> {
    let mut z = 0.0f64;
    for (d, e) in [((v - truth).re, se.re), ((v - truth).im, se.im)] {
        if e > 0.0 {
            z = z.max(d.abs() / e);
        } else if d.abs() > 1e-12 {
            return None;
        }
    }
    Some(z)
}

fn criterion_2() -> Outcome {
    let input = squeezed_05i();
    let truth = wick_moments(&input, 0, 4).unwrap();
    let model = build_dual_path(&input, &section3_chain()).unwrap();
    let targets: Vec<(usize, usize)> = indices2(4).filter(|&(l, m)| l + m > 0).collect();
    let mut cells = 0usize;
    let mut good = 0usize;
    let mut n_est = Vec::new();
    for seed in 0..STAT_SEEDS {
        let env = estimate_moments(&sample(&model, STAT_SHOTS, seed).unwrap(), 4).unwrap();
        let r = dpm_reconstruct(&env, &AncillaPrior::vacuum(), 4).unwrap();
        for &(l, m) in &targets {
            cells += 1;
            let se = r.signal.error(l, m).unwrap_or_default();
            if z_score(r.signal.value(l, m).unwrap(), truth.value(l, m).unwrap(), se).is_some_and(|z| z < Z_MAX) {
                good += 1;
            }
        }
        n_est.push(r.signal.value(1, 1).unwrap().re);
    }
    let frac = good as f64 / cells as f64;
    let n = n_est.len() as f64;
    let mean = n_est.iter().sum::<f64>() / n;
    let sem = (n_est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let exact = 0.5f64.sinh().powi(2);
    let z_n = (mean - exact).abs() / sem;
    // the reported value is the exact one rounded to two digits
    let rounded_ok = (exact - REFERENCE_PHOTON_NUMBER).abs() < 0.005;
    Outcome {
        id: 2,
        name: "statistical round-trip",
        pass: frac >= MIN_PASS_FRACTION && z_n < Z_MAX && rounded_ok,
        detail: format!(
            "{good}/{cells} cells within {Z_MAX} SE ({:.2}% >= {:.0}%); <a+a> = {mean:.4} +- {sem:.4} vs sinh^2(0.5) = {exact:.4} (z {z_n:.2}), rounds to {REFERENCE_PHOTON_NUMBER}",
            100.0 * frac,
            100.0 * MIN_PASS_FRACTION
        ),
    }
}

struct Comparisons {
    n_grid: RatioTable,
    amp_grid: RatioTable,
}

fn run_comparisons() -> Comparisons {
    let input = squeezed_05i();
    let base = ComparisonGrid { chain: section3_chain(), ..ComparisonGrid::scaled() };
    let n_grid = ComparisonGrid { n_values: vec![1000, 3162, 10_000, 31_623], n_amp_values: vec![10.0], ..base.clone() };
    let amp_grid = ComparisonGrid { n_values: vec![10_000], n_amp_values: vec![2.0, 5.0, 10.0, 20.0], ..base };
    Comparisons { n_grid: run_comparison(&n_grid, &input).unwrap(), amp_grid: run_comparison(&amp_grid, &input).unwrap() }
}

fn criterion_3(c: &Comparisons) -> Outcome {
    let t = &c.n_grid;
    let at = |r: &&RatioRow| r.n_shots == 10_000 && r.n_amp == 10.0;
    let low: Vec<&RatioRow> = t.rows.iter().filter(at).filter(|r| r.order() <= 2).collect();
    let low_ok = low.iter().all(|r| (r.ratio - 1.0).abs() <= RATIO_BAND);
    let worst_low = low.iter().map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max);
    let order4: Vec<&RatioRow> = t.rows.iter().filter(at).filter(|r| r.order() == 4).collect();
    let best4 = order4.iter().map(|r| ((1.0 - r.ratio) / r.ratio_err, r)).max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let edge_ok = best4.0 >= ORDER4_SIGMA;

    let mut slope_ok = true;
    let mut worst_slope = 0.0f64;
    for &(l, m) in &t.grid.moments {
        let rows: Vec<&RatioRow> = t.rows.iter().filter(|r| r.l == l && r.m == m).collect();
        let s = ratio_slope_vs_log_n(&rows).unwrap();
        let z = s.slope.abs() / s.slope_err;
        worst_slope = worst_slope.max(z);
        slope_ok &= z <= RATIO_SLOPE_SIGMA;
    }
    let ratios: Vec<String> = t.rows.iter().filter(at).filter(|r| r.l <= r.m).map(|r| format!("({},{}) {:.3}+-{:.3}", r.l, r.m, r.ratio, r.ratio_err)).collect();
    Outcome {
        id: 3,
        name: "method comparison",
        pass: low_ok && edge_ok && slope_ok,
        detail: format!(
            "orders 1-2 max |ratio-1| {worst_low:.3} (<= {RATIO_BAND}); best order-4 ({},{}) ratio {:.3} at {:.1} sigma below 1 (>= {ORDER4_SIGMA}); max |ratio slope vs log N| {worst_slope:.2} sigma (<= {RATIO_SLOPE_SIGMA}); ratios at N=1e4: {}",
            best4.1.l,
            best4.1.m,
            best4.1.ratio,
            best4.0,
            ratios.join(" ")
        ),
    }
}

fn criterion_4(c: &Comparisons) -> Outcome {
    let mut notes = Vec::new();
    // σ ∝ N^slope, every moment, both methods
    let t = &c.n_grid;
    let mut slope_ok = true;
    let mut worst = 0.0f64;
    for &(l, m) in &t.grid.moments {
        let rows: Vec<&RatioRow> = t.rows.iter().filter(|r| r.l == l && r.m == m).collect();
        let ns: Vec<usize> = rows.iter().map(|r| r.n_shots).collect();
        for sig in [rows.iter().map(|r| r.sigma_dp).collect::<Vec<_>>(), rows.iter().map(|r| r.sigma_sp).collect()] {
            let f = fit_n_scaling(&ns, &sig).unwrap();
            worst = worst.max((f.slope - N_SLOPE).abs());
            slope_ok &= (f.slope - N_SLOPE).abs() <= N_SLOPE_TOL;
        }
    }
    notes.push(format!("max |slope + 0.5| = {worst:.3} (<= {N_SLOPE_TOL})"));

    // σ vs n_amp: a (n + b)^{k/2} for order-4 and order-1 moments
    let a = &c.amp_grid;
    let mut noise_ok = true;
    let mut worst_res = 0.0f64;
    for &(l, m) in a.grid.moments.iter().filter(|(l, m)| l + m == 4 || l + m == 1) {
        let rows: Vec<&RatioRow> = a.rows.iter().filter(|r| r.l == l && r.m == m).collect();
        let na: Vec<f64> = rows.iter().map(|r| r.n_amp).collect();
        for sig in [rows.iter().map(|r| r.sigma_dp).collect::<Vec<_>>(), rows.iter().map(|r| r.sigma_sp).collect()] {
            match fit_noise_scaling(&na, &sig, l + m) {
                Ok(f) => {
                    worst_res = worst_res.max(f.residual);
                    noise_ok &= f.residual <= NOISE_FIT_MAX_RESIDUAL;
                }
                Err(e) => {
                    noise_ok = false;
                    notes.push(format!("noise fit ({l},{m}) failed: {e}"));
                }
            }
        }
    }
    notes.push(format!("noise fits max RMS log residual {worst_res:.3} (<= {NOISE_FIT_MAX_RESIDUAL})"));

    // σ vs order, exponential, at the comparison point
    let (orders, dp, sp) = sigma_by_order(a, 10_000, 10.0);
    let (fd, fs) = (fit_order_scaling(&orders, &dp).unwrap(), fit_order_scaling(&orders, &sp).unwrap());
    let order_ok = fd.rate > 0.0 && fs.rate > 0.0 && fd.rate < fs.rate;
    notes.push(format!("order rates dp {:.3} +- {:.3} < sp {:.3} +- {:.3}", fd.rate, fd.rate_err, fs.rate, fs.rate_err));
    Outcome { id: 4, name: "scaling laws", pass: slope_ok && noise_ok && order_ok, detail: notes.join("; ") }
}

fn criterion_5() -> Outcome {
    let gs: Vec<f64> = (0..10).map(|i| 10f64.powf(0.3 + 0.47 * i as f64)).collect();
    let etas: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
    let mut checked = 0;
    let mut skipped = 0;
    let mut ok = true;
    let mut oracle_dev = 0.0f64;
    let mut min_gap = f64::INFINITY;
    for &g in &gs {
        for &eta in &etas {
            for n_loss in [0.0, 0.5, 2.0] {
                for n_amp in [0.0, 1.0, 10.0] {
                    if g * eta <= 1.0 {
                        skipped += 1;
                        continue;
                    }
                    // antinormal (1,1) minus the unit commutator
                    let n = |p| effective_noise_moments(g, eta, p, n_loss, n_amp, 2).unwrap().value(1, 1).unwrap().re - 1.0;
                    let (before, after) = (n(LossPlacement::BeforeAmp), n(LossPlacement::AfterAmp));
                    // closed forms from the coefficients of h_loss† and h_amp in V
                    let before_cf = (1.0 - eta) / (eta - 1.0 / g) * (n_loss + 1.0) + (1.0 - 1.0 / g) / (eta - 1.0 / g) * n_amp;
                    let after_cf = (1.0 - 1.0 / g) / (1.0 - 1.0 / (g * eta)) * n_amp + (1.0 - eta) / (g * eta - 1.0) * (n_loss + 1.0);
                    oracle_dev = oracle_dev.max((before - before_cf).abs() / before_cf.max(1.0)).max((after - after_cf).abs() / after_cf.max(1.0));
                    ok &= after <= before;
                    min_gap = min_gap.min(before - after);
                    checked += 1;
                }
            }
        }
    }
    let pass = ok && oracle_dev < 1e-10;
    Outcome {
        id: 5,
        name: "loss-placement inequality",
        pass,
        detail: format!("{checked} points with g*eta > 1 ({skipped} excluded); min <Va+Va> - <Vb+Vb> = {min_gap:.3e} >= 0; closed-form rel dev {oracle_dev:.1e}"),
    }
}

fn tmsv(r: f64) -> DMatrix<f64> {
    let (c, s) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
    DMatrix::from_row_slice(4, 4, &[c, 0.0, s, 0.0, 0.0, c, 0.0, -s, s, 0.0, c, 0.0, 0.0, -s, 0.0, c])
}

/// Kernel from the eigenvalues of `iΩΣ^{T_B}` computed by a general
/// eigensolver.
fn brute_force_kernel(cov: &DMatrix<f64>) -> f64 {
    let m = symplectic_form(2) * partial_transpose(cov, 1);
    let nu_min = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let nu = 2.0 * nu_min;
    (1.0 - nu) / (2.0 * nu)
}

fn criterion_6() -> Outcome {
    let vac = TwoModeCovariance::new(GaussianState::vacuum(2).unwrap()).unwrap();
    let (neg_vac, _) = negativity_gaussian(&vac).unwrap();
    let r = 0.5f64;
    let st = TwoModeCovariance::new(GaussianState::new(DVector::zeros(4), tmsv(r)).unwrap()).unwrap();
    let (neg_tmsv, _) = negativity_gaussian(&st).unwrap();
    let closed = ((2.0 * r).exp() - 1.0) / 2.0;
    let brute = brute_force_kernel(&tmsv(r));
    let tmsv_ok = (neg_tmsv - closed).abs() <= NEGATIVITY_TOL && (neg_tmsv - brute).abs() <= NEGATIVITY_TOL;

    // end to end: squeezed input, reference-state reconstruction, witness
    let input = squeezed_05i();
    let cfg = section3_chain();
    let sig = build_dual_path(&input, &cfg).unwrap();
    let vac_run = build_dual_path(&GaussianState::vacuum(1).unwrap(), &cfg).unwrap();
    let env_sig = estimate_moments_blocks(&sample(&sig, WITNESS_SHOTS, 61).unwrap(), 2, 20).unwrap();
    let env_vac = estimate_moments_blocks(&sample(&vac_run, WITNESS_SHOTS, 62).unwrap(), 2, 20).unwrap();
    let out = reference_output_moments(&env_sig, &reference_noise_joint(&env_vac, 2).unwrap(), 2).unwrap();
    let w = witness_report(&out, WITNESS_SIGMA).unwrap();
    let ideal = negativity_kernel(beam_splitter(&input.tensor(&GaussianState::vacuum(1).unwrap())).unwrap().cov());
    let err = w.kernel_error.unwrap_or(f64::NAN);
    let e2e_ok = w.verdict == Verdict::Entangled && (w.kernel - ideal).abs() < WITNESS_SIGMA * err;
    Outcome {
        id: 6,
        name: "entanglement witness",
        pass: neg_vac == 0.0 && tmsv_ok && e2e_ok,
        detail: format!(
            "N(vacuum) = {neg_vac}; N(TMSV 0.5) = {neg_tmsv:.12} vs (e-1)/2 = {closed:.12}, brute force {brute:.12}; end-to-end kernel {:.4} +- {err:.4} vs ideal {ideal:.4}, verdict {:?} (the lab value 0.489 +- 0.004 depends on unmodelled hardware and is not reproduced)",
            w.kernel, w.verdict
        ),
    }
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let vac = GaussianState::vacuum(1).unwrap();

    // symplectic positivity and photon conservation
    let mut min_nu = f64::INFINITY;
    let mut worst_cons = 0.0f64;
    let mut states = Vec::new();
    for (_, s) in inputs() {
        for partner in [vac.clone(), GaussianState::thermal(0.7).unwrap(), GaussianState::squeezed_vacuum(C64::from_polar(0.4, 2.0))] {
            let joint = s.tensor(&partner);
            let out = beam_splitter(&joint).unwrap();
            worst_cons = worst_cons.max((out.total_photon_number() - joint.total_photon_number()).abs());
            states.push(joint);
            states.push(out.clone());
            states.push(amplifier(&out, 0, 7.0, &GaussianState::thermal(2.0).unwrap()).unwrap());
        }
        states.push(s);
    }
    for s in &states {
        min_nu = min_nu.min(s.symplectic_eigenvalues().unwrap()[0]);
        ok &= GaussianState::new(s.mean().clone(), s.cov().clone()).is_ok();
    }
    ok &= min_nu >= 0.5 - 1e-10 && worst_cons <= CONSERVATION_TOL;
    notes.push(format!("{} states, min symplectic eigenvalue {min_nu:.12}, photon conservation dev {worst_cons:.1e}", states.len()));

    // estimator counts
    let mut count_ok = true;
    for (l, m) in indices2(4).filter(|&(l, m)| l + m >= 2) {
        count_ok &= combinations(l, m).len() == l * m + l + m - 1;
    }
    ok &= count_ok;
    notes.push(format!("estimator count lm+l+m-1 for all 2 <= l+m <= 4: {count_ok}"));

    // conjugation symmetry of every table
    let input = squeezed_05i();
    let model = build_dual_path(&input, &section3_chain()).unwrap();
    let batch = sample(&model, 20_000, 3).unwrap();
    let env = estimate_moments(&batch, 4).unwrap();
    let r = dpm_reconstruct(&env, &AncillaPrior::vacuum(), 4).unwrap();
    let mut tables: Vec<&MomentTable> = vec![&model.truth_signal, &r.signal];
    tables.extend(model.truth_noise.iter());
    tables.extend(r.noise.iter());
    tables.extend(r.ancilla.iter());
    tables.extend(model.truth_ancilla.iter());
    let asym = tables.iter().map(|t| t.conjugate_asymmetry()).fold(env.conjugate_asymmetry(), f64::max);
    let exact_asym = exact_envelope_moments(&model, 4).unwrap().conjugate_asymmetry();
    let sym_ok = asym <= 1e-9 && exact_asym <= 1e-9;
    ok &= sym_ok;
    notes.push(format!("max conjugate asymmetry {:.1e}", asym.max(exact_asym)));

    // bit reproducibility
    let again = sample(&model, 20_000, 3).unwrap();
    let other = sample(&model, 20_000, 4).unwrap();
    let grid = ComparisonGrid {
        n_values: vec![500],
        n_amp_values: vec![3.0],
        moments: vec![(0, 2), (2, 2)],
        repeats: 8,
        blocks: 2,
        seed: 11,
        chain: section3_chain(),
        spm: SpmOptions::default(),
    };
    let rep_ok = again.data() == batch.data()
        && other.data() != batch.data()
        && run_comparison(&grid, &input).unwrap() == run_comparison(&grid, &input).unwrap()
        && dpm_reconstruct(&estimate_moments(&again, 4).unwrap(), &AncillaPrior::vacuum(), 4).unwrap() == r;
    ok &= rep_ok;
    notes.push(format!("fixed-seed reproducibility: {rep_ok}"));
    Outcome { id: 7, name: "structural invariants", pass: ok, detail: notes.join("; ") }
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let t = Instant::now();
    results.push(criterion_1());
    results.push(criterion_2());
    let comparisons = run_comparisons();
    results.push(criterion_3(&comparisons));
    results.push(criterion_4(&comparisons));
    results.push(criterion_5());
    results.push(criterion_6());
    results.push(criterion_7());
    println!();
    for r in &results {
        println!("criterion {} {}: {} | {}", r.id, r.name, if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    println!("acceptance finished in {:.1} s", t.elapsed().as_secs_f64());
    if results.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
