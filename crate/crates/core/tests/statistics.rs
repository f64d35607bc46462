//! Seeded statistical checks on the sampler, estimator and reconstruction.

use dualpath::chain::{build_dual_path, ChainConfig, DetectionModel};
use dualpath::estimate::{estimate_moments_blocks, exact_envelope_moments};
use dualpath::gaussian::GaussianState;
use dualpath::math::{linear_fit, mix_seed};
use dualpath::reconstruction::{dpm_reconstruct, AncillaPrior};
use dualpath::sampler::{sample, CHUNK_SHOTS};
use dualpath::tables::{indices2, indices4};
use dualpath::C64;
use nalgebra::DMatrix;

const SLOPE: f64 = -0.5;
const SLOPE_TOL: f64 = 0.1;
const Z_MAX: f64 = 5.0;
const MIN_PASS_FRACTION: f64 = 0.99;

fn squeezed_model(n_amp: f64) -> DetectionModel {
    build_dual_path(&GaussianState::squeezed_vacuum(C64::new(0.0, 0.5)), &ChainConfig::symmetric(1e4, n_amp)).unwrap()
}

fn z(d: C64, e: C64) -> f64 {
    let part = |d: f64, e: f64| if e > 0.0 { (d / e).abs() } else if d.abs() < 1e-12 { 0.0 } else { f64::INFINITY };
    part(d.re, e.re).max(part(d.im, e.im))
}

fn log_slope(ns: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly).1
}

#[test]
fn sample_covariance_converges_at_root_n() {
    let model = squeezed_model(10.0);
    let truth = model.measured.cov();
    let ns = [1e3, 1e4, 1e5];
    let errs: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let n = n as usize;
            let seeds = 20;
            (0..seeds)
                .map(|s| {
                    let b = sample(&model, n, mix_seed(7, &[n as u64, s])).unwrap();
                    let x = DMatrix::from_row_slice(n, 4, b.data());
                    let c = x.transpose() * &x / n as f64;
                    (c - truth).norm() / truth.norm()
                })
                .sum::<f64>()
                / seeds as f64
        })
        .collect();
    let slope = log_slope(&ns, &errs);
    assert!((slope - SLOPE).abs() <= SLOPE_TOL, "slope {slope} from {errs:?}");
}

#[test]
fn adjacent_blocks_are_uncorrelated() {
    let model = build_dual_path(&GaussianState::vacuum(1).unwrap(), &ChainConfig::symmetric(100.0, 1.0)).unwrap();
    let blocks = 200;
    let b = sample(&model, blocks * CHUNK_SHOTS, 11).unwrap();
    let means: Vec<f64> = (0..blocks).map(|k| (k * CHUNK_SHOTS..(k + 1) * CHUNK_SHOTS).map(|j| b.shot(j)[0]).sum::<f64>() / CHUNK_SHOTS as f64).collect();
    let mu = means.iter().sum::<f64>() / blocks as f64;
    let d: Vec<f64> = means.iter().map(|m| m - mu).collect();
    let r = d.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / d.iter().map(|x| x * x).sum::<f64>();
    let score = r.abs() * ((blocks - 1) as f64).sqrt();
    assert!(score < Z_MAX, "lag-1 correlation {r} ({score} sigma)");
}

#[test]
fn block_errors_shrink_at_root_n() {
    let model = squeezed_model(10.0);
    let ns = [1e4, 1e5, 1e6];
    let ses: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let t = estimate_moments_blocks(&sample(&model, n as usize, 5).unwrap(), 2, 20).unwrap();
            let logs: Vec<f64> = indices4(2).filter(|i| i.iter().sum::<usize>() > 0).map(|i| t.error(i).unwrap().norm().ln()).collect();
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        })
        .collect();
    let slope = log_slope(&ns, &ses);
    assert!((slope - SLOPE).abs() <= SLOPE_TOL, "slope {slope} from {ses:?}");
}

#[test]
fn reconstructed_moments_match_truth() {
    let model = squeezed_model(10.0);
    let mut total = 0;
    let mut pass = 0;
    for seed in 0..40 {
        let env = estimate_moments_blocks(&sample(&model, 40_000, seed).unwrap(), 4, 20).unwrap();
        let r = dpm_reconstruct(&env, &AncillaPrior::vacuum(), 4).unwrap();
        for (l, m) in indices2(4).filter(|&(l, m)| l + m > 0) {
            let d = r.signal.value(l, m).unwrap() - model.truth_signal.value(l, m).unwrap();
            total += 1;
            pass += usize::from(z(d, r.signal.error(l, m).unwrap()) < Z_MAX);
        }
    }
    let frac = pass as f64 / total as f64;
    assert!(frac >= MIN_PASS_FRACTION, "{pass}/{total}");
}

#[test]
fn envelope_estimates_match_exact_moments() {
    let model = squeezed_model(2.0);
    let exact = exact_envelope_moments(&model, 4).unwrap();
    let mut total = 0;
    let mut pass = 0;
    for seed in 100..120 {
        let t = estimate_moments_blocks(&sample(&model, 20_000, seed).unwrap(), 4, 20).unwrap();
        for idx in indices4(4).filter(|i| i.iter().sum::<usize>() > 0) {
            total += 1;
            pass += usize::from(z(t.value(idx).unwrap() - exact.value(idx).unwrap(), t.error(idx).unwrap()) < Z_MAX);
        }
    }
    let frac = pass as f64 / total as f64;
    assert!(frac >= MIN_PASS_FRACTION, "{pass}/{total}");
}

#[test]
fn standard_errors_grow_with_amplifier_noise() {
    let n_amps = [0.0, 2.0, 5.0, 10.0, 20.0];
    let results: Vec<_> = n_amps
        .iter()
        .map(|&n| {
            let env = estimate_moments_blocks(&sample(&squeezed_model(n), 100_000, 3).unwrap(), 4, 20).unwrap();
            dpm_reconstruct(&env, &AncillaPrior::vacuum(), 4).unwrap()
        })
        .collect();
    for (l, m) in indices2(4).filter(|&(l, m)| l + m > 0) {
        let se: Vec<f64> = results.iter().map(|r| r.signal.error(l, m).unwrap().norm()).collect();
        assert!(se.windows(2).all(|w| w[1] >= w[0]), "({l},{m}): {se:?}");
    }
}

#[test]
fn ancilla_check_is_consistent_for_vacuum() {
    let model = squeezed_model(10.0);
    for seed in 0..20 {
        let env = estimate_moments_blocks(&sample(&model, 20_000, mix_seed(3, &[seed])).unwrap(), 2, 20).unwrap();
        let r = dpm_reconstruct(&env, &AncillaPrior::vacuum(), 2).unwrap();
        let zs = r.ancilla_check.unwrap().z_score().unwrap();
        assert!(zs < Z_MAX, "seed {seed}: z {zs}");
    }
}
