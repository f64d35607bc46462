use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{digest_tables, set_result_errors, Method, Provenance, ReconstructionResult};
use crate::error::{invalid, Result};
use crate::math::binomial;
use crate::tables::{indices2, JointMomentTable, MomentTable, OperatorOrder};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpmOptions {
    /// Fix the first noise moments to zero instead of estimating them from
    /// the reference run.
    pub zero_noise_mean: bool,
}

impl Default for SpmOptions {
    fn default() -> Self {
        SpmOptions { zero_noise_mean: true }
    }
}

fn check_gain(g: f64) -> Result<()> {
    if !(g > 1.0) || !g.is_finite() {
        return Err(invalid(format!("gain must be finite and > 1, got {g}")));
    }
    Ok(())
}

/// Raw output moments `⟨a'†^l a'^m⟩ = g^{(l+m)/2} ⟨S†^l S^m⟩` from the
/// channel-1 envelope moments.
pub fn spm_output_moments(env: &JointMomentTable, g: f64) -> Result<MomentTable> {
    check_gain(g)?;
    let k = env.max_order();
    let mut out = MomentTable::new(k, OperatorOrder::Normal);
    for (l, m) in indices2(k).skip(1) {
        out.set(l, m, env.value([l, m, 0, 0])? * g.powf((l + m) as f64 / 2.0));
    }
    Ok(out)
}

/// Antinormally ordered noise moments `⟨h^l h†^m⟩` from the output moments
/// of a run with a coherent reference `alpha` at the input.
pub fn spm_noise_from_reference(out: &MomentTable, g: f64, alpha: C64, opts: SpmOptions) -> Result<MomentTable> {
    check_gain(g)?;
    let k = out.max_order();
    let ratio = g / (g - 1.0);
    let mut h = MomentTable::new(k, OperatorOrder::Antinormal);
    for n in 1..=k {
        for (l, m) in (0..=n).map(|l| (l, n - l)) {
            if n == 1 && opts.zero_noise_mean {
                h.set(l, m, C64::new(0.0, 0.0));
                continue;
            }
            let mut acc = out.value(l, m)? / (g - 1.0).powf(n as f64 / 2.0);
            for i1 in 0..=l {
                for i2 in 0..=m {
                    if (i1, i2) == (l, m) {
                        continue;
                    }
                    let w = binomial(l, i1) * binomial(m, i2) * ratio.powf((n - i1 - i2) as f64 / 2.0);
                    acc -= alpha.conj().powu((l - i1) as u32) * alpha.powu((m - i2) as u32) * h.value(i1, i2)? * w;
                }
            }
            h.set(l, m, acc);
        }
    }
    Ok(h)
}

/// Normally ordered signal moments from output moments and noise moments.
pub fn spm_signal(out: &MomentTable, noise: &MomentTable, g: f64) -> Result<MomentTable> {
    check_gain(g)?;
    let k = out.max_order();
    if noise.max_order() < k {
        return Err(invalid(format!("noise table order {} does not cover order {k}", noise.max_order())));
    }
    let ratio = (g - 1.0) / g;
    let mut a = MomentTable::new(k, OperatorOrder::Normal);
    for n in 1..=k {
        for (l, m) in (0..=n).map(|l| (l, n - l)) {
            let mut acc = out.value(l, m)? / g.powf(n as f64 / 2.0);
            for i1 in 0..=l {
                for i2 in 0..=m {
                    if (i1, i2) == (l, m) {
                        continue;
                    }
                    let w = binomial(l, i1) * binomial(m, i2) * ratio.powf((n - i1 - i2) as f64 / 2.0);
                    acc -= a.value(i1, i2)? * noise.value(l - i1, m - i2)? * w;
                }
            }
            a.set(l, m, acc);
        }
    }
    Ok(a)
}

/// Single-path reconstruction from a signal run and a coherent-reference run
/// (both single-chain envelope tables) at effective gain `g`. Block replicas
/// present in both tables are paired for standard errors.
pub fn spm_reconstruct(signal_env: &JointMomentTable, reference_env: &JointMomentTable, g: f64, alpha: C64, opts: SpmOptions, k: usize) -> Result<ReconstructionResult> {
    let core = |s: &JointMomentTable, r: &JointMomentTable| -> Result<ReconstructionResult> {
        if k == 0 || s.max_order() < k || r.max_order() < k {
            return Err(invalid(format!("envelope tables must cover order {k} >= 1")));
        }
        let noise = spm_noise_from_reference(&spm_output_moments(&r.truncated(k), g)?, g, alpha, opts)?;
        let signal = spm_signal(&spm_output_moments(&s.truncated(k), g)?, &noise, g)?;
        let extra = [g, alpha.re, alpha.im, f64::from(u8::from(opts.zero_noise_mean)), k as f64];
        Ok(ReconstructionResult {
            signal,
            ancilla: None,
            ancilla_check: None,
            noise: vec![noise],
            provenance: Provenance { method: Method::SinglePath, inputs_digest: digest_tables(Method::SinglePath, [s, r], &extra) },
        })
    };
    let mut result = core(signal_env, reference_env)?;
    let nb = signal_env.blocks.len();
    if nb >= 2 && reference_env.blocks.len() == nb {
        let reps: Vec<ReconstructionResult> =
            signal_env.blocks.par_iter().zip(&reference_env.blocks).map(|(s, r)| core(s, r)).collect::<Result<_>>()?;
        set_result_errors(&mut result, &reps);
    }
    Ok(result)
}
