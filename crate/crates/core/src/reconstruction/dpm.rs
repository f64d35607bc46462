use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{combination_estimators, envelope_moment, ExpansionTables, SignPolicy};
use super::{digest_tables, set_result_errors, AncillaCheck, Method, Provenance, ReconstructionResult};
use crate::error::{invalid, Result};
use crate::tables::{JointMomentTable, MomentTable, OperatorOrder};
use crate::C64;

/// The ancilla moments the dual-path method needs as input: `⟨v⟩`, `⟨v²⟩`
/// and `⟨v†v⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AncillaPrior {
    pub mean: C64,
    pub a2: C64,
    pub n: f64,
}

impl AncillaPrior {
    pub fn vacuum() -> Self {
        Self::thermal(0.0)
    }

    pub fn thermal(n: f64) -> Self {
        AncillaPrior { mean: C64::new(0.0, 0.0), a2: C64::new(0.0, 0.0), n }
    }

    /// From a normally ordered table of order ≥ 2.
    pub fn from_table(t: &MomentTable) -> Result<Self> {
        if t.order() != OperatorOrder::Normal {
            return Err(invalid("ancilla prior needs a normally ordered table"));
        }
        Ok(AncillaPrior { mean: t.value(0, 1)?, a2: t.value(0, 2)?, n: t.value(1, 1)?.re })
    }
}

fn mean(values: impl Iterator<Item = C64>) -> C64 {
    let v: Vec<C64> = values.collect();
    v.iter().sum::<C64>() / v.len() as f64
}

/// Dual-path reconstruction of signal, noise and higher ancilla moments up
/// to order `k` from joint envelope moments. Noise first moments are taken
/// as zero. If `env` carries block replicas, every block is reconstructed as
/// well and the spread sets the standard errors.
pub fn dpm_reconstruct(env: &JointMomentTable, prior: &AncillaPrior, k: usize) -> Result<ReconstructionResult> {
    let mut result = dpm_core(env, prior, k)?;
    if env.blocks.len() >= 2 {
        let reps: Vec<ReconstructionResult> = env.blocks.par_iter().map(|b| dpm_core(b, prior, k)).collect::<Result<_>>()?;
        set_result_errors(&mut result, &reps);
    }
    Ok(result)
}

fn dpm_core(env: &JointMomentTable, prior: &AncillaPrior, k: usize) -> Result<ReconstructionResult> {
    if k == 0 {
        return Err(invalid("reconstruction order must be at least 1"));
    }
    if env.max_order() < k {
        return Err(invalid(format!("envelope table has order {} < requested {k}", env.max_order())));
    }
    let zero = C64::new(0.0, 0.0);
    let mut signal = MomentTable::new(k, OperatorOrder::Normal);
    let mut ancilla = MomentTable::new(k, OperatorOrder::Normal);
    let mut noise = [MomentTable::new(k, OperatorOrder::Antinormal), MomentTable::new(k, OperatorOrder::Antinormal)];

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (s1, s2) = (env.value([0, 1, 0, 0])?, env.value([0, 0, 0, 1])?);
    signal.set_hermitian(0, 1, (s1 - s2) * h);
    ancilla.set_hermitian(0, 1, prior.mean);
    for t in &mut noise {
        t.set_hermitian(0, 1, zero);
    }
    let check = AncillaCheck { assumed: prior.mean, measured: (s1 + s2) * h, error: None };
    if k >= 2 {
        ancilla.set_hermitian(0, 2, prior.a2);
        ancilla.set_hermitian(1, 1, C64::new(prior.n, 0.0));
    }

    for n in 2..=k {
        for l in 0..=n / 2 {
            let m = n - l;
            let tabs = ExpansionTables { signal: &signal, ancilla: &ancilla, noise1: &noise[0], noise2: &noise[1] };
            let sig_est = combination_estimators(l, m, env, &tabs, SignPolicy::Signal)?;
            let (a, v) = if let Some(v) = ancilla.get(l, m) {
                (mean(sig_est.iter().map(|e| e.value)), v)
            } else {
                // both top-order moments unknown: each estimator is A + σV
                // (signal policy) or V + σA (ancilla policy); solve the
                // averaged pair.
                let anc_est = combination_estimators(l, m, env, &tabs, SignPolicy::Ancilla)?;
                let a_avg = mean(sig_est.iter().map(|e| e.value));
                let v_avg = mean(anc_est.iter().map(|e| e.value));
                let sbar = sig_est.iter().map(|e| e.sign).sum::<f64>() / sig_est.len() as f64;
                let det = 1.0 - sbar * sbar;
                ((a_avg - v_avg * sbar) / det, (v_avg - a_avg * sbar) / det)
            };
            signal.set_hermitian(l, m, a);
            ancilla.set_hermitian(l, m, v);
        }
        for l in 0..=n / 2 {
            let m = n - l;
            for (c, idx) in [[l, m, 0, 0], [0, 0, l, m]].into_iter().enumerate() {
                let tabs = ExpansionTables { signal: &signal, ancilla: &ancilla, noise1: &noise[0], noise2: &noise[1] };
                let v = env.value(idx)? - envelope_moment(&tabs, idx);
                noise[c].set_hermitian(l, m, v);
            }
        }
    }
    let [noise1, noise2] = noise;
    let extra = [prior.mean.re, prior.mean.im, prior.a2.re, prior.a2.im, prior.n, k as f64];
    Ok(ReconstructionResult {
        signal,
        ancilla: Some(ancilla),
        ancilla_check: Some(check),
        noise: vec![noise1, noise2],
        provenance: Provenance { method: Method::DualPath, inputs_digest: digest_tables(Method::DualPath, [env], &extra) },
    })
}
