//! Moment reconstruction: single-path inversion with a reference run, the
//! dual-path cross-correlation method, and the dual-path reference-state
//! method.

mod dpm;
pub mod kernel;
mod reference;
mod spm;

pub use dpm::{dpm_reconstruct, AncillaPrior};
pub use kernel::{combination_estimators, combinations, envelope_moment, forward_envelope, CombinationEstimate, ExpansionTables, SignPolicy};
pub use reference::{reference_noise_joint, reference_output_moments, NoiseJointTable};
pub use spm::{spm_noise_from_reference, spm_output_moments, spm_reconstruct, spm_signal, SpmOptions};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tables::{block_standard_error, indices2, JointMomentTable, MomentTable};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SinglePath,
    DualPath,
    ReferenceState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    /// SHA-256 over the input moment values, hex encoded.
    pub inputs_digest: String,
}

/// Mean of the ancilla inferred from the symmetric channel combination,
/// compared against the value the reconstruction assumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AncillaCheck {
    pub assumed: C64,
    pub measured: C64,
    pub error: Option<C64>,
}

impl AncillaCheck {
    /// Largest per-component deviation in units of the standard error.
    pub fn z_score(&self) -> Option<f64> {
        let e = self.error?;
        let d = self.measured - self.assumed;
        Some((d.re / e.re).abs().max((d.im / e.im).abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Normally ordered moments of the signal.
    pub signal: MomentTable,
    /// Normally ordered ancilla moments: the assumed low orders plus the
    /// reconstructed higher ones (dual path only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancilla: Option<MomentTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancilla_check: Option<AncillaCheck>,
    /// Antinormally ordered noise moments, one table per chain.
    pub noise: Vec<MomentTable>,
    pub provenance: Provenance,
}

pub(crate) fn digest_tables<'a>(method: Method, tables: impl IntoIterator<Item = &'a JointMomentTable>, extra: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{method:?}").as_bytes());
    for t in tables {
        h.update((t.max_order() as u64).to_le_bytes());
        for (idx, v) in t.iter() {
            for i in idx {
                h.update([i as u8]);
            }
            h.update(v.re.to_le_bytes());
            h.update(v.im.to_le_bytes());
        }
    }
    for x in extra {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Standard errors of `target` from replicas computed on blocks.
pub(crate) fn set_table_errors(target: &mut MomentTable, replicas: &[&MomentTable]) {
    if replicas.len() < 2 {
        return;
    }
    for (l, m) in indices2(target.max_order()) {
        let samples: Option<Vec<C64>> = replicas.iter().map(|r| r.get(l, m)).collect();
        if let (Some(samples), Some(_)) = (samples, target.get(l, m)) {
            target.set_error(l, m, block_standard_error(&samples));
        }
    }
}

pub(crate) fn set_result_errors(target: &mut ReconstructionResult, replicas: &[ReconstructionResult]) {
    let sig: Vec<&MomentTable> = replicas.iter().map(|r| &r.signal).collect();
    set_table_errors(&mut target.signal, &sig);
    if let Some(anc) = target.ancilla.as_mut() {
        let reps: Vec<&MomentTable> = replicas.iter().filter_map(|r| r.ancilla.as_ref()).collect();
        if reps.len() == replicas.len() {
            set_table_errors(anc, &reps);
        }
    }
    for (k, noise) in target.noise.iter_mut().enumerate() {
        let reps: Vec<&MomentTable> = replicas.iter().filter_map(|r| r.noise.get(k)).collect();
        set_table_errors(noise, &reps);
    }
    if let Some(check) = target.ancilla_check.as_mut() {
        let samples: Option<Vec<C64>> = replicas.iter().map(|r| r.ancilla_check.as_ref().map(|c| c.measured)).collect();
        if let Some(s) = samples.filter(|s| s.len() >= 2) {
            check.error = Some(block_standard_error(&s));
        }
    }
}
