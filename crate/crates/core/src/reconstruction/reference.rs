use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::binomial;
use crate::tables::{indices4, JointMomentTable};
use crate::C64;

/// Joint noise moments `⟨V1^k1 V1†^j1 V2^k2 V2†^j2⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseJointTable(pub JointMomentTable);

impl NoiseJointTable {
    pub fn max_order(&self) -> usize {
        self.0.max_order()
    }

    pub fn value(&self, idx: [usize; 4]) -> Result<C64> {
        self.0.value(idx)
    }
}

/// With vacuum at both beam-splitter inputs the output moments are trivial,
/// so the envelope moments of that run are the joint noise moments.
pub fn reference_noise_joint(env_vacuum_run: &JointMomentTable, k: usize) -> Result<NoiseJointTable> {
    if env_vacuum_run.max_order() < k {
        return Err(invalid(format!("vacuum-run table has order {} < {k}", env_vacuum_run.max_order())));
    }
    Ok(NoiseJointTable(env_vacuum_run.truncated(k)))
}

/// Normally ordered joint moments of the two beam-splitter outputs, by
/// inverting the envelope expansion order by order. Block replicas present
/// in both tables are paired for standard errors.
pub fn reference_output_moments(env_signal_run: &JointMomentTable, noise: &NoiseJointTable, k: usize) -> Result<JointMomentTable> {
    let mut out = output_core(env_signal_run, &noise.0, k)?;
    let nb = env_signal_run.blocks.len();
    if nb >= 2 && noise.0.blocks.len() == nb {
        out.blocks = env_signal_run.blocks.par_iter().zip(&noise.0.blocks).map(|(s, n)| output_core(s, n, k)).collect::<Result<_>>()?;
        out.refresh_block_errors();
    }
    Ok(out)
}

fn output_core(env: &JointMomentTable, noise: &JointMomentTable, k: usize) -> Result<JointMomentTable> {
    if env.max_order() < k || noise.max_order() < k {
        return Err(invalid(format!("tables must cover order {k}")));
    }
    let mut out = JointMomentTable::new(k);
    out.n_shots = env.n_shots;
    // increasing total order: every lower entry is ready when needed
    let mut idxs: Vec<[usize; 4]> = indices4(k).skip(1).collect();
    idxs.sort_by_key(|i| i.iter().sum::<usize>());
    for [l1, m1, l2, m2] in idxs {
        let mut acc = env.value([l1, m1, l2, m2])?;
        for k1 in 0..=l1 {
            for j1 in 0..=m1 {
                for k2 in 0..=l2 {
                    for j2 in 0..=m2 {
                        if k1 + j1 + k2 + j2 == 0 {
                            continue;
                        }
                        let w = binomial(l1, k1) * binomial(m1, j1) * binomial(l2, k2) * binomial(m2, j2);
                        acc -= out.value([l1 - k1, m1 - j1, l2 - k2, m2 - j2])? * noise.value([k1, j1, k2, j2])? * w;
                    }
                }
            }
        }
        out.set([l1, m1, l2, m2], acc);
    }
    Ok(out)
}
