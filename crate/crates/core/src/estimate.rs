//! Complex-envelope moments from shots, and their exact model values.

use rayon::prelude::*;

use crate::chain::DetectionModel;
use crate::error::{invalid, Result};
use crate::sampler::{block_ranges, ShotBatch};
use crate::tables::{check_order, indices4, JointMomentTable};
use crate::wick::classical_joint_moments;
use crate::C64;

pub const DEFAULT_BLOCKS: usize = 20;

/// Per-shot envelopes `s_k = (x_k + i p_k)/√g_k`, row-major by shot.
#[derive(Clone, Debug)]
pub struct EnvelopeShots {
    pub chains: usize,
    pub values: Vec<C64>,
}

impl EnvelopeShots {
    pub fn n_shots(&self) -> usize {
        self.values.len() / self.chains
    }

    pub fn shot(&self, j: usize) -> &[C64] {
        &self.values[j * self.chains..(j + 1) * self.chains]
    }
}

pub fn envelope_shots(batch: &ShotBatch) -> Result<EnvelopeShots> {
    let chains = batch.chains();
    if batch.gains.len() != chains {
        return Err(invalid("shot batch carries no gain for envelope conversion"));
    }
    let scale: Vec<f64> = batch.gains.iter().map(|g| 1.0 / g.sqrt()).collect();
    let values = batch
        .rows()
        .flat_map(|r| (0..chains).map(|k| C64::new(r[2 * k], r[2 * k + 1]) * scale[k]).collect::<Vec<_>>())
        .collect();
    Ok(EnvelopeShots { chains, values })
}

pub fn estimate_moments(batch: &ShotBatch, k: usize) -> Result<JointMomentTable> {
    estimate_moments_blocks(batch, k, DEFAULT_BLOCKS)
}

/// Sample means of `conj(s1)^l1 s1^m1 conj(s2)^l2 s2^m2` with per-block
/// replicas over a near-equal contiguous partition into `n_blocks`.
pub fn estimate_moments_blocks(batch: &ShotBatch, k: usize, n_blocks: usize) -> Result<JointMomentTable> {
    check_order(k)?;
    let env = envelope_shots(batch)?;
    moments_from_envelopes(&env, k, n_blocks)
}

pub fn moments_from_envelopes(env: &EnvelopeShots, k: usize, n_blocks: usize) -> Result<JointMomentTable> {
    check_order(k)?;
    let n = env.n_shots();
    if n < 2 {
        return Err(invalid("need at least two shots"));
    }
    if n_blocks == 0 || n < n_blocks {
        return Err(invalid(format!("{n} shots cannot fill {n_blocks} blocks")));
    }
    let idx: Vec<[usize; 4]> = indices4(k).filter(|i| env.chains == 2 || i[2] + i[3] == 0).collect();
    let w = k + 1;
    let pairs: Vec<(usize, usize)> = idx.iter().map(|&[a, b, c, d]| (a * w + b, c * w + d)).collect();
    let sums: Vec<Vec<C64>> = block_ranges(n, n_blocks)
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![C64::new(0.0, 0.0); pairs.len()];
            let mut p1 = vec![C64::new(0.0, 0.0); w * w];
            let mut p2 = vec![C64::new(1.0, 0.0); w * w];
            for j in range {
                let s = env.shot(j);
                power_grid(s[0], k, &mut p1);
                if env.chains == 2 {
                    power_grid(s[1], k, &mut p2);
                }
                for (a, &(i1, i2)) in acc.iter_mut().zip(&pairs) {
                    *a += p1[i1] * p2[i2];
                }
            }
            acc
        })
        .collect();
    let ranges = block_ranges(n, n_blocks);
    let to_table = |values: &[C64], count: usize| {
        let mut t = JointMomentTable::new(k);
        for (i, v) in idx.iter().zip(values) {
            t.set(*i, v / count as f64);
        }
        t.n_shots = Some(count);
        t
    };
    let total: Vec<C64> = (0..pairs.len()).map(|e| sums.iter().map(|b| b[e]).sum()).collect();
    let mut table = to_table(&total, n);
    if n_blocks >= 2 {
        table.blocks = sums.iter().zip(&ranges).map(|(s, r)| to_table(s, r.len())).collect();
        table.refresh_block_errors();
    }
    Ok(table)
}

/// `out[l*(k+1)+m] = conj(s)^l s^m` for `l + m ≤ k`.
fn power_grid(s: C64, k: usize, out: &mut [C64]) {
    let w = k + 1;
    let sc = s.conj();
    let mut row = C64::new(1.0, 0.0);
    for l in 0..=k {
        let mut v = row;
        for m in 0..=k - l {
            out[l * w + m] = v;
            v *= s;
        }
        row *= sc;
    }
}

/// Exact envelope moments of a model (no sampling noise).
pub fn exact_envelope_moments(model: &DetectionModel, k: usize) -> Result<JointMomentTable> {
    let scales: Vec<f64> = model.gains.iter().map(|g| 1.0 / g.sqrt()).collect();
    classical_joint_moments(&model.measured, &scales, k)
}
