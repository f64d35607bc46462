//! Expansion of dual-path envelope moments in signal, ancilla and noise
//! moments, and its per-combination inversion.
//!
//! With `S1 = (a + v)/√2 + V1†` and `S2 = (−a + v)/√2 + V2†`,
//! `⟨S1†^l1 S1^m1 S2†^l2 S2^m2⟩` is a sum of products of normally ordered
//! signal and ancilla moments with antinormally ordered noise moments.

use crate::error::{invalid, Result};
use crate::math::{factorial, sign};
use crate::tables::{indices2, indices4, JointMomentTable, MomentTable, OperatorOrder};
use crate::C64;

/// Moment tables entering the expansion. Missing entries count as zero,
/// which is how the recursion evaluates the part of an envelope moment that
/// does not involve the still-unknown top-order moments.
#[derive(Clone, Copy, Debug)]
pub struct ExpansionTables<'a> {
    pub signal: &'a MomentTable,
    pub ancilla: &'a MomentTable,
    pub noise1: &'a MomentTable,
    pub noise2: &'a MomentTable,
}

/// `(n_a, n_v, n_V, multinomial weight)` for distributing `e` factors.
fn splits(e: usize) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for p in 0..=e {
        for q in 0..=e - p {
            let r = e - p - q;
            out.push((p, q, r, factorial(e) / (factorial(p) * factorial(q) * factorial(r))));
        }
    }
    out
}

fn get(t: &MomentTable, l: usize, m: usize) -> C64 {
    t.get(l, m).unwrap_or(C64::new(0.0, 0.0))
}

/// Envelope moment `(l1, m1, l2, m2)` predicted from the tables.
pub fn envelope_moment(t: &ExpansionTables<'_>, [l1, m1, l2, m2]: [usize; 4]) -> C64 {
    let (s1, t1, s2, t2) = (splits(l1), splits(m1), splits(l2), splits(m2));
    let mut acc = C64::new(0.0, 0.0);
    for &(pa1, pv1, pn1, w1) in &s1 {
        for &(qa1, qv1, qn1, x1) in &t1 {
            let n1 = get(t.noise1, pn1, qn1);
            if n1 == C64::new(0.0, 0.0) {
                continue;
            }
            for &(pa2, pv2, pn2, w2) in &s2 {
                for &(qa2, qv2, qn2, x2) in &t2 {
                    let n2 = get(t.noise2, pn2, qn2);
                    let a = get(t.signal, pa1 + pa2, qa1 + qa2);
                    let v = get(t.ancilla, pv1 + pv2, qv1 + qv2);
                    let split = (pa1 + pv1 + qa1 + qv1 + pa2 + pv2 + qa2 + qv2) as f64;
                    let coef = w1 * x1 * w2 * x2 * 0.5f64.powf(split / 2.0) * sign(pa2 + qa2);
                    acc += a * v * n1 * n2 * coef;
                }
            }
        }
    }
    acc
}

/// Full forward model up to order `k`. All entries of the tables up to `k`
/// must be present.
pub fn forward_envelope(t: &ExpansionTables<'_>, k: usize) -> Result<JointMomentTable> {
    for (name, tab, order) in [
        ("signal", t.signal, OperatorOrder::Normal),
        ("ancilla", t.ancilla, OperatorOrder::Normal),
        ("noise1", t.noise1, OperatorOrder::Antinormal),
        ("noise2", t.noise2, OperatorOrder::Antinormal),
    ] {
        if tab.order() != order {
            return Err(invalid(format!("{name} table has the wrong operator ordering")));
        }
        if tab.max_order() < k || indices2(k).any(|(l, m)| tab.get(l, m).is_none()) {
            return Err(invalid(format!("{name} table does not cover order {k}")));
        }
    }
    let mut out = JointMomentTable::new(k);
    for idx in indices4(k).skip(1) {
        out.set(idx, envelope_moment(t, idx));
    }
    Ok(out)
}

/// Which top-order moment a combination estimator isolates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignPolicy {
    /// `⟨a†^l a^m⟩`: the channel-2 sign `(−1)^(l2+m2)` multiplies the residual.
    Signal,
    /// `⟨v†^l v^m⟩`: the same residual with the sign replaced by +1.
    Ancilla,
}

/// One estimate per admissible split `(l1, m1)` of `(l, m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CombinationEstimate {
    pub l1: usize,
    pub m1: usize,
    /// `(−1)^(l2+m2)`.
    pub sign: f64,
    pub value: C64,
}

/// Splits `(l1, m1)` with `0 ≤ l1 ≤ l`, `0 ≤ m1 ≤ m`, excluding the two
/// single-channel endpoints `(l, m)` and `(0, 0)`.
pub fn combinations(l: usize, m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for l1 in 0..=l {
        for m1 in 0..=m {
            if (l1, m1) != (l, m) && (l1, m1) != (0, 0) {
                out.push((l1, m1));
            }
        }
    }
    out
}

/// Per-combination estimators of the top-order moment `(l, m)`.
///
/// Each cross-channel envelope moment with `l1 + l2 = l`, `m1 + m2 = m` reads
/// `2^{-n/2} (σ A + V) + known`, with `σ = (−1)^(l2+m2)`, `A` and `V` the
/// signal and ancilla moments. The known part is evaluated from `tables`,
/// which must hold every lower-order moment. If the other top-order moment
/// (ancilla for `Signal`, signal for `Ancilla`) is present in `tables` it is
/// subtracted; otherwise the estimate still contains it with weight `σ`.
pub fn combination_estimators(
    l: usize,
    m: usize,
    env: &JointMomentTable,
    tables: &ExpansionTables<'_>,
    policy: SignPolicy,
) -> Result<Vec<CombinationEstimate>> {
    let n = l + m;
    if n < 2 {
        return Err(invalid("combination estimators need total order >= 2"));
    }
    let scale = 2f64.powf(n as f64 / 2.0);
    let other = match policy {
        SignPolicy::Signal => tables.ancilla.get(l, m),
        SignPolicy::Ancilla => tables.signal.get(l, m),
    };
    let mut sig = tables.signal.clone();
    let mut anc = tables.ancilla.clone();
    sig.clear_entry(l, m);
    anc.clear_entry(l, m);
    let known_tables = ExpansionTables { signal: &sig, ancilla: &anc, noise1: tables.noise1, noise2: tables.noise2 };
    combinations(l, m)
        .into_iter()
        .map(|(l1, m1)| {
            let idx = [l1, m1, l - l1, m - m1];
            let s = sign(idx[2] + idx[3]);
            let x = (env.value(idx)? - envelope_moment(&known_tables, idx)) * scale;
            let value = match (policy, other) {
                (SignPolicy::Signal, Some(v)) => (x - v) * s,
                (SignPolicy::Signal, None) => x * s,
                (SignPolicy::Ancilla, Some(a)) => x - a * s,
                (SignPolicy::Ancilla, None) => x,
            };
            Ok(CombinationEstimate { l1, m1, sign: s, value })
        })
        .collect()
}
