//! Moment tables: single-mode `⟨a†^l a^m⟩` / `⟨a^l a†^m⟩` tables and the
//! two-channel joint tables used for envelope, noise and output moments.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::math::{binomial, factorial};
use crate::C64;

/// Hard cap on moment orders. Wick expansion and the recursions grow
/// combinatorially, the methods only ever need order 4.
pub const MAX_ORDER: usize = 8;

pub(crate) fn check_order(k: usize) -> Result<()> {
    if k > MAX_ORDER {
        return Err(Error::OrderTooHigh { requested: k, limit: MAX_ORDER });
    }
    Ok(())
}

/// Operator ordering of a single-mode table.
///
/// `Normal` entry `(l, m)` is `⟨a†^l a^m⟩`; `Antinormal` entry `(l, m)` is
/// `⟨a^l a†^m⟩` (creation operators to the right).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorOrder {
    Normal,
    Antinormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    max_order: usize,
    order: OperatorOrder,
    values: Vec<Option<C64>>,
    errors: Vec<Option<C64>>,
}

impl MomentTable {
    /// Empty table holding only the normalization entry `(0,0) = 1`.
    pub fn new(max_order: usize, order: OperatorOrder) -> Self {
        let n = (max_order + 1) * (max_order + 1);
        let mut values = vec![None; n];
        values[0] = Some(C64::new(1.0, 0.0));
        MomentTable { max_order, order, values, errors: vec![None; n] }
    }

    pub fn from_fn(max_order: usize, order: OperatorOrder, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut t = Self::new(max_order, order);
        for (l, m) in indices2(max_order) {
            if (l, m) != (0, 0) {
                let k = t.slot(l, m);
                t.values[k] = Some(f(l, m));
            }
        }
        t
    }

    fn slot(&self, l: usize, m: usize) -> usize {
        l * (self.max_order + 1) + m
    }

    fn in_range(&self, l: usize, m: usize) -> bool {
        l + m <= self.max_order
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn order(&self) -> OperatorOrder {
        self.order
    }

    pub fn get(&self, l: usize, m: usize) -> Option<C64> {
        if self.in_range(l, m) {
            self.values[self.slot(l, m)]
        } else {
            None
        }
    }

    pub fn value(&self, l: usize, m: usize) -> Result<C64> {
        self.get(l, m).ok_or_else(|| Error::MissingMoment(format!("({l},{m})")))
    }

    /// # Panics
    /// If `l + m` exceeds the table order.
    pub fn set(&mut self, l: usize, m: usize, v: C64) {
        assert!(self.in_range(l, m), "moment ({l},{m}) outside order {}", self.max_order);
        let s = self.slot(l, m);
        self.values[s] = Some(v);
    }

    /// Sets `(l,m)` and its mirror `(m,l) = conj`; diagonal entries are made real.
    pub fn set_hermitian(&mut self, l: usize, m: usize, v: C64) {
        if l == m {
            self.set(l, m, C64::new(v.re, 0.0));
        } else {
            self.set(l, m, v);
            self.set(m, l, v.conj());
        }
    }

    /// Removes entry `(l, m)` (not its mirror).
    pub fn clear_entry(&mut self, l: usize, m: usize) {
        if self.in_range(l, m) && (l, m) != (0, 0) {
            let s = self.slot(l, m);
            self.values[s] = None;
            self.errors[s] = None;
        }
    }

    pub fn error(&self, l: usize, m: usize) -> Option<C64> {
        if self.in_range(l, m) {
            self.errors[self.slot(l, m)]
        } else {
            None
        }
    }

    pub fn set_error(&mut self, l: usize, m: usize, e: C64) {
        assert!(self.in_range(l, m));
        let s = self.slot(l, m);
        self.errors[s] = Some(e);
    }

    pub fn has_errors(&self) -> bool {
        self.errors.iter().any(Option::is_some)
    }

    pub fn clear_errors(&mut self) {
        self.errors.iter_mut().for_each(|e| *e = None);
    }

    /// Present entries in `(l, m)` index order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), C64)> + '_ {
        indices2(self.max_order).filter_map(move |(l, m)| self.get(l, m).map(|v| ((l, m), v)))
    }

    pub fn conjugate_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for ((l, m), v) in self.iter() {
            if let Some(w) = self.get(m, l) {
                worst = worst.max((v - w.conj()).norm());
            }
        }
        worst
    }

    /// Copy truncated to a lower order.
    pub fn truncated(&self, max_order: usize) -> Self {
        let k = max_order.min(self.max_order);
        let mut t = Self::new(k, self.order);
        for (l, m) in indices2(k) {
            if let Some(v) = self.get(l, m) {
                t.set(l, m, v);
            }
            if let Some(e) = self.error(l, m) {
                t.set_error(l, m, e);
            }
        }
        t
    }

    /// Re-express the table in normal order. Missing lower entries are
    /// propagated as missing.
    pub fn to_normal_order(&self) -> Self {
        match self.order {
            OperatorOrder::Normal => self.clone(),
            OperatorOrder::Antinormal => {
                // ⟨a†^p a^q⟩ = Σ_k (-1)^k k! C(p,k) C(q,k) ⟨a^{q-k} a†^{p-k}⟩
                let mut t = Self::new(self.max_order, OperatorOrder::Normal);
                for (p, q) in indices2(self.max_order) {
                    let mut acc = C64::new(0.0, 0.0);
                    let mut ok = true;
                    for k in 0..=p.min(q) {
                        match self.get(q - k, p - k) {
                            Some(v) => {
                                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                                acc += v * (sign * factorial(k) * binomial(p, k) * binomial(q, k));
                            }
                            None => ok = false,
                        }
                    }
                    if ok {
                        t.set(p, q, acc);
                    }
                }
                t
            }
        }
    }

    pub fn to_antinormal_order(&self) -> Self {
        match self.order {
            OperatorOrder::Antinormal => self.clone(),
            OperatorOrder::Normal => {
                // ⟨a^r a†^s⟩ = Σ_k k! C(r,k) C(s,k) ⟨a†^{s-k} a^{r-k}⟩
                let mut t = Self::new(self.max_order, OperatorOrder::Antinormal);
                for (r, s) in indices2(self.max_order) {
                    let mut acc = C64::new(0.0, 0.0);
                    let mut ok = true;
                    for k in 0..=r.min(s) {
                        match self.get(s - k, r - k) {
                            Some(v) => acc += v * (factorial(k) * binomial(r, k) * binomial(s, k)),
                            None => ok = false,
                        }
                    }
                    if ok {
                        t.set(r, s, acc);
                    }
                }
                t
            }
        }
    }

    pub fn max_abs_diff(&self, other: &MomentTable) -> f64 {
        let mut worst = 0.0f64;
        for ((l, m), v) in self.iter() {
            match other.get(l, m) {
                Some(w) => worst = worst.max((v - w).norm()),
                None => return f64::INFINITY,
            }
        }
        worst
    }
}

/// All `(l, m)` with `l + m <= k`, ordered by `l` then `m`.
pub fn indices2(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=k).flat_map(move |l| (0..=k - l).map(move |m| (l, m)))
}

/// All `(l1, m1, l2, m2)` with total at most `k`, in lexicographic order.
pub fn indices4(k: usize) -> impl Iterator<Item = [usize; 4]> {
    (0..=k).flat_map(move |a| {
        (0..=k - a).flat_map(move |b| {
            (0..=k - a - b).flat_map(move |c| (0..=k - a - b - c).map(move |d| [a, b, c, d]))
        })
    })
}

/// Two-channel moment table indexed by `(l1, m1, l2, m2)`.
///
/// For envelopes the entry is `⟨S1†^l1 S1^m1 S2†^l2 S2^m2⟩`; for a noise
/// table it is `⟨V1^l1 V1†^m1 V2^l2 V2†^m2⟩`. Either way the table is
/// conjugation-symmetric under `(l1,m1,l2,m2) -> (m1,l1,m2,l2)`.
///
/// `blocks` optionally carries per-block replicas of the same table; the
/// standard errors are derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMomentTable {
    max_order: usize,
    values: Vec<Option<C64>>,
    errors: Vec<Option<C64>>,
    pub n_shots: Option<usize>,
    pub blocks: Vec<JointMomentTable>,
}

impl JointMomentTable {
    pub fn new(max_order: usize) -> Self {
        let n = (max_order + 1).pow(4);
        let mut values = vec![None; n];
        values[0] = Some(C64::new(1.0, 0.0));
        JointMomentTable { max_order, values, errors: vec![None; n], n_shots: None, blocks: Vec::new() }
    }

    pub fn from_fn(max_order: usize, mut f: impl FnMut([usize; 4]) -> C64) -> Self {
        let mut t = Self::new(max_order);
        for idx in indices4(max_order) {
            if idx != [0; 4] {
                let s = t.slot(idx);
                t.values[s] = Some(f(idx));
            }
        }
        t
    }

    fn slot(&self, [a, b, c, d]: [usize; 4]) -> usize {
        let n = self.max_order + 1;
        ((a * n + b) * n + c) * n + d
    }

    fn in_range(&self, idx: [usize; 4]) -> bool {
        idx.iter().sum::<usize>() <= self.max_order
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn get(&self, idx: [usize; 4]) -> Option<C64> {
        if self.in_range(idx) {
            self.values[self.slot(idx)]
        } else {
            None
        }
    }

    pub fn value(&self, idx: [usize; 4]) -> Result<C64> {
        self.get(idx).ok_or_else(|| Error::MissingMoment(format!("{idx:?}")))
    }

    pub fn set(&mut self, idx: [usize; 4], v: C64) {
        assert!(self.in_range(idx), "moment {idx:?} outside order {}", self.max_order);
        let s = self.slot(idx);
        self.values[s] = Some(v);
    }

    pub fn error(&self, idx: [usize; 4]) -> Option<C64> {
        if self.in_range(idx) {
            self.errors[self.slot(idx)]
        } else {
            None
        }
    }

    pub fn set_error(&mut self, idx: [usize; 4], e: C64) {
        assert!(self.in_range(idx));
        let s = self.slot(idx);
        self.errors[s] = Some(e);
    }

    pub fn has_errors(&self) -> bool {
        self.errors.iter().any(Option::is_some)
    }

    pub fn iter(&self) -> impl Iterator<Item = ([usize; 4], C64)> + '_ {
        indices4(self.max_order).filter_map(move |i| self.get(i).map(|v| (i, v)))
    }

    pub fn conjugate_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for ([a, b, c, d], v) in self.iter() {
            if let Some(w) = self.get([b, a, d, c]) {
                worst = worst.max((v - w.conj()).norm());
            }
        }
        worst
    }

    /// Channel-1 marginal `(l, m) -> entry(l, m, 0, 0)`.
    pub fn channel1(&self, order: OperatorOrder) -> MomentTable {
        self.marginal(order, |l, m| [l, m, 0, 0])
    }

    pub fn channel2(&self, order: OperatorOrder) -> MomentTable {
        self.marginal(order, |l, m| [0, 0, l, m])
    }

    fn marginal(&self, order: OperatorOrder, idx: impl Fn(usize, usize) -> [usize; 4]) -> MomentTable {
        let mut t = MomentTable::new(self.max_order, order);
        for (l, m) in indices2(self.max_order) {
            if let Some(v) = self.get(idx(l, m)) {
                t.set(l, m, v);
            }
            if let Some(e) = self.error(idx(l, m)) {
                t.set_error(l, m, e);
            }
        }
        t
    }

    /// Fills `errors` from the spread of `blocks`: stddev / sqrt(n_blocks),
    /// separately for real and imaginary parts.
    pub fn refresh_block_errors(&mut self) {
        if self.blocks.len() < 2 {
            return;
        }
        let idxs: Vec<_> = indices4(self.max_order).collect();
        for idx in idxs {
            let samples: Option<Vec<C64>> = self.blocks.iter().map(|b| b.get(idx)).collect();
            if let Some(samples) = samples {
                let e = block_standard_error(&samples);
                self.set_error(idx, e);
            }
        }
    }

    pub fn truncated(&self, max_order: usize) -> Self {
        let k = max_order.min(self.max_order);
        let mut t = Self::new(k);
        t.n_shots = self.n_shots;
        for idx in indices4(k) {
            if let Some(v) = self.get(idx) {
                t.set(idx, v);
            }
            if let Some(e) = self.error(idx) {
                t.set_error(idx, e);
            }
        }
        t.blocks = self.blocks.iter().map(|b| b.truncated(k)).collect();
        t
    }

    pub fn max_abs_diff(&self, other: &JointMomentTable) -> f64 {
        let mut worst = 0.0f64;
        for (i, v) in self.iter() {
            match other.get(i) {
                Some(w) => worst = worst.max((v - w).norm()),
                None => return f64::INFINITY,
            }
        }
        worst
    }
}

/// Standard error of the mean of block estimates, per component.
pub fn block_standard_error(samples: &[C64]) -> C64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return C64::new(f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<C64>() / n;
    let (vr, vi) = samples.iter().fold((0.0, 0.0), |(vr, vi), s| {
        let d = s - mean;
        (vr + d.re * d.re, vi + d.im * d.im)
    });
    C64::new((vr / (n - 1.0)).sqrt() / n.sqrt(), (vi / (n - 1.0)).sqrt() / n.sqrt())
}

// ---------------------------------------------------------------------------
// JSON representation: complex values as [re, im], keys as "l,m" / "l1,m1,l2,m2".

struct KeyedEntries<'a, K, I>(&'a [(K, I)]);

impl<K: AsRef<[usize]>, I: Copy + Into<[f64; 2]>> Serialize for KeyedEntries<'_, K, I> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            let key = k.as_ref().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
            map.serialize_entry(&key, &Into::<[f64; 2]>::into(*v))?;
        }
        map.end()
    }
}

#[derive(Clone, Copy)]
struct Pair(C64);

impl From<Pair> for [f64; 2] {
    fn from(p: Pair) -> Self {
        [p.0.re, p.0.im]
    }
}

fn parse_key<const N: usize>(key: &str) -> std::result::Result<[usize; N], String> {
    let parts: Vec<&str> = key.split(',').collect();
    if parts.len() != N {
        return Err(format!("moment key {key:?} must have {N} indices"));
    }
    let mut out = [0usize; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| format!("bad index in moment key {key:?}"))?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct MomentTableOut<'a> {
    max_order: usize,
    ordering: OperatorOrder,
    entries: KeyedEntries<'a, [usize; 2], Pair>,
    #[serde(skip_serializing_if = "is_empty")]
    errors: KeyedEntries<'a, [usize; 2], Pair>,
}

fn is_empty<K, I>(e: &KeyedEntries<'_, K, I>) -> bool {
    e.0.is_empty()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentTableIn {
    max_order: usize,
    ordering: OperatorOrder,
    entries: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    errors: BTreeMap<String, [f64; 2]>,
}

impl Serialize for MomentTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<([usize; 2], Pair)> = self.iter().map(|((l, m), v)| ([l, m], Pair(v))).collect();
        let errors: Vec<([usize; 2], Pair)> = indices2(self.max_order)
            .filter_map(|(l, m)| self.error(l, m).map(|e| ([l, m], Pair(e))))
            .collect();
        MomentTableOut {
            max_order: self.max_order,
            ordering: self.order,
            entries: KeyedEntries(&entries),
            errors: KeyedEntries(&errors),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MomentTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MomentTableIn::deserialize(d)?;
        if raw.max_order > MAX_ORDER {
            return Err(D::Error::custom(format!("max_order {} exceeds {MAX_ORDER}", raw.max_order)));
        }
        let mut t = MomentTable::new(raw.max_order, raw.ordering);
        for (k, [re, im]) in raw.entries {
            let [l, m] = parse_key::<2>(&k).map_err(D::Error::custom)?;
            if l + m > raw.max_order {
                return Err(D::Error::custom(format!("moment {k} exceeds max_order")));
            }
            t.set(l, m, C64::new(re, im));
        }
        for (k, [re, im]) in raw.errors {
            let [l, m] = parse_key::<2>(&k).map_err(D::Error::custom)?;
            if l + m > raw.max_order {
                return Err(D::Error::custom(format!("error {k} exceeds max_order")));
            }
            t.set_error(l, m, C64::new(re, im));
        }
        Ok(t)
    }
}

#[derive(Serialize)]
struct JointOut<'a> {
    max_order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_shots: Option<usize>,
    entries: KeyedEntries<'a, [usize; 4], Pair>,
    #[serde(skip_serializing_if = "is_empty")]
    errors: KeyedEntries<'a, [usize; 4], Pair>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    blocks: &'a [JointMomentTable],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JointIn {
    max_order: usize,
    #[serde(default)]
    n_shots: Option<usize>,
    entries: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    errors: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    blocks: Vec<JointMomentTable>,
}

impl Serialize for JointMomentTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<([usize; 4], Pair)> = self.iter().map(|(i, v)| (i, Pair(v))).collect();
        let errors: Vec<([usize; 4], Pair)> =
            indices4(self.max_order).filter_map(|i| self.error(i).map(|e| (i, Pair(e)))).collect();
        JointOut {
            max_order: self.max_order,
            n_shots: self.n_shots,
            entries: KeyedEntries(&entries),
            errors: KeyedEntries(&errors),
            blocks: &self.blocks,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for JointMomentTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = JointIn::deserialize(d)?;
        if raw.max_order > MAX_ORDER {
            return Err(D::Error::custom(format!("max_order {} exceeds {MAX_ORDER}", raw.max_order)));
        }
        let mut t = JointMomentTable::new(raw.max_order);
        t.n_shots = raw.n_shots;
        for (k, [re, im]) in raw.entries {
            let idx = parse_key::<4>(&k).map_err(D::Error::custom)?;
            if !t.in_range(idx) {
                return Err(D::Error::custom(format!("moment {k} exceeds max_order")));
            }
            t.set(idx, C64::new(re, im));
        }
        for (k, [re, im]) in raw.errors {
            let idx = parse_key::<4>(&k).map_err(D::Error::custom)?;
            if !t.in_range(idx) {
                return Err(D::Error::custom(format!("error {k} exceeds max_order")));
            }
            t.set_error(idx, C64::new(re, im));
        }
        t.blocks = raw.blocks;
        Ok(t)
    }
}
