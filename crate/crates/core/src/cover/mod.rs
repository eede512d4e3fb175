//! Moment-matching fingerprints of PMDs and the dynamic-programming proper
//! cover built on them.
//!
//! A fingerprint (`CoverData`) is relative to a guess matrix `G` whose entry
//! `G[i][j]` approximates `1 + s_j(X^i)` within a factor of two, where `X^i`
//! is the sum of the `i`-maximal components. Every rounded quantity is an
//! integer multiple of its grid, so fingerprints add exactly.

mod lower_bound;

pub use lower_bound::{lower_bound_family, verify_moment_separation, LowerBoundFamily};

use std::collections::HashMap;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{for_each_composition, CategoricalRv, Pmd};

/// Default hard cap on the number of distinct fingerprints per DP level.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;
/// Largest guess grid the solvers will iterate over.
pub const GUESS_LIMIT: u64 = 10_000_000;
/// States expanded per parallel task in the DP.
const DP_CHUNK: usize = 256;
/// Largest rounded magnitude that still rounds exactly in `f64`.
const ROUNDING_LIMIT: f64 = 9.007_199_254_740_992e15;

/// Cover tolerances. Unset fields fall back to the moment-matching formulas
/// evaluated at `epsilon / k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverParams {
    pub epsilon: f64,
    /// Constant used by the default formulas.
    pub c: f64,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub gamma: Option<f64>,
    pub k2: Option<u32>,
    pub cap: usize,
}

impl CoverParams {
    pub fn new(epsilon: f64) -> Self {
        CoverParams { epsilon, c: 1.0, delta1: None, delta2: None, gamma: None, k2: None, cap: DEFAULT_STATE_CAP }
    }

    /// Coarse desk-scale settings: nothing is exceptional and moments of
    /// degree at most two are kept on a grid of `gamma / (n (2k)^|m|)`.
    pub fn coarse(epsilon: f64, gamma: f64) -> Self {
        CoverParams { delta1: Some(1.0), delta2: Some(1.0), gamma: Some(gamma), k2: Some(4), ..Self::new(epsilon) }
    }

    pub fn resolve(&self, k: usize) -> Result<Resolved> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if k < 2 {
            return Err(Error::TooFewOutcomes(k));
        }
        let kf = k as f64;
        let eps = self.epsilon / kf;
        let big = self.c * kf * (kf / eps).ln();
        let inv = (1.0 / eps).ln();
        let r = Resolved {
            eps_prime: eps,
            delta1: self.delta1.unwrap_or_else(|| eps * big.powf(-(3.0 * kf + 3.0))),
            delta2: self.delta2.unwrap_or_else(|| (1.0 / (kf * inv.powf(0.75))).min(1.0)),
            gamma: self.gamma.unwrap_or_else(|| eps * big.powf(-(2.0 * kf + 1.0))),
            k2: self.k2.unwrap_or_else(|| (self.c * (inv / inv.ln().max(1.0) + kf)).ceil() as u32),
        };
        if !(r.delta1 > 0.0 && r.delta1 <= r.delta2 && r.delta2 <= 1.0) {
            return Err(Error::InvalidParameter(format!("need 0 < delta1 <= delta2 <= 1, got {} and {}", r.delta1, r.delta2)));
        }
        if !(r.gamma > 0.0) || r.k2 < 2 {
            return Err(Error::InvalidParameter("gamma must be positive and K2 at least 2".into()));
        }
        Ok(r)
    }
}

/// Tolerances after defaults are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolved {
    pub eps_prime: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma: f64,
    pub k2: u32,
}

/// Guess matrix with entries `(2^a + 3) / 4`; only off-diagonal exponents matter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GuessMatrix {
    k: usize,
    exps: Vec<u32>,
}

impl GuessMatrix {
    pub fn new(k: usize, exps: Vec<u32>) -> Result<Self> {
        if exps.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, found: exps.len() });
        }
        let mut exps = exps;
        (0..k).for_each(|i| exps[i * k + i] = 0);
        Ok(GuessMatrix { k, exps })
    }

    pub fn ones(k: usize) -> Self {
        GuessMatrix { k, exps: vec![0; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn exponent(&self, i: usize, j: usize) -> u32 {
        self.exps[i * self.k + j]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        (2f64.powi(self.exponent(i, j) as i32) + 3.0) / 4.0
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.exps[i * self.k..(i + 1) * self.k]
    }
}

/// Largest exponent with `(2^a + 3) / 4 <= n`.
pub fn max_guess_exponent(n: usize) -> u32 {
    let mut a = 0;
    while (1u128 << (a + 1)) + 3 <= 4 * n as u128 {
        a += 1;
    }
    a
}

/// All guess matrices for `n` CRVs, in lexicographic order of the
/// off-diagonal exponents (row-major).
pub fn guess_grid(n: usize, k: usize) -> Result<Vec<GuessMatrix>> {
    let base = max_guess_exponent(n.max(1)) as u64 + 1;
    let slots = k * (k - 1);
    let total = (0..slots).try_fold(1u64, |acc, _| acc.checked_mul(base).filter(|t| *t <= GUESS_LIMIT));
    let total = total.ok_or(Error::StateExplosion { states: usize::MAX, cap: GUESS_LIMIT as usize })?;
    let offdiag: Vec<usize> = (0..k * k).filter(|ix| ix / k != ix % k).collect();
    Ok((0..total)
        .map(|mut idx| {
            let mut exps = vec![0u32; k * k];
            for &slot in offdiag.iter().rev() {
                exps[slot] = (idx % base) as u32;
                idx /= base;
            }
            GuessMatrix { k, exps }
        })
        .collect())
}

fn is_exceptional(crv: &CategoricalRv, i: usize, delta: f64, scale: impl Fn(usize) -> f64) -> bool {
    (0..crv.k()).any(|j| j != i && crv.p(j) >= delta * scale(j).sqrt())
}

/// Labels each CRV of a group declared `i`-maximal as exceptional (`true`)
/// when some `j != i` has `p_j >= delta sqrt(scale_j)`.
pub fn classify_exceptional(group: &[CategoricalRv], i: usize, delta: f64, scale: &[f64]) -> Vec<bool> {
    group.iter().map(|crv| is_exceptional(crv, i, delta, |j| scale[j])).collect()
}

/// Group of an `i`-maximal CRV under `G`: 0, 1 or 2.
fn group_of(crv: &CategoricalRv, g: &GuessMatrix, r: &Resolved) -> usize {
    let i = crv.maximal_index();
    let scale = |j| g.value(i, j);
    if is_exceptional(crv, i, r.delta2, scale) {
        2
    } else if is_exceptional(crv, i, r.delta1, scale) {
        1
    } else {
        0
    }
}

/// Rounded fingerprint of a PMD relative to a guess matrix.
///
/// `dense` holds, per maximal index `i`, the group counts, the floored means
/// `s~_{j,i}` and the rounded group moments. `exceptional` is the sorted
/// multiset of rounded group-3 CRVs, keyed by `[i, rounded p_j (j != i)]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoverData {
    pub dense: Vec<i64>,
    pub exceptional: Vec<(Vec<i64>, u32)>,
}

impl CoverData {
    pub fn zero(len: usize) -> Self {
        CoverData { dense: vec![0; len], exceptional: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.dense.iter().all(|x| *x == 0) && self.exceptional.is_empty()
    }

    pub fn add(&self, other: &CoverData) -> CoverData {
        let dense = self.dense.iter().zip(&other.dense).map(|(a, b)| a + b).collect();
        let mut exceptional = self.exceptional.clone();
        for (key, count) in &other.exceptional {
            match exceptional.binary_search_by(|(k, _)| k.cmp(key)) {
                Ok(pos) => exceptional[pos].1 += count,
                Err(pos) => exceptional.insert(pos, (key.clone(), *count)),
            }
        }
        CoverData { dense, exceptional }
    }

    /// `self - other`, or `None` when some entry would go negative.
    pub fn checked_sub(&self, other: &CoverData) -> Option<CoverData> {
        let dense: Vec<i64> = self.dense.iter().zip(&other.dense).map(|(a, b)| a - b).collect();
        let mut exceptional = self.exceptional.clone();
        for (key, count) in &other.exceptional {
            let pos = exceptional.binary_search_by(|(k, _)| k.cmp(key)).ok()?;
            if exceptional[pos].1 < *count {
                return None;
            }
            exceptional[pos].1 -= count;
            if exceptional[pos].1 == 0 {
                exceptional.remove(pos);
            }
        }
        Some(CoverData { dense, exceptional })
    }

    /// Componentwise `self <= other`, with multiset inclusion for the exceptional part.
    pub fn dominated_by(&self, other: &CoverData) -> bool {
        self.dense.iter().zip(&other.dense).all(|(a, b)| a <= b)
            && self.exceptional.iter().all(|(key, c)| {
                other.exceptional.binary_search_by(|(k, _)| k.cmp(key)).map_or(false, |pos| other.exceptional[pos].1 >= *c)
            })
    }
}

/// Index arithmetic for the dense part of [`CoverData`].
#[derive(Debug, Clone)]
pub struct DataLayout {
    k: usize,
    n: usize,
    res: Resolved,
    /// Moment exponents (with `m_i = 0`) of degree at most 2, per `i`.
    low: Vec<Vec<Vec<u32>>>,
    /// Moment exponents (with `m_i = 0`) of degree at most `K2`, per `i`.
    high: Vec<Vec<Vec<u32>>>,
    block: usize,
}

fn moment_indices(k: usize, i: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 1..=max_degree as usize {
        for_each_composition(d, k, |m| {
            if m[i] == 0 {
                out.push(m.iter().map(|x| *x as u32).collect());
            }
        });
    }
    out
}

impl DataLayout {
    /// Layout for PMDs of `n` CRVs over `k` outcomes.
    pub fn new(k: usize, n: usize, params: &CoverParams) -> Result<Self> {
        let res = params.resolve(k)?;
        let low: Vec<_> = (0..k).map(|i| moment_indices(k, i, 2)).collect();
        // With delta1 >= delta2 every CRV exceptional at delta1 is also
        // exceptional at delta2, so the middle group is empty.
        let middle = res.delta1 < res.delta2;
        let high: Vec<_> = (0..k).map(|i| if middle { moment_indices(k, i, res.k2) } else { Vec::new() }).collect();
        let block = 3 + (k - 1) + low[0].len() + high[0].len();
        Ok(DataLayout { k, n: n.max(1), res, low, high, block })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolved(&self) -> &Resolved {
        &self.res
    }

    pub fn len(&self) -> usize {
        self.k * self.block
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(n1, n2, n3)` for the `i`-maximal components.
    pub fn counts(&self, d: &CoverData, i: usize) -> [i64; 3] {
        let b = i * self.block;
        [d.dense[b], d.dense[b + 1], d.dense[b + 2]]
    }

    fn s_slot(&self, i: usize, j: usize) -> usize {
        i * self.block + 3 + if j < i { j } else { j - 1 }
    }

    /// `s~_{j,i}` in units of `1 / (4n)`.
    pub fn s_tilde_units(&self, d: &CoverData, i: usize, j: usize) -> i64 {
        d.dense[self.s_slot(i, j)]
    }

    /// Fingerprint of a single CRV.
    pub fn crv_data(&self, crv: &CategoricalRv, g: &GuessMatrix) -> Result<CoverData> {
        if crv.k() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: crv.k() });
        }
        let i = crv.maximal_index();
        let mut d = CoverData::zero(self.len());
        let group = group_of(crv, g, &self.res);
        d.dense[i * self.block + group] = 1;
        let quarter = 4.0 * self.n as f64;
        for j in (0..self.k).filter(|j| *j != i) {
            let x = crv.p(j) * quarter;
            d.dense[self.s_slot(i, j)] = (x + 1e-12 * x.max(1.0)).floor() as i64;
        }
        let two_k = 2.0 * self.k as f64;
        let base = i * self.block + 3 + (self.k - 1);
        match group {
            0 => {
                for (slot, m) in self.low[i].iter().enumerate() {
                    let grid = self.res.gamma / (self.n as f64 * two_k.powi(degree(m)));
                    d.dense[base + slot] = round_to(moment(crv, m), grid)?;
                }
            }
            1 => {
                let scale = self.res.delta1 * self.res.delta1 / two_k;
                for (slot, m) in self.high[i].iter().enumerate() {
                    let grid = self.res.gamma / two_k.powi(degree(m)) * scale;
                    d.dense[base + self.low[i].len() + slot] = round_to(moment(crv, m), grid)?;
                }
            }
            _ => {
                let kf = self.k as f64;
                let grid = self.res.eps_prime * self.res.delta2 * self.res.delta2 / (2.0 * kf * kf);
                let mut key = vec![i as i64];
                for j in (0..self.k).filter(|j| *j != i) {
                    key.push(round_to(crv.p(j), grid)?);
                }
                d.exceptional.push((key, 1));
            }
        }
        Ok(d)
    }

    /// Fingerprint of a sum of CRVs (the sum of the per-CRV fingerprints).
    pub fn data_of(&self, crvs: &[CategoricalRv], g: &GuessMatrix) -> Result<CoverData> {
        crvs.iter().try_fold(CoverData::zero(self.len()), |acc, c| Ok(acc.add(&self.crv_data(c, g)?)))
    }

    fn each_pair(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.k).flat_map(move |i| (0..self.k).filter(move |j| *j != i).map(move |j| (i, j)))
    }

    /// `1 + s~ <= 2 G` for every pair; the DP prunes data failing this.
    pub fn within_upper(&self, d: &CoverData, g: &GuessMatrix) -> bool {
        let n = self.n as i128;
        self.each_pair().all(|(i, j)| {
            let c = self.s_tilde_units(d, i, j) as i128;
            4 * n + c <= 2 * n * ((1i128 << g.exponent(i, j)) + 3)
        })
    }

    /// `G <= 1 + max(0, s~ - slack)` for every pair, `slack` in quarters.
    fn within_lower(&self, d: &CoverData, g: &GuessMatrix, slack_quarters: i128) -> bool {
        let n = self.n as i128;
        self.each_pair().all(|(i, j)| {
            let c = self.s_tilde_units(d, i, j) as i128;
            n * ((1i128 << g.exponent(i, j)) + 3) <= 4 * n + (c - slack_quarters * n).max(0)
        })
    }

    /// The output filter of the cover DP: lower bound with slack 1/4 plus the upper bound.
    pub fn condition(&self, d: &CoverData, g: &GuessMatrix) -> bool {
        self.within_lower(d, g, 1) && self.within_upper(d, g)
    }

    /// The stronger variant (slack 3/4) that some guess always satisfies.
    pub fn strong_condition(&self, d: &CoverData, g: &GuessMatrix) -> bool {
        self.within_lower(d, g, 3) && self.within_upper(d, g)
    }
}

fn degree(m: &[u32]) -> i32 {
    m.iter().sum::<u32>() as i32
}

fn moment(crv: &CategoricalRv, m: &[u32]) -> f64 {
    m.iter().enumerate().map(|(j, e)| crv.p(j).powi(*e as i32)).product()
}

fn round_to(x: f64, grid: f64) -> Result<i64> {
    let q = x / grid;
    if !q.is_finite() || q.abs() >= ROUNDING_LIMIT {
        return Err(Error::Overflow);
    }
    Ok(q.round() as i64)
}

/// Fingerprint of `pmd` relative to `G`, with means on the grid `1 / (4 n)`.
pub fn data_vector(pmd: &Pmd, g: &GuessMatrix, params: &CoverParams) -> Result<CoverData> {
    DataLayout::new(pmd.k(), pmd.n(), params)?.data_of(pmd.components(), g)
}

/// Distinct fingerprints of a choice set, each with the first CRV producing it.
#[derive(Debug, Clone)]
pub struct TypeSet {
    pub data: Vec<CoverData>,
    pub members: Vec<Vec<usize>>,
}

impl TypeSet {
    pub fn build(layout: &DataLayout, crvs: &[CategoricalRv], g: &GuessMatrix) -> Result<Self> {
        let datas: Vec<CoverData> = crvs.par_iter().map(|c| layout.crv_data(c, g)).collect::<Result<_>>()?;
        let mut index: IndexMap<CoverData, Vec<usize>> = IndexMap::new();
        for (ix, d) in datas.into_iter().enumerate() {
            index.entry(d).or_default().push(ix);
        }
        let (data, members) = index.into_iter().unzip();
        Ok(TypeSet { data, members })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// One DP level: distinct data with `(parent state, type index)` back-pointers.
pub type Level = IndexMap<CoverData, (u32, u32)>;

/// All levels of a DP run; level `h` holds data of sums of the first `h` choice sets.
#[derive(Debug, Clone)]
pub struct DpRun {
    pub levels: Vec<Level>,
    pub types: Vec<TypeSet>,
}

impl DpRun {
    /// Indices (into each choice set) of a representative whose data is state `idx` of level `h`.
    pub fn representative(&self, h: usize, idx: usize) -> Vec<usize> {
        let mut out = vec![0; h];
        let mut cur = idx;
        for level in (1..=h).rev() {
            let (parent, t) = *self.levels[level].get_index(cur).expect("state index").1;
            out[level - 1] = self.types[level - 1].members[t as usize][0];
            cur = parent as usize;
        }
        out
    }
}

/// Runs the DP over `types` (one type set per step), keeping only data
/// accepted by `keep`. Expansion is parallel; the merge is sequential in
/// (state, type) order so results do not depend on the thread count.
pub fn run_dp(
    layout: &DataLayout,
    types: Vec<TypeSet>,
    keep: &(dyn Fn(&CoverData) -> bool + Sync),
    cap: usize,
) -> Result<DpRun> {
    let mut levels: Vec<Level> = Vec::with_capacity(types.len() + 1);
    let mut start = Level::new();
    start.insert(CoverData::zero(layout.len()), (0, 0));
    levels.push(start);
    for step in &types {
        let prev = levels.last().expect("nonempty");
        let keys: Vec<&CoverData> = prev.keys().collect();
        let mut level = Level::new();
        // Expand a window of states at a time so memory stays near the level size.
        for (w, window) in keys.chunks(DP_CHUNK * 64).enumerate() {
            let batches: Vec<Vec<(CoverData, u32, u32)>> = window
                .par_chunks(DP_CHUNK)
                .enumerate()
                .map(|(chunk, states)| {
                    let mut out = Vec::new();
                    for (offset, d) in states.iter().enumerate() {
                        let parent = (w * DP_CHUNK * 64 + chunk * DP_CHUNK + offset) as u32;
                        for (t, td) in step.data.iter().enumerate() {
                            let next = d.add(td);
                            if keep(&next) {
                                out.push((next, parent, t as u32));
                            }
                        }
                    }
                    out
                })
                .collect();
            for (d, parent, t) in batches.into_iter().flatten() {
                level.entry(d).or_insert((parent, t));
                if level.len() > cap {
                    return Err(Error::StateExplosion { states: level.len(), cap });
                }
            }
        }
        levels.push(level);
    }
    Ok(DpRun { levels, types })
}

/// Guesses partitioned by the exceptional classification they induce on a
/// set of CRVs. Guesses in one class produce identical fingerprints.
#[derive(Debug, Clone)]
pub struct GuessClasses {
    /// Guess grid in lexicographic order.
    pub guesses: Vec<GuessMatrix>,
    /// Class id of each guess.
    pub class_of: Vec<usize>,
    /// Componentwise-largest exponents in each class, used for pruning.
    pub envelope: Vec<GuessMatrix>,
    /// First guess of each class.
    pub first: Vec<usize>,
}

pub fn guess_classes(n: usize, k: usize, crvs: &[&CategoricalRv], res: &Resolved) -> Result<GuessClasses> {
    let guesses = guess_grid(n, k)?;
    // Row signatures: the classification of every i-maximal CRV under row i.
    let mut row_ids: Vec<HashMap<Vec<u32>, usize>> = vec![HashMap::new(); k];
    let mut row_sig_ids: Vec<HashMap<Vec<u8>, usize>> = vec![HashMap::new(); k];
    let by_max: Vec<Vec<&CategoricalRv>> =
        (0..k).map(|i| crvs.iter().copied().filter(|c| c.maximal_index() == i).collect()).collect();
    let mut class_ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut class_of = Vec::with_capacity(guesses.len());
    let mut envelope: Vec<GuessMatrix> = Vec::new();
    let mut first = Vec::new();
    for (gi, g) in guesses.iter().enumerate() {
        let mut sig = Vec::with_capacity(k);
        for i in 0..k {
            let row = g.row(i).to_vec();
            let id = match row_ids[i].get(&row) {
                Some(id) => *id,
                None => {
                    let labels: Vec<u8> = by_max[i].iter().map(|c| group_of(c, g, res) as u8).collect();
                    let fresh = row_sig_ids[i].len();
                    let sid = *row_sig_ids[i].entry(labels).or_insert(fresh);
                    row_ids[i].insert(row, sid);
                    sid
                }
            };
            sig.push(id);
        }
        let n_classes = class_ids.len();
        let cid = *class_ids.entry(sig).or_insert(n_classes);
        if cid == envelope.len() {
            envelope.push(g.clone());
            first.push(gi);
        } else {
            let env = &mut envelope[cid];
            for (e, x) in env.exps.iter_mut().zip(&g.exps) {
                *e = (*e).max(*x);
            }
        }
        class_of.push(cid);
    }
    Ok(GuessClasses { guesses, class_of, envelope, first })
}

/// Per-class DP results over fixed choice sets.
#[derive(Debug)]
pub struct CoverRuns {
    pub layout: DataLayout,
    pub classes: GuessClasses,
    pub runs: Vec<DpRun>,
}

/// Runs the cover DP once per guess class over `choice_sets`.
pub fn cover_runs(choice_sets: &[Vec<CategoricalRv>], params: &CoverParams) -> Result<CoverRuns> {
    let n = choice_sets.len();
    let k = choice_sets
        .iter()
        .flatten()
        .map(|c| c.k())
        .next()
        .ok_or(Error::EmptyPmd)?;
    if let Some(bad) = choice_sets.iter().flatten().find(|c| c.k() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: bad.k() });
    }
    if choice_sets.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidParameter("empty choice set".into()));
    }
    let layout = DataLayout::new(k, n, params)?;
    let all: Vec<&CategoricalRv> = choice_sets.iter().flatten().collect();
    let classes = guess_classes(n, k, &all, layout.resolved())?;
    let runs = classes
        .envelope
        .iter()
        .map(|env| {
            let types = choice_sets.iter().map(|s| TypeSet::build(&layout, s, env)).collect::<Result<Vec<_>>>()?;
            let keep = |d: &CoverData| layout.within_upper(d, env);
            run_dp(&layout, types, &keep, params.cap)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoverRuns { layout, classes, runs })
}

/// A cover element: the first guess accepting it, its data and a representative.
#[derive(Debug, Clone, Serialize)]
pub struct CoverEntry {
    pub guess: GuessMatrix,
    pub data: CoverData,
    pub pmd: Pmd,
}

/// Proper cover of all sums `X_1 + ... + X_n` with `X_h` drawn from `choice_sets[h]`.
pub fn dp_cover(choice_sets: &[Vec<CategoricalRv>], params: &CoverParams) -> Result<Vec<CoverEntry>> {
    let runs = cover_runs(choice_sets, params)?;
    let n = choice_sets.len();
    let mut out = Vec::new();
    for (cid, run) in runs.runs.iter().enumerate() {
        let members: Vec<&GuessMatrix> =
            runs.classes.guesses.iter().zip(&runs.classes.class_of).filter(|(_, c)| **c == cid).map(|(g, _)| g).collect();
        for (idx, d) in run.levels[n].keys().enumerate() {
            if let Some(g) = members.iter().find(|g| runs.layout.condition(d, g)) {
                let picks = run.representative(n, idx);
                let crvs = picks.iter().enumerate().map(|(h, &ix)| choice_sets[h][ix].clone()).collect();
                out.push(CoverEntry { guess: (*g).clone(), data: d.clone(), pmd: Pmd::new(crvs)? });
            }
        }
    }
    Ok(out)
}

/// All `k`-CRVs whose probabilities are multiples of `1 / denom`.
pub fn crv_grid(k: usize, denom: usize) -> Vec<CategoricalRv> {
    let mut out = Vec::new();
    for_each_composition(denom, k, |c| {
        let probs = c.iter().map(|x| *x as f64 / denom as f64).collect();
        out.push(CategoricalRv::new(probs).expect("grid point is a distribution"));
    });
    out
}

/// Proper cover of all `(n, k)`-PMDs: the DP over the grid of CRVs with
/// probabilities in multiples of `1 / ceil(1 / grid_step)` (default step `epsilon / n`).
pub fn proper_cover(n: usize, k: usize, grid_step: Option<f64>, params: &CoverParams) -> Result<Vec<Pmd>> {
    let step = grid_step.unwrap_or(params.epsilon / n as f64);
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!("grid step {step} outside (0, 1]")));
    }
    let denom = (1.0 / step - 1e-9).ceil() as usize;
    let grid = crv_grid(k, denom);
    let sets = vec![grid; n];
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for entry in dp_cover(&sets, params)? {
        let key: Vec<u64> = entry.pmd.components().iter().flat_map(|c| c.probs().iter().map(|p| p.to_bits())).collect();
        if seen.insert(key) {
            out.push(entry.pmd);
        }
    }
    Ok(out)
}
