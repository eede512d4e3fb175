//! Anonymous games: each player's utility depends on its own strategy and on
//! how many of the other players chose each strategy.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cover::{
    crv_grid, guess_classes, proper_cover, run_dp, CoverData, CoverParams, DataLayout, DpRun, GuessMatrix, TypeSet,
};
use crate::error::{Error, Result};
use crate::fourier::exact_pmf_fft;
use crate::model::{exact_pmf_of, for_each_composition, tv_distance, CategoricalRv, DensePmf};

/// Slack added to every best-response comparison to absorb round-off.
pub const CERT_TOL: f64 = 1e-12;

/// Number of vectors of `parts` nonnegative integers summing to `total`.
pub fn composition_count(total: usize, parts: usize) -> usize {
    if parts == 0 {
        return usize::from(total == 0);
    }
    // C(total + parts - 1, parts - 1), built incrementally so every step is exact.
    let mut c = 1usize;
    for j in 1..parts {
        c = c * (total + j) / j;
    }
    c
}

/// Position of `x` among the compositions of its sum in lexicographic order
/// (the order of [`for_each_composition`]).
pub fn composition_rank(x: &[usize]) -> usize {
    let k = x.len();
    let mut left: usize = x.iter().sum();
    let mut r = 0;
    for pos in 0..k.saturating_sub(1) {
        for v in 0..x[pos] {
            r += composition_count(left - v, k - pos - 1);
        }
        left -= x[pos];
    }
    r
}

/// An `n`-player, `k`-strategy anonymous game with utilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymousGame {
    n: usize,
    k: usize,
    /// `table[i * k + l][r]` is `u^i_l` at the composition of rank `r`.
    table: Vec<Vec<f64>>,
}

impl AnonymousGame {
    /// Builds a game from dense tables indexed `[player][strategy][composition rank]`.
    pub fn new(n: usize, k: usize, tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if n == 0 || k < 2 {
            return Err(Error::InvalidGame(format!("need n >= 1 and k >= 2, got n = {n}, k = {k}")));
        }
        if tables.len() != n || tables.iter().any(|t| t.len() != k) {
            return Err(Error::InvalidGame("need one table per player and strategy".into()));
        }
        let size = composition_count(n - 1, k);
        let mut table = Vec::with_capacity(n * k);
        for (i, row) in tables.into_iter().enumerate() {
            for (l, t) in row.into_iter().enumerate() {
                if t.len() != size {
                    return Err(Error::InvalidGame(format!("u[{i}][{l}] has {} entries, expected {size}", t.len())));
                }
                if let Some(v) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::InvalidGame(format!("utility {v} outside [0, 1]")));
                }
                table.push(t);
            }
        }
        Ok(AnonymousGame { n, k, table })
    }

    /// Materializes `f(i, l, x)` over all partitions `x` of `n - 1`.
    pub fn from_fn(n: usize, k: usize, mut f: impl FnMut(usize, usize, &[usize]) -> f64) -> Result<Self> {
        let tables = (0..n.max(1))
            .map(|i| {
                (0..k)
                    .map(|l| {
                        let mut t = Vec::new();
                        for_each_composition(n.saturating_sub(1), k.max(1), |x| t.push(f(i, l, x)));
                        t
                    })
                    .collect()
            })
            .collect();
        Self::new(n, k, tables)
    }

    /// Uniformly random utilities.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Result<Self> {
        Self::from_fn(n, k, |_, _, _| rng.random::<f64>())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange(format!("player {i} of {}", self.n)));
        }
        Ok(())
    }

    /// `u^i_l(x)` for a partition `x` of `n - 1`.
    pub fn utility(&self, i: usize, l: usize, x: &[usize]) -> Result<f64> {
        self.check_player(i)?;
        if l >= self.k {
            return Err(Error::IndexOutOfRange(format!("strategy {l} of {}", self.k)));
        }
        if x.len() != self.k || x.iter().sum::<usize>() != self.n - 1 {
            return Err(Error::IndexOutOfRange(format!("{x:?} is not a partition of {}", self.n - 1)));
        }
        Ok(self.table[i * self.k + l][composition_rank(x)])
    }

    /// Utilities rounded to multiples of `step`, clamped to `[0, 1]`.
    pub fn rounded(&self, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!("rounding step {step} must be positive")));
        }
        let table = self
            .table
            .iter()
            .map(|t| t.iter().map(|v| ((v / step).round() * step).clamp(0.0, 1.0)).collect())
            .collect();
        Ok(AnonymousGame { n: self.n, k: self.k, table })
    }

    /// Expected utilities of player `i` for every strategy against the PMF of the others' sum.
    pub fn utilities_against(&self, i: usize, others: &DensePmf) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        let mut rank = 0;
        for_each_composition(self.n - 1, self.k, |x| {
            let xi: Vec<i64> = x.iter().map(|v| *v as i64).collect();
            let p = others.get(&xi);
            if p != 0.0 {
                for (l, o) in out.iter_mut().enumerate() {
                    *o += p * self.table[i * self.k + l][rank];
                }
            }
            rank += 1;
        });
        out
    }

    pub fn to_json(&self) -> String {
        let mut utilities = Map::new();
        for i in 0..self.n {
            for l in 0..self.k {
                let mut entries = Map::new();
                let mut rank = 0;
                for_each_composition(self.n - 1, self.k, |x| {
                    let key = x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
                    entries.insert(key, Value::from(self.table[i * self.k + l][rank]));
                    rank += 1;
                });
                utilities.insert(format!("{i},{l}"), Value::Object(entries));
            }
        }
        let doc = serde_json::json!({ "n": self.n, "k": self.k, "utilities": utilities });
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    /// Parses `{"n", "k", "utilities": {"i,l": {"x_1,...,x_k": value}}}` with 0-based `i` and `l`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let field = |name: &str| doc.get(name).and_then(Value::as_u64).map(|v| v as usize);
        let (n, k) = match (field("n"), field("k")) {
            (Some(n), Some(k)) => (n, k),
            _ => return Err(Error::Parse("missing integer fields n and k".into())),
        };
        if n == 0 || k < 2 {
            return Err(Error::InvalidGame(format!("need n >= 1 and k >= 2, got n = {n}, k = {k}")));
        }
        let utilities = doc
            .get("utilities")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Parse("missing object field utilities".into()))?;
        let size = composition_count(n - 1, k);
        let mut tables = vec![vec![vec![f64::NAN; size]; k]; n];
        for (key, entries) in utilities {
            let [i, l] = parse_indices(key)?[..] else {
                return Err(Error::Parse(format!("utility key {key:?} is not \"i,l\"")));
            };
            if i >= n || l >= k {
                return Err(Error::InvalidGame(format!("utility key {key:?} out of range")));
            }
            let entries = entries.as_object().ok_or_else(|| Error::Parse(format!("utilities[{key:?}] is not an object")))?;
            for (part, v) in entries {
                let x = parse_indices(part)?;
                if x.len() != k || x.iter().sum::<usize>() != n - 1 {
                    return Err(Error::InvalidGame(format!("{part:?} is not a partition of {}", n - 1)));
                }
                let v = v.as_f64().ok_or_else(|| Error::Parse(format!("utility at {part:?} is not a number")))?;
                tables[i][l][composition_rank(&x)] = v;
            }
        }
        if tables.iter().flatten().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidGame(format!("incomplete utility table; need {size} entries per (i, l)")));
        }
        Self::new(n, k, tables)
    }
}

fn parse_indices(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad index list {s:?}"))))
        .collect()
}

/// One mixed strategy per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CategoricalRv>", into = "Vec<CategoricalRv>")]
pub struct MixedStrategyProfile {
    strategies: Vec<CategoricalRv>,
}

impl TryFrom<Vec<CategoricalRv>> for MixedStrategyProfile {
    type Error = Error;
    fn try_from(s: Vec<CategoricalRv>) -> Result<Self> {
        Self::new(s)
    }
}

impl From<MixedStrategyProfile> for Vec<CategoricalRv> {
    fn from(p: MixedStrategyProfile) -> Self {
        p.strategies
    }
}

impl MixedStrategyProfile {
    pub fn new(strategies: Vec<CategoricalRv>) -> Result<Self> {
        let k = strategies.first().ok_or(Error::EmptyPmd)?.k();
        if let Some(bad) = strategies.iter().find(|s| s.k() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: bad.k() });
        }
        Ok(MixedStrategyProfile { strategies })
    }

    /// Player `i` plays strategy `choices[i]` with probability one.
    pub fn pure(k: usize, choices: &[usize]) -> Result<Self> {
        if let Some(c) = choices.iter().find(|c| **c >= k) {
            return Err(Error::IndexOutOfRange(format!("strategy {c} of {k}")));
        }
        Self::new(choices.iter().map(|&c| CategoricalRv::point_mass(k, c)).collect())
    }

    pub fn strategies(&self) -> &[CategoricalRv] {
        &self.strategies
    }

    pub fn n(&self) -> usize {
        self.strategies.len()
    }

    pub fn k(&self) -> usize {
        self.strategies[0].k()
    }

    /// Strategies of every player except `i`.
    pub fn others(&self, i: usize) -> Vec<CategoricalRv> {
        self.strategies.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.clone()).collect()
    }
}

/// How the PMF of the other players' sum is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convolution {
    #[default]
    Sequential,
    Fft,
}

fn check_profile(game: &AnonymousGame, profile: &MixedStrategyProfile) -> Result<()> {
    if profile.n() != game.n {
        return Err(Error::DimensionMismatch { expected: game.n, found: profile.n() });
    }
    if profile.k() != game.k {
        return Err(Error::DimensionMismatch { expected: game.k, found: profile.k() });
    }
    Ok(())
}

fn others_pmf(k: usize, others: &[CategoricalRv], method: Convolution) -> Result<DensePmf> {
    match method {
        Convolution::Sequential => exact_pmf_of(others, k),
        Convolution::Fft => exact_pmf_fft(others, k),
    }
}

/// Expected utilities of player `i` for every strategy when the others play `profile`.
pub fn expected_utilities(
    game: &AnonymousGame,
    i: usize,
    profile: &MixedStrategyProfile,
    method: Convolution,
) -> Result<Vec<f64>> {
    game.check_player(i)?;
    check_profile(game, profile)?;
    let pmf = others_pmf(game.k, &profile.others(i), method)?;
    Ok(game.utilities_against(i, &pmf))
}

/// `E[u^i_l(X_{-i})]` by sequential convolution.
pub fn expected_utility(game: &AnonymousGame, i: usize, l: usize, profile: &MixedStrategyProfile) -> Result<f64> {
    expected_utility_with(game, i, l, profile, Convolution::Sequential)
}

pub fn expected_utility_with(
    game: &AnonymousGame,
    i: usize,
    l: usize,
    profile: &MixedStrategyProfile,
    method: Convolution,
) -> Result<f64> {
    if l >= game.k {
        return Err(Error::IndexOutOfRange(format!("strategy {l} of {}", game.k)));
    }
    Ok(expected_utilities(game, i, profile, method)?[l])
}

/// Largest gap between the best expected utility and that of a strategy in
/// the support of `strategy`, with the others' sum distributed as `others`.
pub fn best_response_margin(game: &AnonymousGame, i: usize, strategy: &CategoricalRv, others: &[CategoricalRv]) -> Result<f64> {
    game.check_player(i)?;
    if others.len() + 1 != game.n {
        return Err(Error::DimensionMismatch { expected: game.n - 1, found: others.len() });
    }
    let e = game.utilities_against(i, &exact_pmf_of(others, game.k)?);
    Ok(support_regret(&e, strategy))
}

fn support_regret(e: &[f64], strategy: &CategoricalRv) -> f64 {
    let best = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    strategy
        .probs()
        .iter()
        .zip(e)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, v)| best - v)
        .fold(0.0, f64::max)
}

/// Checks the well-supported condition for every player. Returns whether
/// the profile is an `epsilon`-Nash equilibrium and the largest regret of a
/// supported strategy.
pub fn is_ws_eps_nash(game: &AnonymousGame, profile: &MixedStrategyProfile, epsilon: f64) -> Result<(bool, f64)> {
    check_profile(game, profile)?;
    let mut worst: f64 = 0.0;
    for i in 0..game.n {
        let e = expected_utilities(game, i, profile, Convolution::Sequential)?;
        worst = worst.max(support_regret(&e, &profile.strategies[i]));
    }
    Ok((worst <= epsilon + CERT_TOL, worst))
}

/// Denominator `N = ceil(10 k n / epsilon)` of the solver's strategy grid.
pub fn grid_denominator(n: usize, k: usize, epsilon: f64) -> usize {
    (10.0 * (k * n) as f64 / epsilon - 1e-9).ceil() as usize
}

/// Strategies whose probabilities are multiples of `1 / grid_denominator(n, k, epsilon)`.
pub fn strategy_grid(n: usize, k: usize, epsilon: f64) -> Vec<CategoricalRv> {
    crv_grid(k, grid_denominator(n, k, epsilon))
}

fn support_mask(c: &CategoricalRv) -> u64 {
    c.probs().iter().enumerate().filter(|(_, p)| **p > 0.0).fold(0, |m, (j, _)| m | (1 << j))
}

/// Solver output with the fingerprint it was built from.
#[derive(Debug, Clone, Serialize)]
pub struct NashReport {
    pub profile: MixedStrategyProfile,
    pub guess: GuessMatrix,
    pub data: CoverData,
    /// Number of `(G, D)` pairs for which a second DP was run.
    pub attempts: usize,
    pub violation: f64,
}

/// Per guess class: the first DP over the grid plus caches.
struct ClassRun {
    run: DpRun,
    /// Level-`n` state indices sorted by data.
    top: Vec<usize>,
    /// Per type: grid members grouped by support mask.
    supports: Vec<Vec<(u64, Vec<usize>)>>,
    /// Level-`(n - 1)` state index to per-player expected utilities.
    utils: HashMap<usize, Vec<Vec<f64>>>,
    /// Level-`n` state index to `(type, level-(n - 1) state)` splits.
    splits: HashMap<usize, Vec<(usize, usize)>>,
}

fn check_solver_input(game: &AnonymousGame, epsilon: f64) -> Result<()> {
    if game.n < 2 {
        return Err(Error::InvalidGame("need at least 2 players".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1)")));
    }
    Ok(())
}

/// Well-supported `epsilon`-Nash equilibrium with every probability a
/// multiple of `1 / grid_denominator(n, k, epsilon)`.
pub fn nash_eptas(game: &AnonymousGame, epsilon: f64, params: &CoverParams) -> Result<MixedStrategyProfile> {
    nash_eptas_detailed(game, epsilon, params).map(|r| r.profile)
}

/// Runs the cover DP over the strategy grid (with cover tolerance
/// `epsilon / 5`), then for each guess `G` and candidate data `D` restricts
/// every player to strategies that are `3 epsilon / 5`-best responses to a
/// representative of `D` minus that strategy, and searches for `D` again.
/// Each hit is certified before it is returned.
pub fn nash_eptas_detailed(game: &AnonymousGame, epsilon: f64, params: &CoverParams) -> Result<NashReport> {
    check_solver_input(game, epsilon)?;
    let (n, k) = (game.n, game.k);
    let params = CoverParams { epsilon: epsilon / 5.0, ..params.clone() };
    let grid = strategy_grid(n, k, epsilon);
    let masks: Vec<u64> = grid.iter().map(support_mask).collect();
    let layout = DataLayout::new(k, n, &params)?;
    let refs: Vec<&CategoricalRv> = grid.iter().collect();
    let classes = guess_classes(n, k, &refs, layout.resolved())?;
    let mut runs: Vec<Option<ClassRun>> = (0..classes.envelope.len()).map(|_| None).collect();
    let mut tried: HashSet<(usize, usize, Vec<usize>)> = HashSet::new();
    let slack = 3.0 * epsilon / 5.0;
    for (gi, g) in classes.guesses.iter().enumerate() {
        let cid = classes.class_of[gi];
        if runs[cid].is_none() {
            let env = &classes.envelope[cid];
            let types = TypeSet::build(&layout, &grid, env)?;
            let supports = types
                .members
                .iter()
                .map(|m| {
                    let mut by: Vec<(u64, Vec<usize>)> = Vec::new();
                    for &ix in m {
                        match by.iter_mut().find(|(mask, _)| *mask == masks[ix]) {
                            Some((_, v)) => v.push(ix),
                            None => by.push((masks[ix], vec![ix])),
                        }
                    }
                    by
                })
                .collect();
            let keep = |d: &CoverData| layout.within_upper(d, env);
            let run = run_dp(&layout, vec![types; n], &keep, params.cap)?;
            let mut top: Vec<usize> = (0..run.levels[n].len()).collect();
            top.sort_by(|a, b| run.levels[n].get_index(*a).unwrap().0.cmp(run.levels[n].get_index(*b).unwrap().0));
            runs[cid] = Some(ClassRun { run, top, supports, utils: HashMap::new(), splits: HashMap::new() });
        }
        let cr = runs[cid].as_mut().expect("class run built");
        for pos in 0..cr.top.len() {
            let d_idx = cr.top[pos];
            let d = cr.run.levels[n].get_index(d_idx).unwrap().0.clone();
            if !layout.strong_condition(&d, g) {
                continue;
            }
            if !cr.splits.contains_key(&d_idx) {
                let types = &cr.run.types[0];
                let below = &cr.run.levels[n - 1];
                let splits = (0..types.len())
                    .filter_map(|t| d.checked_sub(&types.data[t]).and_then(|rest| below.get_index_of(&rest)).map(|s| (t, s)))
                    .collect();
                cr.splits.insert(d_idx, splits);
            }
            let passing: Vec<(usize, usize)> = cr.splits[&d_idx]
                .iter()
                .copied()
                .filter(|(_, s)| layout.condition(cr.run.levels[n - 1].get_index(*s).unwrap().0, g))
                .collect();
            if passing.is_empty() || !tried.insert((cid, d_idx, passing.iter().map(|(t, _)| *t).collect())) {
                continue;
            }
            // Best-response sets, one restricted type set per player.
            let mut allowed: Vec<TypeSet> = (0..n).map(|_| TypeSet { data: Vec::new(), members: Vec::new() }).collect();
            for &(t, s) in &passing {
                if !cr.utils.contains_key(&s) {
                    let picks = cr.run.representative(n - 1, s);
                    let crvs: Vec<CategoricalRv> = picks.iter().map(|&ix| grid[ix].clone()).collect();
                    let pmf = exact_pmf_of(&crvs, k)?;
                    cr.utils.insert(s, (0..n).map(|i| game.utilities_against(i, &pmf)).collect());
                }
                for (i, ts) in allowed.iter_mut().enumerate() {
                    let e = &cr.utils[&s][i];
                    let best = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let ok: u64 = (0..k).filter(|&l| e[l] >= best - slack - CERT_TOL).fold(0, |m, l| m | (1 << l));
                    let members: Vec<usize> =
                        cr.supports[t].iter().filter(|(mask, _)| mask & !ok == 0).flat_map(|(_, v)| v.iter().copied()).collect();
                    if !members.is_empty() {
                        ts.data.push(cr.run.types[0].data[t].clone());
                        ts.members.push(members);
                    }
                }
            }
            if allowed.iter().any(|ts| ts.is_empty()) {
                continue;
            }
            let keep = |x: &CoverData| x.dominated_by(&d);
            let second = run_dp(&layout, allowed, &keep, params.cap)?;
            let Some(hit) = second.levels[n].get_index_of(&d) else { continue };
            let picks = second.representative(n, hit);
            let profile = MixedStrategyProfile::new(picks.iter().map(|&ix| grid[ix].clone()).collect())?;
            let (ok, violation) = is_ws_eps_nash(game, &profile, epsilon)?;
            if ok {
                return Ok(NashReport { profile, guess: g.clone(), data: d, attempts: tried.len(), violation });
            }
        }
    }
    Err(Error::SearchExhausted)
}

/// Approximate threat points with the punishing strategies of the other players.
#[derive(Debug, Clone, Serialize)]
pub struct ThreatPoints {
    pub theta: Vec<f64>,
    /// For player `i`, the strategies of players `0..n` other than `i`, in order.
    pub punishers: Vec<Vec<CategoricalRv>>,
}

/// `theta~_i`: the minimum over a proper cover of `(n - 1)`-player sums (over
/// the strategy grid, cover tolerance `epsilon`) of `max_l E[u^i_l]`.
pub fn threat_points(game: &AnonymousGame, epsilon: f64, params: &CoverParams) -> Result<ThreatPoints> {
    check_solver_input(game, epsilon)?;
    let (n, k) = (game.n, game.k);
    let params = CoverParams { epsilon, ..params.clone() };
    let step = 1.0 / grid_denominator(n, k, epsilon) as f64;
    let cover = proper_cover(n - 1, k, Some(step), &params)?;
    let pmfs = cover.iter().map(|p| exact_pmf_of(p.components(), k)).collect::<Result<Vec<_>>>()?;
    let mut theta = Vec::with_capacity(n);
    let mut punishers = Vec::with_capacity(n);
    for i in 0..n {
        let (best, idx) = pmfs
            .iter()
            .enumerate()
            .map(|(c, pmf)| (game.utilities_against(i, pmf).into_iter().fold(f64::NEG_INFINITY, f64::max), c))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .ok_or(Error::SearchExhausted)?;
        theta.push(best);
        punishers.push(cover[idx].components().to_vec());
    }
    Ok(ThreatPoints { theta, punishers })
}

/// Total variation between the others' sums under two profiles, for player `i`.
pub fn others_tv(profile: &MixedStrategyProfile, other: &MixedStrategyProfile, i: usize) -> Result<f64> {
    let k = profile.k();
    tv_distance(&exact_pmf_of(&profile.others(i), k)?, &exact_pmf_of(&other.others(i), k)?)
}
