//! ARQ allocation search.
//!
//! * Exhaustive enumeration of the search space for any strategy.
//! * Slow fading: real relaxation of the ratio rule `q_j/q_i = √(K_j/K_i)`
//!   followed by the rounding list of Algorithm 1.
//! * Fast fading: the Fold-To-Make-List bisection of Algorithm 2.
//! * The closed-form optimum `[q_sum, 0, …, 0]` of cumulative networks.
//! * Local-minimum certificates from the pairwise inequalities, with a
//!   direct neighbour evaluation as cross-check.
//!
//! Ties are broken towards the lexicographically smallest allocation.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::link::{Exactness, FadingMode, NetworkConfig};
use crate::pdp::{ArqAllocation, LinkScheme, OutageTable, Strategy};

/// Default enumeration cap for exhaustive search.
pub const DEFAULT_SEARCH_CAP: u128 = 10_000_000;

/// Snap distance used when rounding relaxed solutions up.
const INTEGER_SNAP: f64 = 1e-9;

/// Relative slack when comparing PDP values and inequality sides.
const COMPARE_SLACK: f64 = 1e-12;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(u128::from(n - i)) {
            Some(v) => v / u128::from(i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All allocations of `q_sum` attempts over `n` hops with a per-hop minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchSpace {
    hops: usize,
    q_sum: u32,
    min_per_hop: u32,
}

impl SearchSpace {
    /// Every hop gets at least one attempt.
    pub fn new(hops: usize, q_sum: u32) -> Result<Self> {
        if hops == 0 {
            return Err(Error::Domain("at least one hop is required".into()));
        }
        if (q_sum as usize) < hops {
            return Err(Error::Infeasible(format!(
                "q_sum = {q_sum} is below the hop count {hops}; every hop needs one attempt"
            )));
        }
        Ok(SearchSpace { hops, q_sum, min_per_hop: 1 })
    }

    /// Hops may receive zero attempts (cumulative networks).
    pub fn weak(hops: usize, q_sum: u32) -> Result<Self> {
        if hops == 0 {
            return Err(Error::Domain("at least one hop is required".into()));
        }
        if q_sum == 0 {
            return Err(Error::Infeasible("q_sum must be at least 1".into()));
        }
        Ok(SearchSpace { hops, q_sum, min_per_hop: 0 })
    }

    /// Space matching a strategy's feasibility rule.
    pub fn for_strategy(hops: usize, q_sum: u32, strategy: Strategy) -> Result<Self> {
        if strategy.is_cumulative() {
            Self::weak(hops, q_sum)
        } else {
            Self::new(hops, q_sum)
        }
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn q_sum(&self) -> u32 {
        self.q_sum
    }

    pub fn min_per_hop(&self) -> u32 {
        self.min_per_hop
    }

    pub fn cardinality(&self) -> u128 {
        let free = u64::from(self.q_sum) - self.hops as u64 * u64::from(self.min_per_hop);
        binomial(free + self.hops as u64 - 1, self.hops as u64 - 1)
    }

    pub fn contains(&self, q: &[u32]) -> bool {
        q.len() == self.hops && q.iter().all(|&x| x >= self.min_per_hop) && q.iter().sum::<u32>() == self.q_sum
    }

    /// Allocations in lexicographic order.
    pub fn iter(&self) -> Compositions {
        let n = self.hops;
        let mut first = vec![self.min_per_hop; n];
        first[n - 1] = self.q_sum - (n as u32 - 1) * self.min_per_hop;
        Compositions { current: Some(first), min_per_hop: self.min_per_hop }
    }
}

/// Lexicographic iterator over the allocations of a [`SearchSpace`].
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Option<Vec<u32>>,
    min_per_hop: u32,
}

impl Iterator for Compositions {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.take()?;
        let n = out.len();
        let lo = self.min_per_hop;
        let mut next = out.clone();
        let mut tail = next[n - 1];
        for i in (0..n.saturating_sub(1)).rev() {
            if tail > (n - 1 - i) as u32 * lo {
                next[i] += 1;
                for x in &mut next[i + 1..n - 1] {
                    *x = lo;
                }
                next[n - 1] = tail - 1 - (n - 2 - i) as u32 * lo;
                self.current = Some(next);
                break;
            }
            tail += next[i];
        }
        Some(out)
    }
}

/// Which procedure produced a candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Exhaustive,
    Algorithm1,
    Ftml,
}

/// Deduplicated candidate allocations in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateList {
    pub entries: Vec<ArqAllocation>,
    pub provenance: Provenance,
}

impl CandidateList {
    fn from_set(set: BTreeSet<Vec<u32>>, provenance: Provenance) -> Result<Self> {
        let entries = set.into_iter().map(ArqAllocation::new).collect::<Result<Vec<_>>>()?;
        Ok(CandidateList { entries, provenance })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Steepest Hamming-2 descent on a private-budget objective. Stops at an
/// allocation that passes [`neighbor_check`]; returns it, its PDP and the
/// number of moves made.
fn descend(table: &OutageTable, mut q: Vec<u32>) -> Result<(Vec<u32>, f64, usize)> {
    let two_hop = |a: f64, b: f64| a + b - a * b;
    let limit = 4 * q.iter().sum::<u32>() as usize * q.len() * q.len();
    let mut moves = 0;
    loop {
        let mut step: Option<(f64, usize, usize)> = None;
        for r in 0..q.len() {
            for d in 0..q.len() {
                if r == d || q[d] < 2 {
                    continue;
                }
                let here = two_hop(table.get(r, q[r]), table.get(d, q[d]));
                let there = two_hop(table.get(r, q[r] + 1), table.get(d, q[d] - 1));
                if there < here * (1.0 - COMPARE_SLACK) {
                    let gain = 1.0 - there / here;
                    if step.is_none_or(|(g, _, _)| gain > g) {
                        step = Some((gain, r, d));
                    }
                }
            }
        }
        match step {
            Some((_, r, d)) if moves < limit => {
                q[r] += 1;
                q[d] -= 1;
                moves += 1;
            }
            Some(_) => return Err(Error::Internal("local descent did not settle".into())),
            None => {
                let p = table.noncumulative(&q)?;
                return Ok((q, p, moves));
            }
        }
    }
}

/// Best allocation found and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub alloc: ArqAllocation,
    pub pdp: f64,
    /// Number of allocations evaluated.
    pub evaluated: u128,
}

fn table_for(
    network: &NetworkConfig,
    fading: FadingMode,
    strategy: Strategy,
    exactness: Exactness,
    q_sum: u32,
) -> Result<OutageTable> {
    if strategy.is_cumulative() && exactness == Exactness::Approx {
        return Err(Error::Unsupported("no approximate PDP exists for cumulative networks; use exact outage".into()));
    }
    OutageTable::new(network, strategy.scheme(fading), exactness, q_sum)
}

fn evaluate(table: &OutageTable, strategy: Strategy, q: &[u32]) -> Result<f64> {
    if strategy.is_cumulative() {
        table.fully_cumulative(q)
    } else {
        table.noncumulative(q)
    }
}

/// `p` beats `best` by more than the comparison slack. Values closer than
/// that count as ties; cumulative networks in particular have many
/// allocations with identical PDP.
fn improves(p: f64, best: f64) -> bool {
    p < best - COMPARE_SLACK * best.abs()
}

/// Minimum over `candidates`, ties going to the earliest entry in
/// lexicographic order.
fn argmin<'a, I>(table: &OutageTable, strategy: Strategy, candidates: I) -> Result<Option<(Vec<u32>, f64, u128)>>
where
    I: IntoIterator<Item = &'a [u32]>,
{
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut count = 0u128;
    for q in candidates {
        let p = evaluate(table, strategy, q)?;
        count += 1;
        let better = match &best {
            None => true,
            Some((bq, bp)) => improves(p, *bp) || (!improves(*bp, p) && q < bq.as_slice()),
        };
        if better {
            best = Some((q.to_vec(), p));
        }
    }
    Ok(best.map(|(q, p)| (q, p, count)))
}

/// Exhaustive search with the default enumeration cap.
pub fn exhaustive_search(
    network: &NetworkConfig,
    q_sum: u32,
    fading: FadingMode,
    exactness: Exactness,
    strategy: Strategy,
) -> Result<SearchResult> {
    exhaustive_search_capped(network, q_sum, fading, exactness, strategy, DEFAULT_SEARCH_CAP)
}

/// Exhaustive search refusing spaces larger than `cap`.
pub fn exhaustive_search_capped(
    network: &NetworkConfig,
    q_sum: u32,
    fading: FadingMode,
    exactness: Exactness,
    strategy: Strategy,
    cap: u128,
) -> Result<SearchResult> {
    let space = SearchSpace::for_strategy(network.hop_count(), q_sum, strategy)?;
    let size = space.cardinality();
    if size > cap {
        return Err(Error::SearchTooLarge { size, cap });
    }
    let table = table_for(network, fading, strategy, exactness, q_sum)?;
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut evaluated = 0u128;
    for q in space.iter() {
        let p = evaluate(&table, strategy, &q)?;
        evaluated += 1;
        // Lexicographic enumeration: keeping clear improvements only breaks
        // ties towards the smallest allocation.
        if best.as_ref().is_none_or(|(_, bp)| improves(p, *bp)) {
            best = Some((q, p));
        }
    }
    let (q, pdp) = best.ok_or_else(|| Error::Internal("empty search space".into()))?;
    Ok(SearchResult { alloc: ArqAllocation::new(q)?, pdp, evaluated })
}

/// Enumerate a whole search space as a candidate list.
pub fn enumerate_space(space: &SearchSpace, cap: u128) -> Result<CandidateList> {
    let size = space.cardinality();
    if size > cap {
        return Err(Error::SearchTooLarge { size, cap });
    }
    CandidateList::from_set(space.iter().collect(), Provenance::Exhaustive)
}

/// Real solution of the ratio rule: `q_k = q_sum·√K_k / Σ_j √K_j`.
pub fn relaxed_from_coefficients(k: &[f64], q_sum: u32) -> Result<Vec<f64>> {
    if k.is_empty() {
        return Err(Error::Domain("at least one hop is required".into()));
    }
    if let Some(bad) = k.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("coefficient {bad} must be positive and finite")));
    }
    let roots: Vec<f64> = k.iter().map(|x| x.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    Ok(roots.iter().map(|r| f64::from(q_sum) * r / total).collect())
}

/// Slow-fading relaxed allocation from the closed form.
pub fn relaxed_solution_sf(network: &NetworkConfig, q_sum: u32) -> Result<Vec<f64>> {
    let k: Vec<f64> = network.links().iter().map(|l| l.sf_coefficient).collect();
    relaxed_from_coefficients(&k, q_sum)
}

/// The same relaxation through the linear system `R·q = s`.
///
/// Rows `1..N−1` encode `q_{j+1} − √(K_{j+1}/K_j)·q_j = 0`; row `N` is the
/// budget constraint.
pub fn relaxed_solution_sf_matrix(network: &NetworkConfig, q_sum: u32) -> Result<Vec<f64>> {
    let k: Vec<f64> = network.links().iter().map(|l| l.sf_coefficient).collect();
    let n = k.len();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for j in 0..n - 1 {
        r[(j, j)] = -(k[j + 1] / k[j]).sqrt();
        r[(j, j + 1)] = 1.0;
    }
    for j in 0..n {
        r[(n - 1, j)] = 1.0;
    }
    let mut s = DVector::<f64>::zeros(n);
    s[n - 1] = f64::from(q_sum);
    let q = r.lu().solve(&s).ok_or_else(|| Error::Internal("relaxation matrix is singular".into()))?;
    Ok(q.iter().copied().collect())
}

fn ceil_snapped(x: f64) -> u32 {
    let r = x.round();
    let v = if (x - r).abs() <= INTEGER_SNAP { r } else { x.ceil() };
    v.max(0.0) as u32
}

/// Every way of applying `delta` (±1) at `count` distinct positions of `base`
/// that keeps entries at least 1.
fn hamming_shifts(base: &[u32], count: usize, delta: i64) -> Vec<Vec<u32>> {
    let n = base.len();
    let mut out = Vec::new();
    if count > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..count).collect();
    loop {
        let mut q = base.to_vec();
        let ok = idx.iter().all(|&i| {
            let v = i64::from(q[i]) + delta;
            if v >= 1 {
                q[i] = v as u32;
                true
            } else {
                false
            }
        });
        if ok {
            out.push(q);
        }
        // Advance to the next combination in lexicographic order.
        let mut i = count;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - count + i {
                idx[i] += 1;
                for j in i + 1..count {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Every way of applying `count` unit steps of `delta` (±1) to `base`,
/// several per position allowed, keeping entries at least 1.
fn unit_shifts(base: &[u32], count: u32, delta: i64) -> Vec<Vec<u32>> {
    fn rec(base: &[u32], k: usize, left: u32, delta: i64, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k + 1 == base.len() {
            let v = i64::from(base[k]) + delta * i64::from(left);
            if v >= 1 {
                cur.push(v as u32);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for s in 0..=left {
            let v = i64::from(base[k]) + delta * i64::from(s);
            if v < 1 {
                break;
            }
            cur.push(v as u32);
            rec(base, k + 1, left - s, delta, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(base, 0, count, delta, &mut Vec::with_capacity(base.len()), &mut out);
    out
}

/// LOS ordering: a hop with more LOS never gets more attempts than a
/// hop with less LOS. Equal LOS values are not constrained.
pub fn satisfies_los_ordering(los: &[f64], q: &[u32]) -> bool {
    for i in 0..los.len() {
        for j in 0..los.len() {
            if los[i] < los[j] && q[j] > q[i] {
                return false;
            }
        }
    }
    true
}

/// Outcome of Algorithm 1.
#[derive(Debug, Clone, Serialize)]
pub struct ListOutcome {
    pub relaxed: Vec<f64>,
    /// Rounded-up relaxation after lifting zeros.
    pub rounded: Vec<u32>,
    /// `Σ rounded − q_sum`.
    pub excess: i64,
    /// Size of the list before the LOS-ordering filter.
    pub unfiltered_len: usize,
    /// Set when the filter emptied the list and the unfiltered list was used.
    pub filter_fallback: bool,
    /// Set when no Hamming shift was feasible and a greedy repair was used.
    pub repaired: bool,
    pub candidates: CandidateList,
    pub best: ArqAllocation,
    pub pdp: f64,
    /// Hamming-2 moves applied after the list minimum to reach a local minimum.
    pub descent_moves: usize,
}

/// Algorithm 1: round the relaxed slow-fading solution and list its
/// corrections, then minimise the approximate PDP over the list.
pub fn list_algorithm_sf(network: &NetworkConfig, q_sum: u32) -> Result<ListOutcome> {
    let n = network.hop_count();
    SearchSpace::new(n, q_sum)?;
    let relaxed = relaxed_solution_sf(network, q_sum)?;
    let rounded: Vec<u32> = relaxed.iter().map(|&x| ceil_snapped(x).max(1)).collect();
    let excess = i64::from(rounded.iter().sum::<u32>()) - i64::from(q_sum);

    let unfiltered: Vec<Vec<u32>> = match excess {
        0 => vec![rounded.clone()],
        e if e > 0 => hamming_shifts(&rounded, e as usize, -1),
        e => {
            // Rounding fell short: add at |E| positions, lowest LOS first.
            let mut shifts = hamming_shifts(&rounded, e.unsigned_abs() as usize, 1);
            shifts.sort_by(|a, b| los_weight(network.los(), a).total_cmp(&los_weight(network.los(), b)).then(a.cmp(b)));
            shifts
        }
    };
    let unfiltered_len = unfiltered.len();
    let mut repaired = false;
    let mut filter_fallback = false;
    let set: BTreeSet<Vec<u32>> = if unfiltered.is_empty() {
        repaired = true;
        std::iter::once(greedy_repair(network.los(), &rounded, q_sum)).collect()
    } else {
        let filtered: BTreeSet<Vec<u32>> =
            unfiltered.iter().filter(|q| satisfies_los_ordering(network.los(), q)).cloned().collect();
        if filtered.is_empty() {
            filter_fallback = true;
            unfiltered.into_iter().collect()
        } else {
            filtered
        }
    };
    let candidates = CandidateList::from_set(set, Provenance::Algorithm1)?;
    let table = OutageTable::new(network, LinkScheme::ChaseCombining(FadingMode::Slow), Exactness::Approx, q_sum)?;
    let (best, _, _) = argmin(&table, Strategy::NonCumulative, candidates.entries.iter().map(|a| a.as_slice()))?
        .ok_or_else(|| Error::Internal("Algorithm 1 produced an empty list".into()))?;
    let (best, pdp, descent_moves) = descend(&table, best)?;
    Ok(ListOutcome {
        relaxed,
        rounded,
        excess,
        unfiltered_len,
        filter_fallback,
        repaired,
        candidates,
        best: ArqAllocation::new(best)?,
        pdp,
        descent_moves,
    })
}

fn los_weight(los: &[f64], q: &[u32]) -> f64 {
    q.iter().zip(los).map(|(&x, &c)| f64::from(x) * c).sum()
}

/// Move `q` onto the budget one attempt at a time: take from the largest
/// entry (highest LOS on ties) or give to the smallest (lowest LOS on ties).
fn greedy_repair(los: &[f64], q: &[u32], q_sum: u32) -> Vec<u32> {
    let mut q = q.to_vec();
    let n = q.len();
    while q.iter().sum::<u32>() > q_sum {
        let k = (0..n)
            .filter(|&k| q[k] > 1)
            .max_by(|&a, &b| q[a].cmp(&q[b]).then(los[a].total_cmp(&los[b])))
            .expect("q_sum >= N leaves a reducible entry");
        q[k] -= 1;
    }
    while q.iter().sum::<u32>() < q_sum {
        let k = (0..n).min_by(|&a, &b| q[a].cmp(&q[b]).then(los[a].total_cmp(&los[b]))).expect("non-empty");
        q[k] += 1;
    }
    q
}

/// `ln D(m)` with `D(m) = √m·(m/(e·B))^m`.
pub fn ln_ftml_d(m: u32, b: f64) -> f64 {
    let m = f64::from(m);
    0.5 * m.ln() + m * (m.ln() - 1.0 - b.ln())
}

/// `D(m)` evaluated directly; overflows for large `m`.
pub fn ftml_d_direct(m: u32, b: f64) -> f64 {
    let m = f64::from(m);
    m.sqrt() * (m / (std::f64::consts::E * b)).powf(m)
}

/// `ln|e^x − e^y|`.
fn ln_abs_diff(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi == lo {
        return f64::NEG_INFINITY;
    }
    hi + (-(lo - hi).exp_m1()).ln()
}

/// Outcome of FTML.
#[derive(Debug, Clone, Serialize)]
pub struct FtmlOutcome {
    /// One matched row per `q₁*`, before the budget correction.
    pub rows: Vec<Vec<u32>>,
    pub candidates: CandidateList,
    pub best: ArqAllocation,
    pub pdp: f64,
    /// Set when no row had a Hamming correction and stacked steps were used.
    pub fallback: bool,
    /// Hamming-2 moves applied after the list minimum to reach a local minimum.
    pub descent_moves: usize,
    pub warnings: Vec<String>,
}

/// Algorithm 2 (Fold-To-Make-List) for fast fading.
pub fn ftml_ff(network: &NetworkConfig, q_sum: u32) -> Result<FtmlOutcome> {
    let n = network.hop_count();
    SearchSpace::new(n, q_sum)?;
    let b: Vec<f64> = network.links().iter().map(|l| l.ff_coefficient).collect();
    if let Some(bad) = b.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("FTML needs positive B_k, got {bad}")));
    }
    let top = q_sum - (n as u32 - 1);
    let threshold = (-1.0f64).exp();
    let mut warnings = Vec::new();
    let scan: Vec<bool> = b
        .iter()
        .enumerate()
        .map(|(j, &bj)| {
            let low_snr = j > 0 && bj >= threshold;
            if low_snr {
                warnings
                    .push(format!("hop {}: B = {bj:.4e} >= 1/e, D(m) may not be monotone; using a linear scan", j + 1));
            }
            low_snr
        })
        .collect();

    let mut rows = Vec::with_capacity(top as usize);
    for q1 in 1..=top {
        let ln_c = ln_ftml_d(q1, b[0]);
        let resid = |j: usize, m: u32| ln_abs_diff(ln_ftml_d(m, b[j]), ln_c);
        let mut row = vec![q1];
        for j in 1..n {
            let pick = if scan[j] {
                (1..=top).min_by(|&x, &y| resid(j, x).total_cmp(&resid(j, y)).then(x.cmp(&y))).expect("non-empty range")
            } else {
                // D_j is increasing: bisect for the first m with D_j(m) >= C,
                // then keep the closer of m − 1 and m.
                let (mut lo, mut hi) = (1u32, top);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    if ln_ftml_d(mid, b[j]) >= ln_c {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                if lo > 1 && resid(j, lo - 1) <= resid(j, lo) {
                    lo - 1
                } else {
                    lo
                }
            };
            row.push(pick);
        }
        rows.push(row);
    }

    let mut set = BTreeSet::new();
    for row in &rows {
        let excess = i64::from(row.iter().sum::<u32>()) - i64::from(q_sum);
        match excess {
            0 => {
                set.insert(row.clone());
            }
            e => {
                let delta = if e > 0 { -1 } else { 1 };
                set.extend(hamming_shifts(row, e.unsigned_abs() as usize, delta));
            }
        }
    }
    // Rows further than N unit steps from the budget have no Hamming
    // correction; when that leaves nothing, let the steps stack.
    let fallback = set.is_empty();
    if fallback {
        warnings.push("no row within Hamming distance N of the budget; corrected rows by stacked unit steps".into());
        for row in &rows {
            let excess = i64::from(row.iter().sum::<u32>()) - i64::from(q_sum);
            let delta = if excess > 0 { -1 } else { 1 };
            set.extend(unit_shifts(row, excess.unsigned_abs() as u32, delta));
        }
    }
    if set.is_empty() {
        return Err(Error::Infeasible("FTML: no row could be corrected onto the budget".into()));
    }
    let candidates = CandidateList::from_set(set, Provenance::Ftml)?;
    let table = OutageTable::new(network, LinkScheme::ChaseCombining(FadingMode::Fast), Exactness::Approx, q_sum)?;
    let (best, _, _) = argmin(&table, Strategy::NonCumulative, candidates.entries.iter().map(|a| a.as_slice()))?
        .ok_or_else(|| Error::Internal("FTML produced an empty list".into()))?;
    let (best, pdp, descent_moves) = descend(&table, best)?;
    Ok(FtmlOutcome { rows, candidates, best: ArqAllocation::new(best)?, pdp, fallback, descent_moves, warnings })
}

/// Optimum of cumulative networks: the whole budget at the source.
pub fn fully_cumulative_optimal(q_sum: u32, hops: usize) -> Result<ArqAllocation> {
    if hops == 0 || q_sum == 0 {
        return Err(Error::Domain("need at least one hop and one attempt".into()));
    }
    let mut q = vec![0; hops];
    q[0] = q_sum;
    ArqAllocation::new(q)
}

/// Even split; the remainder goes one each to the lowest-LOS hops (lower
/// index on ties).
pub fn uniform_allocation(q_sum: u32, los: &[f64]) -> Result<ArqAllocation> {
    let n = los.len();
    SearchSpace::new(n, q_sum)?;
    let base = q_sum / n as u32;
    let rem = (q_sum % n as u32) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| los[a].total_cmp(&los[b]).then(a.cmp(&b)));
    let mut q = vec![base; n];
    for &k in &order[..rem] {
        q[k] += 1;
    }
    ArqAllocation::new(q)
}

/// Pairwise local-minimum test of an allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMinimaCertificate {
    pub alloc: ArqAllocation,
    pub satisfied: bool,
    /// `(receiver, donor)` zero-based hop pairs: moving one attempt from
    /// donor to receiver lowers the approximate PDP.
    pub violated_pairs: Vec<(usize, usize)>,
}

impl LocalMinimaCertificate {
    fn from_pairs(alloc: &ArqAllocation, pairs: BTreeSet<(usize, usize)>) -> Self {
        LocalMinimaCertificate {
            alloc: alloc.clone(),
            satisfied: pairs.is_empty(),
            violated_pairs: pairs.into_iter().collect(),
        }
    }
}

fn check_local_input(alloc: &ArqAllocation, network: &NetworkConfig) -> Result<()> {
    if alloc.hop_count() != network.hop_count() {
        return Err(Error::Precondition(format!(
            "allocation has {} hops, network has {}",
            alloc.hop_count(),
            network.hop_count()
        )));
    }
    if !alloc.all_positive() {
        return Err(Error::Precondition(format!("local-minimum check needs q_k >= 1, got {alloc}")));
    }
    Ok(())
}

/// `lhs ≤ rhs` up to a relative slack on the magnitude of the terms.
fn leq(lhs: f64, rhs: f64, scale: f64) -> bool {
    lhs - rhs <= COMPARE_SLACK * scale
}

/// Local-minimum test from the closed-form pairwise inequalities on the
/// approximate PDP: `K` coefficients for slow fading, `B` coefficients for
/// fast fading.
pub fn local_minima_check(
    alloc: &ArqAllocation,
    network: &NetworkConfig,
    fading: FadingMode,
) -> Result<LocalMinimaCertificate> {
    check_local_input(alloc, network)?;
    let q = alloc.as_slice();
    let links = network.links();
    let mut violated = BTreeSet::new();
    for i in 0..q.len() {
        for j in 0..q.len() {
            if i == j {
                continue;
            }
            let (qi, qj) = (f64::from(q[i]), f64::from(q[j]));
            match fading {
                FadingMode::Slow => {
                    let (ki, kj) = (links[i].sf_coefficient, links[j].sf_coefficient);
                    // Neighbour (q_i + 1, q_j − 1).
                    if q[j] >= 2 {
                        let c1 = -kj * ki + qi * qi * kj + qi * (kj - kj * ki);
                        let lhs = qj * qj * ki - qj * (ki + kj * ki) - c1;
                        let scale =
                            qj * qj * ki + qj * (ki + kj * ki) + qi * qi * kj + qi * kj + 2.0 * ki * kj * (1.0 + qi);
                        if !leq(lhs, 0.0, scale) {
                            violated.insert((i, j));
                        }
                    }
                    // Neighbour (q_i − 1, q_j + 1).
                    if q[i] >= 2 {
                        let c2 = kj * ki + qi * qi * kj - qi * (kj + kj * ki);
                        let lhs = qj * qj * ki + qj * (ki - kj * ki) - c2;
                        let scale =
                            qj * qj * ki + qj * (ki + kj * ki) + qi * qi * kj + qi * kj + 2.0 * ki * kj * (1.0 + qi);
                        if !leq(0.0, lhs, scale) {
                            violated.insert((j, i));
                        }
                    }
                }
                FadingMode::Fast => {
                    let (bi, bj) = (links[i].ff_coefficient, links[j].ff_coefficient);
                    let term = |b: f64, m: u32| (f64::from(m) * b.ln() - crate::special::ln_factorial(m)).exp();
                    if q[j] >= 2 {
                        let x = term(bi, q[i]);
                        let y = term(bj, q[j] - 1);
                        let lhs = x * (1.0 - bi / (qi + 1.0)) + y * (bj / qj - 1.0);
                        let rhs = x * y * (bj / qj - bi / (qi + 1.0));
                        let scale = x * (1.0 + bi / (qi + 1.0)) + y * (1.0 + bj / qj);
                        if !leq(lhs, rhs, scale) {
                            violated.insert((i, j));
                        }
                    }
                    if q[i] >= 2 {
                        let x = term(bi, q[i] - 1);
                        let w = term(bj, q[j]);
                        let lhs = x * (1.0 - bi / qi) + w * (bj / (qj + 1.0) - 1.0);
                        let rhs = x * w * (bj / (qj + 1.0) - bi / qi);
                        let scale = x * (1.0 + bi / qi) + w * (1.0 + bj / (qj + 1.0));
                        if !leq(rhs, lhs, scale) {
                            violated.insert((j, i));
                        }
                    }
                }
            }
        }
    }
    Ok(LocalMinimaCertificate::from_pairs(alloc, violated))
}

/// Local-minimum test by comparing the approximate PDP with every
/// Hamming-distance-2 neighbour.
pub fn neighbor_check(
    alloc: &ArqAllocation,
    network: &NetworkConfig,
    fading: FadingMode,
) -> Result<LocalMinimaCertificate> {
    check_local_input(alloc, network)?;
    let q = alloc.as_slice();
    let table = OutageTable::new(network, LinkScheme::ChaseCombining(fading), Exactness::Approx, alloc.q_sum())?;
    // The factor Π(1 − P_k) over untouched hops is shared by the allocation
    // and its neighbour, so the PDP difference has the sign of the two-hop
    // difference. Comparing at that scale keeps tiny moves resolvable.
    let two_hop = |a: f64, b: f64| a + b - a * b;
    let mut violated = BTreeSet::new();
    for r in 0..q.len() {
        for d in 0..q.len() {
            if r == d || q[d] < 2 {
                continue;
            }
            let here = two_hop(table.get(r, q[r]), table.get(d, q[d]));
            let there = two_hop(table.get(r, q[r] + 1), table.get(d, q[d] - 1));
            if there < here * (1.0 - COMPARE_SLACK) {
                violated.insert((r, d));
            }
        }
    }
    Ok(LocalMinimaCertificate::from_pairs(alloc, violated))
}
