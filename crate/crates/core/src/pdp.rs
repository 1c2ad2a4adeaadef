//! End-to-end packet-drop probability for a given ARQ allocation.
//!
//! Non-cumulative networks give every hop a private budget, so the PDP is the
//! product form `P₁ + Σ_k P_k·Π_{j<k}(1 − P_j)`. Fully-cumulative networks
//! forward unused attempts downstream. With `P_{k,0} = 1` and hop `k`
//! holding `m` attempts,
//!
//! ```text
//! F(k, m) = P_{k,m} + Σ_{u=1..m} (P_{k,u−1} − P_{k,u})·F(k+1, q_{k+1} + m − u)
//! ```
//!
//! with `F(N+1, ·) = 0`, started at `F(1, q₁)`. The factor
//! `P_{k,u−1} − P_{k,u}` is the probability of first success at attempt `u`,
//! valid because the combined SNR never decreases across attempts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{Exactness, FadingMode, NetworkConfig};

/// Integer ARQ budget per hop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct ArqAllocation {
    q: Vec<u32>,
}

impl ArqAllocation {
    /// Entries may be zero; the total must be positive.
    pub fn new(q: Vec<u32>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Precondition("allocation has no hops".into()));
        }
        if q.iter().all(|&x| x == 0) {
            return Err(Error::Precondition("allocation budget sums to zero".into()));
        }
        Ok(ArqAllocation { q })
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.q
    }

    pub fn hop_count(&self) -> usize {
        self.q.len()
    }

    pub fn q_sum(&self) -> u32 {
        self.q.iter().sum()
    }

    /// True when every hop has at least one attempt.
    pub fn all_positive(&self) -> bool {
        self.q.iter().all(|&x| x >= 1)
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.q
    }
}

impl TryFrom<Vec<u32>> for ArqAllocation {
    type Error = Error;
    fn try_from(q: Vec<u32>) -> Result<Self> {
        ArqAllocation::new(q)
    }
}

impl From<ArqAllocation> for Vec<u32> {
    fn from(a: ArqAllocation) -> Vec<u32> {
        a.q
    }
}

impl fmt::Display for ArqAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, x) in self.q.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for ArqAllocation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let q = inner
            .split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|e| Error::Domain(format!("bad allocation entry {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        ArqAllocation::new(q)
    }
}

/// How relays use their budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Chase combining, private per-hop budgets.
    NonCumulative,
    /// Chase combining, unused attempts forwarded downstream.
    FullyCumulative,
    /// Independent attempts without combining, private budgets.
    Type1,
    /// Independent attempts without combining, unused attempts forwarded.
    Type1Cumulative,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::NonCumulative, Strategy::FullyCumulative, Strategy::Type1, Strategy::Type1Cumulative];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NonCumulative => "non-cumulative",
            Strategy::FullyCumulative => "fully-cumulative",
            Strategy::Type1 => "type1",
            Strategy::Type1Cumulative => "type1-cumulative",
        }
    }

    /// Whether unused attempts travel with the packet.
    pub fn is_cumulative(self) -> bool {
        matches!(self, Strategy::FullyCumulative | Strategy::Type1Cumulative)
    }

    pub fn is_type1(self) -> bool {
        matches!(self, Strategy::Type1 | Strategy::Type1Cumulative)
    }

    /// Per-hop outage model behind this strategy.
    pub fn scheme(self, fading: FadingMode) -> LinkScheme {
        if self.is_type1() {
            LinkScheme::Type1
        } else {
            LinkScheme::ChaseCombining(fading)
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown strategy {s:?}")))
    }
}

/// Per-hop outage model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkScheme {
    ChaseCombining(FadingMode),
    /// Independent attempts; the fading mode is irrelevant.
    Type1,
}

/// `P_{k,u}` for every hop and `u = 0..=max_attempts`, with `P_{k,0} = 1`.
#[derive(Debug, Clone)]
pub struct OutageTable {
    rows: Vec<Vec<f64>>,
}

impl OutageTable {
    pub fn new(network: &NetworkConfig, scheme: LinkScheme, exactness: Exactness, max_attempts: u32) -> Result<Self> {
        if scheme == LinkScheme::Type1 && exactness == Exactness::Approx {
            return Err(Error::Unsupported("Type-1 ARQ has no approximate outage model".into()));
        }
        let rows = network
            .links()
            .iter()
            .map(|link| {
                let mut row = Vec::with_capacity(max_attempts as usize + 1);
                row.push(1.0);
                for u in 1..=max_attempts {
                    row.push(match scheme {
                        LinkScheme::ChaseCombining(f) => link.outage(f, u, exactness)?,
                        LinkScheme::Type1 => link.outage_type1(u)?,
                    });
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OutageTable { rows })
    }

    pub fn hop_count(&self) -> usize {
        self.rows.len()
    }

    pub fn max_attempts(&self) -> u32 {
        (self.rows[0].len() - 1) as u32
    }

    /// `P_{k,u}` for zero-based hop `k`.
    pub fn get(&self, k: usize, u: u32) -> f64 {
        self.rows[k][u as usize]
    }

    fn check_shape(&self, q: &[u32], needed: u32) -> Result<()> {
        if q.len() != self.rows.len() {
            return Err(Error::Precondition(format!(
                "allocation has {} hops, network has {}",
                q.len(),
                self.rows.len()
            )));
        }
        if needed > self.max_attempts() {
            return Err(Error::Precondition(format!(
                "outage table covers {} attempts, {needed} needed",
                self.max_attempts()
            )));
        }
        Ok(())
    }

    /// Product-form PDP. Every entry of `q` must be at least 1.
    pub fn noncumulative(&self, q: &[u32]) -> Result<f64> {
        self.check_shape(q, q.iter().copied().max().unwrap_or(0))?;
        if let Some(k) = q.iter().position(|&x| x == 0) {
            return Err(Error::Precondition(format!("non-cumulative evaluation needs q_k >= 1; hop {} has 0", k + 1)));
        }
        let mut pdp = 0.0;
        let mut survive = 1.0;
        for (k, &qk) in q.iter().enumerate() {
            let p = self.get(k, qk);
            pdp += p * survive;
            survive *= 1.0 - p;
        }
        Ok(pdp.min(1.0))
    }

    /// Residual-carrying recursion; entries of `q` may be zero.
    pub fn fully_cumulative(&self, q: &[u32]) -> Result<f64> {
        let q_sum: u32 = q.iter().sum();
        self.check_shape(q, q_sum)?;
        if q_sum == 0 {
            return Err(Error::Precondition("allocation budget sums to zero".into()));
        }
        let n = q.len();
        let width = q_sum as usize + 1;
        // next[m] = F(k+1, m); F(N+1, ·) = 0.
        let mut next = vec![0.0; width];
        let mut cur = vec![0.0; width];
        for k in (0..n).rev() {
            let carry_in = if k + 1 < n { q[k + 1] as usize } else { 0 };
            let row = &self.rows[k];
            // Budget at hop k never exceeds the attempts allotted to hops 0..=k.
            let reach: usize = q[..=k].iter().map(|&x| x as usize).sum();
            for m in 0..=reach {
                let mut f = row[m];
                if k + 1 < n {
                    for u in 1..=m {
                        f += (row[u - 1] - row[u]) * next[carry_in + m - u];
                    }
                }
                cur[m] = f;
            }
            std::mem::swap(&mut next, &mut cur);
        }
        Ok(next[q[0] as usize].clamp(0.0, 1.0))
    }
}

/// Everything needed to evaluate one PDP.
#[derive(Debug, Clone, Copy)]
pub struct PdpQuery<'a> {
    pub network: &'a NetworkConfig,
    pub alloc: &'a ArqAllocation,
    pub fading: FadingMode,
    pub strategy: Strategy,
    pub exactness: Exactness,
}

impl PdpQuery<'_> {
    fn table(&self, attempts: u32) -> Result<OutageTable> {
        if self.alloc.hop_count() != self.network.hop_count() {
            return Err(Error::Precondition(format!(
                "allocation has {} hops, network has {}",
                self.alloc.hop_count(),
                self.network.hop_count()
            )));
        }
        OutageTable::new(self.network, self.strategy.scheme(self.fading), self.exactness, attempts)
    }
}

/// Dispatch on the query's strategy.
pub fn pdp(query: &PdpQuery<'_>) -> Result<f64> {
    match query.strategy {
        Strategy::NonCumulative | Strategy::Type1 => pdp_private_budgets(query),
        Strategy::FullyCumulative | Strategy::Type1Cumulative => pdp_carried_budgets(query),
    }
}

/// Chase-combining PDP with private per-hop budgets.
pub fn pdp_noncumulative(query: &PdpQuery<'_>) -> Result<f64> {
    pdp(&PdpQuery { strategy: Strategy::NonCumulative, ..*query })
}

/// Chase-combining PDP with unused attempts forwarded downstream. Exact
/// outage only.
pub fn pdp_fully_cumulative(query: &PdpQuery<'_>) -> Result<f64> {
    pdp(&PdpQuery { strategy: Strategy::FullyCumulative, ..*query })
}

/// Type-1 PDP with private per-hop budgets.
pub fn pdp_type1(query: &PdpQuery<'_>) -> Result<f64> {
    pdp(&PdpQuery { strategy: Strategy::Type1, ..*query })
}

fn pdp_private_budgets(query: &PdpQuery<'_>) -> Result<f64> {
    let q = query.alloc.as_slice();
    if !query.alloc.all_positive() {
        return Err(Error::Precondition(format!(
            "{} evaluation needs q_k >= 1 for every hop, got {}",
            query.strategy.name(),
            query.alloc
        )));
    }
    let table = query.table(q.iter().copied().max().unwrap_or(1))?;
    table.noncumulative(q)
}

fn pdp_carried_budgets(query: &PdpQuery<'_>) -> Result<f64> {
    if query.exactness == Exactness::Approx {
        return Err(Error::Unsupported("no approximate PDP exists for cumulative networks; use exact outage".into()));
    }
    let table = query.table(query.alloc.q_sum())?;
    table.fully_cumulative(query.alloc.as_slice())
}


#[cfg(test)]
mod props {
    use super::{pdp, ArqAllocation, PdpQuery, Strategy as Scheme};
    use crate::link::{Exactness, FadingMode, NetworkConfig};
    use proptest::prelude::*;

    fn network(n: usize) -> impl Strategy<Value = NetworkConfig> {
        (prop::collection::vec(0.0f64..0.9, n), 0.0f64..25.0)
            .prop_map(|(c, db)| NetworkConfig::with_snr_db(c, 1.0, db).unwrap())
    }

    fn eval(net: &NetworkConfig, q: &[u32], f: FadingMode, s: Scheme, e: Exactness) -> f64 {
        let alloc = ArqAllocation::new(q.to_vec()).unwrap();
        pdp(&PdpQuery { network: net, alloc: &alloc, fading: f, strategy: s, exactness: e }).unwrap()
    }

    fn fading() -> impl Strategy<Value = FadingMode> {
        prop_oneof![Just(FadingMode::Slow), Just(FadingMode::Fast)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn noncumulative_permutation_invariant(
            (net, q, perm) in (2usize..=5).prop_flat_map(|n| (
                network(n),
                prop::collection::vec(1u32..5, n),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            )),
            f in fading(),
            approx in any::<bool>(),
        ) {
            let e = if approx { Exactness::Approx } else { Exactness::Exact };
            let base = eval(&net, &q, f, Scheme::NonCumulative, e);
            let c2: Vec<f64> = perm.iter().map(|&i| net.los()[i]).collect();
            let q2: Vec<u32> = perm.iter().map(|&i| q[i]).collect();
            let net2 = NetworkConfig::new(c2, net.rate(), net.snr()).unwrap();
            let other = eval(&net2, &q2, f, Scheme::NonCumulative, e);
            prop_assert!((base - other).abs() <= 1e-12 * base.max(1e-300) + 1e-15);
        }

        #[test]
        fn extra_attempt_never_hurts(
            (net, q, k) in (1usize..=4).prop_flat_map(|n| (
                network(n),
                prop::collection::vec(1u32..5, n),
                0..n,
            )),
            f in fading(),
        ) {
            let mut more = q.clone();
            more[k] += 1;
            for s in Scheme::ALL {
                let a = eval(&net, &q, f, s, Exactness::Exact);
                let b = eval(&net, &more, f, s, Exactness::Exact);
                prop_assert!(b <= a * (1.0 + 1e-12) + 1e-16, "{:?}: {} -> {}", s, a, b);
            }
            let a = eval(&net, &q, f, Scheme::NonCumulative, Exactness::Approx);
            let b = eval(&net, &more, f, Scheme::NonCumulative, Exactness::Approx);
            prop_assert!(b <= a * (1.0 + 1e-12) + 1e-16);
        }

        #[test]
        fn carrying_budget_never_hurts(
            (net, q) in (1usize..=5).prop_flat_map(|n| (network(n), prop::collection::vec(1u32..5, n))),
            f in fading(),
        ) {
            let nc = eval(&net, &q, f, Scheme::NonCumulative, Exactness::Exact);
            let fc = eval(&net, &q, f, Scheme::FullyCumulative, Exactness::Exact);
            prop_assert!(fc <= nc * (1.0 + 1e-12) + 1e-16);
            let t = eval(&net, &q, f, Scheme::Type1, Exactness::Exact);
            let tc = eval(&net, &q, f, Scheme::Type1Cumulative, Exactness::Exact);
            prop_assert!(tc <= t * (1.0 + 1e-12) + 1e-16);
        }

        #[test]
        fn combining_beats_independent_retries_in_fast_fading(
            (net, q) in (1usize..=5).prop_flat_map(|n| (network(n), prop::collection::vec(1u32..5, n))),
        ) {
            let cc = eval(&net, &q, FadingMode::Fast, Scheme::NonCumulative, Exactness::Exact);
            let t1 = eval(&net, &q, FadingMode::Fast, Scheme::Type1, Exactness::Exact);
            prop_assert!(cc <= t1 * (1.0 + 1e-12));
            let ccc = eval(&net, &q, FadingMode::Fast, Scheme::FullyCumulative, Exactness::Exact);
            let t1c = eval(&net, &q, FadingMode::Fast, Scheme::Type1Cumulative, Exactness::Exact);
            prop_assert!(ccc <= t1c * (1.0 + 1e-12));
        }

        #[test]
        fn pdp_is_a_probability(
            (net, q) in (1usize..=5).prop_flat_map(|n| (network(n), prop::collection::vec(0u32..5, n))),
            f in fading(),
        ) {
            prop_assume!(q.iter().sum::<u32>() > 0);
            for s in [Scheme::FullyCumulative, Scheme::Type1Cumulative] {
                let p = eval(&net, &q, f, s, Exactness::Exact);
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
