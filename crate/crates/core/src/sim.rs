//! Packet-level Monte-Carlo simulation of the relay chain.
//!
//! Each packet walks the hops in order. A hop with budget `b` makes up to
//! `b` attempts:
//!
//! * slow fading draws one gain and succeeds at attempt `u` once
//!   `u·|h|²·γ ≥ 2^R − 1`;
//! * fast fading draws a fresh gain per attempt and accumulates `|h|²·γ`;
//! * Type-1 draws a fresh gain per attempt and never accumulates.
//!
//! Cumulative strategies hand unused attempts to the next hop and pay the
//! counter delay `T_c = α·T` at every relay that forwards the packet.
//! Delays are rebuilt from integer counts, so identical outcomes give
//! bit-identical delays and ensemble sums do not depend on summation order.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{ChannelSampler, FadingMode, NetworkConfig};
use crate::pdp::{ArqAllocation, Strategy};
use crate::rng::stream_rng;

/// Packets per random stream. Fixed so results do not depend on threading.
pub const BLOCK_SIZE: u64 = 8192;

/// Relative tolerance on the deadline comparison.
const DEADLINE_SLACK: f64 = 1e-12;

/// Which transmissions incur the NACK delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NackPolicy {
    /// Only failed attempts are answered with a NACK.
    #[default]
    PerFailure,
    /// Every attempt is charged `τ_NACK`, reproducing the bound
    /// `n·(τ_p + τ_d + τ_NACK)`.
    PerAttempt,
}

/// Timing parameters, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    pub tau_p: f64,
    pub tau_d: f64,
    pub tau_nack: f64,
    /// Counter-processing factor; `T_c = α·(τ_p + τ_d)`.
    pub alpha: f64,
    /// End-to-end deadline. Defaults to `q_sum·(τ_p + τ_d)` when absent.
    pub tau_total: Option<f64>,
    #[serde(default)]
    pub nack_policy: NackPolicy,
}

impl DelayParams {
    pub fn new(tau_p: f64, tau_d: f64, tau_nack: f64, alpha: f64, tau_total: Option<f64>) -> Result<Self> {
        let d = DelayParams { tau_p, tau_d, tau_nack, alpha, tau_total, nack_policy: NackPolicy::PerFailure };
        d.validate()?;
        Ok(d)
    }

    /// `T = 1 µs` split as processing plus transmission, no NACK or counter
    /// cost, deadline from the budget.
    pub fn unit_microsecond() -> Self {
        DelayParams {
            tau_p: 0.5e-6,
            tau_d: 0.5e-6,
            tau_nack: 0.0,
            alpha: 0.0,
            tau_total: None,
            nack_policy: NackPolicy::PerFailure,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in
            [("tau_p", self.tau_p), ("tau_d", self.tau_d), ("tau_nack", self.tau_nack), ("alpha", self.alpha)]
        {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if let Some(t) = self.tau_total {
            if !(t >= 0.0 && t.is_finite()) {
                problems.push(format!("tau_total = {t} must be finite and >= 0"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(problems.join("; ")))
        }
    }

    /// Time per transmission attempt, `T = τ_p + τ_d`.
    pub fn attempt_time(&self) -> f64 {
        self.tau_p + self.tau_d
    }

    /// Counter-processing delay per relay, `T_c = α·T`.
    pub fn counter_time(&self) -> f64 {
        self.alpha * self.attempt_time()
    }

    /// Deadline for a given budget.
    pub fn deadline(&self, q_sum: u32) -> f64 {
        self.tau_total.unwrap_or_else(|| f64::from(q_sum) * self.attempt_time())
    }

    /// Delay of a packet from its event counts.
    pub fn delay_of(&self, attempts: u64, nacks: u64, counters: u64) -> f64 {
        attempts as f64 * self.attempt_time() + nacks as f64 * self.tau_nack + counters as f64 * self.counter_time()
    }
}

/// `q_sum = ⌊τ_total / (τ_p + τ_d)⌋`. NACK and counter delays are
/// deliberately left out.
pub fn derive_qsum(delays: &DelayParams) -> Result<u32> {
    delays.validate()?;
    let total = delays.tau_total.ok_or_else(|| Error::Domain("tau_total is required to derive q_sum".into()))?;
    let t = delays.attempt_time();
    if t <= 0.0 {
        return Err(Error::Domain("tau_p + tau_d must be positive".into()));
    }
    // Absorb representation error so 12 µs / 1 µs is 12, not 11.
    let q = (total / t + 1e-9).floor();
    if q < 1.0 {
        return Err(Error::Domain(format!("deadline {total:e} s is shorter than one attempt ({t:e} s)")));
    }
    if q > f64::from(u32::MAX) {
        return Err(Error::Domain("derived q_sum does not fit in 32 bits".into()));
    }
    Ok(q as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketStatus {
    Delivered,
    Dropped,
}

/// One simulated packet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacketOutcome {
    pub status: PacketStatus,
    pub total_delay: f64,
    /// Attempts made at each hop; zero past the drop point.
    pub attempts_used: Vec<u32>,
    /// Attempts charged with a NACK.
    pub nacks: u32,
    /// Relays that processed the counter.
    pub counters: u32,
    /// Zero-based hop where the packet was lost.
    pub drop_hop: Option<usize>,
}

/// Counts produced by walking one packet, before delays are attached.
#[derive(Debug, Clone, Copy)]
struct Walk {
    delivered: bool,
    attempts: u32,
    nacks: u32,
    counters: u32,
    drop_hop: usize,
}

/// Precomputed per-network state for fast packet walks.
struct Simulator {
    samplers: Vec<ChannelSampler>,
    budget: Vec<u32>,
    /// `(2^R − 1)/γ`: success once the accumulated gain reaches it.
    gain_threshold: f64,
    fading: FadingMode,
    strategy: Strategy,
    nack_policy: NackPolicy,
}

impl Simulator {
    fn new(
        network: &NetworkConfig,
        alloc: &ArqAllocation,
        fading: FadingMode,
        strategy: Strategy,
        delays: &DelayParams,
    ) -> Result<Self> {
        delays.validate()?;
        if alloc.hop_count() != network.hop_count() {
            return Err(Error::Precondition(format!(
                "allocation has {} hops, network has {}",
                alloc.hop_count(),
                network.hop_count()
            )));
        }
        if !strategy.is_cumulative() && !alloc.all_positive() {
            return Err(Error::Precondition(format!(
                "{} simulation needs q_k >= 1 for every hop, got {alloc}",
                strategy.name()
            )));
        }
        Ok(Simulator {
            samplers: network.los().iter().map(|&c| ChannelSampler::new(c)).collect(),
            budget: alloc.as_slice().to_vec(),
            gain_threshold: network.snr_threshold() / network.snr(),
            fading,
            strategy,
            nack_policy: delays.nack_policy,
        })
    }

    /// Attempts until first success at one hop, or `None` after `budget`
    /// failures.
    #[inline]
    fn hop<R: Rng + ?Sized>(&self, k: usize, budget: u32, rng: &mut R) -> Option<u32> {
        if budget == 0 {
            return None;
        }
        let sampler = &self.samplers[k];
        let thr = self.gain_threshold;
        if self.strategy.is_type1() {
            (1..=budget).find(|_| sampler.sample(rng) >= thr)
        } else {
            match self.fading {
                FadingMode::Slow => {
                    let g = sampler.sample(rng);
                    (1..=budget).find(|&u| f64::from(u) * g >= thr)
                }
                FadingMode::Fast => {
                    let mut acc = 0.0;
                    (1..=budget).find(|_| {
                        acc += sampler.sample(rng);
                        acc >= thr
                    })
                }
            }
        }
    }

    fn walk<R: Rng + ?Sized>(&self, rng: &mut R, attempts_used: Option<&mut Vec<u32>>) -> Walk {
        let n = self.budget.len();
        let cumulative = self.strategy.is_cumulative();
        let mut used_log = attempts_used;
        let mut carry = 0u32;
        let mut attempts = 0u32;
        let mut failures = 0u32;
        let mut counters = 0u32;
        for k in 0..n {
            let budget = self.budget[k] + carry;
            match self.hop(k, budget, rng) {
                Some(u) => {
                    attempts += u;
                    failures += u - 1;
                    if let Some(log) = used_log.as_deref_mut() {
                        log[k] = u;
                    }
                    if cumulative {
                        carry = budget - u;
                        if k + 1 < n {
                            counters += 1;
                        }
                    }
                }
                None => {
                    attempts += budget;
                    failures += budget;
                    if let Some(log) = used_log.as_deref_mut() {
                        log[k] = budget;
                    }
                    return Walk {
                        delivered: false,
                        attempts,
                        nacks: self.nacks(attempts, failures),
                        counters,
                        drop_hop: k,
                    };
                }
            }
        }
        Walk { delivered: true, attempts, nacks: self.nacks(attempts, failures), counters, drop_hop: n }
    }

    fn nacks(&self, attempts: u32, failures: u32) -> u32 {
        match self.nack_policy {
            NackPolicy::PerFailure => failures,
            NackPolicy::PerAttempt => attempts,
        }
    }
}

/// Simulate one packet.
pub fn simulate_packet<R: Rng + ?Sized>(
    network: &NetworkConfig,
    alloc: &ArqAllocation,
    fading: FadingMode,
    strategy: Strategy,
    delays: &DelayParams,
    rng: &mut R,
) -> Result<PacketOutcome> {
    let sim = Simulator::new(network, alloc, fading, strategy, delays)?;
    let mut used = vec![0; network.hop_count()];
    let w = sim.walk(rng, Some(&mut used));
    Ok(PacketOutcome {
        status: if w.delivered { PacketStatus::Delivered } else { PacketStatus::Dropped },
        total_delay: delays.delay_of(w.attempts.into(), w.nacks.into(), w.counters.into()),
        attempts_used: used,
        nacks: w.nacks,
        counters: w.counters,
        drop_hop: (!w.delivered).then_some(w.drop_hop),
    })
}

/// Ensemble execution options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Average delay over all packets, dropped ones included with the time
    /// they consumed, instead of delivered packets only.
    pub average_includes_dropped: bool,
}

/// Event counts summed over a set of packets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
struct Totals {
    attempts: u64,
    nacks: u64,
    counters: u64,
}

impl Totals {
    fn add(&mut self, w: &Walk) {
        self.attempts += u64::from(w.attempts);
        self.nacks += u64::from(w.nacks);
        self.counters += u64::from(w.counters);
    }

    fn merge(&mut self, o: &Totals) {
        self.attempts += o.attempts;
        self.nacks += o.nacks;
        self.counters += o.counters;
    }
}

/// Aggregated ensemble statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleMetrics {
    pub n_packets: u64,
    pub delivered: u64,
    pub p_drop_count: u64,
    /// Delivered packets whose delay exceeded the deadline.
    pub p_deadline_count: u64,
    /// Drops per hop.
    pub drops_by_hop: Vec<u64>,
    pub deadline: f64,
    /// Mean delay over delivered packets, or over all packets when
    /// configured; `None` when nothing qualifies.
    pub avg_delay: Option<f64>,
    pub average_includes_dropped: bool,
    /// `(drops + late deliveries) / drops`; `None` without drops.
    pub eta: Option<f64>,
    /// `(drops + late deliveries) / packets`.
    pub pdv: f64,
    /// Delivered packets per delay value, keyed by the delay's bit pattern.
    #[serde(skip)]
    histogram: BTreeMap<u64, u64>,
}

impl EnsembleMetrics {
    pub fn p_drop(&self) -> f64 {
        self.p_drop_count as f64 / self.n_packets as f64
    }

    pub fn p_deadline(&self) -> f64 {
        self.p_deadline_count as f64 / self.n_packets as f64
    }

    /// `(delay, delivered packets)` pairs in ascending delay.
    pub fn histogram(&self) -> Vec<(f64, u64)> {
        let mut v: Vec<(f64, u64)> = self.histogram.iter().map(|(&b, &c)| (f64::from_bits(b), c)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }
}

#[derive(Debug, Clone, Default)]
struct Partial {
    packets: u64,
    delivered: u64,
    late: u64,
    drops_by_hop: Vec<u64>,
    delivered_totals: Totals,
    dropped_totals: Totals,
    histogram: BTreeMap<u64, u64>,
}

impl Partial {
    fn merge(&mut self, o: Partial) {
        self.packets += o.packets;
        self.delivered += o.delivered;
        self.late += o.late;
        if self.drops_by_hop.len() < o.drops_by_hop.len() {
            self.drops_by_hop.resize(o.drops_by_hop.len(), 0);
        }
        for (a, b) in self.drops_by_hop.iter_mut().zip(&o.drops_by_hop) {
            *a += b;
        }
        self.delivered_totals.merge(&o.delivered_totals);
        self.dropped_totals.merge(&o.dropped_totals);
        for (k, c) in o.histogram {
            *self.histogram.entry(k).or_insert(0) += c;
        }
    }
}

fn run_block(sim: &Simulator, delays: &DelayParams, deadline: f64, seed: u64, block: u64, count: u64) -> Partial {
    let mut rng = stream_rng(seed, block);
    let mut p = Partial { drops_by_hop: vec![0; sim.budget.len()], ..Partial::default() };
    let limit = deadline * (1.0 + DEADLINE_SLACK);
    for _ in 0..count {
        let w = sim.walk(&mut rng, None);
        p.packets += 1;
        if w.delivered {
            p.delivered += 1;
            p.delivered_totals.add(&w);
            let d = delays.delay_of(w.attempts.into(), w.nacks.into(), w.counters.into());
            if d > limit {
                p.late += 1;
            }
            *p.histogram.entry(d.to_bits()).or_insert(0) += 1;
        } else {
            p.drops_by_hop[w.drop_hop] += 1;
            p.dropped_totals.add(&w);
        }
    }
    p
}

/// Simulate `n_packets` packets. Results depend only on the inputs and the
/// seed, not on the number of workers.
pub fn run_ensemble(
    network: &NetworkConfig,
    alloc: &ArqAllocation,
    fading: FadingMode,
    strategy: Strategy,
    delays: &DelayParams,
    n_packets: u64,
    seed: u64,
) -> Result<EnsembleMetrics> {
    run_ensemble_with(network, alloc, fading, strategy, delays, n_packets, seed, &EnsembleOptions::default())
}

/// [`run_ensemble`] with explicit execution options.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble_with(
    network: &NetworkConfig,
    alloc: &ArqAllocation,
    fading: FadingMode,
    strategy: Strategy,
    delays: &DelayParams,
    n_packets: u64,
    seed: u64,
    options: &EnsembleOptions,
) -> Result<EnsembleMetrics> {
    if n_packets == 0 {
        return Err(Error::Domain("n_packets must be at least 1".into()));
    }
    let sim = Simulator::new(network, alloc, fading, strategy, delays)?;
    let deadline = delays.deadline(alloc.q_sum());
    let blocks = n_packets.div_ceil(BLOCK_SIZE);
    let work = || {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let count = BLOCK_SIZE.min(n_packets - b * BLOCK_SIZE);
                run_block(&sim, delays, deadline, seed, b, count)
            })
            .collect::<Vec<_>>()
    };
    let partials = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut total = Partial { drops_by_hop: vec![0; network.hop_count()], ..Partial::default() };
    for p in partials {
        total.merge(p);
    }

    let drops = total.packets - total.delivered;
    let mut sum = total.delivered_totals;
    let mut denom = total.delivered;
    if options.average_includes_dropped {
        sum.merge(&total.dropped_totals);
        denom = total.packets;
    }
    let avg_delay = (denom > 0).then(|| delays.delay_of(sum.attempts, sum.nacks, sum.counters) / denom as f64);
    Ok(EnsembleMetrics {
        n_packets: total.packets,
        delivered: total.delivered,
        p_drop_count: drops,
        p_deadline_count: total.late,
        drops_by_hop: total.drops_by_hop,
        deadline,
        avg_delay,
        average_includes_dropped: options.average_includes_dropped,
        eta: (drops > 0).then(|| (drops + total.late) as f64 / drops as f64),
        pdv: (drops + total.late) as f64 / total.packets as f64,
        histogram: total.histogram,
    })
}

/// Delay histogram in percent of all packets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayProfile {
    /// `(delay, percent)` in ascending delay.
    pub bins: Vec<(f64, f64)>,
    pub deadline: f64,
    /// Percent of packets delivered after the deadline.
    pub w_deadline: f64,
    /// Sum of all bins: the delivered percentage.
    pub delivered_percent: f64,
}

pub fn delay_profile(metrics: &EnsembleMetrics) -> DelayProfile {
    let n = metrics.n_packets as f64;
    let limit = metrics.deadline * (1.0 + DEADLINE_SLACK);
    let hist = metrics.histogram();
    let late: u64 = hist.iter().filter(|(d, _)| *d > limit).map(|(_, c)| c).sum();
    DelayProfile {
        bins: hist.iter().map(|&(d, c)| (d, 100.0 * c as f64 / n)).collect(),
        deadline: metrics.deadline,
        w_deadline: 100.0 * late as f64 / n,
        delivered_percent: 100.0 * metrics.delivered as f64 / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Exactness;
    use crate::pdp::{pdp, PdpQuery};

    fn us(x: f64) -> f64 {
        x * 1e-6
    }

    fn five_hop() -> NetworkConfig {
        NetworkConfig::with_snr_db(vec![0.1, 0.5, 0.1, 0.3, 0.7], 1.0, 5.0).unwrap()
    }

    #[test]
    fn derive_qsum_examples() {
        let mut d = DelayParams::unit_microsecond();
        d.tau_total = Some(us(12.0));
        assert_eq!(derive_qsum(&d).unwrap(), 12);
        d.tau_total = Some(us(11.9));
        assert_eq!(derive_qsum(&d).unwrap(), 11);
        d.tau_total = Some(us(1.0));
        assert_eq!(derive_qsum(&d).unwrap(), 1);
        d.tau_nack = us(5.0);
        d.alpha = 3.0;
        d.tau_total = Some(us(12.0));
        assert_eq!(derive_qsum(&d).unwrap(), 12);
        d.tau_total = Some(us(0.5));
        assert!(derive_qsum(&d).is_err());
        d.tau_total = None;
        assert!(derive_qsum(&d).is_err());
        let z = DelayParams::new(0.0, 0.0, 0.0, 0.0, Some(1.0)).unwrap();
        assert!(derive_qsum(&z).is_err());
        assert!(DelayParams::new(-1.0, 0.0, 0.0, 0.0, None).is_err());
    }

    #[test]
    fn absurd_snr_delivers_on_first_attempts() {
        let net = NetworkConfig::new(vec![0.2, 0.5, 0.1], 1.0, 1e12).unwrap();
        let alloc = ArqAllocation::new(vec![2, 2, 2]).unwrap();
        let mut d = DelayParams::unit_microsecond();
        d.alpha = 0.5;
        let mut rng = stream_rng(1, 0);
        for fading in [FadingMode::Slow, FadingMode::Fast] {
            for s in Strategy::ALL {
                let o = simulate_packet(&net, &alloc, fading, s, &d, &mut rng).unwrap();
                assert_eq!(o.status, PacketStatus::Delivered);
                assert_eq!(o.attempts_used, vec![1, 1, 1]);
                let want = if s.is_cumulative() { 3.0 * 1e-6 + 2.0 * 0.5e-6 } else { 3.0 * 1e-6 };
                assert!((o.total_delay - want).abs() < 1e-18, "{s:?}");
            }
        }
    }

    #[test]
    fn budget_and_delay_invariants_per_packet() {
        let net = five_hop();
        let d = DelayParams::unit_microsecond();
        let mut rng = stream_rng(3, 0);
        for s in Strategy::ALL {
            let alloc = if s.is_cumulative() {
                ArqAllocation::new(vec![4, 0, 3, 3, 2]).unwrap()
            } else {
                ArqAllocation::new(vec![3, 2, 3, 2, 2]).unwrap()
            };
            for fading in [FadingMode::Slow, FadingMode::Fast] {
                for _ in 0..2000 {
                    let o = simulate_packet(&net, &alloc, fading, s, &d, &mut rng).unwrap();
                    let used: u32 = o.attempts_used.iter().sum();
                    assert!(used <= 12);
                    assert!((o.total_delay - f64::from(used) * 1e-6).abs() < 1e-18);
                    if !s.is_cumulative() {
                        for (u, q) in o.attempts_used.iter().zip(alloc.as_slice()) {
                            assert!(u <= q);
                        }
                    }
                    match o.status {
                        PacketStatus::Delivered => assert!(o.drop_hop.is_none()),
                        PacketStatus::Dropped => {
                            let k = o.drop_hop.unwrap();
                            assert!(o.attempts_used[k + 1..].iter().all(|&u| u == 0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nack_policies() {
        let net = NetworkConfig::new(vec![0.0], 1.0, 1e-6).unwrap();
        let alloc = ArqAllocation::new(vec![3]).unwrap();
        let mut d = DelayParams::unit_microsecond();
        d.tau_nack = 0.25e-6;
        let mut rng = stream_rng(9, 0);
        let o = simulate_packet(&net, &alloc, FadingMode::Fast, Strategy::NonCumulative, &d, &mut rng).unwrap();
        assert_eq!(o.status, PacketStatus::Dropped);
        assert_eq!(o.nacks, 3);
        d.nack_policy = NackPolicy::PerAttempt;
        let net = NetworkConfig::new(vec![0.0], 1.0, 1e12).unwrap();
        let o = simulate_packet(&net, &alloc, FadingMode::Fast, Strategy::NonCumulative, &d, &mut rng).unwrap();
        assert_eq!(o.nacks, 1);
        assert!((o.total_delay - 1.25e-6).abs() < 1e-18);
    }

    #[test]
    fn infeasible_allocations_rejected() {
        let net = five_hop();
        let d = DelayParams::unit_microsecond();
        let alloc = ArqAllocation::new(vec![4, 0, 3, 3, 2]).unwrap();
        let mut rng = stream_rng(0, 0);
        assert!(simulate_packet(&net, &alloc, FadingMode::Slow, Strategy::NonCumulative, &d, &mut rng).is_err());
        assert!(run_ensemble(&net, &alloc, FadingMode::Slow, Strategy::FullyCumulative, &d, 0, 1).is_err());
        let short = ArqAllocation::new(vec![1, 1]).unwrap();
        assert!(run_ensemble(&net, &short, FadingMode::Slow, Strategy::FullyCumulative, &d, 10, 1).is_err());
    }

    #[test]
    fn ensemble_conservation_and_eta() {
        let net = five_hop();
        let alloc = ArqAllocation::new(vec![3, 2, 3, 2, 2]).unwrap();
        let d = DelayParams::unit_microsecond();
        let m = run_ensemble(&net, &alloc, FadingMode::Slow, Strategy::FullyCumulative, &d, 50_000, 17).unwrap();
        assert_eq!(m.delivered + m.p_drop_count, 50_000);
        assert_eq!(m.drops_by_hop.iter().sum::<u64>(), m.p_drop_count);
        assert_eq!(m.p_deadline_count, 0);
        assert_eq!(m.eta, Some(1.0));
        let prof = delay_profile(&m);
        let total: f64 = prof.bins.iter().map(|b| b.1).sum();
        assert!((total - prof.delivered_percent).abs() < 1e-9);
        assert_eq!(prof.w_deadline, 0.0);
        assert!(prof.bins.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn ensemble_is_independent_of_worker_count() {
        let net = five_hop();
        let alloc = ArqAllocation::new(vec![3, 2, 3, 2, 2]).unwrap();
        let mut d = DelayParams::unit_microsecond();
        d.tau_nack = 0.1e-6;
        d.alpha = 0.5;
        let run = |w| {
            let o = EnsembleOptions { workers: Some(w), average_includes_dropped: false };
            run_ensemble_with(&net, &alloc, FadingMode::Fast, Strategy::FullyCumulative, &d, 40_000, 5, &o).unwrap()
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(a.histogram(), b.histogram());
    }

    #[test]
    fn all_first_try_profile_is_a_single_bin() {
        let net = NetworkConfig::new(vec![0.3, 0.3, 0.3], 1.0, 1e12).unwrap();
        let alloc = ArqAllocation::new(vec![2, 2, 2]).unwrap();
        let mut d = DelayParams::unit_microsecond();
        d.alpha = 1.0;
        let m = run_ensemble(&net, &alloc, FadingMode::Slow, Strategy::FullyCumulative, &d, 1000, 2).unwrap();
        let prof = delay_profile(&m);
        assert_eq!(prof.bins.len(), 1);
        assert!((prof.bins[0].0 - 5e-6).abs() < 1e-18);
        assert_eq!(prof.bins[0].1, 100.0);
        assert_eq!(m.eta, None);
    }

    #[test]
    fn dropped_delay_option_changes_average() {
        let net = five_hop();
        let alloc = ArqAllocation::new(vec![3, 2, 3, 2, 2]).unwrap();
        let d = DelayParams::unit_microsecond();
        let run = |inc| {
            let o = EnsembleOptions { workers: None, average_includes_dropped: inc };
            run_ensemble_with(&net, &alloc, FadingMode::Slow, Strategy::NonCumulative, &d, 20_000, 8, &o).unwrap()
        };
        let (a, b) = (run(false), run(true));
        assert_eq!(a.p_drop_count, b.p_drop_count);
        assert_ne!(a.avg_delay, b.avg_delay);
    }

    #[test]
    fn drop_rate_matches_analytic_pdp() {
        let net = NetworkConfig::with_snr_db(vec![0.2, 0.6, 0.1, 0.4], 1.0, 10.0).unwrap();
        let d = DelayParams::unit_microsecond();
        let n = 200_000u64;
        for (i, s) in Strategy::ALL.into_iter().enumerate() {
            let alloc = ArqAllocation::new(vec![2, 3, 2, 2]).unwrap();
            for fading in [FadingMode::Slow, FadingMode::Fast] {
                let p =
                    pdp(&PdpQuery { network: &net, alloc: &alloc, fading, strategy: s, exactness: Exactness::Exact })
                        .unwrap();
                let m = run_ensemble(&net, &alloc, fading, s, &d, n, 100 + i as u64).unwrap();
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                assert!((m.p_drop() - p).abs() <= 3.0 * sigma, "{s:?} {fading:?}: {} vs {p}", m.p_drop());
            }
        }
    }
}
