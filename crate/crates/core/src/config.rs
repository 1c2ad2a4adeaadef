//! Experiment files.
//!
//! A TOML document describes one experiment:
//!
//! ```toml
//! command = "simulate"
//! seed = 7
//! n_packets = 1000000
//! q_sum = 12                     # or [8, 20] for an inclusive range
//! fading = ["slow", "fast"]
//! strategies = ["non-cumulative", "fully-cumulative"]
//!
//! [network]
//! los = [0.1, 0.5, 0.1, 0.3, 0.7]
//! rate = 1.0
//! snr = "5 dB"                   # plain numbers are linear ratios
//!
//! [delays]
//! tau_p = "0.5us"
//! tau_d = "0.5us"
//! tau_nack = "0.05us"
//! alpha = 0.5
//!
//! [sweep]
//! alpha = [0.0, 0.5, 1.0]
//! ```
//!
//! Every problem found is reported, not just the first.

use std::str::FromStr;

use serde::Serialize;
use toml::{Table, Value};

use crate::link::{db_to_linear, Exactness, FadingMode, NetworkConfig};
use crate::pdp::{ArqAllocation, Strategy};
use crate::sim::{derive_qsum, DelayParams, NackPolicy};

/// Experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Minimum PDP per method over a range of budgets.
    PdpSweep,
    /// Best allocation per method.
    Optimize,
    /// Local-minimum certificates of an allocation.
    LocalMinCheck,
    /// Monte-Carlo ensemble metrics.
    Simulate,
    /// Monte-Carlo delay histograms.
    DelayProfile,
    /// Candidate list sizes against the full search space.
    ListSize,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::PdpSweep,
        Command::Optimize,
        Command::LocalMinCheck,
        Command::Simulate,
        Command::DelayProfile,
        Command::ListSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::PdpSweep => "pdp-sweep",
            Command::Optimize => "optimize",
            Command::LocalMinCheck => "local-min-check",
            Command::Simulate => "simulate",
            Command::DelayProfile => "delay-profile",
            Command::ListSize => "list-size",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Command::Simulate | Command::DelayProfile)
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
            format!("unknown command {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Allocation-finding procedures for `optimize` and `pdp-sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Exhaustive search on the exact PDP.
    Optimal,
    /// Exhaustive search on the approximate PDP.
    OptimalApprox,
    /// Algorithm 1 for slow fading, FTML for fast fading.
    LowComplexity,
    /// Even split.
    Uniform,
    /// `[q_sum, 0, …, 0]` with the fully-cumulative strategy.
    FullyCumulative,
    /// Exhaustive search for Type-1 ARQ.
    Type1,
    /// `[q_sum, 0, …, 0]` with cumulative Type-1 ARQ.
    Type1Cumulative,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Optimal,
        Method::OptimalApprox,
        Method::LowComplexity,
        Method::Uniform,
        Method::FullyCumulative,
        Method::Type1,
        Method::Type1Cumulative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Optimal => "optimal",
            Method::OptimalApprox => "optimal-approx",
            Method::LowComplexity => "low-complexity",
            Method::Uniform => "uniform",
            Method::FullyCumulative => "fully-cumulative",
            Method::Type1 => "type1",
            Method::Type1Cumulative => "type1-cumulative",
        }
    }

    /// Strategy whose PDP the method's allocation is scored with.
    pub fn strategy(self) -> Strategy {
        match self {
            Method::FullyCumulative => Strategy::FullyCumulative,
            Method::Type1 => Strategy::Type1,
            Method::Type1Cumulative => Strategy::Type1Cumulative,
            _ => Strategy::NonCumulative,
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// How simulations and certificates pick their allocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationChoice {
    /// Exact optimum of the strategy: exhaustive search for private budgets,
    /// `[q_sum, 0, …, 0]` for cumulative ones.
    Optimal,
    Uniform,
    /// The same allocation for every strategy.
    Fixed(ArqAllocation),
}

/// Parameter sweeps for the simulation commands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    /// Linear SNR values.
    pub snr: Vec<f64>,
    /// Seconds.
    pub tau_nack: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub network: NetworkConfig,
    pub snr_db: f64,
    pub q_sums: Vec<u32>,
    /// Budget implied by `delays.tau_total`, when given.
    pub derived_q_sum: Option<u32>,
    pub fading: Vec<FadingMode>,
    pub strategies: Vec<Strategy>,
    pub exactness: Exactness,
    pub methods: Vec<Method>,
    pub allocation: AllocationChoice,
    pub delays: DelayParams,
    pub sweep: Sweep,
    pub n_packets: u64,
    pub seed: Option<u64>,
    pub average_includes_dropped: bool,
}

/// Problems found while reading a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<String>);

impl std::fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// Parse a number followed by an optional unit from `units`.
fn split_unit<'a>(s: &'a str, units: &[&'a str]) -> Option<(f64, Option<&'a str>)> {
    let t = s.trim();
    for u in units {
        if let Some(num) = t.strip_suffix(u) {
            return num.trim().parse().ok().map(|v| (v, Some(*u)));
        }
    }
    t.parse().ok().map(|v| (v, None))
}

/// Linear SNR from a number or a string such as `"5 dB"`.
pub fn parse_snr(v: &Value) -> Result<f64, String> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(x) => Ok(*x),
        Value::String(s) => match split_unit(s, &["dB", "db"]) {
            Some((x, Some(_))) => Ok(db_to_linear(x)),
            Some((x, None)) => Ok(x),
            None => Err(format!("cannot read {s:?} as an SNR")),
        },
        other => Err(format!("expected a number or a string, got {}", other.type_str())),
    }
}

/// Seconds from a number or a string with `s`, `ms`, `us`, `µs` or `ns`.
pub fn parse_time(v: &Value) -> Result<f64, String> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(x) => Ok(*x),
        Value::String(s) => match split_unit(s, &["us", "µs", "ns", "ms", "s"]) {
            Some((x, Some("us" | "µs"))) => Ok(x * 1e-6),
            Some((x, Some("ns"))) => Ok(x * 1e-9),
            Some((x, Some("ms"))) => Ok(x * 1e-3),
            Some((x, _)) => Ok(x),
            None => Err(format!("cannot read {s:?} as a time")),
        },
        other => Err(format!("expected a number or a string, got {}", other.type_str())),
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

fn as_u64(v: &Value) -> Option<u64> {
    v.as_integer().and_then(|i| u64::try_from(i).ok())
}

/// Accept a scalar or an array of scalars.
fn one_or_many(v: &Value) -> Vec<&Value> {
    match v {
        Value::Array(a) => a.iter().collect(),
        other => vec![other],
    }
}

struct Reader<'a> {
    errors: Vec<String>,
    root: &'a Table,
}

impl<'a> Reader<'a> {
    fn err(&mut self, field: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{field}: {msg}"));
    }

    fn table(&mut self, key: &str) -> Option<&'a Table> {
        match self.root.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.err(key, "expected a table");
                None
            }
        }
    }

    fn names<T: FromStr<Err = String>>(&mut self, key: &str, default: Vec<T>) -> Vec<T> {
        let Some(v) = self.root.get(key) else {
            return default;
        };
        let mut out = Vec::new();
        for (i, item) in one_or_many(v).into_iter().enumerate() {
            match item.as_str().map(str::parse::<T>) {
                Some(Ok(x)) => out.push(x),
                Some(Err(e)) => self.err(&format!("{key}[{i}]"), e),
                None => self.err(&format!("{key}[{i}]"), "expected a string"),
            }
        }
        if out.is_empty() && self.errors.is_empty() {
            self.err(key, "must not be empty");
        }
        out
    }
}

fn unknown_keys(r: &mut Reader<'_>, table: &Table, prefix: &str, known: &[&str]) {
    for k in table.keys() {
        if !known.contains(&k.as_str()) {
            r.err(&format!("{prefix}{k}"), "unknown field");
        }
    }
}

fn parse_fading(s: &str) -> Result<FadingMode, String> {
    match s {
        "slow" => Ok(FadingMode::Slow),
        "fast" => Ok(FadingMode::Fast),
        _ => Err(format!("unknown fading mode {s:?}; expected \"slow\" or \"fast\"")),
    }
}

struct FadingName(FadingMode);

impl FromStr for FadingName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_fading(s).map(FadingName)
    }
}

struct StrategyName(Strategy);

impl FromStr for StrategyName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<Strategy>().map(StrategyName).map_err(|e| e.to_string())
    }
}

/// Parse and validate an experiment. `command_override`, `seed_override`
/// replace the file's values.
pub fn parse_spec(
    text: &str,
    command_override: Option<&str>,
    seed_override: Option<u64>,
) -> Result<ExperimentSpec, ValidationErrors> {
    let root: Table =
        text.parse().map_err(|e: toml::de::Error| ValidationErrors(vec![format!("TOML syntax: {}", e.message())]))?;
    let mut r = Reader { errors: Vec::new(), root: &root };
    unknown_keys(
        &mut r,
        &root,
        "",
        &[
            "command",
            "seed",
            "n_packets",
            "q_sum",
            "fading",
            "strategies",
            "exactness",
            "methods",
            "allocation",
            "network",
            "delays",
            "sweep",
            "average_includes_dropped",
        ],
    );

    let command = match command_override.or_else(|| root.get("command").and_then(Value::as_str)) {
        Some(s) => s.parse::<Command>().map_err(|e| r.err("command", e)).ok(),
        None => {
            r.err("command", "missing; give it in the file or on the command line");
            None
        }
    };

    // Network.
    let mut los = Vec::new();
    let mut rate = 1.0;
    let mut snr = None;
    match r.table("network") {
        None => r.err("network", "missing table"),
        Some(t) => {
            unknown_keys(&mut r, t, "network.", &["los", "rate", "snr"]);
            match t.get("los").map(|v| v.as_array()) {
                Some(Some(a)) if !a.is_empty() => {
                    for (i, x) in a.iter().enumerate() {
                        match as_f64(x) {
                            Some(c) if (0.0..1.0).contains(&c) => los.push(c),
                            Some(c) => r.err(&format!("network.los[{i}]"), format!("{c} must lie in [0, 1)")),
                            None => r.err(&format!("network.los[{i}]"), "expected a number"),
                        }
                    }
                }
                Some(_) => r.err("network.los", "expected a non-empty array"),
                None => r.err("network.los", "missing"),
            }
            if let Some(v) = t.get("rate") {
                match as_f64(v) {
                    Some(x) if x > 0.0 && x.is_finite() => rate = x,
                    _ => r.err("network.rate", "must be a positive number"),
                }
            }
            match t.get("snr").map(parse_snr) {
                Some(Ok(x)) if x > 0.0 && x.is_finite() => snr = Some(x),
                Some(Ok(x)) => r.err("network.snr", format!("{x} must be positive")),
                Some(Err(e)) => r.err("network.snr", e),
                None => r.err("network.snr", "missing"),
            }
        }
    }

    // Delays.
    let mut delays = DelayParams::unit_microsecond();
    if let Some(t) = r.table("delays") {
        unknown_keys(&mut r, t, "delays.", &["tau_p", "tau_d", "tau_nack", "alpha", "tau_total", "nack_policy"]);
        for (key, slot) in
            [("tau_p", &mut delays.tau_p), ("tau_d", &mut delays.tau_d), ("tau_nack", &mut delays.tau_nack)]
        {
            if let Some(v) = t.get(key) {
                match parse_time(v) {
                    Ok(x) if x >= 0.0 && x.is_finite() => *slot = x,
                    Ok(x) => r.err(&format!("delays.{key}"), format!("{x} must be >= 0")),
                    Err(e) => r.err(&format!("delays.{key}"), e),
                }
            }
        }
        if let Some(v) = t.get("alpha") {
            match as_f64(v) {
                Some(x) if x >= 0.0 && x.is_finite() => delays.alpha = x,
                _ => r.err("delays.alpha", "must be a number >= 0"),
            }
        }
        if let Some(v) = t.get("tau_total") {
            match parse_time(v) {
                Ok(x) if x > 0.0 && x.is_finite() => delays.tau_total = Some(x),
                Ok(x) => r.err("delays.tau_total", format!("{x} must be positive")),
                Err(e) => r.err("delays.tau_total", e),
            }
        }
        if let Some(v) = t.get("nack_policy") {
            match v.as_str() {
                Some("per-failure") => delays.nack_policy = NackPolicy::PerFailure,
                Some("per-attempt") => delays.nack_policy = NackPolicy::PerAttempt,
                _ => r.err("delays.nack_policy", "expected \"per-failure\" or \"per-attempt\""),
            }
        }
        if delays.attempt_time() <= 0.0 {
            r.err("delays", "tau_p + tau_d must be positive");
        }
    }
    let derived_q_sum = match delays.tau_total {
        Some(_) if delays.attempt_time() > 0.0 => match derive_qsum(&delays) {
            Ok(q) => Some(q),
            Err(e) => {
                r.err("delays.tau_total", e);
                None
            }
        },
        _ => None,
    };

    // Budget.
    let mut q_sums = Vec::new();
    match root.get("q_sum") {
        Some(Value::Integer(_)) => match as_u64(&root["q_sum"]).filter(|&q| q >= 1 && q <= u64::from(u32::MAX)) {
            Some(q) => q_sums.push(q as u32),
            None => r.err("q_sum", "must be a positive integer"),
        },
        Some(Value::Array(a)) => {
            let ends: Vec<Option<u64>> = a.iter().map(as_u64).collect();
            match ends.as_slice() {
                [Some(lo), Some(hi)] if *lo >= 1 && lo <= hi && *hi <= 100_000 => {
                    q_sums.extend(*lo as u32..=*hi as u32)
                }
                _ => r.err("q_sum", "a range must be [from, to] with 1 <= from <= to"),
            }
        }
        Some(_) => r.err("q_sum", "expected an integer or a [from, to] range"),
        None => match derived_q_sum {
            Some(q) => q_sums.push(q),
            None => r.err("q_sum", "missing; give q_sum or delays.tau_total"),
        },
    }

    let fading = r.names::<FadingName>("fading", vec![FadingName(FadingMode::Slow), FadingName(FadingMode::Fast)]);
    let strategies = r.names::<StrategyName>(
        "strategies",
        vec![StrategyName(Strategy::NonCumulative), StrategyName(Strategy::FullyCumulative)],
    );
    let methods = r.names::<Method>("methods", Method::ALL.to_vec());
    let exactness = match root.get("exactness").map(|v| v.as_str()) {
        None => Exactness::Exact,
        Some(Some("exact")) => Exactness::Exact,
        Some(Some("approx")) => Exactness::Approx,
        Some(_) => {
            r.err("exactness", "expected \"exact\" or \"approx\"");
            Exactness::Exact
        }
    };
    let allocation = match root.get("allocation") {
        None => AllocationChoice::Optimal,
        Some(Value::String(s)) if s == "optimal" => AllocationChoice::Optimal,
        Some(Value::String(s)) if s == "uniform" => AllocationChoice::Uniform,
        Some(Value::String(s)) => match s.parse::<ArqAllocation>() {
            Ok(a) => AllocationChoice::Fixed(a),
            Err(e) => {
                r.err("allocation", e);
                AllocationChoice::Optimal
            }
        },
        Some(Value::Array(a)) => {
            let q: Option<Vec<u32>> = a.iter().map(|x| as_u64(x).and_then(|v| u32::try_from(v).ok())).collect();
            match q.map(ArqAllocation::new) {
                Some(Ok(a)) => AllocationChoice::Fixed(a),
                _ => {
                    r.err("allocation", "expected non-negative integers with a positive sum");
                    AllocationChoice::Optimal
                }
            }
        }
        Some(_) => {
            r.err("allocation", "expected \"optimal\", \"uniform\" or an array");
            AllocationChoice::Optimal
        }
    };
    if let AllocationChoice::Fixed(a) = &allocation {
        if !los.is_empty() && a.hop_count() != los.len() {
            r.err("allocation", format!("has {} hops, network has {}", a.hop_count(), los.len()));
        }
        if !q_sums.is_empty() && q_sums.iter().any(|&q| q != a.q_sum()) {
            r.err("allocation", format!("sums to {}, q_sum is {:?}", a.q_sum(), q_sums));
        }
    }

    let n_packets = match root.get("n_packets") {
        None => 1_000_000,
        Some(v) => match as_u64(v).filter(|&n| n >= 1) {
            Some(n) => n,
            None => {
                r.err("n_packets", "must be a positive integer");
                1
            }
        },
    };
    let seed = match (seed_override, root.get("seed")) {
        (Some(s), _) => Some(s),
        (None, None) => None,
        (None, Some(v)) => match v.as_integer() {
            Some(i) => Some(i as u64),
            None => {
                r.err("seed", "must be an integer");
                None
            }
        },
    };
    if seed.is_none() && command.is_some_and(Command::is_stochastic) {
        r.err("seed", "required for stochastic commands (set it in the file or pass --seed)");
    }
    let average_includes_dropped = match root.get("average_includes_dropped") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(_) => {
            r.err("average_includes_dropped", "expected true or false");
            false
        }
    };

    // Sweeps default to the single configured value.
    let mut sweep =
        Sweep { snr: snr.into_iter().collect(), tau_nack: vec![delays.tau_nack], alpha: vec![delays.alpha] };
    if let Some(t) = r.table("sweep") {
        unknown_keys(&mut r, t, "sweep.", &["snr", "tau_nack", "alpha"]);
        if let Some(v) = t.get("snr") {
            let vals: Vec<_> = one_or_many(v).into_iter().map(parse_snr).enumerate().collect();
            sweep.snr.clear();
            for (i, x) in vals {
                match x {
                    Ok(x) if x > 0.0 && x.is_finite() => sweep.snr.push(x),
                    Ok(x) => r.err(&format!("sweep.snr[{i}]"), format!("{x} must be positive")),
                    Err(e) => r.err(&format!("sweep.snr[{i}]"), e),
                }
            }
        }
        if let Some(v) = t.get("tau_nack") {
            sweep.tau_nack.clear();
            for (i, x) in one_or_many(v).into_iter().map(parse_time).enumerate() {
                match x {
                    Ok(x) if x >= 0.0 && x.is_finite() => sweep.tau_nack.push(x),
                    Ok(x) => r.err(&format!("sweep.tau_nack[{i}]"), format!("{x} must be >= 0")),
                    Err(e) => r.err(&format!("sweep.tau_nack[{i}]"), e),
                }
            }
        }
        if let Some(v) = t.get("alpha") {
            sweep.alpha.clear();
            for (i, x) in one_or_many(v).into_iter().enumerate() {
                match as_f64(x) {
                    Some(a) if a >= 0.0 && a.is_finite() => sweep.alpha.push(a),
                    _ => r.err(&format!("sweep.alpha[{i}]"), "must be a number >= 0"),
                }
            }
        }
    }

    if !r.errors.is_empty() {
        return Err(ValidationErrors(r.errors));
    }
    let snr = snr.expect("checked above");
    let network = NetworkConfig::new(los, rate, snr).map_err(|e| ValidationErrors(vec![format!("network: {e}")]))?;
    Ok(ExperimentSpec {
        command: command.expect("checked above"),
        snr_db: network.snr_db(),
        network,
        q_sums,
        derived_q_sum,
        fading: fading.into_iter().map(|f| f.0).collect(),
        strategies: strategies.into_iter().map(|s| s.0).collect(),
        exactness,
        methods,
        allocation,
        delays,
        sweep,
        n_packets,
        seed,
        average_includes_dropped,
    })
}
