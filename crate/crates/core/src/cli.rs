//! Experiment runner behind the `relay-harq` binary.
//!
//! Each command turns an [`ExperimentSpec`] into a CSV table. Probabilities
//! are written as `{:.11e}`, times in microseconds. Output depends only on
//! the spec and the seed.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{parse_spec, AllocationChoice, Command, ExperimentSpec, Method, ValidationErrors};
use crate::link::{Exactness, FadingMode, NetworkConfig};
use crate::optimizer::{
    exhaustive_search, ftml_ff, fully_cumulative_optimal, list_algorithm_sf, local_minima_check, neighbor_check,
    uniform_allocation, SearchSpace,
};
use crate::pdp::{pdp, ArqAllocation, PdpQuery, Strategy};
use crate::sim::{delay_profile, run_ensemble_with, DelayParams, EnsembleMetrics, EnsembleOptions};
use crate::Error;

/// Exit status for configuration problems.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for empty search spaces.
pub const EXIT_INFEASIBLE: i32 = 3;
/// Exit status for series that failed to converge.
pub const EXIT_CONVERGENCE: i32 = 4;
/// Exit status for everything else.
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(#[from] ValidationErrors),
    #[error("{0}")]
    Run(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Run(Error::Domain(_) | Error::Precondition(_) | Error::Unsupported(_)) => EXIT_VALIDATION,
            CliError::Run(Error::Infeasible(_)) => EXIT_INFEASIBLE,
            CliError::Run(Error::NoConvergence { .. }) => EXIT_CONVERGENCE,
            CliError::Run(_) | CliError::Io { .. } => EXIT_OTHER,
        }
    }
}

/// A finished table plus the metadata written next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub spec: ExperimentSpec,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    columns: &'a [String],
    rows: usize,
    spec: &'a ExperimentSpec,
}

impl Report {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        w.into_inner().expect("writing to memory")
    }

    pub fn sidecar_json(&self) -> String {
        let s = Sidecar {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            columns: &self.header,
            rows: self.rows.len(),
            spec: &self.spec,
        };
        let mut out = serde_json::to_string_pretty(&s).expect("spec serialises");
        out.push('\n');
        out
    }
}

/// Path of the JSON metadata written next to `out`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let p = out.with_extension("json");
    if p == out {
        let mut s = out.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    } else {
        p
    }
}

/// Read, validate and run a configuration file; write the CSV to `out` (with
/// a JSON sidecar) or to stdout.
pub fn run_file(
    config: &Path,
    command: Option<&str>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config).map_err(|source| CliError::Io { path: config.into(), source })?;
    let spec = parse_spec(&text, command, seed)?;
    let report = run(&spec, workers)?;
    match out {
        Some(path) => {
            std::fs::write(path, report.to_csv()).map_err(|source| CliError::Io { path: path.into(), source })?;
            let side = sidecar_path(path);
            std::fs::write(&side, report.sidecar_json()).map_err(|source| CliError::Io { path: side, source })?;
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&report.to_csv())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
        }
    }
    Ok(())
}

/// Run a validated experiment.
pub fn run(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Report, CliError> {
    let (header, rows) = match spec.command {
        Command::PdpSweep => pdp_sweep(spec)?,
        Command::Optimize => optimize(spec)?,
        Command::LocalMinCheck => local_min(spec)?,
        Command::Simulate => simulate(spec, workers)?,
        Command::DelayProfile => profile(spec, workers)?,
        Command::ListSize => list_size(spec)?,
    };
    Ok(Report { header: header.into_iter().map(String::from).collect(), rows, spec: spec.clone() })
}

type Table = (Vec<&'static str>, Vec<Vec<String>>);

fn prob(x: f64) -> String {
    format!("{x:.11e}")
}

fn micros(t: f64) -> String {
    format!("{:.6}", t * 1e6)
}

fn opt_prob(x: Option<f64>) -> String {
    x.map(prob).unwrap_or_default()
}

fn score(
    network: &NetworkConfig,
    alloc: &ArqAllocation,
    fading: FadingMode,
    strategy: Strategy,
    exactness: Exactness,
) -> crate::Result<f64> {
    pdp(&PdpQuery { network, alloc, fading, strategy, exactness })
}

/// Approximate PDP where the strategy has one.
fn score_approx(
    network: &NetworkConfig,
    alloc: &ArqAllocation,
    fading: FadingMode,
    strategy: Strategy,
) -> crate::Result<Option<f64>> {
    match score(network, alloc, fading, strategy, Exactness::Approx) {
        Ok(p) => Ok(Some(p)),
        Err(Error::Unsupported(_) | Error::Precondition(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Allocation chosen by `method` plus the number of allocations it scored.
fn method_alloc(
    network: &NetworkConfig,
    q_sum: u32,
    fading: FadingMode,
    method: Method,
) -> crate::Result<(ArqAllocation, u128)> {
    let n = network.hop_count();
    Ok(match method {
        Method::Optimal | Method::OptimalApprox | Method::Type1 => {
            let ex = if method == Method::OptimalApprox { Exactness::Approx } else { Exactness::Exact };
            let r = exhaustive_search(network, q_sum, fading, ex, method.strategy())?;
            (r.alloc, r.evaluated)
        }
        Method::LowComplexity => match fading {
            FadingMode::Slow => {
                let o = list_algorithm_sf(network, q_sum)?;
                (o.best, o.candidates.len() as u128)
            }
            FadingMode::Fast => {
                let o = ftml_ff(network, q_sum)?;
                (o.best, o.candidates.len() as u128)
            }
        },
        Method::Uniform => (uniform_allocation(q_sum, network.los())?, 1),
        Method::FullyCumulative | Method::Type1Cumulative => (fully_cumulative_optimal(q_sum, n)?, 1),
    })
}

/// The exact-optimal allocation of a strategy.
fn optimal_alloc(
    network: &NetworkConfig,
    q_sum: u32,
    fading: FadingMode,
    strategy: Strategy,
    exactness: Exactness,
) -> crate::Result<ArqAllocation> {
    if strategy.is_cumulative() {
        fully_cumulative_optimal(q_sum, network.hop_count())
    } else {
        Ok(exhaustive_search(network, q_sum, fading, exactness, strategy)?.alloc)
    }
}

fn chosen_alloc(
    spec: &ExperimentSpec,
    network: &NetworkConfig,
    q_sum: u32,
    fading: FadingMode,
    strategy: Strategy,
) -> crate::Result<ArqAllocation> {
    match &spec.allocation {
        AllocationChoice::Optimal => optimal_alloc(network, q_sum, fading, strategy, spec.exactness),
        AllocationChoice::Uniform => uniform_allocation(q_sum, network.los()),
        AllocationChoice::Fixed(a) => Ok(a.clone()),
    }
}

fn column_name(fading: FadingMode, method: Method) -> &'static str {
    // Static names keep the header a plain list of &str.
    const NAMES: [[&str; 7]; 2] = [
        [
            "slow_optimal",
            "slow_optimal_approx",
            "slow_low_complexity",
            "slow_uniform",
            "slow_fully_cumulative",
            "slow_type1",
            "slow_type1_cumulative",
        ],
        [
            "fast_optimal",
            "fast_optimal_approx",
            "fast_low_complexity",
            "fast_uniform",
            "fast_fully_cumulative",
            "fast_type1",
            "fast_type1_cumulative",
        ],
    ];
    let f = match fading {
        FadingMode::Slow => 0,
        FadingMode::Fast => 1,
    };
    let m = Method::ALL.iter().position(|&x| x == method).expect("listed");
    NAMES[f][m]
}

/// Exact PDP of every method's allocation, one row per budget.
fn pdp_sweep(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let net = &spec.network;
    let mut header = vec!["q_sum"];
    for &f in &spec.fading {
        for &m in &spec.methods {
            header.push(column_name(f, m));
        }
    }
    let mut rows = Vec::new();
    for &q_sum in &spec.q_sums {
        let mut row = vec![q_sum.to_string()];
        for &f in &spec.fading {
            for &m in &spec.methods {
                let (alloc, _) = method_alloc(net, q_sum, f, m)?;
                row.push(prob(score(net, &alloc, f, m.strategy(), Exactness::Exact)?));
            }
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn optimize(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let net = &spec.network;
    let header = vec![
        "q_sum",
        "fading",
        "method",
        "strategy",
        "allocation",
        "pdp_exact",
        "pdp_approx",
        "evaluated",
        "space_size",
    ];
    let mut rows = Vec::new();
    for &q_sum in &spec.q_sums {
        for &f in &spec.fading {
            for &m in &spec.methods {
                let s = m.strategy();
                let (alloc, evaluated) = method_alloc(net, q_sum, f, m)?;
                let space = SearchSpace::for_strategy(net.hop_count(), q_sum, s)?;
                rows.push(vec![
                    q_sum.to_string(),
                    f.name().to_string(),
                    m.name().to_string(),
                    s.name().to_string(),
                    alloc.to_string(),
                    prob(score(net, &alloc, f, s, Exactness::Exact)?),
                    opt_prob(score_approx(net, &alloc, f, s)?),
                    evaluated.to_string(),
                    space.cardinality().to_string(),
                ]);
            }
        }
    }
    Ok((header, rows))
}

fn pairs(p: &[(usize, usize)]) -> String {
    p.iter().map(|(r, d)| format!("({},{})", r + 1, d + 1)).collect::<Vec<_>>().join(";")
}

fn local_min(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let net = &spec.network;
    let header = vec![
        "q_sum",
        "fading",
        "allocation",
        "pdp_approx",
        "inequality_local_min",
        "neighbor_local_min",
        "agree",
        "inequality_violations",
        "neighbor_violations",
    ];
    let mut rows = Vec::new();
    for &q_sum in &spec.q_sums {
        for &f in &spec.fading {
            let alloc = chosen_alloc(spec, net, q_sum, f, Strategy::NonCumulative)?;
            let ineq = local_minima_check(&alloc, net, f)?;
            let nb = neighbor_check(&alloc, net, f)?;
            rows.push(vec![
                q_sum.to_string(),
                f.name().to_string(),
                alloc.to_string(),
                prob(score(net, &alloc, f, Strategy::NonCumulative, Exactness::Approx)?),
                ineq.satisfied.to_string(),
                nb.satisfied.to_string(),
                (ineq.satisfied == nb.satisfied).to_string(),
                pairs(&ineq.violated_pairs),
                pairs(&nb.violated_pairs),
            ]);
        }
    }
    Ok((header, rows))
}

struct Point {
    fading: FadingMode,
    strategy: Strategy,
    network: NetworkConfig,
    q_sum: u32,
    alloc: ArqAllocation,
    delays: DelayParams,
}

/// Every combination of fading, strategy, SNR, budget, NACK delay and α.
fn sweep_points(spec: &ExperimentSpec) -> crate::Result<Vec<Point>> {
    let mut out = Vec::new();
    for &fading in &spec.fading {
        for &strategy in &spec.strategies {
            for &snr in &spec.sweep.snr {
                let network = spec.network.at_snr(snr)?;
                for &q_sum in &spec.q_sums {
                    let alloc = chosen_alloc(spec, &network, q_sum, fading, strategy)?;
                    for &tau_nack in &spec.sweep.tau_nack {
                        for &alpha in &spec.sweep.alpha {
                            let delays = DelayParams { tau_nack, alpha, ..spec.delays };
                            out.push(Point {
                                fading,
                                strategy,
                                network: network.clone(),
                                q_sum,
                                alloc: alloc.clone(),
                                delays,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn ensemble(spec: &ExperimentSpec, p: &Point, workers: Option<usize>) -> crate::Result<EnsembleMetrics> {
    let seed = spec.seed.ok_or_else(|| Error::Domain("a seed is required".into()))?;
    let options = EnsembleOptions { workers, average_includes_dropped: spec.average_includes_dropped };
    run_ensemble_with(&p.network, &p.alloc, p.fading, p.strategy, &p.delays, spec.n_packets, seed, &options)
}

fn point_columns(p: &Point) -> Vec<String> {
    vec![
        p.fading.name().to_string(),
        p.strategy.name().to_string(),
        format!("{:.6}", p.network.snr_db()),
        p.q_sum.to_string(),
        micros(p.delays.tau_nack),
        format!("{}", p.delays.alpha),
        p.alloc.to_string(),
    ]
}

const POINT_HEADER: [&str; 7] = ["fading", "strategy", "snr_db", "q_sum", "tau_nack_us", "alpha", "allocation"];

fn simulate(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Table, CliError> {
    let mut header = POINT_HEADER.to_vec();
    header.extend([
        "deadline_us",
        "n_packets",
        "delivered",
        "dropped",
        "late",
        "p_drop",
        "p_deadline",
        "pdv",
        "eta",
        "avg_delay_us",
        "pdp_analytic",
    ]);
    let mut rows = Vec::new();
    for p in sweep_points(spec)? {
        let m = ensemble(spec, &p, workers)?;
        let analytic = score(&p.network, &p.alloc, p.fading, p.strategy, Exactness::Exact)?;
        let mut row = point_columns(&p);
        row.extend([
            micros(m.deadline),
            m.n_packets.to_string(),
            m.delivered.to_string(),
            m.p_drop_count.to_string(),
            m.p_deadline_count.to_string(),
            prob(m.p_drop()),
            prob(m.p_deadline()),
            prob(m.pdv),
            opt_prob(m.eta),
            m.avg_delay.map(micros).unwrap_or_default(),
            prob(analytic),
        ]);
        rows.push(row);
    }
    Ok((header, rows))
}

fn profile(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Table, CliError> {
    let mut header = POINT_HEADER.to_vec();
    header.extend(["delay_us", "percent", "deadline_us", "late_percent", "delivered_percent"]);
    let mut rows = Vec::new();
    for p in sweep_points(spec)? {
        let prof = delay_profile(&ensemble(spec, &p, workers)?);
        let base = point_columns(&p);
        for (d, pct) in &prof.bins {
            let mut row = base.clone();
            row.extend([
                micros(*d),
                prob(*pct),
                micros(prof.deadline),
                prob(prof.w_deadline),
                prob(prof.delivered_percent),
            ]);
            rows.push(row);
        }
    }
    Ok((header, rows))
}

fn list_size(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let net = &spec.network;
    let header =
        vec!["hops", "q_sum", "exhaustive", "algorithm1_unfiltered", "algorithm1", "algorithm1_fallback", "ftml"];
    let mut rows = Vec::new();
    for &q_sum in &spec.q_sums {
        let space = SearchSpace::new(net.hop_count(), q_sum)?;
        let a1 = list_algorithm_sf(net, q_sum)?;
        let ftml = ftml_ff(net, q_sum)?;
        rows.push(vec![
            net.hop_count().to_string(),
            q_sum.to_string(),
            space.cardinality().to_string(),
            a1.unfiltered_len.to_string(),
            a1.candidates.len().to_string(),
            a1.filter_fallback.to_string(),
            ftml.candidates.len().to_string(),
        ]);
    }
    Ok((header, rows))
}
