use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FIVE_HOP_NET: &str = r#"
[network]
los = [0.1, 0.5, 0.1, 0.3, 0.7]
rate = 1.0
snr = "5 dB"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relay-harq"))
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, extra: &[&str]) -> Output {
    bin().arg("--config").arg(config).args(extra).output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn sim_config() -> String {
    format!(
        r#"
command = "simulate"
seed = 99
n_packets = 20000
strategies = ["non-cumulative", "fully-cumulative"]
{FIVE_HOP_NET}
[delays]
tau_p = "0.5us"
tau_d = "0.5us"
tau_nack = "0.05us"
tau_total = "12us"

[sweep]
alpha = [0.0, 1.0]
"#
    )
}

#[test]
fn simulate_is_byte_identical_across_runs_and_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "sim.toml", &sim_config());
    let outs: Vec<(Vec<u8>, Vec<u8>)> = [None, Some("1"), Some("4")]
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let out = dir.path().join(format!("sim{i}.csv"));
            let mut args = vec!["--out", out.to_str().unwrap()];
            if let Some(w) = w {
                args.extend(["--workers", w]);
            }
            let o = run(&cfg, &args);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            (std::fs::read(&out).unwrap(), std::fs::read(out.with_extension("json")).unwrap())
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);

    let other = dir.path().join("other.csv");
    let o = run(&cfg, &["--out", other.to_str().unwrap(), "--seed", "100"]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(&other).unwrap(), outs[0].0);
}

#[test]
fn simulate_cells_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "sim.toml", &sim_config());
    let out = dir.path().join("sim.csv");
    assert!(run(&cfg, &["--out", out.to_str().unwrap()]).status.success());
    let (header, rows) = read_csv(&out);
    assert_eq!(rows.len(), 2 * 2 * 2);
    for row in &rows {
        for (name, cell) in header.iter().zip(row) {
            match name.as_str() {
                "fading" => assert!(cell == "slow" || cell == "fast"),
                "strategy" => assert!(cell.parse::<relay_harq::pdp::Strategy>().is_ok(), "{cell}"),
                "allocation" => assert!(cell.parse::<relay_harq::pdp::ArqAllocation>().is_ok(), "{cell}"),
                "q_sum" | "n_packets" | "delivered" | "dropped" | "late" => {
                    cell.parse::<u64>().unwrap();
                }
                "eta" | "avg_delay_us" => {
                    if !cell.is_empty() {
                        cell.parse::<f64>().unwrap();
                    }
                }
                _ => assert!(cell.parse::<f64>().unwrap().is_finite(), "{name} = {cell}"),
            }
        }
        let n: u64 = row[header.iter().position(|h| h == "n_packets").unwrap()].parse().unwrap();
        let d: u64 = row[header.iter().position(|h| h == "delivered").unwrap()].parse().unwrap();
        let x: u64 = row[header.iter().position(|h| h == "dropped").unwrap()].parse().unwrap();
        assert_eq!(n, d + x);
    }
}

#[test]
fn sidecar_records_seed_and_derived_budget() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "sim.toml", &sim_config());
    let out = dir.path().join("sim.csv");
    assert!(run(&cfg, &["--out", out.to_str().unwrap(), "--seed", "5"]).status.success());
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["spec"]["seed"], 5);
    assert_eq!(side["spec"]["derived_q_sum"], 12);
    assert_eq!(side["spec"]["q_sums"], serde_json::json!([12]));
    assert_eq!(side["spec"]["command"], "simulate");
    assert_eq!(side["rows"], 8);
}

#[test]
fn optimize_two_hops_two_attempts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "opt.toml",
        "command = \"optimize\"\nq_sum = 2\nmethods = [\"optimal\"]\n[network]\nlos = [0.2, 0.4]\nsnr = \"10 dB\"\n",
    );
    let o = run(&cfg, &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.contains("\"[1,1]\"")), "{text}");
}

#[test]
fn command_line_overrides_command() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "x.toml", &format!("command = \"optimize\"\nq_sum = 6\n{FIVE_HOP_NET}"));
    let o = run(&cfg, &["list-size"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("hops,q_sum,exhaustive"), "{text}");
    assert!(text.contains("5,6,5,"));
}

#[test]
fn pdp_sweep_optimal_columns_never_increase() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "sweep.toml", &format!("command = \"pdp-sweep\"\nq_sum = [8, 20]\n{FIVE_HOP_NET}"));
    let out = dir.path().join("sweep.csv");
    assert!(run(&cfg, &["--out", out.to_str().unwrap()]).status.success());
    let (header, rows) = read_csv(&out);
    assert_eq!(rows.len(), 13);
    for (c, name) in header.iter().enumerate().skip(1) {
        let v: Vec<f64> = rows.iter().map(|r| r[c].parse().unwrap()).collect();
        if name.ends_with("_optimal")
            || name.ends_with("cumulative")
            || name.ends_with("_type1")
            || name.ends_with("uniform")
        {
            assert!(v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{name}: {v:?}");
        }
        assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
    }
    let first = &rows[4];
    assert_eq!(first[0], "12");
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    assert!((first[col("slow_optimal")].parse::<f64>().unwrap() - 0.4230400869474701).abs() < 1e-11);
    assert!((first[col("fast_optimal")].parse::<f64>().unwrap() - 0.07861211915393751).abs() < 1e-12);
}

#[test]
fn delay_profile_sums_to_delivered_percentage() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "prof.toml",
        &format!(
            "command = \"delay-profile\"\nseed = 3\nn_packets = 5000\nfading = \"fast\"\nstrategies = \"fully-cumulative\"\n{FIVE_HOP_NET}\n[delays]\ntau_total = \"12us\"\nalpha = 0.5\n"
        ),
    );
    let out = dir.path().join("prof.csv");
    assert!(run(&cfg, &["--out", out.to_str().unwrap()]).status.success());
    let (header, rows) = read_csv(&out);
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let total: f64 = rows.iter().map(|r| r[col("percent")].parse::<f64>().unwrap()).sum();
    let delivered: f64 = rows[0][col("delivered_percent")].parse().unwrap();
    assert!((total - delivered).abs() < 1e-9);
    let d: Vec<f64> = rows.iter().map(|r| r[col("delay_us")].parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn invalid_config_lists_every_field_and_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "bad.toml",
        "command = \"simulate\"\nq_sum = 4\n[network]\nlos = [0.2, 1.5]\nrate = 0\nsnr = \"-\"\n[delays]\ntau_nack = \"-3us\"\n",
    );
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    for field in ["network.los[1]", "network.rate", "network.snr", "delays.tau_nack", "seed"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
}

#[test]
fn unknown_command_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "x.toml", &format!("q_sum = 6\n{FIVE_HOP_NET}"));
    assert_eq!(run(&cfg, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&cfg, &[]).status.code(), Some(2));
}

#[test]
fn budget_below_hop_count_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "x.toml", &format!("command = \"optimize\"\nq_sum = 4\n{FIVE_HOP_NET}"));
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn missing_config_exits_1() {
    let o = bin().args(["--config", "/nonexistent/exp.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        relay_harq::config::parse_spec(&text, None, None).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 5);
}
