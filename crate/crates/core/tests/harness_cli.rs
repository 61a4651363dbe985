mod common;

use std::path::Path;
use std::process::Command;

use blind_ofdm::harness::{
    dump_constellation, equalize, monte_carlo, run_transmitter, write_results_csv, PhasePolicy, SimConfig,
};
use blind_ofdm::receiver::ReceiverMode;
use common::{max_diff, receive};

fn small_config(workers: Option<usize>) -> SimConfig {
    let mut cfg = SimConfig {
        snr_db: vec![4.0, 12.0],
        runs: 3,
        mode: ReceiverMode::PhaseAware,
        seed: 7,
        workers,
        ..SimConfig::default()
    };
    cfg.frame.subcarriers = 64;
    cfg.frame.turbo_iters = 2;
    cfg
}

fn csv_bytes(cfg: &SimConfig) -> Vec<u8> {
    let result = monte_carlo(cfg).unwrap();
    assert!(result.errors.is_empty());
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &result.records).unwrap();
    buf
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blind-ofdm"))
}

const SMALL: &[&str] = &[
    "--snr", "4,12", "--runs", "2", "--m", "64", "--turbo-iters", "1", "--seed", "99",
];

#[test]
fn transmitter_contract() {
    let cfg = SimConfig::default();
    let a = run_transmitter(&cfg, 12.0, 5).unwrap();
    let b = run_transmitter(&cfg, 12.0, 5).unwrap();
    assert_eq!(a.coded_bits.len(), 5120);
    assert_eq!(a.info_bits.len(), 2558);
    assert!((a.grid.mean_power() - 1.0).abs() < 1e-12);
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.channel.phase, b.channel.phase);
    assert_eq!(a.samples.len(), 10 * (256 + 8));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let one = csv_bytes(&small_config(Some(1)));
    let three = csv_bytes(&small_config(Some(3)));
    assert_eq!(one, three);
    let lines = String::from_utf8(one).unwrap().lines().count();
    assert_eq!(lines, 1 + 2 * 3 * 30);
}

#[test]
fn two_processes_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .arg("simulate")
            .args(SMALL)
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "2");
    assert_eq!(a, b);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.toml");
    std::fs::write(
        &config,
        "mode = \"conventional\"\nsnr = [6]\nruns = 4\nm = 64\nturbo-iters = 1\n",
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let summary = dir.path().join("s.json");
    let status = bin()
        .args(["simulate", "--runs", "1", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--summary")
        .arg(&summary)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 25);
    assert!(text.lines().skip(1).all(|l| l.contains(",conventional,")));

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(json["errored_runs"], 0);
    let cells = json["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 25);
    for c in cells {
        let (lo, mid, hi) = (c["p15_mse"].as_f64().unwrap(), c["median_mse"].as_f64().unwrap(), c["p85_mse"].as_f64().unwrap());
        assert!(lo <= mid && mid <= hi);
    }
}

#[test]
fn replay_regenerates_a_row_and_dumps_the_constellation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let ok = bin().arg("simulate").args(SMALL).arg("--out").arg(&out).status().unwrap();
    assert!(ok.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let last_row = text.lines().last().unwrap();
    let final_mse: f64 = last_row.split(',').nth(6).unwrap().parse().unwrap();

    let dump = dir.path().join("const.csv");
    let replay = bin()
        .args(["replay", "--m", "64", "--turbo-iters", "1", "--seed-record", last_row, "--dump-constellation"])
        .arg(&dump)
        .output()
        .unwrap();
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    let stdout = String::from_utf8(replay.stdout).unwrap();
    assert!(stdout.contains(&format!("final MSE={final_mse:.3e}")), "{stdout}");
    let rows: Vec<String> = std::fs::read_to_string(&dump).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(rows[0], "kind,m,n,re,im,tx_symbol");
    assert_eq!(rows.len(), 1 + 2 * 64 * 10);
    assert_eq!(rows.iter().filter(|r| r.starts_with("y_eq,")).count(), 640);
}

#[test]
fn bad_input_exits_nonzero() {
    let bad_mode = bin().args(["simulate", "--mode", "turbo"]).output().unwrap();
    assert!(!bad_mode.status.success());
    let bad_size = bin().args(["simulate", "--m", "100", "--runs", "1"]).output().unwrap();
    assert_eq!(bad_size.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_size.stderr).contains("power of two"));
    let bad_path = bin()
        .arg("simulate")
        .args(SMALL)
        .args(["--out", "/nonexistent-dir/r.csv"])
        .output()
        .unwrap();
    assert_eq!(bad_path.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_path.stderr).contains("/nonexistent-dir/r.csv"));
    let bad_record = bin().args(["replay", "--seed-record", "nonsense"]).output().unwrap();
    assert_eq!(bad_record.status.code(), Some(1));
}

#[test]
fn perfect_equalization_recovers_the_symbols() {
    let rx = receive(&SimConfig::default(), f64::INFINITY, 2.5, 12);
    let eq = equalize(&rx.grid, &rx.truth);
    assert!(max_diff(eq.as_slice(), rx.tx.grid.as_slice()) < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    dump_constellation(&path, &rx.grid, &rx.truth, &rx.tx.symbol_indices).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let mut count = 0;
    for row in reader.records() {
        let row = row.unwrap();
        if &row[0] == "y_eq" {
            let (m, n): (usize, usize) = (row[1].parse().unwrap(), row[2].parse().unwrap());
            let x = rx.tx.grid.get(m, n);
            let z = blind_ofdm::Complex64::new(row[3].parse().unwrap(), row[4].parse().unwrap());
            assert!((z - x).norm() < 1e-9);
        }
        count += 1;
    }
    assert_eq!(count, 2 * 256 * 10);
    assert!(dump_constellation(Path::new("/nonexistent-dir/c.csv"), &rx.grid, &rx.truth, &rx.tx.symbol_indices)
        .unwrap_err()
        .to_string()
        .contains("/nonexistent-dir/c.csv"));
}

#[test]
fn quarter_turn_policy_draws_multiples_of_a_right_angle() {
    let cfg = SimConfig {
        phase: PhasePolicy::QuarterTurns,
        ..SimConfig::default()
    };
    for seed in 0..20 {
        let theta = run_transmitter(&cfg, 20.0, seed).unwrap().channel.phase;
        let k = theta / std::f64::consts::FRAC_PI_2;
        assert!((k - k.round()).abs() < 1e-12);
    }
}
