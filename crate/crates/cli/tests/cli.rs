//! End-to-end checks of the `ptes` binary: file formats, determinism,
//! exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ptes(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptes"))
        .args(args)
        .current_dir(dir)
        .env_remove("PTES_SEED")
        .output()
        .expect("binary runs")
}

fn tiny_config() -> serde_json::Value {
    serde_json::json!({
        "grid": {"lambda_min": 0.0, "lambda_max": 0.35, "tau": 0.05, "sigma": 2, "sigma_lambda": 2},
        "n_suppliers": 2,
        "n_customers": 4,
        "delta_s": 30.0,
        "delta_d": 9.0,
        "key_bits": 192,
        "signing_enabled": true,
        "mitigation_policy": "last_good",
        "seed": 3
    })
}

#[test]
fn keygen_writes_parsable_records_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptes(&["keygen", "--bits", "512", "--out", "k", "--seed", "7"], dir.path());
    assert!(out.status.success(), "{:?}", out);
    let public: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("k.pub.json")).unwrap()).unwrap();
    assert_eq!(public["bits"], 512);
    let alpha: num_like::Big = num_like::parse(public["alpha"].as_str().unwrap());
    assert_eq!(alpha.bits, 512);
    let private: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("k.key.json")).unwrap()).unwrap();
    assert!(private["p"].is_string() && private["q"].is_string());

    // Same seed, same bytes.
    let first_pub = fs::read(dir.path().join("k.pub.json")).unwrap();
    let first_key = fs::read(dir.path().join("k.key.json")).unwrap();
    let out = ptes(&["keygen", "--bits", "512", "--out", "k", "--seed", "7"], dir.path());
    assert!(out.status.success());
    assert_eq!(fs::read(dir.path().join("k.pub.json")).unwrap(), first_pub);
    assert_eq!(fs::read(dir.path().join("k.key.json")).unwrap(), first_key);
}

/// Minimal decimal-string bit-length helper so the test does not pull a
/// bignum crate: parses into bytes via repeated division.
mod num_like {
    pub struct Big {
        pub bits: u64,
    }

    pub fn parse(decimal: &str) -> Big {
        let mut digits: Vec<u8> = decimal.bytes().map(|b| b - b'0').collect();
        let mut bits = 0u64;
        while digits.iter().any(|&d| d != 0) {
            // divide the decimal number by 2, tracking the remainder
            let mut rem = 0u8;
            for d in digits.iter_mut() {
                let cur = rem * 10 + *d;
                *d = cur / 2;
                rem = cur % 2;
            }
            bits += 1;
        }
        Big { bits }
    }
}

#[test]
fn keygen_rejects_keys_below_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptes(&["keygen", "--bits", "64", "--out", "k"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("128"));
}

#[test]
fn run_writes_a_report_and_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        serde_json::to_string_pretty(&tiny_config()).unwrap(),
    )
    .unwrap();
    let out = ptes(
        &[
            "run",
            "--config",
            "cfg.json",
            "--cycles",
            "3",
            "--report",
            "report.json",
            "--transcript",
            "transcript.jsonl",
            "--timing-csv",
            "timing.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{:?}", out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["cycles"].as_array().unwrap().len(), 3);
    assert!(report["detection_rate"].is_null());
    assert_eq!(report["false_alarm_rate"], 0.0);
    let transcript = fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert_eq!(
        transcript.lines().count(),
        report["messages"].as_array().unwrap().len()
    );
    let timing = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert!(timing.starts_with("key_bits,mode,role,seconds_per_cycle\n"));
}

#[test]
fn run_under_attack_reports_full_detection() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        serde_json::to_string_pretty(&tiny_config()).unwrap(),
    )
    .unwrap();
    let out = ptes(
        &[
            "run",
            "--config",
            "cfg.json",
            "--cycles",
            "2",
            "--attacks",
            "half-cycle-2",
            "--report",
            "report.json",
        ],
        dir.path(),
    );
    // Mitigation has cycle-1 history for everything, so the run exits 0.
    assert!(out.status.success(), "{:?}", out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["detection_rate"], 1.0);
    assert_eq!(report["false_alarm_rate"], 0.0);
    assert!(report["attacked_messages"].as_u64().unwrap() > 0);
}

#[test]
fn attacked_first_cycle_without_history_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        serde_json::to_string_pretty(&tiny_config()).unwrap(),
    )
    .unwrap();
    fs::write(
        dir.path().join("attacks.json"),
        serde_json::json!({
            "seed": 5,
            "rules": [{
                "cycles": {"cycles": [1]},
                "links": "tp_to_co",
                "kind": "tamper",
                "fraction": 1.0
            }]
        })
        .to_string(),
    )
    .unwrap();
    let out = ptes(
        &[
            "run",
            "--config",
            "cfg.json",
            "--cycles",
            "1",
            "--attacks",
            "attacks.json",
            "--report",
            "report.json",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["failed_cycles"], serde_json::json!([1]));
}

#[test]
fn bench_writes_the_stable_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptes(
        &[
            "bench",
            "--bits-list",
            "64",
            "--modes",
            "pointwise,block",
            "--agents",
            "3",
            "--points",
            "5",
            "--out",
            "bench.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{:?}", out);
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "key_bits,mode,role,seconds_per_cycle");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[0], "64");
        assert!(["pointwise", "block"].contains(&cols[1]));
        assert!(["agent", "tp", "co"].contains(&cols[2]));
        assert!(cols[3].parse::<f64>().unwrap() > 0.0);
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ratio"));
}

#[test]
fn selftest_passes_and_lists_the_named_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptes(&["selftest"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("paillier-exhaustive-35"));
    assert!(stdout.contains("pack-sum-homomorphism"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn seed_flag_overrides_config_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        serde_json::to_string_pretty(&tiny_config()).unwrap(),
    )
    .unwrap();
    let run = |report: &str, seed: &str| {
        let out = ptes(
            &[
                "run", "--config", "cfg.json", "--cycles", "1", "--seed", seed, "--report", report,
            ],
            dir.path(),
        );
        assert!(out.status.success());
        fs::read(dir.path().join(report)).unwrap()
    };
    let a = run("a.json", "99");
    let b = run("b.json", "99");
    let c = run("c.json", "100");
    assert_eq!(a, b);
    assert_ne!(a, c);
}
