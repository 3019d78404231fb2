//! `ptes`: privacy-preserving transactive energy market simulator.
//!
//! Subcommands: `keygen` writes a Paillier key pair to disk, `run`
//! executes seeded market scenarios (optionally under attack) and writes
//! a JSON report, `bench` measures per-role crypto cost across key
//! lengths and modes, `selftest` runs the built-in property suites.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ptes_core::bench::{run_bench, to_csv, ratio_summary, BenchMode, BenchParams};
use ptes_core::paillier::{keygen, BetaMode, KeyId, PaillierKeySet};
use ptes_core::protocol::ProtocolConfig;
use ptes_core::selftest;
use ptes_core::simulator::{run_scenario, AttackScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ptes",
    about = "Privacy-preserving transactive energy market simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Paillier key pair and write public/private records.
    Keygen {
        /// Key length in bits (at least 128).
        #[arg(long)]
        bits: u64,
        /// Output path prefix; writes <out>.pub.json and <out>.key.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "PTES_SEED", default_value_t = 42)]
        seed: u64,
    },
    /// Run seeded market cycles and write a scenario report.
    Run {
        /// Scenario configuration (JSON); built-in desk-scale defaults
        /// when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Attack schedule: "none", "half-cycle-<N>", or a JSON file.
        #[arg(long, default_value = "none")]
        attacks: String,
        /// Number of market cycles.
        #[arg(long, default_value_t = 10)]
        cycles: u32,
        /// Where to write the JSON report.
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
        /// Also write a line-delimited message transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Also write wall-clock timing rows here (CSV).
        #[arg(long)]
        timing_csv: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long, env = "PTES_SEED")]
        seed: Option<u64>,
    },
    /// Measure per-role seconds per cycle across key lengths and modes.
    Bench {
        /// Comma-separated key lengths in bits.
        #[arg(long, default_value = "512,1024,2048")]
        bits_list: String,
        /// Comma-separated modes: pointwise, block.
        #[arg(long, default_value = "pointwise,block")]
        modes: String,
        /// Total market participants (one supplier, the rest customers).
        #[arg(long, default_value_t = 100)]
        agents: u32,
        /// Grid points per curve.
        #[arg(long, default_value_t = 101)]
        points: u32,
        /// Cycles to average over.
        #[arg(long, default_value_t = 1)]
        cycles: u32,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
        #[arg(long, env = "PTES_SEED", default_value_t = 42)]
        seed: u64,
    },
    /// Run the built-in property suites.
    Selftest,
}

/// Private half of a key pair as persisted on disk; the public record is
/// the library's `PublicKey` serialization.
#[derive(Serialize, Deserialize)]
struct PrivateKeyRecord {
    key_id: KeyId,
    bits: u64,
    p: String,
    q: String,
    beta: String,
}

fn cmd_keygen(bits: u64, out: &Path, seed: u64) -> Result<()> {
    if bits < 128 {
        bail!("refusing to generate a key below 128 bits (got {bits})");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ks = keygen(bits, &1u32.into(), BetaMode::AlphaPlusOne, KeyId(1), &mut rng)?;
    let pub_path = out.with_extension("pub.json");
    let key_path = out.with_extension("key.json");
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&pub_path, serde_json::to_string_pretty(ks.public())?)
        .with_context(|| format!("writing {}", pub_path.display()))?;
    let (p, q) = ks.primes();
    let record = PrivateKeyRecord {
        key_id: ks.key_id(),
        bits: ks.public().bits,
        p: p.to_string(),
        q: q.to_string(),
        beta: ks.public().beta.to_string(),
    };
    fs::write(&key_path, serde_json::to_string_pretty(&record)?)
        .with_context(|| format!("writing {}", key_path.display()))?;
    // Read-back check: the private record must rebuild the same key set.
    let reloaded = load_private_key(&key_path)?;
    if reloaded.public() != ks.public() {
        bail!("private key record did not round-trip");
    }
    println!(
        "wrote {} and {} ({} bits)",
        pub_path.display(),
        key_path.display(),
        ks.public().bits
    );
    Ok(())
}

fn load_private_key(path: &Path) -> Result<PaillierKeySet> {
    let raw = fs::read_to_string(path)?;
    let record: PrivateKeyRecord = serde_json::from_str(&raw)?;
    Ok(PaillierKeySet::from_primes_with_beta(
        record.p.parse().map_err(|e| anyhow::anyhow!("bad p: {e}"))?,
        record.q.parse().map_err(|e| anyhow::anyhow!("bad q: {e}"))?,
        record.beta.parse().map_err(|e| anyhow::anyhow!("bad beta: {e}"))?,
        record.key_id,
    )?)
}

fn parse_attacks(arg: &str) -> Result<AttackScenario> {
    if arg == "none" {
        return Ok(AttackScenario::none());
    }
    if let Some(rest) = arg.strip_prefix("half-cycle-") {
        let cycle: u32 = rest
            .parse()
            .with_context(|| format!("bad cycle number in preset {arg:?}"))?;
        return Ok(AttackScenario::half_cycle(cycle));
    }
    let raw = fs::read_to_string(arg).with_context(|| format!("reading attack file {arg}"))?;
    AttackScenario::from_json(&raw).with_context(|| format!("parsing attack file {arg}"))
}

fn cmd_run(
    config: Option<&Path>,
    attacks: &str,
    cycles: u32,
    report_path: &Path,
    transcript: Option<&Path>,
    timing_csv: Option<&Path>,
    seed: Option<u64>,
) -> Result<bool> {
    let mut cfg = match config {
        Some(path) => {
            let raw =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ProtocolConfig::from_json(&raw)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ProtocolConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let scenario = parse_attacks(attacks)?;
    let report = run_scenario(&cfg, &scenario, cycles, transcript.is_some())?;

    for result in &report.cycles {
        if result.failed {
            println!(
                "cycle {:>3}: FAILED ({})",
                result.cycle,
                result.failure.as_deref().unwrap_or("unknown")
            );
        } else {
            println!(
                "cycle {:>3}: lambda* = {:.2} (grid point {}), detections: {}",
                result.cycle,
                result.lambda_star,
                result.index,
                result.detections.len()
            );
        }
    }
    if let Some(rate) = report.detection_rate {
        println!(
            "attacked messages: {} (detection rate {:.3})",
            report.attacked_messages, rate
        );
    }
    if let Some(rate) = report.false_alarm_rate {
        println!(
            "clean messages: {} (false-alarm rate {:.3})",
            report.clean_messages, rate
        );
    }

    fs::write(report_path, report.to_json())
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!("report written to {}", report_path.display());
    if let Some(path) = transcript {
        fs::write(path, report.transcript_lines())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = timing_csv {
        fs::write(path, report.timing_csv())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report.failed_cycles.is_empty())
}

fn cmd_bench(
    bits_list: &str,
    modes: &str,
    agents: u32,
    points: u32,
    cycles: u32,
    out: &Path,
    seed: u64,
) -> Result<()> {
    let bits_list: Vec<u64> = bits_list
        .split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad bits {s:?}")))
        .collect::<Result<_>>()?;
    let modes: Vec<BenchMode> = modes
        .split(',')
        .map(|s| s.parse().map_err(|e: String| anyhow::anyhow!(e)))
        .collect::<Result<_>>()?;
    if bits_list.is_empty() {
        bail!("need at least one key length");
    }
    let params = BenchParams {
        bits_list,
        modes,
        n_agents: agents,
        n_points: points,
        cycles,
        seed,
    };
    println!(
        "benchmarking {} agents, {} grid points, {} cycle(s) per cell",
        params.n_agents, params.n_points, params.cycles
    );
    let records = run_bench(&params)?;
    fs::write(out, to_csv(&records)).with_context(|| format!("writing {}", out.display()))?;
    println!("timing rows written to {}", out.display());
    let ratios = ratio_summary(&records);
    if !ratios.is_empty() {
        println!("pointwise/block ratio per role:");
        println!("{:>9} {:>6} {:>14} {:>14} {:>8}", "key_bits", "role", "pointwise_s", "block_s", "ratio");
        for row in ratios {
            println!(
                "{:>9} {:>6} {:>14.6} {:>14.6} {:>8.1}",
                row.key_bits,
                row.role.label(),
                row.pointwise_seconds,
                row.block_seconds,
                row.ratio
            );
        }
    }
    Ok(())
}

fn cmd_selftest() -> bool {
    let results = selftest::run_all();
    let mut all_passed = true;
    for r in &results {
        if r.passed {
            println!("{:<28} PASS", r.name);
        } else {
            all_passed = false;
            println!(
                "{:<28} FAIL ({})",
                r.name,
                r.detail.as_deref().unwrap_or("no detail")
            );
        }
    }
    all_passed
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Keygen { bits, out, seed } => cmd_keygen(*bits, out, *seed).map(|_| true),
        Command::Run {
            config,
            attacks,
            cycles,
            report,
            transcript,
            timing_csv,
            seed,
        } => cmd_run(
            config.as_deref(),
            attacks,
            *cycles,
            report,
            transcript.as_deref(),
            timing_csv.as_deref(),
            *seed,
        ),
        Command::Bench {
            bits_list,
            modes,
            agents,
            points,
            cycles,
            out,
            seed,
        } => cmd_bench(bits_list, modes, *agents, *points, *cycles, out, *seed).map(|_| true),
        Command::Selftest => Ok(cmd_selftest()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
