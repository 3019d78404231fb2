//! Per-role timing of the cryptographic pipeline across key lengths and
//! modes.
//!
//! Absolute numbers are hardware-bound; the durable observation is the
//! pointwise/block ratio per role, which approaches the grid size for
//! the encryption-heavy roles once the key is large enough for modular
//! exponentiation to dominate fixed overheads.
//!
//! Cells below the block-mode correctness bound still run (plaintexts
//! wrap), so the sweep can cover key lengths too short to decrypt a
//! packed block correctly; the timing is representative either way
//! because operation costs do not depend on plaintext validity.

use crate::market::PriceGrid;
use crate::protocol::{
    ClearingRule, MarketSession, MitigationPolicy, Population, ProtocolConfig, ProtocolError,
};
use crate::rngseed::derive_seed;
use crate::simulator::ChannelSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Pointwise,
    Block,
}

impl BenchMode {
    pub fn label(&self) -> &'static str {
        match self {
            BenchMode::Pointwise => "pointwise",
            BenchMode::Block => "block",
        }
    }
}

impl std::str::FromStr for BenchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pointwise" => Ok(BenchMode::Pointwise),
            "block" => Ok(BenchMode::Block),
            other => Err(format!("unknown mode {other:?} (pointwise|block)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchRole {
    Agent,
    Tp,
    Co,
}

impl BenchRole {
    pub fn label(&self) -> &'static str {
        match self {
            BenchRole::Agent => "agent",
            BenchRole::Tp => "tp",
            BenchRole::Co => "co",
        }
    }
}

/// One measured cell: seconds per market cycle for one role; the agent
/// figure is additionally averaged per agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRecord {
    pub key_bits: u64,
    pub mode: BenchMode,
    pub role: BenchRole,
    pub seconds_per_cycle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub bits_list: Vec<u64>,
    pub modes: Vec<BenchMode>,
    /// Total number of market participants (one supplier, the rest
    /// customers).
    pub n_agents: u32,
    pub n_points: u32,
    pub cycles: u32,
    pub seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            bits_list: vec![512, 1024, 2048],
            modes: vec![BenchMode::Pointwise, BenchMode::Block],
            n_agents: 100,
            n_points: 101,
            cycles: 1,
            seed: 42,
        }
    }
}

fn bench_config(params: &BenchParams, bits: u64, mode: BenchMode) -> ProtocolConfig {
    ProtocolConfig {
        grid: PriceGrid::with_points(-0.01, 0.01, params.n_points, 2, 2)
            .expect("bench grid is valid"),
        n_suppliers: 1,
        n_customers: params.n_agents.saturating_sub(1).max(1),
        delta_s: 650.0,
        delta_d: 6.0,
        key_bits: bits,
        block_mode: matches!(mode, BenchMode::Block),
        signing_enabled: false,
        mitigation_policy: MitigationPolicy::LastGood,
        price_history_window: 3,
        clearing: ClearingRule::TwoSided,
        supplier_power: (250.0, 600.0),
        customer_power: (0.5, 5.5),
        supplier_thresholds: None,
        customer_thresholds: None,
        seed: derive_seed(params.seed, &[bits, mode as u64]),
    }
}

/// Measures every (key length, mode) cell and returns three records per
/// cell. Values inside a cell are measured sequentially; the per-role
/// figures sum individual operation times, so they are stable under the
/// engine's internal parallelism.
pub fn run_bench(params: &BenchParams) -> Result<Vec<BenchRecord>, ProtocolError> {
    assert!(!params.bits_list.is_empty(), "need at least one key length");
    assert!(params.cycles >= 1);
    let mut records = Vec::new();
    for &bits in &params.bits_list {
        for &mode in &params.modes {
            let cfg = bench_config(params, bits, mode);
            let mut session = MarketSession::new_unbounded(&cfg)?;
            for cycle in 1..=params.cycles {
                let population = Population::generate(&cfg, cycle)?;
                let mut channels = ChannelSet::clean(cfg.n_agents());
                session.run_cycle(&population, &mut channels, cycle, false)?;
            }
            let timings = session.cycle_timings();
            let cycles = timings.len() as f64;
            let per_agent: f64 = timings
                .iter()
                .map(|t| t.agent_total / cfg.n_agents() as f64)
                .sum::<f64>()
                / cycles;
            let tp: f64 = timings.iter().map(|t| t.tp).sum::<f64>() / cycles;
            let co: f64 = timings.iter().map(|t| t.co).sum::<f64>() / cycles;
            for (role, seconds_per_cycle) in [
                (BenchRole::Agent, per_agent),
                (BenchRole::Tp, tp),
                (BenchRole::Co, co),
            ] {
                records.push(BenchRecord {
                    key_bits: bits,
                    mode,
                    role,
                    seconds_per_cycle,
                });
            }
        }
    }
    Ok(records)
}

/// Pointwise-over-block timing ratio per key length and role, where both
/// cells exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub key_bits: u64,
    pub role: BenchRole,
    pub pointwise_seconds: f64,
    pub block_seconds: f64,
    pub ratio: f64,
}

pub fn ratio_summary(records: &[BenchRecord]) -> Vec<RatioRow> {
    let mut rows = Vec::new();
    let mut bits_seen: Vec<u64> = records.iter().map(|r| r.key_bits).collect();
    bits_seen.dedup();
    for bits in bits_seen {
        for role in [BenchRole::Agent, BenchRole::Tp, BenchRole::Co] {
            let find = |mode: BenchMode| {
                records
                    .iter()
                    .find(|r| r.key_bits == bits && r.role == role && r.mode == mode)
                    .map(|r| r.seconds_per_cycle)
            };
            if let (Some(p), Some(b)) = (find(BenchMode::Pointwise), find(BenchMode::Block)) {
                rows.push(RatioRow {
                    key_bits: bits,
                    role,
                    pointwise_seconds: p,
                    block_seconds: b,
                    ratio: if b > 0.0 { p / b } else { f64::INFINITY },
                });
            }
        }
    }
    rows
}

/// CSV rows under the stable header `key_bits,mode,role,seconds_per_cycle`.
pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from("key_bits,mode,role,seconds_per_cycle\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.6}\n",
            r.key_bits,
            r.mode.label(),
            r.role.label(),
            r.seconds_per_cycle
        ));
    }
    out
}
