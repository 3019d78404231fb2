//! The three-party privacy-preserving auction round.
//!
//! One market cycle moves data over three link groups:
//!
//! 1. each agent encrypts its sampled curve under the coordinator's
//!    public key and sends the ciphertexts to the third party (`(i,TP)`),
//! 2. the third party multiplies the ciphertexts per grid point and
//!    forwards the encrypted aggregates (`(TP,CO)`),
//! 3. the coordinator decrypts, clears the market and broadcasts the
//!    price (`(CO,i)`).
//!
//! In pointwise mode every grid point is its own ciphertext; in block
//! mode an agent packs its whole curve into one plaintext so the cycle
//! costs one encryption per agent, two ciphertext aggregations and two
//! decryptions regardless of the grid size.
//!
//! When signing is enabled every message is wrapped in an index-stamped
//! Paillier signature; flagged messages are fed to the configured
//! mitigation policy instead of the market.

mod engine;
mod history;

pub use engine::{
    run_auction_block, run_auction_pointwise, CycleOutput, MarketSession, Population,
};
pub use history::{mitigate, FlaggedItem, History, Mitigated};

use crate::market::{CurveKind, MarketError, PriceGrid};
use crate::packing;
use crate::paillier::PaillierError;
use crate::signature::SignatureError;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("key of {key_bits} bits cannot exceed the plaintext bound {bound} required by this configuration")]
    BoundViolation { key_bits: u64, bound: BigUint },
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
    #[error("population does not fit the configuration: {0}")]
    InvalidPopulation(String),
    #[error("no untampered history available to mitigate {0}")]
    MitigationUnavailable(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

/// What a receiver substitutes for data that failed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationPolicy {
    /// Reuse the most recent untampered value from the same source.
    LastGood,
    /// Exclude the affected agent from the cycle's aggregation.
    DropAgent,
    /// Fall back to credible history; for prices, the mean of the last
    /// `price_history_window` untampered prices.
    Historical,
}

/// How the coordinator sets the clearing price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearingRule {
    /// Intersection of aggregated supply and demand.
    TwoSided,
    /// Base price unless aggregated demand exceeds `capacity` there, in
    /// which case the lowest price whose demand fits.
    Capacity { capacity: f64, base_index: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub grid: PriceGrid,
    pub n_suppliers: u32,
    pub n_customers: u32,
    /// Strict upper bound on one supplier's quantity, in quantity units
    /// (must be a multiple of `10^-sigma`).
    pub delta_s: f64,
    /// Strict upper bound on one customer's quantity.
    pub delta_d: f64,
    pub key_bits: u64,
    pub block_mode: bool,
    pub signing_enabled: bool,
    pub mitigation_policy: MitigationPolicy,
    /// Window for the historical price mean.
    pub price_history_window: usize,
    pub clearing: ClearingRule,
    /// Rated-power range for generated supplier curves.
    pub supplier_power: (f64, f64),
    /// Rated-power range for generated customer curves.
    pub customer_power: (f64, f64),
    /// Offer-threshold grid-index range for suppliers (full grid if
    /// absent).
    pub supplier_thresholds: Option<(u32, u32)>,
    /// Bid-threshold grid-index range for customers.
    pub customer_thresholds: Option<(u32, u32)>,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    /// Desk-scale defaults: a $0.00..$1.00 grid in cent steps (101
    /// points), one supplier, 100 customers, 1024-bit keys.
    fn default() -> Self {
        Self {
            grid: PriceGrid::with_points(-0.01, 0.01, 101, 2, 2).expect("valid default grid"),
            n_suppliers: 1,
            n_customers: 100,
            delta_s: 650.0,
            delta_d: 6.0,
            key_bits: 1024,
            block_mode: false,
            signing_enabled: true,
            mitigation_policy: MitigationPolicy::LastGood,
            price_history_window: 3,
            clearing: ClearingRule::TwoSided,
            supplier_power: (250.0, 600.0),
            customer_power: (0.5, 5.5),
            supplier_thresholds: None,
            customer_thresholds: None,
            seed: 42,
        }
    }
}

impl ProtocolConfig {
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn n_agents(&self) -> u32 {
        self.n_suppliers + self.n_customers
    }

    /// Quantized strict per-agent bound for one side.
    pub fn delta_units(&self, kind: CurveKind) -> Result<u64, ProtocolError> {
        let (delta, what) = match kind {
            CurveKind::Supply => (self.delta_s, "delta_s"),
            CurveKind::Demand => (self.delta_d, "delta_d"),
        };
        let scaled = delta * 10f64.powi(self.grid.sigma as i32);
        let rounded = scaled.round();
        if delta <= 0.0 || (scaled - rounded).abs() > 1e-6 {
            return Err(ProtocolError::InvalidConfig(format!(
                "{what} = {delta} must be a positive multiple of 10^-{}",
                self.grid.sigma
            )));
        }
        Ok(rounded as u64)
    }

    /// Strict upper bound on a column (per-grid-point) aggregate for one
    /// side: `10^sigma * N * delta` as an integer.
    pub fn column_bound(&self, kind: CurveKind) -> Result<u64, ProtocolError> {
        let n = match kind {
            CurveKind::Supply => self.n_suppliers,
            CurveKind::Demand => self.n_customers,
        };
        Ok(n as u64 * self.delta_units(kind)?)
    }

    /// The plaintext bound the coordinator key must exceed in the given
    /// mode: the larger column bound pointwise, the packed-block bound in
    /// block mode.
    pub fn plaintext_bound(&self, block_mode: bool) -> Result<BigUint, ProtocolError> {
        let sup = self.column_bound(CurveKind::Supply)?;
        let dem = self.column_bound(CurveKind::Demand)?;
        if block_mode {
            let n = self.grid.n_points();
            let s = packing::packed_alpha_bound(n, &sup.into());
            let d = packing::packed_alpha_bound(n, &dem.into());
            Ok(s.max(d))
        } else {
            Ok(BigUint::from(sup.max(dem)))
        }
    }

    /// Per-side slot layout used by block mode.
    pub fn pack_spec(&self, kind: CurveKind) -> Result<packing::PackSpec, ProtocolError> {
        let width = packing::num_digits(&self.column_bound(kind)?.into());
        Ok(packing::PackSpec::new(width, self.grid.n_points()))
    }

    pub(crate) fn validate(&self) -> Result<(), ProtocolError> {
        if self.n_customers == 0 {
            return Err(ProtocolError::InvalidConfig(
                "at least one customer is required".into(),
            ));
        }
        if matches!(self.clearing, ClearingRule::TwoSided) && self.n_suppliers == 0 {
            return Err(ProtocolError::InvalidConfig(
                "two-sided clearing requires at least one supplier".into(),
            ));
        }
        if let ClearingRule::Capacity {
            capacity,
            base_index,
        } = self.clearing
        {
            if capacity <= 0.0 {
                return Err(ProtocolError::InvalidConfig(
                    "capacity must be positive".into(),
                ));
            }
            if !(1..=self.grid.n_points()).contains(&base_index) {
                return Err(ProtocolError::InvalidConfig(
                    "base_index must lie on the grid".into(),
                ));
            }
        }
        if self.price_history_window == 0 {
            return Err(ProtocolError::InvalidConfig(
                "price_history_window must be at least 1".into(),
            ));
        }
        for (range, what) in [
            (self.supplier_thresholds, "supplier_thresholds"),
            (self.customer_thresholds, "customer_thresholds"),
        ] {
            if let Some((lo, hi)) = range {
                if lo < 1 || lo > hi || hi > self.grid.n_points() {
                    return Err(ProtocolError::InvalidConfig(format!(
                        "{what} must satisfy 1 <= lo <= hi <= n_points"
                    )));
                }
            }
        }
        self.delta_units(CurveKind::Supply)?;
        self.delta_units(CurveKind::Demand)?;
        Ok(())
    }
}

/// One end-to-end link in the deployment: agent to third party, third
/// party to coordinator, or coordinator back to one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkId {
    AgentToTp(u32),
    TpToCo,
    CoToAgent(u32),
}

impl std::fmt::Display for LinkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinkId::AgentToTp(i) => write!(f, "({i},TP)"),
            LinkId::TpToCo => write!(f, "(TP,CO)"),
            LinkId::CoToAgent(i) => write!(f, "(CO,{i})"),
        }
    }
}

/// One expected message on the `(TP,CO)` link: which side's aggregate
/// for which slot, under which index stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TpToCoSlot {
    pub kind: CurveKind,
    pub slot: u32,
    pub index: u64,
}

/// The per-cycle index stamps each link expects, in delivery order.
///
/// Pointwise, an agent's link carries one message per grid point indexed
/// by the point; the third party interleaves supply and demand aggregates
/// as `2(l-1)+1` and `2(l-1)+2`; the price message to agent `i` is
/// indexed by `i` itself. Block mode sends the one message per agent that
/// actually exists under index 1, and the two aggregates under 1 and 2.
/// All plans use consecutive indices, which keeps adjacent swaps and
/// replays detectable by the prefix check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPlan {
    agent_to_tp: Vec<u64>,
    tp_to_co: Vec<TpToCoSlot>,
    n_agents: u32,
}

impl IndexPlan {
    pub fn agent_to_tp(&self) -> &[u64] {
        &self.agent_to_tp
    }

    pub fn tp_to_co_slots(&self) -> &[TpToCoSlot] {
        &self.tp_to_co
    }

    pub fn tp_to_co_indices(&self) -> Vec<u64> {
        self.tp_to_co.iter().map(|s| s.index).collect()
    }

    /// Index stamp of one side's aggregate for grid point `l`.
    pub fn tp_to_co_index(kind: CurveKind, l: u32) -> u64 {
        match kind {
            CurveKind::Supply => 2 * (l as u64 - 1) + 1,
            CurveKind::Demand => 2 * (l as u64 - 1) + 2,
        }
    }

    /// The price message to agent `i` is stamped with the agent id.
    pub fn co_to_agent(&self, agent: u32) -> u64 {
        debug_assert!((1..=self.n_agents).contains(&agent));
        agent as u64
    }
}

/// Builds the signature index plan for one cycle of the configured mode.
/// A side with no participants (the capacity rule allows a supplier-less
/// market) simply has no aggregate messages.
pub fn signature_index_plan(config: &ProtocolConfig) -> IndexPlan {
    let slots = if config.block_mode {
        1
    } else {
        config.grid.n_points()
    };
    let sides: &[CurveKind] = if config.n_suppliers == 0 {
        &[CurveKind::Demand]
    } else {
        &[CurveKind::Supply, CurveKind::Demand]
    };
    let agent_to_tp: Vec<u64> = (1..=slots as u64).collect();
    let tp_to_co: Vec<TpToCoSlot> = (1..=slots)
        .flat_map(|slot| {
            sides.iter().map(move |&kind| TpToCoSlot {
                kind,
                slot,
                index: IndexPlan::tp_to_co_index(kind, slot),
            })
        })
        .collect();
    IndexPlan {
        agent_to_tp,
        tp_to_co,
        n_agents: config.n_agents(),
    }
}

/// Cryptographic operation counts for one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub encryptions: u64,
    pub aggregations: u64,
    pub decryptions: u64,
    pub signatures: u64,
    pub verifications: u64,
}

/// A message whose verification flag came back 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub link: LinkId,
    pub expected_index: u64,
    /// True when nothing arrived for the expected index at all.
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum MitigationAction {
    /// A flagged agent ciphertext was replaced by the most recent
    /// untampered one from the same agent and grid point.
    SubstitutedLastGood { agent: u32, slot: u32 },
    /// The agent was excluded from this cycle's aggregation.
    DroppedAgent { agent: u32 },
    /// A flagged encrypted aggregate was replaced from history.
    SubstitutedAggregate { kind: CurveKind, slot: u32 },
    /// A flagged price was replaced by the most recent untampered one.
    PriceLastGood { agent: u32, price_units: u64 },
    /// A flagged price was replaced by the mean of recent untampered
    /// prices.
    PriceHistoricalMean { agent: u32, price_units: u64 },
    /// No untampered history existed; the cycle is marked failed.
    Unavailable { what: String },
}

/// Everything one cycle produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub cycle: u32,
    /// 1-based grid index of the clearing price (0 when the cycle
    /// failed before clearing).
    pub index: u32,
    pub lambda_star: f64,
    pub price_units: u64,
    /// Aggregated quantities in `10^-sigma` units, one per grid point;
    /// empty for a side with no participants or when the cycle failed.
    pub supply_aggregate: Vec<u64>,
    pub demand_aggregate: Vec<u64>,
    /// Price each agent ended up adopting (post-mitigation), by agent id.
    pub agent_price_units: Vec<Option<u64>>,
    pub detections: Vec<DetectionRecord>,
    pub mitigations: Vec<MitigationAction>,
    pub counters: OpCounters,
    pub capacity_infeasible: bool,
    pub failed: bool,
    pub failure: Option<String>,
}
