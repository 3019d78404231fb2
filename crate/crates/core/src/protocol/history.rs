//! Untampered-value history and the response strategies that draw on it
//! when a verification flag comes back 0.

use super::{MitigationPolicy, ProtocolError};
use crate::market::CurveKind;
use crate::paillier::Ciphertext;
use std::collections::BTreeMap;
use std::collections::VecDeque;

/// Values that passed verification in previous cycles, kept by the
/// parties that may need to fall back on them.
#[derive(Debug, Clone, Default)]
pub struct History {
    /// Most recent clean ciphertext per (agent, grid slot); block mode
    /// uses slot 1 for the whole packed curve.
    agent_cts: BTreeMap<(u32, u32), Ciphertext>,
    /// Most recent clean encrypted aggregate per (side, grid slot).
    aggregates: BTreeMap<(CurveKind, u32), Ciphertext>,
    /// Recent clean prices per agent, newest last, capped at the
    /// configured window.
    prices: BTreeMap<u32, VecDeque<u64>>,
    price_window: usize,
}

impl History {
    pub fn new(price_window: usize) -> Self {
        Self {
            price_window: price_window.max(1),
            ..Self::default()
        }
    }

    pub fn record_agent_ct(&mut self, agent: u32, slot: u32, ct: Ciphertext) {
        self.agent_cts.insert((agent, slot), ct);
    }

    pub fn record_aggregate(&mut self, kind: CurveKind, slot: u32, ct: Ciphertext) {
        self.aggregates.insert((kind, slot), ct);
    }

    pub fn record_price(&mut self, agent: u32, price_units: u64) {
        let window = self.price_window;
        let entry = self.prices.entry(agent).or_default();
        entry.push_back(price_units);
        while entry.len() > window {
            entry.pop_front();
        }
    }

    pub fn agent_ct(&self, agent: u32, slot: u32) -> Option<&Ciphertext> {
        self.agent_cts.get(&(agent, slot))
    }

    pub fn aggregate(&self, kind: CurveKind, slot: u32) -> Option<&Ciphertext> {
        self.aggregates.get(&(kind, slot))
    }

    pub fn last_price(&self, agent: u32) -> Option<u64> {
        self.prices.get(&agent).and_then(|q| q.back().copied())
    }

    /// Mean of the recorded prices (up to the window), rounded to the
    /// nearest unit.
    pub fn mean_price(&self, agent: u32) -> Option<u64> {
        let q = self.prices.get(&agent).filter(|q| !q.is_empty())?;
        let sum: u128 = q.iter().map(|&p| p as u128).sum();
        Some(((sum as f64 / q.len() as f64).round()) as u64)
    }
}

/// A flagged message in need of substitution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlaggedItem {
    /// Agent `agent`'s ciphertext for grid slot `slot` on `(i,TP)`.
    AgentCiphertext { agent: u32, slot: u32 },
    /// The encrypted aggregate for one side and slot on `(TP,CO)`.
    Aggregate { kind: CurveKind, slot: u32 },
    /// The price message to `agent` on `(CO,i)`.
    Price { agent: u32 },
}

impl std::fmt::Display for FlaggedItem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlaggedItem::AgentCiphertext { agent, slot } => {
                write!(f, "agent {agent} ciphertext for slot {slot}")
            }
            FlaggedItem::Aggregate { kind, slot } => write!(f, "{kind:?} aggregate slot {slot}"),
            FlaggedItem::Price { agent } => write!(f, "price for agent {agent}"),
        }
    }
}

/// What the policy decided to do about one flagged item.
#[derive(Debug, Clone, PartialEq)]
pub enum Mitigated {
    Substitute(Ciphertext),
    DropAgent,
    Price(u64),
}

/// Applies the configured response strategy to one flagged item.
///
/// Agent-link flags either reuse the most recent untampered ciphertext
/// or drop the agent for the cycle; a flagged aggregate always falls back
/// to the most recent untampered aggregate (there is no third party to
/// drop); a flagged price falls back to the most recent untampered price,
/// or under the historical policy to the mean of recent untampered
/// prices.
pub fn mitigate(
    policy: MitigationPolicy,
    item: &FlaggedItem,
    history: &History,
) -> Result<Mitigated, ProtocolError> {
    let unavailable = || ProtocolError::MitigationUnavailable(item.to_string());
    match item {
        FlaggedItem::AgentCiphertext { agent, slot } => match policy {
            MitigationPolicy::DropAgent => Ok(Mitigated::DropAgent),
            MitigationPolicy::LastGood | MitigationPolicy::Historical => history
                .agent_ct(*agent, *slot)
                .cloned()
                .map(Mitigated::Substitute)
                .ok_or_else(unavailable),
        },
        FlaggedItem::Aggregate { kind, slot } => history
            .aggregate(*kind, *slot)
            .cloned()
            .map(Mitigated::Substitute)
            .ok_or_else(unavailable),
        FlaggedItem::Price { agent } => {
            let price = match policy {
                MitigationPolicy::Historical => history.mean_price(*agent),
                _ => history.last_price(*agent),
            };
            price.map(Mitigated::Price).ok_or_else(unavailable)
        }
    }
}
