//! The market session: per-cycle execution of the three-party auction
//! over simulator channels, in pointwise or block mode, with optional
//! signature wrapping and mitigation.

use super::history::{mitigate, FlaggedItem, History, Mitigated};
use super::{
    signature_index_plan, ClearingResult, ClearingRule, DetectionRecord, LinkId, MitigationAction,
    MitigationPolicy, OpCounters, ProtocolConfig, ProtocolError,
};
use crate::market::{
    self, clear_capacity, clear_two_sided, CurveKind, PopulationParams, SampledCurve,
};
use crate::packing;
use crate::paillier::{self, BetaMode, Ciphertext, KeyId, PaillierKeySet, PublicKey};
use crate::rngseed::{derive_rng, derive_seed};
use crate::signature::{auth_receive, auth_send, VerifyOutcome};
use crate::simulator::{ChannelSet, Delivery, MessageRecord, Payload};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use std::time::{Duration, Instant};

const TAG_CO_ENC: u64 = 0x01;
const TAG_SIG: u64 = 0x02;
const TAG_ENC: u64 = 0x03;
const TAG_POP_SUPPLY: u64 = 0x04;
const TAG_POP_DEMAND: u64 = 0x05;

/// Key ids by convention: 1 is the coordinator's encryption key, 2/3 the
/// coordinator's and third party's signing keys, 100+i agent i's signing
/// key.
const CO_ENC_KEY: KeyId = KeyId(1);
const CO_SIG_KEY: KeyId = KeyId(2);
const TP_SIG_KEY: KeyId = KeyId(3);

fn agent_sig_key(agent: u32) -> KeyId {
    KeyId(100 + agent as u64)
}

/// The curves all agents submit in one cycle: suppliers first (global
/// agent ids `1..=n_suppliers`), then customers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    pub suppliers: Vec<SampledCurve>,
    pub customers: Vec<SampledCurve>,
}

impl Population {
    /// Deterministic synthetic population for one cycle.
    pub fn generate(cfg: &ProtocolConfig, cycle: u32) -> Result<Population, ProtocolError> {
        let full_grid = (1, cfg.grid.n_points());
        let mut suppliers = market::gen_population(
            &PopulationParams {
                kind: CurveKind::Supply,
                n_agents: cfg.n_suppliers,
                delta: cfg.delta_s,
                power_range: cfg.supplier_power,
                threshold_range: cfg.supplier_thresholds.unwrap_or(full_grid),
                seed: derive_seed(cfg.seed, &[TAG_POP_SUPPLY, cycle as u64]),
            },
            &cfg.grid,
        );
        let mut customers = market::gen_population(
            &PopulationParams {
                kind: CurveKind::Demand,
                n_agents: cfg.n_customers,
                delta: cfg.delta_d,
                power_range: cfg.customer_power,
                threshold_range: cfg.customer_thresholds.unwrap_or(full_grid),
                seed: derive_seed(cfg.seed, &[TAG_POP_DEMAND, cycle as u64]),
            },
            &cfg.grid,
        );
        // Side-local owner ids become global agent ids.
        for (i, curve) in suppliers.iter_mut().enumerate() {
            curve.owner_id = i as u32 + 1;
        }
        for (i, curve) in customers.iter_mut().enumerate() {
            curve.owner_id = cfg.n_suppliers + i as u32 + 1;
        }
        Ok(Population {
            suppliers,
            customers,
        })
    }

    pub fn n_agents(&self) -> u32 {
        (self.suppliers.len() + self.customers.len()) as u32
    }

    /// Plaintext reference pipeline: aggregate both sides and clear.
    /// Returns (aggregated supply, aggregated demand, clearing outcome);
    /// the supply aggregate is empty when there are no suppliers.
    pub fn plaintext_baseline(
        &self,
        cfg: &ProtocolConfig,
    ) -> Result<(SampledCurve, SampledCurve, market::ClearingOutcome), ProtocolError> {
        let supply = if self.suppliers.is_empty() {
            SampledCurve {
                kind: CurveKind::Supply,
                owner_id: 0,
                values: Vec::new(),
            }
        } else {
            market::aggregate(&self.suppliers)?
        };
        let demand = market::aggregate(&self.customers)?;
        let outcome = match cfg.clearing {
            ClearingRule::TwoSided => clear_two_sided(&supply, &demand, &cfg.grid)?,
            ClearingRule::Capacity {
                capacity,
                base_index,
            } => clear_capacity(
                &demand,
                market::quantize(capacity, cfg.grid.sigma),
                base_index,
                &cfg.grid,
            )?,
        };
        Ok((supply, demand, outcome))
    }

    fn validate(&self, cfg: &ProtocolConfig) -> Result<(), ProtocolError> {
        let bad = |msg: String| Err(ProtocolError::InvalidPopulation(msg));
        if self.suppliers.len() != cfg.n_suppliers as usize
            || self.customers.len() != cfg.n_customers as usize
        {
            return bad("population size does not match the configuration".into());
        }
        let n_points = cfg.grid.n_points() as usize;
        for (curves, kind, id_offset) in [
            (&self.suppliers, CurveKind::Supply, 0),
            (&self.customers, CurveKind::Demand, cfg.n_suppliers),
        ] {
            let delta_units = cfg.delta_units(kind)?;
            for (i, curve) in curves.iter().enumerate() {
                if curve.owner_id != id_offset + i as u32 + 1 {
                    return bad(format!(
                        "curve owner ids must be consecutive global agent ids; \
                         expected {}, got {}",
                        id_offset + i as u32 + 1,
                        curve.owner_id
                    ));
                }
                if curve.kind != kind {
                    return bad(format!("curve {} has the wrong kind", curve.owner_id));
                }
                if curve.values.len() != n_points {
                    return bad(format!("curve {} is not on the grid", curve.owner_id));
                }
                if curve.max_value() >= delta_units {
                    return bad(format!(
                        "curve {} violates the strict bound delta",
                        curve.owner_id
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-cycle wall-clock cost of each role's cryptographic work.
/// `agent_total` sums across agents (divide by the agent count for the
/// per-agent figure); operations run in parallel but each is timed
/// individually, so the sums are scheduling-independent up to timer
/// noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct CycleTiming {
    pub agent_total: f64,
    pub tp: f64,
    pub co: f64,
}

/// One cycle's result plus the message transcript that produced it.
#[derive(Debug, Clone)]
pub struct CycleOutput {
    pub result: ClearingResult,
    pub messages: Vec<MessageRecord>,
}

/// Long-lived session state: the coordinator's encryption key, every
/// party's signing key when signing is on, and the untampered-value
/// history that mitigation draws from.
pub struct MarketSession {
    cfg: ProtocolConfig,
    co_enc: PaillierKeySet,
    co_sig: Option<PaillierKeySet>,
    tp_sig: Option<PaillierKeySet>,
    agent_sigs: Vec<PaillierKeySet>,
    history: History,
    timings: Vec<CycleTiming>,
    bounds_checked: bool,
}

impl MarketSession {
    /// Validates the configuration, sizes the key against the mode's
    /// plaintext bound and generates all key material deterministically
    /// from the config seed.
    pub fn new(cfg: &ProtocolConfig) -> Result<Self, ProtocolError> {
        let bound = cfg.plaintext_bound(cfg.block_mode)?;
        Self::build(cfg, &bound, true)
    }

    /// Timing-only session: key material is generated at the configured
    /// length without checking the decryption-correctness bound, the way
    /// the efficiency tables sweep key lengths below what block-mode
    /// correctness would need. Plaintexts that do not fit the modulus
    /// wrap around, so results of such a session are meaningful for cost
    /// only.
    pub(crate) fn new_unbounded(cfg: &ProtocolConfig) -> Result<Self, ProtocolError> {
        Self::build(cfg, &BigUint::from(1u32), false)
    }

    fn build(cfg: &ProtocolConfig, bound: &BigUint, bounds_checked: bool) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        let mut rng = derive_rng(cfg.seed, &[TAG_CO_ENC]);
        let co_enc = paillier::keygen(
            cfg.key_bits,
            bound,
            BetaMode::AlphaPlusOne,
            CO_ENC_KEY,
            &mut rng,
        )
        .map_err(|e| match e {
            paillier::PaillierError::BoundUnsatisfiable { bits } => {
                ProtocolError::BoundViolation {
                    key_bits: bits,
                    bound: bound.clone(),
                }
            }
            other => ProtocolError::Paillier(other),
        })?;

        let (co_sig, tp_sig, agent_sigs) = if cfg.signing_enabled {
            let sig_bits = signing_bits(cfg.key_bits);
            let one = BigUint::from(1u32);
            let mk = |key_id: KeyId, tag: u64| -> Result<PaillierKeySet, ProtocolError> {
                let mut rng = derive_rng(cfg.seed, &[TAG_SIG, tag]);
                Ok(paillier::keygen(
                    sig_bits,
                    &one,
                    BetaMode::AlphaPlusOne,
                    key_id,
                    &mut rng,
                )?)
            };
            let agents: Result<Vec<_>, _> = (1..=cfg.n_agents())
                .into_par_iter()
                .map(|i| mk(agent_sig_key(i), 100 + i as u64))
                .collect();
            (Some(mk(CO_SIG_KEY, 1)?), Some(mk(TP_SIG_KEY, 2)?), agents?)
        } else {
            (None, None, Vec::new())
        };

        Ok(Self {
            cfg: cfg.clone(),
            co_enc,
            co_sig,
            tp_sig,
            agent_sigs,
            history: History::new(cfg.price_history_window),
            timings: Vec::new(),
            bounds_checked,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn coordinator_public_key(&self) -> &PublicKey {
        self.co_enc.public()
    }

    /// Bit length of participant signing keys (0 when signing is off).
    pub fn signing_key_bits(&self) -> u64 {
        if self.cfg.signing_enabled {
            signing_bits(self.cfg.key_bits)
        } else {
            0
        }
    }

    pub fn cycle_timings(&self) -> &[CycleTiming] {
        &self.timings
    }

    fn agent_sig(&self, agent: u32) -> &PaillierKeySet {
        &self.agent_sigs[agent as usize - 1]
    }

    /// Runs one full market cycle over the given channels.
    pub fn run_cycle(
        &mut self,
        population: &Population,
        channels: &mut ChannelSet,
        cycle: u32,
        capture_transcript: bool,
    ) -> Result<CycleOutput, ProtocolError> {
        population.validate(&self.cfg)?;
        let cfg = self.cfg.clone();
        let plan = signature_index_plan(&cfg);
        let n_points = cfg.grid.n_points();
        let block = cfg.block_mode;
        let signing = cfg.signing_enabled;
        let co_pk = self.co_enc.public().clone();

        let mut counters = OpCounters::default();
        let mut detections: Vec<DetectionRecord> = Vec::new();
        let mut mitigations: Vec<MitigationAction> = Vec::new();
        let mut records: Vec<MessageRecord> = Vec::new();
        let mut timing = CycleTiming::default();
        let mut failed = false;
        let mut failure: Option<String> = None;

        let all_curves: Vec<&SampledCurve> = population
            .suppliers
            .iter()
            .chain(population.customers.iter())
            .collect();
        let slots_per_agent = if block { 1 } else { n_points as usize };

        // Agents: encrypt (and sign) their curves, then send.
        let sent: Result<Vec<(Vec<Payload>, Duration)>, ProtocolError> = all_curves
            .par_iter()
            .map(|curve| {
                let agent = curve.owner_id;
                let mut rng = derive_rng(cfg.seed, &[TAG_ENC, cycle as u64, agent as u64]);
                let started = Instant::now();
                let mut payloads = Vec::with_capacity(slots_per_agent);
                let plaintexts: Vec<BigUint> = if block {
                    let spec = cfg.pack_spec(curve.kind)?;
                    let slots: Vec<BigUint> =
                        curve.values.iter().map(|&v| BigUint::from(v)).collect();
                    vec![packing::pack(&slots, &spec).map_err(|e| {
                        ProtocolError::InvalidPopulation(format!("packing failed: {e}"))
                    })?]
                } else {
                    curve.values.iter().map(|&v| BigUint::from(v)).collect()
                };
                for (k, pt) in plaintexts.iter().enumerate() {
                    let wrapped;
                    let pt = if self.bounds_checked || *pt < co_pk.alpha {
                        pt
                    } else {
                        wrapped = pt % &co_pk.alpha;
                        &wrapped
                    };
                    let ct = paillier::encrypt(&co_pk, pt, &mut rng)?;
                    let payload = if signing {
                        let index = plan.agent_to_tp()[k];
                        Payload::Signed(auth_send(self.agent_sig(agent), &ct.value, index)?)
                    } else {
                        Payload::Raw(ct.value)
                    };
                    payloads.push(payload);
                }
                Ok((payloads, started.elapsed()))
            })
            .collect();
        let sent = sent?;
        counters.encryptions = sent.len() as u64 * slots_per_agent as u64;
        if signing {
            counters.signatures += counters.encryptions;
        }
        for (curve, (payloads, spent)) in all_curves.iter().zip(sent) {
            timing.agent_total += spent.as_secs_f64();
            for (k, payload) in payloads.into_iter().enumerate() {
                channels.push(
                    LinkId::AgentToTp(curve.owner_id),
                    plan.agent_to_tp()[k],
                    payload,
                );
            }
        }

        // Third party: verify per agent link, mitigate, aggregate.
        // slot_values[agent-1][k] is the ciphertext value the third party
        // will use for that agent's k-th slot, if any.
        let mut slot_values: Vec<Vec<Option<BigUint>>> =
            vec![vec![None; slots_per_agent]; all_curves.len()];
        for curve in &all_curves {
            let agent = curve.owner_id;
            let link = LinkId::AgentToTp(agent);
            let deliveries = channels.deliver(link, cycle, plan.agent_to_tp());
            for (k, delivery) in deliveries.into_iter().enumerate() {
                let expected = plan.agent_to_tp()[k];
                let (flag, value) = self.receive(
                    &delivery,
                    expected,
                    self.cfg
                        .signing_enabled
                        .then(|| self.agent_sig(agent).public()),
                    &mut counters,
                    &mut timing.tp,
                );
                if flag == Some(0) {
                    detections.push(DetectionRecord {
                        link,
                        expected_index: expected,
                        missing: delivery.post.is_none(),
                    });
                }
                if let Some(v) = &value {
                    if signing {
                        // Verified data feeds the last-good history.
                        self.history.record_agent_ct(
                            agent,
                            k as u32 + 1,
                            Ciphertext {
                                value: v.clone(),
                                key_id: co_pk.key_id,
                            },
                        );
                    }
                }
                slot_values[agent as usize - 1][k] = value;
                records.push(record(&delivery, cycle, expected, flag, capture_transcript));
            }
        }

        // Mitigation on agent links.
        let mut dropped: Vec<bool> = vec![false; all_curves.len()];
        for curve in &all_curves {
            let agent = curve.owner_id;
            let idx = agent as usize - 1;
            let missing: Vec<usize> = (0..slots_per_agent)
                .filter(|&k| slot_values[idx][k].is_none())
                .collect();
            if missing.is_empty() {
                continue;
            }
            if !signing {
                // No flags without signatures; the third party cannot
                // tell a drop from silence and simply skips the agent.
                dropped[idx] = true;
                continue;
            }
            match cfg.mitigation_policy {
                MitigationPolicy::DropAgent => {
                    dropped[idx] = true;
                    mitigations.push(MitigationAction::DroppedAgent { agent });
                }
                MitigationPolicy::LastGood | MitigationPolicy::Historical => {
                    for k in missing {
                        let slot = k as u32 + 1;
                        let item = FlaggedItem::AgentCiphertext { agent, slot };
                        match mitigate(cfg.mitigation_policy, &item, &self.history) {
                            Ok(Mitigated::Substitute(ct)) => {
                                slot_values[idx][k] = Some(ct.value);
                                mitigations
                                    .push(MitigationAction::SubstitutedLastGood { agent, slot });
                            }
                            Ok(_) => unreachable!("agent items substitute or fail"),
                            Err(ProtocolError::MitigationUnavailable(what)) => {
                                failed = true;
                                failure.get_or_insert_with(|| {
                                    format!("mitigation unavailable: {what}")
                                });
                                mitigations.push(MitigationAction::Unavailable { what });
                                dropped[idx] = true;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }

        // Aggregate per side and slot, then forward to the coordinator.
        let sides: Vec<CurveKind> = if population.suppliers.is_empty() {
            vec![CurveKind::Demand]
        } else {
            vec![CurveKind::Supply, CurveKind::Demand]
        };
        let agent_range = |kind: CurveKind| -> std::ops::Range<usize> {
            match kind {
                CurveKind::Supply => 0..population.suppliers.len(),
                CurveKind::Demand => {
                    population.suppliers.len()
                        ..population.suppliers.len() + population.customers.len()
                }
            }
        };
        let mut tp_out: Vec<(CurveKind, u32, Option<Ciphertext>)> = Vec::new();
        #[allow(clippy::needless_range_loop)] // k spans the inner slot axis of several vecs
        for k in 0..slots_per_agent {
            for &kind in &sides {
                let contributions: Vec<Ciphertext> = agent_range(kind)
                    .filter(|&idx| !dropped[idx])
                    .filter_map(|idx| slot_values[idx][k].clone())
                    .map(|value| Ciphertext {
                        value,
                        key_id: co_pk.key_id,
                    })
                    .collect();
                let slot = k as u32 + 1;
                if contributions.is_empty() {
                    failed = true;
                    failure.get_or_insert_with(|| {
                        format!("no {kind:?} contributions left for slot {slot}")
                    });
                    tp_out.push((kind, slot, None));
                    continue;
                }
                let started = Instant::now();
                let agg = paillier::add_ciphertexts(&co_pk, &contributions)?;
                timing.tp += started.elapsed().as_secs_f64();
                counters.aggregations += 1;
                tp_out.push((kind, slot, Some(agg)));
            }
        }
        // Plan order on (TP,CO) interleaves supply before demand per
        // slot; the loop above already built that order.
        if tp_out.iter().any(|(_, _, ct)| ct.is_none()) {
            self.timings.push(timing);
            let result = self.failed_result(
                cycle,
                failure.clone().unwrap_or_default(),
                detections,
                mitigations,
                counters,
                population.n_agents(),
            );
            return Ok(CycleOutput {
                result,
                messages: records,
            });
        }
        let tp_plan: Vec<u64> = plan.tp_to_co_slots().iter().map(|s| s.index).collect();
        for ((kind, slot, agg), planned) in tp_out.iter().zip(plan.tp_to_co_slots()) {
            debug_assert_eq!((*kind, *slot), (planned.kind, planned.slot));
            let value = agg.as_ref().expect("aborted above otherwise").value.clone();
            let payload = if signing {
                let started = Instant::now();
                let triple = auth_send(
                    self.tp_sig.as_ref().expect("signing keys exist"),
                    &value,
                    planned.index,
                )?;
                timing.tp += started.elapsed().as_secs_f64();
                counters.signatures += 1;
                Payload::Signed(triple)
            } else {
                Payload::Raw(value)
            };
            channels.push(LinkId::TpToCo, planned.index, payload);
        }

        // Coordinator: verify, mitigate, decrypt, clear.
        let deliveries = channels.deliver(LinkId::TpToCo, cycle, &tp_plan);
        let mut co_aggs: Vec<Option<BigUint>> = vec![None; tp_plan.len()];
        for (k, delivery) in deliveries.into_iter().enumerate() {
            let planned = &plan.tp_to_co_slots()[k];
            let (flag, value) = self.receive(
                &delivery,
                planned.index,
                self.cfg
                    .signing_enabled
                    .then(|| self.tp_sig.as_ref().expect("signing keys exist").public()),
                &mut counters,
                &mut timing.co,
            );
            if flag == Some(0) {
                detections.push(DetectionRecord {
                    link: LinkId::TpToCo,
                    expected_index: planned.index,
                    missing: delivery.post.is_none(),
                });
            }
            if let Some(v) = &value {
                if signing {
                    self.history.record_aggregate(
                        planned.kind,
                        planned.slot,
                        Ciphertext {
                            value: v.clone(),
                            key_id: co_pk.key_id,
                        },
                    );
                }
            }
            co_aggs[k] = value;
            records.push(record(
                &delivery,
                cycle,
                planned.index,
                flag,
                capture_transcript,
            ));
        }
        for (k, slot_ct) in co_aggs.iter_mut().enumerate() {
            if slot_ct.is_some() {
                continue;
            }
            let planned = &plan.tp_to_co_slots()[k];
            if !signing {
                failed = true;
                failure.get_or_insert_with(|| "aggregate lost on an unauthenticated link".into());
                continue;
            }
            let item = FlaggedItem::Aggregate {
                kind: planned.kind,
                slot: planned.slot,
            };
            match mitigate(cfg.mitigation_policy, &item, &self.history) {
                Ok(Mitigated::Substitute(ct)) => {
                    *slot_ct = Some(ct.value);
                    mitigations.push(MitigationAction::SubstitutedAggregate {
                        kind: planned.kind,
                        slot: planned.slot,
                    });
                }
                Ok(_) => unreachable!("aggregates substitute or fail"),
                Err(ProtocolError::MitigationUnavailable(what)) => {
                    failed = true;
                    failure.get_or_insert_with(|| format!("mitigation unavailable: {what}"));
                    mitigations.push(MitigationAction::Unavailable { what });
                }
                Err(e) => return Err(e),
            }
        }
        if co_aggs.iter().any(|v| v.is_none()) {
            self.timings.push(timing);
            let result = self.failed_result(
                cycle,
                failure.clone().unwrap_or_default(),
                detections,
                mitigations,
                counters,
                population.n_agents(),
            );
            return Ok(CycleOutput {
                result,
                messages: records,
            });
        }

        // Decrypt (and in block mode cut) the aggregates.
        let mut supply_aggregate: Vec<u64> = Vec::new();
        let mut demand_aggregate: Vec<u64> = Vec::new();
        for (k, value) in co_aggs.into_iter().enumerate() {
            let planned = &plan.tp_to_co_slots()[k];
            let ct = Ciphertext {
                value: value.expect("checked above"),
                key_id: co_pk.key_id,
            };
            let started = Instant::now();
            let pt = paillier::decrypt(&self.co_enc, &ct)?;
            timing.co += started.elapsed().as_secs_f64();
            counters.decryptions += 1;
            let out = match planned.kind {
                CurveKind::Supply => &mut supply_aggregate,
                CurveKind::Demand => &mut demand_aggregate,
            };
            if block {
                let spec = cfg.pack_spec(planned.kind)?;
                let slots = packing::unpack(&pt, &spec).map_err(|e| {
                    ProtocolError::InvalidPopulation(format!("block cut failed: {e}"))
                })?;
                out.extend(slots.iter().map(lossy_u64));
            } else {
                out.push(lossy_u64(&pt));
            }
        }

        // Clearing.
        let started = Instant::now();
        let supply_curve = SampledCurve {
            kind: CurveKind::Supply,
            owner_id: 0,
            values: supply_aggregate.clone(),
        };
        let demand_curve = SampledCurve {
            kind: CurveKind::Demand,
            owner_id: 0,
            values: demand_aggregate.clone(),
        };
        let outcome = match cfg.clearing {
            ClearingRule::TwoSided => clear_two_sided(&supply_curve, &demand_curve, &cfg.grid)?,
            ClearingRule::Capacity {
                capacity,
                base_index,
            } => clear_capacity(
                &demand_curve,
                market::quantize(capacity, cfg.grid.sigma),
                base_index,
                &cfg.grid,
            )?,
        };
        timing.co += started.elapsed().as_secs_f64();

        // Price broadcast back to every agent.
        let price = BigUint::from(outcome.price_units);
        let mut agent_price_units: Vec<Option<u64>> = vec![None; all_curves.len()];
        for curve in &all_curves {
            let agent = curve.owner_id;
            let index = plan.co_to_agent(agent);
            let payload = if signing {
                let started = Instant::now();
                let triple = auth_send(
                    self.co_sig.as_ref().expect("signing keys exist"),
                    &price,
                    index,
                )?;
                timing.co += started.elapsed().as_secs_f64();
                counters.signatures += 1;
                Payload::Signed(triple)
            } else {
                Payload::Raw(price.clone())
            };
            let link = LinkId::CoToAgent(agent);
            channels.push(link, index, payload);
            let deliveries = channels.deliver(link, cycle, &[index]);
            let delivery = deliveries.into_iter().next().expect("one price message");
            let (flag, value) = self.receive(
                &delivery,
                index,
                self.cfg
                    .signing_enabled
                    .then(|| self.co_sig.as_ref().expect("signing keys exist").public()),
                &mut counters,
                &mut timing.agent_total,
            );
            if flag == Some(0) {
                detections.push(DetectionRecord {
                    link,
                    expected_index: index,
                    missing: delivery.post.is_none(),
                });
            }
            let adopted = match (&value, flag) {
                (Some(v), _) => {
                    let units = lossy_u64(v);
                    if signing {
                        self.history.record_price(agent, units);
                    }
                    Some(units)
                }
                (None, Some(0)) if signing => {
                    match mitigate(
                        cfg.mitigation_policy,
                        &FlaggedItem::Price { agent },
                        &self.history,
                    ) {
                        Ok(Mitigated::Price(p)) => {
                            mitigations.push(match cfg.mitigation_policy {
                                MitigationPolicy::Historical => {
                                    MitigationAction::PriceHistoricalMean {
                                        agent,
                                        price_units: p,
                                    }
                                }
                                _ => MitigationAction::PriceLastGood {
                                    agent,
                                    price_units: p,
                                },
                            });
                            Some(p)
                        }
                        Ok(_) => unreachable!("price items yield prices"),
                        Err(ProtocolError::MitigationUnavailable(what)) => {
                            failed = true;
                            failure
                                .get_or_insert_with(|| format!("mitigation unavailable: {what}"));
                            mitigations.push(MitigationAction::Unavailable { what });
                            None
                        }
                        Err(e) => return Err(e),
                    }
                }
                _ => None,
            };
            agent_price_units[agent as usize - 1] = adopted;
            records.push(record(&delivery, cycle, index, flag, capture_transcript));
        }

        self.timings.push(timing);
        Ok(CycleOutput {
            result: ClearingResult {
                cycle,
                index: outcome.index,
                lambda_star: outcome.lambda_star,
                price_units: outcome.price_units,
                supply_aggregate,
                demand_aggregate,
                agent_price_units,
                detections,
                mitigations,
                counters,
                capacity_infeasible: outcome.capacity_infeasible,
                failed,
                failure,
            },
            messages: records,
        })
    }

    /// Common receive step: verify a delivery against the expected index
    /// and peel out the message body. Returns (flag, body); the flag is
    /// `None` when signing is disabled.
    fn receive(
        &self,
        delivery: &Delivery,
        expected: u64,
        verifier: Option<&PublicKey>,
        counters: &mut OpCounters,
        clock: &mut f64,
    ) -> (Option<u8>, Option<BigUint>) {
        match (&delivery.post, verifier) {
            (None, Some(_)) => (Some(0), None),
            (None, None) => (None, None),
            (Some(env), Some(pk)) => match &env.payload {
                Payload::Signed(triple) => {
                    let started = Instant::now();
                    let outcome = auth_receive(pk, triple, expected);
                    *clock += started.elapsed().as_secs_f64();
                    counters.verifications += 1;
                    match outcome {
                        VerifyOutcome::Authentic(m) => (Some(1), Some(m)),
                        VerifyOutcome::AttackDetected => (Some(0), None),
                    }
                }
                // A bare value on a link the receiver expects signatures
                // on cannot verify.
                Payload::Raw(_) => (Some(0), None),
            },
            (Some(env), None) => match &env.payload {
                Payload::Raw(v) => (None, Some(v.clone())),
                Payload::Signed(triple) => (None, Some(triple.z.clone())),
            },
        }
    }

    fn failed_result(
        &self,
        cycle: u32,
        failure: String,
        detections: Vec<DetectionRecord>,
        mitigations: Vec<MitigationAction>,
        counters: OpCounters,
        n_agents: u32,
    ) -> ClearingResult {
        ClearingResult {
            cycle,
            index: 0,
            lambda_star: 0.0,
            price_units: 0,
            supply_aggregate: Vec::new(),
            demand_aggregate: Vec::new(),
            agent_price_units: vec![None; n_agents as usize],
            detections,
            mitigations,
            counters,
            capacity_infeasible: false,
            failed: true,
            failure: Some(failure),
        }
    }
}

/// Signing keys carry 64 bits over the encryption key so that an
/// index-prefixed ciphertext always stays below the signer's squared
/// modulus.
fn signing_bits(enc_bits: u64) -> u64 {
    enc_bits + 64
}

fn lossy_u64(v: &BigUint) -> u64 {
    // Lossless whenever the session's bounds were enforced; a
    // timing-only session may wrap here and that is fine for cost
    // measurement.
    v.to_u64().unwrap_or(u64::MAX)
}

fn record(
    delivery: &Delivery,
    cycle: u32,
    expected: u64,
    flag: Option<u8>,
    capture: bool,
) -> MessageRecord {
    MessageRecord {
        cycle,
        link: delivery.pre.link,
        position: delivery.pre.position,
        expected_index: expected,
        attacked: delivery.attack,
        flag,
        missing: delivery.post.is_none(),
        sent: capture
            .then(|| serde_json::to_string(&delivery.pre.payload).expect("payload serialization")),
        received: capture.then(|| match &delivery.post {
            Some(env) => {
                serde_json::to_string(&env.payload).expect("payload serialization")
            }
            None => "null".into(),
        }),
    }
}

/// One-shot pointwise auction over the given channels; keys are derived
/// from the config seed.
pub fn run_auction_pointwise(
    config: &ProtocolConfig,
    population: &Population,
    channels: &mut ChannelSet,
) -> Result<ClearingResult, ProtocolError> {
    let mut cfg = config.clone();
    cfg.block_mode = false;
    let mut session = MarketSession::new(&cfg)?;
    Ok(session.run_cycle(population, channels, 1, false)?.result)
}

/// One-shot block-mode auction: one encryption per agent, two ciphertext
/// aggregations, two decryptions.
pub fn run_auction_block(
    config: &ProtocolConfig,
    population: &Population,
    channels: &mut ChannelSet,
) -> Result<ClearingResult, ProtocolError> {
    let mut cfg = config.clone();
    cfg.block_mode = true;
    let mut session = MarketSession::new(&cfg)?;
    Ok(session.run_cycle(population, channels, 1, false)?.result)
}
