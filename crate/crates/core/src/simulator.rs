//! Deterministic in-memory channels with a scriptable adversary, and the
//! scenario runner that produces full transcripts and detection
//! statistics.
//!
//! Channels buffer one cycle's messages per link; at delivery time the
//! adversary applies its scheduled attacks. The adversary sees everything
//! in transit (and remembers it, for replays) but holds no legitimate
//! party's private keys and cannot touch party-internal state. Ground
//! truth about which messages were attacked is recorded next to each
//! delivery so reports can score detection, but the protocol parties
//! never see it.

use crate::numtheory::BigNat;
use crate::packing::{num_digits, pow10};
use crate::paillier::{self, BetaMode, KeyId, PaillierKeySet};
use crate::protocol::{
    ClearingResult, LinkId, MarketSession, Population, ProtocolConfig, ProtocolError,
};
use crate::rngseed::derive_rng;
use crate::signature::{auth_send, SignedTriple};
use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Replace the message body, re-signing under adversary keys.
    Tamper,
    /// Substitute a previously observed triple from the same link.
    Replay,
    /// Swap two adjacent in-flight messages.
    Reorder,
    /// Inject a fresh adversary-signed triple in place of the original.
    Forge,
    /// Remove the message from the link.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleSelector {
    All,
    Cycles(Vec<u32>),
}

impl CycleSelector {
    fn matches(&self, cycle: u32) -> bool {
        match self {
            CycleSelector::All => true,
            CycleSelector::Cycles(cs) => cs.contains(&cycle),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkSelector {
    All,
    AgentToTp,
    TpToCo,
    CoToAgent,
    AgentToTpOne(u32),
    CoToAgentOne(u32),
}

impl LinkSelector {
    fn matches(&self, link: LinkId) -> bool {
        match (self, link) {
            (LinkSelector::All, _) => true,
            (LinkSelector::AgentToTp, LinkId::AgentToTp(_)) => true,
            (LinkSelector::TpToCo, LinkId::TpToCo) => true,
            (LinkSelector::CoToAgent, LinkId::CoToAgent(_)) => true,
            (LinkSelector::AgentToTpOne(i), LinkId::AgentToTp(j)) => *i == j,
            (LinkSelector::CoToAgentOne(i), LinkId::CoToAgent(j)) => *i == j,
            _ => false,
        }
    }
}

/// One line of the attack schedule: on matching cycles and links, each
/// message is attacked with probability `fraction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRule {
    pub cycles: CycleSelector,
    pub links: LinkSelector,
    pub kind: AttackKind,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub seed: u64,
    pub rules: Vec<AttackRule>,
}

impl AttackScenario {
    pub fn none() -> Self {
        Self {
            seed: 0,
            rules: Vec::new(),
        }
    }

    /// Tampers a random half of all messages exchanged in one cycle.
    pub fn half_cycle(cycle: u32) -> Self {
        Self {
            seed: cycle as u64,
            rules: vec![AttackRule {
                cycles: CycleSelector::Cycles(vec![cycle]),
                links: LinkSelector::All,
                kind: AttackKind::Tamper,
                fraction: 0.5,
            }],
        }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

/// Channel payload: an index-stamped signed triple, or the bare value
/// when signing is disabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Signed(SignedTriple),
    Raw(#[serde(with = "crate::serde_util::biguint_dec")] BigNat),
}

impl Payload {
    pub fn body(&self) -> &BigNat {
        match self {
            Payload::Signed(t) => &t.z,
            Payload::Raw(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub link: LinkId,
    pub position: u32,
    /// Index stamp the sender used (also embedded in a signed payload).
    pub index: u64,
    pub payload: Payload,
}

/// One delivered (or dropped) message with adversary ground truth.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub pre: Envelope,
    pub post: Option<Envelope>,
    pub attack: Option<AttackKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub cycle: u32,
    pub link: LinkId,
    pub position: u32,
    pub kind: AttackKind,
    pub executed: bool,
    pub note: Option<String>,
}

/// The extraneous data-injection attacker. It owns a Paillier key set of
/// its own (generated once per scenario) to sign tampered and forged
/// triples, remembers every message it has seen per link, and follows the
/// scenario schedule deterministically.
pub struct Adversary {
    scenario: AttackScenario,
    key_bits: u64,
    keys: Option<PaillierKeySet>,
    pub log: Vec<AttackEvent>,
}

impl Adversary {
    pub fn new(scenario: AttackScenario, key_bits: u64) -> Self {
        Self {
            scenario,
            key_bits,
            keys: None,
            log: Vec::new(),
        }
    }

    fn keys(&mut self) -> &PaillierKeySet {
        let bits = self.key_bits.max(128);
        let seed = self.scenario.seed;
        self.keys.get_or_insert_with(|| {
            let mut rng = derive_rng(seed, &[0xADF0]);
            paillier::keygen(bits, &BigUint::one(), BetaMode::AlphaPlusOne, KeyId(0), &mut rng)
                .expect("adversary keygen with trivial bound")
        })
    }

    /// Resolves which payload positions of one link get attacked this
    /// cycle. Reorders are paired with the following position when it is
    /// still unattacked; unpairable reorders are dropped from the plan
    /// and logged as skipped.
    fn schedule(
        &mut self,
        cycle: u32,
        link: LinkId,
        count: usize,
        rng: &mut ChaCha20Rng,
    ) -> Vec<Option<AttackKind>> {
        let mut marks: Vec<Option<AttackKind>> = vec![None; count];
        for rule in &self.scenario.rules {
            if !rule.cycles.matches(cycle) || !rule.links.matches(link) {
                continue;
            }
            for mark in marks.iter_mut() {
                if mark.is_none() && rng.gen_bool(rule.fraction.clamp(0.0, 1.0)) {
                    *mark = Some(rule.kind);
                }
            }
        }
        let mut k = 0;
        while k < count {
            if marks[k] == Some(AttackKind::Reorder) {
                if k + 1 < count && marks[k + 1].is_none() {
                    marks[k + 1] = Some(AttackKind::Reorder);
                    k += 2;
                    continue;
                }
                marks[k] = None;
                self.log.push(AttackEvent {
                    cycle,
                    link,
                    position: k as u32,
                    kind: AttackKind::Reorder,
                    executed: false,
                    note: Some("no adjacent partner to swap with".into()),
                });
            }
            k += 1;
        }
        marks
    }

    /// Tampering per the injection model: keep the index prefix, draw a
    /// random message and sign it under the adversary's own keys.
    fn tamper(&mut self, env: &Envelope, rng: &mut ChaCha20Rng) -> Payload {
        match &env.payload {
            Payload::Signed(_) => {
                let keys = self.keys().clone();
                loop {
                    let forged_body = rng.gen_biguint_below(keys.alpha());
                    match auth_send(&keys, &forged_body, env.index) {
                        Ok(triple) => return Payload::Signed(triple),
                        // A body sharing a factor with the adversary
                        // modulus cannot be signed; redraw.
                        Err(_) => continue,
                    }
                }
            }
            Payload::Raw(v) => {
                let ceiling = v.clone().max(BigUint::from(2u32));
                Payload::Raw(rng.gen_biguint_below(&ceiling))
            }
        }
    }

    /// A wholly new triple under adversary keys with a guessed index.
    fn forge(&mut self, env: &Envelope, rng: &mut ChaCha20Rng) -> Payload {
        match &env.payload {
            Payload::Signed(_) => {
                let keys = self.keys().clone();
                let index = rng.gen_range(1..=999u64);
                loop {
                    let forged_body = rng.gen_biguint_below(keys.alpha());
                    match auth_send(&keys, &forged_body, index) {
                        Ok(triple) => return Payload::Signed(triple),
                        Err(_) => continue,
                    }
                }
            }
            Payload::Raw(v) => {
                let ceiling = v.clone().max(BigUint::from(2u32));
                Payload::Raw(rng.gen_biguint_below(&ceiling))
            }
        }
    }

    /// Picks a replay source the receiver's index check would reject.
    /// Sources whose leading digits happen to equal the expected index
    /// would be accepted verbatim (the stamp scheme has no length
    /// framing), so they are not useful as detectable replays and the
    /// schedule skips them.
    fn pick_replay(
        observed: &[Envelope],
        upto: usize,
        expected_index: u64,
        signed: bool,
        rng: &mut ChaCha20Rng,
    ) -> Option<Envelope> {
        let candidates: Vec<&Envelope> = observed[..upto]
            .iter()
            .filter(|env| {
                if !signed {
                    return true;
                }
                let z = env.payload.body();
                let nz = num_digits(z);
                let nl = num_digits(&BigUint::from(expected_index));
                nz <= nl || z / pow10(nz - nl) != BigUint::from(expected_index)
            })
            .collect();
        if candidates.is_empty() {
            None
        } else {
            Some(candidates[rng.gen_range(0..candidates.len())].clone())
        }
    }
}

/// One directed link with its in-flight queue and the adversary's
/// observation history.
pub struct Channel {
    pub link: LinkId,
    queue: Vec<Envelope>,
    observed: Vec<Envelope>,
}

impl Channel {
    fn new(link: LinkId) -> Self {
        Self {
            link,
            queue: Vec::new(),
            observed: Vec::new(),
        }
    }

    fn push(&mut self, index: u64, payload: Payload) {
        let position = self.queue.len() as u32;
        self.queue.push(Envelope {
            link: self.link,
            position,
            index,
            payload,
        });
    }

    /// Flushes the queue through the adversary. `expected` is the
    /// receiver's index plan for this cycle, position by position.
    fn deliver_cycle(
        &mut self,
        adversary: &mut Adversary,
        cycle: u32,
        expected: &[u64],
    ) -> Vec<Delivery> {
        let msgs = std::mem::take(&mut self.queue);
        debug_assert_eq!(msgs.len(), expected.len(), "plan mismatch on {}", self.link);
        let link_tag = match self.link {
            LinkId::AgentToTp(i) => (1u64 << 32) | i as u64,
            LinkId::TpToCo => 2u64 << 32,
            LinkId::CoToAgent(i) => (3u64 << 32) | i as u64,
        };
        let mut rng = derive_rng(adversary.scenario.seed, &[0xA77, cycle as u64, link_tag]);
        let marks = adversary.schedule(cycle, self.link, msgs.len(), &mut rng);

        let observed_before = self.observed.len();
        self.observed.extend(msgs.iter().cloned());

        let mut deliveries: Vec<Delivery> = Vec::with_capacity(msgs.len());
        for (k, env) in msgs.iter().enumerate() {
            let signed = matches!(env.payload, Payload::Signed(_));
            let (post, attack) = match marks[k] {
                None => (Some(env.clone()), None),
                Some(AttackKind::Tamper) => {
                    let payload = adversary.tamper(env, &mut rng);
                    adversary.log.push(AttackEvent {
                        cycle,
                        link: self.link,
                        position: k as u32,
                        kind: AttackKind::Tamper,
                        executed: true,
                        note: None,
                    });
                    (
                        Some(Envelope {
                            payload,
                            ..env.clone()
                        }),
                        Some(AttackKind::Tamper),
                    )
                }
                Some(AttackKind::Forge) => {
                    let payload = adversary.forge(env, &mut rng);
                    adversary.log.push(AttackEvent {
                        cycle,
                        link: self.link,
                        position: k as u32,
                        kind: AttackKind::Forge,
                        executed: true,
                        note: None,
                    });
                    (
                        Some(Envelope {
                            payload,
                            ..env.clone()
                        }),
                        Some(AttackKind::Forge),
                    )
                }
                Some(AttackKind::Drop) => {
                    adversary.log.push(AttackEvent {
                        cycle,
                        link: self.link,
                        position: k as u32,
                        kind: AttackKind::Drop,
                        executed: true,
                        note: None,
                    });
                    (None, Some(AttackKind::Drop))
                }
                Some(AttackKind::Replay) => {
                    // Sources: everything from earlier cycles plus the
                    // messages already in flight ahead of this one.
                    let upto = observed_before + k;
                    match Adversary::pick_replay(
                        &self.observed,
                        upto,
                        expected[k],
                        signed,
                        &mut rng,
                    ) {
                        Some(src) => {
                            adversary.log.push(AttackEvent {
                                cycle,
                                link: self.link,
                                position: k as u32,
                                kind: AttackKind::Replay,
                                executed: true,
                                note: None,
                            });
                            (
                                Some(Envelope {
                                    payload: src.payload,
                                    index: src.index,
                                    link: self.link,
                                    position: k as u32,
                                }),
                                Some(AttackKind::Replay),
                            )
                        }
                        None => {
                            adversary.log.push(AttackEvent {
                                cycle,
                                link: self.link,
                                position: k as u32,
                                kind: AttackKind::Replay,
                                executed: false,
                                note: Some("no detectable source observed yet".into()),
                            });
                            (Some(env.clone()), None)
                        }
                    }
                }
                Some(AttackKind::Reorder) => (Some(env.clone()), Some(AttackKind::Reorder)),
            };
            deliveries.push(Delivery {
                pre: env.clone(),
                post,
                attack,
            });
        }

        // Apply the pairwise swaps scheduled above.
        let mut k = 0;
        while k + 1 < deliveries.len() {
            if marks[k] == Some(AttackKind::Reorder) && marks[k + 1] == Some(AttackKind::Reorder) {
                let tmp = deliveries[k].post.take();
                deliveries[k].post = deliveries[k + 1].post.take();
                deliveries[k + 1].post = tmp;
                for kk in [k, k + 1] {
                    adversary.log.push(AttackEvent {
                        cycle,
                        link: self.link,
                        position: kk as u32,
                        kind: AttackKind::Reorder,
                        executed: true,
                        note: None,
                    });
                }
                k += 2;
            } else {
                k += 1;
            }
        }
        deliveries
    }
}

/// All links of one deployment plus the adversary sitting on them.
pub struct ChannelSet {
    agent_to_tp: Vec<Channel>,
    tp_to_co: Channel,
    co_to_agent: Vec<Channel>,
    adversary: Adversary,
}

impl ChannelSet {
    /// Channels with no scheduled attacks.
    pub fn clean(n_agents: u32) -> Self {
        Self::with_scenario(n_agents, AttackScenario::none(), 0)
    }

    /// Channels under an attack scenario; `adversary_key_bits` sizes the
    /// adversary's own signing keys (matched to the legitimate signers).
    pub fn with_scenario(n_agents: u32, scenario: AttackScenario, adversary_key_bits: u64) -> Self {
        Self {
            agent_to_tp: (1..=n_agents)
                .map(|i| Channel::new(LinkId::AgentToTp(i)))
                .collect(),
            tp_to_co: Channel::new(LinkId::TpToCo),
            co_to_agent: (1..=n_agents)
                .map(|i| Channel::new(LinkId::CoToAgent(i)))
                .collect(),
            adversary: Adversary::new(scenario, adversary_key_bits),
        }
    }

    pub fn n_agents(&self) -> u32 {
        self.agent_to_tp.len() as u32
    }

    pub fn attack_log(&self) -> &[AttackEvent] {
        &self.adversary.log
    }

    pub fn push(&mut self, link: LinkId, index: u64, payload: Payload) {
        self.channel_mut(link).push(index, payload);
    }

    pub fn deliver(&mut self, link: LinkId, cycle: u32, expected: &[u64]) -> Vec<Delivery> {
        let adversary = &mut self.adversary;
        let channel = match link {
            LinkId::AgentToTp(i) => &mut self.agent_to_tp[i as usize - 1],
            LinkId::TpToCo => &mut self.tp_to_co,
            LinkId::CoToAgent(i) => &mut self.co_to_agent[i as usize - 1],
        };
        channel.deliver_cycle(adversary, cycle, expected)
    }

    fn channel_mut(&mut self, link: LinkId) -> &mut Channel {
        match link {
            LinkId::AgentToTp(i) => &mut self.agent_to_tp[i as usize - 1],
            LinkId::TpToCo => &mut self.tp_to_co,
            LinkId::CoToAgent(i) => &mut self.co_to_agent[i as usize - 1],
        }
    }
}

/// Per-message line of a scenario transcript. Values are included only
/// when transcript capture is on (ciphertext-sized strings add up fast).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub cycle: u32,
    pub link: LinkId,
    pub position: u32,
    pub expected_index: u64,
    /// Ground truth from the adversary; `None` means the message was
    /// untouched.
    pub attacked: Option<AttackKind>,
    /// Receiver's verification flag; `None` when signing is disabled.
    pub flag: Option<u8>,
    /// Nothing arrived for this expected index.
    pub missing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub received: Option<String>,
}

/// Wall-clock cost of one role in one cycle; exported as CSV, never part
/// of the deterministic JSON report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingRecord {
    pub key_bits: u64,
    pub mode: &'static str,
    pub role: &'static str,
    pub seconds_per_cycle: f64,
}

/// Everything a scenario run produced. Serializes deterministically for
/// a fixed pair of seeds (timing lives outside the JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub n_cycles: u32,
    pub block_mode: bool,
    pub signing_enabled: bool,
    pub cycles: Vec<ClearingResult>,
    pub messages: Vec<MessageRecord>,
    pub attack_log: Vec<AttackEvent>,
    /// Fraction of attacked messages flagged 0 (among signed messages);
    /// `None` when nothing was attacked.
    pub detection_rate: Option<f64>,
    /// Fraction of clean messages flagged 0.
    pub false_alarm_rate: Option<f64>,
    pub attacked_messages: u64,
    pub clean_messages: u64,
    pub failed_cycles: Vec<u32>,
    #[serde(skip)]
    pub timing: Vec<TimingRecord>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Line-delimited transcript: one JSON object per message record.
    pub fn transcript_lines(&self) -> String {
        let mut out = String::new();
        for record in &self.messages {
            out.push_str(&serde_json::to_string(record).expect("record serialization"));
            out.push('\n');
        }
        out
    }

    /// Timing rows as CSV with the stable schema
    /// `key_bits,mode,role,seconds_per_cycle`.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("key_bits,mode,role,seconds_per_cycle\n");
        for t in &self.timing {
            out.push_str(&format!(
                "{},{},{},{:.6}\n",
                t.key_bits, t.mode, t.role, t.seconds_per_cycle
            ));
        }
        out
    }
}

/// Runs `n_cycles` market cycles under the attack scenario. Populations
/// are regenerated per cycle from the config seed, so two runs with the
/// same seeds produce byte-identical reports.
pub fn run_scenario(
    config: &ProtocolConfig,
    scenario: &AttackScenario,
    n_cycles: u32,
    capture_transcript: bool,
) -> Result<ScenarioReport, SimulatorError> {
    let mut session = MarketSession::new(config)?;
    run_scenario_with_session(&mut session, scenario, n_cycles, capture_transcript)
}

pub(crate) fn run_scenario_with_session(
    session: &mut MarketSession,
    scenario: &AttackScenario,
    n_cycles: u32,
    capture_transcript: bool,
) -> Result<ScenarioReport, SimulatorError> {
    let config = session.config().clone();
    let mut channels = ChannelSet::with_scenario(
        config.n_agents(),
        scenario.clone(),
        session.signing_key_bits(),
    );
    let mut cycles = Vec::new();
    let mut messages = Vec::new();
    let mut failed_cycles = Vec::new();
    for cycle in 1..=n_cycles {
        let population = Population::generate(&config, cycle)?;
        let output = session.run_cycle(&population, &mut channels, cycle, capture_transcript)?;
        if output.result.failed {
            failed_cycles.push(cycle);
        }
        messages.extend(output.messages);
        cycles.push(output.result);
    }

    let signed = |r: &MessageRecord| r.flag.is_some();
    let attacked_messages = messages
        .iter()
        .filter(|r| signed(r) && r.attacked.is_some())
        .count() as u64;
    let detected = messages
        .iter()
        .filter(|r| signed(r) && r.attacked.is_some() && r.flag == Some(0))
        .count() as u64;
    let clean_messages = messages
        .iter()
        .filter(|r| signed(r) && r.attacked.is_none())
        .count() as u64;
    let false_alarms = messages
        .iter()
        .filter(|r| signed(r) && r.attacked.is_none() && r.flag == Some(0))
        .count() as u64;

    let mode = if config.block_mode { "block" } else { "pointwise" };
    let timing = session
        .cycle_timings()
        .iter()
        .flat_map(|t| {
            [
                TimingRecord {
                    key_bits: config.key_bits,
                    mode,
                    role: "agent",
                    seconds_per_cycle: t.agent_total / config.n_agents() as f64,
                },
                TimingRecord {
                    key_bits: config.key_bits,
                    mode,
                    role: "tp",
                    seconds_per_cycle: t.tp,
                },
                TimingRecord {
                    key_bits: config.key_bits,
                    mode,
                    role: "co",
                    seconds_per_cycle: t.co,
                },
            ]
        })
        .collect();

    Ok(ScenarioReport {
        n_cycles,
        block_mode: config.block_mode,
        signing_enabled: config.signing_enabled,
        cycles,
        messages,
        attack_log: channels.attack_log().to_vec(),
        detection_rate: (attacked_messages > 0).then(|| detected as f64 / attacked_messages as f64),
        false_alarm_rate: (clean_messages > 0).then(|| false_alarms as f64 / clean_messages as f64),
        attacked_messages,
        clean_messages,
        failed_cycles,
        timing,
    })
}
