//! Deterministic discrete-event network.
//!
//! The simulator owns every party, keeps all undelivered envelopes in one
//! pending pool and lets the configured scheduler pick the next delivery.
//! Ticks are logical: one tick per delivery. A run ends when nothing is
//! pending, which also means every honest-to-honest envelope was delivered.
//!
//! Everything derives from the config and its seeds, so two runs with equal
//! inputs produce byte-identical traces.

mod adversary;
mod checks;
mod scheduler;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::committee::{committee_tag, Committee};
use crate::crypto::{deal, CryptoError, CryptoParams, Digest, KeyMaterial};
use crate::engine::{Engine, EngineConfig, EngineEvent, Output, Target, Validity};
use crate::message::Message;
use crate::pb::{DropReason, PbId};
use crate::{PartyId, View};

pub use adversary::{equivocation_value, Behavior, ScriptedSend};
pub use scheduler::{DelayRule, SchedulerKind};
pub use trace::{
    Counters, Outcome, PartySummary, PhaseCounts, RunStats, Trace, TraceEvent, ViewCounts,
};

use adversary::ByzantineParty;
use scheduler::Pending;

/// One message in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub payload: Vec<u8>,
    pub sent_at: u64,
    pub deliver_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversaryConfig {
    pub scheduler: SchedulerKind,
    /// Byzantine parties and what each does. Fixed for the whole run.
    pub byzantine: BTreeMap<PartyId, Behavior>,
    /// Seeds the scheduler.
    pub seed: u64,
}

impl AdversaryConfig {
    pub fn honest(scheduler: SchedulerKind, seed: u64) -> Self {
        AdversaryConfig {
            scheduler,
            byzantine: BTreeMap::new(),
            seed,
        }
    }

    /// Every party in `ids` runs `behavior`.
    pub fn uniform(
        scheduler: SchedulerKind,
        behavior: Behavior,
        ids: impl IntoIterator<Item = PartyId>,
        seed: u64,
    ) -> Self {
        AdversaryConfig {
            scheduler,
            byzantine: ids.into_iter().map(|p| (p, behavior.clone())).collect(),
            seed,
        }
    }
}

/// Accepts the values the simulator hands out by default.
pub fn default_validity() -> Validity {
    Arc::new(|v: &[u8]| v.starts_with(b"value-") && v.len() <= 4096)
}

pub fn default_value(party: PartyId) -> Vec<u8> {
    format!("value-{party}").into_bytes()
}

#[derive(Clone)]
pub struct SimConfig {
    pub n: u32,
    pub f: u32,
    pub kappa: u32,
    pub instance: u64,
    pub max_views: View,
    /// Seeds the trusted dealer.
    pub key_seed: u64,
    pub adversary: AdversaryConfig,
    /// Initial value per party, index `p - 1`. Empty means `value-<p>`.
    pub values: Vec<Vec<u8>>,
    pub validity: Validity,
    /// Keep the full event log. Counters and checks run either way.
    pub record_events: bool,
    /// Safety valve against runaway runs.
    pub max_deliveries: u64,
}

impl fmt::Debug for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimConfig")
            .field("n", &self.n)
            .field("f", &self.f)
            .field("kappa", &self.kappa)
            .field("instance", &self.instance)
            .field("max_views", &self.max_views)
            .field("key_seed", &self.key_seed)
            .field("adversary", &self.adversary)
            .field("values", &self.values.len())
            .field("record_events", &self.record_events)
            .finish_non_exhaustive()
    }
}

impl SimConfig {
    /// Honest FIFO run with κ = f + 1 and 20 views.
    pub fn new(n: u32, f: u32) -> Self {
        SimConfig {
            n,
            f,
            kappa: f + 1,
            instance: 0,
            max_views: 20,
            key_seed: 0,
            adversary: AdversaryConfig::honest(SchedulerKind::Fifo, 0),
            values: Vec::new(),
            validity: default_validity(),
            record_events: true,
            max_deliveries: 20_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        CryptoParams::new(self.n, self.f, self.key_seed)?;
        if self.kappa == 0 || self.kappa > self.n {
            return Err(SimError::Config(format!(
                "kappa = {} must be in 1..={}",
                self.kappa, self.n
            )));
        }
        if self.adversary.byzantine.len() > self.f as usize {
            return Err(SimError::Config(format!(
                "{} Byzantine parties exceed f = {}",
                self.adversary.byzantine.len(),
                self.f
            )));
        }
        if let Some(p) = self
            .adversary
            .byzantine
            .keys()
            .find(|&&p| p == 0 || p > self.n)
        {
            return Err(SimError::Config(format!(
                "party {p} outside 1..={}",
                self.n
            )));
        }
        if !self.values.is_empty() && self.values.len() != self.n as usize {
            return Err(SimError::Config(format!(
                "{} initial values for {} parties",
                self.values.len(),
                self.n
            )));
        }
        if self.max_views == 0 {
            return Err(SimError::Config("max_views must be at least 1".into()));
        }
        Ok(())
    }

    fn value(&self, p: PartyId) -> Vec<u8> {
        match self.values.get(p as usize - 1) {
            Some(v) => v.clone(),
            None => default_value(p),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

enum Party {
    Honest(Engine),
    Byzantine(ByzantineParty),
}

/// Facts gathered while the run progresses, for the end-of-run checks.
#[derive(Default)]
pub(crate) struct Observations {
    /// Honest ACK signers per (pb_id, signed payload digest).
    pub acks: BTreeMap<(PbId, Digest), BTreeSet<PartyId>>,
    /// Honest parties that ACKed some pb_id more than once.
    pub double_acks: Vec<(PartyId, PbId)>,
    pub acked: BTreeSet<(PartyId, PbId)>,
    /// Value digests of step-1 SENDs by committee members, per view.
    pub step1: BTreeSet<(View, PartyId, Digest)>,
    pub violations: Vec<String>,
}

struct Sim<'a> {
    config: &'a SimConfig,
    keys: &'a KeyMaterial,
    parties: Vec<Party>,
    honest: Vec<bool>,
    pending: Pending,
    rng: ChaCha8Rng,
    seq: u64,
    tick: u64,
    committees: BTreeMap<View, Committee>,
    obs: Observations,
    events: Vec<TraceEvent>,
    schedule: Vec<u64>,
    counters: Counters,
    stats: RunStats,
}

/// Runs one execution with freshly dealt keys.
pub fn run(config: &SimConfig) -> Result<Trace, SimError> {
    config.validate()?;
    let keys = deal(CryptoParams::new(config.n, config.f, config.key_seed)?)?;
    run_with_keys(config, &keys)
}

/// Runs one execution with the given keys (their `n` and `f` must match).
pub fn run_with_keys(config: &SimConfig, keys: &KeyMaterial) -> Result<Trace, SimError> {
    config.validate()?;
    let p = keys.params();
    if p.n != config.n || p.f != config.f {
        return Err(SimError::Config(format!(
            "key material is for n = {}, f = {}",
            p.n, p.f
        )));
    }
    Ok(Sim::new(config, keys).execute())
}

/// Re-runs `config` delivering exactly `schedule`, as recorded in a trace.
pub fn replay(config: &SimConfig, schedule: &[u64]) -> Result<Trace, SimError> {
    let mut c = config.clone();
    c.adversary.scheduler = SchedulerKind::Replay(schedule.to_vec());
    run(&c)
}

impl<'a> Sim<'a> {
    fn new(config: &'a SimConfig, keys: &'a KeyMaterial) -> Self {
        let engine_config = EngineConfig {
            instance: config.instance,
            kappa: config.kappa,
            max_views: config.max_views,
        };
        let mut parties = Vec::with_capacity(config.n as usize);
        let mut honest = Vec::with_capacity(config.n as usize);
        for p in 1..=config.n {
            let engine = Engine::new(
                engine_config,
                keys.public().clone(),
                Arc::new(keys.secret(p).expect("dealt for every party").clone()),
                config.value(p),
                config.validity.clone(),
            );
            match config.adversary.byzantine.get(&p) {
                Some(b) => {
                    parties.push(Party::Byzantine(ByzantineParty::new(
                        b.clone(),
                        engine,
                        config.n,
                        config.instance,
                    )));
                    honest.push(false);
                }
                None => {
                    parties.push(Party::Honest(engine));
                    honest.push(true);
                }
            }
        }
        Sim {
            config,
            keys,
            parties,
            honest,
            pending: Pending::new(config.adversary.scheduler.clone()),
            rng: ChaCha8Rng::seed_from_u64(config.adversary.seed),
            seq: 0,
            tick: 0,
            committees: BTreeMap::new(),
            obs: Observations::default(),
            events: Vec::new(),
            schedule: Vec::new(),
            counters: Counters::default(),
            stats: RunStats::default(),
        }
    }

    fn is_honest(&self, p: PartyId) -> bool {
        self.honest[p as usize - 1]
    }

    fn committee(&mut self, view: View) -> &Committee {
        let (keys, config) = (self.keys, self.config);
        self.committees.entry(view).or_insert_with(|| Committee {
            view,
            members: keys
                .public()
                .coin_value(
                    &committee_tag(config.instance, view),
                    config.n,
                    config.kappa,
                )
                .expect("κ ≤ n"),
        })
    }

    fn execute(mut self) -> Trace {
        for p in 1..=self.config.n {
            self.start_party(p);
        }
        while let Some(mut env) = self.pending.pop(&mut self.rng) {
            if self.stats.deliveries >= self.config.max_deliveries {
                self.obs.violations.push(format!(
                    "delivery cap of {} reached",
                    self.config.max_deliveries
                ));
                break;
            }
            self.tick += 1;
            env.deliver_at = self.tick;
            self.stats.deliveries += 1;
            self.schedule.push(env.seq);
            if self.config.record_events {
                let (tag, view) = describe(&env.payload);
                self.events.push(TraceEvent {
                    tick: self.tick,
                    kind: "deliver".into(),
                    from: Some(env.from),
                    to: Some(env.to),
                    tag: Some(tag),
                    view,
                    reason: None,
                });
            }
            self.deliver(env);
        }
        self.finish()
    }

    fn start_party(&mut self, p: PartyId) {
        let signer = self.keys.secret(p).expect("dealt");
        match &mut self.parties[p as usize - 1] {
            Party::Honest(e) => {
                let out = e.start();
                self.emit_honest(p, out);
            }
            Party::Byzantine(b) => {
                let sends = b.start(signer);
                self.emit_byzantine(p, sends);
            }
        }
    }

    fn deliver(&mut self, env: Envelope) {
        let signer = self.keys.secret(env.to).expect("dealt");
        match &mut self.parties[env.to as usize - 1] {
            Party::Honest(e) => {
                let out = e.handle(env.from, &env.payload);
                self.emit_honest(env.to, out);
            }
            Party::Byzantine(b) => {
                let sends = b.handle(env.from, &env.payload, signer);
                self.emit_byzantine(env.to, sends);
            }
        }
    }

    fn emit_honest(&mut self, p: PartyId, out: Output) {
        for ev in &out.events {
            self.observe_event(p, ev);
        }
        for ob in out.messages {
            self.observe_message(p, &ob.msg);
            let bytes = ob.msg.encode();
            let tag = ob.msg.tag();
            let view = ob.msg.view();
            let sig = ob.msg.signature_bytes();
            match ob.to {
                Target::All => {
                    for to in 1..=self.config.n {
                        self.enqueue(
                            p,
                            to,
                            bytes.clone(),
                            &tag,
                            Some((view, ob.msg.phase(), sig)),
                        );
                    }
                }
                Target::To(to) => {
                    self.enqueue(p, to, bytes, &tag, Some((view, ob.msg.phase(), sig)))
                }
            }
        }
    }

    fn emit_byzantine(&mut self, p: PartyId, sends: Vec<(PartyId, Vec<u8>)>) {
        for (to, bytes) in sends {
            if to == 0 || to > self.config.n {
                continue;
            }
            match Message::decode(&bytes) {
                Ok(msg) => {
                    self.observe_message(p, &msg);
                    let info = (msg.view(), msg.phase(), msg.signature_bytes());
                    self.enqueue(p, to, bytes, &msg.tag(), Some(info));
                }
                Err(_) => self.enqueue(p, to, bytes, "malformed", None),
            }
        }
    }

    fn enqueue(
        &mut self,
        from: PartyId,
        to: PartyId,
        payload: Vec<u8>,
        tag: &str,
        info: Option<(View, crate::message::Phase, usize)>,
    ) {
        self.seq += 1;
        let honest = self.is_honest(from);
        match info {
            Some((view, phase, sig)) => {
                let vc = self.counters.per_view.entry(view).or_default();
                let side = if honest {
                    &mut vc.honest
                } else {
                    &mut vc.byzantine
                };
                side.add(phase, 1);
                let k = sig as u64;
                let l = payload.len() as u64 - k;
                if honest {
                    self.counters.honest_bytes_l += l;
                    self.counters.honest_bytes_k += k;
                } else {
                    self.counters.byzantine_bytes += l + k;
                }
            }
            None => {
                self.counters.unparsed += 1;
                self.counters.byzantine_bytes += payload.len() as u64;
            }
        }
        if self.config.record_events {
            self.events.push(TraceEvent {
                tick: self.tick,
                kind: "send".into(),
                from: Some(from),
                to: Some(to),
                tag: Some(tag.to_string()),
                view: info.map(|i| i.0),
                reason: None,
            });
        }
        let env = Envelope {
            seq: self.seq,
            from,
            to,
            payload,
            sent_at: self.tick,
            deliver_at: self.tick,
        };
        self.stats.envelopes += 1;
        self.pending.push(env, tag, honest);
    }

    fn observe_message(&mut self, from: PartyId, msg: &Message) {
        let honest = self.is_honest(from);
        match msg {
            Message::Send(m) => {
                let member = self.committee(m.pb_id.view).contains(m.pb_id.proposer);
                if !member && !honest {
                    self.stats.rogue_sends += 1;
                }
                if m.pb_id.step == 1 && member {
                    self.obs
                        .step1
                        .insert((m.pb_id.view, m.pb_id.proposer, m.value_digest()));
                }
            }
            Message::Ack(m) if honest => {
                if !self.committee(m.pb_id.view).contains(m.pb_id.proposer) {
                    self.obs
                        .violations
                        .push(format!("honest party {from} ACKed non-member {}", m.pb_id));
                }
                if !self.obs.acked.insert((from, m.pb_id)) {
                    self.obs.double_acks.push((from, m.pb_id));
                }
                self.obs
                    .acks
                    .entry((m.pb_id, m.share.message_digest))
                    .or_default()
                    .insert(from);
            }
            _ => {}
        }
    }

    fn observe_event(&mut self, p: PartyId, ev: &EngineEvent) {
        if let EngineEvent::Dropped {
            from,
            tag,
            view,
            reason,
        } = ev
        {
            if tag.starts_with("send/") && !self.committee(*view).contains(*from) {
                // The engine rejects SENDs whose claimed proposer is not the
                // sender before looking at the committee.
                if *reason == DropReason::NotSelected {
                    self.stats.not_selected_drops += 1;
                } else if *reason != DropReason::WrongSender {
                    self.obs.violations.push(format!(
                        "party {p} dropped {tag} of non-member {from} in view {view} as {reason}"
                    ));
                }
            }
        }
        if self.config.record_events {
            self.events.push(trace::event_record(self.tick, p, ev));
        }
    }

    fn finish(mut self) -> Trace {
        let honest_pending = self
            .pending
            .envelopes()
            .filter(|e| self.is_honest(e.from) && self.is_honest(e.to))
            .count();
        self.stats.honest_pending_at_end = honest_pending as u64;
        if honest_pending > 0 {
            self.obs.violations.push(format!(
                "{honest_pending} honest-to-honest envelopes never delivered"
            ));
        }
        self.stats.pending_at_end = self.pending.len() as u64;

        let snapshots: Vec<_> = self
            .parties
            .iter()
            .map(|p| match p {
                Party::Honest(e) => e.snapshot(),
                Party::Byzantine(b) => b.engine().snapshot(),
            })
            .collect();
        let honest: Vec<PartyId> = (1..=self.config.n).filter(|&p| self.is_honest(p)).collect();
        let byzantine: Vec<PartyId> = (1..=self.config.n)
            .filter(|&p| !self.is_honest(p))
            .collect();

        let max_view = self
            .obs
            .acks
            .keys()
            .map(|(id, _)| id.view)
            .chain(snapshots.iter().map(|s| s.view))
            .max()
            .unwrap_or(1);
        for v in 1..=max_view {
            self.committee(v);
        }

        let check_ctx = checks::Context {
            n: self.config.n,
            f: self.config.f,
            byzantine: byzantine.len() as u32,
            honest: &honest,
            snapshots: &snapshots,
            committees: &self.committees,
            validity: &self.config.validity,
            fifo: self.config.adversary.scheduler == SchedulerKind::Fifo,
            obs: &self.obs,
        };
        let mut violations = self.obs.violations.clone();
        let (found, examined) = checks::evaluate(&check_ctx);
        violations.extend(found);
        self.stats.certifiable_keys = examined.keys;
        self.stats.certifiable_locks = examined.locks;

        let outcome = trace::outcome(&honest, &snapshots);
        self.stats.max_view = honest
            .iter()
            .map(|&p| snapshots[p as usize - 1].view)
            .max()
            .unwrap_or(0);

        Trace {
            n: self.config.n,
            f: self.config.f,
            kappa: self.config.kappa,
            honest,
            byzantine,
            events: self.events,
            schedule: self.schedule,
            counters: self.counters,
            committees: self
                .committees
                .into_iter()
                .filter(|(v, _)| *v <= max_view)
                .map(|(v, c)| (v, c.members))
                .collect(),
            snapshots,
            outcome,
            violations,
            stats: self.stats,
        }
    }
}

/// Tag and view of a payload, for logging envelopes.
fn describe(payload: &[u8]) -> (String, Option<View>) {
    match Message::decode(payload) {
        Ok(m) => (m.tag(), Some(m.view())),
        Err(_) => ("malformed".into(), None),
    }
}
