//! Trace records and their line-delimited JSON export.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::crypto::Digest;
use crate::engine::{EngineEvent, PartyState};
use crate::message::Phase;
use crate::{PartyId, View};

/// One line of the event log. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub kind: String,
    pub from: Option<PartyId>,
    pub to: Option<PartyId>,
    pub tag: Option<String>,
    pub view: Option<View>,
    pub reason: Option<&'static str>,
}

pub(crate) fn event_record(tick: u64, party: PartyId, ev: &EngineEvent) -> TraceEvent {
    let mut rec = TraceEvent {
        tick,
        kind: ev.name().into(),
        from: Some(party),
        to: None,
        tag: None,
        view: Some(ev.view()),
        reason: None,
    };
    match ev {
        EngineEvent::Dropped {
            from, tag, reason, ..
        } => {
            rec.from = Some(*from);
            rec.to = Some(party);
            rec.tag = Some(tag.clone());
            rec.reason = Some(reason.as_str());
        }
        EngineEvent::CommitteeSelected { members, .. } => {
            let ids: Vec<String> = members.iter().map(|m| m.to_string()).collect();
            rec.tag = Some(ids.join(","));
        }
        EngineEvent::PromotionAbandoned {
            completed_steps, ..
        } => rec.tag = Some(format!("steps={completed_steps}")),
        EngineEvent::LeaderElected { raw, leader, .. } => {
            rec.tag = Some(format!("raw={raw},leader={leader}"))
        }
        EngineEvent::Decided { value, .. } => rec.tag = Some(Digest::of(value).to_hex()),
        _ => {}
    }
    rec
}

/// Envelope counts per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCounts {
    pub selection: u64,
    pub promotion: u64,
    pub propose: u64,
    pub suggest: u64,
    pub election: u64,
    pub view_change: u64,
    pub decide: u64,
}

impl PhaseCounts {
    fn slot(&mut self, phase: Phase) -> &mut u64 {
        match phase {
            Phase::Selection => &mut self.selection,
            Phase::Promotion => &mut self.promotion,
            Phase::Propose => &mut self.propose,
            Phase::Suggest => &mut self.suggest,
            Phase::Election => &mut self.election,
            Phase::ViewChange => &mut self.view_change,
            Phase::Decide => &mut self.decide,
        }
    }

    pub fn add(&mut self, phase: Phase, k: u64) {
        *self.slot(phase) += k;
    }

    pub fn get(&self, phase: Phase) -> u64 {
        let mut c = *self;
        *c.slot(phase)
    }

    pub fn total(&self) -> u64 {
        Phase::ALL.iter().map(|&p| self.get(p)).sum()
    }

    pub fn merge(&mut self, other: &PhaseCounts) {
        for p in Phase::ALL {
            self.add(p, other.get(p));
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ViewCounts {
    pub honest: PhaseCounts,
    pub byzantine: PhaseCounts,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub per_view: BTreeMap<View, ViewCounts>,
    /// Honest-originated bytes outside signatures (value and framing).
    pub honest_bytes_l: u64,
    /// Honest-originated bytes of signatures, shares and coin shares.
    pub honest_bytes_k: u64,
    pub byzantine_bytes: u64,
    /// Byzantine envelopes that do not decode.
    pub unparsed: u64,
}

impl Counters {
    pub fn honest_total(&self) -> PhaseCounts {
        let mut t = PhaseCounts::default();
        for c in self.per_view.values() {
            t.merge(&c.honest);
        }
        t
    }

    pub fn byzantine_total(&self) -> PhaseCounts {
        let mut t = PhaseCounts::default();
        for c in self.per_view.values() {
            t.merge(&c.byzantine);
        }
        t
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub deliveries: u64,
    pub envelopes: u64,
    /// SENDs by Byzantine parties outside that view's committee.
    pub rogue_sends: u64,
    /// Drops of non-member SENDs reported as not-selected by honest parties.
    pub not_selected_drops: u64,
    pub honest_pending_at_end: u64,
    pub pending_at_end: u64,
    /// Highest view any honest party reached.
    pub max_view: View,
    /// Step-2 certificates the adversary could assemble, each checked for
    /// key coverage.
    pub certifiable_keys: u64,
    /// Step-3 certificates the adversary could assemble, each checked for
    /// lock coverage.
    pub certifiable_locks: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    /// Every honest party decided; `view` is the latest decision view.
    Decided { view: View, value: String },
    /// Some honest party ran out of views.
    MaxViewsExceeded,
    /// The network drained with undecided honest parties still below the
    /// view cap. Never expected.
    Stalled,
}

pub(crate) fn outcome(honest: &[PartyId], snapshots: &[PartyState]) -> Outcome {
    let states: Vec<&PartyState> = honest.iter().map(|&p| &snapshots[p as usize - 1]).collect();
    if states.iter().all(|s| s.decided.is_some()) {
        let (view, value) = states
            .iter()
            .filter_map(|s| s.decided.as_ref())
            .max_by_key(|(v, _)| *v)
            .cloned()
            .unwrap_or((0, Vec::new()));
        return Outcome::Decided {
            view,
            value: Digest::of(&value).to_hex(),
        };
    }
    if states.iter().any(|s| s.decided.is_none() && s.exhausted) {
        Outcome::MaxViewsExceeded
    } else {
        Outcome::Stalled
    }
}

/// End-of-run state of one party, as exported.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartySummary {
    pub party: PartyId,
    pub honest: bool,
    pub view: View,
    pub lock: View,
    pub prepare_view: View,
    pub prepare_value: String,
    pub decided_view: Option<View>,
    pub decided_value: Option<String>,
}

/// Everything one run produced.
#[derive(Clone, Debug)]
pub struct Trace {
    pub n: u32,
    pub f: u32,
    pub kappa: u32,
    pub honest: Vec<PartyId>,
    pub byzantine: Vec<PartyId>,
    /// Empty unless events were recorded.
    pub events: Vec<TraceEvent>,
    /// Envelope sequence numbers in delivery order.
    pub schedule: Vec<u64>,
    pub counters: Counters,
    /// Committee per view as computed by the dealer-side oracle.
    pub committees: BTreeMap<View, Vec<PartyId>>,
    /// Final state of every party, index `p - 1`.
    pub snapshots: Vec<PartyState>,
    pub outcome: Outcome,
    pub violations: Vec<String>,
    pub stats: RunStats,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    kind: &'static str,
    n: u32,
    f: u32,
    kappa: u32,
    byzantine: &'a [PartyId],
    outcome: &'a Outcome,
    stats: &'a RunStats,
    counters: &'a Counters,
    committees: &'a BTreeMap<View, Vec<PartyId>>,
    parties: Vec<PartySummary>,
    schedule_digest: String,
    violations: &'a [String],
}

impl Trace {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn decided(&self) -> bool {
        matches!(self.outcome, Outcome::Decided { .. })
    }

    /// View of the decision, if every honest party decided.
    pub fn views_to_decide(&self) -> Option<View> {
        match self.outcome {
            Outcome::Decided { view, .. } => Some(view),
            _ => None,
        }
    }

    pub fn party_summaries(&self) -> Vec<PartySummary> {
        self.snapshots
            .iter()
            .map(|s| PartySummary {
                party: s.me,
                honest: self.honest.binary_search(&s.me).is_ok(),
                view: s.view,
                lock: s.lock,
                prepare_view: s.prepare.view,
                prepare_value: Digest::of(&s.prepare.value).to_hex(),
                decided_view: s.decided.as_ref().map(|d| d.0),
                decided_value: s.decided.as_ref().map(|d| Digest::of(&d.1).to_hex()),
            })
            .collect()
    }

    fn schedule_digest(&self) -> String {
        let mut bytes = Vec::with_capacity(self.schedule.len() * 8);
        for s in &self.schedule {
            bytes.extend_from_slice(&s.to_be_bytes());
        }
        Digest::of(&bytes).to_hex()
    }

    /// Event lines followed by one summary line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        let summary = SummaryRecord {
            kind: "summary",
            n: self.n,
            f: self.f,
            kappa: self.kappa,
            byzantine: &self.byzantine,
            outcome: &self.outcome,
            stats: &self.stats,
            counters: &self.counters,
            committees: &self.committees,
            parties: self.party_summaries(),
            schedule_digest: self.schedule_digest(),
            violations: &self.violations,
        };
        serde_json::to_writer(&mut w, &summary)?;
        w.write_all(b"\n")
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }
}
