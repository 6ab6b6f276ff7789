//! The per-party eVABA state machine.
//!
//! Each view runs: committee selection → promotion by committee members →
//! PROPOSE of the first completed promotion → SUGGEST relays until `n - f`
//! are collected → leader election with mapping onto the committee →
//! view-change carrying the leader's key/lock/commit → decide or advance.
//!
//! The engine is a single-threaded event processor. It never blocks: every
//! inbound message produces outbound messages and trace events. Messages for
//! a later view wait in a buffer until that view starts; messages for the
//! current view that depend on the committee or the leader wait until those
//! are known.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::mem;
use std::sync::Arc;

use crate::committee::{
    coin_tag, committee_from_shares, start_selection, Committee, CommitteeCollector, ShareOutcome,
};
use crate::crypto::{CoinShare, CryptoError, Digest, Signer, ThresholdSignature, Verifier};
use crate::message::{DecideMsg, ElectShareMsg, Message, ProposeMsg, SuggestMsg, ViewChangeMsg};
use crate::pb::{pb_payload, DropReason, ExternalValidity, KeyProof, PbId, PbReceiver, Proof};
use crate::promotion::{Deliverable, PromoteProgress, PromoteStatus, Promoter, PromotionStore};
use crate::{PartyId, View};

/// Application predicate every decided value must satisfy.
pub type Validity = Arc<dyn Fn(&[u8]) -> bool + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    /// Protocol instance id, mixed into every tag and signed payload.
    pub instance: u64,
    /// Committee size κ, `1 ≤ κ ≤ n`.
    pub kappa: u32,
    /// The engine never starts a view beyond this one.
    pub max_views: View,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    All,
    To(PartyId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub to: Target,
    pub msg: Message,
}

/// State transitions and drops, for traces and white-box checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EngineEvent {
    Dropped {
        from: PartyId,
        tag: String,
        view: View,
        reason: DropReason,
    },
    CommitteeSelected {
        view: View,
        members: Vec<PartyId>,
    },
    PromotionStarted {
        view: View,
    },
    PromotionComplete {
        view: View,
    },
    PromotionAbandoned {
        view: View,
        completed_steps: u8,
    },
    LeaderElected {
        view: View,
        raw: PartyId,
        leader: PartyId,
    },
    LockRaised {
        view: View,
    },
    KeyAdopted {
        view: View,
    },
    ViewAdvanced {
        view: View,
    },
    Decided {
        view: View,
        value: Vec<u8>,
    },
    MaxViewsReached {
        view: View,
    },
}

impl EngineEvent {
    pub fn name(&self) -> &'static str {
        match self {
            EngineEvent::Dropped { .. } => "drop",
            EngineEvent::CommitteeSelected { .. } => "committee",
            EngineEvent::PromotionStarted { .. } => "promote-start",
            EngineEvent::PromotionComplete { .. } => "promote-complete",
            EngineEvent::PromotionAbandoned { .. } => "promote-abandoned",
            EngineEvent::LeaderElected { .. } => "leader",
            EngineEvent::LockRaised { .. } => "lock",
            EngineEvent::KeyAdopted { .. } => "key",
            EngineEvent::ViewAdvanced { .. } => "advance",
            EngineEvent::Decided { .. } => "decide",
            EngineEvent::MaxViewsReached { .. } => "max-views",
        }
    }

    pub fn view(&self) -> View {
        match self {
            EngineEvent::Dropped { view, .. }
            | EngineEvent::CommitteeSelected { view, .. }
            | EngineEvent::PromotionStarted { view }
            | EngineEvent::PromotionComplete { view }
            | EngineEvent::PromotionAbandoned { view, .. }
            | EngineEvent::LeaderElected { view, .. }
            | EngineEvent::LockRaised { view }
            | EngineEvent::KeyAdopted { view }
            | EngineEvent::ViewAdvanced { view }
            | EngineEvent::Decided { view, .. }
            | EngineEvent::MaxViewsReached { view } => *view,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub messages: Vec<Outbound>,
    pub events: Vec<EngineEvent>,
}

impl Output {
    fn multicast(&mut self, msg: Message) {
        self.messages.push(Outbound {
            to: Target::All,
            msg,
        });
    }

    fn send(&mut self, to: PartyId, msg: Message) {
        self.messages.push(Outbound {
            to: Target::To(to),
            msg,
        });
    }

    fn event(&mut self, e: EngineEvent) {
        self.events.push(e);
    }
}

/// The adopted key: the value this party will promote next, and the step-1
/// certificate justifying it (absent for the initial value).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prepare {
    pub view: View,
    pub value: Vec<u8>,
    pub key: Option<KeyProof>,
}

/// Read-only view of a party for assertions.
#[derive(Clone, Debug)]
pub struct PartyState {
    pub me: PartyId,
    pub view: View,
    pub lock: View,
    pub prepare: Prepare,
    pub decided: Option<(View, Vec<u8>)>,
    pub halted: bool,
    pub exhausted: bool,
    pub committees: BTreeMap<View, Committee>,
    pub leaders: BTreeMap<View, PartyId>,
    pub promotions: PromotionStore,
}

/// Maps an elected party id onto the committee: the member with the
/// smallest absolute id difference, ties to the smaller id.
pub fn map_to_committee(raw: PartyId, committee: &Committee) -> PartyId {
    *committee
        .members
        .iter()
        .min_by_key(|&&m| (m.abs_diff(raw), m))
        .expect("committee is nonempty")
}

pub fn elect_tag(instance: u64, view: View) -> Vec<u8> {
    coin_tag("elect", instance, view)
}

/// Tosses the view's election coin and maps the result onto `committee`.
/// Returns `(raw, leader)`.
pub fn elect_and_map(
    verifier: &dyn Verifier,
    instance: u64,
    view: View,
    shares: &[CoinShare],
    committee: &Committee,
) -> Result<(PartyId, PartyId), CryptoError> {
    let n = verifier.params().n;
    let raw = verifier.coin_toss(&elect_tag(instance, view), shares, n, 1)?[0];
    let leader = if committee.contains(raw) {
        raw
    } else {
        map_to_committee(raw, committee)
    };
    Ok((raw, leader))
}

enum Flow {
    Done,
    /// Needs the committee or leader of the current view first.
    Defer,
}

struct ViewState {
    selection: CommitteeCollector,
    committee: Option<Committee>,
    pending: Vec<(PartyId, Message)>,
    promoter: Option<Promoter>,
    suggested: bool,
    proposals: BTreeSet<PartyId>,
    suggests: BTreeSet<PartyId>,
    abandoned: bool,
    elect_sent: bool,
    elect_shares: BTreeMap<PartyId, CoinShare>,
    leader: Option<PartyId>,
    view_changes: BTreeSet<PartyId>,
}

impl ViewState {
    fn new(instance: u64, view: View, kappa: u32) -> Self {
        ViewState {
            selection: CommitteeCollector::new(instance, view, kappa),
            committee: None,
            pending: Vec::new(),
            promoter: None,
            suggested: false,
            proposals: BTreeSet::new(),
            suggests: BTreeSet::new(),
            abandoned: false,
            elect_sent: false,
            elect_shares: BTreeMap::new(),
            leader: None,
            view_changes: BTreeSet::new(),
        }
    }
}

pub struct Engine {
    me: PartyId,
    config: EngineConfig,
    verifier: Arc<dyn Verifier>,
    signer: Arc<dyn Signer>,
    valid: Validity,
    n: u32,
    f: u32,

    view: View,
    lock: View,
    prepare: Prepare,
    decided: Option<(View, Vec<u8>)>,
    halted: bool,
    exhausted: bool,
    started: bool,

    current: ViewState,
    future: BTreeMap<View, Vec<(PartyId, Message)>>,
    inbox: VecDeque<(PartyId, Message)>,
    receiver: PbReceiver,
    store: PromotionStore,
    committees: BTreeMap<View, Committee>,
    leaders: BTreeMap<View, PartyId>,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        verifier: Arc<dyn Verifier>,
        signer: Arc<dyn Signer>,
        initial_value: Vec<u8>,
        valid: Validity,
    ) -> Engine {
        let p = *verifier.params();
        assert!(
            config.kappa >= 1 && config.kappa <= p.n,
            "κ = {} outside 1..={}",
            config.kappa,
            p.n
        );
        Engine {
            me: signer.party(),
            n: p.n,
            f: p.f,
            current: ViewState::new(config.instance, 1, config.kappa),
            config,
            verifier,
            signer,
            valid,
            view: 1,
            lock: 0,
            prepare: Prepare {
                view: 0,
                value: initial_value,
                key: None,
            },
            decided: None,
            halted: false,
            exhausted: false,
            started: false,
            future: BTreeMap::new(),
            inbox: VecDeque::new(),
            receiver: PbReceiver::new(),
            store: PromotionStore::new(),
            committees: BTreeMap::new(),
            leaders: BTreeMap::new(),
        }
    }

    pub fn me(&self) -> PartyId {
        self.me
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn lock(&self) -> View {
        self.lock
    }

    pub fn prepare(&self) -> &Prepare {
        &self.prepare
    }

    pub fn decided(&self) -> Option<&(View, Vec<u8>)> {
        self.decided.as_ref()
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn committee(&self, view: View) -> Option<&Committee> {
        self.committees.get(&view)
    }

    pub fn leader(&self, view: View) -> Option<PartyId> {
        self.leaders.get(&view).copied()
    }

    pub fn promotions(&self) -> &PromotionStore {
        &self.store
    }

    pub fn snapshot(&self) -> PartyState {
        PartyState {
            me: self.me,
            view: self.view,
            lock: self.lock,
            prepare: self.prepare.clone(),
            decided: self.decided.clone(),
            halted: self.halted,
            exhausted: self.exhausted,
            committees: self.committees.clone(),
            leaders: self.leaders.clone(),
            promotions: self.store.clone(),
        }
    }

    fn quorum(&self) -> usize {
        (self.n - self.f) as usize
    }

    /// Starts view 1. Further calls do nothing.
    pub fn start(&mut self) -> Output {
        let mut out = Output::default();
        if !self.started {
            self.started = true;
            self.start_view(&mut out);
            self.run_inbox(&mut out);
        }
        out
    }

    /// Handles raw bytes from an authenticated sender.
    pub fn handle(&mut self, from: PartyId, bytes: &[u8]) -> Output {
        match Message::decode(bytes) {
            Ok(msg) => self.handle_message(from, msg),
            Err(_) => {
                let mut out = Output::default();
                if !self.halted {
                    out.event(EngineEvent::Dropped {
                        from,
                        tag: "malformed".into(),
                        view: self.view,
                        reason: DropReason::Malformed,
                    });
                }
                out
            }
        }
    }

    pub fn handle_message(&mut self, from: PartyId, msg: Message) -> Output {
        let mut out = Output::default();
        self.inbox.push_back((from, msg));
        self.run_inbox(&mut out);
        out
    }

    fn run_inbox(&mut self, out: &mut Output) {
        while let Some((from, msg)) = self.inbox.pop_front() {
            self.dispatch(from, msg, out);
        }
    }

    fn drop_msg(&self, out: &mut Output, from: PartyId, msg: &Message, reason: DropReason) {
        out.event(EngineEvent::Dropped {
            from,
            tag: msg.tag(),
            view: msg.view(),
            reason,
        });
    }

    fn dispatch(&mut self, from: PartyId, msg: Message, out: &mut Output) {
        if self.halted {
            return;
        }
        if let Message::Decide(m) = msg {
            self.on_decide(from, m, out);
            return;
        }
        let v = msg.view();
        if v < self.view {
            // Membership is still judged first for old SENDs, so a rogue
            // broadcast is reported as such however late it arrives.
            let reason = match (&msg, self.committees.get(&v)) {
                (Message::Send(m), Some(c)) if !c.contains(m.pb_id.proposer) => {
                    DropReason::NotSelected
                }
                _ => DropReason::Stale,
            };
            self.drop_msg(out, from, &msg, reason);
            return;
        }
        if v > self.view {
            self.future.entry(v).or_default().push((from, msg));
            return;
        }
        if let Flow::Defer = self.process(from, &msg, out) {
            self.current.pending.push((from, msg));
        }
    }

    /// Moves deferred messages back into the inbox once a dependency resolves.
    fn release_pending(&mut self) {
        let pending = mem::take(&mut self.current.pending);
        self.inbox.extend(pending);
    }

    fn process(&mut self, from: PartyId, msg: &Message, out: &mut Output) -> Flow {
        match msg {
            Message::CommitteeShare(m) => {
                if m.sender != from {
                    self.drop_msg(out, from, msg, DropReason::WrongSender);
                    return Flow::Done;
                }
                match self
                    .current
                    .selection
                    .on_committee_share(m, self.verifier.as_ref())
                {
                    ShareOutcome::Selected(c) => self.on_committee_selected(c, out),
                    ShareOutcome::Invalid => {
                        self.drop_msg(out, from, msg, DropReason::InvalidShare)
                    }
                    ShareOutcome::Duplicate => self.drop_msg(out, from, msg, DropReason::Duplicate),
                    ShareOutcome::Recorded | ShareOutcome::AlreadySelected => {}
                }
                Flow::Done
            }
            Message::Send(m) => {
                let Some(committee) = self.current.committee.as_ref() else {
                    return Flow::Defer;
                };
                if m.pb_id.instance != self.config.instance {
                    self.drop_msg(out, from, msg, DropReason::Stale);
                    return Flow::Done;
                }
                if m.pb_id.proposer != from {
                    self.drop_msg(out, from, msg, DropReason::WrongSender);
                    return Flow::Done;
                }
                let ctx = ExternalValidity {
                    verifier: self.verifier.as_ref(),
                    valid: self.valid.as_ref(),
                    lock: self.lock,
                    leaders: &self.leaders,
                };
                match self
                    .receiver
                    .on_send(m, committee, &ctx, self.signer.as_ref())
                {
                    Ok(ack) => {
                        if let Proof::Previous(cert) = &m.proof {
                            self.store.on_delivery(&m.pb_id, &m.value, cert);
                        }
                        out.send(from, Message::Ack(ack));
                    }
                    Err(reason) => self.drop_msg(out, from, msg, reason),
                }
                Flow::Done
            }
            Message::Ack(m) => {
                let progress = match self.current.promoter.as_mut() {
                    Some(p) if m.pb_id.proposer == self.me => {
                        p.on_ack(from, m, self.verifier.as_ref())
                    }
                    _ => PromoteProgress::Ignored(DropReason::Stale),
                };
                match progress {
                    PromoteProgress::Pending => {}
                    PromoteProgress::NextStep(send) => out.multicast(Message::Send(send)),
                    PromoteProgress::Complete(result) => {
                        out.event(EngineEvent::PromotionComplete { view: self.view });
                        self.on_promotion_complete(result, out);
                    }
                    PromoteProgress::Ignored(reason) => self.drop_msg(out, from, msg, reason),
                }
                Flow::Done
            }
            Message::Propose(m) => {
                let Some(committee) = self.current.committee.as_ref() else {
                    return Flow::Defer;
                };
                if m.proposer != from {
                    self.drop_msg(out, from, msg, DropReason::WrongSender);
                } else if !committee.contains(m.proposer) {
                    self.drop_msg(out, from, msg, DropReason::NotSelected);
                } else if !self.commit_proof_valid(m.proposer, &m.value, &m.cert) {
                    self.drop_msg(out, from, msg, DropReason::InvalidProof);
                } else if !self.current.proposals.insert(m.proposer) {
                    self.drop_msg(out, from, msg, DropReason::Duplicate);
                } else {
                    self.on_propose(m, out);
                }
                Flow::Done
            }
            Message::Suggest(m) => {
                let Some(committee) = self.current.committee.as_ref() else {
                    return Flow::Defer;
                };
                if m.sender != from {
                    self.drop_msg(out, from, msg, DropReason::WrongSender);
                } else if !committee.contains(m.proposer) {
                    self.drop_msg(out, from, msg, DropReason::NotSelected);
                } else if !self.commit_proof_valid(m.proposer, &m.value, &m.cert) {
                    self.drop_msg(out, from, msg, DropReason::InvalidProof);
                } else if !self.current.suggests.insert(m.sender) {
                    self.drop_msg(out, from, msg, DropReason::Duplicate);
                } else {
                    self.on_suggest(m, out);
                }
                Flow::Done
            }
            Message::ElectShare(m) => {
                let tag = elect_tag(self.config.instance, self.view);
                if m.sender != from || m.share.signer != from {
                    self.drop_msg(out, from, msg, DropReason::WrongSender);
                } else if !self.verifier.coin_share_verify(&m.share, &tag) {
                    self.drop_msg(out, from, msg, DropReason::InvalidShare);
                } else if let std::collections::btree_map::Entry::Vacant(e) =
                    self.current.elect_shares.entry(from)
                {
                    e.insert(m.share.clone());
                    self.try_elect(out);
                } else {
                    self.drop_msg(out, from, msg, DropReason::Duplicate);
                }
                Flow::Done
            }
            Message::ViewChange(m) => {
                let Some(leader) = self.current.leader else {
                    return Flow::Defer;
                };
                if m.sender != from {
                    self.drop_msg(out, from, msg, DropReason::WrongSender);
                } else if m.leader != leader {
                    self.drop_msg(out, from, msg, DropReason::MismatchedLeader);
                } else if !self.view_change_valid(m) {
                    self.drop_msg(out, from, msg, DropReason::InvalidProof);
                } else if !self.current.view_changes.insert(m.sender) {
                    self.drop_msg(out, from, msg, DropReason::Duplicate);
                } else {
                    self.on_viewchange(m, out);
                }
                Flow::Done
            }
            Message::Decide(_) => unreachable!("decide is handled before view routing"),
        }
    }

    /// Certificate check for step `step` of `proposer`'s promotion in the
    /// current view on `value`.
    fn cert_valid(
        &self,
        view: View,
        proposer: PartyId,
        step: u8,
        value: &[u8],
        cert: &ThresholdSignature,
    ) -> bool {
        let id = PbId {
            instance: self.config.instance,
            view,
            proposer,
            step,
        };
        self.verifier
            .threshold_validate(cert, &pb_payload(&id, &Digest::of(value)))
    }

    fn commit_proof_valid(
        &self,
        proposer: PartyId,
        value: &[u8],
        cert: &ThresholdSignature,
    ) -> bool {
        (self.valid)(value) && self.cert_valid(self.view, proposer, 4, value, cert)
    }

    fn view_change_valid(&self, m: &ViewChangeMsg) -> bool {
        let ok = |d: &Option<Deliverable>, step| {
            d.as_ref()
                .is_none_or(|d| self.cert_valid(m.view, m.leader, step, &d.value, &d.cert))
        };
        ok(&m.commit, 3) && ok(&m.lock, 2) && ok(&m.key, 1)
    }

    fn start_view(&mut self, out: &mut Output) {
        let share = start_selection(self.signer.as_ref(), self.config.instance, self.view);
        out.multicast(Message::CommitteeShare(share));
        if let Some(buffered) = self.future.remove(&self.view) {
            self.inbox.extend(buffered);
        }
    }

    fn on_committee_selected(&mut self, committee: Committee, out: &mut Output) {
        out.event(EngineEvent::CommitteeSelected {
            view: self.view,
            members: committee.members.clone(),
        });
        self.committees.insert(self.view, committee.clone());
        if committee.contains(self.me) && !self.current.abandoned {
            let (promoter, send) = Promoter::promote(
                self.config.instance,
                self.view,
                self.me,
                self.prepare.value.clone(),
                self.prepare.key.clone(),
            );
            self.current.promoter = Some(promoter);
            out.event(EngineEvent::PromotionStarted { view: self.view });
            out.multicast(Message::Send(send));
        }
        self.current.committee = Some(committee);
        self.release_pending();
        self.try_elect(out);
    }

    fn on_promotion_complete(
        &mut self,
        result: crate::promotion::PromotionResult,
        out: &mut Output,
    ) {
        out.multicast(Message::Propose(ProposeMsg {
            view: result.view,
            proposer: result.proposer,
            value: result.value,
            cert: result.cert,
        }));
    }

    fn suggest(
        &mut self,
        proposer: PartyId,
        value: &[u8],
        cert: &ThresholdSignature,
        out: &mut Output,
    ) {
        if self.current.suggested {
            return;
        }
        self.current.suggested = true;
        out.multicast(Message::Suggest(SuggestMsg {
            view: self.view,
            sender: self.me,
            proposer,
            value: value.to_vec(),
            cert: cert.clone(),
        }));
    }

    fn on_propose(&mut self, m: &ProposeMsg, out: &mut Output) {
        self.suggest(m.proposer, &m.value, &m.cert, out);
    }

    fn on_suggest(&mut self, m: &SuggestMsg, out: &mut Output) {
        // A valid SUGGEST carries a commit proof, so it stands in for a
        // PROPOSE this party may never receive.
        self.suggest(m.proposer, &m.value, &m.cert, out);
        if self.current.suggests.len() >= self.quorum() && !self.current.elect_sent {
            self.abandon_current(out);
            self.send_elect_share(out);
        }
    }

    fn abandon_current(&mut self, out: &mut Output) {
        if self.current.abandoned {
            return;
        }
        self.current.abandoned = true;
        if let Some(c) = self.current.committee.as_ref() {
            for &p in &c.members {
                self.receiver.pb_abandon(self.view, p);
            }
        }
        if let Some(p) = self.current.promoter.as_mut() {
            if p.status() == PromoteStatus::Running && p.abandon() {
                out.event(EngineEvent::PromotionAbandoned {
                    view: self.view,
                    completed_steps: p.completed_steps(),
                });
            }
        }
    }

    fn send_elect_share(&mut self, out: &mut Output) {
        if self.current.elect_sent {
            return;
        }
        self.current.elect_sent = true;
        let share = self
            .signer
            .coin_share(&elect_tag(self.config.instance, self.view));
        out.multicast(Message::ElectShare(ElectShareMsg {
            view: self.view,
            sender: self.me,
            share,
        }));
    }

    fn try_elect(&mut self, out: &mut Output) {
        if self.current.leader.is_some() || self.current.elect_shares.len() < self.f as usize + 1 {
            return;
        }
        let Some(committee) = self.current.committee.clone() else {
            return;
        };
        let shares: Vec<CoinShare> = self.current.elect_shares.values().cloned().collect();
        let (raw, leader) = elect_and_map(
            self.verifier.as_ref(),
            self.config.instance,
            self.view,
            &shares,
            &committee,
        )
        .expect("f + 1 verified election shares");
        self.current.leader = Some(leader);
        self.leaders.insert(self.view, leader);
        out.event(EngineEvent::LeaderElected {
            view: self.view,
            raw,
            leader,
        });
        // The coin is public once f + 1 shares exist, so contributing ours
        // now reveals nothing and lets slower parties finish the election.
        self.abandon_current(out);
        self.send_elect_share(out);

        let slot = self
            .store
            .get(self.view, leader)
            .cloned()
            .unwrap_or_default();
        out.multicast(Message::ViewChange(ViewChangeMsg {
            view: self.view,
            sender: self.me,
            leader,
            commit: slot.commit,
            lock: slot.lock,
            key: slot.prepare,
        }));
        self.release_pending();
    }

    fn on_viewchange(&mut self, m: &ViewChangeMsg, out: &mut Output) {
        if let Some(commit) = &m.commit {
            self.decide(
                m.view,
                m.leader,
                commit.value.clone(),
                commit.cert.clone(),
                out,
            );
            return;
        }
        if m.lock.is_some() && m.view > self.lock {
            self.lock = m.view;
            out.event(EngineEvent::LockRaised { view: m.view });
        }
        if let Some(key) = &m.key {
            if m.view > self.prepare.view {
                self.prepare = Prepare {
                    view: m.view,
                    value: key.value.clone(),
                    key: Some(KeyProof {
                        view: m.view,
                        proposer: m.leader,
                        cert: key.cert.clone(),
                    }),
                };
                out.event(EngineEvent::KeyAdopted { view: m.view });
            }
        }
        if self.current.view_changes.len() >= self.quorum() {
            self.advance(out);
        }
    }

    fn advance(&mut self, out: &mut Output) {
        if self.exhausted {
            return;
        }
        let next = self.view + 1;
        if next > self.config.max_views {
            self.exhausted = true;
            out.event(EngineEvent::MaxViewsReached { view: self.view });
            return;
        }
        self.receiver.prune_before(next);
        self.view = next;
        self.current = ViewState::new(self.config.instance, next, self.config.kappa);
        out.event(EngineEvent::ViewAdvanced { view: next });
        self.start_view(out);
    }

    /// Records the decision, multicasts a self-certifying DECIDE and halts.
    fn decide(
        &mut self,
        view: View,
        leader: PartyId,
        value: Vec<u8>,
        cert: ThresholdSignature,
        out: &mut Output,
    ) {
        let take = self.f as usize + 1;
        let committee_shares: Vec<CoinShare> = self
            .current
            .selection
            .shares()
            .into_iter()
            .take(take)
            .collect();
        let elect_shares: Vec<CoinShare> = self
            .current
            .elect_shares
            .values()
            .take(take)
            .cloned()
            .collect();
        self.finish(
            DecideMsg {
                view,
                leader,
                value,
                cert,
                committee_shares,
                elect_shares,
            },
            out,
        );
    }

    fn finish(&mut self, proof: DecideMsg, out: &mut Output) {
        out.event(EngineEvent::Decided {
            view: proof.view,
            value: proof.value.clone(),
        });
        self.decided = Some((proof.view, proof.value.clone()));
        self.halted = true;
        self.inbox.clear();
        out.multicast(Message::Decide(proof));
    }

    /// Checks a DECIDE without any local state beyond the keys: recompute
    /// the committee and the mapped leader from the attached coin shares,
    /// then check the leader's step-3 certificate on the value.
    pub fn verify_decide(&self, m: &DecideMsg) -> bool {
        let Some(committee) = committee_from_shares(
            self.verifier.as_ref(),
            self.config.instance,
            m.view,
            self.config.kappa,
            &m.committee_shares,
        ) else {
            return false;
        };
        let Ok((_, leader)) = elect_and_map(
            self.verifier.as_ref(),
            self.config.instance,
            m.view,
            &m.elect_shares,
            &committee,
        ) else {
            return false;
        };
        leader == m.leader
            && (self.valid)(&m.value)
            && self.cert_valid(m.view, leader, 3, &m.value, &m.cert)
    }

    fn on_decide(&mut self, from: PartyId, m: DecideMsg, out: &mut Output) {
        let msg = Message::Decide(m);
        let Message::Decide(m) = &msg else {
            unreachable!()
        };
        if !self.verify_decide(m) {
            self.drop_msg(out, from, &msg, DropReason::InvalidProof);
            return;
        }
        let Message::Decide(m) = msg else {
            unreachable!()
        };
        self.finish(m, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(members: &[PartyId]) -> Committee {
        Committee {
            view: 1,
            members: members.to_vec(),
        }
    }

    #[test]
    fn mapping_examples() {
        assert_eq!(map_to_committee(5, &c(&[5, 9])), 5);
        assert_eq!(map_to_committee(6, &c(&[2, 8])), 8);
        assert_eq!(map_to_committee(5, &c(&[2, 8])), 2);
        assert_eq!(map_to_committee(1, &c(&[7])), 7);
        assert_eq!(map_to_committee(10, &c(&[1, 2, 3])), 3);
    }
}
