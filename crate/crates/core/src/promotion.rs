//! Four-step proposal promotion.
//!
//! A committee member runs P-PB four times on the same value, feeding each
//! step's certificate into the next step's SEND. Receivers keep what each
//! accepted SEND carried: step 2 carries the key (step-1 certificate), step 3
//! the lock (step-2 certificate), step 4 the commit (step-3 certificate). The
//! step-4 certificate returned to the proposer is the commit proof it
//! attaches to PROPOSE.

use std::collections::BTreeMap;

use crate::crypto::{ThresholdSignature, Verifier};
use crate::pb::{AckMsg, AckOutcome, KeyProof, PbId, PbSender, Proof, SendMsg};
use crate::{PartyId, View};

/// A value together with the certificate that justified it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deliverable {
    pub value: Vec<u8>,
    pub cert: ThresholdSignature,
}

/// What one receiver recorded for one `(view, proposer)` promotion.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PromotionState {
    pub prepare: Option<Deliverable>,
    pub lock: Option<Deliverable>,
    pub commit: Option<Deliverable>,
}

impl PromotionState {
    /// Commit implies lock, and lock implies prepare, for the same value.
    /// Holds whenever each proposer's SENDs reach this party in order.
    pub fn is_nested(&self) -> bool {
        let same = |a: &Option<Deliverable>, b: &Option<Deliverable>| match (a, b) {
            (Some(x), Some(y)) => x.value == y.value,
            (Some(_), None) => false,
            (None, _) => true,
        };
        same(&self.commit, &self.lock) && same(&self.lock, &self.prepare)
    }
}

/// Receiver-side store of deliverables, keyed by `(view, proposer)`.
#[derive(Clone, Debug, Default)]
pub struct PromotionStore {
    slots: BTreeMap<(View, PartyId), PromotionState>,
}

impl PromotionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records what an accepted SEND carried. Step 1 stores nothing; each
    /// later step is recorded at most once. Returns whether a slot was set.
    pub fn on_delivery(
        &mut self,
        pb_id: &PbId,
        value: &[u8],
        carried: &ThresholdSignature,
    ) -> bool {
        let slot = self.slots.entry(pb_id.promotion()).or_default();
        let target = match pb_id.step {
            2 => &mut slot.prepare,
            3 => &mut slot.lock,
            4 => &mut slot.commit,
            _ => return false,
        };
        if target.is_some() {
            return false;
        }
        *target = Some(Deliverable {
            value: value.to_vec(),
            cert: carried.clone(),
        });
        true
    }

    pub fn get(&self, view: View, proposer: PartyId) -> Option<&PromotionState> {
        self.slots.get(&(view, proposer))
    }

    pub fn get_prepare(&self, view: View, proposer: PartyId) -> Option<&Deliverable> {
        self.get(view, proposer).and_then(|s| s.prepare.as_ref())
    }

    pub fn get_lock(&self, view: View, proposer: PartyId) -> Option<&Deliverable> {
        self.get(view, proposer).and_then(|s| s.lock.as_ref())
    }

    pub fn get_commit(&self, view: View, proposer: PartyId) -> Option<&Deliverable> {
        self.get(view, proposer).and_then(|s| s.commit.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(View, PartyId), &PromotionState)> {
        self.slots.iter()
    }
}

/// Completed promotion: the value and its step-4 certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromotionResult {
    pub view: View,
    pub proposer: PartyId,
    pub value: Vec<u8>,
    pub cert: ThresholdSignature,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PromoteProgress {
    Pending,
    /// A step finished; multicast the next SEND.
    NextStep(SendMsg),
    Complete(PromotionResult),
    Ignored(crate::pb::DropReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromoteStatus {
    Running,
    Complete,
    Abandoned,
}

/// Sender side of one promotion.
#[derive(Clone, Debug)]
pub struct Promoter {
    value: Vec<u8>,
    current: PbSender,
    status: PromoteStatus,
    completed_steps: u8,
}

impl Promoter {
    /// Starts a promotion of `value` and returns the step-1 SEND.
    pub fn promote(
        instance: u64,
        view: View,
        proposer: PartyId,
        value: Vec<u8>,
        key: Option<KeyProof>,
    ) -> (Promoter, SendMsg) {
        let pb_id = PbId {
            instance,
            view,
            proposer,
            step: 1,
        };
        let (current, send) = PbSender::pb_broadcast(pb_id, value.clone(), Proof::Step1 { key });
        (
            Promoter {
                value,
                current,
                status: PromoteStatus::Running,
                completed_steps: 0,
            },
            send,
        )
    }

    pub fn status(&self) -> PromoteStatus {
        self.status
    }

    pub fn completed_steps(&self) -> u8 {
        self.completed_steps
    }

    pub fn current_step(&self) -> PbId {
        self.current.pb_id()
    }

    /// Abandons the in-flight step; no further step will start.
    pub fn abandon(&mut self) -> bool {
        if self.status != PromoteStatus::Running {
            return false;
        }
        self.current.abandon();
        self.status = PromoteStatus::Abandoned;
        true
    }

    pub fn on_ack(
        &mut self,
        from: PartyId,
        ack: &AckMsg,
        verifier: &dyn Verifier,
    ) -> PromoteProgress {
        if self.status == PromoteStatus::Abandoned {
            return PromoteProgress::Ignored(crate::pb::DropReason::Abandoned);
        }
        match self.current.on_ack(from, ack, verifier) {
            AckOutcome::Recorded => PromoteProgress::Pending,
            AckOutcome::Ignored(r) => PromoteProgress::Ignored(r),
            AckOutcome::Complete(sig) => {
                let id = self.current.pb_id();
                self.completed_steps = id.step;
                if id.step == 4 {
                    self.status = PromoteStatus::Complete;
                    return PromoteProgress::Complete(PromotionResult {
                        view: id.view,
                        proposer: id.proposer,
                        value: self.value.clone(),
                        cert: sig,
                    });
                }
                let (next, send) = PbSender::pb_broadcast(
                    id.with_step(id.step + 1),
                    self.value.clone(),
                    Proof::Previous(sig),
                );
                self.current = next;
                PromoteProgress::NextStep(send)
            }
        }
    }
}
