//! Prioritized provable broadcast (P-PB).
//!
//! A sender multicasts `SEND(id, value, proof)`. A receiver answers with a
//! signature share over `(id, digest(value))` only when the sender belongs to
//! the view's committee, the SEND is the first one for `id`, the proof passes
//! [`ex_pb_val`] and the promotion has not been abandoned. All rejections are
//! silent. The sender combines `n - f` shares from distinct signers into a
//! threshold signature, the delivery proof for that step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::codec::{DecodeError, Reader, Writer};
use crate::committee::Committee;
use crate::crypto::{Digest, SignShare, Signer, ThresholdSignature, Verifier};
use crate::message::TAG_PB_PAYLOAD;
use crate::{PartyId, View};

/// Identifies one step of one party's promotion in one view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PbId {
    pub instance: u64,
    pub view: View,
    pub proposer: PartyId,
    pub step: u8,
}

impl PbId {
    pub fn with_step(self, step: u8) -> PbId {
        PbId { step, ..self }
    }

    /// `(view, proposer)`: the promotion this step belongs to.
    pub fn promotion(&self) -> (View, PartyId) {
        (self.view, self.proposer)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.instance)
            .u64(self.view)
            .u32(self.proposer)
            .u8(self.step);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let id = PbId {
            instance: r.u64()?,
            view: r.u64()?,
            proposer: r.u32()?,
            step: r.u8()?,
        };
        if !(1..=4).contains(&id.step) {
            return Err(DecodeError::Invalid("pb step"));
        }
        Ok(id)
    }
}

impl fmt::Display for PbId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}/p{}/s{}", self.view, self.proposer, self.step)
    }
}

/// The bytes ACK shares sign: the step id and the value digest, never the
/// value itself, so certificate size does not grow with the value.
pub fn pb_payload(pb_id: &PbId, value_digest: &Digest) -> Vec<u8> {
    let mut w = Writer::new(TAG_PB_PAYLOAD);
    pb_id.encode(&mut w);
    w.fixed(&value_digest.0);
    w.finish()
}

/// A step-1 certificate from an earlier view, justifying a re-proposed value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyProof {
    pub view: View,
    pub proposer: PartyId,
    pub cert: ThresholdSignature,
}

impl KeyProof {
    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.view).u32(self.proposer);
        self.cert.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(KeyProof {
            view: r.u64()?,
            proposer: r.u32()?,
            cert: ThresholdSignature::decode(r)?,
        })
    }
}

/// Justification attached to a SEND.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Proof {
    /// Step 1: an optional key from an earlier view. `None` is the genesis key.
    Step1 { key: Option<KeyProof> },
    /// Steps 2–4: the certificate returned by the previous step.
    Previous(ThresholdSignature),
}

impl Proof {
    pub fn encode(&self, w: &mut Writer) {
        match self {
            Proof::Step1 { key: None } => {
                w.u8(0);
            }
            Proof::Step1 { key: Some(k) } => {
                w.u8(1);
                k.encode(w);
            }
            Proof::Previous(sig) => {
                w.u8(2);
                sig.encode(w);
            }
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Proof::Step1 { key: None }),
            1 => Ok(Proof::Step1 {
                key: Some(KeyProof::decode(r)?),
            }),
            2 => Ok(Proof::Previous(ThresholdSignature::decode(r)?)),
            _ => Err(DecodeError::Invalid("proof kind")),
        }
    }

    /// Certificate bytes carried, for the signature side of byte accounting.
    pub fn signature_len(&self) -> usize {
        match self {
            Proof::Step1 { key: None } => 0,
            Proof::Step1 { key: Some(k) } => k.cert.encoded_len(),
            Proof::Previous(sig) => sig.encoded_len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SendMsg {
    pub pb_id: PbId,
    pub value: Vec<u8>,
    pub proof: Proof,
}

impl SendMsg {
    pub fn value_digest(&self) -> Digest {
        Digest::of(&self.value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AckMsg {
    pub pb_id: PbId,
    pub signer: PartyId,
    pub share: SignShare,
}

/// Why a receiver or sender discarded a P-PB message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NotSelected,
    Duplicate,
    InvalidProof,
    Abandoned,
    WrongSender,
    InvalidShare,
    Stale,
    Malformed,
    MismatchedLeader,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::NotSelected => "not-selected",
            DropReason::Duplicate => "duplicate",
            DropReason::InvalidProof => "invalid-proof",
            DropReason::Abandoned => "abandoned",
            DropReason::WrongSender => "wrong-sender",
            DropReason::InvalidShare => "invalid-share",
            DropReason::Stale => "stale",
            DropReason::Malformed => "malformed",
            DropReason::MismatchedLeader => "mismatched-leader",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a receiver knows when judging a SEND's proof.
pub struct ExternalValidity<'a> {
    pub verifier: &'a dyn Verifier,
    /// Application predicate on values.
    pub valid: &'a dyn Fn(&[u8]) -> bool,
    /// Highest view in which this party saw a lock.
    pub lock: View,
    /// Elected leader of every view this party completed.
    pub leaders: &'a BTreeMap<View, PartyId>,
}

/// External validity of a SEND.
///
/// Step 1: the value satisfies the application predicate and either the key
/// is the genesis key and this party holds no lock, or the key is a step-1
/// certificate for the same value from an earlier view `v' ≥ LOCK`, issued
/// by that view's elected leader. Steps 2–4: the proof is a threshold
/// signature on the previous step of the same promotion and the same value.
pub fn ex_pb_val(msg: &SendMsg, ctx: &ExternalValidity<'_>) -> bool {
    let digest = msg.value_digest();
    match (msg.pb_id.step, &msg.proof) {
        (1, Proof::Step1 { key }) => {
            if !(ctx.valid)(&msg.value) {
                return false;
            }
            match key {
                None => ctx.lock == 0,
                Some(k) => {
                    let key_id = PbId {
                        instance: msg.pb_id.instance,
                        view: k.view,
                        proposer: k.proposer,
                        step: 1,
                    };
                    k.view >= 1
                        && k.view < msg.pb_id.view
                        && k.view >= ctx.lock
                        && ctx.leaders.get(&k.view) == Some(&k.proposer)
                        && ctx
                            .verifier
                            .threshold_validate(&k.cert, &pb_payload(&key_id, &digest))
                }
            }
        }
        (2..=4, Proof::Previous(sig)) => {
            let prev = msg.pb_id.with_step(msg.pb_id.step - 1);
            ctx.verifier
                .threshold_validate(sig, &pb_payload(&prev, &digest))
        }
        _ => false,
    }
}

/// Receiver half of P-PB for one party.
#[derive(Clone, Debug, Default)]
pub struct PbReceiver {
    acked: BTreeSet<PbId>,
    abandoned: BTreeSet<(View, PartyId)>,
}

impl PbReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Judges a SEND. Committee membership is checked before any
    /// cryptographic work. Returns this party's ACK or the drop reason.
    pub fn on_send(
        &mut self,
        msg: &SendMsg,
        committee: &Committee,
        ctx: &ExternalValidity<'_>,
        signer: &dyn Signer,
    ) -> Result<AckMsg, DropReason> {
        if committee.view != msg.pb_id.view || !committee.contains(msg.pb_id.proposer) {
            return Err(DropReason::NotSelected);
        }
        if self.abandoned.contains(&msg.pb_id.promotion()) {
            return Err(DropReason::Abandoned);
        }
        if self.acked.contains(&msg.pb_id) {
            return Err(DropReason::Duplicate);
        }
        if !ex_pb_val(msg, ctx) {
            return Err(DropReason::InvalidProof);
        }
        self.acked.insert(msg.pb_id);
        Ok(AckMsg {
            pb_id: msg.pb_id,
            signer: signer.party(),
            share: signer.sign_share(&pb_payload(&msg.pb_id, &msg.value_digest())),
        })
    }

    /// Stop ACKing every step of `(view, proposer)`'s promotion. Idempotent;
    /// returns whether anything changed.
    pub fn pb_abandon(&mut self, view: View, proposer: PartyId) -> bool {
        self.abandoned.insert((view, proposer))
    }

    pub fn is_abandoned(&self, view: View, proposer: PartyId) -> bool {
        self.abandoned.contains(&(view, proposer))
    }

    pub fn has_acked(&self, pb_id: &PbId) -> bool {
        self.acked.contains(pb_id)
    }

    /// Forget state of views before `view`.
    pub fn prune_before(&mut self, view: View) {
        self.acked.retain(|id| id.view >= view);
        self.abandoned.retain(|(v, _)| *v >= view);
    }
}

/// Result of handing an ACK to a [`PbSender`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AckOutcome {
    Recorded,
    /// The `n - f`-th valid share arrived.
    Complete(ThresholdSignature),
    Ignored(DropReason),
}

/// Sender half of one P-PB invocation.
#[derive(Clone, Debug)]
pub struct PbSender {
    pb_id: PbId,
    payload: Vec<u8>,
    shares: BTreeMap<PartyId, SignShare>,
    state: SenderState,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum SenderState {
    Waiting,
    Done,
    Abandoned,
}

impl PbSender {
    /// Starts a broadcast: returns the sender state and the SEND to multicast.
    pub fn pb_broadcast(pb_id: PbId, value: Vec<u8>, proof: Proof) -> (PbSender, SendMsg) {
        let payload = pb_payload(&pb_id, &Digest::of(&value));
        let sender = PbSender {
            pb_id,
            payload,
            shares: BTreeMap::new(),
            state: SenderState::Waiting,
        };
        (
            sender,
            SendMsg {
                pb_id,
                value,
                proof,
            },
        )
    }

    pub fn pb_id(&self) -> PbId {
        self.pb_id
    }

    pub fn is_abandoned(&self) -> bool {
        self.state == SenderState::Abandoned
    }

    pub fn abandon(&mut self) {
        if self.state == SenderState::Waiting {
            self.state = SenderState::Abandoned;
        }
    }

    pub fn on_ack(&mut self, from: PartyId, ack: &AckMsg, verifier: &dyn Verifier) -> AckOutcome {
        match self.state {
            SenderState::Waiting => {}
            SenderState::Abandoned => return AckOutcome::Ignored(DropReason::Abandoned),
            SenderState::Done => return AckOutcome::Ignored(DropReason::Stale),
        }
        if ack.pb_id != self.pb_id {
            return AckOutcome::Ignored(DropReason::Stale);
        }
        if ack.signer != from || ack.share.signer != from {
            return AckOutcome::Ignored(DropReason::WrongSender);
        }
        if self.shares.contains_key(&from) {
            return AckOutcome::Ignored(DropReason::Duplicate);
        }
        if !verifier.share_validate(&ack.share, &self.payload) {
            return AckOutcome::Ignored(DropReason::InvalidShare);
        }
        self.shares.insert(from, ack.share.clone());
        let p = verifier.params();
        if self.shares.len() < (p.n - p.f) as usize {
            return AckOutcome::Recorded;
        }
        let shares: Vec<SignShare> = self.shares.values().cloned().collect();
        let sig = verifier
            .combine(&shares, &self.payload)
            .expect("n - f validated distinct shares combine");
        self.state = SenderState::Done;
        AckOutcome::Complete(sig)
    }
}
