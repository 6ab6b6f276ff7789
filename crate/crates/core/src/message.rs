//! Wire messages and their canonical encoding.

use std::fmt;

use crate::codec::{DecodeError, Reader, Writer};
use crate::committee::CommitteeShareMsg;
use crate::crypto::{CoinShare, SignShare, ThresholdSignature};
use crate::pb::{AckMsg, PbId, Proof, SendMsg};
use crate::promotion::Deliverable;
use crate::{PartyId, View};

pub const TAG_COMMITTEE_SHARE: u8 = 0x10;
pub const TAG_SEND: u8 = 0x11;
pub const TAG_ACK: u8 = 0x12;
pub const TAG_PROPOSE: u8 = 0x13;
pub const TAG_SUGGEST: u8 = 0x14;
pub const TAG_ELECT_SHARE: u8 = 0x15;
pub const TAG_VIEW_CHANGE: u8 = 0x16;
pub const TAG_DECIDE: u8 = 0x17;

/// Signable payloads (never sent on their own).
pub const TAG_COIN_LABEL: u8 = 0x20;
pub const TAG_PB_PAYLOAD: u8 = 0x21;

/// A completed promotion: value plus step-4 certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProposeMsg {
    pub view: View,
    pub proposer: PartyId,
    pub value: Vec<u8>,
    pub cert: ThresholdSignature,
}

/// Relays the first valid commit proof a party saw in a view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuggestMsg {
    pub view: View,
    pub sender: PartyId,
    pub proposer: PartyId,
    pub value: Vec<u8>,
    pub cert: ThresholdSignature,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElectShareMsg {
    pub view: View,
    pub sender: PartyId,
    pub share: CoinShare,
}

/// A party's deliverables for the elected leader's promotion. Every field
/// may be absent; empty view-changes still count toward the quorum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewChangeMsg {
    pub view: View,
    pub sender: PartyId,
    pub leader: PartyId,
    pub commit: Option<Deliverable>,
    pub lock: Option<Deliverable>,
    pub key: Option<Deliverable>,
}

/// Self-certifying decision: the step-3 certificate of `leader`'s promotion
/// plus the coin shares from which anyone can recompute that `leader` was
/// the view's mapped leader.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecideMsg {
    pub view: View,
    pub leader: PartyId,
    pub value: Vec<u8>,
    pub cert: ThresholdSignature,
    pub committee_shares: Vec<CoinShare>,
    pub elect_shares: Vec<CoinShare>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    CommitteeShare(CommitteeShareMsg),
    Send(SendMsg),
    Ack(AckMsg),
    Propose(ProposeMsg),
    Suggest(SuggestMsg),
    ElectShare(ElectShareMsg),
    ViewChange(ViewChangeMsg),
    Decide(DecideMsg),
}

/// Accounting bucket of a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Selection,
    Promotion,
    Propose,
    Suggest,
    Election,
    ViewChange,
    Decide,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Selection,
        Phase::Promotion,
        Phase::Propose,
        Phase::Suggest,
        Phase::Election,
        Phase::ViewChange,
        Phase::Decide,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Selection => "selection",
            Phase::Promotion => "promotion",
            Phase::Propose => "propose",
            Phase::Suggest => "suggest",
            Phase::Election => "election",
            Phase::ViewChange => "view-change",
            Phase::Decide => "decide",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn encode_share_list(w: &mut Writer, shares: &[CoinShare]) {
    w.u32(shares.len() as u32);
    for s in shares {
        s.encode(w);
    }
}

fn decode_share_list(r: &mut Reader<'_>) -> Result<Vec<CoinShare>, DecodeError> {
    let len = r.u32()? as usize;
    // Each share takes at least 40 bytes; reject absurd counts before allocating.
    if len > r.remaining() / 40 {
        return Err(DecodeError::Invalid("share count"));
    }
    (0..len).map(|_| CoinShare::decode(r)).collect()
}

fn encode_deliverable(w: &mut Writer, d: &Option<Deliverable>) {
    match d {
        None => {
            w.bool(false);
        }
        Some(d) => {
            w.bool(true).bytes(&d.value);
            d.cert.encode(w);
        }
    }
}

fn decode_deliverable(r: &mut Reader<'_>) -> Result<Option<Deliverable>, DecodeError> {
    if !r.bool()? {
        return Ok(None);
    }
    Ok(Some(Deliverable {
        value: r.bytes()?,
        cert: ThresholdSignature::decode(r)?,
    }))
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::CommitteeShare(m) => {
                let mut w = Writer::new(TAG_COMMITTEE_SHARE);
                w.u64(m.view).u32(m.sender);
                m.share.encode(&mut w);
                w.finish()
            }
            Message::Send(m) => {
                let mut w = Writer::new(TAG_SEND);
                m.pb_id.encode(&mut w);
                w.bytes(&m.value);
                m.proof.encode(&mut w);
                w.finish()
            }
            Message::Ack(m) => {
                let mut w = Writer::new(TAG_ACK);
                m.pb_id.encode(&mut w);
                w.u32(m.signer);
                m.share.encode(&mut w);
                w.finish()
            }
            Message::Propose(m) => {
                let mut w = Writer::new(TAG_PROPOSE);
                w.u64(m.view).u32(m.proposer).bytes(&m.value);
                m.cert.encode(&mut w);
                w.finish()
            }
            Message::Suggest(m) => {
                let mut w = Writer::new(TAG_SUGGEST);
                w.u64(m.view).u32(m.sender).u32(m.proposer).bytes(&m.value);
                m.cert.encode(&mut w);
                w.finish()
            }
            Message::ElectShare(m) => {
                let mut w = Writer::new(TAG_ELECT_SHARE);
                w.u64(m.view).u32(m.sender);
                m.share.encode(&mut w);
                w.finish()
            }
            Message::ViewChange(m) => {
                let mut w = Writer::new(TAG_VIEW_CHANGE);
                w.u64(m.view).u32(m.sender).u32(m.leader);
                encode_deliverable(&mut w, &m.commit);
                encode_deliverable(&mut w, &m.lock);
                encode_deliverable(&mut w, &m.key);
                w.finish()
            }
            Message::Decide(m) => {
                let mut w = Writer::new(TAG_DECIDE);
                w.u64(m.view).u32(m.leader).bytes(&m.value);
                m.cert.encode(&mut w);
                encode_share_list(&mut w, &m.committee_shares);
                encode_share_list(&mut w, &m.elect_shares);
                w.finish()
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
        let mut r = Reader::new(bytes);
        let msg = match r.u8()? {
            TAG_COMMITTEE_SHARE => Message::CommitteeShare(CommitteeShareMsg {
                view: r.u64()?,
                sender: r.u32()?,
                share: CoinShare::decode(&mut r)?,
            }),
            TAG_SEND => Message::Send(SendMsg {
                pb_id: PbId::decode(&mut r)?,
                value: r.bytes()?,
                proof: Proof::decode(&mut r)?,
            }),
            TAG_ACK => Message::Ack(AckMsg {
                pb_id: PbId::decode(&mut r)?,
                signer: r.u32()?,
                share: SignShare::decode(&mut r)?,
            }),
            TAG_PROPOSE => Message::Propose(ProposeMsg {
                view: r.u64()?,
                proposer: r.u32()?,
                value: r.bytes()?,
                cert: ThresholdSignature::decode(&mut r)?,
            }),
            TAG_SUGGEST => Message::Suggest(SuggestMsg {
                view: r.u64()?,
                sender: r.u32()?,
                proposer: r.u32()?,
                value: r.bytes()?,
                cert: ThresholdSignature::decode(&mut r)?,
            }),
            TAG_ELECT_SHARE => Message::ElectShare(ElectShareMsg {
                view: r.u64()?,
                sender: r.u32()?,
                share: CoinShare::decode(&mut r)?,
            }),
            TAG_VIEW_CHANGE => Message::ViewChange(ViewChangeMsg {
                view: r.u64()?,
                sender: r.u32()?,
                leader: r.u32()?,
                commit: decode_deliverable(&mut r)?,
                lock: decode_deliverable(&mut r)?,
                key: decode_deliverable(&mut r)?,
            }),
            TAG_DECIDE => Message::Decide(DecideMsg {
                view: r.u64()?,
                leader: r.u32()?,
                value: r.bytes()?,
                cert: ThresholdSignature::decode(&mut r)?,
                committee_shares: decode_share_list(&mut r)?,
                elect_shares: decode_share_list(&mut r)?,
            }),
            other => return Err(DecodeError::UnknownTag(other)),
        };
        r.finish()?;
        Ok(msg)
    }

    pub fn view(&self) -> View {
        match self {
            Message::CommitteeShare(m) => m.view,
            Message::Send(m) => m.pb_id.view,
            Message::Ack(m) => m.pb_id.view,
            Message::Propose(m) => m.view,
            Message::Suggest(m) => m.view,
            Message::ElectShare(m) => m.view,
            Message::ViewChange(m) => m.view,
            Message::Decide(m) => m.view,
        }
    }

    pub fn phase(&self) -> Phase {
        match self {
            Message::CommitteeShare(_) => Phase::Selection,
            Message::Send(_) | Message::Ack(_) => Phase::Promotion,
            Message::Propose(_) => Phase::Propose,
            Message::Suggest(_) => Phase::Suggest,
            Message::ElectShare(_) => Phase::Election,
            Message::ViewChange(_) => Phase::ViewChange,
            Message::Decide(_) => Phase::Decide,
        }
    }

    /// Short stable label such as `send/2` or `view-change`.
    pub fn tag(&self) -> String {
        match self {
            Message::CommitteeShare(_) => "committee-share".into(),
            Message::Send(m) => format!("send/{}", m.pb_id.step),
            Message::Ack(m) => format!("ack/{}", m.pb_id.step),
            Message::Propose(_) => "propose".into(),
            Message::Suggest(_) => "suggest".into(),
            Message::ElectShare(_) => "elect-share".into(),
            Message::ViewChange(_) => "view-change".into(),
            Message::Decide(_) => "decide".into(),
        }
    }

    /// Bytes of signatures and signature/coin shares carried (the K part);
    /// the rest of the encoding is the value-and-framing (L) part.
    pub fn signature_bytes(&self) -> usize {
        let share = |len: usize| 4 + 32 + 4 + len;
        let deliv = |d: &Option<Deliverable>| d.as_ref().map_or(0, |d| d.cert.encoded_len());
        match self {
            Message::CommitteeShare(m) => share(m.share.share_bytes.len()),
            Message::Send(m) => m.proof.signature_len(),
            Message::Ack(m) => share(m.share.share_bytes.len()),
            Message::Propose(m) => m.cert.encoded_len(),
            Message::Suggest(m) => m.cert.encoded_len(),
            Message::ElectShare(m) => share(m.share.share_bytes.len()),
            Message::ViewChange(m) => deliv(&m.commit) + deliv(&m.lock) + deliv(&m.key),
            Message::Decide(m) => {
                m.cert.encoded_len()
                    + m.committee_shares
                        .iter()
                        .chain(&m.elect_shares)
                        .map(|s| share(s.share_bytes.len()))
                        .sum::<usize>()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Digest;
    use proptest::prelude::*;

    fn sig(b: u8) -> ThresholdSignature {
        ThresholdSignature {
            message_digest: Digest([b; 32]),
            sig_bytes: vec![b; 32],
        }
    }

    fn coin(p: PartyId) -> CoinShare {
        CoinShare {
            signer: p,
            tag_digest: Digest([p as u8; 32]),
            share_bytes: vec![7; 32],
        }
    }

    fn samples() -> Vec<Message> {
        let pb_id = PbId {
            instance: 9,
            view: 3,
            proposer: 2,
            step: 2,
        };
        vec![
            Message::CommitteeShare(CommitteeShareMsg {
                view: 1,
                sender: 2,
                share: coin(2),
            }),
            Message::Send(SendMsg {
                pb_id,
                value: b"abc".to_vec(),
                proof: Proof::Previous(sig(1)),
            }),
            Message::Send(SendMsg {
                pb_id: pb_id.with_step(1),
                value: vec![],
                proof: Proof::Step1 {
                    key: Some(crate::pb::KeyProof {
                        view: 2,
                        proposer: 4,
                        cert: sig(3),
                    }),
                },
            }),
            Message::Ack(AckMsg {
                pb_id,
                signer: 4,
                share: SignShare {
                    signer: 4,
                    message_digest: Digest([4; 32]),
                    share_bytes: vec![4; 32],
                },
            }),
            Message::ViewChange(ViewChangeMsg {
                view: 3,
                sender: 1,
                leader: 2,
                commit: None,
                lock: Some(Deliverable {
                    value: b"x".to_vec(),
                    cert: sig(5),
                }),
                key: None,
            }),
            Message::Decide(DecideMsg {
                view: 3,
                leader: 2,
                value: b"x".to_vec(),
                cert: sig(6),
                committee_shares: vec![coin(1), coin(3)],
                elect_shares: vec![coin(2), coin(4)],
            }),
        ]
    }

    #[test]
    fn round_trip_and_metadata() {
        for m in samples() {
            let bytes = m.encode();
            assert_eq!(Message::decode(&bytes).unwrap(), m);
            assert!(m.signature_bytes() <= bytes.len());
        }
        let s = &samples()[1];
        assert_eq!(s.tag(), "send/2");
        assert_eq!(s.view(), 3);
        assert_eq!(s.phase(), Phase::Promotion);
    }

    #[test]
    fn unknown_tag_and_trailing_bytes_rejected() {
        assert_eq!(Message::decode(&[0x99]), Err(DecodeError::UnknownTag(0x99)));
        let mut bytes = samples()[0].encode();
        bytes.push(0);
        assert_eq!(Message::decode(&bytes), Err(DecodeError::TrailingBytes(1)));
        assert!(Message::decode(&[]).is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = Message::decode(&bytes);
        }

        #[test]
        fn encoding_is_injective_on_values(a in proptest::collection::vec(any::<u8>(), 0..32),
                                           b in proptest::collection::vec(any::<u8>(), 0..32)) {
            let mk = |v: Vec<u8>| Message::Propose(ProposeMsg { view: 1, proposer: 1, value: v, cert: sig(0) });
            prop_assert_eq!(mk(a.clone()).encode() == mk(b.clone()).encode(), a == b);
        }
    }
}
