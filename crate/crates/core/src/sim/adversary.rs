//! Byzantine parties as alternative shells around the honest engine.
//!
//! Each shell owns a full [`Engine`] with the party's real keys and rewrites
//! or suppresses what that engine emits. Shells address recipients
//! individually, so they can say different things to different parties.

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, Signer, ThresholdSignature};
use crate::engine::{Engine, EngineEvent, Output, Target};
use crate::message::Message;
use crate::pb::{pb_payload, PbId, Proof, SendMsg};
use crate::{PartyId, View};

/// One raw envelope of a scripted party.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedSend {
    pub to: PartyId,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    /// Emits its view-1 start messages, then nothing.
    Crash,
    /// Never sends.
    Mute,
    /// As a committee member, sends a different valid value to the upper
    /// half of the parties in step 1.
    Equivocate,
    /// When not selected, broadcasts a full four-step SEND sequence anyway.
    RogueBroadcast,
    /// Never ACKs and never sends coin shares.
    WithholdShares,
    /// Sends exactly this list at start, nothing else.
    Scripted(Vec<ScriptedSend>),
}

impl Behavior {
    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Crash => "crash",
            Behavior::Mute => "mute",
            Behavior::Equivocate => "equivocate",
            Behavior::RogueBroadcast => "rogue-broadcast",
            Behavior::WithholdShares => "withhold-shares",
            Behavior::Scripted(_) => "scripted",
        }
    }
}

/// The alternative value an equivocator shows half of the parties.
pub fn equivocation_value(value: &[u8]) -> Vec<u8> {
    let mut v = value.to_vec();
    v.extend_from_slice(b"/alt");
    v
}

pub(crate) struct ByzantineParty {
    behavior: Behavior,
    engine: Engine,
    n: u32,
    instance: u64,
    started: bool,
    rogue_views: Vec<View>,
}

impl ByzantineParty {
    pub fn new(behavior: Behavior, engine: Engine, n: u32, instance: u64) -> Self {
        ByzantineParty {
            behavior,
            engine,
            n,
            instance,
            started: false,
            rogue_views: Vec::new(),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn start(&mut self, signer: &dyn Signer) -> Vec<(PartyId, Vec<u8>)> {
        self.started = true;
        match &self.behavior {
            Behavior::Mute => Vec::new(),
            Behavior::Scripted(list) => list.iter().map(|s| (s.to, s.payload.clone())).collect(),
            _ => {
                let out = self.engine.start();
                self.transform(out, signer)
            }
        }
    }

    pub fn handle(
        &mut self,
        from: PartyId,
        bytes: &[u8],
        signer: &dyn Signer,
    ) -> Vec<(PartyId, Vec<u8>)> {
        match &self.behavior {
            Behavior::Mute | Behavior::Crash | Behavior::Scripted(_) => Vec::new(),
            _ => {
                let out = self.engine.handle(from, bytes);
                self.transform(out, signer)
            }
        }
    }

    fn everyone(&self) -> impl Iterator<Item = PartyId> {
        1..=self.n
    }

    fn expand(&self, to: Target) -> Vec<PartyId> {
        match to {
            Target::All => self.everyone().collect(),
            Target::To(p) => vec![p],
        }
    }

    fn transform(&mut self, out: Output, signer: &dyn Signer) -> Vec<(PartyId, Vec<u8>)> {
        let mut sent = Vec::new();
        for ob in out.messages {
            match (&self.behavior, &ob.msg) {
                (Behavior::WithholdShares, Message::Ack(_))
                | (Behavior::WithholdShares, Message::CommitteeShare(_))
                | (Behavior::WithholdShares, Message::ElectShare(_)) => {}
                (Behavior::Equivocate, Message::Send(m)) if m.pb_id.step == 1 => {
                    let honest = ob.msg.encode();
                    let mut alt = m.clone();
                    alt.value = equivocation_value(&m.value);
                    let alt = Message::Send(alt).encode();
                    let half = self.n / 2;
                    for to in self.expand(ob.to) {
                        let bytes = if to > half {
                            alt.clone()
                        } else {
                            honest.clone()
                        };
                        sent.push((to, bytes));
                    }
                }
                _ => {
                    let bytes = ob.msg.encode();
                    for to in self.expand(ob.to) {
                        sent.push((to, bytes.clone()));
                    }
                }
            }
        }
        if self.behavior == Behavior::RogueBroadcast {
            for e in &out.events {
                if let EngineEvent::CommitteeSelected { view, members } = e {
                    let me = signer.party();
                    if members.binary_search(&me).is_err() && !self.rogue_views.contains(view) {
                        self.rogue_views.push(*view);
                        sent.extend(self.rogue_sends(*view, signer));
                    }
                }
            }
        }
        sent
    }

    /// Step-1 SEND plus steps 2..=4 with forged certificates, to everyone.
    fn rogue_sends(&self, view: View, signer: &dyn Signer) -> Vec<(PartyId, Vec<u8>)> {
        let me = signer.party();
        let value = self.engine.prepare().value.clone();
        let digest = Digest::of(&value);
        let mut sent = Vec::new();
        for step in 1..=4u8 {
            let pb_id = PbId {
                instance: self.instance,
                view,
                proposer: me,
                step,
            };
            let proof = if step == 1 {
                Proof::Step1 { key: None }
            } else {
                // The rogue's own share is the best it can offer.
                let prev = pb_id.with_step(step - 1);
                let share = signer.sign_share(&pb_payload(&prev, &digest));
                Proof::Previous(ThresholdSignature {
                    message_digest: share.message_digest,
                    sig_bytes: share.share_bytes,
                })
            };
            let bytes = Message::Send(SendMsg {
                pb_id,
                value: value.clone(),
                proof,
            })
            .encode();
            for to in self.everyone() {
                sent.push((to, bytes.clone()));
            }
        }
        sent
    }
}
