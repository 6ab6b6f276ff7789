//! White-box assertions over a finished run.
//!
//! A certificate counts as constructible when the honest parties that
//! signed it plus every Byzantine party reach the signing threshold. That is
//! the most an adversary could assemble, whether or not anyone did.

use std::collections::{BTreeMap, BTreeSet};

use crate::committee::Committee;
use crate::crypto::Digest;
use crate::engine::{PartyState, Validity};
use crate::pb::{pb_payload, PbId};
use crate::promotion::Deliverable;
use crate::{PartyId, View};

use super::Observations;

/// Reads one recorded deliverable of a promotion from a party's state.
type Slot = fn(&PartyState, View, PartyId) -> Option<&Deliverable>;

pub(crate) struct Context<'a> {
    pub n: u32,
    pub f: u32,
    pub byzantine: u32,
    pub honest: &'a [PartyId],
    pub snapshots: &'a [PartyState],
    pub committees: &'a BTreeMap<View, Committee>,
    pub validity: &'a Validity,
    pub fifo: bool,
    pub obs: &'a Observations,
}

impl Context<'_> {
    fn honest_states(&self) -> impl Iterator<Item = &PartyState> {
        self.honest.iter().map(|&p| &self.snapshots[p as usize - 1])
    }

    fn constructible(&self) -> impl Iterator<Item = (&PbId, &Digest, usize)> {
        let need = (self.n - self.f) as usize;
        self.obs.acks.iter().filter_map(move |((id, d), signers)| {
            (signers.len() + self.byzantine as usize >= need).then_some((id, d, signers.len()))
        })
    }
}

fn matches(id: &PbId, payload: &Digest, d: Option<&Deliverable>) -> bool {
    d.is_some_and(|d| Digest::of(&pb_payload(id, &Digest::of(&d.value))) == *payload)
}

/// How many certifiable step-2 and step-3 certificates the coverage checks
/// examined.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Examined {
    pub keys: u64,
    pub locks: u64,
}

pub(crate) fn evaluate(ctx: &Context<'_>) -> (Vec<String>, Examined) {
    let mut v = Vec::new();
    agreement_and_validity(ctx, &mut v);
    integrity(ctx, &mut v);
    let examined = certificates(ctx, &mut v);
    deliverables(ctx, &mut v);
    (v, examined)
}

fn agreement_and_validity(ctx: &Context<'_>, v: &mut Vec<String>) {
    let decided: Vec<(PartyId, View, &Vec<u8>)> = ctx
        .honest_states()
        .filter_map(|s| s.decided.as_ref().map(|(w, val)| (s.me, *w, val)))
        .collect();
    if let Some((p0, _, first)) = decided.first() {
        for (p, _, val) in &decided[1..] {
            if val != first {
                v.push(format!(
                    "agreement: parties {p0} and {p} decided different values"
                ));
            }
        }
    }
    for (p, view, val) in &decided {
        if !(ctx.validity)(val) {
            v.push(format!("validity: party {p} decided an invalid value"));
        }
        let d = Digest::of(val);
        if !ctx.obs.step1.iter().any(|(_, _, sd)| *sd == d) {
            v.push(format!(
                "validity: value decided by party {p} in view {view} was never promoted by a committee member"
            ));
        }
    }
    // Later views may only certify the decided value.
    if let Some(&(_, w, val)) = decided.iter().min_by_key(|(_, w, _)| *w) {
        let d = Digest::of(val);
        for (id, payload, _) in ctx.constructible() {
            if id.step == 1 && id.view > w && Digest::of(&pb_payload(id, &d)) != *payload {
                v.push(format!(
                    "safety: {id} certifies a value other than the one decided in view {w}"
                ));
            }
        }
    }
}

fn integrity(ctx: &Context<'_>, v: &mut Vec<String>) {
    for (p, id) in &ctx.obs.double_acks {
        v.push(format!("integrity: party {p} ACKed {id} twice"));
    }
    for (id, _, _) in ctx.constructible() {
        let member = ctx
            .committees
            .get(&id.view)
            .is_some_and(|c| c.contains(id.proposer));
        if !member {
            v.push(format!(
                "selected: {id} is certifiable but its proposer is not in the committee"
            ));
        }
    }
}

fn certificates(ctx: &Context<'_>, v: &mut Vec<String>) -> Examined {
    let mut examined = Examined::default();
    let mut per_id: BTreeMap<PbId, BTreeSet<Digest>> = BTreeMap::new();
    for (id, payload, _) in ctx.constructible() {
        per_id.entry(*id).or_default().insert(*payload);
    }
    for (id, payloads) in &per_id {
        if payloads.len() > 1 {
            v.push(format!(
                "uniqueness: {id} has {} certifiable values",
                payloads.len()
            ));
        }
    }

    let lock_need = (ctx.n - 2 * ctx.f) as usize;
    let key_need = (ctx.f + 1) as usize;
    for (id, payload, _) in ctx.constructible() {
        let (need, what, pick): (usize, &str, Slot) = match id.step {
            2 => (key_need, "key", |s, w, p| s.promotions.get_prepare(w, p)),
            3 => (lock_need, "lock", |s, w, p| s.promotions.get_lock(w, p)),
            _ => continue,
        };
        if id.step == 2 {
            examined.keys += 1;
        } else {
            examined.locks += 1;
        }
        let holders = ctx
            .honest_states()
            .filter(|s| matches(id, payload, pick(s, id.view, id.proposer)))
            .count();
        if holders < need {
            v.push(format!(
                "{what} coverage: certifiable {id} but only {holders} honest holders (need {need})"
            ));
        }
    }
    examined
}

fn deliverables(ctx: &Context<'_>, v: &mut Vec<String>) {
    let mut values: BTreeMap<(View, PartyId), BTreeSet<&[u8]>> = BTreeMap::new();
    for s in ctx.honest_states() {
        for (&key, st) in s.promotions.iter() {
            let slot = values.entry(key).or_default();
            for d in [&st.prepare, &st.lock, &st.commit].into_iter().flatten() {
                slot.insert(&d.value);
            }
            if ctx.fifo && !st.is_nested() {
                v.push(format!(
                    "nesting: party {} holds a non-nested record for view {} proposer {}",
                    s.me, key.0, key.1
                ));
            }
        }
    }
    for ((w, p), vals) in values {
        if vals.len() > 1 {
            v.push(format!(
                "consistency: honest records for view {w} proposer {p} disagree on the value"
            ));
        }
    }
}
