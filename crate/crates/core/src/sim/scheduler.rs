//! Delivery-order policies.
//!
//! Pending envelopes live in two queues. The scheduler decides which queue a
//! new envelope joins; the deferred queue is only served when the priority
//! queue is empty. Every policy therefore delivers everything eventually.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::PartyId;

use super::Envelope;

/// Matches envelopes for [`SchedulerKind::TargetDelay`]. Absent fields match
/// anything; `tag_prefix` is compared with the message tag (e.g. `send/4`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRule {
    pub from: Option<PartyId>,
    pub to: Option<PartyId>,
    pub tag_prefix: Option<String>,
}

impl DelayRule {
    pub fn pair(from: PartyId, to: PartyId) -> Self {
        DelayRule {
            from: Some(from),
            to: Some(to),
            tag_prefix: None,
        }
    }

    pub fn matches(&self, env: &Envelope, tag: &str) -> bool {
        self.from.is_none_or(|f| f == env.from)
            && self.to.is_none_or(|t| t == env.to)
            && self
                .tag_prefix
                .as_deref()
                .is_none_or(|p| tag.starts_with(p))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    /// Global send order.
    Fifo,
    /// Uniformly random pending envelope.
    Random,
    /// Random order, but envelopes from honest parties wait until nothing
    /// from a Byzantine party is pending.
    HonestLast,
    /// Random order, matching envelopes held back as long as possible.
    TargetDelay(Vec<DelayRule>),
    /// Delivers exactly the given sequence numbers in order.
    Replay(Vec<u64>),
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::Random => "random",
            SchedulerKind::HonestLast => "honest-last",
            SchedulerKind::TargetDelay(_) => "target-delay",
            SchedulerKind::Replay(_) => "replay",
        }
    }
}

pub(crate) struct Pending {
    kind: SchedulerKind,
    envelopes: BTreeMap<u64, Envelope>,
    priority: VecDeque<u64>,
    deferred: VecDeque<u64>,
    replay_pos: usize,
}

impl Pending {
    pub fn new(kind: SchedulerKind) -> Self {
        Pending {
            kind,
            envelopes: BTreeMap::new(),
            priority: VecDeque::new(),
            deferred: VecDeque::new(),
            replay_pos: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.envelopes.len()
    }

    pub fn envelopes(&self) -> impl Iterator<Item = &Envelope> {
        self.envelopes.values()
    }

    pub fn push(&mut self, env: Envelope, tag: &str, from_honest: bool) {
        let defer = match &self.kind {
            SchedulerKind::HonestLast => from_honest,
            SchedulerKind::TargetDelay(rules) => rules.iter().any(|r| r.matches(&env, tag)),
            _ => false,
        };
        if defer {
            self.deferred.push_back(env.seq);
        } else {
            self.priority.push_back(env.seq);
        }
        self.envelopes.insert(env.seq, env);
    }

    pub fn pop(&mut self, rng: &mut ChaCha8Rng) -> Option<Envelope> {
        let seq = match &self.kind {
            SchedulerKind::Replay(schedule) => {
                let seq = *schedule.get(self.replay_pos)?;
                self.replay_pos += 1;
                seq
            }
            SchedulerKind::Fifo => self
                .priority
                .pop_front()
                .or_else(|| self.deferred.pop_front())?,
            _ => {
                let queue = if self.priority.is_empty() {
                    &mut self.deferred
                } else {
                    &mut self.priority
                };
                if queue.is_empty() {
                    return None;
                }
                let i = rng.random_range(0..queue.len());
                queue.swap_remove_back(i)?
            }
        };
        self.envelopes.remove(&seq)
    }
}
