//! Per-view committee selection.
//!
//! Every party multicasts its coin share for the view's committee tag. The
//! first `f + 1` valid shares from distinct senders determine the committee
//! through the threshold coin, so all honest parties derive the same κ-set
//! regardless of which shares they happened to receive first.

use std::collections::BTreeMap;

use num_rational::Ratio;

use crate::codec::Writer;
use crate::crypto::{CoinShare, Signer, Verifier};
use crate::message::TAG_COIN_LABEL;
use crate::{PartyId, View};

/// The κ parties allowed to broadcast in one view, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Committee {
    pub view: View,
    pub members: Vec<PartyId>,
}

impl Committee {
    pub fn contains(&self, party: PartyId) -> bool {
        self.members.binary_search(&party).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Canonical coin tag `(label, instance, view)`.
pub fn coin_tag(label: &str, instance: u64, view: View) -> Vec<u8> {
    let mut w = Writer::new(TAG_COIN_LABEL);
    w.bytes(label.as_bytes()).u64(instance).u64(view);
    w.finish()
}

pub fn committee_tag(instance: u64, view: View) -> Vec<u8> {
    coin_tag("cs", instance, view)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitteeShareMsg {
    pub view: View,
    pub sender: PartyId,
    pub share: CoinShare,
}

/// This party's contribution to the view's committee coin.
pub fn start_selection(signer: &dyn Signer, instance: u64, view: View) -> CommitteeShareMsg {
    CommitteeShareMsg {
        view,
        sender: signer.party(),
        share: signer.coin_share(&committee_tag(instance, view)),
    }
}

/// Outcome of feeding one share to a [`CommitteeCollector`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ShareOutcome {
    Recorded,
    /// The share completed the quorum and produced the committee.
    Selected(Committee),
    Duplicate,
    Invalid,
    /// Committee already known; share ignored.
    AlreadySelected,
}

/// Collects committee coin shares for one view.
#[derive(Clone, Debug)]
pub struct CommitteeCollector {
    view: View,
    tag: Vec<u8>,
    kappa: u32,
    shares: BTreeMap<PartyId, CoinShare>,
    committee: Option<Committee>,
}

impl CommitteeCollector {
    pub fn new(instance: u64, view: View, kappa: u32) -> Self {
        CommitteeCollector {
            view,
            tag: committee_tag(instance, view),
            kappa,
            shares: BTreeMap::new(),
            committee: None,
        }
    }

    pub fn committee(&self) -> Option<&Committee> {
        self.committee.as_ref()
    }

    /// Shares that determined the committee (exactly `f + 1` once selected).
    pub fn shares(&self) -> Vec<CoinShare> {
        self.shares.values().cloned().collect()
    }

    pub fn on_committee_share(
        &mut self,
        msg: &CommitteeShareMsg,
        verifier: &dyn Verifier,
    ) -> ShareOutcome {
        if self.committee.is_some() {
            return ShareOutcome::AlreadySelected;
        }
        if msg.view != self.view
            || msg.sender != msg.share.signer
            || !verifier.coin_share_verify(&msg.share, &self.tag)
        {
            return ShareOutcome::Invalid;
        }
        if self.shares.contains_key(&msg.sender) {
            return ShareOutcome::Duplicate;
        }
        self.shares.insert(msg.sender, msg.share.clone());
        let p = verifier.params();
        if self.shares.len() < p.coin_threshold() {
            return ShareOutcome::Recorded;
        }
        let shares: Vec<CoinShare> = self.shares.values().cloned().collect();
        let members = verifier
            .coin_toss(&self.tag, &shares, p.n, self.kappa)
            .expect("f + 1 verified shares and κ ≤ n");
        let committee = Committee {
            view: self.view,
            members,
        };
        self.committee = Some(committee.clone());
        ShareOutcome::Selected(committee)
    }
}

/// Recomputes a committee from a share set, e.g. inside a decision proof.
pub fn committee_from_shares(
    verifier: &dyn Verifier,
    instance: u64,
    view: View,
    kappa: u32,
    shares: &[CoinShare],
) -> Option<Committee> {
    let n = verifier.params().n;
    verifier
        .coin_toss(&committee_tag(instance, view), shares, n, kappa)
        .ok()
        .map(|members| Committee { view, members })
}

fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = c * (n as u128 - k as u128 + i) / i;
    }
    c
}

/// Exact probability `C(f, κ) / C(n, κ)` that a uniformly drawn κ-subset of
/// `n` parties contains only the `f` Byzantine ones.
pub fn committee_probability(n: u32, f: u32, kappa: u32) -> Ratio<u128> {
    assert!(kappa <= n, "κ = {kappa} exceeds n = {n}");
    Ratio::new(binomial(f, kappa), binomial(n, kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{deal, CryptoParams};

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(10, 2), 45);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(0, 0), 1);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
        // Symmetry keeps large arguments inside u128.
        assert_eq!(binomial(120, 119), 120);
    }

    #[test]
    fn probability_examples() {
        assert_eq!(committee_probability(4, 1, 2), Ratio::from_integer(0));
        assert_eq!(committee_probability(10, 3, 2), Ratio::new(3, 45));
        assert_eq!(committee_probability(10, 3, 4), Ratio::from_integer(0));
        assert_eq!(committee_probability(10, 3, 0), Ratio::from_integer(1));
    }

    #[test]
    fn start_selection_is_deterministic_and_view_scoped() {
        let km = deal(CryptoParams::new(4, 1, 11).unwrap()).unwrap();
        let s3 = km.secret(3).unwrap();
        let a = start_selection(s3, 5, 1);
        assert_eq!(a.sender, 3);
        assert!(km
            .public()
            .coin_share_verify(&a.share, &committee_tag(5, 1)));
        assert_eq!(a, start_selection(s3, 5, 1));
        assert_ne!(
            a.share.tag_digest,
            start_selection(s3, 5, 2).share.tag_digest
        );
    }

    #[test]
    fn collector_selects_after_f_plus_one_and_dedups() {
        let km = deal(CryptoParams::new(4, 1, 11).unwrap()).unwrap();
        let pk = km.public().as_ref();
        let mut c = CommitteeCollector::new(5, 1, 2);
        let m1 = start_selection(km.secret(1).unwrap(), 5, 1);
        assert_eq!(c.on_committee_share(&m1, pk), ShareOutcome::Recorded);
        assert_eq!(c.on_committee_share(&m1, pk), ShareOutcome::Duplicate);
        assert!(c.committee().is_none());

        let wrong_view = start_selection(km.secret(2).unwrap(), 5, 2);
        assert_eq!(c.on_committee_share(&wrong_view, pk), ShareOutcome::Invalid);
        let mut spoofed = start_selection(km.secret(2).unwrap(), 5, 1);
        spoofed.sender = 3;
        assert_eq!(c.on_committee_share(&spoofed, pk), ShareOutcome::Invalid);

        let m4 = start_selection(km.secret(4).unwrap(), 5, 1);
        let ShareOutcome::Selected(committee) = c.on_committee_share(&m4, pk) else {
            panic!("expected a committee");
        };
        assert_eq!(committee.len(), 2);
        assert!(committee.members.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.shares().len(), 2);
        let m2 = start_selection(km.secret(2).unwrap(), 5, 1);
        assert_eq!(c.on_committee_share(&m2, pk), ShareOutcome::AlreadySelected);
    }

    #[test]
    fn disjoint_share_sets_agree() {
        let km = deal(CryptoParams::new(4, 1, 11).unwrap()).unwrap();
        let pk = km.public().as_ref();
        let mut a = CommitteeCollector::new(5, 3, 2);
        let mut b = CommitteeCollector::new(5, 3, 2);
        for p in [1, 2] {
            a.on_committee_share(&start_selection(km.secret(p).unwrap(), 5, 3), pk);
        }
        for p in [3, 4] {
            b.on_committee_share(&start_selection(km.secret(p).unwrap(), 5, 3), pk);
        }
        assert_eq!(a.committee(), b.committee());
        assert!(a.committee().is_some());
    }
}
