use std::collections::BTreeMap;

use evaba::crypto::{deal, CryptoParams, Digest, KeyMaterial, ThresholdSignature};
use evaba::pb::{
    ex_pb_val, pb_payload, AckOutcome, DropReason, ExternalValidity, KeyProof, PbId, PbReceiver,
    PbSender, Proof, SendMsg,
};
use evaba::promotion::{PromoteProgress, PromoteStatus, Promoter, PromotionStore};
use evaba::{Committee, PartyId, Verifier, View};

fn keys() -> KeyMaterial {
    deal(CryptoParams::new(4, 1, 3).unwrap()).unwrap()
}

fn any_value(_: &[u8]) -> bool {
    true
}

fn ctx<'a>(
    k: &'a KeyMaterial,
    lock: View,
    leaders: &'a BTreeMap<View, PartyId>,
) -> ExternalValidity<'a> {
    ExternalValidity {
        verifier: k.public().as_ref(),
        valid: &any_value,
        lock,
        leaders,
    }
}

fn id(view: View, proposer: PartyId, step: u8) -> PbId {
    PbId {
        instance: 0,
        view,
        proposer,
        step,
    }
}

fn cert(k: &KeyMaterial, pb: PbId, value: &[u8]) -> ThresholdSignature {
    let payload = pb_payload(&pb, &Digest::of(value));
    let shares: Vec<_> = [1, 2, 4]
        .iter()
        .map(|&p| evaba::Signer::sign_share(k.secret(p).unwrap(), &payload))
        .collect();
    k.public().combine(&shares, &payload).unwrap()
}

#[test]
fn honest_promotion_completes_after_four_broadcasts() {
    let k = keys();
    let committee = Committee {
        view: 1,
        members: vec![2, 3],
    };
    let leaders = BTreeMap::new();
    let mut receivers: Vec<PbReceiver> = (0..4).map(|_| PbReceiver::new()).collect();
    let mut stores: Vec<PromotionStore> = (0..4).map(|_| PromotionStore::new()).collect();
    let (mut promoter, mut send) = Promoter::promote(0, 1, 2, b"v".to_vec(), None);
    let mut broadcasts = 1;
    let result = loop {
        let mut progress = PromoteProgress::Pending;
        for p in 1..=4u32 {
            if let Proof::Previous(carried) = &send.proof {
                stores[p as usize - 1].on_delivery(&send.pb_id, &send.value, carried);
            }
            let ack = receivers[p as usize - 1]
                .on_send(
                    &send,
                    &committee,
                    &ctx(&k, 0, &leaders),
                    k.secret(p).unwrap(),
                )
                .unwrap();
            let out = promoter.on_ack(p, &ack, k.public().as_ref());
            if !matches!(
                out,
                PromoteProgress::Pending | PromoteProgress::Ignored(DropReason::Stale)
            ) {
                progress = out;
            }
        }
        match progress {
            PromoteProgress::NextStep(next) => {
                assert_eq!(next.pb_id.step, send.pb_id.step + 1);
                send = next;
                broadcasts += 1;
            }
            PromoteProgress::Complete(r) => break r,
            other => panic!("unexpected {other:?}"),
        }
    };
    assert_eq!(broadcasts, 4);
    assert_eq!(promoter.status(), PromoteStatus::Complete);
    assert_eq!(promoter.completed_steps(), 4);
    assert!(k
        .public()
        .threshold_validate(&result.cert, &pb_payload(&id(1, 2, 4), &Digest::of(b"v"))));
    for s in &stores {
        let st = s.get(1, 2).unwrap();
        assert!(st.prepare.is_some() && st.lock.is_some() && st.commit.is_some());
        assert!(st.is_nested());
        assert!(k.public().threshold_validate(
            &st.commit.as_ref().unwrap().cert,
            &pb_payload(&id(1, 2, 3), &Digest::of(b"v"))
        ));
    }
}

#[test]
fn abandoned_promotion_keeps_what_it_delivered() {
    let k = keys();
    let committee = Committee {
        view: 1,
        members: vec![2, 3],
    };
    let leaders = BTreeMap::new();
    let mut rx = PbReceiver::new();
    let mut store = PromotionStore::new();
    let step2 = SendMsg {
        pb_id: id(1, 2, 2),
        value: b"v".to_vec(),
        proof: Proof::Previous(cert(&k, id(1, 2, 1), b"v")),
    };
    let Proof::Previous(carried) = &step2.proof else {
        unreachable!()
    };
    assert!(rx
        .on_send(
            &step2,
            &committee,
            &ctx(&k, 0, &leaders),
            k.secret(1).unwrap()
        )
        .is_ok());
    store.on_delivery(&step2.pb_id, &step2.value, carried);
    assert!(rx.pb_abandon(1, 2));
    assert!(!rx.pb_abandon(1, 2));
    let step3 = SendMsg {
        pb_id: id(1, 2, 3),
        value: b"v".to_vec(),
        proof: Proof::Previous(cert(&k, id(1, 2, 2), b"v")),
    };
    assert_eq!(
        rx.on_send(
            &step3,
            &committee,
            &ctx(&k, 0, &leaders),
            k.secret(1).unwrap()
        ),
        Err(DropReason::Abandoned)
    );
    assert!(store.get_prepare(1, 2).is_some());
    assert!(store.get_lock(1, 2).is_none());

    let (mut promoter, _) = Promoter::promote(0, 1, 2, b"v".to_vec(), None);
    assert!(promoter.abandon());
    assert_eq!(promoter.status(), PromoteStatus::Abandoned);
    assert_eq!(promoter.completed_steps(), 0);
}

#[test]
fn step_one_key_against_receiver_lock() {
    let k = keys();
    let committee = Committee {
        view: 2,
        members: vec![1, 4],
    };
    let mut leaders = BTreeMap::new();
    leaders.insert(1, 3);
    let key = KeyProof {
        view: 1,
        proposer: 3,
        cert: cert(&k, id(1, 3, 1), b"v"),
    };
    let send = SendMsg {
        pb_id: id(2, 4, 1),
        value: b"v".to_vec(),
        proof: Proof::Step1 {
            key: Some(key.clone()),
        },
    };
    assert!(ex_pb_val(&send, &ctx(&k, 0, &leaders)));
    assert!(ex_pb_val(&send, &ctx(&k, 1, &leaders)));
    assert!(!ex_pb_val(&send, &ctx(&k, 2, &leaders)));

    // The key must be the elected leader's and carry the same value.
    let mut other = leaders.clone();
    other.insert(1, 2);
    assert!(!ex_pb_val(&send, &ctx(&k, 0, &other)));
    let mut wrong_value = send.clone();
    wrong_value.value = b"w".to_vec();
    assert!(!ex_pb_val(&wrong_value, &ctx(&k, 0, &leaders)));

    // A genesis key only helps parties without a lock.
    let genesis = SendMsg {
        pb_id: id(2, 4, 1),
        value: b"v".to_vec(),
        proof: Proof::Step1 { key: None },
    };
    assert!(ex_pb_val(&genesis, &ctx(&k, 0, &leaders)));
    assert!(!ex_pb_val(&genesis, &ctx(&k, 1, &leaders)));

    let mut rx = PbReceiver::new();
    assert!(rx
        .on_send(
            &send,
            &committee,
            &ctx(&k, 1, &leaders),
            k.secret(2).unwrap()
        )
        .is_ok());
    assert_eq!(
        rx.on_send(
            &send,
            &committee,
            &ctx(&k, 1, &leaders),
            k.secret(2).unwrap()
        ),
        Err(DropReason::Duplicate)
    );
}

#[test]
fn non_members_get_no_ack_before_any_crypto() {
    let k = keys();
    let committee = Committee {
        view: 1,
        members: vec![1, 4],
    };
    let leaders = BTreeMap::new();
    // The proof is garbage: membership is judged first.
    let send = SendMsg {
        pb_id: id(1, 2, 3),
        value: b"v".to_vec(),
        proof: Proof::Step1 { key: None },
    };
    let mut rx = PbReceiver::new();
    assert_eq!(
        rx.on_send(
            &send,
            &committee,
            &ctx(&k, 0, &leaders),
            k.secret(1).unwrap()
        ),
        Err(DropReason::NotSelected)
    );
    assert!(!rx.has_acked(&send.pb_id));
    let mut wrong_view = send.clone();
    wrong_view.pb_id = id(2, 1, 1);
    assert_eq!(
        rx.on_send(
            &wrong_view,
            &committee,
            &ctx(&k, 0, &leaders),
            k.secret(1).unwrap()
        ),
        Err(DropReason::NotSelected)
    );
}

#[test]
fn equivocating_sender_certifies_at_most_one_value() {
    // Every way of showing value a first to some receivers and b first to
    // the rest. Each receiver ACKs whichever arrives first.
    let k = keys();
    let committee = Committee {
        view: 1,
        members: vec![4],
    };
    let leaders = BTreeMap::new();
    for mask in 0u32..16 {
        let (mut sa, a) =
            PbSender::pb_broadcast(id(1, 4, 1), b"a".to_vec(), Proof::Step1 { key: None });
        let (mut sb, b) =
            PbSender::pb_broadcast(id(1, 4, 1), b"b".to_vec(), Proof::Step1 { key: None });
        let mut complete = 0;
        for p in 1..=4u32 {
            let mut rx = PbReceiver::new();
            let (first, second) = if mask & (1 << (p - 1)) != 0 {
                (&a, &b)
            } else {
                (&b, &a)
            };
            let signer = k.secret(p).unwrap();
            let ack = rx
                .on_send(first, &committee, &ctx(&k, 0, &leaders), signer)
                .unwrap();
            assert_eq!(
                rx.on_send(second, &committee, &ctx(&k, 0, &leaders), signer),
                Err(DropReason::Duplicate)
            );
            let target = if first.value == b"a" {
                &mut sa
            } else {
                &mut sb
            };
            if let AckOutcome::Complete(_) = target.on_ack(p, &ack, k.public().as_ref()) {
                complete += 1;
            }
            // The share does not transfer to the other value.
            let other = if first.value == b"a" {
                &mut sb
            } else {
                &mut sa
            };
            assert!(matches!(
                other.on_ack(p, &ack, k.public().as_ref()),
                AckOutcome::Ignored(DropReason::InvalidShare | DropReason::Stale)
            ));
        }
        let shown_a = mask.count_ones();
        assert_eq!(complete, u32::from(shown_a >= 3 || shown_a <= 1));
    }
}

#[test]
fn sender_rejects_bad_acks() {
    let k = keys();
    let committee = Committee {
        view: 1,
        members: vec![2],
    };
    let leaders = BTreeMap::new();
    let (mut sender, send) =
        PbSender::pb_broadcast(id(1, 2, 1), b"v".to_vec(), Proof::Step1 { key: None });
    let ack = PbReceiver::new()
        .on_send(
            &send,
            &committee,
            &ctx(&k, 0, &leaders),
            k.secret(1).unwrap(),
        )
        .unwrap();
    assert_eq!(
        sender.on_ack(3, &ack, k.public().as_ref()),
        AckOutcome::Ignored(DropReason::WrongSender)
    );
    assert_eq!(
        sender.on_ack(1, &ack, k.public().as_ref()),
        AckOutcome::Recorded
    );
    assert_eq!(
        sender.on_ack(1, &ack, k.public().as_ref()),
        AckOutcome::Ignored(DropReason::Duplicate)
    );
    sender.abandon();
    assert!(sender.is_abandoned());
    assert_eq!(
        sender.on_ack(1, &ack, k.public().as_ref()),
        AckOutcome::Ignored(DropReason::Abandoned)
    );
}
