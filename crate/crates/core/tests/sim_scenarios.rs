use evaba::harness::fuzz_script;
use evaba::sim::{
    default_value, equivocation_value, replay, run, AdversaryConfig, Behavior, DelayRule, Outcome,
    SchedulerKind, SimConfig, SimError, Trace,
};
use evaba::PartyId;

fn config(
    n: u32,
    f: u32,
    scheduler: SchedulerKind,
    byz: &[(PartyId, Behavior)],
    seed: u64,
) -> SimConfig {
    let mut c = SimConfig::new(n, f);
    c.key_seed = seed;
    c.adversary = AdversaryConfig {
        scheduler,
        byzantine: byz.iter().cloned().collect(),
        seed,
    };
    c
}

fn honest_values(t: &Trace) -> Vec<Vec<u8>> {
    t.honest
        .iter()
        .map(|&p| {
            t.snapshots[p as usize - 1]
                .decided
                .clone()
                .expect("decided")
                .1
        })
        .collect()
}

fn assert_agreement(t: &Trace) {
    assert!(t.is_clean(), "{:?}", t.violations);
    let values = honest_values(t);
    assert!(values.iter().all(|v| v == &values[0]));
    assert!(values[0].starts_with(b"value-"));
}

fn leader_of_view_one(t: &Trace) -> PartyId {
    let tag = t
        .events
        .iter()
        .find(|e| e.kind == "leader" && e.view == Some(1))
        .and_then(|e| e.tag.clone())
        .expect("a view-1 election");
    tag.split("leader=").nth(1).unwrap().parse().unwrap()
}

#[test]
fn honest_fifo_decides_in_the_first_view() {
    let t = run(&config(4, 1, SchedulerKind::Fifo, &[], 1)).unwrap();
    assert_agreement(&t);
    assert_eq!(t.views_to_decide(), Some(1));
    assert_eq!(t.committees[&1].len(), 2);
    let leader = leader_of_view_one(&t);
    assert!(t.committees[&1].contains(&leader));
    assert_eq!(honest_values(&t)[0], format!("value-{leader}").into_bytes());
    assert_eq!(t.stats.honest_pending_at_end, 0);
}

#[test]
fn crashed_party_does_not_block_the_rest() {
    for seed in 0..10 {
        let t = run(&config(
            4,
            1,
            SchedulerKind::Random,
            &[(4, Behavior::Crash)],
            seed,
        ))
        .unwrap();
        assert_eq!(t.honest, vec![1, 2, 3]);
        assert!(t.decided(), "seed {seed}: {:?}", t.outcome);
        assert_agreement(&t);
    }
}

#[test]
fn too_many_byzantine_parties_is_a_config_error() {
    let c = config(
        7,
        2,
        SchedulerKind::Fifo,
        &[
            (5, Behavior::Mute),
            (6, Behavior::Mute),
            (7, Behavior::Mute),
        ],
        0,
    );
    assert!(matches!(run(&c), Err(SimError::Config(_))));
    let c = config(4, 1, SchedulerKind::Fifo, &[(9, Behavior::Mute)], 0);
    assert!(matches!(run(&c), Err(SimError::Config(_))));
    let mut c = SimConfig::new(4, 1);
    c.kappa = 0;
    assert!(run(&c).is_err());
    assert!(run(&SimConfig::new(5, 1)).is_err());
}

#[test]
fn rogue_broadcasts_are_dropped_as_not_selected() {
    let mut rogue_runs = 0;
    for seed in 0..20 {
        let t = run(&config(
            7,
            2,
            SchedulerKind::Random,
            &[(6, Behavior::RogueBroadcast), (7, Behavior::RogueBroadcast)],
            seed,
        ))
        .unwrap();
        assert!(t.decided());
        assert_agreement(&t);
        if t.stats.rogue_sends == 0 {
            continue;
        }
        rogue_runs += 1;
        assert!(t.stats.not_selected_drops > 0);
        assert!(t
            .events
            .iter()
            .any(|e| e.kind == "drop" && e.reason == Some("not-selected")));
        // No honest party ACKs a SEND whose proposer is outside the committee.
        for e in t.events.iter().filter(|e| e.kind == "send") {
            let tag = e.tag.as_deref().unwrap_or("");
            let from_honest = t.honest.contains(&e.from.unwrap());
            if from_honest && tag.starts_with("ack/") {
                let members = &t.committees[&e.view.unwrap()];
                assert!(members.contains(&e.to.unwrap()), "seed {seed}: {e:?}");
            }
        }
    }
    assert!(rogue_runs > 0);
}

#[test]
fn honest_non_members_never_send_promotion_messages() {
    for seed in 0..10 {
        let t = run(&config(10, 3, SchedulerKind::Random, &[], seed)).unwrap();
        for e in t.events.iter().filter(|e| e.kind == "send") {
            if e.tag.as_deref().is_some_and(|t| t.starts_with("send/")) {
                assert!(t.committees[&e.view.unwrap()].contains(&e.from.unwrap()));
            }
        }
    }
}

#[test]
fn equivocation_does_not_split_decisions() {
    for seed in 0..20 {
        for sched in [SchedulerKind::Random, SchedulerKind::HonestLast] {
            let t = run(&config(
                7,
                2,
                sched,
                &[(1, Behavior::Equivocate), (2, Behavior::Equivocate)],
                seed,
            ))
            .unwrap();
            assert!(t.decided());
            assert_agreement(&t);
            let proposed: Vec<Vec<u8>> = (1..=7)
                .map(default_value)
                .chain(
                    t.byzantine
                        .iter()
                        .map(|&b| equivocation_value(&default_value(b))),
                )
                .collect();
            assert!(proposed.contains(&honest_values(&t)[0]));
        }
    }
}

#[test]
fn withheld_shares_still_allow_a_decision() {
    for seed in 0..10 {
        let t = run(&config(
            7,
            2,
            SchedulerKind::Random,
            &[(3, Behavior::WithholdShares), (5, Behavior::WithholdShares)],
            seed,
        ))
        .unwrap();
        assert!(t.decided(), "seed {seed}: {:?}", t.outcome);
        assert_agreement(&t);
    }
}

#[test]
fn scripted_garbage_is_dropped_as_malformed() {
    let script = fuzz_script(4, 4, 9);
    let t = run(&config(
        4,
        1,
        SchedulerKind::Random,
        &[(4, Behavior::Scripted(script))],
        9,
    ))
    .unwrap();
    assert!(t.decided());
    assert_agreement(&t);
    assert!(t
        .events
        .iter()
        .any(|e| e.kind == "drop" && e.reason == Some("malformed") && e.from == Some(4)));
}

#[test]
fn delaying_the_leaders_last_step_pushes_the_decision_later() {
    let base = run(&config(4, 1, SchedulerKind::Fifo, &[], 3)).unwrap();
    let leader = leader_of_view_one(&base);
    let rule = DelayRule {
        from: Some(leader),
        to: None,
        tag_prefix: Some("send/4".into()),
    };
    let sched = SchedulerKind::TargetDelay(vec![rule]);
    let t = run(&config(4, 1, sched.clone(), &[], 3)).unwrap();
    assert_eq!(leader_of_view_one(&t), leader);
    assert_agreement(&t);
    let view = t.views_to_decide().unwrap();
    assert!(view >= 2, "decided in view {view}");

    let mut capped = config(4, 1, sched, &[], 3);
    capped.max_views = 1;
    let t = run(&capped).unwrap();
    assert_eq!(t.outcome, Outcome::MaxViewsExceeded);
    assert!(t.is_clean());
    assert!(t.events.iter().any(|e| e.kind == "max-views"));
    assert!(!t.to_jsonl().is_empty());
}

#[test]
fn trace_lines_have_a_fixed_field_order() {
    let t = run(&config(4, 1, SchedulerKind::Fifo, &[], 1)).unwrap();
    let text = String::from_utf8(t.to_jsonl()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), t.events.len() + 1);
    let keys = [
        "\"tick\"",
        "\"kind\"",
        "\"from\"",
        "\"to\"",
        "\"tag\"",
        "\"view\"",
        "\"reason\"",
    ];
    for line in &lines[..lines.len() - 1] {
        let pos: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
    }
    let summary: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
    assert_eq!(summary["kind"], "summary");
    assert_eq!(summary["outcome"]["status"], "decided");
    assert_eq!(summary["parties"].as_array().unwrap().len(), 4);
    assert_eq!(summary["schedule_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn runs_are_reproducible_and_replayable() {
    let byz = [(7, Behavior::Equivocate), (2, Behavior::RogueBroadcast)];
    let c = config(7, 2, SchedulerKind::Random, &byz, 42);
    let a = run(&c).unwrap();
    let b = run(&c).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    let r = replay(&c, &a.schedule).unwrap();
    assert_eq!(r.schedule, a.schedule);
    assert_eq!(r.events, a.events);
    assert_eq!(r.outcome, a.outcome);

    let other = run(&config(7, 2, SchedulerKind::Random, &byz, 43)).unwrap();
    assert_ne!(other.schedule, a.schedule);
}

#[test]
fn larger_committees_still_decide() {
    for kappa in [1, 4, 10] {
        let mut c = config(10, 3, SchedulerKind::Random, &[(10, Behavior::Mute)], 5);
        c.kappa = kappa;
        let t = run(&c).unwrap();
        assert!(t.decided(), "kappa {kappa}: {:?}", t.outcome);
        assert_agreement(&t);
        assert_eq!(t.committees[&1].len(), kappa as usize);
    }
}
