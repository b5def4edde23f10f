use ddnfs_sim::{assert_scenario, quorum_policy, run, Behavior, ConfigError, Predicate, Sim, SimConfig};
use proptest::prelude::*;

fn honest(peers: usize, quorum: usize) -> SimConfig {
    let mut cfg = SimConfig {
        peers,
        policy: Some(quorum_policy(peers, quorum)),
        ..SimConfig::default()
    };
    cfg.inject(0, 0, "/docs/a", b"hello");
    cfg
}

#[test]
fn single_peer_activates_immediately_without_traffic() {
    let mut cfg = SimConfig {
        peers: 1,
        ..SimConfig::default()
    };
    cfg.inject(0, 0, "/solo", b"x");
    let m = run(&cfg).unwrap();
    assert_eq!(m.total_messages(), 0);
    assert_eq!(m.document("/solo@1").unwrap().rounds_to_active, Some(0));
    assert_eq!(m.min_coverage(), 1.0);
}

#[test]
fn eight_honest_peers_reach_full_coverage() {
    let m = run(&honest(8, 5)).unwrap();
    assert_eq!(m.min_coverage(), 1.0);
    assert!(m.max_rounds_to_active().unwrap() <= 10);
    assert_eq!(m.verification_failures, 0);
    assert!(m.detections.is_empty());
}

#[test]
fn same_seed_same_trace() {
    let cfg = SimConfig {
        delivery: 0.8,
        ..honest(8, 5)
    };
    let mut a = Sim::new(cfg.clone()).unwrap().with_trace();
    let mut b = Sim::new(cfg.clone()).unwrap().with_trace();
    let (ma, mb) = (a.run_to_end(), b.run_to_end());
    assert_eq!(a.trace(), b.trace());
    assert!(!a.trace().is_empty());
    assert_eq!(ma, mb);

    let other = run(&SimConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(other.trace_digest, ma.trace_digest);
}

#[test]
fn partition_heals() {
    let text = "peers = 6\nquorum = 4\nmax_rounds = 60\npartition P1 P2 P3 = 0..15\nat 1 inject P1 /p/a x\nexpect coverage >= 1.0\n";
    let cfg = SimConfig::parse(text).unwrap();
    let outcome = assert_scenario(&cfg, &cfg.expectations).unwrap();
    assert!(outcome.passed(), "{}", outcome.report());
    assert!(outcome.metrics.document("/p/a@1").unwrap().rounds_to_active.unwrap() >= 14);
}

#[test]
fn offline_peer_without_reconcile_misses_old_documents() {
    // No reconcile step: campaigns go dormant before P4 returns.
    let text = "peers = 4\nquorum = 3\nmax_rounds = 40\noffline P4 = 0..30\nat 0 inject P1 /x a\n";
    let m = run(&SimConfig::parse(text).unwrap()).unwrap();
    assert!(m.min_coverage() < 1.0);
}

#[test]
fn shipped_scenarios_pass() {
    for (name, text) in [
        ("consistency", include_str!("../scenarios/consistency.scn")),
        ("silent_drop", include_str!("../scenarios/silent_drop.scn")),
        ("equivocation", include_str!("../scenarios/equivocation.scn")),
        ("strip", include_str!("../scenarios/strip.scn")),
        ("strip_baseline", include_str!("../scenarios/strip_baseline.scn")),
        ("stale_read", include_str!("../scenarios/stale_read.scn")),
        ("catch_up", include_str!("../scenarios/catch_up.scn")),
    ] {
        let cfg = SimConfig::parse(text).unwrap();
        assert!(!cfg.expectations.is_empty(), "{name}");
        let outcome = assert_scenario(&cfg, &cfg.expectations).unwrap();
        assert!(outcome.passed(), "{name}: {}", outcome.report());
    }
}

#[test]
fn failing_expectation_is_reported() {
    let cfg = honest(4, 3);
    let outcome = assert_scenario(&cfg, &[Predicate::MessagesAtMost(1), Predicate::FetchNewest]).unwrap();
    assert_eq!(outcome.failures.len(), 2);
    assert!(outcome.report().starts_with("fail: messages <= 1"));
}

#[test]
fn scenario_parsing() {
    let cfg = SimConfig::parse(
        "peers = 5\nadmins = 1\nseed = 9\nlatency = 5..20\nadversary P2 = flood 7 3\nlink P1 P3 = 0.5\n\
         at 2 fetch P4 /a 3 1\nat 4 reconcile P5 P1\nat 1 inject A1 /peerlist body\n",
    )
    .unwrap();
    assert_eq!((cfg.peers, cfg.admins, cfg.seed, cfg.latency_ms), (5, 1, 9, (5, 20)));
    assert_eq!(cfg.behavior(1), Behavior::Flood { per_round: 7, rounds: 3 });
    assert!(!cfg.is_correct(1));
    assert_eq!(cfg.link_delivery[&(0, 2)], 0.5);
    assert_eq!(cfg.workload.len(), 3);

    for (bad, line) in [
        ("peers = x\n", 1),
        ("peers = 3\nadversary P1 = sneaky\n", 2),
        ("peers = 3\nexpect nonsense\n", 2),
        ("peers = 3\n\nat 0 teleport P1\n", 3),
    ] {
        match SimConfig::parse(bad) {
            Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{bad:?}"),
            other => panic!("{bad:?} gave {other:?}"),
        }
    }
    assert!(matches!(SimConfig::parse("quorum = 2\npolicy = x\n"), Err(ConfigError::Invalid(_))));
    assert!(matches!(SimConfig::parse("peers = 3\nat 0 inject P9 /a x\n"), Err(ConfigError::Invalid(_))));
    assert!(matches!(
        SimConfig::parse("peers = 2\ndelivery = 1.5\n").and_then(|c| c.validate().map(|_| c)),
        Err(ConfigError::Invalid(_))
    ));
}

fn predicate() -> impl Strategy<Value = Predicate> {
    prop_oneof![
        (0u32..=100).prop_map(|p| Predicate::CoverageAtLeast(f64::from(p) / 100.0)),
        any::<u64>().prop_map(Predicate::DetectionWithin),
        (0usize..64).prop_map(Predicate::AllBlacklist),
        Just(Predicate::NoCorrectBlacklisted),
        any::<u64>().prop_map(Predicate::MessagesAtMost),
        any::<u64>().prop_map(Predicate::RoundsToActiveAtMost),
        Just(Predicate::FetchNewest),
        Just(Predicate::Safe),
        any::<u64>().prop_map(Predicate::VerificationFailuresAtMost),
        any::<u64>().prop_map(Predicate::AcceptsPerWindowAtMost),
    ]
}

proptest! {
    #[test]
    fn predicate_text_round_trips(p in predicate()) {
        prop_assert_eq!(p.to_string().parse::<Predicate>(), Ok(p));
    }

    #[test]
    fn coverage_is_full_on_reliable_honest_networks(peers in 2usize..10, seed in any::<u64>()) {
        let mut cfg = honest(peers, peers / 2 + 1);
        cfg.seed = seed;
        let m = run(&cfg).unwrap();
        prop_assert_eq!(m.min_coverage(), 1.0);
        prop_assert_eq!(m.unsafe_activations, 0);
    }
}
