use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgesched::config::{ClusterDefinition, RunConfig};
use edgesched::experiment::make_policy;
use edgesched::model::{ClusterState, Location, PodId};
use edgesched::objective::{f_transform, fragmentation, migration_count, qos_total, QosConstants};
use edgesched::oracle::{brute_force_match, exact_allocate, heuristic_qos, random_instance, MAX_ALLOCATE_PODS};
use edgesched::scheduler::{immediate_schedule, make_decision, match_pods, reorder_edge, suggest, SchedulerConfig};
use edgesched::sim::simulate;
use edgesched::workload::Scenario;

fn instance(seed: u64, max_existing: usize, max_new: usize) -> (ClusterState, Vec<PodId>) {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), max_existing, max_new)
}

fn all_cloud(state: &ClusterState, pods: &[PodId]) -> ClusterState {
    let moves: Vec<_> = pods.iter().map(|p| (*p, Location::OnCloud)).collect();
    state.apply_allocation_delta(&moves).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn match_agrees_with_brute_force(seed in any::<u64>()) {
        let (state, new) = instance(seed, 3, 6);
        let dp = match_pods(&state, &new);
        let bf = brute_force_match(&state, &new).unwrap();
        prop_assert_eq!(dp.placed(), bf.placed());
        prop_assert!((dp.achieved_fragmentation - bf.achieved_fragmentation).abs() <= 1e-9);
    }

    #[test]
    fn matched_targets_respect_capacity(seed in any::<u64>()) {
        let (state, new) = instance(seed, 3, 6);
        let m = match_pods(&state, &new);
        let moves: Vec<_> = m.targets.into_iter().collect();
        let after = state.apply_allocation_delta(&moves).unwrap();
        prop_assert!(after.validate().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn f_transform_is_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let c = QosConstants::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(f_transform(lo, &c) <= f_transform(hi, &c));
    }

    #[test]
    fn migration_count_is_symmetric(seed in any::<u64>()) {
        let (state, _) = instance(seed, 4, 0);
        let pods: Vec<PodId> = state.pods().map(|p| p.id).collect();
        let moved = all_cloud(&state, &pods);
        let none = BTreeSet::new();
        let there = migration_count(&state, &moved, &none).unwrap();
        prop_assert_eq!(there, migration_count(&moved, &state, &none).unwrap());
        let on_edge = state.pods().filter(|p| p.location.is_edge()).count() as u64;
        prop_assert_eq!(there, on_edge);
    }

    #[test]
    fn fragmentation_is_bounded(seed in any::<u64>()) {
        let (state, _) = instance(seed, 6, 0);
        let f = fragmentation(&state);
        prop_assert!(f >= 0.0 && f <= state.edge_nodes().len() as f64 + 1e-12);
    }

    #[test]
    fn decision_never_loses_to_all_cloud(seed in any::<u64>(), migrate in any::<bool>()) {
        let (state, new) = instance(seed, 4, 5);
        let c = QosConstants::default();
        let cfg = SchedulerConfig::default();
        let d = make_decision(&state, &new, migrate, &cfg, &c);
        prop_assert!(d.check(&new).is_ok());
        let baseline = qos_total(&all_cloud(&state, &new), &c);
        prop_assert!(heuristic_qos(&state, &new, &c) >= baseline - 1e-9 * baseline.abs().max(1.0));
    }

    #[test]
    fn immediate_schedule_never_migrates(seed in any::<u64>()) {
        let (state, new) = instance(seed, 4, 6);
        let d = immediate_schedule(&state, &new, &SchedulerConfig::default(), &QosConstants::default());
        prop_assert!(d.migrations.is_empty());
        let placed: BTreeSet<PodId> = d.to_edge.iter().chain(&d.to_cloud).copied().collect();
        prop_assert_eq!(placed, new.iter().copied().collect::<BTreeSet<_>>());
    }

    #[test]
    fn heuristic_never_beats_exact(seed in any::<u64>()) {
        let (state, new) = instance(seed, 2, 4);
        prop_assume!(state.pod_count() <= MAX_ALLOCATE_PODS);
        let c = QosConstants::default();
        let exact = exact_allocate(&state, &new, &c).unwrap();
        let h = heuristic_qos(&state, &new, &c);
        prop_assert!(h <= exact.qos + 1e-9 * exact.qos.abs().max(1.0));
    }

    #[test]
    fn limits_are_respected(seed in any::<u64>(), m_c2e in 0u32..4, m_er in 0u32..3) {
        let (state, _) = instance(seed, 6, 0);
        // Push half the pods to the cloud so suggest has candidates.
        let half: Vec<PodId> = state.pods().map(|p| p.id).step_by(2).collect();
        let state = all_cloud(&state, &half);
        let cfg = SchedulerConfig { m_c2e, m_er, ..SchedulerConfig::default() };
        let c = QosConstants::default();
        prop_assert!(reorder_edge(&state, &cfg).len() <= m_er as usize);
        let d = suggest(&state, &cfg, &c);
        let pulled = d.migrations.iter().filter(|m| m.from == Location::OnCloud).count() + d.to_edge.len();
        prop_assert!(pulled <= m_c2e as usize);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_is_deterministic(seed in 0u64..1000, mean in 1.0f64..1.7, sched in 0usize..4) {
        let label = ["kubedsm", "kubedsm-midmig", "k8s", "bef"][sched];
        let cfg = RunConfig::default();
        let state = ClusterDefinition::table_fixture().to_state().unwrap();
        let mut sc = Scenario::new(mean, 0.4, seed);
        sc.cycles = 4;
        let policy = make_policy(label, &cfg).unwrap();
        let a = simulate(&state, &sc, policy.as_ref(), &cfg).unwrap();
        let b = simulate(&state, &sc, policy.as_ref(), &cfg).unwrap();
        prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
        prop_assert_eq!(a.safety.capacity_violations, 0);
        prop_assert_eq!(a.safety.replica_drops, 0);
    }
}
