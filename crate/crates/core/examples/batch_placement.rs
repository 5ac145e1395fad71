//! Places a burst of new pods with the immediate scheduler and shows which
//! edge node each one lands on.

use edgesched::fixtures::table_cluster;
use edgesched::model::{Location, PodId};
use edgesched::objective::{fragmentation, QosConstants};
use edgesched::scheduler::{immediate_schedule, match_pods, SchedulerConfig};

fn main() {
    let mut state = table_cluster();
    let mut batch = Vec::new();
    for i in 0..20u64 {
        let svc = ["A", "B", "C", "D"][(i % 4) as usize];
        state.add_pod(PodId(i), svc.into(), Location::Pending).unwrap();
        batch.push(PodId(i));
    }

    let started = std::time::Instant::now();
    let decision = immediate_schedule(&state, &batch, &SchedulerConfig::default(), &QosConstants::default());
    let matching = match_pods(&state, &decision.to_edge);
    println!("decided {} pods in {:?}", batch.len(), started.elapsed());

    for (pod, target) in &matching.targets {
        println!("{pod} ({}) -> {target}", state.pod(*pod).unwrap().service);
    }
    println!("to cloud: {:?}", decision.to_cloud);

    let moves: Vec<_> = matching
        .targets
        .iter()
        .map(|(p, l)| (*p, l.clone()))
        .chain(decision.to_cloud.iter().map(|p| (*p, Location::OnCloud)))
        .collect();
    let after = state.apply_allocation_delta(&moves).unwrap();
    println!("edge fragmentation after placement: {:.4}", fragmentation(&after));
}
