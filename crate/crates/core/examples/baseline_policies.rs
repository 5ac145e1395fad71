//! Feeds the same batch to every baseline policy and to the QoS-aware
//! scheduler, then compares where the pods end up.

use edgesched::config::RunConfig;
use edgesched::experiment::make_policy;
use edgesched::fixtures::table_cluster;
use edgesched::model::{Location, PodId};

fn main() {
    let mut state = table_cluster();
    let batch: Vec<PodId> = (0..10).map(PodId).collect();
    for p in &batch {
        let svc = ["A", "B", "C", "D", "A"][(p.0 % 5) as usize];
        state.add_pod(*p, svc.into(), Location::Pending).unwrap();
    }
    let cfg = RunConfig::default();
    for label in ["kubedsm", "k8s", "bef", "sef", "cf"] {
        let policy = make_policy(label, &cfg).unwrap();
        let d = policy.schedule(&state, &batch);
        let nodes: Vec<String> = d
            .pinned
            .values()
            .map(|n| n.to_string())
            .collect();
        println!(
            "{label:8} edge {:2}  cloud {:2}  pinned {:?}",
            d.to_edge.len(),
            d.to_cloud.len(),
            nodes
        );
    }
}
