//! QoS bookkeeping on the default cluster: per-service delta, the QoS
//! total, pod sizes and the scores that rank pods for migration.

use edgesched::fixtures::table_cluster;
use edgesched::model::{Location, PodId};
use edgesched::objective::{delta, fragmentation, free_score, pod_size, qos_total, suggest_score, QosConstants};

fn main() {
    let c = QosConstants::default();
    let mut state = table_cluster();
    let layout = [("A", "N2"), ("A", "cloud"), ("B", "N3"), ("C", "N4"), ("C", "N4"), ("D", "cloud")];
    for (i, (svc, node)) in layout.iter().enumerate() {
        let loc = if *node == "cloud" { Location::OnCloud } else { Location::OnEdge((*node).into()) };
        state.add_pod(PodId(i as u64), (*svc).into(), loc).unwrap();
    }

    let totals = state.total_edge_capacity();
    println!("edge pool: {totals}");
    for svc in state.services() {
        println!(
            "{}: delta {:+.3}, pod size {:.5}",
            svc.id,
            delta(&state, &svc.id).unwrap(),
            pod_size(svc, totals).unwrap()
        );
    }
    println!("qos total {:.1}, fragmentation {:.4}", qos_total(&state, &c), fragmentation(&state));

    for pod in state.pods() {
        let score = match pod.location {
            Location::OnCloud => suggest_score(&state, pod.id, &c),
            _ => free_score(&state, pod.id, &c),
        };
        println!("{} ({}) on {}: score {:.1}", pod.id, pod.service, pod.location, score.unwrap());
    }
}
