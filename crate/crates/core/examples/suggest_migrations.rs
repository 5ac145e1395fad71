//! Runs one suggestion pass over a cluster with pods stranded on the cloud,
//! once per limit preset, and prints the migrations it proposes.

use edgesched::fixtures::table_cluster;
use edgesched::model::{Location, PodId};
use edgesched::objective::{qos_total, QosConstants};
use edgesched::scheduler::{suggest, Variant};

fn main() {
    let c = QosConstants::default();
    let mut state = table_cluster();
    let layout = [
        ("D", "N2"),
        ("A", "N2"),
        ("A", "N3"),
        ("C", "N3"),
        ("B", "N4"),
        ("C", "N4"),
        ("A", "cloud"),
        ("C", "cloud"),
        ("D", "cloud"),
    ];
    for (i, (svc, node)) in layout.iter().enumerate() {
        let loc = if *node == "cloud" { Location::OnCloud } else { Location::OnEdge((*node).into()) };
        state.add_pod(PodId(i as u64), (*svc).into(), loc).unwrap();
    }
    println!("qos before: {:.1}", qos_total(&state, &c));

    for v in Variant::ALL {
        let d = suggest(&state, &v.config(), &c);
        println!("{} (m_c2e {}, m_er {}):", v.label(), v.limits().0, v.limits().1);
        if d.is_noop() {
            println!("  nothing to do");
        }
        for m in &d.migrations {
            println!("  {} {} -> {} ({:?})", m.pod, m.from, m.to, m.kind());
        }
    }
}
