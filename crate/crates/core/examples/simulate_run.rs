//! Simulates one scenario end to end and prints the edge-ratio metrics,
//! the safety report and a slice of the event trace.

use edgesched::config::{ClusterDefinition, RunConfig};
use edgesched::experiment::{run_one, RunSpec};
use edgesched::workload::Scenario;

fn main() {
    let scheduler = std::env::args().nth(1).unwrap_or_else(|| "kubedsm".into());
    let spec = RunSpec::new(
        ClusterDefinition::table_fixture(),
        Scenario::new(1.5, 0.4, 1),
        &scheduler,
        RunConfig::default(),
    );
    let out = match run_one(&spec) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };

    let m = &out.metrics;
    for (svc, r) in &m.per_deployment_edge_ratio {
        println!("{svc}: {r:.2}% on edge");
    }
    println!("mean {:.2}%, stddev {:.2}", m.mean_edge_ratio, m.edge_ratio_stddev);
    println!(
        "migrations: {} intra-edge, {} edge->cloud, {} cloud->edge",
        m.migrations.intra_edge, m.migrations.edge_to_cloud, m.migrations.cloud_to_edge
    );
    println!("{:?}", out.trace.safety);
    for rec in out.trace.records.iter().filter(|r| r.event == "migrated").take(5) {
        println!("{}", serde_json::to_string(rec).unwrap());
    }
}
