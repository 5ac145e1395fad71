//! A small paired comparison: every scheduler on the mean sweep with three
//! seeds, summarised per scenario.

use edgesched::config::{ClusterDefinition, RunConfig};
use edgesched::experiment::{compare, mean_sweep, CompareSpec, MAIN_SCHEDULERS};

fn main() {
    let spec = CompareSpec {
        cluster: ClusterDefinition::table_fixture(),
        scenarios: mean_sweep(),
        schedulers: MAIN_SCHEDULERS.iter().map(|s| s.to_string()).collect(),
        seeds: vec![1, 2, 3],
        qos_presets: Vec::new(),
        config: RunConfig::default(),
    };
    let cmp = compare(&spec, 0).expect("valid grid");

    print!("{:10}", "scenario");
    for s in &spec.schedulers {
        print!("{s:>9}");
    }
    println!();
    for sc in &spec.scenarios {
        print!("{:10}", sc.name);
        for s in &spec.schedulers {
            print!("{:>9.2}", cmp.mean_edge_ratio(|r| r.scenario == sc.name && &r.scheduler == s));
        }
        println!();
    }
    println!("{} runs, {} failed", cmp.runs.len(), cmp.failures());
}
