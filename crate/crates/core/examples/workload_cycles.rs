//! Samples the per-cycle replica targets a scenario drives the autoscaler
//! with. Every scheduler in a comparison sees this same sequence.

use edgesched::fixtures::table_cluster;
use edgesched::workload::{generate_cycles, Scenario};

fn main() {
    let state = table_cluster();
    for (mean, std) in [(1.1, 0.4), (1.5, 0.1), (1.5, 0.5)] {
        let sc = Scenario::new(mean, std, 1);
        println!("scenario {} seed {}", sc.name, sc.seed);
        for cycle in generate_cycles(&sc, &state) {
            let t: Vec<String> = cycle.targets.iter().map(|(s, n)| format!("{s}={n}")).collect();
            println!("  cycle {:2}: {}", cycle.index, t.join(" "));
        }
    }
}
