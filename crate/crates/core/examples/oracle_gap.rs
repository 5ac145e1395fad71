//! Checks the heuristics against exhaustive search on random small
//! instances and reports how far the batch decision is from optimal.

use edgesched::oracle::{exact_allocate, heuristic_qos, random_instance, self_check, MAX_ALLOCATE_PODS};
use edgesched::objective::QosConstants;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let report = self_check(500, 7);
    println!("{report:#?}");

    let c = QosConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut shown = 0;
    while shown < 5 {
        let (state, new) = random_instance(&mut rng, 2, 4);
        if state.pod_count() > MAX_ALLOCATE_PODS || new.is_empty() {
            continue;
        }
        let exact = exact_allocate(&state, &new, &c).unwrap();
        let h = heuristic_qos(&state, &new, &c);
        println!(
            "{} pods, {} new: exact {:.2} ({} migrations), heuristic {:.2}, gap {:.2}",
            state.pod_count(),
            new.len(),
            exact.qos,
            exact.migrations,
            h,
            exact.qos - h
        );
        shown += 1;
    }
}
