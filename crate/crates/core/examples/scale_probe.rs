//! Scratch probe: full three-parameter sweep over a small corpus.
use replan_core::analysis::{sweep_on, SweepParam};
use replan_core::planner::PlanOptions;
use replan_core::randomnet::feasible_corpus;
use replan_core::requirements::DerivedBounds;
use std::time::Instant;

fn main() {
    let base = PlanOptions {
        k: Some(6),
        d: Some(4),
        bounds_override: Some(DerivedBounds { n_max: 6, l_max_km: 0.9 }),
        ..PlanOptions::default()
    };
    let t0 = Instant::now();
    let corpus = feasible_corpus(25, 0.9, &base, 6, 1, 600).unwrap();
    println!("corpus of 6 in {:.1}s", t0.elapsed().as_secs_f64());
    for (param, values) in [
        (SweepParam::Capacity, vec![4.0, 6.0, 8.0]),
        (SweepParam::Robustness, vec![1.0, 3.0, 6.0]),
        (SweepParam::LinkLength, vec![0.9, 1.2, 1.414]),
    ] {
        let t1 = Instant::now();
        let table = sweep_on(&corpus, &base, param, &values).unwrap();
        print!("sweep {} in {:.1}s:", table.param, t1.elapsed().as_secs_f64());
        for p in &table.points {
            print!("  v={} reps={:.2} conn={:.2}", p.param_value, p.mean_repeaters, p.mean_connectivity);
        }
        println!();
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
