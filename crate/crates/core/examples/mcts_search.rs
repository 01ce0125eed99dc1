//! Explores the SpMV space with Monte-Carlo tree search and reports coverage.

use design_rules::dag::spmv_example;
use design_rules::exec::{CostModel, MeasurementProtocol, Simulator};
use design_rules::mcts::run_search;

fn main() -> design_rules::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .map_or(400, |s| s.parse().expect("iteration count"));
    let dag = spmv_example();
    let mut sim = Simulator::new(dag.clone(), CostModel::spmv_example())?;
    let (dataset, tree) = run_search(
        &dag,
        &mut sim,
        &MeasurementProtocol::default(),
        iterations,
        0,
    )?;

    let s = tree.summary();
    println!(
        "{} schedules benchmarked in {} rollouts",
        dataset.len(),
        s.rollouts
    );
    println!(
        "{} tree nodes, {:.1}% fully explored",
        s.nodes,
        100.0 * s.explored_fraction()
    );

    let mut best: Vec<_> = dataset.records().collect();
    best.sort_by(|a, b| a.time.total_cmp(&b.time));
    for r in best.iter().take(3) {
        println!("{:8.1} us  {}", r.time * 1e6, r.schedule.key());
    }
    Ok(())
}
