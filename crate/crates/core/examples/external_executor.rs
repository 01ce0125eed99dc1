//! Drives the search with an external benchmark command instead of the simulator.
//!
//! The command gets the schedule file path and prints seconds on stdout. Here
//! it is a shell one-liner that charges 1 ms per line, so longer schedules
//! (more sync ops) are slower.

use design_rules::exec::{ExternalCommand, MeasurementProtocol};
use design_rules::mcts::run_search;
use design_rules::ProgramDag;

fn main() -> design_rules::Result<()> {
    let dag = ProgramDag::builder()
        .cpu("start")
        .gpu("A")
        .gpu("B")
        .cpu("end")
        .edge("start", "A")
        .edge("start", "B")
        .edge("A", "end")
        .edge("B", "end")
        .streams(2)
        .build()?;
    let mut ex = ExternalCommand {
        template: "awk 'END { print NR / 1000 }' {schedule_file}".to_string(),
    };
    let protocol = MeasurementProtocol {
        t_measure: 0.0,
        max_samples: 1,
    };
    let (ds, tree) = run_search(&dag, &mut ex, &protocol, 50, 0)?;
    println!(
        "{} schedules, root fully explored: {}",
        ds.len(),
        tree.summary().root_fully_explored
    );
    let mut rows: Vec<_> = ds.records().collect();
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    for r in rows {
        println!("{:.3} s  {}", r.time, r.schedule.key());
    }
    Ok(())
}
