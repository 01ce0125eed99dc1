//! End to end on the SpMV space: enumerate, label, train, and print the rules.

use design_rules::dag::spmv_example;
use design_rules::dataset::Dataset;
use design_rules::exec::{measure, CostModel, MeasurementProtocol, Simulator};
use design_rules::labels::LabelParams;
use design_rules::pipeline::analyze;
use design_rules::rules::render_report;
use design_rules::schedule::enumerate_schedules;

fn main() -> design_rules::Result<()> {
    let dag = spmv_example();
    let mut sim = Simulator::new(dag.clone(), CostModel::spmv_example())?;
    let protocol = MeasurementProtocol {
        t_measure: 0.0,
        max_samples: 1,
    };
    let mut ds = Dataset::new();
    for s in enumerate_schedules(&dag, 100_000)? {
        let m = measure(&s, &mut sim, &protocol)?;
        ds.add(s, m);
    }

    let a = analyze(&ds, &LabelParams::default())?;
    print!("{}", a.labeling.summary());
    println!(
        "{} features kept of {}, tree with {} leaves (depth {}), training error {}",
        a.matrix.n_cols(),
        a.matrix.vocab.features.len(),
        a.tree.leaf_count(),
        a.tree.depth(),
        a.tree.training_error
    );
    for w in &a.warnings {
        println!("warning: {w}");
    }
    print!("\n{}", render_report(&a.report, Some(3)));
    Ok(())
}
