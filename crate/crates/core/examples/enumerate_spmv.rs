//! Enumerates every schedule of the built-in SpMV DAG and shows a few of them.

use design_rules::dag::spmv_example;
use design_rules::schedule::branching_trace;

fn main() -> design_rules::Result<()> {
    let dag = spmv_example();
    let (schedules, trace) = branching_trace(&dag, 100_000)?;
    println!(
        "{} schedules over {} streams",
        schedules.len(),
        dag.num_streams()
    );

    let widest = trace
        .iter()
        .max_by_key(|l| l.children)
        .expect("nonempty trace");
    println!(
        "widest prefix ({} children) at depth {}: {}",
        widest.children, widest.depth, widest.prefix
    );

    for s in schedules.iter().take(3) {
        println!("\n{}", s.key());
        print!("{}", s.to_text());
    }
    Ok(())
}
