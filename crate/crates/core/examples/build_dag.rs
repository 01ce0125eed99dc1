//! Builds a small program DAG in code, validates it and prints its TOML form.

use design_rules::{OpKind, ProgramDag};

fn main() -> design_rules::Result<()> {
    let dag = ProgramDag::builder()
        .cpu("start")
        .gpu("scale")
        .gpu("reduce")
        .vertex("copy_out", OpKind::Cpu)
        .cpu("end")
        .edge("start", "scale")
        .edge("start", "reduce")
        .edge("scale", "copy_out")
        .edge("reduce", "copy_out")
        .edge("copy_out", "end")
        .streams(2)
        .build()?
        .validated()?;

    println!("{} vertices, {} streams", dag.len(), dag.num_streams());
    println!("{}", dag.to_toml_string());

    // a cycle is rejected with a readable report
    let bad = ProgramDag::builder()
        .cpu("start")
        .cpu("a")
        .cpu("b")
        .cpu("end")
        .edge("start", "a")
        .edge("a", "b")
        .edge("b", "a")
        .edge("b", "end")
        .build()?;
    if let Err(e) = bad.validated() {
        println!("rejected: {e}");
    }
    Ok(())
}
