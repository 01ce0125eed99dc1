//! Times hand-built SpMV schedules with the discrete-event simulator.

use design_rules::dag::spmv_example;
use design_rules::exec::{measure, simulate, CostModel, MeasurementProtocol, Simulator};
use design_rules::schedule::Prefix;
use design_rules::ProgramDag;

fn build(
    dag: &ProgramDag,
    order: &[(&str, Option<u32>)],
) -> design_rules::Result<design_rules::Schedule> {
    let mut p = Prefix::empty(dag);
    for &(name, stream) in order {
        p.push_vertex(dag, dag.index_of(name).expect("known vertex"), stream)?;
    }
    p.to_schedule()
}

fn main() -> design_rules::Result<()> {
    let dag = spmv_example();
    let costs = CostModel::spmv_example();

    // local product overlapped with the exchange
    let overlapped = build(
        &dag,
        &[
            ("start", None),
            ("Pack", Some(0)),
            ("y_L", Some(1)),
            ("PostSend", None),
            ("PostRecv", None),
            ("WaitSend", None),
            ("WaitRecv", None),
            ("Unpack", Some(0)),
            ("y_R", Some(0)),
            ("end", None),
        ],
    )?;
    // everything on one stream, local product last
    let serial = build(
        &dag,
        &[
            ("start", None),
            ("Pack", Some(0)),
            ("PostSend", None),
            ("PostRecv", None),
            ("WaitSend", None),
            ("WaitRecv", None),
            ("Unpack", Some(0)),
            ("y_R", Some(0)),
            ("y_L", Some(0)),
            ("end", None),
        ],
    )?;

    for (name, s) in [("overlapped", &overlapped), ("serial", &serial)] {
        println!("{name}: {:.1} us", simulate(&dag, s, &costs)? * 1e6);
        print!("{}", s.to_text());
    }

    let mut noisy = Simulator::new(
        dag.clone(),
        CostModel {
            noise_rel_sigma: 0.05,
            ..costs
        },
    )?;
    let m = measure(&overlapped, &mut noisy, &MeasurementProtocol::default())?;
    println!(
        "noisy mean over {} runs: {:.1} us",
        m.n_samples,
        m.time * 1e6
    );
    Ok(())
}
