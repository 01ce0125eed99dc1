//! How well do rules learned from a partial search predict the whole space?

use design_rules::dataset::Dataset;
use design_rules::labels::LabelParams;
use design_rules::mcts::run_search;
use design_rules::pipeline::{cmd_enumerate, evaluate, RunConfig};

fn main() -> design_rules::Result<()> {
    let tmp = tempfile::tempdir()?;
    let mut cfg = RunConfig::spmv();
    cfg.out_dir = tmp.path().to_path_buf();
    let full: Dataset = cmd_enumerate(&cfg)?.dataset;
    let params = LabelParams::default();

    println!("iterations\tschedules\taccuracy");
    for iterations in [50, 100, 200, 400] {
        let mut ex = cfg.executor()?;
        let (subset, _) = run_search(&cfg.dag, ex.as_mut(), &cfg.protocol, iterations, cfg.seed)?;
        println!(
            "{iterations}\t{}\t{:.3}",
            subset.len(),
            evaluate(&subset, &full, &params)?
        );
    }
    println!(
        "full\t{}\t{:.3}",
        full.len(),
        evaluate(&full, &full, &params)?
    );
    Ok(())
}
