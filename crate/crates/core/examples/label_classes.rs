//! Splits a set of run times into performance classes and prints the boundaries.

use design_rules::labels::{label_times, LabelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> design_rules::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut times = Vec::new();
    for (mode, mu) in [1.0, 2.0, 3.0].into_iter().enumerate() {
        let d = Normal::new(mu, 0.01).unwrap();
        for i in 0..200 {
            times.push((format!("m{mode}-{i:03}"), d.sample(&mut rng)));
        }
    }

    let labeling = label_times(&times, &LabelParams::default())?;
    print!("{}", labeling.summary());
    for c in &labeling.classes {
        println!(
            "class {}: [{:.3}, {:.3}] with {} members",
            c.id,
            c.min,
            c.max,
            c.members.len()
        );
    }
    Ok(())
}
