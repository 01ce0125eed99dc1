mod common;

use std::collections::BTreeSet;

use design_rules::dag::spmv_example;
use design_rules::schedule::{canonical_stream_form, enumerate_schedules, rederive, Schedule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn keys(s: &[Schedule]) -> BTreeSet<String> {
    s.iter().map(|s| s.key().to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn enumeration_matches_brute_force(seed in any::<u64>()) {
        let dag = common::random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let found = enumerate_schedules(&dag, 1_000_000).unwrap();
        let distinct = keys(&found);
        prop_assert_eq!(distinct.len(), found.len(), "duplicate schedules");
        prop_assert_eq!(distinct, common::oracle_keys(&dag));
    }

    #[test]
    fn one_stream_collapses_to_topological_orders(seed in any::<u64>()) {
        let dag = common::random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 8).with_streams(1);
        let n = enumerate_schedules(&dag, 1_000_000).unwrap().len();
        prop_assert_eq!(n, common::topological_orders(&dag).len());
    }

    #[test]
    fn schedules_are_canonical_and_rederivable(seed in any::<u64>()) {
        let dag = common::random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 7);
        for s in enumerate_schedules(&dag, 1_000_000).unwrap() {
            let c = canonical_stream_form(&s);
            prop_assert_eq!(c.key(), s.key());
            let again = canonical_stream_form(&c);
            prop_assert_eq!(again.key(), c.key());
            prop_assert_eq!(rederive(&dag, &s).unwrap(), s.clone());
            prop_assert_eq!(Schedule::from_text(&s.to_text()).unwrap(), s);
        }
    }
}

#[test]
fn small_known_counts() {
    assert_eq!(
        enumerate_schedules(&common::diamond(), 100).unwrap().len(),
        2
    );
    let chain = design_rules::ProgramDag::builder()
        .cpu("start")
        .gpu("K")
        .cpu("end")
        .edge("start", "K")
        .edge("K", "end")
        .streams(2)
        .build()
        .unwrap();
    assert_eq!(enumerate_schedules(&chain, 100).unwrap().len(), 1);
    assert_eq!(
        enumerate_schedules(&common::spmv_subset(), 1000)
            .unwrap()
            .len(),
        120
    );
}

#[test]
fn spmv_space_agrees_with_brute_force() {
    let dag = spmv_example();
    let found = keys(&enumerate_schedules(&dag, 100_000).unwrap());
    assert_eq!(found, common::oracle_keys(&dag));
    assert_eq!(found.len(), 2240);
}

#[test]
fn every_spmv_schedule_starts_and_ends_on_the_host() {
    for s in enumerate_schedules(&spmv_example(), 100_000).unwrap() {
        assert_eq!(s.ops().first().unwrap().name, "start");
        assert_eq!(s.ops().last().unwrap().name, "end");
    }
}
