mod common;

use design_rules::labels::{find_peaks, label_times, prominences, step_convolve, LabelParams};
use proptest::prelude::*;

fn keyed(ts: &[f64]) -> Vec<(String, f64)> {
    ts.iter()
        .enumerate()
        .map(|(i, &t)| (format!("k{i:04}"), t))
        .collect()
}

/// Lumpy times: a few bands of small integers, so sums stay exact.
fn lumpy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..6, 0u32..4), 3..300).prop_map(|v| {
        v.into_iter()
            .map(|(band, jitter)| f64::from(band * 100 + jitter))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn labels_are_monotone_in_time(ts in lumpy()) {
        let l = label_times(&keyed(&ts), &LabelParams::default()).unwrap();
        prop_assert_eq!(l.num_classes(), l.boundaries.len() + 1);
        prop_assert!(l.boundaries.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(l.boundaries.iter().all(|&b| b > 0 && b < ts.len()));
        let mut last = 0;
        for k in &l.sorted_keys {
            let c = l.class_of(k).unwrap().0;
            prop_assert!(c >= last);
            last = c;
        }
        let total: usize = l.classes.iter().map(|c| c.members.len()).sum();
        prop_assert_eq!(total, ts.len());
        for w in l.classes.windows(2) {
            prop_assert!(w[0].max <= w[1].min);
        }
    }

    #[test]
    fn positive_affine_maps_keep_labels(ts in lumpy(), a in 1u32..64, b in 0u32..1000) {
        let base = label_times(&keyed(&ts), &LabelParams::default()).unwrap();
        let moved: Vec<f64> = ts.iter().map(|t| f64::from(a) * t + f64::from(b)).collect();
        let other = label_times(&keyed(&moved), &LabelParams::default()).unwrap();
        prop_assert_eq!(&base.boundaries, &other.boundaries);
        prop_assert_eq!(&base.sorted_keys, &other.sorted_keys);
    }

    #[test]
    fn record_order_does_not_matter(ts in lumpy(), rot in 0usize..300) {
        let k = keyed(&ts);
        let mut r = k.clone();
        r.rotate_left(rot % k.len());
        let a = label_times(&k, &LabelParams::default()).unwrap();
        let b = label_times(&r, &LabelParams::default()).unwrap();
        prop_assert_eq!(a.boundaries, b.boundaries);
    }

    #[test]
    fn peaks_are_local_maxima(c in prop::collection::vec(0u8..5, 0..60)) {
        let c: Vec<f64> = c.into_iter().map(f64::from).collect();
        let peaks = find_peaks(&c);
        let proms = prominences(&c, &peaks);
        for (&p, &pr) in peaks.iter().zip(&proms) {
            prop_assert!(p > 0 && p + 1 < c.len());
            prop_assert!(c[p - 1] <= c[p] && c[p] >= c[p + 1]);
            prop_assert!(pr > 0.0 && pr <= c[p] - c.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }

    #[test]
    fn ramps_convolve_to_a_constant(n in 10usize..100, r in 1usize..4, s in 1u32..10) {
        prop_assume!(n > 2 * r);
        let a: Vec<f64> = (0..n).map(|i| f64::from(s) * i as f64).collect();
        let c = step_convolve(&a, r).unwrap();
        let want = (r * r) as f64 * f64::from(s);
        prop_assert!(c.values.iter().all(|&v| v == want));
    }
}

#[test]
fn evenly_spaced_bimodal_times_split_once() {
    // multiples of 2^-14 keep every convolution sum exact
    let mut ts: Vec<f64> = (0..1000).map(|i| 1.0 + f64::from(i) / 16384.0).collect();
    ts.extend((0..1000).map(|i| 2.0 + f64::from(i) / 16384.0));
    let l = label_times(&keyed(&ts), &LabelParams::default()).unwrap();
    assert_eq!(l.radius, 10);
    assert_eq!(l.boundaries, vec![1000]);
}

#[test]
fn trimodal_fixture_over_seeds() {
    for seed in 0..10 {
        let l = label_times(&common::trimodal(seed), &LabelParams::default()).unwrap();
        assert_eq!(l.num_classes(), 3, "seed {seed}");
        assert_eq!(l.boundaries, vec![200, 400], "seed {seed}");
    }
}
