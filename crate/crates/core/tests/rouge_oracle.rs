#[path = "support/mod.rs"]
mod support;

use proptest::prelude::*;
use synthaug::metrics::{lcs_len, rouge_l};

#[test]
fn dp_matches_enumeration_for_short_pairs() {
    let seqs = support::all_sequences(3, 4);
    for a in &seqs {
        for b in &seqs {
            assert_eq!(lcs_len(a, b), support::lcs_oracle(a, b), "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn brute_force_oracle_sanity() {
    assert_eq!(support::lcs_oracle(&[0, 1, 2, 0], &[1, 0, 2]), 2);
    assert_eq!(support::lcs_oracle(&[], &[1, 2]), 0);
    assert_eq!(support::all_sequences(3, 8).len(), 9841);
}

proptest! {
    #[test]
    fn rouge_is_the_f_measure_of_the_oracle_lcs(
        a in prop::collection::vec(0u8..3, 1..=8),
        b in prop::collection::vec(0u8..3, 1..=8),
    ) {
        let l = support::lcs_oracle(&a, &b) as f64;
        let (p, r) = (l / a.len() as f64, l / b.len() as f64);
        let f = if l == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let got = rouge_l(&a, &b).unwrap();
        prop_assert!((got - f).abs() < 1e-12);
        prop_assert_eq!(got, rouge_l(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&got));
    }
}
