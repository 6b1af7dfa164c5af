#[path = "support/mod.rs"]
mod support;

use approx::assert_abs_diff_eq;
use synthaug::corpus::{Dataset, Label, Vocabulary};
use synthaug::langmodel::{train_lm, GenerativeLM};

fn four_token_lm(order: usize, alpha: f64) -> GenerativeLM {
    let d = Dataset::from_pairs(
        "abcd",
        ["a b c d", "a a b", "d c b a a", "c", "b d d a c"].map(|t| (t, Label::Hate)),
    );
    let v = Vocabulary::from_sequences(d.token_sequences(), 1);
    train_lm(&d, &v, order, alpha).unwrap()
}

fn ids(lm: &GenerativeLM, seq: &[u8]) -> Vec<u32> {
    let start = lm.vocabulary().regular_ids().start;
    seq.iter().map(|&t| start + t as u32).collect()
}

#[test]
fn capped_sequence_distribution_sums_to_one() {
    for (order, alpha) in [(1, 1.0), (2, 0.1), (2, 0.5), (3, 0.05)] {
        let lm = four_token_lm(order, alpha);
        assert_eq!(lm.vocabulary().regular_ids().len(), 4);
        let seqs = support::all_sequences(4, 5);
        let capped: f64 = seqs.iter().map(|s| lm.capped_sequence_log_prob_ids(&ids(&lm, s), 5).exp()).sum();
        assert_abs_diff_eq!(capped, 1.0, epsilon = 1e-9);

        // terminated mass plus the mass still running after five tokens
        let ended: f64 = seqs.iter().map(|s| lm.sequence_log_prob_ids(&ids(&lm, s)).exp()).sum();
        let running: f64 = seqs
            .iter()
            .filter(|s| s.len() == 5)
            .map(|s| (lm.prefix_log_prob_ids(&ids(&lm, s)) + (1.0 - lm.conditional(&ids(&lm, s), synthaug::corpus::EOS)).ln()).exp())
            .sum();
        assert_abs_diff_eq!(ended + running, 1.0, epsilon = 1e-9);
        assert!(ended < 1.0);
    }
}

#[test]
fn every_conditional_is_a_distribution() {
    let lm = four_token_lm(2, 0.1);
    for s in support::all_sequences(4, 3) {
        let p = lm.next_probs(&ids(&lm, &s));
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }
}
