#[path = "support/mod.rs"]
mod support;

use proptest::prelude::*;
use synthaug::metrics::{classification_metrics, fleiss_kappa, ConfusionMatrix};

#[test]
fn worked_example_is_exact() {
    let m = classification_metrics(&ConfusionMatrix::new(2, 1, 3, 4)).unwrap();
    assert_eq!(m.accuracy, 0.5);
    assert!(support::is_nearest(m.precision, 2, 3));
    assert!(support::is_nearest(m.recall, 1, 3));
    assert!(support::is_nearest(m.f1, 4, 9));
    assert_eq!(m.f1, 4.0 / 9.0);
}

#[test]
fn nearest_double_oracle() {
    assert!(support::is_nearest(1.0 / 3.0, 1, 3));
    assert!(!support::is_nearest((1.0f64 / 3.0).next_up(), 1, 3));
    assert!(support::is_nearest(0.0, 0, 5));
}

proptest! {
    #[test]
    fn metrics_are_correctly_rounded_ratios(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let m = classification_metrics(&ConfusionMatrix::new(tp, fp, tn, fn_)).unwrap();
        prop_assert!(support::is_nearest(m.accuracy, tp + tn, tp + fp + tn + fn_));
        if tp + fp > 0 {
            prop_assert!(support::is_nearest(m.precision, tp, tp + fp));
        }
        if tp + fn_ > 0 {
            prop_assert!(support::is_nearest(m.recall, tp, tp + fn_));
        }
        if tp + fp + fn_ > 0 {
            // 2PR/(P+R) with P = tp/(tp+fp), R = tp/(tp+fn) reduces to this
            prop_assert!(support::is_nearest(m.f1, 2 * tp, 2 * tp + fp + fn_));
        }
    }

    #[test]
    fn kappa_is_bounded_and_symmetric_in_categories(
        rows in prop::collection::vec(0u32..=4, 1..40),
    ) {
        let table: Vec<Vec<u32>> = rows.iter().map(|&h| vec![h, 4 - h]).collect();
        let swapped: Vec<Vec<u32>> = rows.iter().map(|&h| vec![4 - h, h]).collect();
        let a = fleiss_kappa(&table, 4).unwrap();
        let b = fleiss_kappa(&swapped, 4).unwrap();
        prop_assert_eq!(a.kappa.is_some(), b.kappa.is_some());
        if let (Some(x), Some(y)) = (a.kappa, b.kappa) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!(x <= 1.0 + 1e-12);
        }
    }
}
