//! Property tests for the weight estimators' shared invariants.

use dacart::weights::{
    kish_ess, normalize_weights, odds_bounds, odds_from_propensity, sigmoid, true_odds,
    ShiftMechanism, WeightSource, WeightVector, DEFAULT_TRUNC,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalized_weights_sum_to_n_and_stay_non_negative(
        raw in prop::collection::vec(0.0f64..50.0, 1..200),
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 0.0);
        let values = normalize_weights(&raw).unwrap();
        let n = values.len() as f64;
        let sum: f64 = values.iter().sum();
        prop_assert!((sum - n).abs() <= 1e-8 * n);
        prop_assert!(values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn propensity_odds_respect_the_truncation_bounds(
        p in prop::collection::vec(0.0f64..=1.0, 1..150),
    ) {
        let odds = odds_from_propensity(&p, DEFAULT_TRUNC).unwrap();
        let (lo, hi) = odds_bounds(DEFAULT_TRUNC);
        for &o in &odds {
            prop_assert!(o >= lo && o <= hi);
        }
        // max/min ratio bounded by (hi/(1-hi)) / (lo/(1-lo)) = 361 at defaults
        let max = odds.iter().cloned().fold(f64::MIN, f64::max);
        let min = odds.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(max / min <= 361.0 * (1.0 + 1e-12));
    }

    #[test]
    fn normalization_is_idempotent(
        raw in prop::collection::vec(0.01f64..20.0, 1..100),
    ) {
        let once = normalize_weights(&raw).unwrap();
        let twice = normalize_weights(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn kish_ess_is_at_most_n_with_equality_only_for_equal_weights(
        raw in prop::collection::vec(0.01f64..10.0, 2..120),
        constant in 0.1f64..5.0,
    ) {
        let n = raw.len() as f64;
        let ess = kish_ess(&normalize_weights(&raw).unwrap());
        prop_assert!(ess <= n * (1.0 + 1e-12));

        let equal = vec![constant; raw.len()];
        let ess_equal = kish_ess(&normalize_weights(&equal).unwrap());
        prop_assert!((ess_equal - n).abs() <= 1e-9 * n);

        // Any genuinely unequal vector loses effective sample size.
        let spread = raw.iter().cloned().fold(f64::MIN, f64::max)
            / raw.iter().cloned().fold(f64::MAX, f64::min);
        if spread > 1.01 {
            prop_assert!(ess < n);
        }
    }

    #[test]
    fn true_and_propensity_paths_agree_on_shared_mechanisms(
        scores in prop::collection::vec(-6.0f64..6.0, 1..100),
        mean in -2.0f64..2.0,
        restricted in any::<bool>(),
    ) {
        let mechanism =
            if restricted { ShiftMechanism::Restricted } else { ShiftMechanism::Shifted };
        let p: Vec<f64> =
            scores.iter().map(|&s| sigmoid(mechanism.logit_argument(s, mean))).collect();
        let via_p = odds_from_propensity(&p, DEFAULT_TRUNC).unwrap();
        let via_z = true_odds(&scores, mechanism, mean, DEFAULT_TRUNC).unwrap();
        for (a, b) in via_p.iter().zip(&via_z) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn weight_vector_construction_preserves_the_sum_invariant(
        raw in prop::collection::vec(0.0f64..30.0, 1..80),
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 0.0);
        let wv = WeightVector::from_raw(&raw, WeightSource::PropensityOdds, DEFAULT_TRUNC).unwrap();
        let sum: f64 = wv.values().iter().sum();
        prop_assert!((sum - wv.len() as f64).abs() <= 1e-8 * wv.len() as f64);
        prop_assert!(wv.min() >= 0.0);
    }
}
