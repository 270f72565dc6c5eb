mod common;

use ndarray::Array2;
use proptest::prelude::*;

use emgtype_core::metrics::{cer, cer_str, ctc_loglik};
use emgtype_core::Error;

#[test]
fn empty_reference_is_undefined() {
    assert!(matches!(cer_str("", "abc"), Err(Error::UndefinedCer)));
}

#[test]
fn counts_edit_kinds() {
    let b = cer_str("kitten", "sitting").unwrap();
    assert_eq!((b.substitutions, b.insertions, b.deletions), (2, 1, 0));
    let b = cer_str("abc", "").unwrap();
    assert_eq!((b.deletions, b.cer), (3, 100.0));
}

#[test]
fn blank_targets_rejected() {
    let logits = Array2::zeros((3, 3));
    assert!(ctc_loglik(logits.view(), &[2], 2).is_err());
    assert!(ctc_loglik(logits.view(), &[5], 2).is_err());
}

#[test]
fn infeasible_target_has_zero_likelihood() {
    let logits = Array2::zeros((2, 3));
    let l = ctc_loglik(logits.view(), &[0, 0], 2).unwrap();
    assert!(l.infeasible);
    assert_eq!(l.log_likelihood, f64::NEG_INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cer_matches_levenshtein(seed in 0u64..100_000) {
        let mut r = common::rng(seed);
        let alphabet = ['x', 'y', 'z', '⌫'];
        let mut a = common::random_string(&mut r, &alphabet, 15);
        if a.is_empty() {
            a.push('x');
        }
        let b = common::random_string(&mut r, &alphabet, 15);
        let got = cer(&a, &b).unwrap();
        prop_assert_eq!(got.edits(), common::levenshtein(&a, &b));
        prop_assert_eq!(got.reference_length + got.insertions - got.deletions, b.len());
        prop_assert!(got.substitutions + got.deletions <= a.len());
    }

    #[test]
    fn cer_is_zero_only_for_equal_strings(seed in 0u64..100_000) {
        let mut r = common::rng(seed);
        let mut a = common::random_string(&mut r, &['p', 'q'], 8);
        a.push('p');
        prop_assert_eq!(cer(&a, &a).unwrap().cer, 0.0);
        let mut b = a.clone();
        b.push('q');
        prop_assert!(cer(&a, &b).unwrap().cer > 0.0);
    }

    #[test]
    fn ctc_matches_enumeration(seed in 0u64..100_000, t in 1usize..6, v in 2usize..5) {
        let mut r = common::rng(seed);
        let blank = seed as usize % v;
        let logits = common::random_logits(&mut r, t, v, 3.0);
        let lp = common::log_softmax_rows(&logits);
        let marg = common::prefix_marginals(&lp, blank);
        let total: f64 = marg.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for (target, p) in &marg {
            let got = ctc_loglik(logits.view(), target, blank).unwrap();
            prop_assert!(!got.infeasible);
            prop_assert!((got.log_likelihood - p.ln()).abs() < 1e-9);
        }
    }
}
