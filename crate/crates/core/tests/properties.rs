mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::oracle::*;
use kgtruth::evalharness::{eval_literal, eval_relational, spearman};
use kgtruth::kgdata::{norm_in_range, normalize_datetime, parse_datetime, Value};
use kgtruth::scoring::plausibility;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relational_scores_recover_a_softmax(seed in 0u64..1_000_000) {
        check_softmax_sums(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn class_weights_are_a_distribution(
        counts in prop::collection::vec(0u32..10_000, 1..40),
        offset in 0.0f64..5.0,
    ) {
        let counts: Vec<f64> = counts.into_iter().map(f64::from).collect();
        check_class_weights(&counts, offset).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn rarer_values_weigh_more(a in 0u32..1000, b in 0u32..1000) {
        let w = kgtruth::scoring::class_weights(&[f64::from(a), f64::from(b)], 1.0);
        prop_assert_eq!(a < b, w[0] > w[1]);
    }

    #[test]
    fn single_candidate_is_the_confusion_term(scale in 1e-3f64..50.0, score in 0.0f64..30.0) {
        check_single_candidate(scale, score).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn plausibility_decreases_in_the_score(a in 0.0f64..50.0, b in 0.0f64..50.0) {
        prop_assume!(a != b);
        prop_assert_eq!(a < b, plausibility(a) > plausibility(b));
    }

    #[test]
    fn norm_stays_in_the_unit_interval(v in -1e6f64..1e6, lo in -1e3f64..1e3, width in 1e-6f64..1e3) {
        let hi = lo + width;
        let x = norm_in_range(v, lo, hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(norm_in_range(lo, lo, hi).unwrap(), 0.0);
        prop_assert_eq!(norm_in_range(hi, lo, hi).unwrap(), 1.0);
        prop_assert!(norm_in_range(v, lo, lo).is_err());
    }

    #[test]
    fn whole_days_normalize_to_integers(days in -40_000i64..40_000) {
        let dt = parse_datetime("2000-01-01").unwrap() + chrono::Duration::days(days);
        prop_assert_eq!(normalize_datetime(&dt), days as f64);
    }

    #[test]
    fn f1_is_the_harmonic_mean(seed in 0u64..100_000) {
        let (pred, gold) = random_triples(seed);
        let r = eval_relational(&pred, &gold);
        let h = if r.precision + r.recall > 0.0 { 2.0 * r.precision * r.recall / (r.precision + r.recall) } else { 0.0 };
        prop_assert!((r.f1 - h).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.precision) && (0.0..=1.0).contains(&r.recall));
    }

    #[test]
    fn rmse_bounds_mae(errs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30)) {
        let pred = errs.iter().enumerate().map(|(i, e)| ((i, 0), e.0)).collect();
        let gold = errs.iter().enumerate().map(|(i, e)| ((i, 0), vec![e.1])).collect();
        let (mae, rmse) = eval_literal(&pred, &gold).unwrap();
        prop_assert!(rmse + 1e-12 >= mae && mae >= 0.0);
    }

    #[test]
    fn spearman_is_bounded(xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..20)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        let r = spearman(&x, &y);
        prop_assert!(r.is_nan() || (-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
    }

    #[test]
    fn ledger_holds_exactly_the_claimed_values(seed in 0u64..100_000) {
        let (_, claims, _) = voting_instance(seed);
        let inst = scorer_for_claims(seed, &claims);
        let groups = kgtruth::truth::build_ledger(&claims, &inst).unwrap();
        let mut want: BTreeMap<(usize, usize), BTreeSet<Value>> = BTreeMap::new();
        for c in &claims.claims {
            want.entry((c.entity, c.attribute)).or_default().insert(c.value.clone());
        }
        prop_assert_eq!(groups.len(), want.len());
        for g in &groups {
            let got: BTreeSet<Value> = g.values.iter().map(|&j| inst.values[g.attribute][j].clone()).collect();
            prop_assert_eq!(got.len(), g.values.len());
            prop_assert_eq!(&got, &want[&(g.entity, g.attribute)]);
            for gc in &g.claims {
                let c = &claims.claims[gc.claim];
                prop_assert_eq!((c.entity, c.attribute, c.source), (g.entity, g.attribute, gc.source));
                prop_assert_eq!(&inst.values[g.attribute][g.values[gc.observed]], &c.value);
            }
        }
        prop_assert_eq!(groups.iter().map(|g| g.claims.len()).sum::<usize>(), claims.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn observed_value_probability_is_a_probability(seed in any::<u64>()) {
        check_probability_range(seed).map_err(TestCaseError::fail)?;
    }
}

fn random_triples(seed: u64) -> (Vec<kgtruth::evalharness::Triple>, Vec<kgtruth::evalharness::Triple>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<_> {
        (0..n)
            .map(|_| (rng.random_range(0..4), 0, Value::Category(format!("{}", rng.random_range(0..3)))))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    let pred = draw(6);
    let gold = draw(6);
    (pred, gold)
}

fn scorer_for_claims(seed: u64, claims: &kgtruth::kgdata::ClaimSet) -> kgtruth::scoring::Scorer {
    use rand::SeedableRng;
    let (kg, _, _) = voting_instance(seed);
    let hp = tiny_hp(seed);
    let text = kgtruth::textenc::TextEncoder::hash(hp.d_txt);
    let mut store = diffcore::ParamStore::new(seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    kgtruth::scoring::Scorer::new(&mut store, &hp, &kg, claims, &text, &mut rng).unwrap()
}
