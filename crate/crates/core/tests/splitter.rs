use std::collections::BTreeMap;

use daedra_core::corpus::{Report, Sex};
use daedra_core::labels::OutcomeSet;
use daedra_core::splitter::{
    apportion, stratified_split, stratified_subsample, Partition, SplitManifest, SplitRatios, StratumKey,
};
use daedra_core::synth::marginal_corpus;
use proptest::prelude::*;

fn counts_by_stratum(reports: &[Report], seed: u64) -> BTreeMap<StratumKey, [usize; 3]> {
    let a = stratified_split(reports, SplitRatios::default(), seed).unwrap();
    a.stratum_counts()
        .into_iter()
        .map(|(k, c)| (k, [c.train, c.test, c.validation]))
        .collect()
}

#[test]
fn hundred_thousand_records_over_eleven_strata() {
    let reports = marginal_corpus(100_000, 2024);
    let a = stratified_split(&reports, SplitRatios::default(), 7).unwrap();
    let strata = a.stratum_counts();
    assert_eq!(strata.len(), 11);
    let targets = [0.70, 0.15, 0.15];
    let mut expected_totals = [0usize; 3];
    for (key, c) in &strata {
        let n = c.total();
        let expected = apportion(n, &targets);
        assert_eq!([c.train, c.test, c.validation], expected[..], "{key}");
        for (p, t) in Partition::ALL.iter().zip(targets) {
            let frac = c.get(*p) as f64 / n as f64;
            assert!((frac - t).abs() <= 0.005, "{key} {p:?} {frac}");
            expected_totals[p_index(*p)] += c.get(*p);
        }
    }
    let totals = a.partition_counts();
    assert_eq!(totals.total(), 100_000);
    assert_eq!([totals.train, totals.test, totals.validation], expected_totals);
    for (p, t) in Partition::ALL.iter().zip(targets) {
        let frac = totals.get(*p) as f64 / 100_000.0;
        assert!((frac - t).abs() <= strata.len() as f64 / 100_000.0);
    }

    let again = stratified_split(&reports, SplitRatios::default(), 7).unwrap();
    let bytes = |x: &daedra_core::splitter::SplitAssignment| {
        serde_json::to_vec(&(x, SplitManifest::from_assignment(x))).unwrap()
    };
    assert_eq!(bytes(&a), bytes(&again));
}

fn p_index(p: Partition) -> usize {
    Partition::ALL.iter().position(|x| *x == p).unwrap()
}

#[test]
fn share_of_each_stratum_is_preserved() {
    let reports = marginal_corpus(20_000, 3);
    let a = stratified_split(&reports, SplitRatios::default(), 1).unwrap();
    let totals = a.partition_counts();
    let n = a.len() as f64;
    for c in a.stratum_counts().values() {
        let overall = c.total() as f64 / n;
        for p in Partition::ALL {
            let size = totals.get(p) as f64;
            let share = c.get(p) as f64 / size;
            assert!((share - overall).abs() <= 1.0 / size);
        }
    }
}

#[test]
fn subsample_ten_percent_of_training() {
    let reports = marginal_corpus(100_000, 11);
    let a = stratified_split(&reports, SplitRatios::default(), 5).unwrap();
    let train = a.partition_counts().train;
    let sub = stratified_subsample(&a, Partition::Train, 0.10, 5).unwrap();
    let strata = a.stratum_counts();
    assert!((sub.len() as f64 - 0.1 * train as f64).abs() <= strata.len() as f64);
    let mut per: BTreeMap<StratumKey, usize> = BTreeMap::new();
    for id in &sub {
        let m = a.members[id];
        assert_eq!(m.partition, Partition::Train);
        *per.entry(m.stratum).or_default() += 1;
    }
    for (key, c) in &strata {
        let got = per.get(key).copied().unwrap_or(0) as f64;
        assert!((got - 0.1 * c.train as f64).abs() < 1.0, "{key}");
    }
    assert_eq!(sub, stratified_subsample(&a, Partition::Train, 0.10, 5).unwrap());
    let all = stratified_subsample(&a, Partition::Train, 1.0, 5).unwrap();
    assert_eq!(all.len(), train);
}

fn demographic_reports() -> impl Strategy<Value = Vec<Report>> {
    let sex = prop_oneof![Just(Sex::F), Just(Sex::M), Just(Sex::U)];
    let age = prop::option::weighted(0.8, 0.0f64..100.0);
    prop::collection::vec((sex, age), 0..300).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (sex, age_yrs))| Report {
                vaers_id: format!("r{i}"),
                text: "t".into(),
                sex,
                age_yrs,
                outcomes: OutcomeSet::NONE,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_cover_every_id_once(reports in demographic_reports(), seed in any::<u64>()) {
        let a = stratified_split(&reports, SplitRatios::default(), seed).unwrap();
        prop_assert_eq!(a.len(), reports.len());
        prop_assert_eq!(a.partition_counts().total(), reports.len());
        for r in &reports {
            prop_assert!(a.partition_of(&r.vaers_id).is_some());
        }
    }

    #[test]
    fn input_order_does_not_matter(reports in demographic_reports(), seed in any::<u64>()) {
        let a = stratified_split(&reports, SplitRatios::default(), seed).unwrap();
        let mut reversed = reports.clone();
        reversed.reverse();
        let b = stratified_split(&reversed, SplitRatios::default(), seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stratum_counts_do_not_depend_on_seed(reports in demographic_reports(), s1 in any::<u64>(), s2 in any::<u64>()) {
        prop_assert_eq!(counts_by_stratum(&reports, s1), counts_by_stratum(&reports, s2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn share_drift_within_rounding_bound(reports in demographic_reports(), seed in any::<u64>()) {
        // per-stratum rounding error below 1, partition size error below S
        let a = stratified_split(&reports, SplitRatios::default(), seed).unwrap();
        let totals = a.partition_counts();
        let n = a.len() as f64;
        let strata = a.stratum_counts();
        let s = strata.len() as f64;
        for c in strata.values() {
            let overall = c.total() as f64 / n;
            for p in Partition::ALL {
                let size = totals.get(p) as f64;
                if size == 0.0 {
                    continue;
                }
                let share = c.get(p) as f64 / size;
                let bound = (1.0 + s * c.total() as f64 / n) / size;
                prop_assert!((share - overall).abs() <= bound + 1e-12);
            }
        }
    }
}
