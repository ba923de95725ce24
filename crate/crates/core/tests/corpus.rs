use daedra_core::corpus::{
    corpus_stats, derive_outcomes, filter_reports, parse_vaers_csv, ErrorPolicy, RawReport, Report, Sex, TextEncoding,
};
use daedra_core::labels::{decode_class, encode_class};
use daedra_core::synth::{marginal_corpus, raw_with_empty_texts, to_raw, write_vaers_csv};
use proptest::prelude::*;

fn flag() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        Just(None),
        Just(Some("Y".to_string())),
        Just(Some("N".to_string())),
        Just(Some("y".to_string())),
        Just(Some(String::new())),
        "[A-Za-z ]{0,3}".prop_map(Some),
    ]
}

fn raw() -> impl Strategy<Value = RawReport> {
    (
        "[0-9]{1,7}",
        prop::option::of("[ a-z]{0,12}"),
        (flag(), flag(), flag(), flag()),
        prop::option::of(prop_oneof![Just(Sex::F), Just(Sex::M), Just(Sex::U)]),
        prop::option::of(0.0f64..120.0),
    )
        .prop_map(
            |(id, text, (died, er_visit, er_ed_visit, hospital), sex, age)| RawReport {
                vaers_id: id,
                symptom_text: text,
                died,
                er_visit,
                er_ed_visit,
                hospital,
                sex,
                age_yrs: age,
            },
        )
}

proptest! {
    #[test]
    fn outcomes_depend_only_on_flags(r in raw(), other in raw()) {
        let mut mixed = other;
        mixed.died = r.died.clone();
        mixed.er_visit = r.er_visit.clone();
        mixed.er_ed_visit = r.er_ed_visit.clone();
        mixed.hospital = r.hospital.clone();
        prop_assert_eq!(derive_outcomes(&r), derive_outcomes(&mixed));
        let y = |f: &Option<String>| f.as_deref() == Some("Y");
        let o = derive_outcomes(&r);
        prop_assert_eq!(o.er, y(&r.er_visit) || y(&r.er_ed_visit));
        prop_assert_eq!(o.hospitalised, y(&r.hospital));
        prop_assert_eq!(o.died, y(&r.died));
    }

    #[test]
    fn filtering_is_idempotent_and_labels_round_trip(rows in prop::collection::vec(raw(), 0..40)) {
        let once: Vec<Report> = filter_reports(rows.clone()).collect();
        let as_raw: Vec<RawReport> = once
            .iter()
            .map(|r| RawReport {
                vaers_id: r.vaers_id.clone(),
                symptom_text: Some(r.text.clone()),
                died: r.outcomes.died.then(|| "Y".into()),
                er_visit: r.outcomes.er.then(|| "Y".into()),
                er_ed_visit: None,
                hospital: r.outcomes.hospitalised.then(|| "Y".into()),
                sex: Some(r.sex),
                age_yrs: r.age_yrs,
            })
            .collect();
        let twice: Vec<Report> = filter_reports(as_raw).collect();
        prop_assert_eq!(&once, &twice);
        for r in &once {
            prop_assert!(!r.text.trim().is_empty());
            prop_assert_eq!(decode_class(r.label()), r.outcomes);
            prop_assert_eq!(encode_class(r.outcomes), r.label());
        }
    }
}

#[test]
fn marginal_corpus_matches_no_event_share() {
    let reports = marginal_corpus(10_000, 77);
    let stats = corpus_stats(&reports);
    assert_eq!(stats.record_count, 10_000);
    let share = stats.class_histogram[&daedra_core::ClassId::NO_EVENT].fraction;
    assert!((share - 0.772).abs() <= 0.01, "{share}");
    let total: f64 = stats.class_histogram.values().map(|c| c.fraction).sum();
    assert!((total - 1.0).abs() <= 1e-9);
    let counted: u64 = stats.class_histogram.values().map(|c| c.count).sum();
    assert_eq!(counted, 10_000);
}

#[test]
fn parse_and_filter_are_deterministic() {
    let rows = raw_with_empty_texts(1000, 228, 9);
    let mut bytes = Vec::new();
    write_vaers_csv(&rows, &mut bytes).unwrap();
    let run = || {
        let parsed = parse_vaers_csv(&bytes[..], TextEncoding::Latin1, ErrorPolicy::Skip).unwrap();
        filter_reports(parsed.reports).collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a.len(), 772);
    assert_eq!(a, run());
}

#[test]
fn latin1_bytes_decode_to_matching_characters() {
    let reports: Vec<Report> = marginal_corpus(3, 1)
        .into_iter()
        .map(|mut r| {
            r.text.push_str(" caf\u{e9} na\u{ef}ve");
            r
        })
        .collect();
    let mut utf8 = Vec::new();
    write_vaers_csv(&to_raw(&reports, 2), &mut utf8).unwrap();
    let latin1: Vec<u8> = String::from_utf8(utf8)
        .unwrap()
        .chars()
        .map(|c| c as u32 as u8)
        .collect();
    let parsed = parse_vaers_csv(&latin1[..], TextEncoding::Latin1, ErrorPolicy::Abort).unwrap();
    let back: Vec<Report> = filter_reports(parsed.reports).collect();
    assert_eq!(back, reports);
}
