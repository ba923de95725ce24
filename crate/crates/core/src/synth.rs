//! Seeded synthetic corpora and VAERS-shaped CSV fixtures for tests,
//! benchmarks and demos.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{RawReport, Report, Sex};
use crate::error::Result;
use crate::labels::{decode_class, ClassId, NUM_CLASSES};

/// Share of no-event, ER-only and hospitalisation-only records in the real
/// corpus. The remaining mass is spread evenly over classes 3 to 7.
pub const NO_EVENT_SHARE: f64 = 0.772;
pub const ER_ONLY_SHARE: f64 = 0.148;
pub const HOSP_ONLY_SHARE: f64 = 0.039;

pub fn marginal_class_weights() -> [f64; NUM_CLASSES] {
    let rest = (1.0 - NO_EVENT_SHARE - ER_ONLY_SHARE - HOSP_ONLY_SHARE) / 5.0;
    [
        NO_EVENT_SHARE,
        ER_ONLY_SHARE,
        HOSP_ONLY_SHARE,
        rest,
        rest,
        rest,
        rest,
        rest,
    ]
}

const NEUTRAL_WORDS: &[&str] = &[
    "patient",
    "received",
    "vaccine",
    "dose",
    "reported",
    "after",
    "injection",
    "site",
    "arm",
    "left",
    "right",
    "the",
    "and",
    "was",
    "with",
    "on",
    "day",
    "two",
    "hours",
    "later",
    "noted",
    "symptoms",
    "pain",
    "fever",
    "headache",
    "fatigue",
    "chills",
    "nausea",
    "swelling",
    "redness",
    "rash",
    "dizziness",
    "myalgia",
];

const ER_WORDS: &[&str] = &["emergency", "department", "ambulance", "triage", "urgent"];
const HOSP_WORDS: &[&str] = &["admitted", "inpatient", "ward", "discharged", "overnight"];
const DEATH_WORDS: &[&str] = &["deceased", "autopsy", "expired", "fatal", "death"];

fn draw_class(rng: &mut ChaCha8Rng, weights: &[f64; NUM_CLASSES]) -> ClassId {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return ClassId::new(k as u8).expect("k < 8");
        }
        u -= w;
    }
    ClassId::new(NUM_CLASSES as u8 - 1).expect("7 is valid")
}

/// 5% unknown sex with missing age, otherwise F or M with an age in
/// [0.5, 95]. Ten sex-by-quintile strata plus `U|UNKNOWN` make eleven.
fn demographics(rng: &mut ChaCha8Rng) -> (Sex, Option<f64>) {
    let u: f64 = rng.random();
    if u < 0.05 {
        return (Sex::U, None);
    }
    let sex = if u < 0.65 { Sex::F } else { Sex::M };
    let age = (rng.random_range(0.5..95.0f64) * 10.0).round() / 10.0;
    (sex, Some(age))
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

/// Records whose labels follow the published class marginals. Texts mix
/// neutral words with event cue words that are present most of the time.
pub fn marginal_corpus(n: usize, seed: u64) -> Vec<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = marginal_class_weights();
    (0..n)
        .map(|i| {
            let class = draw_class(&mut rng, &weights);
            let outcomes = decode_class(class);
            let (sex, age_yrs) = demographics(&mut rng);
            let mut words: Vec<&str> = (0..rng.random_range(6..16))
                .map(|_| pick(&mut rng, NEUTRAL_WORDS))
                .collect();
            for (present, cues) in [
                (outcomes.er, ER_WORDS),
                (outcomes.hospitalised, HOSP_WORDS),
                (outcomes.died, DEATH_WORDS),
            ] {
                let p = if present { 0.85 } else { 0.03 };
                if rng.random_bool(p) {
                    let at = rng.random_range(0..=words.len());
                    words.insert(at, pick(&mut rng, cues));
                }
            }
            Report {
                vaers_id: format!("{:07}", i + 1),
                text: words.join(" "),
                sex,
                age_yrs,
                outcomes,
            }
        })
        .collect()
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Twelve pseudo-words per class, pairwise disjoint across classes.
pub fn class_lexicons(seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e8c);
    let mut used: BTreeSet<String> = NEUTRAL_WORDS.iter().map(|w| w.to_string()).collect();
    (0..NUM_CLASSES)
        .map(|_| {
            let mut words = Vec::new();
            while words.len() < 12 {
                let syllables = rng.random_range(3..5);
                let w: String = (0..syllables)
                    .map(|_| format!("{}{}", pick(&mut rng, ONSETS), pick(&mut rng, VOWELS)))
                    .collect();
                if used.insert(w.clone()) {
                    words.push(w);
                }
            }
            words
        })
        .collect()
}

/// Balanced eight-class corpus in which every class draws its marker words
/// from its own lexicon, so the classes are linearly separable.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<Report> {
    let lexicons = class_lexicons(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = ClassId::new((i % NUM_CLASSES) as u8).expect("k < 8");
            let lexicon: Vec<&str> = lexicons[class.index()].iter().map(String::as_str).collect();
            let mut words: Vec<&str> = (0..rng.random_range(3..8))
                .map(|_| pick(&mut rng, NEUTRAL_WORDS))
                .collect();
            for _ in 0..rng.random_range(3..6) {
                let at = rng.random_range(0..=words.len());
                words.insert(at, pick(&mut rng, &lexicon));
            }
            let (sex, age_yrs) = demographics(&mut rng);
            Report {
                vaers_id: format!("S{:06}", i + 1),
                text: words.join(" "),
                sex,
                age_yrs,
                outcomes: decode_class(class),
            }
        })
        .collect()
}

/// Raw form of a report. ER is flagged through ER_VISIT, ER_ED_VISIT or
/// both, the way different form versions record it. Unset flags are
/// empty or, occasionally, "N".
pub fn to_raw(reports: &[Report], seed: u64) -> Vec<RawReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flag = |set: bool, rng: &mut ChaCha8Rng| -> Option<String> {
        if set {
            Some("Y".into())
        } else if rng.random_bool(0.1) {
            Some("N".into())
        } else {
            None
        }
    };
    reports
        .iter()
        .map(|r| {
            let (via_visit, via_ed) = match (r.outcomes.er, rng.random_range(0..3)) {
                (false, _) => (false, false),
                (true, 0) => (true, false),
                (true, 1) => (false, true),
                (true, _) => (true, true),
            };
            RawReport {
                vaers_id: r.vaers_id.clone(),
                symptom_text: Some(r.text.clone()),
                died: flag(r.outcomes.died, &mut rng),
                er_visit: flag(via_visit, &mut rng),
                er_ed_visit: flag(via_ed, &mut rng),
                hospital: flag(r.outcomes.hospitalised, &mut rng),
                sex: Some(r.sex),
                age_yrs: r.age_yrs,
            }
        })
        .collect()
}

pub const VAERS_HEADER: [&str; 14] = [
    "VAERS_ID",
    "RECVDATE",
    "STATE",
    "AGE_YRS",
    "CAGE_YR",
    "SEX",
    "SYMPTOM_TEXT",
    "DIED",
    "DATEDIED",
    "L_THREAT",
    "ER_VISIT",
    "HOSPITAL",
    "HOSPDAYS",
    "ER_ED_VISIT",
];

fn raw_row(r: &RawReport) -> [String; 14] {
    let s = |v: &Option<String>| v.clone().unwrap_or_default();
    let age = r.age_yrs.map(|a| a.to_string()).unwrap_or_default();
    [
        r.vaers_id.clone(),
        "01/15/2021".into(),
        "CA".into(),
        age.clone(),
        age.split('.').next().unwrap_or_default().to_string(),
        r.sex.map(|x| x.to_string()).unwrap_or_default(),
        s(&r.symptom_text),
        s(&r.died),
        String::new(),
        String::new(),
        s(&r.er_visit),
        s(&r.hospital),
        String::new(),
        s(&r.er_ed_visit),
    ]
}

/// Write rows under [`VAERS_HEADER`] as RFC 4180 CSV with CRLF line ends.
pub fn write_vaers_csv<W: Write>(rows: &[RawReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(out);
    w.write_record(VAERS_HEADER)?;
    for r in rows {
        w.write_record(raw_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Corpus of `n` raw reports where exactly `empty` have no usable text
/// (missing, empty or whitespace only), spread evenly through the file.
pub fn raw_with_empty_texts(n: usize, empty: usize, seed: u64) -> Vec<RawReport> {
    assert!(empty <= n, "cannot blank more records than exist");
    let mut rows = to_raw(&marginal_corpus(n, seed), seed.wrapping_add(1));
    for j in 0..empty {
        let idx = j * n / empty.max(1);
        rows[idx].symptom_text = match j % 3 {
            0 => None,
            1 => Some(String::new()),
            _ => Some("  \t ".into()),
        };
    }
    rows
}

/// A CSV export of `n` rows in which the rows at `corrupt` (0-based data
/// row indices) are malformed: a bare quote in an unquoted field, text
/// after a closing quote, or a missing column, in rotation.
pub fn vaers_csv_with_malformed_rows(n: usize, corrupt: &[usize], seed: u64) -> Result<Vec<u8>> {
    let rows = to_raw(&marginal_corpus(n, seed), seed.wrapping_add(1));
    let mut out = Vec::new();
    write_vaers_csv(&[], &mut out)?;
    for (i, r) in rows.iter().enumerate() {
        let mut line = Vec::new();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::CRLF)
                .from_writer(&mut line);
            w.write_record(raw_row(r))?;
            w.flush()?;
        }
        if let Some(k) = corrupt.iter().position(|&c| c == i) {
            let mut fields: Vec<String> = raw_row(r).to_vec();
            let bad = match k % 3 {
                0 => {
                    fields[6] = "pt said \"ouch\" loudly".into();
                    fields.join(",")
                }
                1 => {
                    fields[6] = "\"fever\"ish".into();
                    fields.join(",")
                }
                _ => {
                    fields.pop();
                    fields
                        .iter()
                        .map(|f| format!("\"{}\"", f.replace('"', "\"\"")))
                        .collect::<Vec<_>>()
                        .join(",")
                }
            };
            line = format!("{bad}\r\n").into_bytes();
        }
        out.extend_from_slice(&line);
    }
    Ok(out)
}
