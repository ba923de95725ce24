//! Class-wise, averaged and per-event precision/recall/F1, plus the
//! predicted-versus-actual set-combination table.
//!
//! Any ratio whose denominator is zero is reported as 0 and flagged.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassId, EventKind, NUM_CLASSES};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2tp/(2tp+fp+fn).
pub fn prf(c: ConfusionCounts) -> Prf {
    Prf {
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

fn check_lengths(preds: &[ClassId], golds: &[ClassId]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    Ok(())
}

/// One-vs-rest counts for class `c`.
pub fn confusion_for_class(preds: &[ClassId], golds: &[ClassId], c: ClassId) -> Result<ConfusionCounts> {
    check_lengths(preds, golds)?;
    let mut counts = ConfusionCounts::default();
    for (p, g) in preds.iter().zip(golds) {
        counts.add(*p == c, *g == c);
    }
    Ok(counts)
}

/// Binary counts for one event after projecting classes onto their events.
pub fn confusion_for_event(preds: &[ClassId], golds: &[ClassId], e: EventKind) -> Result<ConfusionCounts> {
    check_lengths(preds, golds)?;
    let mut counts = ConfusionCounts::default();
    for (p, g) in preds.iter().zip(golds) {
        counts.add(p.has_event(e), g.has_event(e));
    }
    Ok(counts)
}

fn pooled_counts(preds: &[ClassId], golds: &[ClassId]) -> ConfusionCounts {
    let mut pooled = ConfusionCounts::default();
    for c in ClassId::all() {
        for (p, g) in preds.iter().zip(golds) {
            pooled.add(*p == c, *g == c);
        }
    }
    pooled
}

/// F1 over one-vs-rest counts pooled across all eight classes. For
/// single-label data this equals accuracy.
pub fn micro_f1(preds: &[ClassId], golds: &[ClassId]) -> Result<f64> {
    check_lengths(preds, golds)?;
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(prf(pooled_counts(preds, golds)).f1)
}

pub fn accuracy(preds: &[ClassId], golds: &[ClassId]) -> Result<f64> {
    check_lengths(preds, golds)?;
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub counts: ConfusionCounts,
    /// Some ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetrics {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    #[default]
    Micro,
    Weighted,
}

impl FromStr for F1Average {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "micro" => Ok(F1Average::Micro),
            "weighted" => Ok(F1Average::Weighted),
            other => Err(format!("unknown F1 average '{other}' (expected micro or weighted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub examples: u64,
    pub per_class: BTreeMap<ClassId, ClassMetrics>,
    pub micro: Prf,
    /// Unweighted mean over classes with non-zero support.
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    /// Support-weighted mean over classes.
    pub weighted: Prf,
    pub per_event: BTreeMap<EventKind, EventMetrics>,
}

impl MetricsReport {
    pub fn f1(&self, average: F1Average) -> f64 {
        match average {
            F1Average::Micro => self.micro.f1,
            F1Average::Weighted => self.weighted.f1,
        }
    }
}

pub fn classwise_report(preds: &[ClassId], golds: &[ClassId]) -> Result<MetricsReport> {
    check_lengths(preds, golds)?;
    let mut per_class_counts = [ConfusionCounts::default(); NUM_CLASSES];
    for (p, g) in preds.iter().zip(golds) {
        for c in ClassId::all() {
            per_class_counts[c.index()].add(*p == c, *g == c);
        }
    }
    let mut per_class = BTreeMap::new();
    let mut pooled = ConfusionCounts::default();
    let (mut macro_sum, mut populated) = (Prf::default(), 0usize);
    let mut weighted = Prf::default();
    let n = preds.len() as u64;
    for c in ClassId::all() {
        let counts = per_class_counts[c.index()];
        pooled += counts;
        let m = prf(counts);
        let support = counts.tp + counts.fn_;
        let zero_division = counts.tp + counts.fp == 0 || support == 0;
        if support > 0 {
            populated += 1;
            macro_sum.precision += m.precision;
            macro_sum.recall += m.recall;
            macro_sum.f1 += m.f1;
            let w = support as f64 / n as f64;
            weighted.precision += w * m.precision;
            weighted.recall += w * m.recall;
            weighted.f1 += w * m.f1;
        }
        per_class.insert(
            c,
            ClassMetrics {
                name: c.name(),
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support,
                counts,
                zero_division,
            },
        );
    }
    let macro_avg = if populated == 0 {
        Prf::default()
    } else {
        let k = populated as f64;
        Prf {
            precision: macro_sum.precision / k,
            recall: macro_sum.recall / k,
            f1: macro_sum.f1 / k,
        }
    };
    let per_event = EventKind::ALL
        .into_iter()
        .map(|e| {
            let counts = confusion_for_event(preds, golds, e).expect("lengths checked");
            let m = prf(counts);
            (
                e,
                EventMetrics {
                    counts,
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                },
            )
        })
        .collect();
    Ok(MetricsReport {
        examples: n,
        per_class,
        micro: prf(pooled),
        macro_avg,
        weighted,
        per_event,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchCategory {
    Exact,
    /// Different sets that share at least one event.
    Partial,
    Wrong,
}

pub fn match_category(predicted: ClassId, actual: ClassId) -> MatchCategory {
    if predicted == actual {
        MatchCategory::Exact
    } else if predicted.value() & actual.value() != 0 {
        MatchCategory::Partial
    } else {
        MatchCategory::Wrong
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCombinationCell {
    pub predicted: ClassId,
    pub actual: ClassId,
    pub predicted_events: String,
    pub actual_events: String,
    pub count: u64,
    pub category: MatchCategory,
}

/// 8x8 counts indexed `[predicted][actual]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetCombinationTable {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

fn event_label(c: ClassId) -> String {
    let names: Vec<String> = crate::labels::events_of(c).iter().map(|e| e.to_string()).collect();
    if names.is_empty() {
        "NONE".into()
    } else {
        names.join("+")
    }
}

impl SetCombinationTable {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, predicted: ClassId, actual: ClassId) -> u64 {
        self.counts[predicted.index()][actual.index()]
    }

    pub fn category_totals(&self) -> BTreeMap<&'static str, u64> {
        let mut out = BTreeMap::from([("exact", 0), ("partial", 0), ("wrong", 0)]);
        for cell in self.cells() {
            let key = match cell.category {
                MatchCategory::Exact => "exact",
                MatchCategory::Partial => "partial",
                MatchCategory::Wrong => "wrong",
            };
            *out.get_mut(key).unwrap() += cell.count;
        }
        out
    }

    pub fn cells(&self) -> Vec<SetCombinationCell> {
        let mut out = Vec::with_capacity(NUM_CLASSES * NUM_CLASSES);
        for p in ClassId::all() {
            for a in ClassId::all() {
                out.push(SetCombinationCell {
                    predicted: p,
                    actual: a,
                    predicted_events: event_label(p),
                    actual_events: event_label(a),
                    count: self.count(p, a),
                    category: match_category(p, a),
                });
            }
        }
        out
    }
}

pub fn set_combination_table(preds: &[ClassId], golds: &[ClassId]) -> Result<SetCombinationTable> {
    check_lengths(preds, golds)?;
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (p, g) in preds.iter().zip(golds) {
        counts[p.index()][g.index()] += 1;
    }
    Ok(SetCombinationTable { counts })
}

/// Class-wise table: class, name, precision, recall, f1, support.
pub fn write_classwise_csv<W: Write>(report: &MetricsReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "name", "precision", "recall", "f1", "support"])?;
    for (c, m) in &report.per_class {
        w.write_record([
            c.to_string(),
            m.name.clone(),
            format!("{:.4}", m.precision),
            format!("{:.4}", m.recall),
            format!("{:.4}", m.f1),
            m.support.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Set-combination table in long form, one row per (predicted, actual) pair.
pub fn write_set_combination_csv<W: Write>(table: &SetCombinationTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "predicted",
        "actual",
        "predicted_events",
        "actual_events",
        "count",
        "category",
    ])?;
    for cell in table.cells() {
        let category = serde_json::to_value(cell.category)?;
        w.write_record([
            cell.predicted.to_string(),
            cell.actual.to_string(),
            cell.predicted_events,
            cell.actual_events,
            cell.count.to_string(),
            category.as_str().unwrap_or_default().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
