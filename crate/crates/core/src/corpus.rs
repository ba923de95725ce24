//! VAERS ingestion: a streaming RFC 4180 reader, outcome derivation, text
//! filtering, corpus statistics and the canonical JSONL record store.
//!
//! The reader holds one record in memory at a time. It is strict about
//! quoting: a quote inside an unquoted field, stray bytes after a closing
//! quote, an unterminated quoted field, or a field count that differs from
//! the header make the row malformed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{encode_class, ClassId, OutcomeSet};

const UTF8_BOM: &[u8] = b"\xEF\xBB\xBF";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextEncoding {
    #[default]
    Latin1,
    Utf8,
}

impl FromStr for TextEncoding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "latin1" | "latin-1" | "iso-8859-1" => Ok(TextEncoding::Latin1),
            "utf8" | "utf-8" => Ok(TextEncoding::Utf8),
            other => Err(format!("unknown encoding '{other}' (expected latin1 or utf8)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPolicy {
    /// Drop malformed rows and count them.
    #[default]
    Skip,
    /// Fail on the first malformed row.
    Abort,
}

impl FromStr for ErrorPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "skip" | "skip-and-count" => Ok(ErrorPolicy::Skip),
            "abort" => Ok(ErrorPolicy::Abort),
            other => Err(format!("unknown error policy '{other}' (expected skip or abort)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
    #[default]
    U,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::F, Sex::M, Sex::U];

    fn parse(s: &str) -> Option<Sex> {
        match s.trim() {
            "F" => Some(Sex::F),
            "M" => Some(Sex::M),
            "U" => Some(Sex::U),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::F => "F",
            Sex::M => "M",
            Sex::U => "U",
        })
    }
}

/// One VAERS data row, restricted to the columns the pipeline uses.
///
/// Flag columns keep their raw cell value; only an exact `"Y"` counts as set.
/// Empty cells and absent columns are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawReport {
    pub vaers_id: String,
    pub symptom_text: Option<String>,
    pub died: Option<String>,
    pub er_visit: Option<String>,
    pub er_ed_visit: Option<String>,
    pub hospital: Option<String>,
    pub sex: Option<Sex>,
    pub age_yrs: Option<f64>,
}

fn flag_set(flag: &Option<String>) -> bool {
    flag.as_deref() == Some("Y")
}

pub fn derive_outcomes(raw: &RawReport) -> OutcomeSet {
    OutcomeSet {
        er: flag_set(&raw.er_visit) || flag_set(&raw.er_ed_visit),
        hospitalised: flag_set(&raw.hospital),
        died: flag_set(&raw.died),
    }
}

/// A filtered report: valid narrative plus demographics and outcomes.
///
/// Serialises as the canonical JSONL record
/// `{"id", "text", "sex", "age", "label"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CorpusRecord", try_from = "CorpusRecord")]
pub struct Report {
    pub vaers_id: String,
    pub text: String,
    pub sex: Sex,
    pub age_yrs: Option<f64>,
    pub outcomes: OutcomeSet,
}

impl Report {
    pub fn label(&self) -> ClassId {
        encode_class(self.outcomes)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusRecord {
    id: String,
    text: String,
    sex: Sex,
    age: Option<f64>,
    label: ClassId,
}

impl From<Report> for CorpusRecord {
    fn from(r: Report) -> Self {
        let label = r.label();
        CorpusRecord {
            id: r.vaers_id,
            text: r.text,
            sex: r.sex,
            age: r.age_yrs,
            label,
        }
    }
}

impl TryFrom<CorpusRecord> for Report {
    type Error = String;

    fn try_from(r: CorpusRecord) -> std::result::Result<Self, Self::Error> {
        if r.id.is_empty() {
            return Err("record has an empty id".into());
        }
        if r.text.trim().is_empty() {
            return Err(format!("record {} has empty text", r.id));
        }
        Ok(Report {
            vaers_id: r.id,
            text: r.text,
            sex: r.sex,
            age_yrs: r.age.filter(|a| a.is_finite() && *a >= 0.0),
            outcomes: r.label.into(),
        })
    }
}

/// Keep a record only if its narrative is non-empty after trimming.
pub fn filter_report(raw: RawReport) -> Option<Report> {
    let outcomes = derive_outcomes(&raw);
    let text = raw.symptom_text?;
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return None;
    }
    Some(Report {
        vaers_id: raw.vaers_id,
        text: trimmed.to_string(),
        sex: raw.sex.unwrap_or_default(),
        age_yrs: raw.age_yrs,
        outcomes,
    })
}

pub fn filter_reports<I>(raws: I) -> impl Iterator<Item = Report>
where
    I: IntoIterator<Item = RawReport>,
{
    raws.into_iter().filter_map(filter_report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub count: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub record_count: u64,
    pub word_count: u64,
    pub class_histogram: BTreeMap<ClassId, ClassShare>,
}

/// Streaming accumulator behind [`corpus_stats`]; shards can be merged.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    records: u64,
    words: u64,
    counts: [u64; crate::NUM_CLASSES],
}

impl StatsAccumulator {
    pub fn push(&mut self, report: &Report) {
        self.records += 1;
        self.words += report.text.split_whitespace().count() as u64;
        self.counts[report.label().index()] += 1;
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.records += other.records;
        self.words += other.words;
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn finish(&self) -> CorpusStats {
        let class_histogram = ClassId::all()
            .filter(|c| self.counts[c.index()] > 0)
            .map(|c| {
                let count = self.counts[c.index()];
                let fraction = count as f64 / self.records as f64;
                (c, ClassShare { count, fraction })
            })
            .collect();
        CorpusStats {
            record_count: self.records,
            word_count: self.words,
            class_histogram,
        }
    }
}

pub fn corpus_stats<'a, I>(reports: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a Report>,
{
    let mut acc = StatsAccumulator::default();
    for r in reports {
        acc.push(r);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy)]
struct ColumnMap {
    width: usize,
    id: usize,
    text: Option<usize>,
    died: Option<usize>,
    er_visit: Option<usize>,
    er_ed_visit: Option<usize>,
    hospital: Option<usize>,
    sex: Option<usize>,
    age: Option<usize>,
}

impl ColumnMap {
    fn from_header(header: &[String]) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        Ok(ColumnMap {
            width: header.len(),
            id: find("VAERS_ID").ok_or(Error::MissingIdColumn)?,
            text: find("SYMPTOM_TEXT"),
            died: find("DIED"),
            er_visit: find("ER_VISIT"),
            er_ed_visit: find("ER_ED_VISIT"),
            hospital: find("HOSPITAL"),
            sex: find("SEX"),
            age: find("AGE_YRS"),
        })
    }
}

enum RowRead {
    Eof,
    Row { line: u64 },
    Malformed { line: u64, reason: String },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    FieldStart,
    Unquoted,
    Quoted,
    QuoteInQuoted,
    Skip,
}

/// Streaming VAERS CSV reader yielding [`RawReport`]s.
pub struct VaersReader<R> {
    input: R,
    encoding: TextEncoding,
    policy: ErrorPolicy,
    columns: ColumnMap,
    fields: Vec<Vec<u8>>,
    line: u64,
    errors: u64,
    rows: u64,
    finished: bool,
}

impl<R: Read> VaersReader<BufReader<R>> {
    pub fn from_reader(reader: R, encoding: TextEncoding, policy: ErrorPolicy) -> Result<Self> {
        Self::new(BufReader::with_capacity(1 << 16, reader), encoding, policy)
    }
}

impl VaersReader<BufReader<File>> {
    pub fn open(path: &Path, encoding: TextEncoding, policy: ErrorPolicy) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_reader(file, encoding, policy)
    }
}

impl<R: BufRead> VaersReader<R> {
    /// Reads the header row. A UTF-8 byte order mark overrides `encoding`.
    pub fn new(mut input: R, encoding: TextEncoding, policy: ErrorPolicy) -> Result<Self> {
        let mut encoding = encoding;
        let buf = input.fill_buf()?;
        if buf.starts_with(UTF8_BOM) {
            input.consume(UTF8_BOM.len());
            encoding = TextEncoding::Utf8;
        }
        let mut reader = VaersReader {
            input,
            encoding,
            policy,
            columns: ColumnMap {
                width: 0,
                id: 0,
                text: None,
                died: None,
                er_visit: None,
                er_ed_visit: None,
                hospital: None,
                sex: None,
                age: None,
            },
            fields: Vec::new(),
            line: 1,
            errors: 0,
            rows: 0,
            finished: false,
        };
        match reader.read_row()? {
            RowRead::Eof => return Err(Error::MissingIdColumn),
            RowRead::Malformed { line, reason } => return Err(Error::MalformedRecord { line, reason }),
            RowRead::Row { .. } => {}
        }
        let header: Vec<String> = reader.fields.iter().map(|f| reader.decode(f)).collect();
        reader.columns = ColumnMap::from_header(&header)?;
        Ok(reader)
    }

    pub fn encoding(&self) -> TextEncoding {
        self.encoding
    }

    /// Malformed rows skipped so far.
    pub fn error_count(&self) -> u64 {
        self.errors
    }

    /// Well-formed data rows yielded so far.
    pub fn row_count(&self) -> u64 {
        self.rows
    }

    fn decode(&self, bytes: &[u8]) -> String {
        match self.encoding {
            TextEncoding::Latin1 => bytes.iter().map(|&b| b as char).collect(),
            TextEncoding::Utf8 => String::from_utf8_lossy(bytes).into_owned(),
        }
    }

    /// Reads one physical record into `self.fields`. Blank lines are skipped.
    fn read_row(&mut self) -> Result<RowRead> {
        self.fields.clear();
        let mut field: Vec<u8> = Vec::new();
        let mut state = State::FieldStart;
        let mut error: Option<String> = None;
        let mut started = false;
        let mut start_line = self.line;

        loop {
            let buf = self.input.fill_buf()?;
            if buf.is_empty() {
                // end of input
                return Ok(match state {
                    State::Skip => RowRead::Malformed {
                        line: start_line,
                        reason: error.unwrap_or_default(),
                    },
                    State::Quoted => RowRead::Malformed {
                        line: start_line,
                        reason: "unterminated quoted field".into(),
                    },
                    _ if !started => RowRead::Eof,
                    _ => {
                        self.fields.push(std::mem::take(&mut field));
                        RowRead::Row { line: start_line }
                    }
                });
            }
            let mut used = 0;
            let mut complete = None;
            for &b in buf {
                used += 1;
                if b == b'\n' {
                    self.line += 1;
                }
                match state {
                    State::Skip => {
                        if b == b'\n' {
                            complete = Some(RowRead::Malformed {
                                line: start_line,
                                reason: error.take().unwrap_or_default(),
                            });
                            break;
                        }
                    }
                    State::FieldStart | State::Unquoted => match b {
                        b',' => {
                            started = true;
                            self.fields.push(std::mem::take(&mut field));
                            state = State::FieldStart;
                        }
                        b'\r' => {}
                        b'\n' => {
                            if !started && state == State::FieldStart {
                                // blank line
                                start_line = self.line;
                                continue;
                            }
                            self.fields.push(std::mem::take(&mut field));
                            complete = Some(RowRead::Row { line: start_line });
                            break;
                        }
                        b'"' if state == State::FieldStart => {
                            started = true;
                            state = State::Quoted;
                        }
                        b'"' => {
                            error = Some("quote inside unquoted field".into());
                            state = State::Skip;
                        }
                        _ => {
                            started = true;
                            field.push(b);
                            state = State::Unquoted;
                        }
                    },
                    State::Quoted => {
                        if b == b'"' {
                            state = State::QuoteInQuoted;
                        } else {
                            field.push(b);
                        }
                    }
                    State::QuoteInQuoted => match b {
                        b'"' => {
                            field.push(b'"');
                            state = State::Quoted;
                        }
                        b',' => {
                            self.fields.push(std::mem::take(&mut field));
                            state = State::FieldStart;
                        }
                        b'\r' => {}
                        b'\n' => {
                            self.fields.push(std::mem::take(&mut field));
                            complete = Some(RowRead::Row { line: start_line });
                            break;
                        }
                        _ => {
                            error = Some("unexpected character after closing quote".into());
                            state = State::Skip;
                        }
                    },
                }
            }
            self.input.consume(used);
            if let Some(result) = complete {
                return Ok(result);
            }
        }
    }

    fn cell(&self, idx: Option<usize>) -> Option<String> {
        let idx = idx?;
        let value = self.decode(&self.fields[idx]);
        if value.is_empty() {
            None
        } else {
            Some(value)
        }
    }

    fn build(&self) -> std::result::Result<RawReport, String> {
        let cols = self.columns;
        if self.fields.len() != cols.width {
            return Err(format!("expected {} fields, found {}", cols.width, self.fields.len()));
        }
        let vaers_id = self.decode(&self.fields[cols.id]).trim().to_string();
        if vaers_id.is_empty() {
            return Err("empty VAERS_ID".into());
        }
        let age_yrs = self
            .cell(cols.age)
            .and_then(|a| a.trim().parse::<f64>().ok())
            .filter(|a| a.is_finite() && *a >= 0.0);
        Ok(RawReport {
            vaers_id,
            symptom_text: cols.text.map(|i| self.decode(&self.fields[i])),
            died: self.cell(cols.died),
            er_visit: self.cell(cols.er_visit),
            er_ed_visit: self.cell(cols.er_ed_visit),
            hospital: self.cell(cols.hospital),
            sex: self.cell(cols.sex).as_deref().and_then(Sex::parse),
            age_yrs,
        })
    }

    /// Next well-formed report, `None` at end of input.
    pub fn next_report(&mut self) -> Result<Option<RawReport>> {
        loop {
            if self.finished {
                return Ok(None);
            }
            let outcome = match self.read_row()? {
                RowRead::Eof => {
                    self.finished = true;
                    return Ok(None);
                }
                RowRead::Row { line } => self.build().map_err(|reason| (line, reason)),
                RowRead::Malformed { line, reason } => Err((line, reason)),
            };
            match outcome {
                Ok(report) => {
                    self.rows += 1;
                    return Ok(Some(report));
                }
                Err((line, reason)) => {
                    self.errors += 1;
                    if self.policy == ErrorPolicy::Abort {
                        self.finished = true;
                        return Err(Error::MalformedRecord { line, reason });
                    }
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for VaersReader<R> {
    type Item = Result<RawReport>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_report().transpose()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCsv {
    pub reports: Vec<RawReport>,
    pub errors: u64,
}

/// Collects every well-formed row of a VAERS CSV byte stream.
pub fn parse_vaers_csv<R: Read>(stream: R, encoding: TextEncoding, policy: ErrorPolicy) -> Result<ParsedCsv> {
    let mut reader = VaersReader::from_reader(stream, encoding, policy)?;
    let mut reports = Vec::new();
    while let Some(r) = reader.next_report()? {
        reports.push(r);
    }
    Ok(ParsedCsv {
        reports,
        errors: reader.error_count(),
    })
}

/// Streaming reader over a JSONL record store.
pub struct JsonlReader<R> {
    lines: std::io::Lines<R>,
    line: u64,
}

impl JsonlReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
        Ok(JsonlReader::new(BufReader::new(file)))
    }
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(input: R) -> Self {
        JsonlReader {
            lines: input.lines(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<Report>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&line).map_err(Error::from));
        }
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Report>> {
    JsonlReader::open(path)?.collect()
}

pub fn write_jsonl<'a, W, I>(out: W, reports: I) -> Result<u64>
where
    W: Write,
    I: IntoIterator<Item = &'a Report>,
{
    let mut out = BufWriter::new(out);
    let mut n = 0;
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}
