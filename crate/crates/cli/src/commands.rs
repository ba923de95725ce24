use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use daedra_core::corpus::{
    corpus_stats, filter_report, read_jsonl, write_jsonl, ErrorPolicy, Report, TextEncoding, VaersReader,
};
use daedra_core::evaluation::{
    classwise_report, set_combination_table, write_classwise_csv, write_set_combination_csv, MetricsReport,
    SetCombinationTable,
};
use daedra_core::labels::{decode_class, ClassId};
use daedra_core::model::{train_with, Checkpoint, Classifier, HistoryEntry, TrainConfig};
use daedra_core::selection::{
    render_table, run_comparison, select_best, CandidateConfig, CandidateKind, ComparisonOptions, ComparisonReport,
    TokenizerSource,
};
use daedra_core::splitter::{
    age_quintiles, stratified_split, stratified_subsample, stratum_of, Member, Partition, SplitAssignment,
    SplitManifest, SplitRatios,
};
use daedra_core::tokenizer::{encode, load_vocab, pretokenize, save_vocab, tokenize, train_wordpiece, Vocabulary};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::{PipelineConfig, Profile};
use crate::manifest::{
    guard_dir, guard_distinct, guard_file, sidecar_path, write_json, ManifestBuilder, DIRECTORY_MANIFEST,
};
use crate::Command;

pub const SPLIT_MANIFEST: &str = "split-manifest.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const BEST_FILE: &str = "best.json";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            input,
            output,
            encoding,
            on_error,
            force,
        } => ingest(&input, &output, encoding, on_error, force),
        Command::Stats { input, output, force } => stats(&input, output.as_deref(), force),
        Command::Split {
            input,
            seed,
            ratios,
            output,
            config,
            force,
        } => split(&input, seed, ratios.as_deref(), &output, config.as_deref(), force),
        Command::TrainTokenizer {
            input,
            vocab_size,
            min_freq,
            output,
            config,
            force,
        } => train_tokenizer(&input, vocab_size, min_freq, &output, config.as_deref(), force),
        Command::Tokenize { vocab, text, max_len } => tokenize_text(&vocab, &text, max_len),
        Command::Compare {
            candidates,
            train,
            test,
            fraction,
            seed,
            epsilon,
            parallel,
            profile,
            config,
            out,
            force,
        } => compare(CompareArgs {
            candidates: &candidates,
            train: &train,
            test: &test,
            fraction,
            seed,
            epsilon,
            parallel,
            profile,
            config: config.as_deref(),
            out: &out,
            force,
        }),
        Command::Train {
            train,
            test,
            vocab,
            seed,
            profile,
            config,
            out_dir,
            force,
        } => train_model(&train, &test, &vocab, seed, profile, config.as_deref(), &out_dir, force),
        Command::Evaluate {
            checkpoint,
            vocab,
            data,
            out,
            csv,
            force,
        } => evaluate(&checkpoint, &vocab, &data, &out, csv, force),
        Command::Predict {
            checkpoint,
            vocab,
            text,
        } => predict(&checkpoint, &vocab, &text),
        Command::Export {
            input,
            vocab,
            output,
            max_len,
            force,
        } => export(&input, &vocab, &output, max_len, force),
        Command::Verify { manifest } => verify(&manifest),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_reports(path: &Path) -> Result<Vec<Report>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    rows: u64,
    malformed_rows: u64,
    filtered_out: u64,
    duplicate_ids: u64,
    written: u64,
}

fn ingest(inputs: &[PathBuf], output: &Path, encoding: TextEncoding, policy: ErrorPolicy, force: bool) -> Result<()> {
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    guard_distinct(&input_refs, &[output])?;
    guard_file(output, force)?;
    let config = serde_json::json!({ "encoding": encoding, "on_error": policy, "inputs": inputs });
    let builder = ManifestBuilder::start("ingest", None, &config, &input_refs)?;

    let mut summary = IngestSummary {
        rows: 0,
        malformed_rows: 0,
        filtered_out: 0,
        duplicate_ids: 0,
        written: 0,
    };
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for path in inputs {
        let mut reader =
            VaersReader::open(path, encoding, policy).with_context(|| format!("opening {}", path.display()))?;
        while let Some(raw) = reader
            .next_report()
            .with_context(|| format!("parsing {}", path.display()))?
        {
            let Some(report) = filter_report(raw) else {
                summary.filtered_out += 1;
                continue;
            };
            // first occurrence wins
            if !seen.insert(report.vaers_id.clone()) {
                summary.duplicate_ids += 1;
                continue;
            }
            kept.push(report);
        }
        summary.rows += reader.row_count();
        summary.malformed_rows += reader.error_count();
        info!(file = %path.display(), rows = reader.row_count(), malformed = reader.error_count(), "parsed");
    }
    if summary.duplicate_ids > 0 {
        warn!(count = summary.duplicate_ids, "dropped reports with repeated VAERS_ID");
    }
    summary.written = write_jsonl(create(output)?, &kept)?;
    builder.finish(&[output.to_path_buf()], &summary, &sidecar_path(output))?;
    println!(
        "ingest: {} rows, {} malformed, {} filtered, {} duplicates, {} records -> {}",
        summary.rows,
        summary.malformed_rows,
        summary.filtered_out,
        summary.duplicate_ids,
        summary.written,
        output.display()
    );
    Ok(())
}

fn stats(input: &Path, output: Option<&Path>, force: bool) -> Result<()> {
    let reports = read_reports(input)?;
    let s = corpus_stats(&reports);
    println!("records {}  words {}", s.record_count, s.word_count);
    for (class, share) in &s.class_histogram {
        println!(
            "  class {class} {:<46} {:>9}  {:.4}",
            class.name(),
            share.count,
            share.fraction
        );
    }
    if let Some(out) = output {
        guard_distinct(&[input], &[out])?;
        guard_file(out, force)?;
        let builder = ManifestBuilder::start("stats", None, &serde_json::json!({}), &[input])?;
        write_json(out, &s)?;
        builder.finish(&[out.to_path_buf()], &(), &sidecar_path(out))?;
    }
    Ok(())
}

fn parse_ratios(text: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad ratio '{p}'")))
        .collect::<Result<_>>()?;
    ensure!(parts.len() == 3, "expected three ratios, got {}", parts.len());
    Ok(SplitRatios::new(parts[0], parts[1], parts[2])?)
}

fn split(
    input: &Path,
    seed: Option<u64>,
    ratios: Option<&str>,
    out_dir: &Path,
    config: Option<&Path>,
    force: bool,
) -> Result<()> {
    let cfg = PipelineConfig::load_or_default(config)?;
    let seed = seed.unwrap_or(cfg.split.seed);
    let ratios = match ratios {
        Some(r) => parse_ratios(r)?,
        None => {
            let [a, b, c] = cfg.split.ratios;
            SplitRatios::new(a, b, c)?
        }
    };
    guard_dir(out_dir, force)?;
    let mut inputs = vec![input];
    inputs.extend(config);
    let builder = ManifestBuilder::start("split", Some(seed), &serde_json::json!({ "ratios": ratios }), &inputs)?;

    let reports = read_reports(input)?;
    let assignment = stratified_split(&reports, ratios, seed)?;
    let mut outputs = Vec::new();
    for p in Partition::ALL {
        let path = out_dir.join(format!("{}.jsonl", p.file_stem()));
        let part = reports
            .iter()
            .filter(|r| assignment.partition_of(&r.vaers_id) == Some(p));
        let n = write_jsonl(create(&path)?, part)?;
        println!("split: {:<10} {n:>9} -> {}", p.file_stem(), path.display());
        outputs.push(path);
    }
    let manifest = SplitManifest::from_assignment(&assignment);
    let manifest_path = out_dir.join(SPLIT_MANIFEST);
    write_json(&manifest_path, &manifest)?;
    outputs.push(manifest_path);
    builder.finish(&outputs, &manifest.totals, &out_dir.join(DIRECTORY_MANIFEST))?;
    Ok(())
}

fn train_tokenizer(
    input: &Path,
    vocab_size: Option<usize>,
    min_freq: Option<u64>,
    output: &Path,
    config: Option<&Path>,
    force: bool,
) -> Result<()> {
    let cfg = PipelineConfig::load_or_default(config)?;
    let vocab_size = vocab_size.unwrap_or(cfg.tokenizer.vocab_size);
    let min_frequency = min_freq.unwrap_or(cfg.tokenizer.min_frequency);
    guard_distinct(&[input], &[output])?;
    guard_file(output, force)?;
    let settings = serde_json::json!({ "vocab_size": vocab_size, "min_frequency": min_frequency });
    let mut inputs = vec![input];
    inputs.extend(config);
    let builder = ManifestBuilder::start("train-tokenizer", None, &settings, &inputs)?;

    let reports = read_reports(input)?;
    let texts: Vec<&str> = reports.iter().map(|r| r.text.as_str()).collect();
    let vocab = train_wordpiece(&texts, vocab_size, min_frequency)?;
    if vocab.len() < vocab_size {
        warn!(
            target = vocab_size,
            trained = vocab.len(),
            "no pair reached min_frequency before the target size"
        );
    }
    save_vocab(&vocab, output)?;
    builder.finish(
        &[output.to_path_buf()],
        &serde_json::json!({ "entries": vocab.len() }),
        &sidecar_path(output),
    )?;
    println!("train-tokenizer: {} entries -> {}", vocab.len(), output.display());
    Ok(())
}

fn tokenize_text(vocab_path: &Path, text: &str, max_len: usize) -> Result<()> {
    ensure!(max_len >= 2, "--max-len must be at least 2");
    let vocab = load_vocab(vocab_path)?;
    for word in pretokenize(text) {
        let pieces = tokenize(&word, &vocab);
        let ids: Vec<String> = pieces
            .iter()
            .map(|p| vocab.id_of(p).map_or_else(|| "?".into(), |id| id.0.to_string()))
            .collect();
        println!("{word}\t{}\t{}", pieces.join(" "), ids.join(" "));
    }
    let e = encode(text, &vocab, max_len);
    let ids: Vec<String> = e.ids.iter().map(|id| id.0.to_string()).collect();
    println!("input_ids\t{}", ids.join(" "));
    if e.truncated {
        println!("truncated at {max_len}");
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateFile {
    candidates: Vec<CandidateConfig>,
}

/// Vocabulary paths in a candidates file are relative to that file.
fn load_candidates(path: &Path) -> Result<Vec<CandidateConfig>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut file: CandidateFile = if is_json {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    let base = path.parent().unwrap_or(Path::new(""));
    for c in &mut file.candidates {
        if let CandidateKind::Train {
            tokenizer: TokenizerSource::File { path: vocab },
            ..
        } = &mut c.kind
        {
            if vocab.is_relative() {
                *vocab = base.join(&*vocab);
            }
        }
    }
    Ok(file.candidates)
}

/// Treat every report as a training member so the splitter's subsampler
/// applies with strata computed over this population.
fn training_assignment(reports: &[Report], seed: u64) -> SplitAssignment {
    let quintiles = age_quintiles(reports.iter().filter_map(|r| r.age_yrs)).ok();
    let members = reports
        .iter()
        .map(|r| {
            let m = Member {
                partition: Partition::Train,
                stratum: stratum_of(r, quintiles.as_ref()),
            };
            (r.vaers_id.clone(), m)
        })
        .collect();
    SplitAssignment {
        seed,
        ratios: SplitRatios::default(),
        algorithm: daedra_core::rng::ALGORITHM_ID.to_string(),
        quintiles,
        members,
    }
}

struct CompareArgs<'a> {
    candidates: &'a Path,
    train: &'a Path,
    test: &'a Path,
    fraction: Option<f64>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    parallel: bool,
    profile: Option<Profile>,
    config: Option<&'a Path>,
    out: &'a Path,
    force: bool,
}

fn compare(a: CompareArgs) -> Result<()> {
    let cfg = PipelineConfig::load_or_default(a.config)?;
    let seed = a.seed.unwrap_or(cfg.compare.seed);
    let fraction = a.fraction.unwrap_or(cfg.compare.fraction);
    let epsilon = a.epsilon.unwrap_or(cfg.compare.epsilon);
    let parallel = a.parallel || cfg.compare.parallel;
    let base = TrainConfig {
        seed,
        ..cfg.train_config(a.profile)?
    };
    let candidates = load_candidates(a.candidates)?;
    let table_path = a.out.with_extension("txt");
    let mut inputs = vec![a.candidates, a.train, a.test];
    inputs.extend(a.config);
    let vocab_files: Vec<PathBuf> = candidates
        .iter()
        .filter_map(|c| match &c.kind {
            CandidateKind::Train {
                tokenizer: TokenizerSource::File { path },
                ..
            } => Some(path.clone()),
            _ => None,
        })
        .collect();
    inputs.extend(vocab_files.iter().map(PathBuf::as_path));
    guard_distinct(&inputs, &[a.out, &table_path])?;
    guard_file(a.out, a.force)?;
    guard_file(&table_path, a.force)?;
    let settings = serde_json::json!({
        "fraction": fraction,
        "epsilon": epsilon,
        "parallel": parallel,
        "train": base,
        "candidates": candidates,
    });
    let builder = ManifestBuilder::start("compare", Some(seed), &settings, &inputs)?;

    let train = read_reports(a.train)?;
    let test = read_reports(a.test)?;
    let keep = stratified_subsample(&training_assignment(&train, seed), Partition::Train, fraction, seed)?;
    let subsample: Vec<Report> = train.into_iter().filter(|r| keep.contains(&r.vaers_id)).collect();
    info!(records = subsample.len(), fraction, "training subsample");
    let options = ComparisonOptions {
        rank_by_runtime: !parallel,
    };
    let rows = run_comparison(&candidates, &subsample, &test, &base, options)?;
    for r in rows.iter().filter(|r| !r.is_ok()) {
        warn!(candidate = %r.name, error = r.error.as_deref().unwrap_or(""), "candidate failed");
    }
    let selected = select_best(&rows, epsilon).ok().map(|r| r.name.clone());
    let report = ComparisonReport {
        seed,
        fraction,
        epsilon,
        f1_average: base.selection_average,
        rank_by_runtime: options.rank_by_runtime,
        train_records: subsample.len(),
        test_records: test.len(),
        rows,
        selected: selected.clone(),
    };
    write_json(a.out, &report)?;
    let mut table = render_table(&report.rows);
    table.push_str(&format!(
        "selected: {} (epsilon {epsilon})\n",
        selected.as_deref().unwrap_or("none")
    ));
    fs::write(&table_path, &table).with_context(|| format!("writing {}", table_path.display()))?;
    builder.finish(
        &[a.out.to_path_buf(), table_path.clone()],
        &serde_json::json!({ "selected": selected }),
        &sidecar_path(a.out),
    )?;
    print!("{table}");
    if selected.is_none() {
        bail!("every candidate failed");
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BestSummary {
    pub step: u64,
    pub checkpoint: String,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub total_steps: u64,
    pub evaluations: usize,
    pub config: TrainConfig,
}

fn checkpoint_name(step: u64) -> String {
    format!("checkpoint-{step}.bin")
}

#[allow(clippy::too_many_arguments)]
fn train_model(
    train_path: &Path,
    test_path: &Path,
    vocab_path: &Path,
    seed: Option<u64>,
    profile: Option<Profile>,
    config: Option<&Path>,
    out_dir: &Path,
    force: bool,
) -> Result<()> {
    let cfg = PipelineConfig::load_or_default(config)?;
    let mut train_cfg = cfg.train_config(profile)?;
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    guard_dir(out_dir, force)?;
    let mut inputs = vec![train_path, test_path, vocab_path];
    inputs.extend(config);
    let builder = ManifestBuilder::start("train", Some(train_cfg.seed), &train_cfg, &inputs)?;

    let train_set = read_reports(train_path)?;
    let test_set = read_reports(test_path)?;
    let vocab = load_vocab(vocab_path)?;
    let total = train_cfg.total_steps(train_set.len());
    println!(
        "train: {} records, {} test, vocab {}, {total} steps",
        train_set.len(),
        test_set.len(),
        vocab.len()
    );
    let mut outputs = Vec::new();
    let outcome = train_with(&train_set, &test_set, &vocab, &train_cfg, |c| {
        let path = out_dir.join(checkpoint_name(c.step));
        c.save(&path)?;
        info!(step = c.step, f1 = c.f1(), "checkpoint");
        println!("train: step {:>7}/{total}  f1 {:.4}", c.step, c.f1());
        outputs.push(path);
        Ok(())
    })?;

    let history_path = out_dir.join(HISTORY_FILE);
    let mut w = create(&history_path)?;
    for h in &outcome.history {
        serde_json::to_writer(&mut w, h)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    outputs.push(history_path);

    let best = &outcome.best;
    let best_entry: &HistoryEntry = outcome
        .history
        .iter()
        .find(|h| h.step == best.step)
        .context("best checkpoint missing from history")?;
    let summary = BestSummary {
        step: best.step,
        checkpoint: checkpoint_name(best.step),
        f1: best_entry.f1,
        precision: best_entry.precision,
        recall: best_entry.recall,
        total_steps: outcome.total_steps,
        evaluations: outcome.history.len(),
        config: train_cfg.clone(),
    };
    let best_path = out_dir.join(BEST_FILE);
    write_json(&best_path, &summary)?;
    outputs.push(best_path);
    builder.finish(&outputs, &summary, &out_dir.join(DIRECTORY_MANIFEST))?;
    println!(
        "train: best step {} f1 {:.4} -> {}",
        summary.step,
        summary.f1,
        out_dir.display()
    );
    Ok(())
}

fn load_model(checkpoint: &Path, vocab_path: &Path) -> Result<(Classifier, Vocabulary)> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let vocab = load_vocab(vocab_path)?;
    let width = ckpt.classifier.params.num_features();
    ensure!(
        width == vocab.len(),
        "checkpoint expects a {width}-entry vocabulary, {} has {}",
        vocab_path.display(),
        vocab.len()
    );
    Ok((ckpt.classifier, vocab))
}

#[derive(Debug, Serialize)]
struct EvaluationOutput<'a> {
    #[serde(flatten)]
    report: &'a MetricsReport,
    set_combinations: &'a SetCombinationTable,
}

fn evaluate(checkpoint: &Path, vocab_path: &Path, data: &Path, out: &Path, csv: bool, force: bool) -> Result<()> {
    let stem = out.with_extension("");
    let classwise_path = PathBuf::from(format!("{}-classwise.csv", stem.display()));
    let combos_path = PathBuf::from(format!("{}-set-combinations.csv", stem.display()));
    let mut out_paths = vec![out.to_path_buf()];
    if csv {
        out_paths.extend([classwise_path.clone(), combos_path.clone()]);
    }
    let inputs = [checkpoint, vocab_path, data];
    let out_refs: Vec<&Path> = out_paths.iter().map(PathBuf::as_path).collect();
    guard_distinct(&inputs, &out_refs)?;
    for p in &out_paths {
        guard_file(p, force)?;
    }
    let builder = ManifestBuilder::start("evaluate", None, &serde_json::json!({ "csv": csv }), &inputs)?;

    let (model, vocab) = load_model(checkpoint, vocab_path)?;
    let reports = read_reports(data)?;
    let texts: Vec<&str> = reports.iter().map(|r| r.text.as_str()).collect();
    let preds = model.predict_all(&vocab, &texts)?;
    let golds: Vec<ClassId> = reports.iter().map(Report::label).collect();
    let report = classwise_report(&preds, &golds)?;
    let table = set_combination_table(&preds, &golds)?;
    write_json(
        out,
        &EvaluationOutput {
            report: &report,
            set_combinations: &table,
        },
    )?;
    if csv {
        write_classwise_csv(&report, create(&classwise_path)?)?;
        write_set_combination_csv(&table, create(&combos_path)?)?;
    }
    let summary = serde_json::json!({
        "examples": report.examples,
        "micro_f1": report.micro.f1,
        "macro_f1": report.macro_avg.f1,
        "weighted_f1": report.weighted.f1,
    });
    builder.finish(&out_paths, &summary, &sidecar_path(out))?;
    println!(
        "evaluate: {} examples  micro F1 {:.4}  macro F1 {:.4}  weighted F1 {:.4} -> {}",
        report.examples,
        report.micro.f1,
        report.macro_avg.f1,
        report.weighted.f1,
        out.display()
    );
    for (category, n) in table.category_totals() {
        println!("  {category:<8} {n}");
    }
    Ok(())
}

fn predict(checkpoint: &Path, vocab_path: &Path, text: &str) -> Result<()> {
    let (model, vocab) = load_model(checkpoint, vocab_path)?;
    let (class, probs) = model.predict(&vocab, text)?;
    let o = decode_class(class);
    println!("class {class} ({})", class.name());
    println!("er {}  hospitalised {}  died {}", o.er, o.hospitalised, o.died);
    for c in ClassId::all() {
        println!("  {c} {:<46} {:.6}", c.name(), probs[c.index()]);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ExportRecord<'a> {
    id: &'a str,
    label: u8,
    input_ids: Vec<u32>,
}

fn export(input: &Path, vocab_path: &Path, output: &Path, max_len: usize, force: bool) -> Result<()> {
    ensure!(max_len >= 2, "--max-len must be at least 2");
    guard_distinct(&[input, vocab_path], &[output])?;
    guard_file(output, force)?;
    let settings = serde_json::json!({ "max_len": max_len });
    let builder = ManifestBuilder::start("export", None, &settings, &[input, vocab_path])?;
    let vocab = load_vocab(vocab_path)?;
    let reports = read_reports(input)?;
    let mut w = create(output)?;
    let mut truncated = 0u64;
    for r in &reports {
        let e = encode(&r.text, &vocab, max_len);
        truncated += u64::from(e.truncated);
        let rec = ExportRecord {
            id: &r.vaers_id,
            label: r.label().value(),
            input_ids: e.ids.iter().map(|id| id.0).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let summary = serde_json::json!({ "records": reports.len(), "truncated": truncated });
    builder.finish(&[output.to_path_buf()], &summary, &sidecar_path(output))?;
    println!(
        "export: {} records ({truncated} truncated) -> {}",
        reports.len(),
        output.display()
    );
    Ok(())
}

fn verify(path: &Path) -> Result<()> {
    let manifest = crate::manifest::read_manifest(path)?;
    let problems = crate::manifest::verify(&manifest);
    let checked = manifest.inputs.len() + manifest.outputs.len();
    for p in &problems {
        println!("MISMATCH {} {}: {}", p.role, p.path.display(), p.problem);
    }
    ensure!(
        problems.is_empty(),
        "{} of {checked} files differ from {}",
        problems.len(),
        path.display()
    );
    println!("verify: {} stage, {checked} files match", manifest.stage);
    Ok(())
}
