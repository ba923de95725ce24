use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/vaers_1000.csv")
}

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daedra-forge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = forge(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let help = forge(&["split", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("--ratios"));
    assert_eq!(forge(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(forge(&["split", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(forge(&[]).status.code(), Some(2));
    let v = forge(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    let text = String::from_utf8_lossy(&v.stdout);
    assert!(
        text.contains(env!("CARGO_PKG_VERSION")) && text.contains("data schema 1"),
        "{text}"
    );
}

#[test]
fn stage_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = forge(&["stats", "--input", s(&dir.path().join("missing.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn full_pipeline_on_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let records = d.join("records.jsonl");
    let progress = ok(&[
        "--threads",
        "2",
        "ingest",
        "--input",
        s(&fixture()),
        "--output",
        s(&records),
    ]);
    assert!(progress.contains("990 records"), "{progress}");
    let ingest_manifest = json(&d.join("records.jsonl.manifest.json"));
    assert_eq!(ingest_manifest["stage"], "ingest");
    assert_eq!(ingest_manifest["summary"]["filtered_out"], 10);
    assert_eq!(
        ingest_manifest["inputs"][0]["bytes"],
        fs::metadata(fixture()).unwrap().len()
    );

    // refuses to overwrite
    let again = forge(&["ingest", "--input", s(&fixture()), "--output", s(&records)]);
    assert_eq!(again.status.code(), Some(1));
    ok(&["ingest", "--input", s(&fixture()), "--output", s(&records), "--force"]);

    let stats_out = d.join("stats.json");
    ok(&["stats", "--input", s(&records), "--output", s(&stats_out)]);
    assert_eq!(json(&stats_out)["record_count"], 990);

    let split = d.join("split");
    ok(&[
        "split",
        "--input",
        s(&records),
        "--seed",
        "11",
        "--ratios",
        "0.7,0.15,0.15",
        "--output",
        s(&split),
    ]);
    let split_manifest = json(&split.join("split-manifest.json"));
    assert_eq!(split_manifest["seed"], 11);
    let totals = &split_manifest["totals"];
    let total =
        totals["train"].as_u64().unwrap() + totals["test"].as_u64().unwrap() + totals["validation"].as_u64().unwrap();
    assert_eq!(total, 990);

    let config = d.join("pipeline.toml");
    fs::write(&config, "[train]\nepochs = 4\neval_every_steps = 10\nbatch_size = 32\n").unwrap();
    let vocab = d.join("vocab.txt");
    ok(&[
        "train-tokenizer",
        "--input",
        s(&split.join("train.jsonl")),
        "--vocab-size",
        "800",
        "--output",
        s(&vocab),
    ]);
    let tokens = ok(&["tokenize", "--vocab", s(&vocab), "--text", "Fever and headache."]);
    assert!(tokens.contains("input_ids\t2 "), "{tokens}");

    let run = d.join("run");
    ok(&[
        "train",
        "--train",
        s(&split.join("train.jsonl")),
        "--test",
        s(&split.join("test.jsonl")),
        "--vocab",
        s(&vocab),
        "--config",
        s(&config),
        "--out-dir",
        s(&run),
    ]);
    let best = json(&run.join("best.json"));
    let checkpoint = run.join(best["checkpoint"].as_str().unwrap());
    assert!(checkpoint.exists());
    let history = fs::read_to_string(run.join("history.jsonl")).unwrap();
    let steps: Vec<u64> = history
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["step"].as_u64().unwrap())
        .collect();
    let total_steps = best["total_steps"].as_u64().unwrap();
    assert_eq!(*steps.last().unwrap(), total_steps);
    assert!(steps.iter().all(|st| st % 10 == 0 || *st == total_steps));
    for st in &steps {
        assert!(run.join(format!("checkpoint-{st}.bin")).exists());
    }
    assert_eq!(json(&run.join("run-manifest.json"))["config"]["epochs"], 4);

    let metrics = d.join("metrics.json");
    ok(&[
        "evaluate",
        "--checkpoint",
        s(&checkpoint),
        "--vocab",
        s(&vocab),
        "--data",
        s(&split.join("validation.jsonl")),
        "--out",
        s(&metrics),
        "--csv",
    ]);
    let m = json(&metrics);
    assert!(m["micro"]["f1"].as_f64().unwrap() >= 0.9, "{}", m["micro"]);
    assert_eq!(m["set_combinations"]["counts"].as_array().unwrap().len(), 8);
    let classwise = fs::read_to_string(d.join("metrics-classwise.csv")).unwrap();
    assert!(classwise.starts_with("class,name,precision,recall,f1,support"));
    assert_eq!(
        fs::read_to_string(d.join("metrics-set-combinations.csv"))
            .unwrap()
            .lines()
            .count(),
        65
    );

    let prediction = ok(&[
        "predict",
        "--checkpoint",
        s(&checkpoint),
        "--vocab",
        s(&vocab),
        "--text",
        "patient fever",
    ]);
    assert!(prediction.starts_with("class "));
    assert_eq!(prediction.lines().count(), 2 + 8);

    let exported = d.join("validation.ids.jsonl");
    ok(&[
        "export",
        "--input",
        s(&split.join("validation.jsonl")),
        "--vocab",
        s(&vocab),
        "--output",
        s(&exported),
    ]);
    let first: Value = serde_json::from_str(fs::read_to_string(&exported).unwrap().lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["id", "input_ids", "label"]);
    assert_eq!(first["input_ids"][0], 2);

    let candidates = d.join("candidates.toml");
    fs::write(
        &candidates,
        "[[candidates]]\nname = \"shared-vocab\"\nkind = \"train\"\nepochs = 2\n\
         [candidates.tokenizer]\nsource = \"file\"\npath = \"vocab.txt\"\n\n\
         [[candidates]]\nname = \"domain-300\"\nkind = \"train\"\nepochs = 2\n\
         [candidates.tokenizer]\nsource = \"domain-trained\"\nvocab_size = 300\n\n\
         [[candidates]]\nname = \"reference\"\nkind = \"precomputed\"\nprecision = 0.1\nrecall = 0.1\nf1 = 0.1\nruntime_secs = 0.001\n",
    )
    .unwrap();
    let comparison = d.join("comparison.json");
    let table = ok(&[
        "compare",
        "--candidates",
        s(&candidates),
        "--train",
        s(&split.join("train.jsonl")),
        "--test",
        s(&split.join("test.jsonl")),
        "--fraction",
        "0.5",
        "--seed",
        "3",
        "--out",
        s(&comparison),
    ]);
    assert!(table.starts_with("Model"), "{table}");
    let c = json(&comparison);
    assert_eq!(c["rows"].as_array().unwrap().len(), 3);
    assert_eq!(c["epsilon"], 0.001);
    assert_ne!(c["selected"], "reference");
    assert!(d.join("comparison.txt").exists());

    for manifest in [
        d.join("records.jsonl.manifest.json"),
        split.join("run-manifest.json"),
        d.join("vocab.txt.manifest.json"),
        run.join("run-manifest.json"),
        d.join("metrics.json.manifest.json"),
        d.join("comparison.json.manifest.json"),
        d.join("validation.ids.jsonl.manifest.json"),
    ] {
        ok(&["verify", s(&manifest)]);
    }
    let dir_manifests = fs::read_dir(&run)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with("manifest.json")
        })
        .count();
    assert_eq!(dir_manifests, 1);

    fs::write(&metrics, "{}").unwrap();
    assert_eq!(
        forge(&["verify", s(&d.join("metrics.json.manifest.json"))])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn split_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let records = d.join("records.jsonl");
    ok(&["ingest", "--input", s(&fixture()), "--output", s(&records)]);
    let (a, b) = (d.join("a"), d.join("b"));
    for out in [&a, &b] {
        ok(&["split", "--input", s(&records), "--seed", "5", "--output", s(out)]);
    }
    for name in ["train.jsonl", "test.jsonl", "validation.jsonl", "split-manifest.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let digests = |p: &Path| {
        json(&p.join("run-manifest.json"))["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o["sha256"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(digests(&a), digests(&b));

    let c = d.join("c");
    ok(&["split", "--input", s(&records), "--seed", "6", "--output", s(&c)]);
    assert_ne!(
        fs::read(a.join("train.jsonl")).unwrap(),
        fs::read(c.join("train.jsonl")).unwrap()
    );
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let records = d.join("records.jsonl");
    ok(&["ingest", "--input", s(&fixture()), "--output", s(&records)]);
    let cfg = d.join("c.json");
    fs::write(&cfg, r#"{"split": {"seed": 5, "ratios": [0.8, 0.1, 0.1]}}"#).unwrap();
    let out = d.join("split");
    ok(&[
        "split",
        "--input",
        s(&records),
        "--config",
        s(&cfg),
        "--output",
        s(&out),
    ]);
    let m = json(&out.join("split-manifest.json"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["ratios"]["train"], 0.8);
    let bad = d.join("bad.toml");
    fs::write(&bad, "[split]\nseeds = 1\n").unwrap();
    let r = forge(&[
        "split",
        "--input",
        s(&records),
        "--config",
        s(&bad),
        "--output",
        s(&d.join("x")),
    ]);
    assert_eq!(r.status.code(), Some(1));
}
