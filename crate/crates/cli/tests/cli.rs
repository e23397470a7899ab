use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use statrs::distribution::{ChiSquared, ContinuousCDF};
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unitdub"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn json_lines(dir: &Path, name: &str) -> Vec<serde_json::Value> {
    read(dir, name)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn gen_corpus_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(a.path(), &["--seed", "3", "gen-corpus", "--n-pairs", "200"]);
    ok(b.path(), &["--seed", "3", "gen-corpus", "--n-pairs", "200"]);
    assert_eq!(
        read(a.path(), "corpus.jsonl"),
        read(b.path(), "corpus.jsonl")
    );
    assert_eq!(read(a.path(), "corpus.jsonl").lines().count(), 200);

    let c = TempDir::new().unwrap();
    ok(c.path(), &["--seed", "4", "gen-corpus", "--n-pairs", "200"]);
    assert_ne!(
        read(a.path(), "corpus.jsonl"),
        read(c.path(), "corpus.jsonl")
    );
}

#[test]
fn empty_corpus_still_gets_a_manifest() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen-corpus", "--n-pairs", "0"]);
    assert_eq!(read(dir.path(), "corpus.jsonl"), "");
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "corpus.jsonl.manifest.json")).unwrap();
    assert_eq!(manifest["command"], "gen-corpus");
    assert_eq!(manifest["config"]["corpus"]["n_pairs"], 0);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn out_dir_and_config_precedence() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"seed": 11, "corpus": {"n_pairs": 7}}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &["--config", "run.json", "--out", "o", "gen-corpus"],
    );
    assert_eq!(
        read(&dir.path().join("o"), "corpus.jsonl").lines().count(),
        7
    );
    ok(
        dir.path(),
        &[
            "--config",
            "run.json",
            "--out",
            "p",
            "gen-corpus",
            "--n-pairs",
            "3",
        ],
    );
    assert_eq!(
        read(&dir.path().join("p"), "corpus.jsonl").lines().count(),
        3
    );
    let m: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("o"), "corpus.jsonl.manifest.json")).unwrap();
    assert_eq!(m["seed"], 11);
    ok(
        dir.path(),
        &[
            "--config",
            "run.json",
            "--seed",
            "12",
            "--out",
            "q",
            "gen-corpus",
        ],
    );
    let m: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("q"), "corpus.jsonl.manifest.json")).unwrap();
    assert_eq!(m["seed"], 12);
}

#[test]
fn adapt_off_copies_and_adapt_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["gen-corpus", "--n-pairs", "300"]);
    ok(
        d,
        &[
            "adapt",
            "--input",
            "corpus.jsonl",
            "--output",
            "off.jsonl",
            "--off",
        ],
    );
    for rec in json_lines(d, "off.jsonl") {
        assert_eq!(rec["tgt_adapted_units"], rec["tgt_units"]);
    }

    let summary = ok(
        d,
        &["adapt", "--input", "corpus.jsonl", "--output", "on.jsonl"],
    );
    let corr = |label: &str| -> f64 {
        summary
            .lines()
            .find(|l| l.starts_with(label))
            .and_then(|l| l.split_whitespace().last())
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(corr("speed correlation src/adapted") > corr("speed correlation src/raw"));

    ok(
        d,
        &["adapt", "--input", "on.jsonl", "--output", "twice.jsonl"],
    );
    let once = json_lines(d, "on.jsonl");
    let twice = json_lines(d, "twice.jsonl");
    assert_eq!(once.len(), twice.len());
    for (a, b) in once.iter().zip(&twice) {
        assert_eq!(a["id"], b["id"]);
        assert_eq!(a["tgt_adapted_units"], b["tgt_adapted_units"]);
    }
}

#[test]
fn malformed_line_is_reported_and_nothing_is_written() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["gen-corpus", "--n-pairs", "3"]);
    let mut text = read(d, "corpus.jsonl");
    text.push_str("{\"id\": \"broken\", \"src_units\": [1,\n");
    std::fs::write(d.join("bad.jsonl"), text).unwrap();
    let out = run(d, &["adapt", "--input", "bad.jsonl", "--output", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(!d.join("x.jsonl").exists());
    assert!(!d.join("x.jsonl.manifest.json").exists());
}

#[test]
fn invalid_config_exits_2_without_outputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"task": {"v_src": 0}}"#).unwrap();
    let out = run(d, &["--config", "bad.json", "gen-corpus", "--n-pairs", "5"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(d.join("typo.json"), r#"{"sampler": {"nfee": 3}}"#).unwrap();
    let out = run(d, &["--config", "typo.json", "gen-corpus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        run(d, &["--workers", "0", "gen-corpus"]).status.code(),
        Some(2)
    );
    assert_eq!(run(d, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(files(d), vec!["bad.json", "typo.json"]);
}

#[test]
fn vocab_mismatch_is_refused() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["gen-corpus", "--n-pairs", "50"]);
    ok(d, &["train", "--corpus", "corpus.jsonl"]);
    std::fs::write(
        d.join("other.json"),
        r#"{"task": {"v_src": 3, "v_tgt": 3, "mapping": [0, 1, 2]}}"#,
    )
    .unwrap();
    ok(
        d,
        &[
            "--config",
            "other.json",
            "gen-corpus",
            "--output",
            "other.jsonl",
        ],
    );
    let out = run(
        d,
        &[
            "translate",
            "--corpus",
            "other.jsonl",
            "--model",
            "model.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary mismatch"));
    assert!(!d.join("outputs.jsonl").exists());
}

#[test]
fn translate_requires_a_denoiser() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen-corpus", "--n-pairs", "5"]);
    let out = run(dir.path(), &["translate", "--corpus", "corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reports_full_duration_compliance() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["gen-corpus", "--n-pairs", "400"]);
    ok(d, &["adapt", "--input", "corpus.jsonl"]);
    ok(d, &["train", "--corpus", "corpus.adapted.jsonl"]);
    ok(
        d,
        &[
            "translate",
            "--corpus",
            "corpus.jsonl",
            "--model",
            "model.json",
        ],
    );
    let stdout = ok(
        d,
        &[
            "eval",
            "--outputs",
            "outputs.jsonl",
            "--corpus",
            "corpus.jsonl",
        ],
    );
    assert!(stdout.contains("DC@0.2: 1.000"), "{stdout}");
    assert!(stdout.contains("DC@0.4: 1.000"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&read(d, "report.json")).unwrap();
    assert_eq!(report["compliance"]["dc"]["0.2"], 1.0);
    assert_eq!(report["manifest"]["command"], "eval");
    assert!(report["manifest"].get("created_unix_ms").is_none());
    assert_eq!(
        read(d, "report.csv").lines().next(),
        Some("threshold,dc,sc")
    );
    assert!(read(d, "speed_hist_gen.csv").starts_with("bin_lo,bin_hi,count"));
    for f in [
        "outputs.jsonl",
        "model.json",
        "report.csv",
        "speed_hist_src.csv",
    ] {
        assert!(d.join(format!("{f}.manifest.json")).exists(), "{f}");
    }
}

#[test]
fn eval_rejects_misaligned_outputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["gen-corpus", "--n-pairs", "4"]);
    ok(
        d,
        &[
            "translate",
            "--corpus",
            "corpus.jsonl",
            "--denoiser",
            "oracle",
        ],
    );
    let lines: Vec<String> = read(d, "outputs.jsonl").lines().map(String::from).collect();
    std::fs::write(d.join("short.jsonl"), lines[..3].join("\n")).unwrap();
    let out = run(
        d,
        &[
            "eval",
            "--outputs",
            "short.jsonl",
            "--corpus",
            "corpus.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!d.join("report.json").exists());
}

#[test]
fn duration_sweep_is_monotone() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["gen-corpus", "--n-pairs", "600"]);
    ok(d, &["adapt", "--input", "corpus.jsonl"]);
    ok(d, &["train", "--corpus", "corpus.adapted.jsonl"]);
    let csv = ok(
        d,
        &[
            "duration-sweep",
            "--model",
            "model.json",
            "--corpus",
            "corpus.jsonl",
            "--ratios",
            "0.8,0.9,1.0,1.1,1.2",
        ],
    );
    assert_eq!(csv, read(d, "duration_sweep.csv"));
    let rel: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rel.len(), 5);
    assert!(rel.windows(2).all(|w| w[0] <= w[1]), "{rel:?}");

    let csv = ok(
        d,
        &[
            "nfe-sweep",
            "--model",
            "model.json",
            "--corpus",
            "corpus.jsonl",
            "--grid",
            "1,16",
        ],
    );
    assert_eq!(csv.lines().count(), 3);
}

/// Every pair has the same source, so the oracle outputs are iid draws from
/// the exact joint over target sequences with the mapped skeleton.
#[test]
fn oracle_translate_with_one_step_per_position_is_exact() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    // standard mapping sends source [0, 1] to target skeleton [1, 4]
    let n_pairs = 4000;
    let mut text = String::new();
    for i in 0..n_pairs {
        text.push_str(&format!(
            "{{\"id\":\"p{i}\",\"src_units\":[0,0,1,1,1],\"tgt_units\":[1,4],\"vocab_src\":6,\"vocab_tgt\":8}}\n"
        ));
    }
    std::fs::write(d.join("same.jsonl"), text).unwrap();
    ok(
        d,
        &[
            "translate",
            "--corpus",
            "same.jsonl",
            "--denoiser",
            "oracle",
            "--nfe",
            "len",
            "--unmask-rule",
            "random",
            "--temperature",
            "1",
        ],
    );
    let mut observed: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for rec in json_lines(d, "outputs.jsonl") {
        let units: Vec<u64> = rec["units"]
            .as_array()
            .unwrap()
            .iter()
            .map(|u| u.as_u64().unwrap())
            .collect();
        *observed.entry(units).or_default() += 1;
    }
    // length 5 with skeleton [1, 4]: the 4 compositions are equally likely
    let support: Vec<Vec<u64>> = (1..5)
        .map(|k| (0..5).map(|i| if i < k { 1 } else { 4 }).collect())
        .collect();
    assert_eq!(observed.len(), support.len(), "{observed:?}");
    let expected = n_pairs as f64 / support.len() as f64;
    let stat: f64 = support
        .iter()
        .map(|s| (observed[s] as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square p = {p}, counts {observed:?}");
}

#[test]
fn flow_test_passes() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(dir.path(), &["flow-test"]);
    assert!(stdout.contains("flow suite: PASS"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "flow_report.json")).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["manifest"]["command"], "flow-test");
}
