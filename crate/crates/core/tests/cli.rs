use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn grokforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grokforge"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const BASE: &str = "Michelle\twife of\tObama\nMichelle\tborn in\t1964\nMary Poppins\taired in\t1964\n";
const SYNTHETIC: &str = "Michelle\teducated at\tPrinceton University\nThe Beatles\tdebuted in\t1964\n";

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn analyze_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let base = write(dir.path(), "base.tsv", BASE);
    let aug = write(dir.path(), "aug.tsv", &format!("{BASE}{SYNTHETIC}"));

    let out = grokforge(&[
        "analyze",
        "--kg",
        &base,
        "--mode",
        "undirected",
        "--phi-g",
        "1",
        "--verdict",
        "global",
    ]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));
    assert!(stdout(&out).contains("phi: 2/3"));
    assert!(stdout(&out).contains("not generalizable"));

    // Directed traversal finds no chains in the base graph at all.
    assert_eq!(code(&grokforge(&["analyze", "--kg", &base, "--phi-g", "1"])), 3);

    let out = grokforge(&[
        "--format",
        "json",
        "analyze",
        "--kg",
        &aug,
        "--mode",
        "undirected",
        "--phi-g",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["phi"], "6/5");
    assert_eq!(doc["verdict"], "full");

    let out = grokforge(&["analyze", "--kg", &aug, "--mode", "undirected", "--phi-g", "3"]);
    assert_eq!(code(&out), 2);

    // No threshold, no verdict.
    assert_eq!(code(&grokforge(&["analyze", "--kg", &base])), 0);
}

#[test]
fn analyze_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.tsv", "");
    let out = grokforge(&["analyze", "--kg", &empty]);
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("no facts"));
    let bad = write(dir.path(), "bad.tsv", "a\tb\n");
    assert_eq!(code(&grokforge(&["analyze", "--kg", &bad])), 64);
    assert_eq!(
        code(&grokforge(&["analyze", "--kg", &p(dir.path(), "missing.tsv")])),
        64
    );
    let base = write(dir.path(), "base.tsv", BASE);
    assert_eq!(code(&grokforge(&["analyze", "--kg", &base, "--hops", "1"])), 64);
    assert_eq!(code(&grokforge(&["analyze", "--kg", &base, "--bogus"])), 64);
}

#[test]
fn analyze_reads_numbered_graph_text() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "g.txt",
        "1. <Avatar; Film><director><James Cameron; Person>\n2. <James Cameron; Person><place of birth><Kapuskasing; City>\n",
    );
    let out = grokforge(&["--format", "json", "analyze", "--kg", &g]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["inferred_count"], 1);
}

#[test]
fn bounds_table_and_errors() {
    let out = grokforge(&[
        "--format", "json", "bounds", "--nodes", "31,inf", "--b", "2,1.5", "--hops", "3", "--phi-g", "3.6",
    ]);
    assert_eq!(code(&out), 0);
    let rows: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["min_node_count"], 31);
    assert_eq!(rows[1]["min_node_count"], "infeasible");
    assert_eq!(rows[2]["nodes"], "inf");
    assert_eq!(rows[2]["phi_upper_bound"], 4.0);

    // b = 0.75, V = 4, n = 2: 4 * 3 * 2 * (0.25)^2.
    let out = grokforge(&[
        "--format", "json", "bounds", "--nodes", "4", "--b", "3/4", "--hops", "2",
    ]);
    let rows: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((rows[0]["expected_paths"].as_f64().unwrap() - 1.5).abs() < 1e-12);

    let out = grokforge(&["bounds", "--hops", "1"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("n >= 2"));
    assert!(stdout(&out).contains("n/a"));

    for bad in [["--nodes", "10..x"], ["--b", "two"], ["--hops", "0"], ["--nodes", ""]] {
        let out = grokforge(&["bounds", bad[0], bad[1]]);
        assert_eq!(code(&out), 64, "{bad:?}");
    }
}

#[test]
fn simulate_is_seeded_and_flags_budget_rows() {
    let a = grokforge(&["--seed", "9", "simulate", "--nodes", "10,20", "--trials", "1"]);
    let b = grokforge(&["--seed", "9", "simulate", "--nodes", "10,20", "--trials", "1"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = grokforge(&["--seed", "10", "simulate", "--nodes", "10,20", "--trials", "1"]);
    assert_ne!(a.stdout, c.stdout);

    let out = grokforge(&[
        "--seed", "1", "simulate", "--nodes", "3000", "--trials", "1", "--budget", "100",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("skipped: budget"));

    assert_eq!(code(&grokforge(&["simulate", "--trials", "0"])), 64);
    let out = grokforge(&["--ci", "simulate", "--trials", "1"]);
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn jobs_do_not_change_simulation_output() {
    let one = grokforge(&[
        "--seed",
        "3",
        "--jobs",
        "1",
        "simulate",
        "--nodes",
        "10..40:10",
        "--trials",
        "8",
    ]);
    let four = grokforge(&[
        "--seed",
        "3",
        "--jobs",
        "4",
        "simulate",
        "--nodes",
        "10..40:10",
        "--trials",
        "8",
    ]);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(code(&grokforge(&["--jobs", "0", "bounds"])), 64);
}

#[test]
fn augment_reports_missed_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out = grokforge(&[
        "--seed",
        "1",
        "augment",
        "--task",
        "comparison",
        "--atomic",
        "200",
        "--inferred",
        "300",
        "--out",
        &p(dir.path(), "c"),
    ]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("global phi 3/2 < 8"));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/manifest.json")).unwrap()).unwrap();
    assert!(!manifest["shortfalls"].as_array().unwrap().is_empty());

    let seed = write(
        dir.path(),
        "seed.txt",
        "1. <A; Person><father><B; Person>\n2. <B; Person><country><X; Country>\n",
    );
    let out = grokforge(&[
        "--seed",
        "1",
        "augment",
        "--task",
        "composition",
        "--seed-corpus",
        &seed,
        "--atomic",
        "4",
        "--inferred",
        "50",
        "--seed-inferred",
        "1",
        "--out",
        &p(dir.path(), "t"),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));

    let out = grokforge(&[
        "augment",
        "--task",
        "comparison",
        "--backend",
        "external",
        "--out",
        &p(dir.path(), "x"),
    ]);
    assert_eq!(code(&out), 64);
    assert_eq!(
        code(&grokforge(&[
            "augment",
            "--task",
            "summaries",
            "--out",
            &p(dir.path(), "y")
        ])),
        64
    );
}

#[test]
fn augment_split_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = p(dir.path(), "corpus");
    let out = grokforge(&["--seed", "4", "augment", "--task", "composition", "--out", &corpus]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("corpus/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["phi"], "25/4");
    assert_eq!(manifest["acyclic"], true);
    assert_eq!(manifest["config"]["seed"], 4);
    assert_eq!(code(&grokforge(&["validate", &corpus])), 0);

    let split = p(dir.path(), "split");
    let out = grokforge(&["--seed", "4", "split", "--corpus", &corpus, "--out", &split]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = grokforge(&["--format", "json", "validate", &split]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    // Same inputs, same bytes.
    let again = p(dir.path(), "split2");
    grokforge(&["--seed", "4", "split", "--corpus", &corpus, "--out", &again]);
    for f in ["train.jsonl", "id_test.jsonl", "ood_test.jsonl", "manifest.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("split").join(f)).unwrap(),
            std::fs::read(dir.path().join("split2").join(f)).unwrap(),
            "{f}"
        );
    }

    // Tampering is caught.
    let id_test = dir.path().join("split/id_test.jsonl");
    let text = std::fs::read_to_string(&id_test).unwrap();
    std::fs::write(&id_test, text.replacen("\"answer\":\"", "\"answer\":\"x", 1)).unwrap();
    let out = grokforge(&["validate", &split]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("digest mismatch"));

    assert_eq!(
        code(&grokforge(&[
            "--seed",
            "4",
            "split",
            "--corpus",
            &corpus,
            "--ood-fraction",
            "0",
            "--out",
            &again
        ])),
        64
    );
    assert_eq!(
        code(&grokforge(&[
            "--seed",
            "4",
            "split",
            "--corpus",
            &corpus,
            "--train-fraction",
            "3/2",
            "--out",
            &again
        ])),
        64
    );
    assert_eq!(code(&grokforge(&["validate", &p(dir.path(), "nothing")])), 64);
}

#[test]
fn config_file_fills_in_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(
        dir.path(),
        "run.conf",
        "# sweep\nseed = 5\ntrials = 2\nnodes = \"10,20\"\n",
    );
    let from_file = grokforge(&["--config", &conf, "simulate"]);
    let explicit = grokforge(&["--seed", "5", "simulate", "--trials", "2", "--nodes", "10,20"]);
    assert_eq!(code(&from_file), 0, "{}", stderr(&from_file));
    assert_eq!(from_file.stdout, explicit.stdout);

    // Flags win over the file.
    let over = grokforge(&["--config", &conf, "simulate", "--trials", "3"]);
    assert!(stdout(&over).lines().nth(1).unwrap().starts_with("10,2,3,3,"));

    // Keys for other subcommands are ignored; unknown keys are rejected.
    let shared = write(dir.path(), "shared.conf", "seed = 5\ntask = comparison\nci = true\n");
    assert_eq!(
        code(&grokforge(&[
            "--config", &shared, "simulate", "--trials", "1", "--nodes", "10"
        ])),
        0
    );
    let bad = write(dir.path(), "bad.conf", "colour = blue\n");
    assert_eq!(code(&grokforge(&["--config", &bad, "bounds"])), 64);
    let malformed = write(dir.path(), "malformed.conf", "seed 5\n");
    assert_eq!(code(&grokforge(&["--config", &malformed, "bounds"])), 64);
}

#[test]
fn help_lists_every_flag() {
    let out = grokforge(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for flag in ["--seed", "--ci", "--jobs", "--config", "--format", "--debug"] {
        assert!(text.contains(flag), "{flag}");
    }
    let out = grokforge(&["augment", "--help"]);
    let text = stdout(&out);
    for flag in [
        "--task",
        "--atomic",
        "--inferred",
        "--phi-target",
        "--backend",
        "--endpoint",
        "--model",
        "--out",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
    assert_eq!(code(&grokforge(&[])), 64);
}
