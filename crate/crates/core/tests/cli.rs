//! End-to-end runs of the `fundus` binary: synth → prepare → train →
//! evaluate → compare, plus the error paths and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn fundus(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fundus"))
        .args(args)
        .env("FUNDUS_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn s(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Path::new(env!("CARGO_TARGET_TMPDIR")).join("weights-cache");
    let corpus = dir.path().join("corpus");
    let prep = dir.path().join("prep");
    let run_a = dir.path().join("run-baseline");
    let run_b = dir.path().join("run-baseline-2");

    // synth: tiny corpus, enough for a split with all three partitions
    let out = fundus(
        &[
            "synth",
            "--out",
            &s(&corpus),
            "--per-class",
            "10",
            "--side",
            "48",
            "--seed",
            "3",
        ],
        &cache,
    );
    assert_ok(&out, "synth");

    // prepare
    let out = fundus(
        &[
            "prepare",
            "--data",
            &s(&corpus),
            "--out",
            &s(&prep),
            "--seed",
            "5",
        ],
        &cache,
    );
    assert_ok(&out, "prepare");
    for f in ["split.json", "distribution.csv", "distribution.svg", "skipped.txt"] {
        assert!(prep.join(f).is_file(), "prepare should write {f}");
    }

    // train two small baseline runs off the prepared split
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            concat!(
                "[data]\nroot = {root:?}\ntarget_size = 32\n\n",
                "[split]\nmanifest = {manifest:?}\n\n",
                "[model]\nkind = \"baseline\"\n\n",
                "[train]\nepochs = 1\nbatch_size = 8\nseed = 5\n",
            ),
            root = corpus,
            manifest = prep.join("split.json"),
        ),
    )
    .unwrap();
    for (run, seed) in [(&run_a, "5"), (&run_b, "6")] {
        let out = fundus(
            &[
                "train",
                "--config",
                &s(&config),
                "--out",
                &s(run),
                "--seed",
                seed,
            ],
            &cache,
        );
        assert_ok(&out, "train");
        for f in [
            "model.json",
            "weights.bin",
            "state.json",
            "state.bin",
            "history.csv",
            "accuracy.svg",
            "loss.svg",
            "run.json",
        ] {
            assert!(run.join(f).is_file(), "train should write {f}");
        }
    }

    // resume adds epochs to an existing run
    let out = fundus(
        &["train", "--resume", &s(&run_a), "--epochs", "1"],
        &cache,
    );
    assert_ok(&out, "resume");
    let history = std::fs::read_to_string(run_a.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "1 + 1 epochs plus header");

    // evaluate both runs on the shared split
    for run in [&run_a, &run_b] {
        let out = fundus(
            &[
                "evaluate",
                "--run",
                &s(run),
                "--manifest",
                &s(&prep.join("split.json")),
            ],
            &cache,
        );
        assert_ok(&out, "evaluate");
        for f in [
            "report.txt",
            "report.csv",
            "report.json",
            "confusion.csv",
            "confusion.svg",
            "eval.json",
        ] {
            assert!(run.join(f).is_file(), "evaluate should write {f}");
        }
        let text = String::from_utf8_lossy(&out.stdout).into_owned();
        assert!(text.contains("accuracy"), "report missing accuracy: {text}");
    }

    // compare prints a two-block report and a verdict
    let out = fundus(
        &["compare", "--run-a", &s(&run_a), "--run-b", &s(&run_b)],
        &cache,
    );
    assert_ok(&out, "compare");
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("baseline"), "verdict text: {text}");
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");

    // missing corpus
    let out = fundus(
        &[
            "prepare",
            "--data",
            &s(&dir.path().join("nope")),
            "--out",
            &s(&dir.path().join("out")),
        ],
        &cache,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    // malformed ratios
    let out = fundus(
        &[
            "prepare",
            "--data",
            &s(dir.path()),
            "--out",
            &s(dir.path()),
            "--ratios",
            "0.7,0.3",
        ],
        &cache,
    );
    assert_eq!(out.status.code(), Some(2));

    // missing config file
    let out = fundus(
        &["train", "--config", &s(&dir.path().join("absent.toml"))],
        &cache,
    );
    assert_eq!(out.status.code(), Some(2));

    // evaluate without a run directory
    let out = fundus(
        &[
            "evaluate",
            "--run",
            &s(&dir.path().join("norun")),
            "--manifest",
            &s(&dir.path().join("nomanifest.json")),
        ],
        &cache,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_rejects_mismatched_evaluations() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    std::fs::create_dir_all(&run_a).unwrap();
    std::fs::create_dir_all(&run_b).unwrap();

    let eval = |sum: &str, partition: &str| {
        format!(
            "{{\"manifest_sha256\":\"{sum}\",\"partition\":\"{partition}\",\"accuracy\":0.5,\"model_label\":\"x\"}}"
        )
    };
    let report = "{\"model_label\":\"x\",\"rows\":[],\"accuracy\":0.5}";
    std::fs::write(run_a.join("eval.json"), eval("aaa", "test")).unwrap();
    std::fs::write(run_a.join("report.json"), report).unwrap();
    std::fs::write(run_b.join("eval.json"), eval("bbb", "test")).unwrap();
    std::fs::write(run_b.join("report.json"), report).unwrap();

    let out = fundus(
        &["compare", "--run-a", &s(&run_a), "--run-b", &s(&run_b)],
        &cache,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different splits"));
}
