//! Command surface: help snapshots, exit codes, output confinement and
//! reproducibility of the written artifacts.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use common::{noisy_fixture, readlab, stderr, stdout, unanimous_fixture};

fn subcommand_paths(cmd: &clap::Command, prefix: Vec<String>, out: &mut Vec<(Vec<String>, clap::Command)>) {
    out.push((prefix.clone(), cmd.clone()));
    for sub in cmd.get_subcommands().filter(|s| s.get_name() != "help") {
        let mut path = prefix.clone();
        path.push(sub.get_name().to_string());
        subcommand_paths(sub, path, out);
    }
}

fn all_commands() -> Vec<(Vec<String>, clap::Command)> {
    let mut root = readlab::command();
    root.build();
    let mut out = Vec::new();
    subcommand_paths(&root, Vec::new(), &mut out);
    out
}

fn snapshot_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots")
}

#[test]
fn help_matches_snapshots() {
    let update = std::env::var_os("UPDATE_SNAPSHOTS").is_some();
    let mut stale = Vec::new();
    for (path, _) in all_commands() {
        let mut args: Vec<&str> = path.iter().map(String::as_str).collect();
        args.push("--help");
        let out = readlab(&args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
        let name = if path.is_empty() {
            "readlab".to_string()
        } else {
            path.join("-")
        };
        let file = snapshot_dir().join(format!("help-{name}.txt"));
        let text = stdout(&out);
        if update {
            fs::create_dir_all(snapshot_dir()).unwrap();
            fs::write(&file, &text).unwrap();
        } else if fs::read_to_string(&file).ok().as_deref() != Some(text.as_str()) {
            stale.push(file.display().to_string());
        }
    }
    assert!(
        stale.is_empty(),
        "help changed; rerun with UPDATE_SNAPSHOTS=1: {stale:?}"
    );
}

#[test]
fn help_lists_every_flag() {
    for (path, cmd) in all_commands() {
        let mut args: Vec<&str> = path.iter().map(String::as_str).collect();
        args.push("--help");
        let help = stdout(&readlab(&args));
        for arg in cmd.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(help.contains(&format!("--{long}")), "{path:?} help lacks --{long}");
            }
            if arg.is_positional() {
                let id = arg.get_id().as_str().to_uppercase();
                assert!(help.contains(&id), "{path:?} help lacks <{id}>");
            }
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 12, 4, 1);
    let ds = ds.to_str().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["run", "generalist", ds],
        vec!["run", "personalized", ds, "--ssa", "best"],
        vec!["validate", ds, "--jobs", "zero"],
        vec!["run", "generalist", ds, "--method", "llm", "--gateway", "stub:psychic"],
        vec!["run", "generalist", ds, "--method", "llm", "--gateway", "remote"],
    ] {
        let out = readlab(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
        assert!(!stderr(&out).trim().is_empty(), "{args:?} gave no diagnostic");
    }

    let config = tmp.path().join("bad.toml");
    fs::write(&config, "seeed = 3\n").unwrap();
    let out = readlab(&["validate", ds, "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent");
    let out = readlab(&["validate", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let ds = noisy_fixture(tmp.path(), 12, 4, 1);
    fs::write(ds.join("ratings.csv"), "snippet_id,developer_id,score\ns001,dev001,9\n").unwrap();
    let out = readlab(&["validate", ds.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let out = readlab(&[
        "consistency",
        "merge",
        "--first",
        missing.to_str().unwrap(),
        "--second",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn remote_without_credential_exits_three_before_any_request() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 12, 4, 1);
    let out = std::process::Command::new(common::binary())
        .args([
            "run",
            "generalist",
            ds.to_str().unwrap(),
            "--method",
            "llm",
            "--gateway",
            "remote",
        ])
        .args(["--endpoint", "http://127.0.0.1:9/v1", "--out"])
        .arg(tmp.path().join("out"))
        .env_remove("READABILITY_LAB_API_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("READABILITY_LAB_API_KEY"));
}

#[test]
fn validate_reports_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 200, 9, 4);
    let out = readlab(&["validate", ds.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("200x9 dense, 1800 ratings"), "{}", stdout(&out));
}

#[test]
fn oracle_on_unanimous_data_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = unanimous_fixture(tmp.path(), 20, 8);
    let out_dir = tmp.path().join("out");
    let out = readlab(&[
        "run",
        "generalist",
        ds.to_str().unwrap(),
        "--method",
        "oracle",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("generalist-oracle/aggregate.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "Average,1.000000,1.000000,1.000000"), "{csv}");
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn personalized_rerun_is_byte_identical_and_confined_to_out() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 24, 5, 8);
    let before: Vec<PathBuf> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().path()).collect();
    let mut trees = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "3")] {
        let out_dir = tmp.path().join(name);
        let out = std::process::Command::new(common::binary())
            .current_dir(tmp.path())
            .args([
                "run",
                "personalized",
                ds.to_str().unwrap(),
                "--ssa",
                "hv",
                "--seed",
                "11",
            ])
            .args(["--gateway", "stub:majority-echo", "--jobs", jobs, "--out"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        trees.push(tree(&out_dir));
    }
    assert_eq!(trees[0], trees[1]);
    assert!(trees[0].keys().any(|p| p.starts_with("personalized-hv/reports")));
    let after: Vec<PathBuf> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(after.len(), before.len() + 2, "only the two --out directories appear");
}

#[test]
fn hostile_annotator_id_stays_inside_out() {
    use std::io::Write;
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 12, 4, 1);
    let out_dir = tmp.path().join("nested/out");
    let o = out_dir.to_str().unwrap();
    let s = readlab(&[
        "consistency",
        "sample",
        ds.to_str().unwrap(),
        "--pairs",
        "2",
        "--out",
        o,
    ]);
    assert!(s.status.success());
    let pairs = out_dir.join("consistency/pairs.json");
    let mut child = std::process::Command::new(common::binary())
        .args([
            "consistency",
            "annotate",
            ds.to_str().unwrap(),
            "--pairs",
            pairs.to_str().unwrap(),
        ])
        .args(["--annotator", "../../../evil", "--out", o])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"c\n").unwrap();
    assert!(child.wait().unwrap().success());
    let written: Vec<String> = fs::read_dir(out_dir.join("consistency"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(written.len(), 2, "{written:?}");
    assert!(written
        .iter()
        .any(|f| f.starts_with("verdicts-") && f.ends_with(".jsonl")));
    assert!(!tmp.path().join("evil.jsonl").exists() && !tmp.path().join("verdicts-evil.jsonl").exists());
    let entries: Vec<PathBuf> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 2, "{entries:?}");
}

#[test]
fn annotation_resumes_and_merges_end_to_end() {
    use std::io::Write;
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 12, 4, 1);
    let out_dir = tmp.path().join("out");
    let o = out_dir.to_str().unwrap();
    let d = ds.to_str().unwrap();
    let s = readlab(&["consistency", "sample", d, "--pairs", "4", "--seed", "5", "--out", o]);
    assert!(s.status.success(), "{}", stderr(&s));
    let pairs = out_dir.join("consistency/pairs.json");
    let p = pairs.to_str().unwrap();

    let annotate = |who: &str, keys: &str, extra: &[&str]| {
        let mut child = std::process::Command::new(common::binary())
            .args([
                "consistency",
                "annotate",
                d,
                "--pairs",
                p,
                "--annotator",
                who,
                "--out",
                o,
            ])
            .args(extra)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(keys.as_bytes()).unwrap();
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    annotate("a", "c\nbogus\ni\nq\n", &[]);
    let resumed = annotate("a", "c\nc\n", &[]);
    assert!(resumed.contains("pair 3/4"), "{resumed}");
    annotate("b", "c\nc\nc\nc\n", &[]);

    let verdicts = |who: &str| out_dir.join(format!("consistency/verdicts-{who}.jsonl"));
    assert_eq!(fs::read_to_string(verdicts("a")).unwrap().lines().count(), 4);
    let merged = out_dir.join("consistency/merged.json");
    let merge = |tiebreak: Option<&Path>| {
        let mut args = vec![
            "consistency".to_string(),
            "merge".into(),
            "--first".into(),
            verdicts("a").display().to_string(),
            "--second".into(),
            verdicts("b").display().to_string(),
            "--out".into(),
            o.into(),
        ];
        if let Some(t) = tiebreak {
            args.push("--tiebreak".into());
            args.push(t.display().to_string());
        }
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        readlab(&args)
    };
    assert!(merge(None).status.success());
    let report = readlab(&[
        "consistency",
        "report",
        "--merged",
        merged.to_str().unwrap(),
        "--out",
        o,
    ]);
    assert_eq!(
        report.status.code(),
        Some(2),
        "pending disagreement must block the report"
    );

    let shown = annotate("t", "i\n", &["--only-pending", merged.to_str().unwrap()]);
    assert!(shown.contains("pair 1/1 (id 2)"), "{shown}");
    assert!(merge(Some(&verdicts("t"))).status.success());
    let report = readlab(&[
        "consistency",
        "report",
        "--merged",
        merged.to_str().unwrap(),
        "--out",
        o,
    ]);
    assert!(report.status.success(), "{}", stderr(&report));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("consistency/consistency-report.json")).unwrap())
            .unwrap();
    assert_eq!(json["inconsistent"], 1);
    assert_eq!(json["inconsistency_rate_percent"], 25.0);
    assert_eq!(json["disagreements"], serde_json::json!([2]));
}

#[test]
fn report_aggregate_reproduces_run_table() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 20, 5, 2);
    let out_dir = tmp.path().join("out");
    let o = out_dir.to_str().unwrap();
    let run = readlab(&[
        "run",
        "generalist",
        ds.to_str().unwrap(),
        "--method",
        "oracle",
        "--out",
        o,
    ]);
    assert!(run.status.success());
    let reports = out_dir.join("generalist-oracle/reports");
    let agg = readlab(&["report", "aggregate", reports.to_str().unwrap(), "--out", o]);
    assert!(agg.status.success(), "{}", stderr(&agg));
    for file in [
        "aggregate.csv",
        "f1-unreadable.csv",
        "f1-neutral.csv",
        "f1-readable.csv",
    ] {
        assert_eq!(
            fs::read(out_dir.join("aggregate").join(file)).unwrap(),
            fs::read(out_dir.join("generalist-oracle").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn shots_show_prints_selection_and_prompts() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = noisy_fixture(tmp.path(), 15, 4, 3);
    let out = readlab(&[
        "shots",
        "show",
        ds.to_str().unwrap(),
        "--ssa",
        "hvl",
        "--developer",
        "dev002",
        "--prompts",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let shots = v["shot_set"]["shots"].as_array().unwrap();
    let prompts = v["prompts"].as_array().unwrap();
    assert!(!shots.is_empty());
    for p in prompts {
        let text = p["prompt"].as_str().unwrap();
        assert_eq!(
            p["prompt_hash"].as_str().unwrap(),
            readlab_core::prompt::prompt_hash(text)
        );
        for s in shots {
            assert_ne!(p["snippet_id"], s["snippet_id"]);
        }
    }
    let unknown = readlab(&[
        "shots",
        "show",
        ds.to_str().unwrap(),
        "--ssa",
        "hv",
        "--developer",
        "nobody",
    ]);
    assert_eq!(unknown.status.code(), Some(2));
}
