use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtc_core::check::{check, Level};
use mtc_core::history::History;

fn mtc(args: &[&str]) -> Output {
    mtc_env(args, None)
}

fn mtc_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mtc"));
    cmd.args(args).env_remove("MTC_SEED");
    if let Some(s) = seed {
        cmd.env("MTC_SEED", s);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn fixture(dir: &Path, name: &str) -> PathBuf {
    let out = mtc(&["fixtures", "--name", name]);
    assert_eq!(code(&out), 0);
    let path = dir.join(format!("{name}.jsonl"));
    fs::write(&path, out.stdout).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&mtc(&[])), 2);
    assert_eq!(code(&mtc(&["check", "--bogus"])), 2);
    assert_eq!(code(&mtc(&["check", "--level", "rc", "x.jsonl"])), 2);
    assert_eq!(code(&mtc(&["fixtures"])), 2);
    let help = mtc(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("generate"));
}

#[test]
fn generate_is_seeded_and_env_overrides() {
    let base = ["generate", "--txns", "50", "--objects", "5", "--dist", "zipfian:0.99"];
    let a = mtc(&[&base[..], &["--seed", "7"]].concat());
    let b = mtc(&[&base[..], &["--seed", "7"]].concat());
    let c = mtc(&[&base[..], &["--seed", "8"]].concat());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(stdout(&a).lines().count(), 50);

    let env = mtc_env(&[&base[..], &["--seed", "8"]].concat(), Some("7"));
    assert_eq!(env.stdout, a.stdout);
    let bad = mtc_env(&base, Some("seven"));
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("MTC_SEED"));
}

#[test]
fn bad_workload_config_exits_2() {
    let out = mtc(&["generate", "--sessions", "0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error: invalid workload"));
    assert_eq!(code(&mtc(&["generate", "--dist", "zipfian:-1"])), 2);
}

#[test]
fn run_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.jsonl");
    let w = dir.path().join("w.jsonl");
    let common = ["--txns", "300", "--objects", "10", "--dist", "zipfian:0.99", "--seed", "3"];

    let gen = mtc(&[&["generate", "-o", s(&w)][..], &common].concat());
    assert_eq!(code(&gen), 0);
    assert!(gen.stdout.is_empty());

    let run = mtc(&[&["run", "--isolation", "si", "--workload-file", s(&w), "-o", s(&h)][..], &common].concat());
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert!(stderr(&run).starts_with("committed "));
    let history = History::from_jsonl(&fs::read_to_string(&h).unwrap()).unwrap();
    assert!(history.has_timestamps());
    assert!(check(&history, Level::Si).unwrap().ok);

    let ok = mtc(&["check", "--level", "si", s(&h)]);
    assert_eq!(code(&ok), 0);
    assert_eq!(stdout(&ok), "{\"level\":\"si\",\"ok\":true}\n");

    let lost = dir.path().join("lost.jsonl");
    let run = mtc(&[&["run", "--fault", "lost-update", "-o", s(&lost)][..], &common].concat());
    assert_eq!(code(&run), 0);
    let bad = mtc(&["check", "--level", "si", "--format", "text", s(&lost)]);
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).starts_with("si: VIOLATION"));
}

#[test]
fn screen_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let clean = fixture(dir.path(), "write-skew");
    let out = mtc(&["screen", s(&clean)]);
    assert_eq!((code(&out), stdout(&out)), (0, "[]\n".to_string()));

    let future = fixture(dir.path(), "future-read");
    let out = mtc(&["screen", "--format", "text", s(&future)]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FutureRead"));
    assert_eq!(code(&mtc(&["screen", "--format", "dot", s(&future)])), 2);
}

#[test]
fn check_formats() {
    let dir = tempfile::tempdir().unwrap();
    let skew = fixture(dir.path(), "write-skew");

    let dot = mtc(&["check", "--level", "ser", "--format", "dot", s(&skew)]);
    assert_eq!(code(&dot), 1);
    let text = stdout(&dot);
    assert!(text.starts_with("digraph"));
    assert!(text.contains("T1 -> T2 [label=\"RW(y)\"]"), "{text}");

    let passing = mtc(&["check", "--level", "si", "--format", "dot", s(&skew)]);
    assert_eq!(code(&passing), 0);
    assert!(stdout(&passing).starts_with("digraph"));
}

#[test]
fn check_many_files_keeps_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["write-skew", "lost-update", "long-fork", "fork", "mariadb-fork"];
    let paths: Vec<PathBuf> = names.iter().map(|n| fixture(dir.path(), n)).collect();
    let mut args = vec!["check", "--level", "si", "--jobs", "3"];
    args.extend(paths.iter().map(|p| s(p)));
    let out = mtc(&args);
    assert_eq!(code(&out), 1);
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), names.len());
    for (line, path) in lines.iter().zip(&paths) {
        assert_eq!(line["file"], s(path));
        assert_eq!(line["level"], "si");
    }
    assert_eq!(lines[0]["ok"], true);
    assert_eq!(lines[1]["counterexample"]["type"], "fork");
}

#[test]
fn check_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = mtc(&["check", "--level", "ser", s(&missing)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.jsonl"));

    let garbage = dir.path().join("garbage.jsonl");
    fs::write(&garbage, "{\"id\":1\n").unwrap();
    assert_eq!(code(&mtc(&["check", "--level", "ser", s(&garbage)])), 2);

    // A write-only transaction is not a mini-transaction.
    let gt = dir.path().join("gt.jsonl");
    fs::write(&gt, "{\"id\":1,\"session\":\"a\",\"status\":\"committed\",\"ops\":[{\"t\":\"w\",\"k\":\"x\",\"v\":1}]}\n")
        .unwrap();
    let out = mtc(&["check", "--level", "si", s(&gt)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no_reads"), "{}", stderr(&out));

    // Fixtures carry no timestamps.
    let skew = fixture(dir.path(), "write-skew");
    let out = mtc(&["check", "--level", "sser", s(&skew)]);
    assert_eq!(code(&out), 2);

    // An input error outranks a violation in the same batch.
    let lost = fixture(dir.path(), "lost-update");
    let out = mtc(&["check", "--level", "si", s(&lost), s(&missing)]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn oracle_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let skew = fixture(dir.path(), "write-skew");
    let pass = mtc(&["oracle", "--level", "si", s(&skew)]);
    assert_eq!((code(&pass), stdout(&pass)), (0, "{\"level\":\"si\",\"outcome\":\"pass\"}\n".to_string()));
    let fail = mtc(&["oracle", "--level", "ser", s(&skew)]);
    assert_eq!(code(&fail), 1);

    let refused = mtc(&["oracle", "--level", "ser", "--max-txns", "1", s(&skew)]);
    assert_eq!(code(&refused), 2);
    assert_eq!(
        stdout(&refused),
        "{\"level\":\"ser\",\"outcome\":\"refused\",\"refusal\":{\"reason\":\"too_many_txns\",\"count\":2,\"max\":1}}\n"
    );
    let untimed = mtc(&["oracle", "--level", "sser", s(&skew)]);
    assert_eq!(code(&untimed), 2);
    assert!(stdout(&untimed).contains("missing_timestamps"));

    let lwt = fixture(dir.path(), "lwt-not-linearizable");
    assert_eq!(code(&mtc(&["oracle", "--level", "lin", s(&lwt)])), 1);
    let lwt = fixture(dir.path(), "lwt-linearizable");
    assert_eq!(code(&mtc(&["oracle", "--level", "lin", s(&lwt)])), 0);
}

#[test]
fn fixtures_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = mtc(&["fixtures", "--emit-all", s(dir.path())]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 16);
    assert!(dir.path().join("a-thin-air-read.jsonl").exists());
    assert!(dir.path().join("lwt-linearizable.jsonl").exists());

    let list = mtc(&["fixtures", "--list"]);
    assert_eq!(stdout(&list).lines().count(), 18);
    assert_eq!(code(&mtc(&["fixtures", "--name", "nope"])), 2);

    // Letters resolve too.
    assert_eq!(mtc(&["fixtures", "--name", "n"]).stdout, mtc(&["fixtures", "--name", "write-skew"]).stdout);
}
