use std::io::Write;
use std::process::{Command, Output};

use andante::run::RunReport;
use andante::trace::{parse_trace, EventKind};

fn program(src: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".pl").tempfile().unwrap();
    f.write_all(src.as_bytes()).unwrap();
    f
}

fn andante(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_andante"))
        .args(args)
        .output()
        .expect("binary runs")
}

const PAIRS: &str = "p(X, Y) :- a(X) & a(Y).\na(1). a(2).\n";

#[test]
fn answers_are_printed() {
    let f = program(PAIRS);
    let out = andante(&[
        "run",
        f.path().to_str().unwrap(),
        "-q",
        "p(X, Y)",
        "--agents",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.sort();
    assert_eq!(
        lines,
        [
            "X = 1, Y = 1",
            "X = 1, Y = 2",
            "X = 2, Y = 1",
            "X = 2, Y = 2"
        ]
    );
}

#[test]
fn no_answers_exits_one() {
    let f = program(PAIRS);
    let out = andante(&["run", f.path().to_str().unwrap(), "-q", "p(3, Y)"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "no");
}

#[test]
fn syntax_error_exits_two() {
    let f = program("p(X :- q.\n");
    let out = andante(&["run", f.path().to_str().unwrap(), "-q", "p(X)"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    let f = program(PAIRS);
    let path = f.path().to_str().unwrap();
    assert_eq!(andante(&["run", path]).status.code(), Some(2));
    assert_eq!(
        andante(&["run", path, "-q", "p(X, Y)", "--mode", "fast"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        andante(&["run", path, "-q", "p(X, Y)", "--agents", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        andante(&["run", "/nonexistent.pl", "-q", "p"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(andante(&["bench", "nosuchsuite"]).status.code(), Some(2));
}

#[test]
fn json_report_round_trips() {
    let f = program(PAIRS);
    let out = andante(&[
        "run",
        f.path().to_str().unwrap(),
        "-q",
        "p(X, Y)",
        "--answers",
        "3",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.answers.len(), 3);
    assert_eq!(r.mode, "parback");
    assert_eq!(r.forks, 1);
    let again: RunReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(again, r);
}

#[test]
fn trace_file_is_written() {
    let f = program(PAIRS);
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.trace");
    let out = andante(&[
        "run",
        f.path().to_str().unwrap(),
        "-q",
        "p(X, Y)",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let events = parse_trace(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(
        events.iter().filter(|e| e.kind == EventKind::Fork).count(),
        1
    );
    assert_eq!(
        events
            .iter()
            .filter(|e| e.kind == EventKind::Memoize)
            .count(),
        4
    );
    assert_eq!(
        events
            .iter()
            .filter(|e| e.kind == EventKind::Combine)
            .count(),
        4
    );
}

#[test]
fn shared_variable_is_diagnosed() {
    let f = program("p(X) :- a(X) & a(X).\na(1).\n");
    let path = f.path().to_str().unwrap();
    let out = andante(&["run", path, "-q", "p(X)", "--debug-independence"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("share an unbound variable"));
}

#[test]
fn seq_and_recompute_modes_run() {
    let f = program(PAIRS);
    let path = f.path().to_str().unwrap();
    for mode in ["seq", "recompute"] {
        let out = andante(&["run", path, "-q", "p(X, Y)", "--mode", mode, "--json"]);
        assert_eq!(out.status.code(), Some(0), "{mode}");
        let r: RunReport = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(r.answers.len(), 4);
    }
}

#[test]
fn diff_over_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pairs.pl"),
        format!("%% query: p(X, Y)\n{PAIRS}"),
    )
    .unwrap();
    let out = andante(&["diff", dir.path().to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("1 programs"));
}
