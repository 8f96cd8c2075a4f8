//! Canonical small histories for each isolation anomaly, plus two LWT
//! register histories.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::anomaly::AnomalyKind;
use crate::history::{History, Operation, Transaction, Value};
use crate::lwt::LwtOp;

/// What checking a fixture must report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    /// Flagged by the preflight screen with exactly this anomaly.
    Screen(AnomalyKind),
    /// Screen-clean, but not snapshot isolated.
    NotSi,
    /// Snapshot isolated but not serializable.
    SiNotSer,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub letter: char,
    pub slug: &'static str,
    pub history: History,
    pub expect: Expect,
}

impl Fixture {
    pub fn file_name(&self) -> String {
        format!("{}-{}.jsonl", self.letter, self.slug)
    }
}

fn r(k: &str, v: Value) -> Operation {
    Operation::read(k, v)
}

fn w(k: &str, v: Value) -> Operation {
    Operation::write(k, v)
}

fn c(id: u64, ops: Vec<Operation>) -> Transaction {
    Transaction::committed(id, &format!("s{id}"), ops)
}

fn history(txns: Vec<Transaction>) -> History {
    History::new(txns).expect("fixture histories are well formed")
}

/// The fourteen anomaly fixtures, in letter order.
pub fn anomaly_fixtures() -> Vec<Fixture> {
    use AnomalyKind::*;
    let fx = |letter, slug, txns, expect| Fixture { letter, slug, history: history(txns), expect };
    vec![
        fx('a', "thin-air-read", vec![c(1, vec![r("x", 1)])], Expect::Screen(ThinAirRead)),
        fx(
            'b',
            "aborted-read",
            vec![Transaction::aborted(1, "s1", vec![r("x", 0), w("x", 1)]), c(2, vec![r("x", 1)])],
            Expect::Screen(AbortedRead),
        ),
        fx('c', "future-read", vec![c(1, vec![r("x", 0), r("x", 1), w("x", 1)])], Expect::Screen(FutureRead)),
        fx(
            'd',
            "not-my-last-write",
            vec![c(1, vec![r("x", 0), w("x", 1), w("x", 2), r("x", 1)])],
            Expect::Screen(NotMyLastWrite),
        ),
        fx(
            'e',
            "not-my-own-write",
            vec![c(1, vec![r("x", 0), w("x", 1)]), c(2, vec![r("x", 1), w("x", 2), r("x", 1)])],
            Expect::Screen(NotMyOwnWrite),
        ),
        fx(
            'f',
            "intermediate-read",
            vec![c(1, vec![r("x", 0), w("x", 1), w("x", 2)]), c(2, vec![r("x", 1)])],
            Expect::Screen(IntermediateRead),
        ),
        fx(
            'g',
            "non-repeatable-read",
            vec![c(1, vec![r("x", 0), w("x", 1)]), c(2, vec![r("x", 0), r("x", 1)])],
            Expect::Screen(NonRepeatableRead),
        ),
        fx(
            'h',
            "session-guarantee-violation",
            vec![
                Transaction::committed(1, "s1", vec![r("x", 0), w("x", 1)]),
                Transaction::committed(2, "s1", vec![r("x", 0)]),
            ],
            Expect::NotSi,
        ),
        fx(
            'i',
            "non-mono-read",
            vec![
                c(1, vec![r("x", 0), w("x", 1)]),
                c(2, vec![r("x", 1), r("y", 0), w("x", 2), w("y", 1)]),
                c(3, vec![r("y", 1), r("x", 1)]),
            ],
            Expect::NotSi,
        ),
        fx(
            'j',
            "fractured-read",
            vec![c(1, vec![r("x", 0), r("y", 0), w("x", 1), w("y", 1)]), c(2, vec![r("x", 1), r("y", 0)])],
            Expect::NotSi,
        ),
        fx(
            'k',
            "causality-violation",
            vec![
                c(1, vec![r("x", 0), w("x", 1)]),
                c(2, vec![r("x", 1), r("y", 0), w("y", 1)]),
                c(3, vec![r("y", 1), r("x", 0)]),
            ],
            Expect::NotSi,
        ),
        fx(
            'l',
            "long-fork",
            vec![
                c(1, vec![r("x", 0), w("x", 1)]),
                c(2, vec![r("y", 0), w("y", 1)]),
                c(3, vec![r("x", 1), r("y", 0)]),
                c(4, vec![r("y", 1), r("x", 0)]),
            ],
            Expect::NotSi,
        ),
        fx(
            'm',
            "lost-update",
            vec![c(1, vec![r("x", 0), w("x", 1)]), c(2, vec![r("x", 0), w("x", 2)])],
            Expect::NotSi,
        ),
        fx(
            'n',
            "write-skew",
            vec![c(1, vec![r("x", 0), r("y", 0), w("x", 1)]), c(2, vec![r("x", 0), r("y", 0), w("y", 1)])],
            Expect::SiNotSer,
        ),
    ]
}

/// Two transactions read the same version of `x` and overwrite it.
pub fn fork_example() -> History {
    history(vec![
        c(1, vec![r("x", 0), w("x", 1)]),
        c(2, vec![r("x", 1), w("x", 2)]),
        c(3, vec![r("x", 1), w("x", 3)]),
    ])
}

/// The three-transaction lost update core found in a production database,
/// with its original transaction ids on object `2`.
pub fn mariadb_fork() -> History {
    history(vec![
        c(949, vec![r("2", 0), w("2", 1)]),
        c(423, vec![r("2", 1), w("2", 2)]),
        c(830, vec![r("2", 1), w("2", 3)]),
    ])
}

/// Linearizable as insert, O1, O2, O3.
pub fn lwt_linearizable() -> Vec<LwtOp> {
    vec![
        LwtOp::insert("x", 0, 1, 2),
        LwtOp::rw("x", 0, 1, 3, 6),
        LwtOp::rw("x", 1, 2, 5, 9),
        LwtOp::rw("x", 2, 3, 8, 12),
    ]
}

/// Not linearizable: `rw(x,0,1)` starts after `rw(x,1,2)` finishes.
pub fn lwt_not_linearizable() -> Vec<LwtOp> {
    vec![
        LwtOp::insert("x", 0, 1, 2),
        LwtOp::rw("x", 1, 2, 3, 5),
        LwtOp::rw("x", 0, 1, 6, 8),
        LwtOp::rw("x", 2, 3, 9, 11),
    ]
}

pub const LWT_FILES: [&str; 2] = ["lwt-linearizable.jsonl", "lwt-not-linearizable.jsonl"];

/// A fixture by slug: any anomaly slug, `fork`, `mariadb-fork`, or an LWT
/// file stem. Returns the file contents.
pub fn fixture_text(name: &str) -> Option<String> {
    if let Some(f) = anomaly_fixtures().into_iter().find(|f| f.slug == name || f.letter.to_string() == name) {
        return Some(f.history.to_jsonl());
    }
    match name {
        "fork" => Some(fork_example().to_jsonl()),
        "mariadb-fork" => Some(mariadb_fork().to_jsonl()),
        "lwt-linearizable" => Some(LwtOp::to_jsonl(&lwt_linearizable())),
        "lwt-not-linearizable" => Some(LwtOp::to_jsonl(&lwt_not_linearizable())),
        _ => None,
    }
}

/// Every name accepted by [`fixture_text`].
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = anomaly_fixtures().iter().map(|f| f.slug.to_string()).collect();
    names.extend(["fork", "mariadb-fork", "lwt-linearizable", "lwt-not-linearizable"].map(String::from));
    names
}

/// Writes the fourteen anomaly histories and the two LWT histories into
/// `dir`, creating it if needed. Returns the paths in write order.
pub fn emit_fixtures(dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for f in anomaly_fixtures() {
        let path = dir.join(f.file_name());
        fs::write(&path, f.history.to_jsonl())?;
        out.push(path);
    }
    for (name, ops) in LWT_FILES.iter().zip([lwt_linearizable(), lwt_not_linearizable()]) {
        let path = dir.join(name);
        fs::write(&path, LwtOp::to_jsonl(&ops))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::validate_mt;

    #[test]
    fn fourteen_mt_fixtures() {
        let all = anomaly_fixtures();
        assert_eq!(all.len(), 14);
        let letters: String = all.iter().map(|f| f.letter).collect();
        assert_eq!(letters, "abcdefghijklmn");
        for f in &all {
            assert!(validate_mt(&f.history).is_empty(), "{}", f.slug);
        }
    }

    #[test]
    fn names_resolve() {
        for n in fixture_names() {
            assert!(fixture_text(&n).is_some(), "{n}");
        }
        assert!(fixture_text("nope").is_none());
    }

    #[test]
    fn emit_writes_sixteen_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_fixtures(dir.path()).unwrap();
        assert_eq!(paths.len(), 16);
        let first = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(first, "{\"id\":1,\"session\":\"s1\",\"status\":\"committed\",\"ops\":[{\"t\":\"r\",\"k\":\"x\",\"v\":1}]}\n");
    }
}
