//! History data model, the JSON-lines history format, and well-formedness
//! validation (mini-transaction shape, unique writes, internal consistency).
//!
//! A [`History`] always contains the synthetic initial transaction (id 0,
//! session `"init"`) which writes `0` to every key referenced anywhere in the
//! history and precedes every other transaction in session order. It is
//! synthesized at parse time and never written back out unless the input
//! carried it explicitly.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Value = i64;

/// Id of the synthetic initial transaction.
pub const INIT_TXN: TxnId = TxnId(0);

/// Session name carried by the initial transaction.
pub const INIT_SESSION: &str = "init";

/// Value installed by the initial transaction for every key.
pub const INIT_VALUE: Value = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Object identifier. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Key(Arc<str>);

impl Key {
    pub fn new(name: &str) -> Self {
        Key(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "r")]
    Read,
    #[serde(rename = "w")]
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    #[serde(rename = "t")]
    pub kind: OpKind,
    #[serde(rename = "k")]
    pub key: Key,
    #[serde(rename = "v")]
    pub value: Value,
}

impl Operation {
    pub fn read(key: impl Into<Key>, value: Value) -> Self {
        Operation { kind: OpKind::Read, key: key.into(), value }
    }

    pub fn write(key: impl Into<Key>, value: Value) -> Self {
        Operation { kind: OpKind::Write, key: key.into(), value }
    }

    pub fn is_read(&self) -> bool {
        self.kind == OpKind::Read
    }

    pub fn is_write(&self) -> bool {
        self.kind == OpKind::Write
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OpKind::Read => write!(f, "r({},{})", self.key, self.value),
            OpKind::Write => write!(f, "w({},{})", self.key, self.value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxnStatus {
    Committed,
    Aborted,
}

/// One transaction. Program order is the order of `ops`.
///
/// Field order matters: it is the key order of the on-disk encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxnId,
    pub session: String,
    pub status: TxnStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commit: Option<u64>,
    pub ops: Vec<Operation>,
}

impl Transaction {
    pub fn committed(id: u64, session: &str, ops: Vec<Operation>) -> Self {
        Transaction {
            id: TxnId(id),
            session: session.to_string(),
            status: TxnStatus::Committed,
            start: None,
            commit: None,
            ops,
        }
    }

    pub fn aborted(id: u64, session: &str, ops: Vec<Operation>) -> Self {
        Transaction { status: TxnStatus::Aborted, ..Transaction::committed(id, session, ops) }
    }

    pub fn with_interval(mut self, start: u64, commit: u64) -> Self {
        self.start = Some(start);
        self.commit = Some(commit);
        self
    }

    pub fn is_committed(&self) -> bool {
        self.status == TxnStatus::Committed
    }

    pub fn is_init(&self) -> bool {
        self.id == INIT_TXN
    }

    /// External reads: for each key, the first read that precedes every own
    /// write of that key. Yields `(op index, key, value)` in program order.
    pub fn external_reads(&self) -> Vec<(usize, &Key, Value)> {
        let mut seen: Vec<&Key> = Vec::new();
        let mut out = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            if seen.contains(&&op.key) {
                continue;
            }
            seen.push(&op.key);
            if op.is_read() {
                out.push((i, &op.key, op.value));
            }
        }
        out
    }

    /// Final writes: for each written key, the last value written.
    /// Keys appear in order of their first write.
    pub fn final_writes(&self) -> Vec<(&Key, Value)> {
        let mut out: Vec<(&Key, Value)> = Vec::new();
        for op in self.ops.iter().filter(|op| op.is_write()) {
            match out.iter_mut().find(|(k, _)| *k == &op.key) {
                Some(slot) => slot.1 = op.value,
                None => out.push((&op.key, op.value)),
            }
        }
        out
    }

    pub fn writes_key(&self, key: &Key) -> bool {
        self.ops.iter().any(|op| op.is_write() && &op.key == key)
    }

    pub fn final_write(&self, key: &Key) -> Option<Value> {
        self.ops.iter().rev().find(|op| op.is_write() && &op.key == key).map(|op| op.value)
    }
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("line {line}: {source}")]
    Syntax {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate transaction id {0}")]
    DuplicateId(TxnId),
    #[error("transaction {id}: start {start} is not before commit {commit}")]
    BadInterval { id: TxnId, start: u64, commit: u64 },
    #[error("transaction {0}: the initial transaction must be committed and write only")]
    BadInitial(TxnId),
    #[error("transaction {0} has no timestamps; real-time order is unavailable")]
    MissingTimestamp(TxnId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A set of transactions with session order. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    txns: Vec<Transaction>,
    index: HashMap<TxnId, usize>,
    sessions: IndexMap<String, Vec<TxnId>>,
    explicit_init: bool,
}

impl History {
    /// Builds a history, synthesizing the initial transaction when absent.
    pub fn new(txns: Vec<Transaction>) -> Result<Self, HistoryError> {
        let mut explicit: Option<Transaction> = None;
        let mut rest = Vec::with_capacity(txns.len());
        for t in txns {
            if let (Some(s), Some(c)) = (t.start, t.commit) {
                if s >= c && !t.is_init() {
                    return Err(HistoryError::BadInterval { id: t.id, start: s, commit: c });
                }
            }
            if t.is_init() {
                if explicit.is_some() {
                    return Err(HistoryError::DuplicateId(t.id));
                }
                if !t.is_committed() || t.ops.iter().any(Operation::is_read) {
                    return Err(HistoryError::BadInitial(t.id));
                }
                explicit = Some(t);
            } else {
                rest.push(t);
            }
        }

        let keys: BTreeSet<Key> =
            rest.iter().flat_map(|t| t.ops.iter().map(|op| op.key.clone())).collect();
        let explicit_init = explicit.is_some();
        let mut init = explicit.unwrap_or_else(|| Transaction {
            id: INIT_TXN,
            session: INIT_SESSION.to_string(),
            status: TxnStatus::Committed,
            start: Some(0),
            commit: Some(0),
            ops: Vec::new(),
        });
        for key in keys {
            if !init.writes_key(&key) {
                init.ops.push(Operation::write(key, INIT_VALUE));
            }
        }

        let mut all = Vec::with_capacity(rest.len() + 1);
        all.push(init);
        all.extend(rest);

        let mut index = HashMap::with_capacity(all.len());
        let mut sessions: IndexMap<String, Vec<TxnId>> = IndexMap::new();
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.id, i).is_some() {
                return Err(HistoryError::DuplicateId(t.id));
            }
            if i > 0 && t.is_committed() {
                sessions.entry(t.session.clone()).or_default().push(t.id);
            }
        }
        Ok(History { txns: all, index, sessions, explicit_init })
    }

    /// Parses the JSON-lines encoding. Blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, HistoryError> {
        let mut txns = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let txn: Transaction = serde_json::from_str(&line)
                .map_err(|source| HistoryError::Syntax { line: n + 1, source })?;
            txns.push(txn);
        }
        History::new(txns)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, HistoryError> {
        History::parse(text.as_bytes())
    }

    /// Writes one line per transaction, in history order. The synthesized
    /// initial transaction is omitted.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let skip = usize::from(!self.explicit_init);
        for t in &self.txns[skip..] {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// All transactions, initial transaction first.
    pub fn txns(&self) -> &[Transaction] {
        &self.txns
    }

    pub fn init(&self) -> &Transaction {
        &self.txns[0]
    }

    pub fn get(&self, id: TxnId) -> Option<&Transaction> {
        self.index.get(&id).map(|&i| &self.txns[i])
    }

    /// Position of a transaction in [`History::txns`].
    pub fn position(&self, id: TxnId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn committed(&self) -> impl Iterator<Item = &Transaction> {
        self.txns.iter().filter(|t| t.is_committed())
    }

    /// Committed transactions other than the initial one.
    pub fn committed_count(&self) -> usize {
        self.txns[1..].iter().filter(|t| t.is_committed()).count()
    }

    /// Session name to committed transaction ids, in session order.
    pub fn sessions(&self) -> &IndexMap<String, Vec<TxnId>> {
        &self.sessions
    }

    /// Every key referenced by the history, sorted.
    pub fn keys(&self) -> Vec<Key> {
        self.init().ops.iter().map(|op| op.key.clone()).collect()
    }

    /// Whether every committed non-initial transaction carries both timestamps.
    pub fn has_timestamps(&self) -> bool {
        self.txns[1..].iter().filter(|t| t.is_committed()).all(|t| t.start.is_some() && t.commit.is_some())
    }

    /// Session-order pairs `(a, b)`: the initial transaction precedes every
    /// committed transaction, and within a session each transaction precedes
    /// all later ones.
    pub fn session_order(&self) -> Vec<(TxnId, TxnId)> {
        let mut out = Vec::new();
        for t in self.txns[1..].iter().filter(|t| t.is_committed()) {
            out.push((INIT_TXN, t.id));
        }
        for ids in self.sessions.values() {
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Real-time order over committed, non-initial transactions:
/// exactly `{(a, b) : commit(a) < start(b)}`.
pub fn real_time_edges(h: &History) -> Result<Vec<(TxnId, TxnId)>, HistoryError> {
    let mut timed = Vec::new();
    for t in h.txns()[1..].iter().filter(|t| t.is_committed()) {
        match (t.start, t.commit) {
            (Some(s), Some(c)) => timed.push((t.id, s, c)),
            _ => return Err(HistoryError::MissingTimestamp(t.id)),
        }
    }
    let mut out = Vec::new();
    for &(a, _, commit) in &timed {
        for &(b, start, _) in &timed {
            if commit < start {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum MtReason {
    NoReads,
    TooManyReads { reads: usize },
    TooManyWrites { writes: usize },
    WriteWithoutRead { op: usize },
}

impl fmt::Display for MtReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MtReason::NoReads => f.write_str("no read operations"),
            MtReason::TooManyReads { reads } => write!(f, "{reads} reads (at most 2)"),
            MtReason::TooManyWrites { writes } => write!(f, "{writes} writes (at most 2)"),
            MtReason::WriteWithoutRead { op } => {
                write!(f, "write at op {op} is not preceded by a read of the same key")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MtViolation {
    pub txn: TxnId,
    #[serde(flatten)]
    pub reason: MtReason,
}

/// A read that does not return the value of the nearest preceding read or
/// write of the same key in its own transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntViolation {
    pub txn: TxnId,
    pub op: usize,
    pub key: Key,
    pub expected: Value,
    pub actual: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniqueWriteViolation {
    pub key: Key,
    pub value: Value,
    pub txns: (TxnId, TxnId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub mt_violations: Vec<MtViolation>,
    pub int_violations: Vec<IntViolation>,
    pub unique_write_violations: Vec<UniqueWriteViolation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.mt_violations.is_empty()
            && self.int_violations.is_empty()
            && self.unique_write_violations.is_empty()
    }

    pub fn merge(mut self, other: ValidationReport) -> Self {
        self.mt_violations.extend(other.mt_violations);
        self.int_violations.extend(other.int_violations);
        self.unique_write_violations.extend(other.unique_write_violations);
        self
    }
}

/// Checks the mini-transaction criteria on every non-initial transaction and
/// per-key write-value uniqueness across the whole history, aborted
/// transactions included.
pub fn validate_mt(h: &History) -> ValidationReport {
    let mut report = ValidationReport::default();
    for t in &h.txns()[1..] {
        let reads = t.ops.iter().filter(|op| op.is_read()).count();
        let writes = t.ops.len() - reads;
        if reads == 0 {
            report.mt_violations.push(MtViolation { txn: t.id, reason: MtReason::NoReads });
        } else if reads > 2 {
            report.mt_violations.push(MtViolation { txn: t.id, reason: MtReason::TooManyReads { reads } });
        }
        if writes > 2 {
            report.mt_violations.push(MtViolation { txn: t.id, reason: MtReason::TooManyWrites { writes } });
        }
        for (i, op) in t.ops.iter().enumerate().filter(|(_, op)| op.is_write()) {
            let read_before = t.ops[..i].iter().any(|p| p.is_read() && p.key == op.key);
            if !read_before {
                report
                    .mt_violations
                    .push(MtViolation { txn: t.id, reason: MtReason::WriteWithoutRead { op: i } });
            }
        }
    }

    let mut writers: HashMap<(&Key, Value), TxnId> = HashMap::new();
    for t in h.txns() {
        for op in t.ops.iter().filter(|op| op.is_write()) {
            if let Some(&first) = writers.get(&(&op.key, op.value)) {
                report.unique_write_violations.push(UniqueWriteViolation {
                    key: op.key.clone(),
                    value: op.value,
                    txns: (first, t.id),
                });
            } else {
                writers.insert((&op.key, op.value), t.id);
            }
        }
    }
    report
}

/// Internal consistency: within a transaction, a read of `x` returns the value
/// of the nearest preceding read or write of `x`, when one exists.
pub fn check_int(h: &History) -> ValidationReport {
    let mut report = ValidationReport::default();
    for t in &h.txns()[1..] {
        report.int_violations.extend(int_violations(t));
    }
    report
}

pub(crate) fn int_violations(t: &Transaction) -> Vec<IntViolation> {
    let mut last: Vec<(&Key, Value)> = Vec::new();
    let mut out = Vec::new();
    for (i, op) in t.ops.iter().enumerate() {
        let slot = last.iter_mut().find(|(k, _)| *k == &op.key);
        match (slot, op.kind) {
            (Some(slot), OpKind::Read) => {
                if slot.1 != op.value {
                    out.push(IntViolation {
                        txn: t.id,
                        op: i,
                        key: op.key.clone(),
                        expected: slot.1,
                        actual: op.value,
                    });
                }
                slot.1 = op.value;
            }
            (Some(slot), OpKind::Write) => slot.1 = op.value,
            (None, _) => last.push((&op.key, op.value)),
        }
    }
    out
}
