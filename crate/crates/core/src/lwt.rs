//! Linear-time linearizability checking for lightweight-transaction histories
//! (compare-and-set plus insert-if-not-exists on single objects).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::check::{Counterexample, Level, Verdict};
use crate::history::{Key, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LwtKind {
    ReadWrite { expected: Value, new: Value },
    Insert { initial: Value },
}

/// One successful lightweight transaction. Serialized as
/// `{"k":"x","t":"rw","exp":0,"new":1,"start":3,"finish":6}`; inserts use
/// `"t":"ins"` and omit `exp`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawOp", into = "RawOp")]
pub struct LwtOp {
    pub key: Key,
    pub kind: LwtKind,
    pub start: u64,
    pub finish: u64,
}

impl LwtOp {
    pub fn rw(key: &str, expected: Value, new: Value, start: u64, finish: u64) -> Self {
        LwtOp { key: Key::new(key), kind: LwtKind::ReadWrite { expected, new }, start, finish }
    }

    pub fn insert(key: &str, initial: Value, start: u64, finish: u64) -> Self {
        LwtOp { key: Key::new(key), kind: LwtKind::Insert { initial }, start, finish }
    }

    pub fn is_insert(&self) -> bool {
        matches!(self.kind, LwtKind::Insert { .. })
    }

    /// Value the register holds after this op.
    pub fn written(&self) -> Value {
        match self.kind {
            LwtKind::ReadWrite { new, .. } => new,
            LwtKind::Insert { initial } => initial,
        }
    }

    pub fn expected(&self) -> Option<Value> {
        match self.kind {
            LwtKind::ReadWrite { expected, .. } => Some(expected),
            LwtKind::Insert { .. } => None,
        }
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Vec<LwtOp>, LwtError> {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let op: LwtOp =
                serde_json::from_str(&line).map_err(|source| LwtError::Syntax { line: i + 1, source })?;
            out.push(op);
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<LwtOp>, LwtError> {
        Self::parse(text.as_bytes())
    }

    pub fn write_jsonl<W: Write>(ops: &[LwtOp], mut w: W) -> std::io::Result<()> {
        for op in ops {
            serde_json::to_writer(&mut w, op)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(ops: &[LwtOp]) -> String {
        let mut buf = Vec::new();
        Self::write_jsonl(ops, &mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

impl fmt::Display for LwtOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LwtKind::ReadWrite { expected, new } => write!(f, "rw({},{},{})", self.key, expected, new)?,
            LwtKind::Insert { initial } => write!(f, "insert({},{})", self.key, initial)?,
        }
        write!(f, "@[{},{}]", self.start, self.finish)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Rw,
    Ins,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawOp {
    k: Key,
    t: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exp: Option<Value>,
    new: Value,
    start: u64,
    finish: u64,
}

impl TryFrom<RawOp> for LwtOp {
    type Error = String;

    fn try_from(raw: RawOp) -> Result<Self, String> {
        if raw.start >= raw.finish {
            return Err(format!("start {} is not before finish {}", raw.start, raw.finish));
        }
        let kind = match (raw.t, raw.exp) {
            (RawKind::Rw, Some(expected)) if expected == raw.new => {
                return Err(format!("rw writes back the value it expects ({expected})"))
            }
            (RawKind::Rw, Some(expected)) => LwtKind::ReadWrite { expected, new: raw.new },
            (RawKind::Rw, None) => return Err("rw op without `exp`".into()),
            (RawKind::Ins, None) => LwtKind::Insert { initial: raw.new },
            (RawKind::Ins, Some(_)) => return Err("insert op must not carry `exp`".into()),
        };
        Ok(LwtOp { key: raw.k, kind, start: raw.start, finish: raw.finish })
    }
}

impl From<LwtOp> for RawOp {
    fn from(op: LwtOp) -> Self {
        let (t, exp, new) = match op.kind {
            LwtKind::ReadWrite { expected, new } => (RawKind::Rw, Some(expected), new),
            LwtKind::Insert { initial } => (RawKind::Ins, None, initial),
        };
        RawOp { k: op.key, t, exp, new, start: op.start, finish: op.finish }
    }
}

#[derive(Debug, Error)]
pub enum LwtError {
    #[error("line {line}: {source}")]
    Syntax { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The operations on one object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LwtHistory {
    pub key: Key,
    pub ops: Vec<LwtOp>,
}

/// Why a per-object history is not linearizable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum LwtViolation {
    /// Not exactly one insert.
    InsertCount { key: Key, count: usize },
    /// The chain stops at `value` with `remaining` ops unconsumed.
    MissingSuccessor { key: Key, value: Value, remaining: usize },
    /// Several ops expect `value`.
    AmbiguousSuccessor { key: Key, value: Value, ops: Vec<LwtOp> },
    /// `op` starts after `later` finishes, yet must precede it in the chain.
    RealTime { key: Key, op: LwtOp, later: LwtOp },
}

impl fmt::Display for LwtViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LwtViolation::InsertCount { key, count } => write!(f, "{key}: {count} inserts"),
            LwtViolation::MissingSuccessor { key, value, remaining } => {
                write!(f, "{key}: no op expects {value} ({remaining} ops left)")
            }
            LwtViolation::AmbiguousSuccessor { key, value, ops } => {
                write!(f, "{key}: {} ops expect {value}", ops.len())
            }
            LwtViolation::RealTime { key, op, later } => {
                write!(f, "{key}: {op} must precede {later} but starts after it finishes")
            }
        }
    }
}

/// Partitions operations by object. Ops keep their input order within a key.
pub fn split_by_object(ops: impl IntoIterator<Item = LwtOp>) -> BTreeMap<Key, LwtHistory> {
    let mut out: BTreeMap<Key, LwtHistory> = BTreeMap::new();
    for op in ops {
        out.entry(op.key.clone())
            .or_insert_with(|| LwtHistory { key: op.key.clone(), ops: Vec::new() })
            .ops
            .push(op);
    }
    out
}

const NONE: u32 = u32::MAX;
const AMBIGUOUS: u32 = u32::MAX - 1;
const BUCKET: usize = 1024;

/// For each op, the op expecting the value it writes, or `NONE`, or
/// `AMBIGUOUS` when several ops expect it.
///
/// Values are hash-partitioned into buckets of about `BUCKET` entries and
/// each bucket is matched through a small open-addressing table reused
/// across buckets, so the work is linear and stays in cache.
fn successors(ops: &[LwtOp]) -> Vec<u32> {
    let bits = (ops.len() / BUCKET).max(1).next_power_of_two().trailing_zeros();
    let buckets = 1usize << bits;
    let hash = |v: Value| (v as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let bucket = |v: Value| if bits == 0 { 0 } else { (hash(v) >> (64 - bits)) as usize };
    let expected: Vec<(Value, u32)> =
        ops.iter().enumerate().filter_map(|(i, o)| o.expected().map(|e| (e, i as u32))).collect();
    let written: Vec<(Value, u32)> = ops.iter().enumerate().map(|(i, o)| (o.written(), i as u32)).collect();
    let (expected, eo) = partition(&expected, buckets, bucket);
    let (written, wo) = partition(&written, buckets, bucket);

    let largest = (0..buckets).map(|b| eo[b + 1] - eo[b]).max().unwrap_or(0);
    let table_bits = (2 * largest).max(2).next_power_of_two().trailing_zeros();
    let mask = (1usize << table_bits) - 1;
    let home = |v: Value| ((hash(v) << bits) >> (64 - table_bits)) as usize;
    // (value, op index or AMBIGUOUS, bucket stamp); a slot is live only
    // when its stamp is the current bucket's.
    let mut table: Vec<(Value, u32, u32)> = vec![(0, 0, 0); mask + 1];

    let mut next = vec![NONE; ops.len()];
    for b in 0..buckets {
        let stamp = b as u32 + 1;
        for &(v, i) in &expected[eo[b]..eo[b + 1]] {
            let mut slot = home(v);
            loop {
                let entry = &mut table[slot];
                if entry.2 != stamp {
                    *entry = (v, i, stamp);
                    break;
                }
                if entry.0 == v {
                    entry.1 = AMBIGUOUS;
                    break;
                }
                slot = (slot + 1) & mask;
            }
        }
        for &(v, i) in &written[wo[b]..wo[b + 1]] {
            let mut slot = home(v);
            while table[slot].2 == stamp {
                if table[slot].0 == v {
                    next[i as usize] = table[slot].1;
                    break;
                }
                slot = (slot + 1) & mask;
            }
        }
    }
    next
}

/// Counting sort of `items` by bucket. Returns the items and the bucket
/// offsets (`buckets + 1` entries).
fn partition(items: &[(Value, u32)], buckets: usize, bucket: impl Fn(Value) -> usize) -> (Vec<(Value, u32)>, Vec<usize>) {
    let mut offsets = vec![0usize; buckets + 1];
    for &(v, _) in items {
        offsets[bucket(v) + 1] += 1;
    }
    for b in 0..buckets {
        offsets[b + 1] += offsets[b];
    }
    let mut fill = offsets.clone();
    let mut out = vec![(0, 0); items.len()];
    for &item in items {
        let b = bucket(item.0);
        out[fill[b]] = item;
        fill[b] += 1;
    }
    (out, offsets)
}

/// Checks one object's history: builds the unique value chain from the
/// insert, then verifies real-time order with a reverse suffix-minimum scan.
/// On success returns the chain (insert first).
pub fn linearize(hx: &LwtHistory) -> Result<Vec<&LwtOp>, LwtViolation> {
    let key = &hx.key;
    let inserts: Vec<&LwtOp> = hx.ops.iter().filter(|o| o.is_insert()).collect();
    if inserts.len() != 1 {
        return Err(LwtViolation::InsertCount { key: key.clone(), count: inserts.len() });
    }

    let next = successors(&hx.ops);
    let n = hx.ops.len();
    let mut visited = vec![0u64; n.div_ceil(64)];
    let mut order: Vec<u32> = Vec::with_capacity(n);
    let mut at = hx.ops.iter().position(LwtOp::is_insert).expect("one insert");
    visited[at / 64] |= 1 << (at % 64);
    order.push(at as u32);
    while order.len() < n {
        match next[at] {
            i if i < AMBIGUOUS && visited[i as usize / 64] & (1 << (i % 64)) == 0 => {
                at = i as usize;
                visited[at / 64] |= 1 << (at % 64);
                order.push(i);
            }
            i => {
                let value = hx.ops[at].written();
                return Err(if i == AMBIGUOUS {
                    let ops = hx.ops.iter().filter(|o| o.expected() == Some(value)).cloned().collect();
                    LwtViolation::AmbiguousSuccessor { key: key.clone(), value, ops }
                } else {
                    LwtViolation::MissingSuccessor { key: key.clone(), value, remaining: n - order.len() }
                });
            }
        }
    }

    // Intervals in chain order, filled by one sequential pass over the ops.
    let mut rank = next;
    for (k, &i) in order.iter().enumerate() {
        rank[i as usize] = k as u32;
    }
    let mut intervals = vec![(0u64, 0u64); n];
    for (op, &k) in hx.ops.iter().zip(&rank) {
        intervals[k as usize] = (op.start, op.finish);
    }
    // Position in the chain of the earliest-finishing op seen so far.
    let mut min_finish: Option<usize> = None;
    for k in (0..n).rev() {
        let (start, finish) = intervals[k];
        if let Some(m) = min_finish {
            if start > intervals[m].1 {
                let (op, later) = (&hx.ops[order[k] as usize], &hx.ops[order[m] as usize]);
                return Err(LwtViolation::RealTime { key: key.clone(), op: op.clone(), later: later.clone() });
            }
        }
        if min_finish.map_or(true, |m| finish < intervals[m].1) {
            min_finish = Some(k);
        }
    }
    Ok(order.iter().map(|&i| &hx.ops[i as usize]).collect())
}

pub fn verify_lwt(hx: &LwtHistory) -> Verdict {
    match linearize(hx) {
        Ok(_) => Verdict::pass(Level::Lin),
        Err(v) => Verdict::fail(Level::Lin, Counterexample::Lwt(v)),
    }
}

/// Checks every object in parallel. The verdict is the conjunction of the
/// per-object verdicts; on failure the counterexample comes from the
/// smallest failing key.
pub fn verify_all(ops: impl IntoIterator<Item = LwtOp>) -> Verdict {
    let per_key: Vec<LwtHistory> = split_by_object(ops).into_values().collect();
    let failures: Vec<Option<LwtViolation>> = per_key.par_iter().map(|hx| linearize(hx).err()).collect();
    match failures.into_iter().flatten().next() {
        None => Verdict::pass(Level::Lin),
        Some(v) => Verdict::fail(Level::Lin, Counterexample::Lwt(v)),
    }
}
