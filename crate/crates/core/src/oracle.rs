//! Brute-force reference checkers for small histories.
//!
//! These enumerate every candidate write-write order (and, for LWT, every
//! operation permutation) directly from the definitions and share no graph
//! code with the fast checkers, so the two can be compared differentially.

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::check::Level;
use crate::history::{History, Key, OpKind, Transaction, Value};
use crate::lwt::{LwtHistory, LwtKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    /// Committed transactions (excluding the initial one) or LWT ops.
    pub max_txns: usize,
    /// Search nodes visited before giving up.
    pub max_permutations: u64,
    pub timeout: Duration,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_txns: 8, max_permutations: 50_000_000, timeout: Duration::from_secs(10) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Refusal {
    TooManyTxns { count: usize, max: usize },
    NonUniqueWrites { key: Key, value: Value },
    MissingTimestamps,
    NodeBudget { limit: u64 },
    Timeout { ms: u128 },
    UnsupportedLevel { level: Level },
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Refusal::TooManyTxns { count, max } => write!(f, "{count} transactions exceed the limit of {max}"),
            Refusal::NonUniqueWrites { key, value } => write!(f, "value {value} is written to {key} more than once"),
            Refusal::MissingTimestamps => f.write_str("real-time order needs start and commit timestamps"),
            Refusal::NodeBudget { limit } => write!(f, "search exceeded {limit} nodes"),
            Refusal::Timeout { ms } => write!(f, "search exceeded {ms} ms"),
            Refusal::UnsupportedLevel { level } => write!(f, "no oracle for level {level} on transactional histories"),
        }
    }
}

/// Refusal is a verdict of its own and is never folded into pass or fail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    Pass,
    Fail,
    Refused(Refusal),
}

impl OracleOutcome {
    fn from_bool(ok: bool) -> Self {
        if ok {
            OracleOutcome::Pass
        } else {
            OracleOutcome::Fail
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            OracleOutcome::Pass => Some(true),
            OracleOutcome::Fail => Some(false),
            OracleOutcome::Refused(_) => None,
        }
    }
}

/// At most 16 vertices; the budget keeps real inputs at 9.
type Row = u16;
const MAX_VERTICES: usize = Row::BITS as usize;

#[derive(Clone, Copy)]
struct Rel {
    n: usize,
    rows: [Row; MAX_VERTICES],
}

impl Rel {
    fn new(n: usize) -> Self {
        Rel { n, rows: [0; MAX_VERTICES] }
    }

    fn add(&mut self, a: usize, b: usize) {
        self.rows[a] |= 1 << b;
    }

    fn has(&self, a: usize, b: usize) -> bool {
        self.rows[a] & (1 << b) != 0
    }

    fn union(&self, other: &Rel) -> Rel {
        let mut out = *self;
        for i in 0..self.n {
            out.rows[i] |= other.rows[i];
        }
        out
    }

    /// `self ; other`
    fn compose(&self, other: &Rel) -> Rel {
        let mut out = Rel::new(self.n);
        for i in 0..self.n {
            let mut mids = self.rows[i];
            while mids != 0 {
                let j = mids.trailing_zeros() as usize;
                mids &= mids - 1;
                out.rows[i] |= other.rows[j];
            }
        }
        out
    }

    fn is_acyclic(&self) -> bool {
        let mut reach = self.rows;
        for k in 0..self.n {
            for i in 0..self.n {
                if reach[i] & (1 << k) != 0 {
                    reach[i] |= reach[k];
                }
            }
        }
        (0..self.n).all(|i| reach[i] & (1 << i) == 0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    Ser,
    Si,
}

struct Problem {
    n: usize,
    /// SO, RT (when requested) and WR.
    base: Rel,
    /// Per key: transactions writing it, and readers per writer.
    keys: Vec<KeyProblem>,
    target: Target,
}

struct KeyProblem {
    writers: Vec<usize>,
    /// `(writer, reader)` pairs of this key's WR relation.
    reads_from: Vec<(usize, usize)>,
}

/// Intra-transaction consistency: every read not preceded by a same-key op
/// is external; every other read returns the value of the latest same-key op.
fn int_holds(t: &Transaction) -> bool {
    let mut last: HashMap<&Key, Value> = HashMap::new();
    for op in &t.ops {
        if op.kind == OpKind::Read {
            if let Some(&v) = last.get(&op.key) {
                if v != op.value {
                    return false;
                }
            }
        }
        last.insert(&op.key, op.value);
    }
    true
}

enum Built {
    Problem(Problem),
    Decided(bool),
    Refused(Refusal),
}

fn build(h: &History, with_rt: bool, target: Target, budget: &OracleBudget) -> Built {
    let txns: Vec<&Transaction> = h.txns().iter().filter(|t| t.is_committed()).collect();
    let count = txns.len() - 1;
    if count > budget.max_txns || txns.len() > MAX_VERTICES {
        return Built::Refused(Refusal::TooManyTxns { count, max: budget.max_txns.min(MAX_VERTICES - 1) });
    }

    let mut seen: HashMap<(&Key, Value), ()> = HashMap::new();
    for t in h.txns() {
        for op in t.ops.iter().filter(|o| o.kind == OpKind::Write) {
            if seen.insert((&op.key, op.value), ()).is_some() {
                return Built::Refused(Refusal::NonUniqueWrites { key: op.key.clone(), value: op.value });
            }
        }
    }

    if !txns.iter().all(|t| int_holds(t)) {
        return Built::Decided(false);
    }

    let n = txns.len();
    let mut base = Rel::new(n);

    // Session order, transitively, with the initial transaction before all.
    for v in 1..n {
        base.add(0, v);
    }
    for a in 1..n {
        for b in (a + 1)..n {
            if txns[a].session == txns[b].session {
                base.add(a, b);
            }
        }
    }

    if with_rt {
        for v in 1..n {
            base.add(0, v);
        }
        for a in 1..n {
            for b in 1..n {
                match (txns[a].commit, txns[b].start) {
                    (Some(c), Some(s)) => {
                        if c < s {
                            base.add(a, b);
                        }
                    }
                    _ => return Built::Refused(Refusal::MissingTimestamps),
                }
            }
        }
    }

    // Last write per (txn, key) installs the visible value.
    let mut installer: HashMap<(&Key, Value), usize> = HashMap::new();
    let mut writers: HashMap<&Key, Vec<usize>> = HashMap::new();
    for (v, t) in txns.iter().enumerate() {
        let mut last: Vec<(&Key, Value)> = Vec::new();
        for op in t.ops.iter().filter(|o| o.kind == OpKind::Write) {
            match last.iter_mut().find(|(k, _)| *k == &op.key) {
                Some(slot) => slot.1 = op.value,
                None => last.push((&op.key, op.value)),
            }
        }
        for (k, val) in last {
            installer.insert((k, val), v);
            writers.entry(k).or_default().push(v);
        }
    }

    let mut reads_from: HashMap<&Key, Vec<(usize, usize)>> = HashMap::new();
    for (v, t) in txns.iter().enumerate().skip(1) {
        let mut touched: Vec<&Key> = Vec::new();
        for op in &t.ops {
            if touched.contains(&&op.key) {
                continue;
            }
            touched.push(&op.key);
            if op.kind == OpKind::Write {
                continue;
            }
            match installer.get(&(&op.key, op.value)) {
                Some(&w) => {
                    base.add(w, v);
                    reads_from.entry(&op.key).or_default().push((w, v));
                }
                None => return Built::Decided(false),
            }
        }
    }

    let mut key_names: Vec<&Key> = writers.keys().copied().collect();
    key_names.sort();
    let keys = key_names
        .into_iter()
        .map(|k| KeyProblem {
            writers: writers.remove(k).unwrap_or_default(),
            reads_from: reads_from.remove(k).unwrap_or_default(),
        })
        .collect();
    Built::Problem(Problem { n, base, keys, target })
}

struct Search<'a> {
    p: &'a Problem,
    budget: &'a OracleBudget,
    started: Instant,
    nodes: u64,
}

enum Stop {
    Found,
    Refused(Refusal),
}

impl Search<'_> {
    fn relation_acyclic(&self, ww: &Rel, rw: &Rel) -> bool {
        let b = self.p.base.union(ww);
        match self.p.target {
            Target::Ser => b.union(rw).is_acyclic(),
            Target::Si => b.union(&b.compose(rw)).is_acyclic(),
        }
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.nodes += 1;
        if self.nodes > self.budget.max_permutations {
            return Err(Stop::Refused(Refusal::NodeBudget { limit: self.budget.max_permutations }));
        }
        if self.nodes % 4096 == 0 && self.started.elapsed() > self.budget.timeout {
            return Err(Stop::Refused(Refusal::Timeout { ms: self.budget.timeout.as_millis() }));
        }
        Ok(())
    }

    /// Orders key `k` starting from position `prefix.len()`, given the WW and
    /// RW edges already fixed by earlier keys.
    fn key(&mut self, k: usize, prefix: &mut Vec<usize>, ww: Rel, rw: Rel) -> Result<(), Stop> {
        self.tick()?;
        if k == self.p.keys.len() {
            return if self.relation_acyclic(&ww, &rw) { Err(Stop::Found) } else { Ok(()) };
        }
        let kp = &self.p.keys[k];

        // Edges already forced by the prefix: its internal order, prefix
        // before every unplaced writer, and the anti-dependencies these imply.
        let mut cur_ww = ww;
        for (i, &a) in prefix.iter().enumerate() {
            for &b in &prefix[i + 1..] {
                cur_ww.add(a, b);
            }
            for &b in kp.writers.iter().filter(|w| !prefix.contains(w)) {
                cur_ww.add(a, b);
            }
        }
        let mut cur_rw = rw;
        for &(w, r) in &kp.reads_from {
            for &s in &kp.writers {
                if s != r && cur_ww.has(w, s) {
                    cur_rw.add(r, s);
                }
            }
        }
        if !self.relation_acyclic(&cur_ww, &cur_rw) {
            return Ok(());
        }

        if prefix.len() == kp.writers.len() {
            let mut next = Vec::new();
            return self.key(k + 1, &mut next, cur_ww, cur_rw);
        }
        for i in 0..kp.writers.len() {
            let w = kp.writers[i];
            if prefix.contains(&w) {
                continue;
            }
            prefix.push(w);
            let r = self.key(k, prefix, ww, rw);
            prefix.pop();
            r?;
        }
        Ok(())
    }
}

fn solve(h: &History, with_rt: bool, target: Target, budget: &OracleBudget) -> OracleOutcome {
    let p = match build(h, with_rt, target, budget) {
        Built::Problem(p) => p,
        Built::Decided(ok) => return OracleOutcome::from_bool(ok),
        Built::Refused(r) => return OracleOutcome::Refused(r),
    };
    let mut s = Search { p: &p, budget, started: Instant::now(), nodes: 0 };
    let empty = Rel::new(p.n);
    match s.key(0, &mut Vec::new(), empty, empty) {
        Ok(()) => OracleOutcome::Fail,
        Err(Stop::Found) => OracleOutcome::Pass,
        Err(Stop::Refused(r)) => OracleOutcome::Refused(r),
    }
}

/// Serializability (strict serializability when `with_rt`): some choice of
/// per-key write orders yields an acyclic dependency graph.
pub fn oracle_ser(h: &History, with_rt: bool, budget: &OracleBudget) -> OracleOutcome {
    solve(h, with_rt, Target::Ser, budget)
}

/// Snapshot isolation: some choice of per-key write orders makes
/// `(SO ∪ WR ∪ WW) ; RW?` acyclic.
pub fn oracle_si(h: &History, budget: &OracleBudget) -> OracleOutcome {
    solve(h, false, Target::Si, budget)
}

pub fn oracle(h: &History, level: Level, budget: &OracleBudget) -> OracleOutcome {
    match level {
        Level::Sser => oracle_ser(h, true, budget),
        Level::Ser => oracle_ser(h, false, budget),
        Level::Si => oracle_si(h, budget),
        Level::Lin => OracleOutcome::Refused(Refusal::UnsupportedLevel { level }),
    }
}

/// Linearizability of one register: some permutation that starts with the
/// insert, chains expected values, and never places an op before one that
/// finished before it started.
pub fn oracle_lin(hx: &LwtHistory, budget: &OracleBudget) -> OracleOutcome {
    let ops = &hx.ops;
    if ops.len() > budget.max_txns || ops.len() > 32 {
        return OracleOutcome::Refused(Refusal::TooManyTxns { count: ops.len(), max: budget.max_txns });
    }
    if ops.is_empty() {
        return OracleOutcome::Pass;
    }

    struct Lin<'a> {
        ops: &'a [crate::lwt::LwtOp],
        nodes: u64,
        limit: u64,
    }

    impl Lin<'_> {
        fn go(&mut self, placed: u32, current: Option<Value>) -> Result<bool, Refusal> {
            self.nodes += 1;
            if self.nodes > self.limit {
                return Err(Refusal::NodeBudget { limit: self.limit });
            }
            if placed.count_ones() as usize == self.ops.len() {
                return Ok(true);
            }
            for (i, o) in self.ops.iter().enumerate() {
                if placed & (1 << i) != 0 {
                    continue;
                }
                let fits = match (o.kind, current) {
                    (LwtKind::Insert { .. }, None) => true,
                    (LwtKind::ReadWrite { expected, .. }, Some(c)) => expected == c,
                    _ => false,
                };
                if !fits {
                    continue;
                }
                let blocked = self
                    .ops
                    .iter()
                    .enumerate()
                    .any(|(j, p)| j != i && placed & (1 << j) == 0 && p.finish < o.start);
                if blocked {
                    continue;
                }
                if self.go(placed | (1 << i), Some(o.written()))? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }

    let mut lin = Lin { ops, nodes: 0, limit: budget.max_permutations };
    match lin.go(0, None) {
        Ok(ok) => OracleOutcome::from_bool(ok),
        Err(r) => OracleOutcome::Refused(r),
    }
}
