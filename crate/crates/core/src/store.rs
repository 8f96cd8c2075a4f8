//! Deterministic multi-version store that runs templates under snapshot
//! isolation or serializability, with optional fault injection.
//!
//! A single-threaded scheduler interleaves sessions one step at a time (begin,
//! one op, or commit), choosing the next session with a seeded RNG. Every step
//! advances a logical clock by one tick, so timestamps are unique and each
//! session's transactions occupy disjoint, ordered intervals.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::history::{History, Key, OpKind, Operation, Transaction, TxnId, TxnStatus, Value, INIT_VALUE};
use crate::workload::{bind_values, TxnTemplate, ValueCounter, WorkloadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Isolation {
    Serializable,
    SnapshotIsolation,
}

impl FromStr for Isolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ser" | "serializable" => Ok(Isolation::Serializable),
            "si" | "snapshot" | "snapshot-isolation" => Ok(Isolation::SnapshotIsolation),
            other => Err(format!("unknown isolation `{other}` (expected ser or si)")),
        }
    }
}

impl fmt::Display for Isolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Isolation::Serializable => "ser",
            Isolation::SnapshotIsolation => "si",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Write-write conflicts are not checked at commit.
    LostUpdate,
    /// Sessions split into two groups by parity; each group sees the other's
    /// commits only after `lag` ticks.
    LongFork,
    /// Serializable mode stops validating keys that were only read.
    WriteSkewLeak,
    /// Reads see uncommitted writes, and writers are randomly aborted.
    AbortedReadLeak,
    /// Snapshots lag `lag` ticks behind begin, bounded below by the session's
    /// own last commit; read-only transactions skip validation.
    StaleRead,
}

impl Fault {
    pub const ALL: [Fault; 5] =
        [Fault::LostUpdate, Fault::LongFork, Fault::WriteSkewLeak, Fault::AbortedReadLeak, Fault::StaleRead];

    pub fn as_str(self) -> &'static str {
        match self {
            Fault::LostUpdate => "lost-update",
            Fault::LongFork => "long-fork",
            Fault::WriteSkewLeak => "write-skew-leak",
            Fault::AbortedReadLeak => "aborted-read-leak",
            Fault::StaleRead => "stale-read",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Fault::ALL
            .into_iter()
            .find(|f| f.as_str() == norm || f.as_str().replace('-', "") == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Fault::ALL.iter().map(|f| f.as_str()).collect();
                format!("unknown fault `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreConfig {
    pub isolation: Isolation,
    pub fault: Option<Fault>,
    pub seed: u64,
    /// Retries after the first attempt before a transaction is given up.
    pub max_retries: u32,
    /// Visibility delay used by [`Fault::LongFork`] and [`Fault::StaleRead`].
    pub lag: u64,
    /// Forced abort probability for writers under [`Fault::AbortedReadLeak`].
    pub abort_probability: f64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            isolation: Isolation::SnapshotIsolation,
            fault: None,
            seed: 0,
            max_retries: 5,
            lag: 64,
            abort_probability: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Version {
    ts: u64,
    value: Value,
    session: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Observed {
    Committed(u64),
    Dirty,
}

struct Active {
    id: TxnId,
    template: TxnTemplate,
    values: Vec<Option<Value>>,
    start: u64,
    snapshot: u64,
    pc: usize,
    ops: Vec<Operation>,
    reads: IndexMap<Key, Observed>,
    writes: IndexMap<Key, Value>,
}

struct Session {
    id: u32,
    name: String,
    queue: VecDeque<TxnTemplate>,
    counter: ValueCounter,
    active: Option<Active>,
    last_commit: u64,
    retries: u32,
}

impl Session {
    fn has_work(&self) -> bool {
        self.active.is_some() || !self.queue.is_empty()
    }
}

struct Engine<'c> {
    cfg: &'c StoreConfig,
    rng: ChaCha8Rng,
    clock: u64,
    next_id: u64,
    versions: HashMap<Key, Vec<Version>>,
    dirty: HashMap<Key, Vec<(TxnId, Value)>>,
    done: Vec<Transaction>,
}

impl Engine<'_> {
    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn chain(&mut self, key: &Key) -> &mut Vec<Version> {
        self.versions
            .entry(key.clone())
            .or_insert_with(|| vec![Version { ts: 0, value: INIT_VALUE, session: 0 }])
    }

    fn visible(&self, v: &Version, session: u32, a: &Active) -> bool {
        match self.cfg.fault {
            Some(Fault::LongFork) if v.session != 0 && v.session % 2 != session % 2 => {
                v.ts.saturating_add(self.cfg.lag) < a.start
            }
            _ => v.ts < a.snapshot,
        }
    }

    fn begin(&mut self, s: &mut Session) -> Result<(), WorkloadError> {
        let now = self.tick();
        let template = s.queue.pop_front().expect("begin without work");
        let values = bind_values(&template, &mut s.counter)?;
        let snapshot = match self.cfg.fault {
            Some(Fault::StaleRead) => now.saturating_sub(self.cfg.lag).max(s.last_commit + 1),
            _ => now,
        };
        let id = TxnId(self.next_id);
        self.next_id += 1;
        s.active = Some(Active {
            id,
            template,
            values,
            start: now,
            snapshot,
            pc: 0,
            ops: Vec::new(),
            reads: IndexMap::new(),
            writes: IndexMap::new(),
        });
        Ok(())
    }

    fn read(&mut self, session: u32, a: &Active, key: &Key) -> (Value, Observed) {
        if self.cfg.fault == Some(Fault::AbortedReadLeak) {
            if let Some(&(_, v)) = self.dirty.get(key).and_then(|d| d.iter().rev().find(|(t, _)| *t != a.id)) {
                return (v, Observed::Dirty);
            }
        }
        self.chain(key);
        let chain = &self.versions[key];
        let v = chain.iter().rev().find(|v| self.visible(v, session, a)).expect("initial version is always visible");
        (v.value, Observed::Committed(v.ts))
    }

    fn step_op(&mut self, s: &mut Session) {
        let mut a = s.active.take().expect("op without transaction");
        self.tick();
        let op = a.template.ops[a.pc].clone();
        match op.kind {
            OpKind::Read => {
                let value = if let Some(&v) = a.writes.get(&op.key) {
                    v
                } else if let Some(prev) = a.ops.iter().rev().find(|o| o.key == op.key) {
                    prev.value
                } else {
                    let (v, observed) = self.read(s.id, &a, &op.key);
                    a.reads.insert(op.key.clone(), observed);
                    v
                };
                a.ops.push(Operation::read(op.key, value));
            }
            OpKind::Write => {
                let value = a.values[a.pc].expect("write without bound value");
                a.writes.insert(op.key.clone(), value);
                if self.cfg.fault == Some(Fault::AbortedReadLeak) {
                    self.dirty.entry(op.key.clone()).or_default().push((a.id, value));
                }
                a.ops.push(Operation::write(op.key, value));
            }
        }
        a.pc += 1;
        s.active = Some(a);
    }

    fn conflicts(&mut self, s: &Session, a: &Active) -> bool {
        let fault = self.cfg.fault;
        if fault == Some(Fault::StaleRead) && a.writes.is_empty() {
            return false;
        }
        if fault != Some(Fault::LostUpdate) {
            for key in a.writes.keys() {
                let latest = *self.chain(key).last().expect("non-empty chain");
                let ok = match a.reads.get(key) {
                    Some(&observed) => observed == Observed::Committed(latest.ts),
                    None => self.visible(&latest, s.id, a),
                };
                if !ok {
                    return true;
                }
            }
        }
        if self.cfg.isolation == Isolation::Serializable && fault != Some(Fault::WriteSkewLeak) {
            for (key, &observed) in &a.reads {
                if a.writes.contains_key(key) {
                    continue;
                }
                let latest = self.chain(key).last().expect("non-empty chain").ts;
                if observed != Observed::Committed(latest) {
                    return true;
                }
            }
        }
        false
    }

    fn commit(&mut self, s: &mut Session) {
        let a = s.active.take().expect("commit without transaction");
        let now = self.tick();
        let forced = self.cfg.fault == Some(Fault::AbortedReadLeak)
            && !a.writes.is_empty()
            && self.rng.gen_bool(self.cfg.abort_probability);
        let aborted = forced || self.conflicts(s, &a);

        if self.cfg.fault == Some(Fault::AbortedReadLeak) {
            for key in a.writes.keys() {
                if let Some(d) = self.dirty.get_mut(key) {
                    d.retain(|(t, _)| *t != a.id);
                }
            }
        }

        let mut txn = Transaction {
            id: a.id,
            session: s.name.clone(),
            status: TxnStatus::Committed,
            start: Some(a.start),
            commit: Some(now),
            ops: a.ops,
        };
        if aborted {
            txn.status = TxnStatus::Aborted;
            txn.commit = None;
            if s.retries < self.cfg.max_retries {
                s.retries += 1;
                s.queue.push_front(a.template);
            } else {
                s.retries = 0;
            }
        } else {
            for (key, &value) in &a.writes {
                self.chain(key).push(Version { ts: now, value, session: s.id });
            }
            s.last_commit = now;
            s.retries = 0;
        }
        self.done.push(txn);
    }
}

/// Runs `templates` to completion and returns the recorded history,
/// transactions ordered by id (begin order).
pub fn execute(templates: impl IntoIterator<Item = TxnTemplate>, cfg: &StoreConfig) -> Result<History, WorkloadError> {
    let mut by_session: std::collections::BTreeMap<u32, VecDeque<TxnTemplate>> = Default::default();
    for t in templates {
        by_session.entry(t.session).or_default().push_back(t);
    }
    let mut sessions: Vec<Session> = by_session
        .into_iter()
        .map(|(id, queue)| Session {
            id,
            name: format!("s{id}"),
            queue,
            counter: ValueCounter::new(id),
            active: None,
            last_commit: 0,
            retries: 0,
        })
        .collect();

    let mut e = Engine {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        clock: 0,
        next_id: 1,
        versions: HashMap::new(),
        dirty: HashMap::new(),
        done: Vec::new(),
    };

    let mut live: Vec<usize> = (0..sessions.len()).filter(|&i| sessions[i].has_work()).collect();
    while !live.is_empty() {
        let pick = e.rng.gen_range(0..live.len());
        let s = &mut sessions[live[pick]];
        match &s.active {
            None => e.begin(s)?,
            Some(a) if a.pc < a.template.ops.len() => e.step_op(s),
            Some(_) => e.commit(s),
        }
        if !s.has_work() {
            live.remove(pick);
        }
    }

    e.done.sort_by_key(|t| t.id);
    Ok(History::new(e.done).expect("the store emits well-formed histories"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbortStats {
    pub committed: usize,
    pub aborted: usize,
    pub rate: f64,
}

pub fn abort_stats(h: &History) -> AbortStats {
    let committed = h.committed().count() - 1;
    let aborted = h.txns().len() - 1 - committed;
    let total = committed + aborted;
    let rate = if total == 0 { 0.0 } else { aborted as f64 / total as f64 };
    AbortStats { committed, aborted, rate }
}
