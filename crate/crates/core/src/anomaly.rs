//! Preflight screen for anomalies that make a history unfit for dependency
//! graph construction: reads with no legitimate writer and the four
//! program-order anomalies.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::history::{History, Key, OpKind, Transaction, TxnId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AnomalyKind {
    ThinAirRead,
    AbortedRead,
    FutureRead,
    NotMyLastWrite,
    NotMyOwnWrite,
    IntermediateRead,
    NonRepeatableRead,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Enough to re-verify the anomaly against the raw history: the key and
/// value of the offending read, and the op indices involved (the read first,
/// then the related op in the same order as `txns`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub key: Key,
    pub value: Value,
    pub ops: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnomalyInstance {
    pub kind: AnomalyKind,
    pub txns: Vec<TxnId>,
    #[serde(flatten)]
    pub evidence: Evidence,
}

impl fmt::Display for AnomalyInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in ", self.kind)?;
        for (i, t) in self.txns.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, " reading {}={} (ops {:?})", self.evidence.key, self.evidence.value, self.evidence.ops)
    }
}

#[derive(Clone, Copy)]
struct WriteSite {
    txn: usize,
    op: usize,
    is_final: bool,
}

/// Returns every preflight anomaly in history order (reader transaction, then
/// op index). Only committed transactions are screened as readers.
pub fn screen(h: &History) -> Vec<AnomalyInstance> {
    let txns = h.txns();

    let mut sites: HashMap<(&Key, Value), WriteSite> = HashMap::new();
    for (ti, t) in txns.iter().enumerate() {
        for (oi, op) in t.ops.iter().enumerate().filter(|(_, op)| op.kind == OpKind::Write) {
            let is_final = !t.ops[oi + 1..].iter().any(|p| p.kind == OpKind::Write && p.key == op.key);
            sites.entry((&op.key, op.value)).or_insert(WriteSite { txn: ti, op: oi, is_final });
        }
    }

    let mut out = Vec::new();
    for (ti, t) in txns.iter().enumerate().skip(1).filter(|(_, t)| t.is_committed()) {
        for (oi, _) in t.ops.iter().enumerate().filter(|(_, op)| op.kind == OpKind::Read) {
            if let Some(found) = classify_read(ti, t, oi, &sites, h) {
                out.push(found);
            }
        }
    }
    out
}

fn classify_read(
    ti: usize,
    t: &Transaction,
    oi: usize,
    sites: &HashMap<(&Key, Value), WriteSite>,
    h: &History,
) -> Option<AnomalyInstance> {
    let op = &t.ops[oi];
    let instance = |kind, txns: Vec<TxnId>, ops: Vec<usize>| AnomalyInstance {
        kind,
        txns,
        evidence: Evidence { key: op.key.clone(), value: op.value, ops },
    };
    let same_key = |p: &&crate::history::Operation| p.key == op.key;

    // Own-write explanations win over any external source.
    if let Some(later) = t.ops[oi + 1..]
        .iter()
        .position(|p| p.kind == OpKind::Write && p.key == op.key && p.value == op.value)
    {
        return Some(instance(AnomalyKind::FutureRead, vec![t.id], vec![oi, oi + 1 + later]));
    }

    let earlier: Vec<(usize, &crate::history::Operation)> =
        t.ops[..oi].iter().enumerate().filter(|(_, p)| same_key(p)).collect();

    if let Some(&(_, prev)) = earlier.last() {
        if prev.value == op.value {
            return None;
        }
        let own_writes: Vec<(usize, Value)> = earlier
            .iter()
            .filter(|(_, p)| p.kind == OpKind::Write)
            .map(|&(i, p)| (i, p.value))
            .collect();
        return Some(match own_writes.last() {
            Some(&(last_idx, _)) => match own_writes.iter().find(|(_, v)| *v == op.value) {
                Some(&(idx, _)) => instance(AnomalyKind::NotMyLastWrite, vec![t.id], vec![oi, idx]),
                None => instance(AnomalyKind::NotMyOwnWrite, vec![t.id], vec![oi, last_idx]),
            },
            None => {
                let first = earlier[0].0;
                instance(AnomalyKind::NonRepeatableRead, vec![t.id], vec![first, oi])
            }
        });
    }

    // External read: look for its writer.
    match sites.get(&(&op.key, op.value)) {
        None => Some(instance(AnomalyKind::ThinAirRead, vec![t.id], vec![oi])),
        Some(site) if site.txn == ti => None,
        Some(site) => {
            let writer = &h.txns()[site.txn];
            if !writer.is_committed() {
                Some(instance(AnomalyKind::AbortedRead, vec![t.id, writer.id], vec![oi, site.op]))
            } else if !site.is_final {
                Some(instance(AnomalyKind::IntermediateRead, vec![t.id, writer.id], vec![oi, site.op]))
            } else {
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Operation, Transaction};

    fn r(k: &str, v: Value) -> Operation {
        Operation::read(k, v)
    }

    fn w(k: &str, v: Value) -> Operation {
        Operation::write(k, v)
    }

    fn kinds(h: &History) -> Vec<AnomalyKind> {
        screen(h).into_iter().map(|a| a.kind).collect()
    }

    #[test]
    fn thin_air() {
        let h = History::new(vec![Transaction::committed(1, "s", vec![r("x", 99)])]).unwrap();
        let found = screen(&h);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind, AnomalyKind::ThinAirRead);
        assert_eq!(found[0].evidence.ops, vec![0]);
    }

    #[test]
    fn aborted_source() {
        let h = History::new(vec![
            Transaction::aborted(1, "a", vec![r("x", 0), w("x", 1)]),
            Transaction::committed(2, "b", vec![r("x", 1)]),
        ])
        .unwrap();
        let found = screen(&h);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind, AnomalyKind::AbortedRead);
        assert_eq!(found[0].txns, vec![TxnId(2), TxnId(1)]);
        assert_eq!(found[0].evidence.ops, vec![0, 1]);
    }

    #[test]
    fn future_read_beats_thin_air() {
        let h = History::new(vec![Transaction::committed(1, "s", vec![r("x", 1), w("x", 1)])]).unwrap();
        assert_eq!(kinds(&h), vec![AnomalyKind::FutureRead]);
    }

    #[test]
    fn future_read_beats_external_writer() {
        let h = History::new(vec![
            Transaction::committed(1, "a", vec![r("x", 0), w("x", 5)]),
            Transaction::committed(2, "b", vec![r("x", 5), w("x", 5)]),
        ])
        .unwrap();
        assert_eq!(kinds(&h), vec![AnomalyKind::FutureRead]);
    }

    #[test]
    fn program_order_anomalies() {
        let last = History::new(vec![Transaction::committed(1, "s", vec![r("x", 0), w("x", 1), w("x", 2), r("x", 1)])])
            .unwrap();
        assert_eq!(kinds(&last), vec![AnomalyKind::NotMyLastWrite]);

        let own = History::new(vec![Transaction::committed(1, "s", vec![r("x", 0), w("x", 2), r("x", 0)])]).unwrap();
        assert_eq!(kinds(&own), vec![AnomalyKind::NotMyOwnWrite]);

        let nrr = History::new(vec![
            Transaction::committed(1, "a", vec![r("x", 0), w("x", 1)]),
            Transaction::committed(2, "b", vec![r("x", 0), r("x", 1)]),
        ])
        .unwrap();
        let found = screen(&nrr);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind, AnomalyKind::NonRepeatableRead);
        assert_eq!(found[0].evidence.ops, vec![0, 1]);
    }

    #[test]
    fn intermediate() {
        let h = History::new(vec![
            Transaction::committed(1, "a", vec![r("x", 0), w("x", 1), w("x", 2)]),
            Transaction::committed(2, "b", vec![r("x", 1)]),
        ])
        .unwrap();
        assert_eq!(kinds(&h), vec![AnomalyKind::IntermediateRead]);
    }

    #[test]
    fn aborted_readers_are_not_screened() {
        let h = History::new(vec![Transaction::aborted(1, "s", vec![r("x", 42)])]).unwrap();
        assert!(screen(&h).is_empty());
    }

    #[test]
    fn clean_reads() {
        let h = History::new(vec![
            Transaction::committed(1, "a", vec![r("x", 0), w("x", 1)]),
            Transaction::committed(2, "b", vec![r("x", 1), r("y", 0), w("x", 2), r("x", 2)]),
        ])
        .unwrap();
        assert!(screen(&h).is_empty());
    }
}
