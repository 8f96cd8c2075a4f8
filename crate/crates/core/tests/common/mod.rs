//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use mtc_core::history::{History, Operation, Transaction, Value};
use mtc_core::lwt::{LwtHistory, LwtOp};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KEYS: [&str; 3] = ["x", "y", "z"];

/// A small mini-transaction history: 1 to 8 committed transactions over 1 to
/// 3 keys and 1 to 4 sessions, every one timestamped, sometimes with one
/// aborted transaction.
///
/// Transactions are laid out in commit order and most reads return the
/// latest version in a recent snapshot, usually one that already includes
/// the last writer of each key the transaction writes. Depending on the
/// history, none, a few or many of the other reads pick any version of the
/// key. The corpus thus mixes serializable, snapshot-isolated and broken
/// histories.
pub fn random_mt_history(seed: u64) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: u64 = rng.gen_range(1..=8);
    let keys = &KEYS[..*[1, 2, 2, 3].choose(&mut rng).unwrap()];
    let sessions = rng.gen_range(1..=4);
    // Chance that a read ignores the snapshot and returns any version.
    let noise = *[0.0, 0.1, 0.3].choose(&mut rng).unwrap();
    let two_reads = *[0.5, 0.9].choose(&mut rng).unwrap();
    let skew = *[0.0, 0.7].choose(&mut rng).unwrap();
    let stale = *[0.3, 0.8].choose(&mut rng).unwrap();
    let first_committer_wins = *[0.7, 1.0].choose(&mut rng).unwrap();

    // Shape of each transaction: read keys, and which of them are written.
    let plans: Vec<Vec<(&str, bool)>> = (0..n)
        .map(|_| {
            let mut ks = keys.to_vec();
            ks.shuffle(&mut rng);
            let reads = if keys.len() > 1 && rng.gen_bool(two_reads) { 2 } else { 1 };
            let writes = if reads == 2 && rng.gen_bool(skew) { 1 } else { rng.gen_range(0..=reads) };
            ks[..reads].iter().enumerate().map(|(j, k)| (*k, j < writes)).collect()
        })
        .collect();

    let value = |i: u64, j: usize| (i * 10 + j as u64) as Value;
    let mut written: Vec<(u64, &str, Value)> = Vec::new();
    for (i, plan) in plans.iter().enumerate() {
        for (j, (k, w)) in plan.iter().enumerate() {
            if *w {
                written.push((i as u64 + 1, *k, value(i as u64 + 1, j)));
            }
        }
    }
    let aborted = rng.gen_bool(0.15).then(|| (rng.gen_range(0..keys.len()), 9_999 as Value));

    let mut txns = Vec::new();
    let mut last_in_session = vec![0u64; sessions + 1];
    for (idx, plan) in plans.iter().enumerate() {
        let i = idx as u64 + 1;
        let session = rng.gen_range(1..=sessions);
        let mut snapshot = if !rng.gen_bool(stale) { i - 1 } else { rng.gen_range(i.saturating_sub(5)..i) };
        if rng.gen_bool(first_committer_wins) {
            // First committer wins, and sessions see their own commits: the
            // snapshot covers the session's previous transaction and the
            // last writer of every key this transaction writes.
            snapshot = snapshot.max(last_in_session[session]);
            for (k, _) in plan.iter().filter(|(_, w)| *w) {
                let last = written.iter().filter(|(t, key, _)| key == k && *t < i).map(|(t, _, _)| *t).max();
                snapshot = snapshot.max(last.unwrap_or(0));
            }
        }
        let mut ops = Vec::new();
        for (k, _) in plan {
            let latest = written
                .iter()
                .filter(|(t, key, _)| key == k && *t <= snapshot)
                .map(|(_, _, v)| *v)
                .next_back()
                .unwrap_or(0);
            let v = if !rng.gen_bool(noise) {
                latest
            } else {
                let mut pool: Vec<Value> =
                    written.iter().filter(|(t, key, _)| key == k && *t != i).map(|(_, _, v)| *v).collect();
                pool.push(0);
                if let Some((ak, av)) = aborted {
                    if keys[ak] == *k && rng.gen_bool(0.2) {
                        pool = vec![av];
                    }
                }
                *pool.choose(&mut rng).unwrap()
            };
            ops.push(Operation::read(*k, v));
        }
        for (j, (k, w)) in plan.iter().enumerate() {
            if *w {
                ops.push(Operation::write(*k, value(i, j)));
            }
        }
        let commit = 10 * i;
        let start = if rng.gen_bool(0.2) { rng.gen_range(1..commit) } else { 10 * snapshot + rng.gen_range(1..5) };
        last_in_session[session] = i;
        txns.push(Transaction::committed(i, &format!("s{session}"), ops).with_interval(start, commit));
    }
    if let Some((k, v)) = aborted {
        let key = keys[k];
        let mut t = Transaction::aborted(n + 1, "s9", vec![Operation::read(key, 0), Operation::write(key, v)]);
        t.start = Some(1);
        txns.push(t);
    }
    History::new(txns).expect("generated histories are well formed")
}

/// One register with an insert and up to 7 compare-and-set operations, all
/// new values distinct. Each is built from a valid linearization; half are
/// then perturbed.
pub fn random_lwt_history(seed: u64) -> LwtHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8usize);
    let mut ops = Vec::with_capacity(n);
    let mut value: Value = 0;
    let mut point = 0u64;
    for i in 0..n {
        point += rng.gen_range(1..4);
        let start = point - rng.gen_range(0..point.min(6));
        let finish = point + rng.gen_range(1..6);
        if i == 0 {
            ops.push(LwtOp::insert("x", 0, start, finish));
        } else {
            let new = 100 + i as Value;
            ops.push(LwtOp::rw("x", value, new, start, finish));
            value = new;
        }
    }
    if rng.gen_bool(0.5) {
        match rng.gen_range(0..3) {
            0 if n > 1 => {
                // Re-point one expected value at another written value.
                let i = rng.gen_range(1..n);
                let new = ops[i].written();
                let exp = if rng.gen_bool(0.3) { 0 } else { 100 + rng.gen_range(0..n) as Value };
                if exp != new {
                    ops[i] = LwtOp::rw("x", exp, new, ops[i].start, ops[i].finish);
                }
            }
            1 if n > 1 => {
                // Swap two intervals.
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                let (sa, fa) = (ops[a].start, ops[a].finish);
                ops[a].start = ops[b].start;
                ops[a].finish = ops[b].finish;
                ops[b].start = sa;
                ops[b].finish = fa;
            }
            _ => {
                // Move one interval somewhere random.
                let i = rng.gen_range(0..n);
                let start = rng.gen_range(0..point + 5);
                ops[i].start = start;
                ops[i].finish = start + rng.gen_range(1..4);
            }
        }
    }
    ops.shuffle(&mut rng);
    LwtHistory { key: "x".into(), ops }
}
