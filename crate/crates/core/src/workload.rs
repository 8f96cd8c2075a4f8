//! Seeded workload generation: mini-transaction and general-transaction
//! templates over `k0..k{objects-1}`, plus unique write-value binding.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{Key, OpKind, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDistribution {
    Uniform,
    Zipfian { theta: f64 },
    Hotspot { hot_fraction: f64, hot_prob: f64 },
    Exponential { lambda: f64 },
}

impl KeyDistribution {
    /// Probability weight of each key rank.
    pub fn weights(&self, objects: usize) -> Vec<f64> {
        match *self {
            KeyDistribution::Uniform => vec![1.0; objects],
            KeyDistribution::Zipfian { theta } => (0..objects).map(|k| 1.0 / ((k + 1) as f64).powf(theta)).collect(),
            KeyDistribution::Hotspot { hot_fraction, hot_prob } => {
                let hot = ((hot_fraction * objects as f64).round() as usize).clamp(1, objects);
                if hot == objects {
                    return vec![1.0; objects];
                }
                let cold = objects - hot;
                (0..objects)
                    .map(|k| if k < hot { hot_prob / hot as f64 } else { (1.0 - hot_prob) / cold as f64 })
                    .collect()
            }
            KeyDistribution::Exponential { lambda } => (0..objects).map(|k| (-lambda * k as f64).exp()).collect(),
        }
    }

    /// Normalized probabilities of each key rank.
    pub fn pmf(&self, objects: usize) -> Vec<f64> {
        let w = self.weights(objects);
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |what: &str| Err(WorkloadError::Config(format!("{what} in {self}")));
        match *self {
            KeyDistribution::Uniform => Ok(()),
            KeyDistribution::Zipfian { theta } if !(theta.is_finite() && theta >= 0.0) => bad("theta must be ≥ 0"),
            KeyDistribution::Hotspot { hot_fraction, hot_prob }
                if !(0.0..=1.0).contains(&hot_fraction) || !(0.0..=1.0).contains(&hot_prob) =>
            {
                bad("probabilities must lie in [0, 1]")
            }
            KeyDistribution::Exponential { lambda } if !(lambda.is_finite() && lambda >= 0.0) => {
                bad("lambda must be ≥ 0")
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for KeyDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyDistribution::Uniform => f.write_str("uniform"),
            KeyDistribution::Zipfian { theta } => write!(f, "zipfian:{theta}"),
            KeyDistribution::Hotspot { hot_fraction, hot_prob } => write!(f, "hotspot:{hot_fraction}:{hot_prob}"),
            KeyDistribution::Exponential { lambda } => write!(f, "exponential:{lambda}"),
        }
    }
}

impl FromStr for KeyDistribution {
    type Err = String;

    /// `uniform`, `zipfian[:theta]`, `hotspot[:fraction:prob]` or
    /// `exponential[:lambda]`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let params: Vec<f64> = parts
            .map(|p| p.parse::<f64>().map_err(|e| format!("bad parameter `{p}` in `{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        let arity = |n: usize| {
            if params.len() == n || params.is_empty() {
                Ok(())
            } else {
                Err(format!("`{name}` takes {n} parameter(s), got {}", params.len()))
            }
        };
        let d = match name.as_str() {
            "uniform" => {
                arity(0)?;
                KeyDistribution::Uniform
            }
            "zipf" | "zipfian" => {
                arity(1)?;
                KeyDistribution::Zipfian { theta: params.first().copied().unwrap_or(0.99) }
            }
            "hotspot" => {
                arity(2)?;
                let (hot_fraction, hot_prob) = if params.is_empty() { (0.2, 0.8) } else { (params[0], params[1]) };
                KeyDistribution::Hotspot { hot_fraction, hot_prob }
            }
            "exp" | "exponential" => {
                arity(1)?;
                KeyDistribution::Exponential { lambda: params.first().copied().unwrap_or(0.05) }
            }
            other => return Err(format!("unknown distribution `{other}`")),
        };
        d.validate().map_err(|e| e.to_string())?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadMode {
    Mt,
    Gt,
}

impl FromStr for WorkloadMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mt" => Ok(WorkloadMode::Mt),
            "gt" => Ok(WorkloadMode::Gt),
            other => Err(format!("unknown mode `{other}` (expected mt or gt)")),
        }
    }
}

/// The five mini-transaction shapes. Writes always target a key read earlier
/// in the same transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MtShape {
    R,
    RR,
    RW,
    RRW,
    RRWW,
}

impl MtShape {
    pub const ALL: [MtShape; 5] = [MtShape::R, MtShape::RR, MtShape::RW, MtShape::RRW, MtShape::RRWW];

    pub fn distinct_keys(self) -> usize {
        match self {
            MtShape::R | MtShape::RW => 1,
            MtShape::RR | MtShape::RRW | MtShape::RRWW => 2,
        }
    }

    fn ops(self, a: &Key, b: Option<&Key>) -> Vec<TemplateOp> {
        let r = |k: &Key| TemplateOp { kind: OpKind::Read, key: k.clone() };
        let w = |k: &Key| TemplateOp { kind: OpKind::Write, key: k.clone() };
        match (self, b) {
            (MtShape::R, _) => vec![r(a)],
            (MtShape::RW, _) => vec![r(a), w(a)],
            (MtShape::RR, Some(b)) => vec![r(a), r(b)],
            (MtShape::RRW, Some(b)) => vec![r(a), r(b), w(a)],
            (MtShape::RRWW, Some(b)) => vec![r(a), r(b), w(a), w(b)],
            _ => unreachable!("two-key shape drawn with one key"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateOp {
    #[serde(rename = "t")]
    pub kind: OpKind,
    #[serde(rename = "k")]
    pub key: Key,
}

/// A transaction to run: keys only. Reads are resolved and write values bound
/// at execution time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnTemplate {
    pub session: u32,
    pub ops: Vec<TemplateOp>,
}

impl TxnTemplate {
    pub fn write_jsonl<W: Write>(templates: &[TxnTemplate], mut w: W) -> std::io::Result<()> {
        for t in templates {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<TxnTemplate>, WorkloadError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| WorkloadError::Config(format!("line {}: {e}", i + 1)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub sessions: u32,
    /// Total transactions, dealt round-robin across sessions.
    pub txns: usize,
    pub objects: usize,
    pub distribution: KeyDistribution,
    pub mode: WorkloadMode,
    pub gt_ops_per_txn: usize,
    /// Relative weights of [`MtShape::ALL`].
    pub shape_weights: [f64; 5],
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            sessions: 8,
            txns: 1000,
            objects: 100,
            distribution: KeyDistribution::Uniform,
            mode: WorkloadMode::Mt,
            gt_ops_per_txn: 20,
            shape_weights: [1.0; 5],
            seed: 0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.sessions == 0 || self.objects == 0 || self.txns == 0 {
            return Err(WorkloadError::Config("sessions, txns and objects must all be at least 1".into()));
        }
        if self.sessions > i32::MAX as u32 {
            return Err(WorkloadError::Config(format!("at most {} sessions", i32::MAX)));
        }
        if self.mode == WorkloadMode::Gt && self.gt_ops_per_txn == 0 {
            return Err(WorkloadError::Config("GT transactions need at least one op".into()));
        }
        if self.shape_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(WorkloadError::Config("shape weights must be finite and non-negative".into()));
        }
        self.distribution.validate()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Config(String),
    #[error("session {session} ran out of unique values")]
    ValueOverflow { session: u32 },
}

/// Deterministic template stream for one configuration.
pub struct Generator {
    cfg: WorkloadConfig,
    rng: ChaCha8Rng,
    keys: Vec<Key>,
    key_dist: WeightedIndex<f64>,
    shapes: Vec<MtShape>,
    shape_dist: WeightedIndex<f64>,
    emitted: usize,
}

pub fn generate(cfg: &WorkloadConfig) -> Result<Generator, WorkloadError> {
    cfg.validate()?;
    let keys: Vec<Key> = (0..cfg.objects).map(|i| Key::new(&format!("k{i}"))).collect();
    let key_dist = WeightedIndex::new(cfg.distribution.weights(cfg.objects))
        .map_err(|e| WorkloadError::Config(format!("key distribution {}: {e}", cfg.distribution)))?;
    let (shapes, weights): (Vec<MtShape>, Vec<f64>) = MtShape::ALL
        .iter()
        .zip(cfg.shape_weights)
        .filter(|(s, _)| s.distinct_keys() <= cfg.objects)
        .map(|(s, w)| (*s, w))
        .unzip();
    let shape_dist = WeightedIndex::new(&weights)
        .map_err(|e| WorkloadError::Config(format!("shape weights: {e}")))?;
    Ok(Generator {
        cfg: cfg.clone(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        keys,
        key_dist,
        shapes,
        shape_dist,
        emitted: 0,
    })
}

impl Generator {
    fn key(&mut self) -> Key {
        self.keys[self.key_dist.sample(&mut self.rng)].clone()
    }

    fn key_other_than(&mut self, taken: &Key) -> Key {
        loop {
            let k = self.key();
            if &k != taken {
                return k;
            }
        }
    }

    fn mt(&mut self) -> Vec<TemplateOp> {
        let shape = self.shapes[self.shape_dist.sample(&mut self.rng)];
        let a = self.key();
        let b = (shape.distinct_keys() == 2).then(|| self.key_other_than(&a));
        shape.ops(&a, b.as_ref())
    }

    /// 20% read-only, 40% write-only, 40% read-modify-write pairs.
    fn gt(&mut self) -> Vec<TemplateOp> {
        let n = self.cfg.gt_ops_per_txn;
        let roll: f64 = self.rng.gen();
        let mut ops = Vec::with_capacity(n);
        if roll < 0.2 {
            for _ in 0..n {
                ops.push(TemplateOp { kind: OpKind::Read, key: self.key() });
            }
        } else if roll < 0.6 {
            for _ in 0..n {
                ops.push(TemplateOp { kind: OpKind::Write, key: self.key() });
            }
        } else {
            for _ in 0..(n / 2).max(1) {
                let k = self.key();
                ops.push(TemplateOp { kind: OpKind::Read, key: k.clone() });
                ops.push(TemplateOp { kind: OpKind::Write, key: k });
            }
        }
        ops
    }
}

impl Iterator for Generator {
    type Item = TxnTemplate;

    fn next(&mut self) -> Option<TxnTemplate> {
        if self.emitted == self.cfg.txns {
            return None;
        }
        let session = (self.emitted % self.cfg.sessions as usize) as u32 + 1;
        self.emitted += 1;
        let ops = match self.cfg.mode {
            WorkloadMode::Mt => self.mt(),
            WorkloadMode::Gt => self.gt(),
        };
        Some(TxnTemplate { session, ops })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.cfg.txns - self.emitted;
        (left, Some(left))
    }
}

/// Per-session source of globally unique write values:
/// `(session << 32) | counter`, counter starting at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueCounter {
    session: u32,
    next: u64,
}

impl ValueCounter {
    pub fn new(session: u32) -> Self {
        ValueCounter { session, next: 1 }
    }

    pub fn starting_at(session: u32, counter: u32) -> Self {
        ValueCounter { session, next: counter as u64 }
    }

    pub fn next_value(&mut self) -> Result<Value, WorkloadError> {
        if self.next > u32::MAX as u64 || self.session > i32::MAX as u32 {
            return Err(WorkloadError::ValueOverflow { session: self.session });
        }
        let v = ((self.session as i64) << 32) | self.next as i64;
        self.next += 1;
        Ok(v)
    }
}

/// Fresh values for the writes of `t`, one per op (`None` for reads).
pub fn bind_values(t: &TxnTemplate, counter: &mut ValueCounter) -> Result<Vec<Option<Value>>, WorkloadError> {
    t.ops
        .iter()
        .map(|op| match op.kind {
            OpKind::Write => counter.next_value().map(Some),
            OpKind::Read => Ok(None),
        })
        .collect()
}
