//! Strict serializability, serializability and snapshot isolation checks over
//! the dependency graph built without write-write transitive closure.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::anomaly::{screen, AnomalyInstance};
use crate::cycle::{find_cycle, Digraph};
use crate::graph::{cons_dep, detect_fork, DependencyGraph, Edge, EdgeKind, EdgeLabel, ForkInstance, GraphError};
use crate::history::{validate_mt, History, ValidationReport};
use crate::lwt::LwtViolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Sser,
    Ser,
    Si,
    Lin,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Sser => "sser",
            Level::Ser => "ser",
            Level::Si => "si",
            Level::Lin => "lin",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sser" => Ok(Level::Sser),
            "ser" => Ok(Level::Ser),
            "si" => Ok(Level::Si),
            "lin" => Ok(Level::Lin),
            other => Err(format!("unknown level `{other}` (expected sser, ser, si or lin)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Counterexample {
    Cycle { edges: Vec<Edge> },
    Fork(ForkInstance),
    Anomaly(AnomalyInstance),
    Lwt(LwtViolation),
}

impl Counterexample {
    /// Edges to draw for this counterexample.
    pub fn edges(&self) -> Vec<Edge> {
        match self {
            Counterexample::Cycle { edges } => edges.clone(),
            Counterexample::Fork(f) => vec![
                Edge { from: f.writer, to: f.readers.0, label: EdgeLabel::wr(f.key.clone()) },
                Edge { from: f.writer, to: f.readers.1, label: EdgeLabel::wr(f.key.clone()) },
            ],
            Counterexample::Anomaly(_) | Counterexample::Lwt(_) => Vec::new(),
        }
    }
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Counterexample::Cycle { edges } => {
                f.write_str("cycle ")?;
                for (i, e) in edges.iter().enumerate() {
                    if i == 0 {
                        write!(f, "{}", e.from)?;
                    }
                    write!(f, " -{}-> {}", e.label, e.to)?;
                }
                Ok(())
            }
            Counterexample::Fork(fork) => write!(f, "fork: {fork}"),
            Counterexample::Anomaly(a) => write!(f, "anomaly: {a}"),
            Counterexample::Lwt(v) => write!(f, "lwt: {v}"),
        }
    }
}

/// Outcome of checking one history at one level. A failing verdict always
/// carries a counterexample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub level: Level,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

impl Verdict {
    pub fn pass(level: Level) -> Self {
        Verdict { level, ok: true, counterexample: None }
    }

    pub fn fail(level: Level, counterexample: Counterexample) -> Self {
        Verdict { level, ok: false, counterexample: Some(counterexample) }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdicts always serialize")
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.level, if self.ok { "OK" } else { "VIOLATION" })?;
        if let Some(c) = &self.counterexample {
            write!(f, " ({c})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("not a mini-transaction history ({} shape violations, {} duplicate writes)",
        .0.mt_violations.len(), .0.unique_write_violations.len())]
    NotMiniTransactions(ValidationReport),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("level {0} does not apply to transactional histories")]
    UnsupportedLevel(Level),
}

/// Full pipeline for one history: shape validation, preflight screen, then the
/// graph check for `level`. Preflight findings fail every level.
pub fn check(h: &History, level: Level) -> Result<Verdict, CheckError> {
    let report = validate_mt(h);
    if !report.is_empty() {
        return Err(CheckError::NotMiniTransactions(report));
    }
    if let Some(anomaly) = screen(h).into_iter().next() {
        return Ok(Verdict::fail(level, Counterexample::Anomaly(anomaly)));
    }
    match level {
        Level::Sser => Ok(check_sser(h)?),
        Level::Ser => Ok(check_ser(h)?),
        Level::Si => Ok(check_si(h)?),
        Level::Lin => Err(CheckError::UnsupportedLevel(level)),
    }
}

fn cycle_edges(g: &DependencyGraph, walk: Vec<(usize, usize, EdgeLabel)>) -> Vec<Edge> {
    walk.into_iter()
        .map(|(a, b, label)| Edge { from: g.txn_of(a), to: g.txn_of(b), label })
        .collect()
}

/// Strict serializability: the graph with real-time edges is acyclic.
pub fn check_sser(h: &History) -> Result<Verdict, GraphError> {
    let g = cons_dep(h, true, false)?;
    Ok(acyclic_verdict(&g, Level::Sser))
}

/// Serializability: the graph without real-time edges is acyclic.
pub fn check_ser(h: &History) -> Result<Verdict, GraphError> {
    let g = cons_dep(h, false, false)?;
    Ok(acyclic_verdict(&g, Level::Ser))
}

fn acyclic_verdict(g: &DependencyGraph, level: Level) -> Verdict {
    match find_cycle(&g.filtered(|_| true)) {
        None => Verdict::pass(level),
        Some(walk) => Verdict::fail(level, Counterexample::Cycle { edges: cycle_edges(g, walk) }),
    }
}

/// Snapshot isolation: no fork pattern, and the induced graph
/// `(SO ∪ WR ∪ WW) ; RW?` is acyclic.
pub fn check_si(h: &History) -> Result<Verdict, GraphError> {
    if let Some(fork) = detect_fork(h).into_iter().next() {
        return Ok(Verdict::fail(Level::Si, Counterexample::Fork(fork)));
    }
    let g = cons_dep(h, false, false)?;
    Ok(match find_cycle(&SiInduced::new(&g)) {
        None => Verdict::pass(Level::Si),
        Some(walk) => {
            let edges = walk
                .into_iter()
                .flat_map(|(a, b, step)| step.edges(&g, a, b))
                .collect();
            Verdict::fail(Level::Si, Counterexample::Cycle { edges })
        }
    })
}

/// One edge of the SI-induced graph: a base edge, optionally followed by an
/// anti-dependency out of its target.
#[derive(Debug, Clone)]
pub struct Step {
    first: EdgeLabel,
    then: Option<(u32, EdgeLabel)>,
}

impl Step {
    fn edges(self, g: &DependencyGraph, from: usize, to: usize) -> Vec<Edge> {
        match self.then {
            None => vec![Edge { from: g.txn_of(from), to: g.txn_of(to), label: self.first }],
            Some((mid, rw)) => vec![
                Edge { from: g.txn_of(from), to: g.txn_of(mid as usize), label: self.first },
                Edge { from: g.txn_of(mid as usize), to: g.txn_of(to), label: rw },
            ],
        }
    }
}

/// The SI-induced relation, walked on the fly and never materialized.
pub struct SiInduced<'g> {
    g: &'g DependencyGraph,
}

impl<'g> SiInduced<'g> {
    pub fn new(g: &'g DependencyGraph) -> Self {
        SiInduced { g }
    }
}

impl Digraph for SiInduced<'_> {
    type Label = Step;

    fn vertex_count(&self) -> usize {
        self.g.vertex_count()
    }

    fn successors(&self, v: usize) -> Box<dyn Iterator<Item = (usize, Step)> + '_> {
        let g = self.g;
        Box::new(
            g.out_edges(v)
                .iter()
                .filter(|(_, l)| matches!(l.kind(), EdgeKind::So | EdgeKind::Wr | EdgeKind::Ww))
                .flat_map(move |(mid, first)| {
                    let direct = std::iter::once((*mid as usize, Step { first: first.clone(), then: None }));
                    let composed = g
                        .out_edges(*mid as usize)
                        .iter()
                        .filter(|(_, l)| l.kind() == EdgeKind::Rw)
                        .map(move |(to, rw)| {
                            (*to as usize, Step { first: first.clone(), then: Some((*mid, rw.clone())) })
                        });
                    direct.chain(composed)
                }),
        )
    }
}
