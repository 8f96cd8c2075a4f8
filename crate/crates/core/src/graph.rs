//! Dependency graph construction for mini-transaction histories.
//!
//! Unique write values fix the write-read relation outright, and because every
//! write in a mini-transaction follows a read of the same key, each reader
//! that also writes a key must come directly after the writer it read from in
//! that key's version order. [`cons_dep`] adds exactly those edges, optionally
//! closes each per-key write-write relation transitively, and derives
//! anti-dependencies from the result.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use indexmap::IndexMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::cycle::Digraph;
use crate::history::{History, Key, TxnId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Rt,
    So,
    Wr,
    Ww,
    Rw,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Rt => "RT",
            EdgeKind::So => "SO",
            EdgeKind::Wr => "WR",
            EdgeKind::Ww => "WW",
            EdgeKind::Rw => "RW",
        }
    }
}

/// Edge label. `WR`, `WW` and `RW` always carry a key; `RT` and `SO` never do.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeLabel {
    kind: EdgeKind,
    key: Option<Key>,
}

impl EdgeLabel {
    pub const RT: EdgeLabel = EdgeLabel { kind: EdgeKind::Rt, key: None };
    pub const SO: EdgeLabel = EdgeLabel { kind: EdgeKind::So, key: None };

    pub fn wr(key: Key) -> Self {
        EdgeLabel { kind: EdgeKind::Wr, key: Some(key) }
    }

    pub fn ww(key: Key) -> Self {
        EdgeLabel { kind: EdgeKind::Ww, key: Some(key) }
    }

    pub fn rw(key: Key) -> Self {
        EdgeLabel { kind: EdgeKind::Rw, key: Some(key) }
    }

    pub fn kind(&self) -> EdgeKind {
        self.kind
    }

    pub fn key(&self) -> Option<&Key> {
        self.key.as_ref()
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{}({})", self.kind.as_str(), k),
            None => f.write_str(self.kind.as_str()),
        }
    }
}

impl Serialize for EdgeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub from: TxnId,
    pub to: TxnId,
    pub label: EdgeLabel,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.from, self.label, self.to)
    }
}

/// Two transactions that read the same value of `key` from `writer` and then
/// write different values to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForkInstance {
    pub writer: TxnId,
    pub readers: (TxnId, TxnId),
    pub key: Key,
}

impl fmt::Display for ForkInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} and {} both read {} from {} and overwrite it",
            self.readers.0, self.readers.1, self.key, self.writer
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("{reader} reads {key}={value} but no committed transaction installs that value")]
    MissingWriter { reader: TxnId, key: Key, value: Value },
    #[error("{0} reads its own write of {1} before making it")]
    SelfRead(TxnId, Key),
    #[error("transaction {0} has no timestamps; real-time order is unavailable")]
    MissingTimestamp(TxnId),
}

/// One write-read dependency between committed transactions (vertex indices).
#[derive(Debug, Clone)]
struct WrDep {
    writer: u32,
    reader: u32,
    key: Key,
    /// Final value the reader writes to `key`, if it writes it.
    reader_writes: Option<Value>,
}

struct Vertices {
    ids: Vec<TxnId>,
    index: HashMap<TxnId, u32>,
}

impl Vertices {
    fn of(h: &History) -> Self {
        let ids: Vec<TxnId> = h.committed().map(|t| t.id).collect();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i as u32)).collect();
        Vertices { ids, index }
    }
}

/// Resolves every external read of every committed transaction to the unique
/// committed transaction whose final write installed the value read.
fn resolve_reads(h: &History, vs: &Vertices) -> (Vec<WrDep>, Vec<GraphError>) {
    let mut installers: HashMap<(&Key, Value), u32> = HashMap::new();
    for (v, t) in h.committed().enumerate() {
        for (key, value) in t.final_writes() {
            installers.insert((key, value), v as u32);
        }
    }

    let mut deps = Vec::new();
    let mut unresolved = Vec::new();
    for (v, t) in h.committed().enumerate().skip(1) {
        for (_, key, value) in t.external_reads() {
            match installers.get(&(key, value)) {
                Some(&w) if w as usize == v => unresolved.push(GraphError::SelfRead(t.id, key.clone())),
                Some(&w) => deps.push(WrDep {
                    writer: w,
                    reader: v as u32,
                    key: key.clone(),
                    reader_writes: t.final_write(key),
                }),
                None => unresolved.push(GraphError::MissingWriter { reader: t.id, key: key.clone(), value }),
            }
        }
    }
    debug_assert_eq!(vs.ids.len(), h.committed().count());
    (deps, unresolved)
}

/// Real-time successors stored implicitly: vertices sorted by start time, and
/// for each vertex the first position in that order that starts strictly after
/// it commits. The successors of `v` are `by_start[first_after[v]..]`.
#[derive(Debug, Clone)]
struct RealTimeIndex {
    by_start: Vec<u32>,
    first_after: Vec<u32>,
    start: Vec<u64>,
    commit: Vec<u64>,
}

impl RealTimeIndex {
    fn build(h: &History, vs: &Vertices) -> Result<Self, GraphError> {
        let n = vs.ids.len();
        let mut start = vec![0u64; n];
        let mut commit = vec![0u64; n];
        for (v, t) in h.committed().enumerate().skip(1) {
            match (t.start, t.commit) {
                (Some(s), Some(c)) => {
                    start[v] = s;
                    commit[v] = c;
                }
                _ => return Err(GraphError::MissingTimestamp(t.id)),
            }
        }
        let mut by_start: Vec<u32> = (1..n as u32).collect();
        by_start.sort_by_key(|&v| (start[v as usize], v));
        let starts: Vec<u64> = by_start.iter().map(|&v| start[v as usize]).collect();
        let mut first_after = vec![by_start.len() as u32; n];
        for v in 1..n {
            first_after[v] = starts.partition_point(|&s| s <= commit[v]) as u32;
        }
        Ok(RealTimeIndex { by_start, first_after, start, commit })
    }

    fn successors(&self, v: u32) -> &[u32] {
        &self.by_start[self.first_after[v as usize] as usize..]
    }

    fn precedes(&self, a: u32, b: u32) -> bool {
        a != 0 && b != 0 && self.commit[a as usize] < self.start[b as usize]
    }

    fn edge_count(&self) -> usize {
        self.first_after.iter().skip(1).map(|&p| self.by_start.len() - p as usize).sum()
    }
}

/// Dependency graph over the committed transactions of a history.
///
/// Vertex 0 is always the initial transaction. Real-time edges, when present,
/// are kept implicitly and enumerated on demand; every other edge is stored
/// once, indexed both per source vertex and per label.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    vertices: Vec<TxnId>,
    index: HashMap<TxnId, u32>,
    out: Vec<Vec<(u32, EdgeLabel)>>,
    edge_set: HashSet<(u32, u32, EdgeLabel)>,
    by_label: IndexMap<EdgeLabel, Vec<(u32, u32)>>,
    rt: Option<RealTimeIndex>,
    closed: bool,
}

impl DependencyGraph {
    fn empty(vs: Vertices) -> Self {
        let n = vs.ids.len();
        DependencyGraph {
            vertices: vs.ids,
            index: vs.index,
            out: vec![Vec::new(); n],
            edge_set: HashSet::new(),
            by_label: IndexMap::new(),
            rt: None,
            closed: false,
        }
    }

    /// Inserts an edge; re-inserting an existing edge is a no-op.
    fn add(&mut self, from: u32, to: u32, label: EdgeLabel) -> bool {
        if !self.edge_set.insert((from, to, label.clone())) {
            return false;
        }
        self.out[from as usize].push((to, label.clone()));
        self.by_label.entry(label).or_default().push((from, to));
        true
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[TxnId] {
        &self.vertices
    }

    pub fn vertex_of(&self, id: TxnId) -> Option<usize> {
        self.index.get(&id).map(|&v| v as usize)
    }

    pub fn txn_of(&self, v: usize) -> TxnId {
        self.vertices[v]
    }

    /// Whether the per-key write-write relation was transitively closed.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn has_real_time(&self) -> bool {
        self.rt.is_some()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_set.len() + self.rt.as_ref().map_or(0, RealTimeIndex::edge_count)
    }

    pub fn contains(&self, from: TxnId, to: TxnId, label: &EdgeLabel) -> bool {
        let (Some(&a), Some(&b)) = (self.index.get(&from), self.index.get(&to)) else {
            return false;
        };
        if label.kind == EdgeKind::Rt {
            return self.rt.as_ref().is_some_and(|rt| rt.precedes(a, b));
        }
        self.edge_set.contains(&(a, b, label.clone()))
    }

    /// Stored (non real-time) out-edges of vertex `v`, in insertion order.
    pub fn out_edges(&self, v: usize) -> &[(u32, EdgeLabel)] {
        &self.out[v]
    }

    /// Real-time successors of vertex `v` (empty without real-time edges).
    pub fn rt_successors(&self, v: usize) -> &[u32] {
        self.rt.as_ref().map_or(&[], |rt| rt.successors(v as u32))
    }

    /// Vertex pairs carrying exactly `label` (not available for RT).
    pub fn pairs_with(&self, label: &EdgeLabel) -> &[(u32, u32)] {
        self.by_label.get(label).map_or(&[], Vec::as_slice)
    }

    /// Labels present in the graph, in first-insertion order (RT excluded).
    pub fn labels(&self) -> impl Iterator<Item = &EdgeLabel> {
        self.by_label.keys()
    }

    /// All edges: stored edges in insertion order, then real-time edges.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .by_label
            .iter()
            .flat_map(|(label, pairs)| {
                pairs.iter().map(move |&(a, b)| (a, b, label.clone()))
            })
            .map(|(a, b, label)| Edge { from: self.vertices[a as usize], to: self.vertices[b as usize], label })
            .collect();
        if let Some(rt) = &self.rt {
            for v in 1..self.vertices.len() {
                for &w in rt.successors(v as u32) {
                    out.push(Edge { from: self.vertices[v], to: self.vertices[w as usize], label: EdgeLabel::RT });
                }
            }
        }
        out
    }

    /// The graph restricted to edges whose kind satisfies `keep`.
    pub fn filtered<F: Fn(EdgeKind) -> bool>(&self, keep: F) -> Filtered<'_, F> {
        Filtered { graph: self, keep }
    }

    /// DOT rendering, one edge per line.
    pub fn to_dot(&self) -> String {
        edges_to_dot(&self.edges())
    }
}

/// Renders edges as a DOT digraph with one `Ta -> Tb [label="..."]` line each.
pub fn edges_to_dot(edges: &[Edge]) -> String {
    let mut s = String::from("digraph G {\n");
    for e in edges {
        let label = e.label.to_string().replace('\\', "\\\\").replace('"', "\\\"");
        let _ = writeln!(s, "  {} -> {} [label=\"{}\"]", e.from, e.to, label);
    }
    s.push_str("}\n");
    s
}

/// Edge-kind filtered view of a [`DependencyGraph`].
pub struct Filtered<'g, F> {
    graph: &'g DependencyGraph,
    keep: F,
}

impl<F: Fn(EdgeKind) -> bool> Digraph for Filtered<'_, F> {
    type Label = EdgeLabel;

    fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    fn successors(&self, v: usize) -> Box<dyn Iterator<Item = (usize, EdgeLabel)> + '_> {
        let stored = self.graph.out[v]
            .iter()
            .filter(|(_, l)| (self.keep)(l.kind))
            .map(|(w, l)| (*w as usize, l.clone()));
        if (self.keep)(EdgeKind::Rt) {
            let rt = self.graph.rt_successors(v).iter().map(|&w| (w as usize, EdgeLabel::RT));
            Box::new(stored.chain(rt))
        } else {
            Box::new(stored)
        }
    }
}

/// Builds the dependency graph of `h`.
///
/// `with_rt` adds real-time edges; `close` transitively closes each per-key
/// write-write relation before anti-dependencies are derived. The history is
/// expected to have passed preflight: an external read without a committed
/// installing write is an error.
pub fn cons_dep(h: &History, with_rt: bool, close: bool) -> Result<DependencyGraph, GraphError> {
    let vs = Vertices::of(h);
    let (deps, mut unresolved) = resolve_reads(h, &vs);
    if !unresolved.is_empty() {
        return Err(unresolved.swap_remove(0));
    }
    let rt = if with_rt { Some(RealTimeIndex::build(h, &vs)?) } else { None };

    let mut g = DependencyGraph::empty(vs);
    g.rt = rt;
    g.closed = close;

    for ids in h.sessions().values() {
        let mut prev = 0u32;
        for id in ids {
            let v = g.index[id];
            g.add(prev, v, EdgeLabel::SO);
            prev = v;
        }
    }

    for d in &deps {
        g.add(d.writer, d.reader, EdgeLabel::wr(d.key.clone()));
        if d.reader_writes.is_some() {
            g.add(d.writer, d.reader, EdgeLabel::ww(d.key.clone()));
        }
    }

    if close {
        close_write_orders(&mut g);
    }

    // Anti-dependencies: T' -WR(x)-> T and T' -WW(x)-> S give T -RW(x)-> S.
    let mut groups: IndexMap<(u32, Key), (Vec<u32>, Vec<u32>)> = IndexMap::new();
    for (label, pairs) in &g.by_label {
        let slot = match label.kind {
            EdgeKind::Wr => 0,
            EdgeKind::Ww => 1,
            _ => continue,
        };
        let key = label.key.clone().expect("keyed label");
        for &(from, to) in pairs {
            let entry = groups.entry((from, key.clone())).or_default();
            if slot == 0 {
                entry.0.push(to);
            } else {
                entry.1.push(to);
            }
        }
    }
    for ((_, key), (readers, overwriters)) in groups {
        if overwriters.is_empty() {
            continue;
        }
        let label = EdgeLabel::rw(key);
        for &r in &readers {
            for &s in &overwriters {
                if r != s {
                    g.add(r, s, label.clone());
                }
            }
        }
    }
    Ok(g)
}

fn close_write_orders(g: &mut DependencyGraph) {
    let ww_labels: Vec<EdgeLabel> = g.by_label.keys().filter(|l| l.kind == EdgeKind::Ww).cloned().collect();
    for label in ww_labels {
        let pairs = g.by_label[&label].clone();
        let mut adj: IndexMap<u32, Vec<u32>> = IndexMap::new();
        for &(a, b) in &pairs {
            adj.entry(a).or_default().push(b);
        }
        let sources: Vec<u32> = adj.keys().copied().collect();
        for src in sources {
            let mut seen: HashSet<u32> = HashSet::new();
            let mut stack: Vec<u32> = adj[&src].clone();
            let mut reached = Vec::new();
            while let Some(v) = stack.pop() {
                if !seen.insert(v) {
                    continue;
                }
                reached.push(v);
                if let Some(next) = adj.get(&v) {
                    stack.extend(next.iter().copied());
                }
            }
            reached.sort_unstable();
            for v in reached {
                g.add(src, v, label.clone());
            }
        }
    }
}

/// All fork-pattern instances, one per unordered pair of overwriting readers
/// of the same (writer, key). Works directly on the resolved write-read
/// dependencies; reads that cannot be resolved are ignored.
pub fn detect_fork(h: &History) -> Vec<ForkInstance> {
    let vs = Vertices::of(h);
    let (deps, _) = resolve_reads(h, &vs);
    let mut groups: IndexMap<(u32, &Key), Vec<(u32, Value)>> = IndexMap::new();
    for d in &deps {
        if let Some(v) = d.reader_writes {
            groups.entry((d.writer, &d.key)).or_default().push((d.reader, v));
        }
    }
    let mut out = Vec::new();
    for ((writer, key), readers) in groups {
        for (i, &(a, va)) in readers.iter().enumerate() {
            for &(b, vb) in &readers[i + 1..] {
                if va != vb {
                    out.push(ForkInstance {
                        writer: vs.ids[writer as usize],
                        readers: (vs.ids[a as usize], vs.ids[b as usize]),
                        key: key.clone(),
                    });
                }
            }
        }
    }
    out
}
