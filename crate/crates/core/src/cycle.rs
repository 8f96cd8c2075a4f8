//! Cycle detection over implicit digraphs.
//!
//! Graphs expose successors through [`Digraph`], so composed relations can be
//! walked without materializing their edge sets. Cycles are found with an
//! iterative Tarjan SCC pass followed by a breadth-first search inside the
//! first non-trivial component, which makes the reported cycle deterministic
//! for a fixed vertex numbering.

use std::collections::VecDeque;

pub trait Digraph {
    type Label: Clone;

    fn vertex_count(&self) -> usize;

    fn successors(&self, v: usize) -> Box<dyn Iterator<Item = (usize, Self::Label)> + '_>;
}

const UNVISITED: u32 = u32::MAX;

/// Strongly connected components, each listed in ascending vertex order.
/// Components come out in reverse topological order.
pub fn strongly_connected_components<G: Digraph + ?Sized>(g: &G) -> Vec<Vec<usize>> {
    let comp = component_ids(g);
    let count = comp.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut out = vec![Vec::new(); count];
    for (v, &c) in comp.iter().enumerate() {
        out[c as usize].push(v);
    }
    out
}

/// Component id per vertex.
fn component_ids<G: Digraph + ?Sized>(g: &G) -> Vec<u32> {
    let n = g.vertex_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNVISITED; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0u32;
    let mut next_comp = 0u32;

    type Frame<'a, L> = (usize, Box<dyn Iterator<Item = (usize, L)> + 'a>);

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        let mut frames: Vec<Frame<'_, G::Label>> = Vec::new();
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        frames.push((root, g.successors(root)));

        while let Some((v, iter)) = frames.last_mut() {
            let v = *v;
            match iter.next() {
                Some((w, _)) => {
                    if index[w] == UNVISITED {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        frames.push((w, g.successors(w)));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                }
                None => {
                    frames.pop();
                    if let Some((parent, _)) = frames.last() {
                        low[*parent] = low[*parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        loop {
                            let w = stack.pop().expect("tarjan stack underflow");
                            on_stack[w] = false;
                            comp[w] = next_comp;
                            if w == v {
                                break;
                            }
                        }
                        next_comp += 1;
                    }
                }
            }
        }
    }
    comp
}

/// Returns a closed walk `[(from, to, label), ...]` if the graph is cyclic.
pub fn find_cycle<G: Digraph + ?Sized>(g: &G) -> Option<Vec<(usize, usize, G::Label)>> {
    let comp = component_ids(g);
    let n = g.vertex_count();
    let mut size = vec![0u32; comp.iter().copied().max().map_or(0, |m| m as usize + 1)];
    for &c in &comp {
        size[c as usize] += 1;
    }

    for v in 0..n {
        let c = comp[v];
        if size[c as usize] == 1 {
            if let Some((_, label)) = g.successors(v).find(|(w, _)| *w == v) {
                return Some(vec![(v, v, label)]);
            }
            continue;
        }
        return Some(cycle_through(g, v, &comp));
    }
    None
}

/// Shortest cycle through `root` that stays inside root's component.
fn cycle_through<G: Digraph + ?Sized>(g: &G, root: usize, comp: &[u32]) -> Vec<(usize, usize, G::Label)> {
    let c = comp[root];
    let mut pred: Vec<Option<(usize, G::Label)>> = vec![None; g.vertex_count()];
    let mut queue = VecDeque::from([root]);
    let mut seen = vec![false; g.vertex_count()];
    seen[root] = true;

    while let Some(v) = queue.pop_front() {
        for (w, label) in g.successors(v) {
            if comp[w] != c {
                continue;
            }
            if w == root {
                let mut path = vec![(v, root, label)];
                let mut cur = v;
                while cur != root {
                    let (p, l) = pred[cur].clone().expect("bfs predecessor");
                    path.push((p, cur, l));
                    cur = p;
                }
                path.reverse();
                return path;
            }
            if !seen[w] {
                seen[w] = true;
                pred[w] = Some((v, label));
                queue.push_back(w);
            }
        }
    }
    unreachable!("vertex {root} lies in a non-trivial component but no cycle returns to it")
}

/// Plain adjacency-list graph, used by tests and small callers.
#[derive(Debug, Clone, Default)]
pub struct AdjacencyList {
    pub out: Vec<Vec<usize>>,
}

impl AdjacencyList {
    pub fn new(n: usize) -> Self {
        AdjacencyList { out: vec![Vec::new(); n] }
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        self.out[from].push(to);
    }
}

impl Digraph for AdjacencyList {
    type Label = ();

    fn vertex_count(&self) -> usize {
        self.out.len()
    }

    fn successors(&self, v: usize) -> Box<dyn Iterator<Item = (usize, ())> + '_> {
        Box::new(self.out[v].iter().map(|&w| (w, ())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_closed_walk(cycle: &[(usize, usize, ())], g: &AdjacencyList) -> bool {
        !cycle.is_empty()
            && cycle.iter().all(|&(a, b, _)| g.out[a].contains(&b))
            && cycle.windows(2).all(|p| p[0].1 == p[1].0)
            && cycle.last().unwrap().1 == cycle[0].0
    }

    #[test]
    fn empty_graph() {
        assert!(find_cycle(&AdjacencyList::new(0)).is_none());
    }

    #[test]
    fn two_cycle() {
        let mut g = AdjacencyList::new(4);
        g.add_edge(0, 2);
        g.add_edge(0, 3);
        g.add_edge(2, 3);
        g.add_edge(3, 2);
        let c = find_cycle(&g).unwrap();
        assert_eq!(c.len(), 2);
        assert!(is_closed_walk(&c, &g));
    }

    #[test]
    fn self_loop() {
        let mut g = AdjacencyList::new(2);
        g.add_edge(0, 1);
        g.add_edge(1, 1);
        assert_eq!(find_cycle(&g).unwrap(), vec![(1, 1, ())]);
    }

    #[test]
    fn large_dag() {
        let mut g = AdjacencyList::new(100);
        for a in 0..100 {
            for b in (a + 1)..100 {
                if (a * 7 + b * 3) % 5 == 0 {
                    g.add_edge(a, b);
                }
            }
        }
        assert!(find_cycle(&g).is_none());
        assert_eq!(strongly_connected_components(&g).len(), 100);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000;
        let mut g = AdjacencyList::new(n);
        for v in 0..n - 1 {
            g.add_edge(v, v + 1);
        }
        assert!(find_cycle(&g).is_none());
        g.add_edge(n - 1, 0);
        assert_eq!(find_cycle(&g).unwrap().len(), n);
    }

    fn reachable(g: &AdjacencyList, from: usize, to: usize) -> bool {
        let mut seen = vec![false; g.out.len()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            for &w in &g.out[v] {
                if w == to {
                    return true;
                }
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    }

    proptest! {
        #[test]
        fn cycle_iff_some_vertex_reaches_itself(n in 1usize..12, edges in prop::collection::vec((0usize..12, 0usize..12), 0..30)) {
            let mut g = AdjacencyList::new(n);
            for (a, b) in edges {
                if a < n && b < n {
                    g.add_edge(a, b);
                }
            }
            let cyclic = (0..n).any(|v| reachable(&g, v, v));
            match find_cycle(&g) {
                Some(c) => {
                    prop_assert!(cyclic);
                    prop_assert!(is_closed_walk(&c, &g));
                }
                None => prop_assert!(!cyclic),
            }
        }

        #[test]
        fn components_match_mutual_reachability(n in 1usize..10, edges in prop::collection::vec((0usize..10, 0usize..10), 0..25)) {
            let mut g = AdjacencyList::new(n);
            for (a, b) in edges {
                if a < n && b < n {
                    g.add_edge(a, b);
                }
            }
            let comps = strongly_connected_components(&g);
            let mut id = vec![0; n];
            for (i, c) in comps.iter().enumerate() {
                for &v in c {
                    id[v] = i;
                }
            }
            for a in 0..n {
                for b in 0..n {
                    let mutual = a == b || (reachable(&g, a, b) && reachable(&g, b, a));
                    prop_assert_eq!(mutual, id[a] == id[b]);
                }
            }
        }
    }
}
