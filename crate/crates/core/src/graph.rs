//! Simple undirected graphs, random regular generation and the structural
//! queries the forest algorithm needs (girth, acyclicity, tree components).
//!
//! Vertex indices are the canonical tie-break order everywhere.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of whole pairings tried before `generate_regular` gives up.
pub const PAIRING_RETRY_BUDGET: usize = 100_000;

/// Immutable simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<u32>>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting loops, parallel edges and
    /// out-of-range endpoints.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for n = {n}"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at vertex {u}")));
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        for (v, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("parallel edge at vertex {v}")));
            }
        }
        Ok(Graph {
            adjacency,
            edge_count: edges.len(),
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&(v as u32)).is_ok()
    }

    /// Common degree if the graph is regular (`None` for the empty graph too).
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.adjacency.first()?.len();
        self.adjacency.iter().all(|a| a.len() == d).then_some(d)
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, list)| {
            list.iter()
                .filter(move |&&v| (u as u32) < v)
                .map(move |&v| (u as u32, v))
        })
    }

    /// Parses the text format: a header line `n m`, then `m` lines `u v`.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty graph file"))?;
        let (n, m) = parse_pair(header)?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let (u, v) = parse_pair(line)?;
            if u >= v {
                return Err(Error::invalid(format!(
                    "edge line '{line}' must satisfy u < v"
                )));
            }
            edges.push((u as u32, v as u32));
        }
        if edges.len() != m {
            return Err(Error::invalid(format!(
                "header declares {m} edges, found {}",
                edges.len()
            )));
        }
        Graph::from_edges(n, &edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n(), self.edge_count);
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => Err(Error::invalid(format!(
            "expected two non-negative integers, got '{line}'"
        ))),
    }
}

/// Bitset over the vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VertexSet {
    n: usize,
    words: Vec<u64>,
}

impl VertexSet {
    pub fn new(n: usize) -> Self {
        VertexSet {
            n,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut s = VertexSet::new(n);
        for v in 0..n {
            s.insert(v);
        }
        s
    }

    pub fn from_vertices(n: usize, vertices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = VertexSet::new(n);
        for v in vertices {
            s.insert(v);
        }
        s
    }

    /// Size of the ground set.
    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, v: usize) {
        assert!(v < self.n, "vertex {v} out of range {}", self.n);
        self.words[v / 64] |= 1 << (v % 64);
    }

    pub fn remove(&mut self, v: usize) {
        assert!(v < self.n, "vertex {v} out of range {}", self.n);
        self.words[v / 64] &= !(1 << (v % 64));
    }

    pub fn contains(&self, v: usize) -> bool {
        v < self.n && self.words[v / 64] & (1 << (v % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Members in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| self.contains(v))
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn difference(&self, other: &VertexSet) -> VertexSet {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn intersection(&self, other: &VertexSet) -> VertexSet {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn is_subset(&self, other: &VertexSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    fn zip_with(&self, other: &VertexSet, f: impl Fn(u64, u64) -> u64) -> VertexSet {
        assert_eq!(self.n, other.n, "vertex sets over different universes");
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| f(a, b))
            .collect();
        VertexSet { n: self.n, words }
    }
}

/// Uniform random simple `r`-regular graph from the pairing model.
///
/// `r` copies of every vertex are matched uniformly at random; a matching
/// with a loop or a repeated edge is discarded whole and redrawn.
pub fn generate_regular(n: usize, r: usize, seed: u64) -> Result<Graph> {
    if !(n * r).is_multiple_of(2) {
        return Err(Error::invalid(format!("n·r = {} must be even", n * r)));
    }
    if r >= n {
        return Err(Error::invalid(format!(
            "degree {r} must be smaller than n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<u32> = (0..n as u32)
        .flat_map(|v| std::iter::repeat_n(v, r))
        .collect();
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::with_capacity(r); n];

    'attempt: for _ in 0..PAIRING_RETRY_BUDGET {
        points.shuffle(&mut rng);
        adjacency.iter_mut().for_each(Vec::clear);
        for pair in points.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || adjacency[u as usize].contains(&v) {
                continue 'attempt;
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
        }
        return Ok(Graph {
            adjacency,
            edge_count: n * r / 2,
        });
    }
    Err(Error::GenerationFailure {
        n,
        r,
        attempts: PAIRING_RETRY_BUDGET,
    })
}

/// Length of a shortest cycle, `None` when the graph is a forest.
pub fn girth(g: &Graph) -> Option<usize> {
    let n = g.n();
    let mut best = usize::MAX;
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[root] = 0;
        parent[root] = u32::MAX;
        queue.clear();
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            // Anything found past this depth cannot beat the current best.
            if 2 * dist[u] + 1 >= best {
                break;
            }
            for &w in g.neighbors(u) {
                let w = w as usize;
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    parent[w] = u as u32;
                    queue.push_back(w);
                } else if parent[u] != w as u32 {
                    best = best.min(dist[u] + dist[w] + 1);
                }
            }
        }
    }
    (best != usize::MAX).then_some(best)
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false if `u` and `v` were already joined.
    fn union(&mut self, u: usize, v: usize) -> bool {
        let (a, b) = (self.find(u), self.find(v));
        if a == b {
            return false;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.parent[hi] = lo;
        true
    }
}

fn induced_edges<'a>(g: &'a Graph, s: &'a VertexSet) -> impl Iterator<Item = (usize, usize)> + 'a {
    g.edges()
        .map(|(u, v)| (u as usize, v as usize))
        .filter(|&(u, v)| s.contains(u) && s.contains(v))
}

/// True iff `G[s]` contains no cycle.
pub fn induced_is_acyclic(g: &Graph, s: &VertexSet) -> bool {
    let mut sets = DisjointSets::new(g.n());
    induced_edges(g, s).all(|(u, v)| sets.union(u, v))
}

/// Vertices of the connected components of `G[s]` that are trees.
pub fn acyclic_components(g: &Graph, s: &VertexSet) -> VertexSet {
    let n = g.n();
    let mut sets = DisjointSets::new(n);
    let mut edges_in = vec![0usize; n];
    let edges: Vec<_> = induced_edges(g, s).collect();
    for &(u, v) in &edges {
        sets.union(u, v);
    }
    for &(u, _) in &edges {
        let root = sets.find(u);
        edges_in[root] += 1;
    }
    let mut size = vec![0usize; n];
    for v in s.iter() {
        let root = sets.find(v);
        size[root] += 1;
    }
    let members = s.iter().filter(|&v| {
        let root = sets.find(v);
        edges_in[root] + 1 == size[root]
    });
    VertexSet::from_vertices(n, members.collect::<Vec<_>>())
}

/// The depth-limited tree in which the root has `r` children and every
/// other internal vertex has `r - 1`. Vertices are numbered in BFS order, so
/// the root is vertex 0.
pub fn truncated_tree(r: usize, depth: usize) -> Result<(Graph, usize)> {
    if r < 2 {
        return Err(Error::invalid(format!(
            "tree degree must be at least 2, got {r}"
        )));
    }
    let mut edges = Vec::new();
    let mut frontier = vec![0u32];
    let mut next_id = 1u32;
    for level in 0..depth {
        let children = if level == 0 { r } else { r - 1 };
        let mut next = Vec::with_capacity(frontier.len() * children);
        for &parent in &frontier {
            for _ in 0..children {
                edges.push((parent, next_id));
                next.push(next_id);
                next_id += 1;
            }
        }
        frontier = next;
    }
    Ok((Graph::from_edges(next_id as usize, &edges)?, 0))
}

#[rustfmt::skip]
const PETERSEN_EDGES: [(u32, u32); 15] = [
    (0, 1), (0, 4), (0, 5), (1, 2), (1, 6), (2, 3),
    (2, 7), (3, 4), (3, 8), (4, 9), (5, 7), (5, 8),
    (6, 8), (6, 9), (7, 9),
];

#[rustfmt::skip]
const HEAWOOD_EDGES: [(u32, u32); 21] = [
    (0, 1), (0, 5), (0, 13), (1, 2), (1, 10), (2, 3),
    (2, 7), (3, 4), (3, 12), (4, 5), (4, 9), (5, 6),
    (6, 7), (6, 11), (7, 8), (8, 9), (8, 13), (9, 10),
    (10, 11), (11, 12), (12, 13),
];

#[rustfmt::skip]
const MCGEE_EDGES: [(u32, u32); 36] = [
    (0, 1), (0, 12), (0, 23), (1, 2), (1, 8), (2, 3),
    (2, 19), (3, 4), (3, 15), (4, 5), (4, 11), (5, 6),
    (5, 22), (6, 7), (6, 18), (7, 8), (7, 14), (8, 9),
    (9, 10), (9, 21), (10, 11), (10, 17), (11, 12), (12, 13),
    (13, 14), (13, 20), (14, 15), (15, 16), (16, 17), (16, 23),
    (17, 18), (18, 19), (19, 20), (20, 21), (21, 22), (22, 23),
];

pub const FIXTURE_NAMES: [&str; 3] = ["petersen", "heawood", "mcgee"];

/// Named cubic graphs of girth 5, 6 and 7.
pub fn fixture(name: &str) -> Result<Graph> {
    let (n, edges): (usize, &[(u32, u32)]) = match name {
        "petersen" => (10, &PETERSEN_EDGES),
        "heawood" => (14, &HEAWOOD_EDGES),
        "mcgee" => (24, &MCGEE_EDGES),
        other => return Err(Error::invalid(format!("unknown fixture '{other}'"))),
    };
    Graph::from_edges(n, edges)
}
