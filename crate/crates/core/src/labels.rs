//! The label-sequence model of the forest-growing process.
//!
//! Every vertex draws a set of labels: label 0 with probability `p0`, each
//! label `1..=N` with probability `p`. A label is *relevant* when it is the
//! moment the vertex actually joins the forest: label 0 always is, and label
//! `i >= 1` is if the vertex has no earlier relevant label and exactly one
//! neighbour already holds a relevant label `< i`. The colouring at time `l`
//! follows from which vertices hold relevant labels `<= l`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexSet};

pub(crate) fn check_probabilities(p0: f64, p: f64) -> Result<()> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::invalid(format!("p0 must lie in (0, 1], got {p0}")));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("p must lie in [0, 1), got {p}")));
    }
    Ok(())
}

/// Per-vertex label sets for a horizon of `horizon` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSchedule {
    pub horizon: u32,
    pub p0: f64,
    pub p: f64,
    labels: Vec<Vec<u32>>,
}

impl LabelSchedule {
    /// Wraps explicit label sets; each set is sorted and deduplicated.
    pub fn from_sets(horizon: u32, p0: f64, p: f64, mut labels: Vec<Vec<u32>>) -> Result<Self> {
        check_probabilities(p0, p)?;
        for set in labels.iter_mut() {
            set.sort_unstable();
            set.dedup();
            if set.last().is_some_and(|&l| l > horizon) {
                return Err(Error::invalid(format!("label beyond horizon {horizon}")));
            }
        }
        Ok(LabelSchedule {
            horizon,
            p0,
            p,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Ascending labels held by `v`.
    pub fn labels(&self, v: usize) -> &[u32] {
        &self.labels[v]
    }

    pub fn has_label(&self, v: usize, label: u32) -> bool {
        self.labels[v].binary_search(&label).is_ok()
    }
}

/// Draws independent label sets, vertex-major and label-minor from one
/// ChaCha stream, so a seed fixes the schedule on every platform.
pub fn sample_labels(n: usize, horizon: u32, p0: f64, p: f64, seed: u64) -> Result<LabelSchedule> {
    check_probabilities(p0, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..n)
        .map(|_| {
            let mut set = Vec::new();
            if rng.gen_bool(p0) {
                set.push(0);
            }
            // With p = 0 nothing is drawn, so the stream (and thus the roots)
            // does not depend on the horizon.
            if p > 0.0 {
                for label in 1..=horizon {
                    if rng.gen_bool(p) {
                        set.push(label);
                    }
                }
            }
            set
        })
        .collect();
    Ok(LabelSchedule {
        horizon,
        p0,
        p,
        labels,
    })
}

/// Relevant label of each vertex, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevantLabeling {
    relevant: Vec<Option<u32>>,
}

impl RelevantLabeling {
    pub fn get(&self, v: usize) -> Option<u32> {
        self.relevant[v]
    }

    pub fn n(&self) -> usize {
        self.relevant.len()
    }

    pub fn as_slice(&self) -> &[Option<u32>] {
        &self.relevant
    }

    /// `R_{<= l}`: vertices whose relevant label is at most `l`.
    pub fn activated_by(&self, l: u32) -> VertexSet {
        let n = self.relevant.len();
        VertexSet::from_vertices(
            n,
            (0..n).filter(|&v| self.relevant[v].is_some_and(|x| x <= l)),
        )
    }
}

/// Computes relevant labels one label value at a time.
///
/// Pass `i` only reads relevant labels `< i`, which were all fixed by earlier
/// passes, so the order of vertices within a pass does not matter.
pub fn relevant_labels(g: &Graph, sched: &LabelSchedule) -> Result<RelevantLabeling> {
    if g.n() != sched.n() {
        return Err(Error::invalid(format!(
            "schedule covers {} vertices, graph has {}",
            sched.n(),
            g.n()
        )));
    }
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); sched.horizon as usize + 1];
    for v in 0..g.n() {
        for &label in sched.labels(v) {
            holders[label as usize].push(v);
        }
    }
    let mut relevant: Vec<Option<u32>> = vec![None; g.n()];
    for v in holders[0].iter().copied() {
        relevant[v] = Some(0);
    }
    for (label, vertices) in holders.iter().enumerate().skip(1) {
        let label = label as u32;
        for &v in vertices {
            if relevant[v].is_some() {
                continue;
            }
            let earlier = g
                .neighbors(v)
                .iter()
                .filter(|&&u| relevant[u as usize].is_some_and(|x| x < label))
                .count();
            if earlier == 1 {
                relevant[v] = Some(label);
            }
        }
    }
    Ok(RelevantLabeling { relevant })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    White,
    Blue,
    Orange,
    Purple,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::White, Color::Blue, Color::Orange, Color::Purple];

    /// Colour of a non-activated vertex with `active` activated neighbours.
    pub fn from_active_neighbors(active: usize) -> Color {
        match active {
            0 => Color::White,
            1 => Color::Blue,
            _ => Color::Orange,
        }
    }
}

/// Colours of all vertices at one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoringState {
    pub time: u32,
    colors: Vec<Color>,
}

impl ColoringState {
    pub fn color(&self, v: usize) -> Color {
        self.colors[v]
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn vertices_with(&self, c: Color) -> VertexSet {
        let n = self.colors.len();
        VertexSet::from_vertices(n, (0..n).filter(|&v| self.colors[v] == c))
    }
}

pub fn coloring_at(g: &Graph, rl: &RelevantLabeling, l: u32) -> ColoringState {
    let active = |v: usize| rl.get(v).is_some_and(|x| x <= l);
    let colors = (0..g.n())
        .map(|v| {
            if active(v) {
                Color::Purple
            } else {
                let k = g
                    .neighbors(v)
                    .iter()
                    .filter(|&&u| active(u as usize))
                    .count();
                Color::from_active_neighbors(k)
            }
        })
        .collect();
    ColoringState { time: l, colors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_regular, truncated_tree};
    use proptest::prelude::*;

    fn star(leaves: usize) -> Graph {
        let edges: Vec<_> = (1..=leaves as u32).map(|v| (0, v)).collect();
        Graph::from_edges(leaves + 1, &edges).unwrap()
    }

    fn sched(horizon: u32, sets: Vec<Vec<u32>>) -> LabelSchedule {
        LabelSchedule::from_sets(horizon, 0.5, 0.5, sets).unwrap()
    }

    #[test]
    fn sampling_extremes() {
        let s = sample_labels(50, 5, 1.0, 0.0, 3).unwrap();
        assert!((0..50).all(|v| s.labels(v) == [0]));
        let s = sample_labels(1000, 3, 1e-9, 0.0, 3).unwrap();
        assert!((0..1000).all(|v| s.labels(v).is_empty()));
        assert!(sample_labels(10, 2, 0.0, 0.1, 0).is_err());
        assert!(sample_labels(10, 2, 0.3, 1.0, 0).is_err());
    }

    #[test]
    fn sampled_root_fraction_is_binomial() {
        let n = 10_000;
        let s = sample_labels(n, 4, 0.3, 0.2, 42).unwrap();
        let roots = (0..n).filter(|&v| s.has_label(v, 0)).count() as f64;
        let sd = (n as f64 * 0.3 * 0.7).sqrt();
        assert!((roots - 0.3 * n as f64).abs() < 4.0 * sd, "roots = {roots}");
        for v in 0..n {
            assert!(s.labels(v).windows(2).all(|w| w[0] < w[1]));
            assert!(s.labels(v).iter().all(|&l| l <= 4));
        }
    }

    #[test]
    fn relevant_label_rules() {
        // Label 0 is relevant no matter what the neighbours hold.
        let g = star(3);
        let rl = relevant_labels(&g, &sched(2, vec![vec![0], vec![0], vec![], vec![]])).unwrap();
        assert_eq!(rl.get(0), Some(0));
        assert_eq!(rl.get(1), Some(0));

        // Edge u–v with S(u) = {0}, S(v) = {1}.
        let edge = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let rl = relevant_labels(&edge, &sched(1, vec![vec![0], vec![1]])).unwrap();
        assert_eq!(rl.as_slice(), &[Some(0), Some(1)]);

        // Centre holding label 1 between two label-0 leaves stays unlabelled and orange.
        let rl = relevant_labels(&g, &sched(1, vec![vec![1], vec![0], vec![0], vec![]])).unwrap();
        assert_eq!(rl.get(0), None);
        assert_eq!(coloring_at(&g, &rl, 1).color(0), Color::Orange);

        // A later label can fire after an irrelevant earlier one.
        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let rl = relevant_labels(&path, &sched(3, vec![vec![], vec![1, 3], vec![2]])).unwrap();
        assert_eq!(rl.as_slice(), &[None, None, None]);
        let rl = relevant_labels(&path, &sched(3, vec![vec![0], vec![2, 3], vec![1]])).unwrap();
        assert_eq!(rl.as_slice(), &[Some(0), Some(2), None]);
    }

    #[test]
    fn relevant_labels_reject_size_mismatch() {
        let g = star(2);
        assert!(relevant_labels(&g, &sched(1, vec![vec![]])).is_err());
    }

    #[test]
    fn coloring_rules() {
        let g = star(4);
        let none = relevant_labels(&g, &sched(0, vec![vec![]; 5])).unwrap();
        assert!(coloring_at(&g, &none, 0)
            .colors()
            .iter()
            .all(|&c| c == Color::White));

        let centre =
            relevant_labels(&g, &sched(0, vec![vec![0], vec![], vec![], vec![], vec![]])).unwrap();
        let c = coloring_at(&g, &centre, 0);
        assert_eq!(c.color(0), Color::Purple);
        assert!((1..5).all(|v| c.color(v) == Color::Blue));
    }

    fn random_schedule(n: usize, horizon: u32, seed: u64) -> (Graph, RelevantLabeling) {
        let g = generate_regular(n, 3, seed).unwrap();
        let s = sample_labels(n, horizon, 0.15, 0.3, seed ^ 0xABCD).unwrap();
        let rl = relevant_labels(&g, &s).unwrap();
        (g, rl)
    }

    #[test]
    fn relevant_labeling_invariants() {
        let g = generate_regular(300, 4, 5).unwrap();
        let s = sample_labels(300, 6, 0.1, 0.25, 6).unwrap();
        let rl = relevant_labels(&g, &s).unwrap();
        assert_eq!(rl, relevant_labels(&g, &s).unwrap());
        for v in 0..g.n() {
            match rl.get(v) {
                None => {}
                Some(0) => assert!(s.has_label(v, 0)),
                Some(i) => {
                    assert!(s.has_label(v, i));
                    let earlier = g
                        .neighbors(v)
                        .iter()
                        .filter(|&&u| rl.get(u as usize).is_some_and(|x| x < i))
                        .count();
                    assert_eq!(earlier, 1);
                    // blue just before activation
                    assert_eq!(coloring_at(&g, &rl, i - 1).color(v), Color::Blue);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn colorings_are_monotone(seed in 0u64..10_000, horizon in 1u32..6) {
            let (g, rl) = random_schedule(40, horizon, seed);
            for l in 0..horizon {
                let now = coloring_at(&g, &rl, l);
                let next = coloring_at(&g, &rl, l + 1);
                prop_assert!(now.vertices_with(Color::Purple).is_subset(&next.vertices_with(Color::Purple)));
                prop_assert!(next.vertices_with(Color::White).is_subset(&now.vertices_with(Color::White)));
            }
        }

        #[test]
        fn color_depends_only_on_nearby_labels(seed in 0u64..10_000, i in 0u32..3) {
            // Labels at distance >= i + 2 from the root never change its colour at time i.
            let (tree, root) = truncated_tree(3, i as usize + 3).unwrap();
            let n = tree.n();
            let near = |v: usize| depth_of(v) <= i as usize + 1;
            let base = sample_labels(n, i + 1, 0.3, 0.4, seed).unwrap();
            let other = sample_labels(n, i + 1, 0.3, 0.4, seed.wrapping_add(99_991)).unwrap();
            let mixed: Vec<Vec<u32>> = (0..n)
                .map(|v| if near(v) { base.labels(v).to_vec() } else { other.labels(v).to_vec() })
                .collect();
            let mixed = LabelSchedule::from_sets(i + 1, 0.3, 0.4, mixed).unwrap();
            let c1 = coloring_at(&tree, &relevant_labels(&tree, &base).unwrap(), i);
            let c2 = coloring_at(&tree, &relevant_labels(&tree, &mixed).unwrap(), i);
            prop_assert_eq!(c1.color(root), c2.color(root));
        }
    }

    /// Depth of a BFS-numbered vertex in `truncated_tree(3, _)`.
    fn depth_of(v: usize) -> usize {
        let mut first = 1;
        let mut width = 3;
        let mut depth = 0;
        while v >= first {
            first += width;
            width *= 2;
            depth += 1;
        }
        depth
    }

    /// Probability of each colouring of the path 0–1–2 after step 1, from the
    /// label model.
    fn path_colorings_by_labels(p0: f64, p: f64) -> std::collections::BTreeMap<Vec<Color>, f64> {
        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut dist = std::collections::BTreeMap::new();
        for code in 0..64u32 {
            let mut sets = Vec::new();
            let mut weight = 1.0;
            for v in 0..3 {
                let bits = (code >> (2 * v)) & 3;
                let mut set = Vec::new();
                if bits & 1 != 0 {
                    set.push(0);
                    weight *= p0;
                } else {
                    weight *= 1.0 - p0;
                }
                if bits & 2 != 0 {
                    set.push(1);
                    weight *= p;
                } else {
                    weight *= 1.0 - p;
                }
                sets.push(set);
            }
            let s = LabelSchedule::from_sets(1, p0, p, sets).unwrap();
            let c = coloring_at(&path, &relevant_labels(&path, &s).unwrap(), 1);
            *dist.entry(c.colors().to_vec()).or_insert(0.0) += weight;
        }
        dist
    }

    /// The same distribution from the sequential process: roots first, then
    /// only blue vertices are offered the step-1 coin.
    fn path_colorings_sequential(p0: f64, p: f64) -> std::collections::BTreeMap<Vec<Color>, f64> {
        let nbrs: [&[usize]; 3] = [&[1], &[0, 2], &[1]];
        let colour = |purple: [bool; 3]| -> Vec<Color> {
            (0..3)
                .map(|v| {
                    if purple[v] {
                        Color::Purple
                    } else {
                        Color::from_active_neighbors(nbrs[v].iter().filter(|&&u| purple[u]).count())
                    }
                })
                .collect()
        };
        let mut dist = std::collections::BTreeMap::new();
        for roots in 0..8u32 {
            let purple0 = [roots & 1 != 0, roots & 2 != 0, roots & 4 != 0];
            let w0: f64 = purple0
                .iter()
                .map(|&b| if b { p0 } else { 1.0 - p0 })
                .product();
            let blue: Vec<usize> = colour(purple0)
                .iter()
                .enumerate()
                .filter(|(_, &c)| c == Color::Blue)
                .map(|(v, _)| v)
                .collect();
            for picks in 0..(1u32 << blue.len()) {
                let mut purple = purple0;
                let mut w = w0;
                for (k, &v) in blue.iter().enumerate() {
                    if picks & (1 << k) != 0 {
                        purple[v] = true;
                        w *= p;
                    } else {
                        w *= 1.0 - p;
                    }
                }
                *dist.entry(colour(purple)).or_insert(0.0) += w;
            }
        }
        dist
    }

    #[test]
    fn label_model_matches_sequential_process_on_path() {
        for &(p0, p) in &[(0.3, 0.6), (0.5, 0.5), (0.1, 0.9)] {
            let a = path_colorings_by_labels(p0, p);
            let b = path_colorings_sequential(p0, p);
            assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
            for (k, va) in &a {
                assert!((va - b[k]).abs() < 1e-15, "{k:?}: {va} vs {}", b[k]);
            }
        }
    }
}
