//! End-to-end forest growing on a concrete graph: label sampling, same-step
//! pruning, white harvesting and a final repair pass that certifies the
//! output is acyclic on any input graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{acyclic_components, generate_regular, Graph, VertexSet};
use crate::labels::{
    check_probabilities, coloring_at, relevant_labels, sample_labels, Color, RelevantLabeling,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    /// Number of growth steps after the root step.
    pub steps: u32,
    pub p0: f64,
    pub p: f64,
    pub seed: u64,
}

impl AlgorithmParams {
    pub fn validate(&self) -> Result<()> {
        check_probabilities(self.p0, self.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestResult {
    /// Every vertex that ever turned purple.
    pub purple: VertexSet,
    /// Purple vertices left after dropping same-step adjacent pairs.
    pub pruned_purple: VertexSet,
    /// White vertices after the last step.
    pub white: VertexSet,
    /// White vertices lying in tree components of the white subgraph.
    pub harvested_white: VertexSet,
    pub repairs_removed: VertexSet,
    pub forest: VertexSet,
}

impl ForestResult {
    pub fn summary(&self) -> ForestCounts {
        let n = self.forest.universe();
        ForestCounts {
            forest_size: self.forest.len(),
            purple_size: self.purple.len(),
            pbar_size: self.pruned_purple.len(),
            white_size: self.white.len(),
            wbar_size: self.harvested_white.len(),
            repairs: self.repairs_removed.len(),
            fraction: if n == 0 {
                0.0
            } else {
                self.forest.len() as f64 / n as f64
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestCounts {
    pub forest_size: usize,
    pub purple_size: usize,
    pub pbar_size: usize,
    pub white_size: usize,
    pub wbar_size: usize,
    pub repairs: usize,
    pub fraction: f64,
}

/// Drops every activated vertex that has a neighbour activated at the same step.
pub fn prune_same_step(g: &Graph, rl: &RelevantLabeling) -> VertexSet {
    let kept = (0..g.n()).filter(|&v| match rl.get(v) {
        None => false,
        Some(label) => g
            .neighbors(v)
            .iter()
            .all(|&u| rl.get(u as usize) != Some(label)),
    });
    VertexSet::from_vertices(g.n(), kept.collect::<Vec<_>>())
}

/// Greedily removes vertices until `G[kept]` is a forest.
///
/// Vertices of degree < 2 in the induced subgraph are peeled first; what
/// survives is the part of `G[kept]` that lies on or between cycles. From it
/// the vertex of largest remaining degree is removed (lowest index on ties)
/// and peeling resumes, until nothing survives.
pub fn repair(g: &Graph, candidate: &VertexSet) -> (VertexSet, VertexSet) {
    let n = g.n();
    let mut kept = candidate.clone();
    let mut removed = VertexSet::new(n);
    let mut in_core: Vec<bool> = (0..n).map(|v| candidate.contains(v)).collect();
    let mut core_degree: Vec<usize> = (0..n)
        .map(|v| {
            if in_core[v] {
                g.neighbors(v)
                    .iter()
                    .filter(|&&u| in_core[u as usize])
                    .count()
            } else {
                0
            }
        })
        .collect();

    let mut stack: Vec<usize> = (0..n)
        .filter(|&v| in_core[v] && core_degree[v] < 2)
        .collect();
    loop {
        while let Some(v) = stack.pop() {
            if !in_core[v] {
                continue;
            }
            in_core[v] = false;
            for &u in g.neighbors(v) {
                let u = u as usize;
                if in_core[u] {
                    core_degree[u] -= 1;
                    if core_degree[u] < 2 {
                        stack.push(u);
                    }
                }
            }
        }
        let victim = (0..n)
            .filter(|&v| in_core[v])
            .max_by(|&a, &b| core_degree[a].cmp(&core_degree[b]).then(b.cmp(&a)));
        let Some(v) = victim else { break };
        kept.remove(v);
        removed.insert(v);
        // Removing v is the same as peeling it regardless of its degree.
        stack.push(v);
    }
    (kept, removed)
}

/// Runs the whole process once on `g`.
pub fn run(g: &Graph, params: &AlgorithmParams) -> Result<ForestResult> {
    params.validate()?;
    let sched = sample_labels(g.n(), params.steps, params.p0, params.p, params.seed)?;
    let rl = relevant_labels(g, &sched)?;
    let coloring = coloring_at(g, &rl, params.steps);
    let purple = coloring.vertices_with(Color::Purple);
    let pruned_purple = prune_same_step(g, &rl);
    let white = coloring.vertices_with(Color::White);
    let harvested_white = acyclic_components(g, &white);
    let candidate = pruned_purple.union(&harvested_white);
    let (forest, repairs_removed) = repair(g, &candidate);
    Ok(ForestResult {
        purple,
        pruned_purple,
        white,
        harvested_white,
        repairs_removed,
        forest,
    })
}

/// Where the graphs for a batch of runs come from.
#[derive(Debug, Clone)]
pub enum GraphSource {
    /// A fresh random regular graph per run.
    RandomRegular { n: usize, r: usize },
    /// One fixed graph reused by every run.
    Fixed(Graph),
}

/// Mixes a base seed with a run index and a stream tag (SplitMix64 finaliser).
pub fn derive_seed(base: u64, run: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(run.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        SummaryStats {
            mean,
            std: var.sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Standard error of the mean over `runs` samples.
    pub fn std_error(&self, runs: usize) -> f64 {
        self.std / (runs as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub runs: usize,
    pub forest_fraction: SummaryStats,
    pub pbar_fraction: SummaryStats,
    pub wbar_fraction: SummaryStats,
    pub repairs_fraction: SummaryStats,
    pub per_run: Vec<ForestCounts>,
}

/// Repeats `run` with per-run seeds derived from `params.seed`; run `k` uses
/// graph seed `derive_seed(seed, k, 0)` and label seed `derive_seed(seed, k, 1)`.
pub fn empirical_forest_fraction(
    source: &GraphSource,
    params: &AlgorithmParams,
    runs: usize,
) -> Result<EmpiricalStats> {
    if runs == 0 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    params.validate()?;
    let mut per_run = Vec::with_capacity(runs);
    for k in 0..runs as u64 {
        let owned;
        let g = match source {
            GraphSource::Fixed(g) => g,
            GraphSource::RandomRegular { n, r } => {
                owned = generate_regular(*n, *r, derive_seed(params.seed, k, 0))?;
                &owned
            }
        };
        let run_params = AlgorithmParams {
            seed: derive_seed(params.seed, k, 1),
            ..*params
        };
        per_run.push(run(g, &run_params)?.summary());
    }
    let n = match source {
        GraphSource::Fixed(g) => g.n(),
        GraphSource::RandomRegular { n, .. } => *n,
    } as f64;
    let stat = |f: fn(&ForestCounts) -> usize| {
        SummaryStats::from_samples(&per_run.iter().map(|c| f(c) as f64 / n).collect::<Vec<_>>())
    };
    Ok(EmpiricalStats {
        runs,
        forest_fraction: stat(|c| c.forest_size),
        pbar_fraction: stat(|c| c.pbar_size),
        wbar_fraction: stat(|c| c.wbar_size),
        repairs_fraction: stat(|c| c.repairs),
        per_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{fixture, girth, induced_is_acyclic};
    use crate::labels::LabelSchedule;
    use proptest::prelude::*;

    fn cycle_union(lengths: &[usize]) -> Graph {
        let mut edges = Vec::new();
        let mut base = 0u32;
        for &len in lengths {
            for k in 0..len as u32 {
                edges.push((base + k, base + (k + 1) % len as u32));
            }
            base += len as u32;
        }
        Graph::from_edges(base as usize, &edges).unwrap()
    }

    /// Smallest number of vertices whose removal leaves a forest, by brute force.
    fn min_feedback_vertex_set(g: &Graph) -> usize {
        let n = g.n();
        (0u32..1 << n)
            .filter(|mask| {
                let keep = VertexSet::from_vertices(n, (0..n).filter(|&v| mask & (1 << v) == 0));
                induced_is_acyclic(g, &keep)
            })
            .map(|mask| mask.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn repair_examples() {
        let tree = crate::graph::truncated_tree(3, 2).unwrap().0;
        let (kept, removed) = repair(&tree, &VertexSet::full(tree.n()));
        assert!(removed.is_empty());
        assert_eq!(kept.len(), tree.n());

        let tri = cycle_union(&[3]);
        let (kept, removed) = repair(&tri, &VertexSet::full(3));
        assert_eq!(removed.iter().collect::<Vec<_>>(), vec![0]);
        assert!(induced_is_acyclic(&tri, &kept));

        let two_squares = cycle_union(&[4, 4]);
        let (kept, removed) = repair(&two_squares, &VertexSet::full(8));
        assert_eq!(removed.len(), 2);
        assert_eq!(removed.len(), min_feedback_vertex_set(&two_squares));
        assert!(induced_is_acyclic(&two_squares, &kept));
    }

    #[test]
    fn repair_prefers_high_degree_vertices() {
        // Petersen has a feedback vertex set of size 3; greedy must stay acyclic.
        let g = fixture("petersen").unwrap();
        let (kept, removed) = repair(&g, &VertexSet::full(10));
        assert!(induced_is_acyclic(&g, &kept));
        assert!(removed.len() >= min_feedback_vertex_set(&g));
        assert_eq!(kept.union(&removed), VertexSet::full(10));
    }

    #[test]
    fn pruning_examples() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let s =
            LabelSchedule::from_sets(2, 0.5, 0.5, vec![vec![0], vec![1], vec![], vec![0]]).unwrap();
        let rl = relevant_labels(&g, &s).unwrap();
        assert_eq!(prune_same_step(&g, &rl), rl.activated_by(2));

        let s =
            LabelSchedule::from_sets(0, 0.5, 0.5, vec![vec![0], vec![0], vec![], vec![]]).unwrap();
        let rl = relevant_labels(&g, &s).unwrap();
        assert!(prune_same_step(&g, &rl).is_empty());

        let g = fixture("heawood").unwrap();
        let rl = relevant_labels(&g, &sample_labels(14, 0, 1.0, 0.0, 0).unwrap()).unwrap();
        assert!(prune_same_step(&g, &rl).is_empty());
    }

    #[test]
    fn all_roots_leaves_nothing() {
        let g = fixture("mcgee").unwrap();
        let res = run(
            &g,
            &AlgorithmParams {
                steps: 3,
                p0: 1.0,
                p: 0.5,
                seed: 1,
            },
        )
        .unwrap();
        assert!(res.pruned_purple.is_empty());
        assert!(res.white.is_empty());
        assert!(res.forest.is_empty());
    }

    #[test]
    fn zero_growth_probability_freezes_after_roots() {
        let g = generate_regular(200, 3, 4).unwrap();
        let frozen = run(
            &g,
            &AlgorithmParams {
                steps: 25,
                p0: 0.2,
                p: 0.0,
                seed: 8,
            },
        )
        .unwrap();
        let roots_only = run(
            &g,
            &AlgorithmParams {
                steps: 0,
                p0: 0.2,
                p: 0.0,
                seed: 8,
            },
        )
        .unwrap();
        // Same label-0 draws: with p = 0 the extra Bernoulli(0) draws are all false.
        assert_eq!(frozen.purple, roots_only.purple);
        assert_eq!(frozen.forest, roots_only.forest);
    }

    #[test]
    fn mcgee_needs_no_repairs_for_one_step() {
        let g = fixture("mcgee").unwrap();
        assert_eq!(girth(&g), Some(7));
        for seed in 0..200 {
            let res = run(
                &g,
                &AlgorithmParams {
                    steps: 1,
                    p0: 0.2,
                    p: 0.4,
                    seed,
                },
            )
            .unwrap();
            assert!(res.repairs_removed.is_empty(), "seed {seed}");
            assert!(induced_is_acyclic(
                &g,
                &res.pruned_purple.union(&res.harvested_white)
            ));
        }
    }

    #[test]
    fn short_fixtures_need_no_repairs_at_zero_steps() {
        for name in ["petersen", "heawood"] {
            let g = fixture(name).unwrap();
            for seed in 0..200 {
                let res = run(
                    &g,
                    &AlgorithmParams {
                        steps: 0,
                        p0: 0.3,
                        p: 0.2,
                        seed,
                    },
                )
                .unwrap();
                assert!(res.repairs_removed.is_empty(), "{name} seed {seed}");
            }
        }
    }

    #[test]
    fn single_run_statistics() {
        let g = fixture("heawood").unwrap();
        let params = AlgorithmParams {
            steps: 4,
            p0: 0.2,
            p: 0.3,
            seed: 77,
        };
        let stats = empirical_forest_fraction(&GraphSource::Fixed(g.clone()), &params, 1).unwrap();
        let single = run(
            &g,
            &AlgorithmParams {
                seed: derive_seed(77, 0, 1),
                ..params
            },
        )
        .unwrap();
        assert_eq!(stats.forest_fraction.mean, single.summary().fraction);
        assert_eq!(stats.forest_fraction.std, 0.0);
        assert!(empirical_forest_fraction(&GraphSource::Fixed(g), &params, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn output_is_always_a_forest(
            seed in any::<u64>(),
            n in 6usize..80,
            r in 3usize..6,
            steps in 0u32..12,
            p0 in 0.01f64..0.9,
            p in 0.0f64..0.95,
        ) {
            prop_assume!(n * r % 2 == 0 && r < n);
            let g = generate_regular(n, r, seed).unwrap();
            let res = run(&g, &AlgorithmParams { steps, p0, p, seed: seed ^ 1 }).unwrap();
            prop_assert!(induced_is_acyclic(&g, &res.forest));
            prop_assert!(res.pruned_purple.is_subset(&res.purple));
            prop_assert!(res.harvested_white.is_subset(&res.white));
            let candidate = res.pruned_purple.union(&res.harvested_white);
            prop_assert_eq!(&res.forest, &candidate.difference(&res.repairs_removed));
            for v in res.harvested_white.iter() {
                prop_assert!(g.neighbors(v).iter().all(|&u| !res.purple.contains(u as usize)));
            }
            // The latest vertex of a purple cycle would need two earlier
            // active neighbours or a same-step neighbour, so the candidate
            // is acyclic even on graphs with short cycles.
            prop_assert!(res.repairs_removed.is_empty());
        }

        #[test]
        fn pruned_set_has_no_same_step_edges(seed in any::<u64>(), steps in 0u32..10) {
            let g = generate_regular(60, 3, seed).unwrap();
            let s = sample_labels(60, steps, 0.2, 0.5, seed).unwrap();
            let rl = relevant_labels(&g, &s).unwrap();
            let pbar = prune_same_step(&g, &rl);
            for (u, v) in g.edges() {
                let (u, v) = (u as usize, v as usize);
                if pbar.contains(u) && pbar.contains(v) {
                    prop_assert_ne!(rl.get(u), rl.get(v));
                }
            }
        }
    }
}
