//! Brute-force ground truth for the colour densities.
//!
//! Colour probabilities at time `i` only depend on labels near the vertices
//! being observed, so they can be computed exactly on a truncated regular
//! tree by summing over every label assignment, or estimated by sampling
//! assignments when the sum is too large.
//!
//! How far a vertex's labels can matter is bounded more tightly than by
//! distance alone: for the colour of `x` at time `τ` to change when `S(y)`
//! changes, there must be a path from `y` to `x` along which relevant labels
//! strictly increase and stay `<= τ`, so only labels `<= τ + 1 - d(x, y)` of
//! `y` matter. For whether `x` itself is activated by `τ`, `x` lies on that
//! path too and the bound is `τ - d(x, y)`. Labels above a vertex's bound
//! are summed out exactly (their weights add to one), which is what keeps
//! the `i = 1` checks within budget.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{truncated_tree, Graph};
use crate::labels::Color;
use crate::recurrence::{check_degree, initial_state, iterate, KineticState, StepMode};

/// Largest number of weighted assignments an exact enumeration may visit.
pub const ENUMERATION_BUDGET: f64 = (1u64 << 30) as f64;
/// Comparison threshold for exact enumerations.
pub const EXACT_TOLERANCE: f64 = 1e-12;
/// Monte-Carlo checks pass within this many standard errors.
pub const MC_SIGMAS: f64 = 4.0;

const NO_LABEL: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SingleVertex,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationSpec {
    pub r: usize,
    /// Time at which colours are read; also the largest label drawn.
    pub i: u32,
    pub p0: f64,
    pub p: f64,
    pub mode: Mode,
}

impl EnumerationSpec {
    fn validate(&self) -> Result<()> {
        check_degree(self.r)?;
        if !(self.p0 > 0.0 && self.p0 <= 1.0) || !(0.0..1.0).contains(&self.p) {
            return Err(Error::invalid(format!(
                "need 0 < p0 <= 1 and 0 <= p < 1, got {} and {}",
                self.p0, self.p
            )));
        }
        Ok(())
    }
}

/// What is read off a target vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// Its colour at `time`.
    Color,
    /// Whether it holds a relevant label `<= time`.
    Activated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub vertex: usize,
    pub time: u32,
    pub kind: Observation,
}

impl Target {
    pub fn color(vertex: usize, time: u32) -> Self {
        Target {
            vertex,
            time,
            kind: Observation::Color,
        }
    }

    pub fn activated(vertex: usize, time: u32) -> Self {
        Target {
            vertex,
            time,
            kind: Observation::Activated,
        }
    }

    fn reach(&self) -> i64 {
        self.time as i64
            + if self.kind == Observation::Color {
                1
            } else {
                0
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pruning {
    /// Per-vertex label bounds from the increasing-path argument.
    PathBound,
    /// Every vertex that can matter at all draws the full label range.
    Ball,
}

/// The vertices (and label ranges) an enumeration runs over.
#[derive(Debug, Clone)]
pub struct Plan {
    /// Original vertex of each local index.
    vertices: Vec<usize>,
    local: Vec<Option<u8>>,
    adjacency: Vec<Vec<u8>>,
    /// Highest label each local vertex draws.
    label_bound: Vec<u8>,
    horizon: u32,
}

impl Plan {
    pub fn new(g: &Graph, targets: &[Target], horizon: u32, pruning: Pruning) -> Result<Self> {
        let mut bound = vec![i64::MIN; g.n()];
        for t in targets {
            let reach = t.reach();
            for (v, d) in distances(g, t.vertex).into_iter().enumerate() {
                if let Some(d) = d {
                    bound[v] = bound[v].max(reach - d as i64);
                }
            }
        }
        let vertices: Vec<usize> = (0..g.n()).filter(|&v| bound[v] >= 0).collect();
        if vertices.len() >= NO_LABEL as usize || horizon >= 8 {
            return Err(Error::invalid(
                "oracle plans are limited to 254 vertices and labels below 8",
            ));
        }
        let mut local = vec![None; g.n()];
        for (k, &v) in vertices.iter().enumerate() {
            local[v] = Some(k as u8);
        }
        let adjacency = vertices
            .iter()
            .map(|&v| {
                g.neighbors(v)
                    .iter()
                    .filter_map(|&u| local[u as usize])
                    .collect()
            })
            .collect();
        let label_bound = vertices
            .iter()
            .map(|&v| match pruning {
                Pruning::PathBound => bound[v].min(horizon as i64) as u8,
                Pruning::Ball => horizon as u8,
            })
            .collect();
        Ok(Plan {
            vertices,
            local,
            adjacency,
            label_bound,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of weighted assignments an exact enumeration visits.
    pub fn assignments(&self) -> f64 {
        self.label_bound
            .iter()
            .map(|&h| 2f64.powi(h as i32 + 1))
            .product()
    }

    /// Local index of an original vertex that belongs to the plan.
    pub fn local(&self, v: usize) -> usize {
        self.local[v].expect("target vertex is part of the plan") as usize
    }

    fn relevant_into(&self, sets: &[u8], rel: &mut [u8]) {
        for (v, &set) in sets.iter().enumerate() {
            rel[v] = if set & 1 != 0 { 0 } else { NO_LABEL };
        }
        for label in 1..=self.horizon as u8 {
            let bit = 1u8 << label;
            for v in 0..sets.len() {
                if rel[v] == NO_LABEL && sets[v] & bit != 0 {
                    // NO_LABEL compares above every label
                    let earlier = self.adjacency[v]
                        .iter()
                        .filter(|&&u| rel[u as usize] < label)
                        .count();
                    if earlier == 1 {
                        rel[v] = label;
                    }
                }
            }
        }
    }
}

fn distances(g: &Graph, from: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or(0);
        for &w in g.neighbors(u) {
            if dist[w as usize].is_none() {
                dist[w as usize] = Some(d + 1);
                queue.push_back(w as usize);
            }
        }
    }
    dist
}

/// Relevant labels of one assignment, queried by local index.
pub struct Snapshot<'a> {
    plan: &'a Plan,
    rel: &'a [u8],
}

impl Snapshot<'_> {
    pub fn activated(&self, v: usize, time: u32) -> bool {
        (self.rel[v] as u32) <= time
    }

    pub fn color(&self, v: usize, time: u32) -> Color {
        if self.activated(v, time) {
            return Color::Purple;
        }
        let k = self.plan.adjacency[v]
            .iter()
            .filter(|&&u| self.activated(u as usize, time))
            .count();
        Color::from_active_neighbors(k)
    }
}

/// Cascade (pairwise) summation.
#[derive(Debug, Clone, Default)]
struct PairwiseSum {
    partials: Vec<(u32, f64)>,
}

impl PairwiseSum {
    fn add(&mut self, x: f64) {
        let mut level = 0;
        let mut value = x;
        while let Some(&(l, v)) = self.partials.last() {
            if l != level {
                break;
            }
            self.partials.pop();
            value += v;
            level += 1;
        }
        self.partials.push((level, value));
    }

    fn total(&self) -> f64 {
        self.partials.iter().rev().fold(0.0, |acc, &(_, v)| acc + v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// Probability mass (exact) or sample frequency (Monte-Carlo) per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMasses {
    pub method: Method,
    pub mass: Vec<f64>,
    /// Raw counts for Monte-Carlo, empty for exact runs.
    pub counts: Vec<u64>,
    pub samples: u64,
    pub assignments: f64,
}

impl CellMasses {
    pub fn prob(&self, pred: impl Fn(usize) -> bool) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .filter(|&(c, _)| pred(c))
            .map(|(_, m)| m)
            .sum()
    }

    pub fn count(&self, pred: impl Fn(usize) -> bool) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .filter(|&(c, _)| pred(c))
            .map(|(_, k)| k)
            .sum()
    }
}

/// Sums assignment weights per cell over every assignment of the plan.
/// `observe` maps an assignment to a cell index below `cells`.
pub fn enumerate_exact(
    plan: &Plan,
    p0: f64,
    p: f64,
    cells: usize,
    mut observe: impl FnMut(&Snapshot<'_>) -> usize,
) -> Result<CellMasses> {
    let assignments = plan.assignments();
    if assignments > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            assignments,
            budget: ENUMERATION_BUDGET,
        });
    }
    let k = plan.len();
    // weight of each label subset, per vertex
    let weights: Vec<Vec<f64>> = plan
        .label_bound
        .iter()
        .map(|&h| {
            (0..1u32 << (h + 1))
                .map(|set| {
                    (0..=h as u32)
                        .map(|l| {
                            let q = if l == 0 { p0 } else { p };
                            if set & (1 << l) != 0 {
                                q
                            } else {
                                1.0 - q
                            }
                        })
                        .product()
                })
                .collect()
        })
        .collect();
    let radix: Vec<u32> = plan.label_bound.iter().map(|&h| 1 << (h + 1)).collect();

    let mut sums = vec![PairwiseSum::default(); cells];
    let mut digits = vec![0u8; k];
    let mut rel = vec![NO_LABEL; k];
    // prefix[j] = product of weights of digits j..k
    let mut prefix = vec![1.0; k + 1];
    for j in (0..k).rev() {
        prefix[j] = prefix[j + 1] * weights[j][0];
    }
    loop {
        plan.relevant_into(&digits, &mut rel);
        let cell = observe(&Snapshot { plan, rel: &rel });
        let weight = prefix[0];
        if weight != 0.0 {
            sums[cell].add(weight);
        }

        let mut j = 0;
        while j < k {
            digits[j] += 1;
            if (digits[j] as u32) < radix[j] {
                break;
            }
            digits[j] = 0;
            j += 1;
        }
        if j == k {
            break;
        }
        for m in (0..=j).rev() {
            prefix[m] = prefix[m + 1] * weights[m][digits[m] as usize];
        }
    }
    Ok(CellMasses {
        method: Method::Exact,
        mass: sums.iter().map(PairwiseSum::total).collect(),
        counts: Vec::new(),
        samples: 0,
        assignments,
    })
}

/// Samples assignments of the plan (vertex-major, label-minor) and counts
/// cells.
pub fn sample_cells(
    plan: &Plan,
    p0: f64,
    p: f64,
    cells: usize,
    samples: u64,
    seed: u64,
    mut observe: impl FnMut(&Snapshot<'_>) -> usize,
) -> Result<CellMasses> {
    if samples == 0 {
        return Err(Error::invalid("samples must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; cells];
    let mut sets = vec![0u8; plan.len()];
    let mut rel = vec![NO_LABEL; plan.len()];
    for _ in 0..samples {
        for (v, set) in sets.iter_mut().enumerate() {
            *set = 0;
            for l in 0..=plan.label_bound[v] {
                let q = if l == 0 { p0 } else { p };
                if rng.gen_bool(q) {
                    *set |= 1 << l;
                }
            }
        }
        plan.relevant_into(&sets, &mut rel);
        counts[observe(&Snapshot { plan, rel: &rel })] += 1;
    }
    Ok(CellMasses {
        method: Method::MonteCarlo,
        mass: counts.iter().map(|&c| c as f64 / samples as f64).collect(),
        counts,
        samples,
        assignments: plan.assignments(),
    })
}

fn color_index(c: Color) -> usize {
    match c {
        Color::White => 0,
        Color::Blue => 1,
        Color::Orange => 2,
        Color::Purple => 3,
    }
}

const WHITE: usize = 0;
const BLUE: usize = 1;

/// Regular tree deep enough that every vertex within reach of the targets
/// has full degree. Targets are given as (depth below the root, target).
fn tree_for(r: usize, targets: &[(usize, Target)]) -> Result<Graph> {
    let depth = targets
        .iter()
        .map(|(d, t)| *d as i64 + t.reach())
        .max()
        .unwrap_or(0);
    Ok(truncated_tree(r, depth.max(0) as usize)?.0)
}

/// Exact `w_i`, `b_i` for the root of a truncated regular tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleProbabilities {
    pub w: f64,
    pub b: f64,
    pub assignments: f64,
}

pub fn exact_single(spec: &EnumerationSpec) -> Result<SingleProbabilities> {
    exact_single_with(spec, Pruning::PathBound)
}

pub fn exact_single_with(spec: &EnumerationSpec, pruning: Pruning) -> Result<SingleProbabilities> {
    spec.validate()?;
    if spec.mode != Mode::SingleVertex {
        return Err(Error::invalid("exact_single needs single-vertex mode"));
    }
    let target = Target::color(0, spec.i);
    let tree = tree_for(spec.r, &[(0, target)])?;
    let plan = Plan::new(&tree, &[target], spec.i, pruning)?;
    let root = plan.local(0);
    let m = enumerate_exact(&plan, spec.p0, spec.p, 4, |s| {
        color_index(s.color(root, spec.i))
    })?;
    Ok(SingleProbabilities {
        w: m.mass[WHITE],
        b: m.mass[BLUE],
        assignments: m.assignments,
    })
}

/// Colour probabilities of the root of an arbitrary graph, for homogeneity
/// checks on large trees.
pub fn exact_vertex_colors(g: &Graph, v: usize, i: u32, p0: f64, p: f64) -> Result<[f64; 4]> {
    let target = Target::color(v, i);
    let plan = Plan::new(g, &[target], i, Pruning::PathBound)?;
    let local = plan.local(v);
    let m = enumerate_exact(&plan, p0, p, 4, |s| color_index(s.color(local, i)))?;
    Ok([m.mass[0], m.mass[1], m.mass[2], m.mass[3]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_count(k: u64, n: u64) -> Self {
        let value = k as f64 / n as f64;
        Estimate {
            value,
            std_error: (value * (1.0 - value) / n as f64).sqrt(),
        }
    }

    /// `|value - expected|` in units of the standard error under the
    /// hypothesis that `expected` is the true probability.
    pub fn z_score(&self, expected: f64, n: u64) -> f64 {
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        if se == 0.0 {
            if self.value == expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - expected).abs() / se
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimates {
    pub q: Estimate,
    pub s: Estimate,
    pub t: Estimate,
    pub samples: u64,
    pub seed: u64,
}

/// Edge `u = 0`, `v = 1` in a tree rooted at `u`.
const PAIR_U: usize = 0;
const PAIR_V: usize = 1;

fn pair_plan(r: usize, targets: &[Target], horizon: u32) -> Result<Plan> {
    let placed: Vec<(usize, Target)> = targets
        .iter()
        .map(|t| (if t.vertex == PAIR_U { 0 } else { 1 }, *t))
        .collect();
    let tree = tree_for(r, &placed)?;
    Plan::new(&tree, targets, horizon, Pruning::PathBound)
}

fn pair_cell(s: &Snapshot<'_>, u: usize, v: usize, time: u32) -> usize {
    color_index(s.color(u, time)) * 4 + color_index(s.color(v, time))
}

fn pair_masses(
    spec: &EnumerationSpec,
    method: Method,
    samples: u64,
    seed: u64,
) -> Result<CellMasses> {
    let targets = [Target::color(PAIR_U, spec.i), Target::color(PAIR_V, spec.i)];
    let plan = pair_plan(spec.r, &targets, spec.i)?;
    let (u, v) = (plan.local(PAIR_U), plan.local(PAIR_V));
    let observe = |s: &Snapshot<'_>| pair_cell(s, u, v, spec.i);
    match method {
        Method::Exact => enumerate_exact(&plan, spec.p0, spec.p, 16, observe),
        Method::MonteCarlo => sample_cells(&plan, spec.p0, spec.p, 16, samples, seed, observe),
    }
}

/// Monte-Carlo estimates of `q_i`, `s_i` (`u` blue, `v` white) and `t_i`
/// for an edge `u v`.
pub fn mc_pair(spec: &EnumerationSpec, samples: u64, seed: u64) -> Result<PairEstimates> {
    spec.validate()?;
    if spec.mode != Mode::Pair {
        return Err(Error::invalid("mc_pair needs pair mode"));
    }
    if samples == 0 {
        return Err(Error::invalid("samples must be at least 1"));
    }
    let m = pair_masses(spec, Method::MonteCarlo, samples, seed)?;
    let est = |cu: usize, cv: usize| Estimate::from_count(m.counts[cu * 4 + cv], samples);
    Ok(PairEstimates {
        q: est(WHITE, WHITE),
        s: est(BLUE, WHITE),
        t: est(BLUE, BLUE),
        samples,
        seed,
    })
}

/// Exact `(q_i, s_i, t_i)` for an edge.
pub fn exact_pair(spec: &EnumerationSpec) -> Result<[f64; 3]> {
    spec.validate()?;
    let m = pair_masses(spec, Method::Exact, 0, 0)?;
    Ok([
        m.mass[WHITE * 4 + WHITE],
        m.mass[BLUE * 4 + WHITE],
        m.mass[BLUE * 4 + BLUE],
    ])
}

/// Outcome of comparing brute-force probabilities with a formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub error: f64,
    /// Standard error for Monte-Carlo items.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub passed: bool,
}

impl CheckItem {
    fn exact(name: impl Into<String>, measured: f64, expected: f64, tol: f64) -> Self {
        let error = (measured - expected).abs();
        CheckItem {
            name: name.into(),
            measured,
            expected,
            error,
            std_error: None,
            passed: error <= tol,
        }
    }

    fn statistical(name: impl Into<String>, measured: f64, expected: f64, std_error: f64) -> Self {
        let error = (measured - expected).abs();
        let passed = error <= MC_SIGMAS * std_error || (std_error == 0.0 && error == 0.0);
        CheckItem {
            name: name.into(),
            measured,
            expected,
            error,
            std_error: Some(std_error),
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceResult {
    /// Largest `|P(X1, X2 | root white) - P(X1 | ·) P(X2 | ·)|`.
    pub max_discrepancy: f64,
    pub pairs_checked: usize,
    /// Depth of the branch colourings compared (1 = the neighbour only).
    pub branch_depth: usize,
    pub assignments: f64,
    /// Set when the root is never white, so the conditionals are undefined.
    pub skipped: bool,
}

/// Local indices of the vertices of branch `j` down to `depth` below the
/// root's neighbour, in BFS order of the truncated tree.
fn branch_vertices(r: usize, j: usize, depth: usize) -> Vec<usize> {
    let mut level = vec![1 + j];
    let mut all = level.clone();
    for d in 1..depth {
        let first_at = |lvl: usize| -> usize {
            // first BFS index at tree depth lvl
            let mut first = 1;
            let mut width = r;
            for _ in 1..lvl {
                first += width;
                width *= r - 1;
            }
            first
        };
        let next: Vec<usize> = level
            .iter()
            .flat_map(|&v| {
                let offset = v - first_at(d);
                let start = first_at(d + 1) + offset * (r - 1);
                start..start + (r - 1)
            })
            .collect();
        all.extend(&next);
        level = next;
    }
    all
}

/// Exact check that, given the root is white at time `i`, the colourings of
/// two of its branches factorize. Branches are compared to depth 2 when the
/// budget allows, otherwise to depth 1.
pub fn independence_check(r: usize, i: u32, p0: f64, p: f64) -> Result<IndependenceResult> {
    EnumerationSpec {
        r,
        i,
        p0,
        p,
        mode: Mode::SingleVertex,
    }
    .validate()?;
    let mut last_err = None;
    for depth in [2usize, 1] {
        match independence_at_depth(r, i, p0, p, depth) {
            Err(e @ Error::BudgetExceeded { .. }) => last_err = Some(e),
            other => return other,
        }
    }
    Err(last_err.expect("loop ran"))
}

fn independence_at_depth(
    r: usize,
    i: u32,
    p0: f64,
    p: f64,
    depth: usize,
) -> Result<IndependenceResult> {
    let b1 = branch_vertices(r, 0, depth);
    let b2 = branch_vertices(r, 1, depth);
    let mut targets = vec![Target::color(0, i)];
    targets.extend(b1.iter().chain(&b2).map(|&v| Target::color(v, i)));
    let placed: Vec<(usize, Target)> = targets
        .iter()
        .map(|t| {
            (
                if t.vertex == 0 {
                    0
                } else if t.vertex <= r {
                    1
                } else {
                    2
                },
                *t,
            )
        })
        .collect();
    let tree = tree_for(r, &placed)?;
    let plan = Plan::new(&tree, &targets, i, Pruning::PathBound)?;
    if plan.assignments() > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            assignments: plan.assignments(),
            budget: ENUMERATION_BUDGET,
        });
    }
    let root = plan.local(0);
    let l1: Vec<usize> = b1.iter().map(|&v| plan.local(v)).collect();
    let l2: Vec<usize> = b2.iter().map(|&v| plan.local(v)).collect();
    let width = 4usize.pow(b1.len() as u32);
    let code = |s: &Snapshot<'_>, vs: &[usize]| {
        vs.iter()
            .fold(0, |acc, &v| acc * 4 + color_index(s.color(v, i)))
    };
    let m = enumerate_exact(&plan, p0, p, 1 + width * width, |s| {
        if s.color(root, i) != Color::White {
            0
        } else {
            1 + code(s, &l1) * width + code(s, &l2)
        }
    })?;

    let white: f64 = m.mass[1..].iter().sum();
    if white == 0.0 {
        return Ok(IndependenceResult {
            max_discrepancy: 0.0,
            pairs_checked: 0,
            branch_depth: depth,
            assignments: m.assignments,
            skipped: true,
        });
    }
    let joint = |a: usize, b: usize| m.mass[1 + a * width + b] / white;
    let first: Vec<f64> = (0..width)
        .map(|a| (0..width).map(|b| joint(a, b)).sum())
        .collect();
    let second: Vec<f64> = (0..width)
        .map(|b| (0..width).map(|a| joint(a, b)).sum())
        .collect();
    let mut max_discrepancy: f64 = 0.0;
    let mut pairs_checked = 0;
    for a in (0..width).filter(|&a| first[a] > 0.0) {
        for b in (0..width).filter(|&b| second[b] > 0.0) {
            max_discrepancy = max_discrepancy.max((joint(a, b) - first[a] * second[b]).abs());
            pairs_checked += 1;
        }
    }
    Ok(IndependenceResult {
        max_discrepancy,
        pairs_checked,
        branch_depth: depth,
        assignments: m.assignments,
        skipped: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub r: usize,
    pub i: u32,
    pub p0: f64,
    pub p: f64,
    pub method: Method,
    /// Set when an exact run was over budget and sampling was used instead.
    pub fallback: bool,
    pub assignments: u64,
    pub samples: u64,
    pub seed: u64,
    pub max_error: f64,
    pub passed: bool,
    pub skipped: bool,
    pub items: Vec<CheckItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingOptions {
    pub samples: u64,
    pub seed: u64,
    /// Sample even when exact enumeration fits in the budget.
    pub force: bool,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            samples: 1_000_000,
            seed: 0,
            force: false,
        }
    }
}

struct Masses {
    masses: CellMasses,
    fallback: bool,
}

fn run_plan(
    plan: &Plan,
    p0: f64,
    p: f64,
    cells: usize,
    sampling: &SamplingOptions,
    observe: impl FnMut(&Snapshot<'_>) -> usize,
) -> Result<Masses> {
    let over = plan.assignments() > ENUMERATION_BUDGET;
    if sampling.force || over {
        let masses = sample_cells(plan, p0, p, cells, sampling.samples, sampling.seed, observe)?;
        Ok(Masses {
            masses,
            fallback: over && !sampling.force,
        })
    } else {
        Ok(Masses {
            masses: enumerate_exact(plan, p0, p, cells, observe)?,
            fallback: false,
        })
    }
}

fn report(
    check: &str,
    spec: &EnumerationSpec,
    m: &Masses,
    sampling: &SamplingOptions,
    items: Vec<CheckItem>,
) -> CheckReport {
    let skipped = items.is_empty();
    CheckReport {
        check: check.to_string(),
        r: spec.r,
        i: spec.i,
        p0: spec.p0,
        p: spec.p,
        method: m.masses.method,
        fallback: m.fallback,
        assignments: m.masses.assignments as u64,
        samples: m.masses.samples,
        seed: if m.masses.method == Method::MonteCarlo {
            sampling.seed
        } else {
            0
        },
        max_error: items.iter().map(|it| it.error).fold(0.0, f64::max),
        passed: items.iter().all(|it| it.passed),
        skipped,
        items,
    }
}

/// Compares an (exact or sampled) conditional probability with a formula.
fn conditional_item(
    name: String,
    m: &CellMasses,
    condition: impl Fn(usize) -> bool + Copy,
    event: impl Fn(usize) -> bool,
    expected: f64,
) -> Option<CheckItem> {
    match m.method {
        Method::Exact => {
            let denom = m.prob(condition);
            (denom > 0.0).then(|| {
                CheckItem::exact(
                    name,
                    m.prob(|c| condition(c) && event(c)) / denom,
                    expected,
                    EXACT_TOLERANCE,
                )
            })
        }
        Method::MonteCarlo => {
            let n = m.count(condition);
            (n > 0).then(|| {
                let k = m.count(|c| condition(c) && event(c));
                let est = Estimate::from_count(k, n);
                let se = (expected * (1.0 - expected) / n as f64).sqrt();
                CheckItem::statistical(name, est.value, expected, se)
            })
        }
    }
}

/// Previous-step densities from the exact recurrence.
fn previous_state(spec: &EnumerationSpec) -> Result<KineticState> {
    if spec.i == 0 {
        return Err(Error::invalid("transition checks need i >= 1"));
    }
    if spec.p0 >= 1.0 {
        return Err(Error::invalid("transition checks need p0 < 1"));
    }
    Ok(*iterate(
        spec.r,
        spec.p0,
        spec.p,
        spec.i as usize - 1,
        StepMode::Exact,
    )?
    .last())
}

/// Root densities at `i = 0` (and the edge densities) against the closed form.
pub fn check_initial(r: usize, p0: f64) -> Result<CheckReport> {
    let spec = EnumerationSpec {
        r,
        i: 0,
        p0,
        p: 0.0,
        mode: Mode::SingleVertex,
    };
    let expected = initial_state(r, p0)?;
    let single = exact_single(&spec)?;
    let pair = exact_pair(&EnumerationSpec {
        mode: Mode::Pair,
        ..spec
    })?;
    let tol = 1e-15;
    let items = vec![
        CheckItem::exact("w0", single.w, expected.w, tol),
        CheckItem::exact("b0", single.b, expected.b, tol),
        CheckItem::exact("q0", pair[0], expected.q, tol),
        CheckItem::exact("s0", pair[1], expected.s, tol),
        CheckItem::exact("t0", pair[2], expected.t, tol),
    ];
    let m = Masses {
        masses: CellMasses {
            method: Method::Exact,
            mass: vec![],
            counts: vec![],
            samples: 0,
            assignments: single.assignments,
        },
        fallback: false,
    };
    Ok(report(
        "initial",
        &spec,
        &m,
        &SamplingOptions::default(),
        items,
    ))
}

/// Oracle densities at time `i` against `i` exact recurrence steps.
pub fn check_step(
    r: usize,
    i: u32,
    p0: f64,
    p: f64,
    sampling: &SamplingOptions,
) -> Result<CheckReport> {
    let spec = EnumerationSpec {
        r,
        i,
        p0,
        p,
        mode: Mode::SingleVertex,
    };
    spec.validate()?;
    let expected = *iterate(r, p0, p, i as usize, StepMode::Exact)?.last();

    let target = Target::color(0, i);
    let tree = tree_for(r, &[(0, target)])?;
    let plan = Plan::new(&tree, &[target], i, Pruning::PathBound)?;
    let root = plan.local(0);
    let single = run_plan(&plan, p0, p, 4, sampling, |s| color_index(s.color(root, i)))?;

    let pair_targets = [Target::color(PAIR_U, i), Target::color(PAIR_V, i)];
    let pplan = pair_plan(r, &pair_targets, i)?;
    let (u, v) = (pplan.local(PAIR_U), pplan.local(PAIR_V));
    let pair = run_plan(&pplan, p0, p, 16, sampling, |s| pair_cell(s, u, v, i))?;

    let item = |name: &str, m: &CellMasses, cell: usize, expected: f64| match m.method {
        Method::Exact => CheckItem::exact(name, m.mass[cell], expected, EXACT_TOLERANCE),
        Method::MonteCarlo => {
            let est = Estimate::from_count(m.counts[cell], m.samples);
            let se = (expected * (1.0 - expected) / m.samples as f64).sqrt();
            CheckItem::statistical(name, est.value, expected, se)
        }
    };
    let items = vec![
        item("w", &single.masses, WHITE, expected.w),
        item("b", &single.masses, BLUE, expected.b),
        item("q", &pair.masses, WHITE * 4 + WHITE, expected.q),
        item("s", &pair.masses, BLUE * 4 + WHITE, expected.s),
        item("t", &pair.masses, BLUE * 4 + BLUE, expected.t),
    ];
    let combined = Masses {
        masses: CellMasses {
            assignments: single.masses.assignments + pair.masses.assignments,
            ..single.masses.clone()
        },
        fallback: single.fallback || pair.fallback,
    };
    Ok(report("step", &spec, &combined, sampling, items))
}

/// Given the root is white at `i - 1`, the
/// events "neighbour `j` does not activate at step `i`" are independent
/// across every subset of neighbours.
pub fn factorization_check_cor41(
    r: usize,
    i: u32,
    p0: f64,
    p: f64,
    sampling: &SamplingOptions,
) -> Result<CheckReport> {
    let spec = EnumerationSpec {
        r,
        i,
        p0,
        p,
        mode: Mode::SingleVertex,
    };
    spec.validate()?;
    if i == 0 {
        return Err(Error::invalid("the factorization check needs i >= 1"));
    }
    let mut targets = vec![Target::color(0, i - 1)];
    for j in 1..=r {
        targets.push(Target::activated(j, i));
        targets.push(Target::activated(j, i - 1));
    }
    let placed: Vec<(usize, Target)> = targets
        .iter()
        .map(|t| (usize::from(t.vertex != 0), *t))
        .collect();
    let tree = tree_for(r, &placed)?;
    let plan = Plan::new(&tree, &targets, i, Pruning::PathBound)?;
    let root = plan.local(0);
    let nbrs: Vec<usize> = (1..=r).map(|j| plan.local(j)).collect();
    let m = run_plan(&plan, p0, p, 1 + (1 << r), sampling, |s| {
        if s.color(root, i - 1) != Color::White {
            return 0;
        }
        1 + nbrs
            .iter()
            .enumerate()
            .filter(|&(_, &v)| s.activated(v, i) && !s.activated(v, i - 1))
            .fold(0, |acc, (j, _)| acc | (1 << j))
    })?;

    let cond = |c: usize| c >= 1;
    let none_fire = |set: usize| move |c: usize| c >= 1 && (c - 1) & set == 0;
    let mut items = Vec::new();
    let white = match m.masses.method {
        Method::Exact => m.masses.prob(cond),
        Method::MonteCarlo => m.masses.count(cond) as f64,
    };
    if white > 0.0 {
        let single: Vec<f64> = (0..r)
            .map(|j| match m.masses.method {
                Method::Exact => m.masses.prob(none_fire(1 << j)) / white,
                Method::MonteCarlo => m.masses.count(none_fire(1 << j)) as f64 / white,
            })
            .collect();
        for set in 1usize..(1 << r) {
            let product: f64 = (0..r)
                .filter(|j| set & (1 << j) != 0)
                .map(|j| single[j])
                .product();
            let name = format!("J={set:0width$b}", width = r);
            items.extend(conditional_item(
                name,
                &m.masses,
                cond,
                |c| (c - 1) & set == 0,
                product,
            ));
        }
    }
    Ok(report("cor41", &spec, &m, sampling, items))
}

/// White→white and white→blue transition probabilities of the root.
pub fn check_cor42(
    r: usize,
    i: u32,
    p0: f64,
    p: f64,
    sampling: &SamplingOptions,
) -> Result<CheckReport> {
    let spec = EnumerationSpec {
        r,
        i,
        p0,
        p,
        mode: Mode::SingleVertex,
    };
    spec.validate()?;
    let prev = previous_state(&spec)?;
    let rf = r as f64;
    let hit = p * prev.s / prev.w;
    let stay = (1.0 - hit).powi(r as i32);
    let to_blue = rf * hit * (1.0 - hit).powi(r as i32 - 1);
    let m = root_transitions(&spec, sampling)?;
    let cond = |c: usize| c / 4 == WHITE;
    let mut items = Vec::new();
    items.extend(conditional_item(
        "white->white".into(),
        &m.masses,
        cond,
        |c| c % 4 == WHITE,
        stay,
    ));
    items.extend(conditional_item(
        "white->blue".into(),
        &m.masses,
        cond,
        |c| c % 4 == BLUE,
        to_blue,
    ));
    Ok(report("cor42", &spec, &m, sampling, items))
}

/// Blue→blue transition probability of the root.
pub fn check_cor43(
    r: usize,
    i: u32,
    p0: f64,
    p: f64,
    sampling: &SamplingOptions,
) -> Result<CheckReport> {
    let spec = EnumerationSpec {
        r,
        i,
        p0,
        p,
        mode: Mode::SingleVertex,
    };
    spec.validate()?;
    let prev = previous_state(&spec)?;
    let rf = r as f64;
    let expected = (1.0 - p) * (1.0 - rf * p * prev.t / ((rf - 1.0) * prev.b)).powi(r as i32 - 1);
    let m = root_transitions(&spec, sampling)?;
    let items: Vec<CheckItem> = conditional_item(
        "blue->blue".into(),
        &m.masses,
        |c| c / 4 == BLUE,
        |c| c % 4 == BLUE,
        expected,
    )
    .into_iter()
    .collect();
    Ok(report("cor43", &spec, &m, sampling, items))
}

fn root_transitions(spec: &EnumerationSpec, sampling: &SamplingOptions) -> Result<Masses> {
    let i = spec.i;
    let targets = [Target::color(0, i - 1), Target::color(0, i)];
    let tree = tree_for(spec.r, &[(0, targets[0]), (0, targets[1])])?;
    let plan = Plan::new(&tree, &targets, i, Pruning::PathBound)?;
    let root = plan.local(0);
    run_plan(&plan, spec.p0, spec.p, 16, sampling, |s| {
        color_index(s.color(root, i - 1)) * 4 + color_index(s.color(root, i))
    })
}

/// The six edge-state transitions between steps `i - 1` and `i`.
pub fn check_cor44(
    r: usize,
    i: u32,
    p0: f64,
    p: f64,
    sampling: &SamplingOptions,
) -> Result<CheckReport> {
    let spec = EnumerationSpec {
        r,
        i,
        p0,
        p,
        mode: Mode::Pair,
    };
    spec.validate()?;
    let prev = previous_state(&spec)?;
    let rf = r as f64;
    let ri = r as i32;
    let hit = p * prev.s / prev.w;
    let blue_hit = rf * p * prev.t / ((rf - 1.0) * prev.b);
    let (sw, sb) = (1.0 - hit, 1.0 - blue_hit);

    let targets = [
        Target::color(PAIR_U, i - 1),
        Target::color(PAIR_V, i - 1),
        Target::color(PAIR_U, i),
        Target::color(PAIR_V, i),
    ];
    let plan = pair_plan(r, &targets, i)?;
    let (u, v) = (plan.local(PAIR_U), plan.local(PAIR_V));
    let m = run_plan(&plan, p0, p, 256, sampling, |s| {
        pair_cell(s, u, v, i - 1) * 16 + pair_cell(s, u, v, i)
    })?;

    let state = |cu: usize, cv: usize| cu * 4 + cv;
    let cases = [
        (
            "WW->WW",
            state(WHITE, WHITE),
            state(WHITE, WHITE),
            sw.powi(2 * ri - 2),
        ),
        (
            "WW->WB",
            state(WHITE, WHITE),
            state(WHITE, BLUE),
            (rf - 1.0) * hit * sw.powi(2 * ri - 3),
        ),
        (
            "WW->BB",
            state(WHITE, WHITE),
            state(BLUE, BLUE),
            (rf - 1.0).powi(2) * hit * hit * sw.powi(2 * ri - 4),
        ),
        (
            "WB->WB",
            state(WHITE, BLUE),
            state(WHITE, BLUE),
            (1.0 - p) * sw.powi(ri - 1) * sb.powi(ri - 2),
        ),
        (
            "WB->BB",
            state(WHITE, BLUE),
            state(BLUE, BLUE),
            (rf - 1.0) * (1.0 - p) * hit * sw.powi(ri - 2) * sb.powi(ri - 2),
        ),
        (
            "BB->BB",
            state(BLUE, BLUE),
            state(BLUE, BLUE),
            (1.0 - p).powi(2) * sb.powi(2 * ri - 4),
        ),
    ];
    let mut items = Vec::new();
    for (name, from, to, expected) in cases {
        items.extend(conditional_item(
            name.into(),
            &m.masses,
            |c| c / 16 == from,
            |c| c % 16 == to,
            expected,
        ));
    }
    Ok(report("cor44", &spec, &m, sampling, items))
}

/// Wraps [`independence_check`] as a pass/fail report.
pub fn check_independence(r: usize, i: u32, p0: f64, p: f64) -> Result<CheckReport> {
    let spec = EnumerationSpec {
        r,
        i,
        p0,
        p,
        mode: Mode::SingleVertex,
    };
    let res = independence_check(r, i, p0, p)?;
    let items = if res.skipped {
        Vec::new()
    } else {
        vec![CheckItem {
            name: format!(
                "branches 1,2 depth {} ({} pairs)",
                res.branch_depth, res.pairs_checked
            ),
            measured: res.max_discrepancy,
            expected: 0.0,
            error: res.max_discrepancy,
            std_error: None,
            passed: res.max_discrepancy <= EXACT_TOLERANCE,
        }]
    };
    let m = Masses {
        masses: CellMasses {
            method: Method::Exact,
            mass: vec![],
            counts: vec![],
            samples: 0,
            assignments: res.assignments,
        },
        fallback: false,
    };
    Ok(report(
        "independence",
        &spec,
        &m,
        &SamplingOptions::default(),
        items,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::step_exact;

    fn single(r: usize, i: u32, p0: f64, p: f64) -> EnumerationSpec {
        EnumerationSpec {
            r,
            i,
            p0,
            p,
            mode: Mode::SingleVertex,
        }
    }

    #[test]
    fn pairwise_sum_matches_exact_total() {
        let mut s = PairwiseSum::default();
        for k in 0..1000 {
            s.add(k as f64);
        }
        assert_eq!(s.total(), 499_500.0);
    }

    #[test]
    fn time_zero_matches_closed_form() {
        for (r, p0) in [(3, 0.2), (4, 0.37), (6, 0.05)] {
            let got = exact_single(&single(r, 0, p0, 0.3)).unwrap();
            let want = initial_state(r, p0).unwrap();
            assert!((got.w - want.w).abs() <= 1e-15);
            assert!((got.b - want.b).abs() <= 1e-15);
        }
    }

    #[test]
    fn one_step_matches_recurrence() {
        let got = exact_single(&single(3, 1, 0.2, 0.1)).unwrap();
        let want = step_exact(&initial_state(3, 0.2).unwrap(), 3, 0.1).unwrap();
        assert!((got.w - want.w).abs() <= 1e-12);
        assert!((got.b - want.b).abs() <= 1e-12);
    }

    #[test]
    fn pruned_and_full_ball_agree() {
        let spec = single(3, 1, 0.2, 0.1);
        let full = exact_single_with(&spec, Pruning::Ball).unwrap();
        let pruned = exact_single_with(&spec, Pruning::PathBound).unwrap();
        assert_eq!(full.assignments, 4f64.powi(10));
        assert!(pruned.assignments < full.assignments);
        assert!((full.w - pruned.w).abs() < 1e-13);
        assert!((full.b - pruned.b).abs() < 1e-13);
    }

    #[test]
    fn zero_growth_freezes_densities() {
        let at0 = exact_single(&single(3, 0, 0.25, 0.0)).unwrap();
        let at1 = exact_single(&single(3, 1, 0.25, 0.0)).unwrap();
        assert!((at0.w - at1.w).abs() < 1e-15 && (at0.b - at1.b).abs() < 1e-15);
    }

    #[test]
    fn homogeneity_on_a_big_tree() {
        let (tree, root) = truncated_tree(3, 4).unwrap();
        let at_root = exact_vertex_colors(&tree, root, 1, 0.2, 0.3).unwrap();
        // vertex 1 is a child of the root; its radius-2 ball is still complete
        let at_child = exact_vertex_colors(&tree, 1, 1, 0.2, 0.3).unwrap();
        for k in 0..4 {
            assert!((at_root[k] - at_child[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn monte_carlo_pair_at_time_zero() {
        let spec = EnumerationSpec {
            r: 3,
            i: 0,
            p0: 0.2,
            p: 0.1,
            mode: Mode::Pair,
        };
        let est = mc_pair(&spec, 200_000, 11).unwrap();
        let want = initial_state(3, 0.2).unwrap();
        assert!(est.q.z_score(want.q, est.samples) < 4.0);
        assert!(est.s.z_score(want.s, est.samples) < 4.0);
        assert!(est.t.z_score(want.t, est.samples) < 4.0);
        assert!(mc_pair(&spec, 0, 1).is_err());
        assert_eq!(
            mc_pair(&spec, 1000, 5).unwrap(),
            mc_pair(&spec, 1000, 5).unwrap()
        );
    }

    #[test]
    fn exact_pair_at_one_step() {
        let spec = EnumerationSpec {
            r: 3,
            i: 1,
            p0: 0.2,
            p: 0.1,
            mode: Mode::Pair,
        };
        let got = exact_pair(&spec).unwrap();
        let want = step_exact(&initial_state(3, 0.2).unwrap(), 3, 0.1).unwrap();
        assert!((got[0] - want.q).abs() < 1e-12);
        assert!((got[1] - want.s).abs() < 1e-12);
        assert!((got[2] - want.t).abs() < 1e-12);
    }

    #[test]
    fn independence_at_time_zero() {
        let res = independence_check(3, 0, 0.2, 0.1).unwrap();
        assert_eq!(res.branch_depth, 2);
        assert!(res.pairs_checked >= 20);
        assert!(res.max_discrepancy < 1e-12);
        assert!(!res.skipped);
    }

    #[test]
    fn independence_skips_impossible_condition() {
        let res = independence_check(3, 0, 1.0, 0.1).unwrap();
        assert!(res.skipped);
        let rep = check_independence(3, 0, 1.0, 0.1).unwrap();
        assert!(rep.skipped && rep.items.is_empty());
    }

    #[test]
    fn factorization_single_set_is_identity() {
        let rep = factorization_check_cor41(3, 1, 0.2, 0.1, &SamplingOptions::default()).unwrap();
        assert_eq!(rep.items.len(), 7);
        for item in rep
            .items
            .iter()
            .filter(|it| it.name.matches('1').count() == 1)
        {
            assert_eq!(item.error, 0.0);
        }
        assert!(rep.passed, "{rep:?}");
        assert!(factorization_check_cor41(3, 0, 0.2, 0.1, &SamplingOptions::default()).is_err());
    }

    #[test]
    fn transition_checks_at_one_step() {
        let exact = SamplingOptions::default();
        for check in [check_cor42, check_cor43, check_cor44] {
            let rep = check(3, 1, 0.2, 0.1, &exact).unwrap();
            assert_eq!(rep.method, Method::Exact);
            assert!(rep.passed, "{rep:?}");
            assert!(rep.max_error < 1e-12);
        }
        assert_eq!(check_cor44(3, 1, 0.2, 0.1, &exact).unwrap().items.len(), 6);
    }

    #[test]
    fn over_budget_plans_fall_back_to_sampling() {
        let sampling = SamplingOptions {
            samples: 20_000,
            seed: 3,
            force: false,
        };
        let rep = factorization_check_cor41(3, 2, 0.2, 0.1, &sampling).unwrap();
        assert_eq!(rep.method, Method::MonteCarlo);
        assert!(rep.fallback);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn branch_indexing() {
        // r = 3: depth-1 vertices 1..=3, depth-2 vertices 4..=9
        assert_eq!(branch_vertices(3, 0, 2), vec![1, 4, 5]);
        assert_eq!(branch_vertices(3, 2, 2), vec![3, 8, 9]);
        assert_eq!(
            branch_vertices(4, 1, 3),
            vec![2, 8, 9, 10, 26, 27, 28, 29, 30, 31, 32, 33, 34]
        );
    }
}
