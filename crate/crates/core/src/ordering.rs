//! Net orderings: heuristic and random producers, the optimality comparison
//! and the exhaustive oracle that ranks every permutation.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::{assign_ordered, AssignMode};
use crate::error::{Error, Result};
use crate::grid::{Demand, GridGraph};
use crate::route::{CompressedSolution, RoutingTree};

/// Largest net count the permutation oracle accepts.
pub const MAX_RANKED_NETS: usize = 8;

/// A permutation of net ids giving the layer assignment sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetOrdering(Vec<usize>);

impl NetOrdering {
    pub fn new(sequence: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; sequence.len()];
        for &m in &sequence {
            if m >= sequence.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidArgument(format!("{sequence:?} is not a permutation")));
            }
        }
        Ok(Self(sequence))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of this permutation in lexicographic enumeration (Lehmer
    /// code).
    pub fn index(&self) -> usize {
        let n = self.0.len();
        let mut index = 0;
        for i in 0..n {
            let smaller_later = self.0[i + 1..].iter().filter(|&&x| x < self.0[i]).count();
            index += smaller_later * factorial(n - 1 - i);
        }
        index
    }

    /// Inverse of [`NetOrdering::index`].
    pub fn from_index(n: usize, mut index: usize) -> Result<Self> {
        if index >= factorial(n) {
            return Err(Error::InvalidArgument(format!("index {index} out of range for {n} nets")));
        }
        let mut pool: Vec<usize> = (0..n).collect();
        let mut sequence = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let f = factorial(i);
            sequence.push(pool.remove(index / f));
            index %= f;
        }
        Ok(Self(sequence))
    }

    /// Every permutation of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Self> {
        (0..factorial(n)).map(|i| Self::from_index(n, i).expect("in range")).collect()
    }
}

impl fmt::Display for NetOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|m| m.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Outcome of assigning layers in one ordering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderingMetrics {
    pub total_overflow: u64,
    pub max_overflow: u32,
    pub wirelength: f64,
    pub runtime: f64,
    /// `wirelength * (1 + runtime)`.
    pub score: f64,
    /// 1 is best.
    pub rank: usize,
}

/// Orders two results by quality: `Less` means `a` is better.
///
/// Lower total overflow wins, then lower maximum overflow, then lower score.
pub fn compare_optimality(a: &OrderingMetrics, b: &OrderingMetrics) -> Ordering {
    a.total_overflow
        .cmp(&b.total_overflow)
        .then(a.max_overflow.cmp(&b.max_overflow))
        .then(a.score.total_cmp(&b.score))
}

/// Mean demand over mean capacity along a tree's edges.
pub fn avg_density(tree: &RoutingTree, demand: &Demand, grid: &GridGraph) -> Result<f64> {
    let d: u64 = tree.edges.iter().map(|&e| demand.get(e) as u64).sum();
    let c: u64 = tree.edges.iter().map(|&e| grid.edge(e).capacity as u64).sum();
    if c == 0 {
        return Err(Error::InvalidArgument(format!("net {} has zero total capacity", tree.net)));
    }
    Ok(d as f64 / c as f64)
}

/// Weights of the heuristic net score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1.0 }
    }
}

/// `alpha / wirelength + beta * pins + gamma * density`.
///
/// A tree without edges scores with wirelength 1 and density 0.
pub fn heuristic_score(wirelength: f64, pins: usize, density: f64, w: ScoreWeights) -> f64 {
    let (l, rho) = if wirelength > 0.0 { (wirelength, density) } else { (1.0, 0.0) };
    w.alpha / l + w.beta * pins as f64 + w.gamma * rho
}

/// Score of every tree in `solution`, in tree order.
///
/// `flat` is the compressed grid carrying the problem's projected pins; the
/// pin term counts distinct compressed pin columns.
pub fn tree_scores(solution: &CompressedSolution, flat: &GridGraph, w: ScoreWeights) -> Result<Vec<f64>> {
    let nets = flat.nets();
    solution
        .trees
        .iter()
        .map(|t| {
            let pins = nets.get(t.net).map(|n| n.compressed_positions().len()).unwrap_or(0);
            let density = if t.edges.is_empty() { 0.0 } else { avg_density(t, &solution.demand, flat)? };
            Ok(heuristic_score(t.wirelength(flat), pins, density, w))
        })
        .collect()
}

/// Sorts net ids by descending score, ties by ascending id.
pub fn order_by_scores(scores: &[f64]) -> NetOrdering {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    NetOrdering(ids)
}

pub fn heuristic_order(solution: &CompressedSolution, flat: &GridGraph, w: ScoreWeights) -> Result<NetOrdering> {
    let scores = tree_scores(solution, flat, w)?;
    let mut by_net = vec![0.0; scores.len()];
    for (t, s) in solution.trees.iter().zip(scores) {
        by_net[t.net] = s;
    }
    Ok(order_by_scores(&by_net))
}

/// A uniformly random permutation of `0..n` from a seeded generator.
pub fn random_order(n: usize, seed: u64) -> NetOrdering {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    NetOrdering(ids)
}

/// Like [`random_order`] but drawn from stream `stream` of the generator
/// keyed by `seed`, so each group of a dataset gets an independent draw.
pub fn random_order_in_stream(n: usize, seed: u64, stream: u64) -> NetOrdering {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    NetOrdering(ids)
}

/// One row of the oracle table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedOrdering {
    pub ordering: NetOrdering,
    pub metrics: OrderingMetrics,
}

/// Evaluates `ordering` in overflow-minimising mode.
pub fn evaluate_ordering(
    grid: &GridGraph,
    solution: &CompressedSolution,
    ordering: &NetOrdering,
    deterministic_time: bool,
) -> Result<OrderingMetrics> {
    let (_, m) = assign_ordered(grid, solution, ordering.as_slice(), AssignMode::OverflowMin)?;
    let runtime = if deterministic_time { 0.0 } else { m.runtime };
    Ok(OrderingMetrics {
        total_overflow: m.total_overflow,
        max_overflow: m.max_overflow,
        wirelength: m.wirelength,
        runtime,
        score: m.wirelength * (1.0 + runtime),
        rank: 0,
    })
}

/// Evaluates every permutation and ranks them.
///
/// The table is returned in lexicographic permutation order. Ranks follow
/// [`compare_optimality`], with remaining ties going to the lexicographically
/// smaller permutation. `grid` is the full grid carrying the pins.
pub fn rank_orderings(
    grid: &GridGraph,
    solution: &CompressedSolution,
    deterministic_time: bool,
) -> Result<Vec<RankedOrdering>> {
    let n = solution.trees.len();
    if n > MAX_RANKED_NETS {
        return Err(Error::TooManyNets(n, factorial(n) as u64));
    }
    let mut table = NetOrdering::all(n)
        .into_iter()
        .map(|ordering| {
            let metrics = evaluate_ordering(grid, solution, &ordering, deterministic_time)?;
            Ok(RankedOrdering { ordering, metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_quality: Vec<usize> = (0..table.len()).collect();
    by_quality.sort_by(|&a, &b| compare_optimality(&table[a].metrics, &table[b].metrics).then(a.cmp(&b)));
    for (rank, idx) in by_quality.into_iter().enumerate() {
        table[idx].metrics.rank = rank + 1;
    }
    Ok(table)
}

/// Index of the rank-1 row.
pub fn optimal_index(table: &[RankedOrdering]) -> Option<usize> {
    table.iter().position(|r| r.metrics.rank == 1)
}
