//! Seeded generation of routing problems and their oracle-ranked ordering
//! tables, stored as JSON Lines.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureMode};
use crate::grid::{Capacities, GridGraph, Pin, Vertex};
use crate::learn::LabeledExample;
use crate::ordering::{optimal_index, rank_orderings, RankedOrdering, MAX_RANKED_NETS};
use crate::route::{route_all, CompressedSolution, Router, RoutingTree};

pub const DATASET_VERSION: u32 = 1;

/// Resampling attempts per group before giving up.
pub const MAX_RETRIES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSize {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetParams {
    pub router: Router,
    pub layers: usize,
    pub n_nets: usize,
    pub feature_mode: FeatureMode,
    pub groups: usize,
    pub grid: GridSize,
    pub pins_per_layer: usize,
    pub capacities: Capacities,
    pub seed: u64,
}

impl DatasetParams {
    /// A 5x5 grid with 15 pins per layer and default capacities.
    pub fn new(router: Router, layers: usize, n_nets: usize, feature_mode: FeatureMode, groups: usize, seed: u64) -> Self {
        Self {
            router,
            layers,
            n_nets,
            feature_mode,
            groups,
            grid: GridSize { width: 5, height: 5 },
            pins_per_layer: 15,
            capacities: Capacities::default_for(5, 5),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.grid.width * self.grid.height;
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if cells == 0 || self.layers == 0 {
            return fail("grid and layer count must be nonzero".into());
        }
        if self.pins_per_layer > cells {
            return fail(format!("{} pins per layer do not fit in {cells} cells", self.pins_per_layer));
        }
        if self.n_nets == 0 || self.n_nets > self.pins_per_layer {
            return fail(format!("net count {} must be in 1..={}", self.n_nets, self.pins_per_layer));
        }
        if self.n_nets > MAX_RANKED_NETS {
            return Err(Error::TooManyNets(self.n_nets, crate::ordering::factorial(self.n_nets) as u64));
        }
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format_version: DATASET_VERSION,
            router: self.router,
            k: self.layers,
            n_nets: self.n_nets,
            feature_mode: self.feature_mode,
            grid: self.grid,
            pins_per_layer: self.pins_per_layer,
            capacities: self.capacities,
            seed: self.seed,
            n: self.groups,
        }
    }
}

/// First line of a dataset file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub router: Router,
    pub k: usize,
    pub n_nets: usize,
    pub feature_mode: FeatureMode,
    pub grid: GridSize,
    pub pins_per_layer: usize,
    pub capacities: Capacities,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl DatasetHeader {
    pub fn params(&self) -> DatasetParams {
        DatasetParams {
            router: self.router,
            layers: self.k,
            n_nets: self.n_nets,
            feature_mode: self.feature_mode,
            groups: self.n,
            grid: self.grid,
            pins_per_layer: self.pins_per_layer,
            capacities: self.capacities,
            seed: self.seed,
        }
    }
}

/// A routing instance: grid shape and pins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub width: usize,
    pub height: usize,
    pub layers: usize,
    pub pins: Vec<Pin>,
}

impl Problem {
    pub fn grid(&self, capacities: Capacities) -> Result<GridGraph> {
        let mut g = GridGraph::new(self.width, self.height, self.layers, capacities)?;
        g.add_pins(self.pins.iter().copied())?;
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataGroup {
    pub problem: Problem,
    /// Compressed-grid trees in net order.
    pub trees: Vec<RoutingTree>,
    pub features: Vec<f64>,
    /// One row per permutation, in permutation-index order.
    pub ordering_table: Vec<RankedOrdering>,
    pub optimal_index: usize,
}

impl DataGroup {
    pub fn example(&self) -> LabeledExample {
        LabeledExample { features: self.features.clone(), optimal: self.optimal_index }
    }
}

/// Generator for group `index`: the dataset seed picks the key, the group
/// index the stream.
pub fn group_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn nets_are_routable(pins: &[Pin], n_nets: usize) -> bool {
    let mut columns = vec![Vec::new(); n_nets];
    for p in pins {
        columns[p.net].push((p.x, p.y));
    }
    columns.iter_mut().all(|c| {
        c.sort_unstable();
        c.dedup();
        c.len() >= 2
    })
}

/// Samples distinct pin vertices per layer and assigns each a uniform net,
/// resampling until every net spans at least two compressed columns.
pub fn gen_problem(params: &DatasetParams, index: usize) -> Result<Problem> {
    params.validate()?;
    let mut rng = group_rng(params.seed, index);
    let (w, h) = (params.grid.width, params.grid.height);
    for _ in 0..MAX_RETRIES {
        let mut pins = Vec::with_capacity(params.layers * params.pins_per_layer);
        for layer in 0..params.layers {
            let mut cells = sample(&mut rng, w * h, params.pins_per_layer).into_vec();
            cells.sort_unstable();
            for c in cells {
                let net = rng.gen_range(0..params.n_nets);
                pins.push(Pin::new(Vertex::new(c % w, c / w, layer), net));
            }
        }
        if nets_are_routable(&pins, params.n_nets) {
            return Ok(Problem { width: w, height: h, layers: params.layers, pins });
        }
    }
    Err(Error::GenerationFailed(index))
}

/// Routes a problem, computes its features and ranks every ordering.
pub fn label_problem(params: &DatasetParams, problem: Problem) -> Result<DataGroup> {
    let grid = problem.grid(params.capacities)?;
    let flat = grid.compress();
    let solution = route_all(&flat, &flat.nets(), params.router)?;
    let features = feature_vector(&grid, &flat, &solution, params.feature_mode)?.to_vec();
    let ordering_table = rank_orderings(&grid, &solution, true)?;
    let optimal_index = optimal_index(&ordering_table).ok_or_else(|| Error::Data("ordering table has no rank 1".into()))?;
    Ok(DataGroup { problem, trees: solution.trees, features, ordering_table, optimal_index })
}

pub fn gen_group(params: &DatasetParams, index: usize) -> Result<DataGroup> {
    label_problem(params, gen_problem(params, index)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub groups: Vec<DataGroup>,
}

impl Dataset {
    pub fn examples(&self) -> Vec<LabeledExample> {
        self.groups.iter().map(DataGroup::example).collect()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for g in &self.groups {
            serde_json::to_writer(&mut w, g)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Data("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first)?;
        if header.format_version != DATASET_VERSION {
            return Err(Error::Data(format!("unsupported dataset version {}", header.format_version)));
        }
        let mut groups = Vec::with_capacity(header.n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            groups.push(serde_json::from_str::<DataGroup>(&line)?);
        }
        if groups.len() != header.n {
            return Err(Error::Data(format!("header declares {} groups, file has {}", header.n, groups.len())));
        }
        let dim = header.feature_mode.dimension(header.n_nets);
        if let Some(g) = groups.iter().find(|g| g.features.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: g.features.len() });
        }
        Ok(Self { header, groups })
    }
}

/// Generates all groups in parallel; group `i` depends only on
/// `(params, i)`.
pub fn gen_dataset(params: &DatasetParams) -> Result<Dataset> {
    params.validate()?;
    let groups = (0..params.groups).into_par_iter().map(|i| gen_group(params, i)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { header: params.header(), groups })
}

/// The sixteen combinations of router, layer count, net count and feature
/// mode, numbered net count first, then layers, router and features.
pub fn paper_matrix(groups: usize, seed: u64) -> Vec<DatasetParams> {
    let mut out = Vec::with_capacity(16);
    for n_nets in [3, 5] {
        for layers in [2, 5] {
            for router in [Router::Ka, Router::St] {
                for mode in [FeatureMode::Full, FeatureMode::Reduced] {
                    out.push(DatasetParams::new(router, layers, n_nets, mode, groups, seed));
                }
            }
        }
    }
    out
}

/// Re-derives a stored group's solution from its trees.
pub fn stored_solution(group: &DataGroup, grid: &GridGraph) -> CompressedSolution {
    let flat = grid.compress();
    let mut demand = crate::grid::Demand::zeros(&flat);
    for t in &group.trees {
        for &e in &t.edges {
            demand.add(e, 1);
        }
    }
    CompressedSolution { trees: group.trees.clone(), demand }
}
