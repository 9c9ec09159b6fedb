//! Multilayer grid graph, pins, demand bookkeeping and layer compression.
//!
//! Vertices are identified by `(layer, y, x)` in that lexicographic order and
//! edges by `(kind, lower endpoint, direction)`. Every iteration order in the
//! crate derives from these two orderings, which keeps tie-breaks stable.
//! Layers are zero-based: a `k`-layer grid has layers `0..k`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense vertex index, `layer * width * height + y * width + x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub usize);

/// Dense edge index in canonical edge order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

/// A grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub x: usize,
    pub y: usize,
    pub layer: usize,
}

impl Vertex {
    pub fn new(x: usize, y: usize, layer: usize) -> Self {
        Self { x, y, layer }
    }

    /// The same column projected onto layer 0.
    pub fn compressed(self) -> Self {
        Self { layer: 0, ..self }
    }

    pub fn manhattan(self, other: Vertex) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    fn key(self) -> (usize, usize, usize) {
        (self.layer, self.y, self.x)
    }
}

impl PartialOrd for Vertex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Vertex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Edge direction, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Boundary edge towards `x + 1`.
    X,
    /// Boundary edge towards `y + 1`.
    Y,
    /// Via edge towards `layer + 1`.
    Via,
}

impl Direction {
    pub fn is_via(self) -> bool {
        self == Direction::Via
    }
}

/// Per-edge capacity and wirelength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    pub capacity: u32,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct EdgeInfo {
    lower: VertexId,
    upper: VertexId,
    dir: Direction,
    state: EdgeState,
}

/// A pin of net `net` sitting on a grid vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pin {
    pub x: usize,
    pub y: usize,
    pub layer: usize,
    pub net: usize,
}

impl Pin {
    pub fn new(vertex: Vertex, net: usize) -> Self {
        Self { x: vertex.x, y: vertex.y, layer: vertex.layer, net }
    }

    pub fn vertex(&self) -> Vertex {
        Vertex::new(self.x, self.y, self.layer)
    }
}

/// All pins belonging to one net.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Net {
    pub id: usize,
    pub pins: Vec<Pin>,
}

impl Net {
    /// Distinct compressed positions, in canonical order.
    pub fn compressed_positions(&self) -> Vec<Vertex> {
        let mut positions: Vec<Vertex> = self.pins.iter().map(|p| p.vertex().compressed()).collect();
        positions.sort();
        positions.dedup();
        positions
    }
}

/// Edge capacities used when building a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacities {
    pub boundary: u32,
    pub via: u32,
}

impl Capacities {
    /// Boundary capacity 2 per layer, via capacity `width * height`.
    pub fn default_for(width: usize, height: usize) -> Self {
        Self { boundary: 2, via: (width * height) as u32 }
    }
}

/// A `width x height x layers` routing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGraph {
    width: usize,
    height: usize,
    layers: usize,
    edges: Vec<EdgeInfo>,
    /// Outgoing edge per vertex, indexed by `Direction as usize`.
    forward: Vec<[Option<EdgeId>; 3]>,
    pins: Vec<Pin>,
}

impl GridGraph {
    /// Builds a grid with unit edge lengths and no pins.
    pub fn new(width: usize, height: usize, layers: usize, caps: Capacities) -> Result<Self> {
        Self::with_via_length(width, height, layers, caps, 1.0)
    }

    pub fn with_via_length(
        width: usize,
        height: usize,
        layers: usize,
        caps: Capacities,
        via_length: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 || layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {width}x{height}x{layers}"
            )));
        }
        if !(via_length > 0.0 && via_length.is_finite()) {
            return Err(Error::InvalidArgument(format!("via length must be positive, got {via_length}")));
        }
        let n_vertices = width * height * layers;
        let mut grid = Self {
            width,
            height,
            layers,
            edges: Vec::new(),
            forward: vec![[None; 3]; n_vertices],
            pins: Vec::new(),
        };
        let boundary = EdgeState { capacity: caps.boundary, length: 1.0 };
        let via = EdgeState { capacity: caps.via, length: via_length };
        for id in 0..n_vertices {
            let v = grid.vertex(VertexId(id));
            if v.x + 1 < width {
                grid.push_edge(v, Vertex::new(v.x + 1, v.y, v.layer), Direction::X, boundary);
            }
            if v.y + 1 < height {
                grid.push_edge(v, Vertex::new(v.x, v.y + 1, v.layer), Direction::Y, boundary);
            }
        }
        for id in 0..n_vertices {
            let v = grid.vertex(VertexId(id));
            if v.layer + 1 < layers {
                grid.push_edge(v, Vertex::new(v.x, v.y, v.layer + 1), Direction::Via, via);
            }
        }
        Ok(grid)
    }

    fn push_edge(&mut self, lower: Vertex, upper: Vertex, dir: Direction, state: EdgeState) {
        let lower = self.vertex_id(lower);
        let upper = self.vertex_id(upper);
        let id = EdgeId(self.edges.len());
        self.edges.push(EdgeInfo { lower, upper, dir, state });
        self.forward[lower.0][dir as usize] = Some(id);
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn vertex_count(&self) -> usize {
        self.width * self.height * self.layers
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.dir.is_via()).count()
    }

    pub fn via_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.dir.is_via()).count()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.x < self.width && v.y < self.height && v.layer < self.layers
    }

    pub fn vertex_id(&self, v: Vertex) -> VertexId {
        debug_assert!(self.contains(v), "{v:?} outside grid");
        VertexId((v.layer * self.height + v.y) * self.width + v.x)
    }

    pub fn vertex(&self, id: VertexId) -> Vertex {
        let plane = self.width * self.height;
        let layer = id.0 / plane;
        let rest = id.0 % plane;
        Vertex::new(rest % self.width, rest / self.width, layer)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn edge(&self, id: EdgeId) -> &EdgeState {
        &self.edges[id.0].state
    }

    pub fn edge_direction(&self, id: EdgeId) -> Direction {
        self.edges[id.0].dir
    }

    /// The endpoints of an edge, lower canonical id first.
    pub fn endpoints(&self, id: EdgeId) -> (VertexId, VertexId) {
        let e = &self.edges[id.0];
        (e.lower, e.upper)
    }

    pub fn set_capacity(&mut self, id: EdgeId, capacity: u32) {
        self.edges[id.0].state.capacity = capacity;
    }

    /// The edge joining two adjacent vertices, if any.
    pub fn edge_between(&self, a: Vertex, b: Vertex) -> Option<EdgeId> {
        if !self.contains(a) || !self.contains(b) {
            return None;
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let same_column = hi.x == lo.x && hi.y == lo.y;
        let dir = if hi.layer == lo.layer && hi.y == lo.y && hi.x == lo.x + 1 {
            Direction::X
        } else if hi.layer == lo.layer && hi.x == lo.x && hi.y == lo.y + 1 {
            Direction::Y
        } else if same_column && hi.layer == lo.layer + 1 {
            Direction::Via
        } else {
            return None;
        };
        self.forward[self.vertex_id(lo).0][dir as usize]
    }

    /// Neighbours of a vertex in canonical edge order.
    pub fn neighbors(&self, v: Vertex) -> Vec<(Vertex, EdgeId)> {
        let mut out = Vec::with_capacity(6);
        let candidates = [
            v.x.checked_sub(1).map(|x| Vertex::new(x, v.y, v.layer)),
            Some(Vertex::new(v.x + 1, v.y, v.layer)),
            v.y.checked_sub(1).map(|y| Vertex::new(v.x, y, v.layer)),
            Some(Vertex::new(v.x, v.y + 1, v.layer)),
            v.layer.checked_sub(1).map(|l| Vertex::new(v.x, v.y, l)),
            Some(Vertex::new(v.x, v.y, v.layer + 1)),
        ];
        for w in candidates.into_iter().flatten() {
            if let Some(e) = self.edge_between(v, w) {
                out.push((w, e));
            }
        }
        out
    }

    pub fn pins(&self) -> &[Pin] {
        &self.pins
    }

    /// Adds pins after checking that they lie inside the grid.
    pub fn add_pins(&mut self, pins: impl IntoIterator<Item = Pin>) -> Result<()> {
        for pin in pins {
            if !self.contains(pin.vertex()) {
                return Err(Error::InvalidArgument(format!("pin {pin:?} lies outside the grid")));
            }
            self.pins.push(pin);
        }
        Ok(())
    }

    /// Number of nets, i.e. one past the highest net index carried by a pin.
    pub fn net_count(&self) -> usize {
        self.pins.iter().map(|p| p.net + 1).max().unwrap_or(0)
    }

    /// Pins grouped by net, in ascending net id; pins keep insertion order.
    pub fn nets(&self) -> Vec<Net> {
        let mut grouped: BTreeMap<usize, Vec<Pin>> = (0..self.net_count()).map(|n| (n, Vec::new())).collect();
        for pin in &self.pins {
            grouped.entry(pin.net).or_default().push(*pin);
        }
        grouped.into_iter().map(|(id, pins)| Net { id, pins }).collect()
    }

    /// Collapses all layers onto one.
    ///
    /// Each boundary edge of the result carries the summed capacity of its
    /// pre-images. Via edges vanish and every pin is projected onto layer 0,
    /// keeping duplicates so per-column multiplicities survive.
    pub fn compress(&self) -> GridGraph {
        let mut flat = GridGraph::new(self.width, self.height, 1, Capacities { boundary: 0, via: 0 })
            .expect("dimensions already validated");
        let mut summed = vec![0u32; flat.edge_count()];
        for e in &self.edges {
            if e.dir.is_via() {
                continue;
            }
            let lo = self.vertex(e.lower).compressed();
            let hi = self.vertex(e.upper).compressed();
            let target = flat.edge_between(lo, hi).expect("boundary edge has a compressed image");
            summed[target.0] += e.state.capacity;
        }
        for (edge, cap) in flat.edges.iter_mut().zip(summed) {
            edge.state.capacity = cap;
        }
        flat.pins = self.pins.iter().map(|p| Pin::new(p.vertex().compressed(), p.net)).collect();
        flat
    }
}

/// Per-edge demand, kept apart from the grid so that evaluations can own
/// their own copy.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Demand(Vec<u32>);

impl Demand {
    pub fn zeros(grid: &GridGraph) -> Self {
        Self(vec![0; grid.edge_count()])
    }

    pub fn from_vec(values: Vec<u32>) -> Self {
        Self(values)
    }

    pub fn get(&self, e: EdgeId) -> u32 {
        self.0[e.0]
    }

    pub fn add(&mut self, e: EdgeId, amount: u32) {
        self.0[e.0] += amount;
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Overflow of one edge under this demand.
    pub fn overflow(&self, grid: &GridGraph, e: EdgeId) -> u32 {
        edge_overflow(self.get(e), grid.edge(e).capacity)
    }

    /// Total and maximum overflow over every edge of `grid`.
    pub fn solution_overflow(&self, grid: &GridGraph) -> (u64, u32) {
        solution_overflow(grid.edge_ids().map(|e| (self.get(e), grid.edge(e).capacity)))
    }
}

/// Excess of demand over capacity, zero when within capacity.
pub fn edge_overflow(demand: u32, capacity: u32) -> u32 {
    demand.saturating_sub(capacity)
}

/// `(total, max)` overflow over `(demand, capacity)` pairs.
pub fn solution_overflow(edges: impl IntoIterator<Item = (u32, u32)>) -> (u64, u32) {
    edges.into_iter().fold((0, 0), |(total, max), (d, c)| {
        let o = edge_overflow(d, c);
        (total + o as u64, max.max(o))
    })
}
