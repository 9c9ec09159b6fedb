//! Single-net optimal layer assignment and sequential assignment of a whole
//! compressed solution.
//!
//! A compressed vertex id equals the id of the same column on layer 0 of the
//! full grid, and likewise for boundary edges, so trees routed on the
//! compressed grid index straight into the full grid's layer 0.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Demand, EdgeId, GridGraph, Pin, Vertex, VertexId};
use crate::route::{CompressedSolution, DisjointSet, RoutingTree};

/// Cost of one unit of overflow in [`AssignMode::OverflowMin`]; dominates any
/// via count reachable on the grids this crate targets.
pub const OVERFLOW_PENALTY: u64 = 1_000_000;

const INFEASIBLE: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMode {
    /// Only zero-overflow layer choices are admitted.
    Strict,
    /// Overflowing choices cost [`OVERFLOW_PENALTY`] per unit.
    OverflowMin,
}

/// A routing tree with edges directed away from a root pin column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrientedTree {
    pub root: VertexId,
    /// Children of every vertex in canonical order; leaves map to empty lists.
    pub children: BTreeMap<VertexId, Vec<VertexId>>,
    pub parent: BTreeMap<VertexId, VertexId>,
}

impl OrientedTree {
    /// Vertices with every child listed before its parent.
    pub fn post_order(&self) -> Vec<VertexId> {
        let mut order = self.pre_order();
        order.reverse();
        order
    }

    /// Breadth-first order from the root.
    pub fn pre_order(&self) -> Vec<VertexId> {
        let mut order = Vec::with_capacity(self.children.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(self.children[&v].iter().copied());
        }
        order
    }
}

/// Directs `tree` away from `root`.
pub fn orient(tree: &RoutingTree, grid: &GridGraph, root: VertexId) -> Result<OrientedTree> {
    if !tree.vertices.contains(&root) {
        return Err(Error::InvalidArgument(format!("root {root:?} is not a vertex of net {}", tree.net)));
    }
    let adj = tree.adjacency(grid);
    let mut children: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    let mut parent = BTreeMap::new();
    let mut queue = VecDeque::from([root]);
    children.insert(root, Vec::new());
    while let Some(v) = queue.pop_front() {
        for &w in &adj[&v] {
            if w == root || parent.contains_key(&w) {
                continue;
            }
            parent.insert(w, v);
            children.insert(w, Vec::new());
            children.get_mut(&v).expect("visited").push(w);
            queue.push_back(w);
        }
    }
    Ok(OrientedTree { root, children, parent })
}

/// Column of the canonically smallest pin; the source for orientation.
pub fn source_column(grid: &GridGraph, pins: &[Pin]) -> Option<VertexId> {
    pins.iter().map(|p| p.vertex()).min().map(|v| grid.vertex_id(v.compressed()))
}

/// A tree lifted onto the full grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignedTree {
    pub net: usize,
    /// Layer of each compressed tree edge.
    pub layer_of: BTreeMap<EdgeId, usize>,
    /// Via edges of the full grid.
    pub via_edges: BTreeSet<EdgeId>,
}

impl AssignedTree {
    /// The full-grid boundary edges this tree occupies.
    pub fn boundary_edges(&self, grid: &GridGraph) -> Vec<EdgeId> {
        self.layer_of.iter().map(|(&e, &layer)| lift_edge(grid, e, layer)).collect()
    }

    /// Every full-grid edge of the tree, boundary edges first.
    pub fn edges(&self, grid: &GridGraph) -> Vec<EdgeId> {
        let mut all = self.boundary_edges(grid);
        all.extend(self.via_edges.iter().copied());
        all
    }

    pub fn via_count(&self) -> usize {
        self.via_edges.len()
    }

    pub fn wirelength(&self, grid: &GridGraph) -> f64 {
        self.edges(grid).into_iter().map(|e| grid.edge(e).length).sum()
    }

    /// True when the lifted edges form one component holding every pin.
    pub fn connects(&self, grid: &GridGraph, pins: &[Pin]) -> bool {
        let mut dsu = DisjointSet::new(grid.vertex_count());
        for e in self.edges(grid) {
            let (a, b) = grid.endpoints(e);
            dsu.union(a.0, b.0);
        }
        let mut roots = pins.iter().map(|p| dsu.find(grid.vertex_id(p.vertex()).0));
        match roots.next() {
            Some(first) => roots.all(|r| r == first),
            None => true,
        }
    }
}

/// The copy of compressed edge `e` on `layer`.
pub fn lift_edge(grid: &GridGraph, e: EdgeId, layer: usize) -> EdgeId {
    let (a, b) = grid.endpoints(e);
    let (a, b) = (grid.vertex(a), grid.vertex(b));
    debug_assert!(a.layer == 0 && b.layer == 0);
    grid.edge_between(Vertex { layer, ..a }, Vertex { layer, ..b }).expect("layer exists")
}

fn via_edge(grid: &GridGraph, column: Vertex, lower_layer: usize) -> EdgeId {
    grid.edge_between(Vertex { layer: lower_layer, ..column }, Vertex { layer: lower_layer + 1, ..column })
        .expect("via exists")
}

struct CostModel<'a> {
    grid: &'a GridGraph,
    demand: &'a Demand,
    mode: AssignMode,
}

impl CostModel<'_> {
    /// Marginal cost of adding one more net to `e`.
    fn edge_cost(&self, e: EdgeId, base: u64) -> u64 {
        if self.demand.get(e) < self.grid.edge(e).capacity {
            base
        } else {
            match self.mode {
                AssignMode::Strict => INFEASIBLE,
                AssignMode::OverflowMin => base + OVERFLOW_PENALTY,
            }
        }
    }

    fn via_costs(&self, column: Vertex) -> Vec<u64> {
        (0..self.grid.layers().saturating_sub(1))
            .map(|l| self.edge_cost(via_edge(self.grid, column, l), 1))
            .collect()
    }
}

fn add(a: u64, b: u64) -> u64 {
    if a == INFEASIBLE || b == INFEASIBLE {
        INFEASIBLE
    } else {
        a + b
    }
}

/// Per-vertex DP table.
struct VertexTable {
    /// `cost[r]`: best subtree cost with the parent edge on layer `r`,
    /// including that edge. For the root only `cost[0]` is used.
    cost: Vec<u64>,
    /// Via window `(lo, hi)` realising `cost[r]`.
    window: Vec<(usize, usize)>,
}

/// Assigns layers to one oriented tree, minimising via count subject to the
/// overflow policy, and commits the result into `demand`.
///
/// At each column the via cost is the span between the lowest and highest
/// layer meeting there (parent edge, child edges, this net's pins). The DP
/// scans every window `[lo, hi]` and lets each child take its cheapest layer
/// inside the window, which is exact for span costs.
#[allow(clippy::needless_range_loop)]
pub fn sola_assign(
    grid: &GridGraph,
    tree: &OrientedTree,
    net: usize,
    pins: &[Pin],
    demand: &mut Demand,
    mode: AssignMode,
) -> Result<AssignedTree> {
    let k = grid.layers();
    let column = |v: VertexId| grid.vertex(v);
    let mut pin_span: BTreeMap<VertexId, (usize, usize)> = BTreeMap::new();
    for p in pins {
        let c = grid.vertex_id(p.vertex().compressed());
        let span = pin_span.entry(c).or_insert((p.layer, p.layer));
        span.0 = span.0.min(p.layer);
        span.1 = span.1.max(p.layer);
    }
    let costs = CostModel { grid, demand, mode };
    let mut tables: BTreeMap<VertexId, VertexTable> = BTreeMap::new();

    for v in tree.post_order() {
        let col = column(v);
        let via = costs.via_costs(col);
        let kids = &tree.children[&v];
        let pins_here = pin_span.get(&v).copied();
        // Cheapest total for each window, with children free inside it.
        let mut window_cost = vec![vec![INFEASIBLE; k]; k];
        for lo in 0..k {
            let mut vias = 0u64;
            for hi in lo..k {
                if hi > lo {
                    vias = add(vias, via[hi - 1]);
                }
                if let Some((pl, ph)) = pins_here {
                    if lo > pl || hi < ph {
                        continue;
                    }
                }
                let mut total = vias;
                for c in kids {
                    let best = tables[c].cost[lo..=hi].iter().copied().min().unwrap_or(INFEASIBLE);
                    total = add(total, best);
                }
                window_cost[lo][hi] = total;
            }
        }
        let table = match tree.parent.get(&v) {
            None => {
                let mut best = (INFEASIBLE, (0, 0));
                for lo in 0..k {
                    for hi in lo..k {
                        if window_cost[lo][hi] < best.0 {
                            best = (window_cost[lo][hi], (lo, hi));
                        }
                    }
                }
                VertexTable { cost: vec![best.0], window: vec![best.1] }
            }
            Some(&p) => {
                let flat_edge = grid.edge_between(column(p), col).expect("tree edge");
                let mut cost = vec![INFEASIBLE; k];
                let mut window = vec![(0, 0); k];
                for r in 0..k {
                    let edge = costs.edge_cost(lift_edge(grid, flat_edge, r), 0);
                    if edge == INFEASIBLE {
                        continue;
                    }
                    for lo in 0..=r {
                        for hi in r..k {
                            let c = add(edge, window_cost[lo][hi]);
                            if c < cost[r] {
                                cost[r] = c;
                                window[r] = (lo, hi);
                            }
                        }
                    }
                }
                VertexTable { cost, window }
            }
        };
        tables.insert(v, table);
    }

    if tables[&tree.root].cost[0] == INFEASIBLE {
        return Err(Error::Infeasible { net });
    }

    // Top-down reconstruction.
    let mut layer_of_vertex: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut layer_of = BTreeMap::new();
    let mut via_edges = BTreeSet::new();
    for v in tree.pre_order() {
        let (lo, hi) = match tree.parent.get(&v) {
            None => tables[&v].window[0],
            Some(_) => tables[&v].window[layer_of_vertex[&v]],
        };
        let mut used: Vec<usize> = Vec::new();
        if let Some(&r) = layer_of_vertex.get(&v) {
            used.push(r);
        }
        if let Some(&(pl, ph)) = pin_span.get(&v) {
            used.extend([pl, ph]);
        }
        for &c in &tree.children[&v] {
            let t = &tables[&c].cost;
            let r = (lo..=hi).min_by_key(|&r| (t[r], r)).expect("nonempty window");
            layer_of_vertex.insert(c, r);
            layer_of.insert(grid.edge_between(column(v), column(c)).expect("tree edge"), r);
            used.push(r);
        }
        let (min, max) = used.iter().fold((usize::MAX, 0), |(a, b), &l| (a.min(l), b.max(l)));
        for l in min..max {
            via_edges.insert(via_edge(grid, column(v), l));
        }
    }

    let assigned = AssignedTree { net, layer_of, via_edges };
    for e in assigned.edges(grid) {
        demand.add(e, 1);
    }
    Ok(assigned)
}

/// The full-grid solution for one ordering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignedSolution {
    /// Trees in assignment order.
    pub trees: Vec<AssignedTree>,
    pub demand: Demand,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignMetrics {
    pub total_overflow: u64,
    pub max_overflow: u32,
    /// Boundary plus via wirelength summed over all trees.
    pub wirelength: f64,
    pub vias: usize,
    /// Seconds spent assigning layers.
    pub runtime: f64,
}

/// Lifts every tree of `solution` onto `grid` in `order`, starting from zero
/// demand. `grid` must carry the problem's pins.
pub fn assign_ordered(
    grid: &GridGraph,
    solution: &CompressedSolution,
    order: &[usize],
    mode: AssignMode,
) -> Result<(AssignedSolution, AssignMetrics)> {
    let n = solution.trees.len();
    let mut seen = vec![false; n];
    if order.len() != n || !order.iter().all(|&m| m < n && !std::mem::replace(&mut seen[m], true)) {
        return Err(Error::InvalidArgument(format!("{order:?} is not a permutation of 0..{n}")));
    }
    let nets = grid.nets();
    let by_net: BTreeMap<usize, &RoutingTree> = solution.trees.iter().map(|t| (t.net, t)).collect();
    let start = Instant::now();
    let mut demand = Demand::zeros(grid);
    let mut trees = Vec::with_capacity(n);
    for &m in order {
        let tree = by_net
            .get(&m)
            .ok_or_else(|| Error::InvalidArgument(format!("no tree for net {m}")))?;
        let pins: &[Pin] = nets.get(m).map(|n| n.pins.as_slice()).unwrap_or(&[]);
        let root = source_column(grid, pins).unwrap_or_else(|| *tree.vertices.first().expect("nonempty tree"));
        let oriented = orient(tree, grid, root)?;
        trees.push(sola_assign(grid, &oriented, m, pins, &mut demand, mode)?);
    }
    let runtime = start.elapsed().as_secs_f64();
    let (total_overflow, max_overflow) = demand.solution_overflow(grid);
    let metrics = AssignMetrics {
        total_overflow,
        max_overflow,
        wirelength: trees.iter().map(|t| t.wirelength(grid)).sum(),
        vias: trees.iter().map(AssignedTree::via_count).sum(),
        runtime,
    };
    Ok((AssignedSolution { trees, demand }, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Capacities;
    use crate::route::route_net_kruskal;

    fn grid(w: usize, h: usize, k: usize, boundary: u32, via: u32) -> GridGraph {
        GridGraph::new(w, h, k, Capacities { boundary, via }).unwrap()
    }

    fn v(x: usize, y: usize) -> Vertex {
        Vertex::new(x, y, 0)
    }

    fn tree_of(g: &GridGraph, pts: &[Vertex]) -> RoutingTree {
        route_net_kruskal(&g.compress(), 0, pts).unwrap()
    }

    /// Lexicographic (overflow added, via count) minimum over all k^|E|
    /// layer choices, with vias counted as the per-column layer span.
    fn exhaustive(g: &GridGraph, tree: &RoutingTree, pins: &[Pin], state: &Demand) -> (u64, usize) {
        let edges: Vec<EdgeId> = tree.edges.iter().copied().collect();
        let k = g.layers();
        let combos = k.pow(edges.len() as u32);
        let mut best = (u64::MAX, usize::MAX);
        for mut code in 0..combos {
            let mut layers = Vec::with_capacity(edges.len());
            for _ in &edges {
                layers.push(code % k);
                code /= k;
            }
            let mut span: BTreeMap<VertexId, (usize, usize)> = BTreeMap::new();
            let mut touch = |c: VertexId, l: usize| {
                let s = span.entry(c).or_insert((l, l));
                s.0 = s.0.min(l);
                s.1 = s.1.max(l);
            };
            let mut used = Vec::new();
            for (&e, &l) in edges.iter().zip(&layers) {
                let (a, b) = g.endpoints(e);
                touch(a, l);
                touch(b, l);
                used.push(lift_edge(g, e, l));
            }
            for p in pins {
                touch(g.vertex_id(p.vertex().compressed()), p.layer);
            }
            let mut vias = 0;
            for (&c, &(lo, hi)) in &span {
                for l in lo..hi {
                    used.push(via_edge(g, g.vertex(c), l));
                    vias += 1;
                }
            }
            let overflow = used.iter().filter(|&&e| state.get(e) >= g.edge(e).capacity).count() as u64;
            best = best.min((overflow, vias));
        }
        best
    }

    #[test]
    fn orient_examples() {
        let g = grid(3, 3, 1, 1, 1);
        let t = tree_of(&g, &[v(0, 0), v(1, 0)]);
        for root in [v(0, 0), v(1, 0)] {
            let o = orient(&t, &g, g.vertex_id(root)).unwrap();
            assert_eq!(o.parent.len(), 1);
        }

        let star = RoutingTree {
            net: 0,
            vertices: [v(1, 1), v(0, 1), v(2, 1), v(1, 0)].iter().map(|&x| g.vertex_id(x)).collect(),
            edges: [v(0, 1), v(2, 1), v(1, 0)]
                .iter()
                .map(|&x| g.edge_between(v(1, 1), x).unwrap())
                .collect(),
        };
        let o = orient(&star, &g, g.vertex_id(v(1, 1))).unwrap();
        assert_eq!(o.children[&g.vertex_id(v(1, 1))].len(), 3);

        let path = tree_of(&g, &[v(0, 0), v(2, 0)]);
        let (a, b, c) = (g.vertex_id(v(0, 0)), g.vertex_id(v(1, 0)), g.vertex_id(v(2, 0)));
        let o = orient(&path, &g, a).unwrap();
        assert_eq!(o.parent[&c], b);
        assert_eq!(o.parent[&b], a);
        assert!(orient(&path, &g, g.vertex_id(v(2, 2))).is_err());
    }

    #[test]
    fn single_layer_is_forced() {
        let g = grid(4, 4, 1, 1, 1);
        let pins: Vec<Pin> = [v(0, 0), v(3, 1), v(1, 3)].iter().map(|&p| Pin::new(p, 0)).collect();
        let t = tree_of(&g, &pins.iter().map(|p| p.vertex()).collect::<Vec<_>>());
        let o = orient(&t, &g, source_column(&g, &pins).unwrap()).unwrap();
        let mut d = Demand::zeros(&g);
        let a = sola_assign(&g, &o, 0, &pins, &mut d, AssignMode::OverflowMin).unwrap();
        assert!(a.layer_of.values().all(|&l| l == 0));
        assert_eq!(a.via_count(), 0);
    }

    #[test]
    fn empty_state_stays_on_bottom_layer() {
        let g = grid(4, 4, 2, 2, 16);
        let pins: Vec<Pin> = [v(0, 0), v(3, 3), v(0, 3)].iter().map(|&p| Pin::new(p, 0)).collect();
        let t = tree_of(&g, &pins.iter().map(|p| p.vertex()).collect::<Vec<_>>());
        let o = orient(&t, &g, source_column(&g, &pins).unwrap()).unwrap();
        let mut d = Demand::zeros(&g);
        let a = sola_assign(&g, &o, 0, &pins, &mut d, AssignMode::Strict).unwrap();
        assert!(a.layer_of.values().all(|&l| l == 0));
        assert_eq!(a.via_count(), 0);
        assert!(a.connects(&g, &pins));
    }

    /// Net A holds the only layer-0 slot of a single edge; net B must climb.
    fn contention_pair() -> (GridGraph, CompressedSolution) {
        let mut g = grid(2, 1, 2, 1, 2);
        g.add_pins([
            Pin::new(v(0, 0), 0),
            Pin::new(v(1, 0), 0),
            Pin::new(v(0, 0), 1),
            Pin::new(v(1, 0), 1),
        ])
        .unwrap();
        let flat = g.compress();
        let s = crate::route::route_all(&flat, &flat.nets(), crate::route::Router::Ka).unwrap();
        (g, s)
    }

    #[test]
    fn saturated_edge_moves_up_with_two_vias() {
        let (g, s) = contention_pair();
        let nets = g.nets();
        let mut d = Demand::zeros(&g);
        for (tree, net) in s.trees.iter().zip(&nets) {
            let before = d.clone();
            let o = orient(tree, &g, source_column(&g, &net.pins).unwrap()).unwrap();
            let a = sola_assign(&g, &o, net.id, &net.pins, &mut d, AssignMode::Strict).unwrap();
            assert_eq!(exhaustive(&g, tree, &net.pins, &before), (0, a.via_count()));
            if net.id == 1 {
                assert_eq!(a.layer_of.values().copied().collect::<Vec<_>>(), vec![1]);
                assert_eq!(a.via_count(), 2);
                assert!(a.connects(&g, &net.pins));
            }
        }
        assert_eq!(d.solution_overflow(&g), (0, 0));
    }

    #[test]
    fn strict_mode_reports_infeasible_net() {
        let (mut g, s) = contention_pair();
        let e1 = g.edge_between(Vertex::new(0, 0, 1), Vertex::new(1, 0, 1)).unwrap();
        g.set_capacity(e1, 0);
        let err = assign_ordered(&g, &s, &[0, 1], AssignMode::Strict).unwrap_err();
        assert!(matches!(err, Error::Infeasible { net: 1 }));
        let (_, m) = assign_ordered(&g, &s, &[0, 1], AssignMode::OverflowMin).unwrap();
        assert_eq!(m.total_overflow, 1);
    }

    #[test]
    fn orderings_mirror_on_contention_pair() {
        let (g, s) = contention_pair();
        let (a, ma) = assign_ordered(&g, &s, &[0, 1], AssignMode::OverflowMin).unwrap();
        let (b, mb) = assign_ordered(&g, &s, &[1, 0], AssignMode::OverflowMin).unwrap();
        assert_eq!((ma.total_overflow, ma.max_overflow, ma.wirelength, ma.vias), (0, 0, 4.0, 2));
        assert_eq!((mb.total_overflow, mb.max_overflow, mb.wirelength, mb.vias), (0, 0, 4.0, 2));
        assert_eq!(a.trees[1].net, 1);
        assert_eq!(a.trees[1].via_count(), 2);
        assert_eq!(b.trees[1].net, 0);
        assert_eq!(b.trees[1].via_count(), 2);
    }

    #[test]
    fn single_net_matches_sola() {
        let mut g = grid(3, 3, 2, 1, 9);
        let pins = [Pin::new(v(0, 0), 0), Pin::new(Vertex::new(2, 2, 1), 0), Pin::new(v(2, 0), 0)];
        g.add_pins(pins).unwrap();
        let flat = g.compress();
        let s = crate::route::route_all(&flat, &flat.nets(), crate::route::Router::St).unwrap();
        let (sol, m) = assign_ordered(&g, &s, &[0], AssignMode::OverflowMin).unwrap();
        let o = orient(&s.trees[0], &g, source_column(&g, &pins).unwrap()).unwrap();
        let mut d = Demand::zeros(&g);
        let a = sola_assign(&g, &o, 0, &pins, &mut d, AssignMode::OverflowMin).unwrap();
        assert_eq!(sol.trees[0], a);
        assert_eq!(m.vias, a.via_count());
        assert_eq!(m.vias, exhaustive(&g, &s.trees[0], &pins, &Demand::zeros(&g)).1);
    }

    #[test]
    fn contention_free_orderings_agree() {
        let mut g = grid(4, 4, 2, 2, 16);
        g.add_pins([
            Pin::new(v(0, 0), 0),
            Pin::new(v(3, 0), 0),
            Pin::new(v(0, 3), 1),
            Pin::new(Vertex::new(3, 3, 1), 1),
        ])
        .unwrap();
        let flat = g.compress();
        let s = crate::route::route_all(&flat, &flat.nets(), crate::route::Router::Ka).unwrap();
        let (_, a) = assign_ordered(&g, &s, &[0, 1], AssignMode::Strict).unwrap();
        let (_, b) = assign_ordered(&g, &s, &[1, 0], AssignMode::Strict).unwrap();
        assert_eq!((a.total_overflow, a.wirelength), (b.total_overflow, b.wirelength));
    }

    #[test]
    fn rejects_non_permutation() {
        let (g, s) = contention_pair();
        assert!(assign_ordered(&g, &s, &[0, 0], AssignMode::Strict).is_err());
        assert!(assign_ordered(&g, &s, &[0], AssignMode::Strict).is_err());
        assert!(assign_ordered(&g, &s, &[0, 2], AssignMode::Strict).is_err());
    }

    #[test]
    fn compressed_ids_match_layer_zero() {
        let g = grid(4, 3, 3, 1, 1);
        let flat = g.compress();
        for e in flat.edge_ids() {
            assert_eq!(flat.endpoints(e), g.endpoints(e));
            assert_eq!(flat.edge_direction(e), g.edge_direction(e));
        }
    }
}
