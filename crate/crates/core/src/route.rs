//! Congestion-blind 2D routing on the compressed grid.
//!
//! Both routers work on the metric closure of a net's distinct pin columns
//! (Manhattan distance), embed each closure edge as an x-first L path, and
//! reduce the embedded union to a spanning tree. The Steiner router then
//! prunes non-terminal leaves, which completes the Kou-Markowsky-Berman
//! construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Demand, EdgeId, GridGraph, Net, Vertex, VertexId};

/// Which 2D router builds the compressed solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Router {
    /// Kruskal over the pin metric closure.
    Ka,
    /// KMB Steiner approximation.
    St,
}

impl fmt::Display for Router {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Router::Ka => "ka",
            Router::St => "st",
        })
    }
}

impl FromStr for Router {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ka" | "kruskal" => Ok(Router::Ka),
            "st" | "steiner" => Ok(Router::St),
            other => Err(Error::InvalidArgument(format!("unknown router `{other}` (expected ka or st)"))),
        }
    }
}

/// One net's tree on the compressed grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingTree {
    pub net: usize,
    pub vertices: BTreeSet<VertexId>,
    pub edges: BTreeSet<EdgeId>,
}

impl RoutingTree {
    pub fn wirelength(&self, grid: &GridGraph) -> f64 {
        self.edges.iter().map(|&e| grid.edge(e).length).sum()
    }

    /// Adjacency lists in canonical order.
    pub fn adjacency(&self, grid: &GridGraph) -> BTreeMap<VertexId, Vec<VertexId>> {
        let mut adj: BTreeMap<VertexId, Vec<VertexId>> =
            self.vertices.iter().map(|&v| (v, Vec::new())).collect();
        for &e in &self.edges {
            let (a, b) = grid.endpoints(e);
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        for list in adj.values_mut() {
            list.sort();
        }
        adj
    }

    /// True when the edges form a spanning tree of the vertex set.
    pub fn is_spanning_tree(&self, grid: &GridGraph) -> bool {
        if self.vertices.is_empty() || self.edges.len() + 1 != self.vertices.len() {
            return false;
        }
        let mut dsu = DisjointSet::new(grid.vertex_count());
        for &e in &self.edges {
            let (a, b) = grid.endpoints(e);
            if !self.vertices.contains(&a) || !self.vertices.contains(&b) || !dsu.union(a.0, b.0) {
                return false;
            }
        }
        true
    }
}

/// The routed compressed solution with its accumulated demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedSolution {
    pub trees: Vec<RoutingTree>,
    pub demand: Demand,
}

pub(crate) struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// A monotone path between two vertices of the same layer.
///
/// The walk starts at whichever endpoint has the lower canonical id, moves
/// along x first and then along y, so the result does not depend on argument
/// order.
pub fn shortest_path(grid: &GridGraph, u: Vertex, v: Vertex) -> Vec<EdgeId> {
    assert_eq!(u.layer, v.layer, "shortest_path stays on one layer");
    let (start, end) = if u <= v { (u, v) } else { (v, u) };
    let mut path = Vec::with_capacity(start.manhattan(end));
    let mut cur = start;
    while cur.x != end.x {
        let next = Vertex { x: if end.x > cur.x { cur.x + 1 } else { cur.x - 1 }, ..cur };
        path.push(grid.edge_between(cur, next).expect("adjacent"));
        cur = next;
    }
    while cur.y != end.y {
        let next = Vertex { y: if end.y > cur.y { cur.y + 1 } else { cur.y - 1 }, ..cur };
        path.push(grid.edge_between(cur, next).expect("adjacent"));
        cur = next;
    }
    path
}

/// Kruskal MST over the Manhattan metric closure of `terminals`.
///
/// Terminals must be sorted and distinct; returned pairs index into them in
/// acceptance order. Ties are broken by the canonical pair order.
pub fn closure_mst(terminals: &[Vertex]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..terminals.len() {
        for j in i + 1..terminals.len() {
            pairs.push((terminals[i].manhattan(terminals[j]), i, j));
        }
    }
    pairs.sort_unstable();
    let mut dsu = DisjointSet::new(terminals.len());
    pairs
        .into_iter()
        .filter(|&(_, i, j)| dsu.union(i, j))
        .map(|(_, i, j)| (i, j))
        .collect()
}

fn sorted_terminals(pins: &[Vertex]) -> Vec<Vertex> {
    let mut terminals: Vec<Vertex> = pins.iter().map(|p| p.compressed()).collect();
    terminals.sort();
    terminals.dedup();
    terminals
}

/// Embeds the closure MST and reduces the union of paths to a spanning tree.
fn embedded_spanning_tree(grid: &GridGraph, net: usize, terminals: &[Vertex]) -> RoutingTree {
    let mut union: BTreeSet<EdgeId> = BTreeSet::new();
    for (i, j) in closure_mst(terminals) {
        union.extend(shortest_path(grid, terminals[i], terminals[j]));
    }
    let mut vertices: BTreeSet<VertexId> = terminals.iter().map(|&t| grid.vertex_id(t)).collect();
    let mut dsu = DisjointSet::new(grid.vertex_count());
    let mut edges = BTreeSet::new();
    for e in union {
        let (a, b) = grid.endpoints(e);
        vertices.insert(a);
        vertices.insert(b);
        if dsu.union(a.0, b.0) {
            edges.insert(e);
        }
    }
    RoutingTree { net, vertices, edges }
}

fn check_terminals(grid: &GridGraph, pins: &[Vertex]) -> Result<()> {
    if pins.is_empty() {
        return Err(Error::InvalidArgument("a net needs at least one pin".into()));
    }
    if grid.layers() != 1 {
        return Err(Error::InvalidArgument("2D routing requires a compressed grid".into()));
    }
    if let Some(p) = pins.iter().find(|p| !grid.contains(p.compressed())) {
        return Err(Error::InvalidArgument(format!("pin {p:?} lies outside the grid")));
    }
    Ok(())
}

/// Minimum spanning tree routing over the pin metric closure.
pub fn route_net_kruskal(grid: &GridGraph, net: usize, pins: &[Vertex]) -> Result<RoutingTree> {
    check_terminals(grid, pins)?;
    Ok(embedded_spanning_tree(grid, net, &sorted_terminals(pins)))
}

/// KMB Steiner tree: the Kruskal construction followed by repeated removal
/// of non-terminal leaves.
pub fn route_net_steiner(grid: &GridGraph, net: usize, pins: &[Vertex]) -> Result<RoutingTree> {
    check_terminals(grid, pins)?;
    let terminals = sorted_terminals(pins);
    let mut tree = embedded_spanning_tree(grid, net, &terminals);
    let keep: BTreeSet<VertexId> = terminals.iter().map(|&t| grid.vertex_id(t)).collect();
    loop {
        let adj = tree.adjacency(grid);
        let leaves: Vec<VertexId> = adj
            .iter()
            .filter(|(v, nbrs)| nbrs.len() == 1 && !keep.contains(v))
            .map(|(&v, _)| v)
            .collect();
        if leaves.is_empty() {
            break;
        }
        for leaf in leaves {
            let other = adj[&leaf][0];
            let e = grid.edge_between(grid.vertex(leaf), grid.vertex(other)).expect("tree edge");
            tree.edges.remove(&e);
            tree.vertices.remove(&leaf);
        }
    }
    Ok(tree)
}

pub fn route_net(grid: &GridGraph, net: usize, pins: &[Vertex], router: Router) -> Result<RoutingTree> {
    match router {
        Router::Ka => route_net_kruskal(grid, net, pins),
        Router::St => route_net_steiner(grid, net, pins),
    }
}

/// Routes every net in ascending id order and accumulates demand.
///
/// Capacity is ignored; compressed overflow is left for the features to
/// observe.
pub fn route_all(grid: &GridGraph, nets: &[Net], router: Router) -> Result<CompressedSolution> {
    if nets.is_empty() {
        return Err(Error::InvalidArgument("no nets to route".into()));
    }
    let mut order: Vec<&Net> = nets.iter().collect();
    order.sort_by_key(|n| n.id);
    let mut demand = Demand::zeros(grid);
    let mut trees = Vec::with_capacity(nets.len());
    for net in order {
        let pins: Vec<Vertex> = net.pins.iter().map(|p| p.vertex()).collect();
        let tree = route_net(grid, net.id, &pins, router)?;
        for &e in &tree.edges {
            demand.add(e, 1);
        }
        trees.push(tree);
    }
    Ok(CompressedSolution { trees, demand })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Capacities, Pin};
    use proptest::prelude::*;

    fn flat(w: usize, h: usize) -> GridGraph {
        GridGraph::new(w, h, 1, Capacities { boundary: 2, via: 0 }).unwrap()
    }

    fn v(x: usize, y: usize) -> Vertex {
        Vertex::new(x, y, 0)
    }

    /// Fewest edges connecting all terminals, by enumerating edge subsets.
    fn exhaustive_steiner(grid: &GridGraph, terminals: &[Vertex]) -> usize {
        let m = grid.edge_count();
        assert!(m <= 16);
        let ids: Vec<usize> = terminals.iter().map(|&t| grid.vertex_id(t).0).collect();
        let mut best = usize::MAX;
        for mask in 0u32..(1 << m) {
            let count = mask.count_ones() as usize;
            if count >= best {
                continue;
            }
            let mut dsu = DisjointSet::new(grid.vertex_count());
            for e in 0..m {
                if mask & (1 << e) != 0 {
                    let (a, b) = grid.endpoints(EdgeId(e));
                    dsu.union(a.0, b.0);
                }
            }
            let root = dsu.find(ids[0]);
            if ids.iter().all(|&i| dsu.find(i) == root) {
                best = count;
            }
        }
        best
    }

    /// Brute-force MST weight over the closure of three terminals.
    fn brute_mst3(t: &[Vertex; 3]) -> usize {
        let d = |a: usize, b: usize| t[a].manhattan(t[b]);
        [d(0, 1) + d(0, 2), d(0, 1) + d(1, 2), d(0, 2) + d(1, 2)].into_iter().min().unwrap()
    }

    #[test]
    fn shortest_path_examples() {
        let g = flat(5, 5);
        assert!(shortest_path(&g, v(2, 2), v(2, 2)).is_empty());
        assert_eq!(shortest_path(&g, v(0, 0), v(1, 0)).len(), 1);
        let path = shortest_path(&g, v(0, 0), v(2, 1));
        let expected = [
            g.edge_between(v(0, 0), v(1, 0)).unwrap(),
            g.edge_between(v(1, 0), v(2, 0)).unwrap(),
            g.edge_between(v(2, 0), v(2, 1)).unwrap(),
        ];
        assert_eq!(path, expected);
        assert_eq!(shortest_path(&g, v(2, 1), v(0, 0)), expected);
    }

    #[test]
    fn kruskal_examples() {
        let g = flat(5, 5);
        let t = route_net_kruskal(&g, 0, &[v(0, 0), v(2, 1)]).unwrap();
        assert_eq!(t.wirelength(&g), 3.0);
        let t = route_net_kruskal(&g, 0, &[v(0, 0), v(0, 2), v(0, 4)]).unwrap();
        assert_eq!(t.wirelength(&g), 4.0);

        let pins = [v(0, 0), v(2, 0), v(1, 2)];
        assert_eq!(brute_mst3(&pins), 5);
        let t = route_net_kruskal(&g, 0, &pins).unwrap();
        assert!(t.is_spanning_tree(&g));
        assert!(t.wirelength(&g) <= 5.0);
        // Under the x-first embedding the (0,0)-(1,2) path overlaps the
        // (0,0)-(2,0) path on its first edge.
        assert_eq!(t.wirelength(&g), 4.0);
    }

    #[test]
    fn single_position_gives_single_vertex() {
        let g = flat(3, 3);
        let t = route_net_kruskal(&g, 0, &[v(1, 1), v(1, 1)]).unwrap();
        assert_eq!(t.vertices.len(), 1);
        assert!(t.edges.is_empty());
        let t = route_net_steiner(&g, 0, &[v(1, 1)]).unwrap();
        assert_eq!(t.vertices.len(), 1);
        assert!(route_net_steiner(&g, 0, &[]).is_err());
    }

    #[test]
    fn steiner_examples() {
        let g = flat(5, 5);
        let pins = [v(1, 3), v(4, 0)];
        assert_eq!(route_net_steiner(&g, 0, &pins).unwrap(), route_net_kruskal(&g, 0, &pins).unwrap());

        let g3 = flat(3, 3);
        let pins = [v(0, 0), v(2, 0), v(1, 2)];
        assert_eq!(exhaustive_steiner(&g3, &pins), 4);
        let t = route_net_steiner(&g3, 0, &pins).unwrap();
        assert_eq!(t.wirelength(&g3), 4.0);
        assert!(t.vertices.contains(&g3.vertex_id(v(1, 0))));

        let corners = [v(0, 0), v(2, 0), v(0, 2), v(2, 2)];
        let opt = exhaustive_steiner(&g3, &corners);
        assert_eq!(opt, 6);
        let t = route_net_steiner(&g3, 0, &corners).unwrap();
        assert!(t.wirelength(&g3) <= 2.0 * opt as f64);
    }

    #[test]
    fn route_all_accumulates_demand() {
        let g = flat(5, 5);
        let pins = |net: usize, pts: &[(usize, usize)]| -> Net {
            Net { id: net, pins: pts.iter().map(|&(x, y)| Pin::new(v(x, y), net)).collect() }
        };
        let one = route_all(&g, &[pins(0, &[(0, 0), (3, 0)])], Router::Ka).unwrap();
        for e in g.edge_ids() {
            let expected = one.trees[0].edges.contains(&e) as u32;
            assert_eq!(one.demand.get(e), expected);
        }

        let two = route_all(&g, &[pins(1, &[(1, 0), (2, 0)]), pins(0, &[(0, 0), (3, 0)])], Router::St).unwrap();
        assert_eq!(two.trees[0].net, 0);
        let shared = g.edge_between(v(1, 0), v(2, 0)).unwrap();
        assert_eq!(two.demand.get(shared), 2);
    }

    #[test]
    fn routing_requires_compressed_grid() {
        let g = GridGraph::new(3, 3, 2, Capacities { boundary: 1, via: 1 }).unwrap();
        assert!(route_net_kruskal(&g, 0, &[v(0, 0), v(1, 1)]).is_err());
    }

    #[test]
    fn router_names_parse() {
        assert_eq!("KA".parse::<Router>().unwrap(), Router::Ka);
        assert_eq!("st".parse::<Router>().unwrap(), Router::St);
        assert!("maze".parse::<Router>().is_err());
    }

    fn arb_pins(w: usize, h: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
        proptest::collection::vec((0..w, 0..h), 1..8)
    }

    proptest! {
        #[test]
        fn routes_are_trees_covering_pins(pts in arb_pins(5, 5), steiner in any::<bool>()) {
            let g = flat(5, 5);
            let pins: Vec<Vertex> = pts.iter().map(|&(x, y)| v(x, y)).collect();
            let router = if steiner { Router::St } else { Router::Ka };
            let tree = route_net(&g, 0, &pins, router).unwrap();
            prop_assert!(tree.is_spanning_tree(&g));
            for p in &pins {
                prop_assert!(tree.vertices.contains(&g.vertex_id(*p)));
            }
            prop_assert_eq!(&tree, &route_net(&g, 0, &pins, router).unwrap());
        }

        #[test]
        fn two_terminal_routes_are_manhattan(a in (0usize..5, 0usize..5), b in (0usize..5, 0usize..5)) {
            let g = flat(5, 5);
            let (a, b) = (v(a.0, a.1), v(b.0, b.1));
            for router in [Router::Ka, Router::St] {
                let t = route_net(&g, 0, &[a, b], router).unwrap();
                prop_assert_eq!(t.wirelength(&g), a.manhattan(b) as f64);
            }
        }

        #[test]
        fn steiner_within_twice_optimum(pts in proptest::collection::vec((0usize..3, 0usize..3), 2..5)) {
            let g = flat(3, 3);
            let pins: Vec<Vertex> = pts.iter().map(|&(x, y)| v(x, y)).collect();
            let opt = exhaustive_steiner(&g, &pins);
            let t = route_net_steiner(&g, 0, &pins).unwrap();
            prop_assert!(t.wirelength(&g) <= 2.0 * opt as f64);
        }
    }
}
