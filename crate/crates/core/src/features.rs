//! Feature vectors describing a routing problem and its 2D solution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assign::{orient, source_column};
use crate::error::{Error, Result};
use crate::grid::{edge_overflow, GridGraph};
use crate::route::CompressedSolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Per-net block plus the global block.
    Full,
    /// Per-net block only.
    Reduced,
}

impl FeatureMode {
    pub fn dimension(self, n_nets: usize) -> usize {
        match self {
            FeatureMode::Full => 4 * n_nets + 4,
            FeatureMode::Reduced => 4 * n_nets,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Full => "full",
            FeatureMode::Reduced => "reduced",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "all" => Ok(FeatureMode::Full),
            "reduced" => Ok(FeatureMode::Reduced),
            other => Err(Error::InvalidArgument(format!("unknown feature mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetFeatures {
    /// Pins on the full grid.
    pub pins: usize,
    /// Distinct compressed pin columns.
    pub compressed_pins: usize,
    /// Vertices of the 2D tree.
    pub vertices: usize,
    /// Summed compressed overflow along the tree's edges.
    pub overflow: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalFeatures {
    pub dx: usize,
    pub dy: usize,
    pub area: usize,
    pub branches: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVector {
    pub per_net: Vec<NetFeatures>,
    pub global: Option<GlobalFeatures>,
}

impl FeatureVector {
    /// Flattened as four per-net blocks (pins, compressed pins, vertices,
    /// overflow), each in ascending net id, then the global block.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.per_net.len() + 4);
        out.extend(self.per_net.iter().map(|f| f.pins as f64));
        out.extend(self.per_net.iter().map(|f| f.compressed_pins as f64));
        out.extend(self.per_net.iter().map(|f| f.vertices as f64));
        out.extend(self.per_net.iter().map(|f| f.overflow as f64));
        if let Some(g) = self.global {
            out.extend([g.dx as f64, g.dy as f64, g.area as f64, g.branches as f64]);
        }
        out
    }
}

/// Bounding box `(dx, dy, dx * dy)` of every vertex used by the solution.
pub fn min_rectangle(solution: &CompressedSolution, flat: &GridGraph) -> Result<(usize, usize, usize)> {
    let mut coords = solution.trees.iter().flat_map(|t| t.vertices.iter().map(|&v| flat.vertex(v)));
    let first = coords.next().ok_or_else(|| Error::InvalidArgument("solution uses no vertices".into()))?;
    let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
    for v in coords {
        x0 = x0.min(v.x);
        x1 = x1.max(v.x);
        y0 = y0.min(v.y);
        y1 = y1.max(v.y);
    }
    let (dx, dy) = (x1 - x0, y1 - y0);
    Ok((dx, dy, dx * dy))
}

/// Vertices with at least two children, summed over every tree oriented from
/// its source pin column. `grid` carries the pins (full or compressed).
pub fn branch_count(solution: &CompressedSolution, grid: &GridGraph) -> Result<usize> {
    let nets = grid.nets();
    let mut total = 0;
    for tree in &solution.trees {
        let pins = nets.get(tree.net).map(|n| n.pins.as_slice()).unwrap_or(&[]);
        let root = match source_column(grid, pins) {
            Some(r) if tree.vertices.contains(&r) => r,
            _ => *tree.vertices.first().ok_or_else(|| Error::InvalidArgument("empty tree".into()))?,
        };
        let oriented = orient(tree, grid, root)?;
        total += oriented.children.values().filter(|c| c.len() > 1).count();
    }
    Ok(total)
}

/// Features of a routed problem.
///
/// `grid` is the full grid with pins and `flat` its compression; overflow is
/// measured against the compressed capacities using the whole solution's
/// demand.
pub fn feature_vector(
    grid: &GridGraph,
    flat: &GridGraph,
    solution: &CompressedSolution,
    mode: FeatureMode,
) -> Result<FeatureVector> {
    let nets = grid.nets();
    if nets.len() != solution.trees.len() {
        return Err(Error::DimensionMismatch { expected: nets.len(), actual: solution.trees.len() });
    }
    let mut per_net = Vec::with_capacity(nets.len());
    for net in &nets {
        let tree = solution
            .trees
            .iter()
            .find(|t| t.net == net.id)
            .ok_or_else(|| Error::InvalidArgument(format!("net {} is not routed", net.id)))?;
        let overflow = tree
            .edges
            .iter()
            .map(|&e| edge_overflow(solution.demand.get(e), flat.edge(e).capacity) as u64)
            .sum();
        per_net.push(NetFeatures {
            pins: net.pins.len(),
            compressed_pins: net.compressed_positions().len(),
            vertices: tree.vertices.len(),
            overflow,
        });
    }
    let global = match mode {
        FeatureMode::Reduced => None,
        FeatureMode::Full => {
            let (dx, dy, area) = min_rectangle(solution, flat)?;
            Some(GlobalFeatures { dx, dy, area, branches: branch_count(solution, grid)? })
        }
    };
    Ok(FeatureVector { per_net, global })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Capacities, Demand, Pin, Vertex};
    use crate::route::{route_all, RoutingTree, Router};

    fn v(x: usize, y: usize) -> Vertex {
        Vertex::new(x, y, 0)
    }

    fn solution_of(g: &GridGraph, trees: Vec<RoutingTree>) -> CompressedSolution {
        let mut demand = Demand::zeros(g);
        for t in &trees {
            for &e in &t.edges {
                demand.add(e, 1);
            }
        }
        CompressedSolution { trees, demand }
    }

    fn star(g: &GridGraph, net: usize, center: Vertex) -> RoutingTree {
        let leaves = [v(center.x - 1, center.y), v(center.x + 1, center.y), v(center.x, center.y + 1)];
        RoutingTree {
            net,
            vertices: std::iter::once(center).chain(leaves).map(|x| g.vertex_id(x)).collect(),
            edges: leaves.iter().map(|&l| g.edge_between(center, l).unwrap()).collect(),
        }
    }

    fn point(g: &GridGraph, net: usize, at: Vertex) -> RoutingTree {
        RoutingTree { net, vertices: [g.vertex_id(at)].into(), edges: Default::default() }
    }

    #[test]
    fn rectangle_examples() {
        let g = GridGraph::new(5, 5, 1, Capacities { boundary: 1, via: 0 }).unwrap();
        let s = solution_of(&g, vec![point(&g, 0, v(0, 0)), point(&g, 1, v(2, 3))]);
        assert_eq!(min_rectangle(&s, &g).unwrap(), (2, 3, 6));
        let s = solution_of(&g, vec![point(&g, 0, v(4, 1))]);
        assert_eq!(min_rectangle(&s, &g).unwrap(), (0, 0, 0));
        let s = solution_of(&g, vec![point(&g, 0, v(0, 4)), point(&g, 1, v(4, 0))]);
        assert_eq!(min_rectangle(&s, &g).unwrap(), (4, 4, 16));
        assert!(min_rectangle(&solution_of(&g, vec![]), &g).is_err());
    }

    #[test]
    fn branch_examples() {
        let mut g = GridGraph::new(7, 3, 1, Capacities { boundary: 1, via: 0 }).unwrap();
        g.add_pins([Pin::new(v(0, 0), 0), Pin::new(v(4, 0), 0), Pin::new(v(1, 0), 1), Pin::new(v(4, 2), 1)])
            .unwrap();
        let flat = g.compress();
        let path = route_all(&flat, &flat.nets(), Router::Ka).unwrap();
        assert_eq!(branch_count(&path, &g).unwrap(), 0);

        let mut g = GridGraph::new(7, 3, 1, Capacities { boundary: 1, via: 0 }).unwrap();
        g.add_pins([Pin::new(v(0, 1), 0), Pin::new(v(4, 1), 1)]).unwrap();
        let one = solution_of(&g, vec![star(&g, 0, v(1, 1))]);
        assert_eq!(branch_count(&one, &g).unwrap(), 1);
        let two = solution_of(&g, vec![star(&g, 0, v(1, 1)), star(&g, 1, v(4, 1))]);
        assert_eq!(branch_count(&two, &g).unwrap(), 2);
    }

    fn three_net_problem() -> (GridGraph, GridGraph, CompressedSolution) {
        let mut g = GridGraph::new(5, 5, 2, Capacities { boundary: 2, via: 25 }).unwrap();
        g.add_pins([
            Pin::new(v(0, 0), 0),
            Pin::new(Vertex::new(0, 0, 1), 0),
            Pin::new(v(3, 0), 0),
            Pin::new(v(0, 2), 1),
            Pin::new(v(4, 2), 1),
            Pin::new(v(0, 4), 2),
            Pin::new(Vertex::new(2, 4, 1), 2),
        ])
        .unwrap();
        let flat = g.compress();
        let s = route_all(&flat, &flat.nets(), Router::St).unwrap();
        (g, flat, s)
    }

    #[test]
    fn vector_dimensions() {
        let (g, flat, s) = three_net_problem();
        let full = feature_vector(&g, &flat, &s, FeatureMode::Full).unwrap().to_vec();
        let reduced = feature_vector(&g, &flat, &s, FeatureMode::Reduced).unwrap().to_vec();
        assert_eq!(full.len(), 16);
        assert_eq!(reduced.len(), 12);
        assert_eq!(&full[..12], &reduced[..]);
        // pins, distinct columns, vertices, overflow
        assert_eq!(&reduced[0..3], &[3.0, 2.0, 2.0]);
        assert_eq!(&reduced[3..6], &[2.0, 2.0, 2.0]);
        assert_eq!(&reduced[6..9], &[4.0, 5.0, 3.0]);
        assert!(reduced[9..].iter().all(|&o| o == 0.0));
        assert_eq!(&full[12..], &[4.0, 4.0, 16.0, 0.0]);
    }

    #[test]
    fn compressed_overflow_is_counted_per_net() {
        let mut g = GridGraph::new(2, 1, 1, Capacities { boundary: 1, via: 0 }).unwrap();
        g.add_pins((0..3).flat_map(|n| [Pin::new(v(0, 0), n), Pin::new(v(1, 0), n)])).unwrap();
        let flat = g.compress();
        let s = route_all(&flat, &flat.nets(), Router::Ka).unwrap();
        let f = feature_vector(&g, &flat, &s, FeatureMode::Reduced).unwrap();
        assert!(f.per_net.iter().all(|n| n.overflow == 2));
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("full".parse::<FeatureMode>().unwrap(), FeatureMode::Full);
        assert_eq!("Reduced".parse::<FeatureMode>().unwrap(), FeatureMode::Reduced);
        assert!("half".parse::<FeatureMode>().is_err());
    }
}
