//! Uniform Cartesian grids and quadtree adaptive grids.
//!
//! Both grid kinds expose their nodes through the [`Grid`] trait so that the
//! finite-difference kernels in [`crate::numerics`] can run on either one. On a
//! quadtree, all stencil-based operations are restricted to the uniform band of
//! finest-level cells that surrounds the interface.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

/// Index of a node in a grid's node table.
pub type NodeId = usize;

/// Neighbor slots in the order returned by [`Grid::axis_neighbors`].
pub const WEST: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const NORTH: usize = 3;

/// Positions inside a 9-point stencil (top row left to right, then middle row,
/// then bottom row).
pub mod stencil_slot {
    pub const NW: usize = 0;
    pub const N: usize = 1;
    pub const NE: usize = 2;
    pub const W: usize = 3;
    pub const C: usize = 4;
    pub const E: usize = 5;
    pub const SW: usize = 6;
    pub const S: usize = 7;
    pub const SE: usize = 8;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("domain is not square: width {width} vs height {height}")]
    NonSquareDomain { width: f64, height: f64 },
    #[error("domain bounds are empty or not finite")]
    InvalidBounds,
    #[error("a grid needs at least 3 nodes per side, got {0}")]
    TooFewNodes(usize),
    #[error("quadtree max level {0} exceeds 31")]
    MaxLevelTooLarge(u32),
    #[error("Lipschitz constant must be positive and finite, got {0}")]
    InvalidLipschitz(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned square region `[min.x, min.x + side] x [min.y, min.y + side]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareDomain {
    pub min: Point2,
    pub side: f64,
}

impl SquareDomain {
    /// Builds a domain from its bounds, rejecting non-square rectangles.
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, GridError> {
        let width = x_max - x_min;
        let height = y_max - y_min;
        if !(width.is_finite() && height.is_finite()) || width <= 0.0 || height <= 0.0 {
            return Err(GridError::InvalidBounds);
        }
        if (width - height).abs() > 1e-12 * width.max(height) {
            return Err(GridError::NonSquareDomain { width, height });
        }
        Ok(Self {
            min: Point2::new(x_min, y_min),
            side: width,
        })
    }

    /// The square `[-half_width, half_width]^2`.
    pub fn centered(half_width: f64) -> Result<Self, GridError> {
        Self::new(-half_width, half_width, -half_width, half_width)
    }

    pub fn unit() -> Self {
        Self {
            min: Point2::new(0.0, 0.0),
            side: 1.0,
        }
    }

    pub fn max(&self) -> Point2 {
        Point2::new(self.min.x + self.side, self.min.y + self.side)
    }
}

/// Cell of a grid located around a query point, with the bilinear local
/// coordinates of that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellHit {
    /// Corner nodes ordered SW, SE, NW, NE.
    pub corners: [NodeId; 4],
    /// Local x coordinate in `[0, 1]`.
    pub s: f64,
    /// Local y coordinate in `[0, 1]`.
    pub t: f64,
}

/// Read-only node access shared by uniform grids and quadtrees.
pub trait Grid {
    fn node_count(&self) -> usize;

    /// Node spacing used by stencils (the finest spacing on a quadtree).
    fn h(&self) -> f64;

    fn position(&self, node: NodeId) -> Point2;

    /// Neighbors at spacing `h` along the axes, ordered W, E, S, N.
    fn axis_neighbors(&self, node: NodeId) -> [Option<NodeId>; 4];

    /// The 3x3 neighborhood at spacing `h`, ordered top row left to right,
    /// middle row, bottom row. `None` when the neighborhood is incomplete.
    fn stencil9(&self, node: NodeId) -> Option<[NodeId; 9]>;

    /// Finest-spacing cell containing `point`, or `None` when the point lies
    /// outside the grid or (quadtree) outside the uniform band.
    fn locate_cell(&self, point: Point2) -> Option<CellHit>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    origin: Point2,
    h: f64,
    nx: usize,
    ny: usize,
}

/// Builds a square uniform grid with `nodes_per_side` nodes along each axis.
///
/// Node ids are row-major from the domain origin: `id = j * nx + i`.
pub fn build_uniform(domain: SquareDomain, nodes_per_side: usize) -> Result<UniformGrid, GridError> {
    if nodes_per_side < 3 {
        return Err(GridError::TooFewNodes(nodes_per_side));
    }
    let h = domain.side / (nodes_per_side - 1) as f64;
    Ok(UniformGrid {
        origin: domain.min,
        h,
        nx: nodes_per_side,
        ny: nodes_per_side,
    })
}

impl UniformGrid {
    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn node_id(&self, i: usize, j: usize) -> NodeId {
        j * self.nx + i
    }

    #[inline]
    pub fn node_ij(&self, node: NodeId) -> (usize, usize) {
        (node % self.nx, node / self.nx)
    }

    pub fn coordinate(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + i as f64 * self.h,
            self.origin.y + j as f64 * self.h,
        )
    }

    /// Samples `f` at every node, in node-id order.
    pub fn sample<F: FnMut(Point2) -> f64>(&self, mut f: F) -> Vec<f64> {
        (0..self.node_count()).map(|n| f(self.position(n))).collect()
    }
}

impl Grid for UniformGrid {
    fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    fn h(&self) -> f64 {
        self.h
    }

    fn position(&self, node: NodeId) -> Point2 {
        let (i, j) = self.node_ij(node);
        self.coordinate(i, j)
    }

    fn axis_neighbors(&self, node: NodeId) -> [Option<NodeId>; 4] {
        let (i, j) = self.node_ij(node);
        [
            (i > 0).then(|| node - 1),
            (i + 1 < self.nx).then(|| node + 1),
            (j > 0).then(|| node - self.nx),
            (j + 1 < self.ny).then(|| node + self.nx),
        ]
    }

    fn stencil9(&self, node: NodeId) -> Option<[NodeId; 9]> {
        let (i, j) = self.node_ij(node);
        if i == 0 || j == 0 || i + 1 >= self.nx || j + 1 >= self.ny {
            return None;
        }
        let up = node + self.nx;
        let down = node - self.nx;
        Some([
            up - 1,
            up,
            up + 1,
            node - 1,
            node,
            node + 1,
            down - 1,
            down,
            down + 1,
        ])
    }

    fn locate_cell(&self, point: Point2) -> Option<CellHit> {
        let u = (point.x - self.origin.x) / self.h;
        let v = (point.y - self.origin.y) / self.h;
        let max_u = (self.nx - 1) as f64;
        let max_v = (self.ny - 1) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
            return None;
        }
        let i = (u.floor() as usize).min(self.nx - 2);
        let j = (v.floor() as usize).min(self.ny - 2);
        let sw = self.node_id(i, j);
        Some(CellHit {
            corners: [sw, sw + 1, sw + self.nx, sw + self.nx + 1],
            s: u - i as f64,
            t: v - j as f64,
        })
    }
}

/// Nodes that sit on the interface or have an axis edge crossed by it.
///
/// A node is included when `phi(node) == 0`, or when `phi(node) * phi(n) < 0`
/// for one of its axis neighbors `n`. Results are in ascending node order.
pub fn interface_adjacent_nodes<G: Grid + ?Sized>(grid: &G, phi: &[f64]) -> Vec<NodeId> {
    debug_assert_eq!(phi.len(), grid.node_count());
    (0..grid.node_count())
        .filter(|&node| {
            let value = phi[node];
            value == 0.0
                || grid
                    .axis_neighbors(node)
                    .iter()
                    .flatten()
                    .any(|&n| value * phi[n] < 0.0)
        })
        .collect()
}

/// Geometric summary of a quadtree cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellView {
    pub level: u32,
    pub min: Point2,
    pub side: f64,
    /// Corner nodes ordered SW, SE, NW, NE.
    pub vertices: [NodeId; 4],
}

impl CellView {
    pub fn diagonal(&self) -> f64 {
        self.side * std::f64::consts::SQRT_2
    }
}

#[derive(Debug, Clone)]
struct Cell {
    level: u32,
    // Lower-left corner in finest-level units.
    ix: u64,
    iy: u64,
    first_child: Option<usize>,
}

/// Quadtree over a square domain, refined toward the zero level set of a field.
#[derive(Debug, Clone)]
pub struct QuadtreeGrid {
    domain: SquareDomain,
    max_level: u32,
    h_min: f64,
    cells: Vec<Cell>,
    node_coords: Vec<(u64, u64)>,
    node_table: HashMap<(u64, u64), NodeId>,
    phi: Vec<f64>,
    finest_leaves: HashSet<(u64, u64)>,
}

/// Builds a quadtree by recursive subdivision from the root cell.
///
/// A cell is split iff its level is below `max_level` and
/// `min_{v in V(C)} |phi(v)| <= lipschitz * diag(C)`. The field callback is
/// evaluated once per distinct vertex.
pub fn build_quadtree<F>(
    domain: SquareDomain,
    max_level: u32,
    mut phi: F,
    lipschitz: f64,
) -> Result<QuadtreeGrid, GridError>
where
    F: FnMut(Point2) -> f64,
{
    if max_level > 31 {
        return Err(GridError::MaxLevelTooLarge(max_level));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(GridError::InvalidLipschitz(lipschitz));
    }
    let h_min = domain.side / (1u64 << max_level) as f64;
    let to_point = |ix: u64, iy: u64| {
        Point2::new(
            domain.min.x + ix as f64 * h_min,
            domain.min.y + iy as f64 * h_min,
        )
    };

    let mut samples: HashMap<(u64, u64), f64> = HashMap::new();
    let mut sample_at = |ix: u64, iy: u64, samples: &mut HashMap<(u64, u64), f64>| -> f64 {
        *samples
            .entry((ix, iy))
            .or_insert_with(|| phi(to_point(ix, iy)))
    };

    let mut cells = vec![Cell {
        level: 0,
        ix: 0,
        iy: 0,
        first_child: None,
    }];
    let mut stack = vec![0usize];
    while let Some(index) = stack.pop() {
        let Cell { level, ix, iy, .. } = cells[index];
        let size = 1u64 << (max_level - level);
        let min_abs = [(ix, iy), (ix + size, iy), (ix, iy + size), (ix + size, iy + size)]
            .into_iter()
            .map(|(x, y)| sample_at(x, y, &mut samples).abs())
            .fold(f64::INFINITY, f64::min);
        let diag = size as f64 * h_min * std::f64::consts::SQRT_2;
        if level < max_level && min_abs <= lipschitz * diag {
            let half = size / 2;
            let first = cells.len();
            for (dx, dy) in [(0, 0), (half, 0), (0, half), (half, half)] {
                cells.push(Cell {
                    level: level + 1,
                    ix: ix + dx,
                    iy: iy + dy,
                    first_child: None,
                });
            }
            cells[index].first_child = Some(first);
            stack.extend(first..first + 4);
        }
    }

    let mut coords: Vec<(u64, u64)> = Vec::new();
    let mut finest_leaves = HashSet::new();
    for cell in cells.iter().filter(|c| c.first_child.is_none()) {
        let size = 1u64 << (max_level - cell.level);
        coords.extend([
            (cell.ix, cell.iy),
            (cell.ix + size, cell.iy),
            (cell.ix, cell.iy + size),
            (cell.ix + size, cell.iy + size),
        ]);
        if cell.level == max_level {
            finest_leaves.insert((cell.ix, cell.iy));
        }
    }
    // Row-major from the origin.
    coords.sort_unstable_by_key(|&(x, y)| (y, x));
    coords.dedup();
    let node_table: HashMap<(u64, u64), NodeId> =
        coords.iter().enumerate().map(|(id, &c)| (c, id)).collect();
    let phi_values = coords
        .iter()
        .map(|&(x, y)| sample_at(x, y, &mut samples))
        .collect();

    Ok(QuadtreeGrid {
        domain,
        max_level,
        h_min,
        cells,
        node_coords: coords,
        node_table,
        phi: phi_values,
        finest_leaves,
    })
}

impl QuadtreeGrid {
    pub fn domain(&self) -> SquareDomain {
        self.domain
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Field values sampled from the construction callback, in node order.
    pub fn sampled_phi(&self) -> &[f64] {
        &self.phi
    }

    /// Node at the given finest-level integer coordinates.
    pub fn node_at(&self, ix: u64, iy: u64) -> Option<NodeId> {
        self.node_table.get(&(ix, iy)).copied()
    }

    pub fn node_coords(&self, node: NodeId) -> (u64, u64) {
        self.node_coords[node]
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = CellView> + '_ {
        self.cells
            .iter()
            .filter(|c| c.first_child.is_none())
            .map(move |c| self.view(c))
    }

    /// Whether the cell at these indices is a leaf and every child-count
    /// invariant holds for the subtree (each cell has 0 or 4 children).
    pub fn children_are_complete(&self) -> bool {
        self.cells.iter().all(|c| match c.first_child {
            None => true,
            Some(first) => {
                first + 4 <= self.cells.len()
                    && self.cells[first..first + 4]
                        .iter()
                        .all(|child| child.level == c.level + 1)
            }
        })
    }

    fn view(&self, cell: &Cell) -> CellView {
        let size = 1u64 << (self.max_level - cell.level);
        let id = |x, y| self.node_table[&(x, y)];
        CellView {
            level: cell.level,
            min: self.point_of(cell.ix, cell.iy),
            side: size as f64 * self.h_min,
            vertices: [
                id(cell.ix, cell.iy),
                id(cell.ix + size, cell.iy),
                id(cell.ix, cell.iy + size),
                id(cell.ix + size, cell.iy + size),
            ],
        }
    }

    fn point_of(&self, ix: u64, iy: u64) -> Point2 {
        Point2::new(
            self.domain.min.x + ix as f64 * self.h_min,
            self.domain.min.y + iy as f64 * self.h_min,
        )
    }

    fn is_finest_leaf(&self, ix: u64, iy: u64) -> bool {
        self.finest_leaves.contains(&(ix, iy))
    }
}

impl Grid for QuadtreeGrid {
    fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    fn h(&self) -> f64 {
        self.h_min
    }

    fn position(&self, node: NodeId) -> Point2 {
        let (x, y) = self.node_coords[node];
        self.point_of(x, y)
    }

    fn axis_neighbors(&self, node: NodeId) -> [Option<NodeId>; 4] {
        let (x, y) = self.node_coords[node];
        [
            x.checked_sub(1).and_then(|xm| self.node_at(xm, y)),
            self.node_at(x + 1, y),
            y.checked_sub(1).and_then(|ym| self.node_at(x, ym)),
            self.node_at(x, y + 1),
        ]
    }

    /// Available only when all four cells touching the node are finest-level
    /// leaves, so the 3x3 neighborhood is uniform at `h_min`.
    fn stencil9(&self, node: NodeId) -> Option<[NodeId; 9]> {
        let (x, y) = self.node_coords[node];
        if x == 0 || y == 0 {
            return None;
        }
        let surrounded = [(x - 1, y - 1), (x, y - 1), (x - 1, y), (x, y)]
            .into_iter()
            .all(|(cx, cy)| self.is_finest_leaf(cx, cy));
        if !surrounded {
            return None;
        }
        let mut out = [0; 9];
        for (slot, (dx, dy)) in [
            (-1i64, 1i64),
            (0, 1),
            (1, 1),
            (-1, 0),
            (0, 0),
            (1, 0),
            (-1, -1),
            (0, -1),
            (1, -1),
        ]
        .into_iter()
        .enumerate()
        {
            let nx = (x as i64 + dx) as u64;
            let ny = (y as i64 + dy) as u64;
            out[slot] = self.node_at(nx, ny)?;
        }
        Some(out)
    }

    fn locate_cell(&self, point: Point2) -> Option<CellHit> {
        let u = (point.x - self.domain.min.x) / self.h_min;
        let v = (point.y - self.domain.min.y) / self.h_min;
        let extent = (1u64 << self.max_level) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= extent && v <= extent) {
            return None;
        }
        let last = (1u64 << self.max_level) - 1;
        let ix = (u.floor() as u64).min(last);
        let iy = (v.floor() as u64).min(last);
        if !self.is_finest_leaf(ix, iy) {
            return None;
        }
        Some(CellHit {
            corners: [
                self.node_at(ix, iy)?,
                self.node_at(ix + 1, iy)?,
                self.node_at(ix, iy + 1)?,
                self.node_at(ix + 1, iy + 1)?,
            ],
            s: u - ix as f64,
            t: v - iy as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> UniformGrid {
        build_uniform(SquareDomain::unit(), n).unwrap()
    }

    #[test]
    fn uniform_spacing_matches_node_count() {
        assert!((unit_grid(256).h() - 1.0 / 255.0).abs() < 1e-18);
        assert!((unit_grid(256).h() - 3.921569e-3).abs() < 5e-10);
        let g = build_uniform(SquareDomain::centered(0.207843).unwrap(), 107).unwrap();
        assert!((g.h() - 3.921569e-3).abs() < 5e-9);
        assert_eq!(unit_grid(3).h(), 0.5);
    }

    #[test]
    fn non_square_domain_is_rejected() {
        assert!(matches!(
            SquareDomain::new(0.0, 1.0, 0.0, 2.0),
            Err(GridError::NonSquareDomain { .. })
        ));
        assert!(build_uniform(SquareDomain::unit(), 2).is_err());
    }

    #[test]
    fn node_ordering_is_row_major() {
        let g = unit_grid(5);
        assert_eq!(g.position(0), Point2::new(0.0, 0.0));
        assert_eq!(g.position(1), Point2::new(0.25, 0.0));
        assert_eq!(g.position(5), Point2::new(0.0, 0.25));
    }

    #[test]
    fn stencil_layout_and_boundaries() {
        let g = unit_grid(5);
        let c = g.node_id(2, 2);
        let s = g.stencil9(c).unwrap();
        assert_eq!(s[stencil_slot::C], c);
        assert_eq!(s[stencil_slot::NW], g.node_id(1, 3));
        assert_eq!(s[stencil_slot::N], g.node_id(2, 3));
        assert_eq!(s[stencil_slot::SE], g.node_id(3, 1));
        assert!(g.stencil9(0).is_none());
        assert!(g.stencil9(g.node_id(4, 2)).is_none());
        let count = (0..g.node_count()).filter_map(|n| g.stencil9(n)).count();
        assert_eq!(count, 3 * 3);
    }

    #[test]
    fn adjacency_edge_cases() {
        let g = unit_grid(9);
        assert!(interface_adjacent_nodes(&g, &vec![1.0; 81]).is_empty());
        let mut phi = vec![1.0; 81];
        phi[40] = 0.0;
        assert_eq!(interface_adjacent_nodes(&g, &phi), vec![40]);
        let mut phi = vec![1.0; 81];
        phi[40] = -1.0;
        assert_eq!(
            interface_adjacent_nodes(&g, &phi),
            vec![31, 39, 40, 41, 49]
        );
    }

    #[test]
    fn adjacent_nodes_of_sdf_circle_lie_within_a_diagonal() {
        let g = build_uniform(SquareDomain::unit(), 107).unwrap();
        let phi = g.sample(|p| p.distance(Point2::new(0.5, 0.5)) - 0.25);
        let nodes = interface_adjacent_nodes(&g, &phi);
        assert!(!nodes.is_empty());
        let bound = g.h() * std::f64::consts::SQRT_2;
        for n in nodes {
            let exact = (g.position(n).distance(Point2::new(0.5, 0.5)) - 0.25).abs();
            assert!(exact <= bound, "node {n} at distance {exact}");
        }
    }

    #[test]
    fn uniform_locate_cell() {
        let g = unit_grid(5);
        let hit = g.locate_cell(Point2::new(0.3, 0.6)).unwrap();
        assert_eq!(hit.corners[0], g.node_id(1, 2));
        assert!((hit.s - 0.2).abs() < 1e-12 && (hit.t - 0.4).abs() < 1e-12);
        assert!(g.locate_cell(Point2::new(1.0, 1.0)).is_some());
        assert!(g.locate_cell(Point2::new(1.01, 0.5)).is_none());
    }

    /// Two-level tree refined around a single point so that the lower-left
    /// quadrant and its neighbors reach level 2.
    fn small_tree() -> QuadtreeGrid {
        let domain = SquareDomain::unit();
        let target = Point2::new(0.5, 0.5);
        build_quadtree(domain, 2, |p| p.distance(target) - 0.1, 1.2).unwrap()
    }

    #[test]
    fn split_rules() {
        // A vertex on the interface always splits below max level.
        let t = build_quadtree(SquareDomain::unit(), 1, |p| p.x, 1.2).unwrap();
        assert_eq!(t.cell_count(), 5);
        // Far from the interface nothing splits.
        let t = build_quadtree(
            SquareDomain::unit(),
            3,
            |_| 10.0 * std::f64::consts::SQRT_2,
            1.2,
        )
        .unwrap();
        assert_eq!(t.cell_count(), 1);
        assert_eq!(t.node_count(), 4);
        assert!(build_quadtree(SquareDomain::unit(), 32, |_| 1.0, 1.2).is_err());
        assert!(build_quadtree(SquareDomain::unit(), 2, |_| 1.0, 0.0).is_err());
    }

    #[test]
    fn quadtree_nodes_are_hash_consed() {
        let t = small_tree();
        assert!(t.children_are_complete());
        let mut coords: Vec<(u64, u64)> = Vec::new();
        for leaf in t.leaves() {
            let size = (leaf.side / t.h()).round() as u64;
            let (x, y) = t.node_coords(leaf.vertices[0]);
            coords.extend([(x, y), (x + size, y), (x, y + size), (x + size, y + size)]);
            assert!((leaf.side - 1.0 / f64::from(1u32 << leaf.level)).abs() < 1e-15);
            assert!((leaf.diagonal() - leaf.side * 2f64.sqrt()).abs() < 1e-15);
        }
        coords.sort_unstable();
        coords.dedup();
        assert_eq!(coords.len(), t.node_count());
    }

    #[test]
    fn quadtree_stencil_on_hand_built_band() {
        // All 16 level-2 cells exist when every vertex is close to the interface.
        let t = build_quadtree(SquareDomain::unit(), 2, |_| 0.0, 1.2).unwrap();
        assert_eq!(t.node_count(), 25);
        let center = t.node_at(2, 2).unwrap();
        let s = t.stencil9(center).unwrap();
        let expected: Vec<NodeId> = [(1, 3), (2, 3), (3, 3), (1, 2), (2, 2), (3, 2), (1, 1), (2, 1), (3, 1)]
            .iter()
            .map(|&(x, y)| t.node_at(x, y).unwrap())
            .collect();
        assert_eq!(s.to_vec(), expected);
        for pair in s.windows(2).take(2) {
            let d = t.position(pair[0]).distance(t.position(pair[1]));
            assert!((d - t.h()).abs() < 1e-15);
        }
        assert!(t.stencil9(t.node_at(0, 0).unwrap()).is_none());

        // With coarse cells on one side the band is incomplete there.
        let t = small_tree();
        for node in 0..t.node_count() {
            if let Some(s) = t.stencil9(node) {
                for n in s {
                    let (x, y) = t.node_coords(n);
                    let (cx, cy) = t.node_coords(node);
                    assert!(x.abs_diff(cx) <= 1 && y.abs_diff(cy) <= 1);
                }
            }
        }
    }
}
