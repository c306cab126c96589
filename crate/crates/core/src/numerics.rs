//! Finite-difference kernels on level-set fields.
//!
//! Curvature is evaluated with second-order central differences on the 3x3
//! stencil of a node. The compound numerical method interpolates that nodal
//! curvature bilinearly to the gradient-projected interface point. The
//! reinitialization solver integrates `phi_tau + S(phi0)(|grad phi| - 1) = 0`
//! with a Godunov Hamiltonian and a two-stage TVD Runge-Kutta (Heun) step.
//! The one-sided differences are selectable (see [`ReinitScheme`]); the
//! smoothed sign is `S(phi0) = phi0 / sqrt(phi0^2 + h^2)` except for the
//! subcell scheme, which uses the sharp sign.

use thiserror::Error;

use crate::grid::{stencil_slot as slot, Grid, NodeId, Point2, EAST, NORTH, SOUTH, WEST};

/// Floor on `phi_x^2 + phi_y^2` below which the gradient is treated as
/// degenerate.
pub const GRADIENT_EPSILON: f64 = 1e-10;

/// Default pseudo-time CFL number.
pub const DEFAULT_CFL: f64 = 0.45;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("node {0} has no full 3x3 stencil")]
    MissingStencil(NodeId),
    #[error("degenerate gradient at node {0}")]
    DegenerateGradient(NodeId),
    #[error("point ({x}, {y}) lies outside the interpolation region")]
    OutOfBounds { x: f64, y: f64 },
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite level-set value at node {0}")]
    NonFinite(NodeId),
    #[error("invalid reinitialization parameters: {0}")]
    InvalidParams(String),
}

/// Node values of a level-set function over a grid.
#[derive(Debug, Clone)]
pub struct LevelSetField<'g, G: Grid> {
    grid: &'g G,
    phi: Vec<f64>,
}

impl<'g, G: Grid> LevelSetField<'g, G> {
    pub fn new(grid: &'g G, phi: Vec<f64>) -> Result<Self, NumericsError> {
        if phi.len() != grid.node_count() {
            return Err(NumericsError::LengthMismatch {
                expected: grid.node_count(),
                got: phi.len(),
            });
        }
        if let Some(node) = phi.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite(node));
        }
        Ok(Self { grid, phi })
    }

    /// Samples `f` at every node.
    pub fn from_fn<F: FnMut(Point2) -> f64>(grid: &'g G, mut f: F) -> Result<Self, NumericsError> {
        let phi = (0..grid.node_count()).map(|n| f(grid.position(n))).collect();
        Self::new(grid, phi)
    }

    pub fn grid(&self) -> &'g G {
        self.grid
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn into_phi(self) -> Vec<f64> {
        self.phi
    }

    pub fn negated(&self) -> Self {
        Self {
            grid: self.grid,
            phi: self.phi.iter().map(|v| -v).collect(),
        }
    }

    /// The nine stencil values of `node`, ordered as [`Grid::stencil9`].
    pub fn stencil_values(&self, node: NodeId) -> Option<[f64; 9]> {
        self.grid.stencil9(node).map(|ids| ids.map(|id| self.phi[id]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub phi_x: f64,
    pub phi_y: f64,
    pub phi_xx: f64,
    pub phi_yy: f64,
    pub phi_xy: f64,
}

impl Derivatives {
    /// Central differences from nine values in stencil order.
    pub fn from_stencil(v: &[f64; 9], h: f64) -> Self {
        let c = v[slot::C];
        Self {
            phi_x: (v[slot::E] - v[slot::W]) / (2.0 * h),
            phi_y: (v[slot::N] - v[slot::S]) / (2.0 * h),
            phi_xx: (v[slot::E] - 2.0 * c + v[slot::W]) / (h * h),
            phi_yy: (v[slot::N] - 2.0 * c + v[slot::S]) / (h * h),
            phi_xy: (v[slot::NE] - v[slot::NW] - v[slot::SE] + v[slot::SW]) / (4.0 * h * h),
        }
    }

    pub fn gradient_norm_sq(&self) -> f64 {
        self.phi_x * self.phi_x + self.phi_y * self.phi_y
    }

    /// `(phi_x^2 phi_yy - 2 phi_x phi_y phi_xy + phi_y^2 phi_xx) / |grad phi|^3`,
    /// or `None` for a degenerate gradient.
    pub fn curvature(&self) -> Option<f64> {
        let norm_sq = self.gradient_norm_sq();
        if !(norm_sq > GRADIENT_EPSILON) {
            return None;
        }
        let numerator = self.phi_x * self.phi_x * self.phi_yy
            - 2.0 * self.phi_x * self.phi_y * self.phi_xy
            + self.phi_y * self.phi_y * self.phi_xx;
        Some(numerator / (norm_sq * norm_sq.sqrt()))
    }
}

pub fn central_derivatives<G: Grid>(
    field: &LevelSetField<'_, G>,
    node: NodeId,
) -> Result<Derivatives, NumericsError> {
    let values = field
        .stencil_values(node)
        .ok_or(NumericsError::MissingStencil(node))?;
    Ok(Derivatives::from_stencil(&values, field.grid.h()))
}

pub fn node_curvature<G: Grid>(field: &LevelSetField<'_, G>, node: NodeId) -> Result<f64, NumericsError> {
    central_derivatives(field, node)?
        .curvature()
        .ok_or(NumericsError::DegenerateGradient(node))
}

/// Bilinear interpolation of arbitrary node values at `point`.
pub fn interpolate_values<G: Grid + ?Sized>(
    grid: &G,
    values: &[f64],
    point: Point2,
) -> Result<f64, NumericsError> {
    let hit = grid.locate_cell(point).ok_or(NumericsError::OutOfBounds {
        x: point.x,
        y: point.y,
    })?;
    let [sw, se, nw, ne] = hit.corners.map(|id| values[id]);
    Ok(bilinear_weights(sw, se, nw, ne, hit.s, hit.t))
}

#[inline]
fn bilinear_weights(sw: f64, se: f64, nw: f64, ne: f64, s: f64, t: f64) -> f64 {
    (1.0 - t) * ((1.0 - s) * sw + s * se) + t * ((1.0 - s) * nw + s * ne)
}

/// Bilinear interpolation of the level-set function itself.
pub fn bilinear_interp<G: Grid>(field: &LevelSetField<'_, G>, point: Point2) -> Result<f64, NumericsError> {
    interpolate_values(field.grid, &field.phi, point)
}

/// `x* = x - phi(x) grad phi / |grad phi|` with central-difference gradient.
pub fn project_to_interface<G: Grid>(
    field: &LevelSetField<'_, G>,
    node: NodeId,
) -> Result<Point2, NumericsError> {
    let d = central_derivatives(field, node)?;
    let norm_sq = d.gradient_norm_sq();
    if !(norm_sq > GRADIENT_EPSILON) {
        return Err(NumericsError::DegenerateGradient(node));
    }
    let norm = norm_sq.sqrt();
    let value = field.phi[node];
    let x = field.grid.position(node);
    Ok(Point2::new(
        x.x - value * d.phi_x / norm,
        x.y - value * d.phi_y / norm,
    ))
}

/// Nodal curvature over a whole field, computed once and reused by the
/// compound method. Nodes without a stencil or with a degenerate gradient hold
/// `None`.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    kappa: Vec<Option<f64>>,
}

impl CurvatureField {
    pub fn new<G: Grid>(field: &LevelSetField<'_, G>) -> Self {
        let kappa = (0..field.grid.node_count())
            .map(|n| node_curvature(field, n).ok())
            .collect();
        Self { kappa }
    }

    pub fn at(&self, node: NodeId) -> Option<f64> {
        self.kappa[node]
    }

    /// `h` times the nodal curvature interpolated bilinearly to `x*`.
    pub fn compound_hkappa<G: Grid>(
        &self,
        field: &LevelSetField<'_, G>,
        node: NodeId,
    ) -> Result<f64, NumericsError> {
        let target = project_to_interface(field, node)?;
        let hit = field.grid.locate_cell(target).ok_or(NumericsError::OutOfBounds {
            x: target.x,
            y: target.y,
        })?;
        let mut corner = [0.0; 4];
        for (slot, &id) in corner.iter_mut().zip(hit.corners.iter()) {
            *slot = match self.kappa[id] {
                Some(k) => k,
                None => return Err(corner_error(field, id)),
            };
        }
        let [sw, se, nw, ne] = corner;
        Ok(field.grid.h() * bilinear_weights(sw, se, nw, ne, hit.s, hit.t))
    }
}

fn corner_error<G: Grid>(field: &LevelSetField<'_, G>, node: NodeId) -> NumericsError {
    match node_curvature(field, node) {
        Err(e) => e,
        Ok(_) => NumericsError::DegenerateGradient(node),
    }
}

/// Compound numerical estimate of `h kappa` at the interface point closest to
/// `node`. Recomputes the curvature of the four interpolation corners; use
/// [`CurvatureField`] when evaluating many nodes.
pub fn compound_numerical_hkappa<G: Grid>(
    field: &LevelSetField<'_, G>,
    node: NodeId,
) -> Result<f64, NumericsError> {
    let target = project_to_interface(field, node)?;
    let hit = field.grid.locate_cell(target).ok_or(NumericsError::OutOfBounds {
        x: target.x,
        y: target.y,
    })?;
    let mut corner = [0.0; 4];
    for (slot, &id) in corner.iter_mut().zip(hit.corners.iter()) {
        *slot = node_curvature(field, id)?;
    }
    let [sw, se, nw, ne] = corner;
    Ok(field.grid.h() * bilinear_weights(sw, se, nw, ne, hit.s, hit.t))
}

/// Spatial discretization of the one-sided differences feeding the Godunov
/// Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReinitScheme {
    /// Plain first-order one-sided differences.
    FirstOrder,
    /// Second-order ENO differences (minmod-limited second derivatives).
    Eno2,
    /// Second-order ENO differences where a one-sided difference crossing the
    /// initial interface uses the subcell distance to that interface, with a
    /// node-local pseudo-time step. The subcell distance pins the interface, so
    /// this scheme uses the sharp sign of `phi0` instead of the smoothed one.
    #[default]
    Eno2Subcell,
}

impl std::str::FromStr for ReinitScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first-order" => Ok(Self::FirstOrder),
            "eno2" => Ok(Self::Eno2),
            "eno2-subcell" => Ok(Self::Eno2Subcell),
            other => Err(format!(
                "unknown reinitialization scheme '{other}' (expected first-order, eno2 or eno2-subcell)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinitParams {
    pub iterations: u32,
    pub cfl: f64,
    /// Only update nodes that own a full 3x3 stencil; every other node is
    /// frozen. Used on quadtrees to confine the solve to the uniform band.
    pub band_only: bool,
    pub scheme: ReinitScheme,
}

impl Default for ReinitParams {
    fn default() -> Self {
        Self {
            iterations: 20,
            cfl: DEFAULT_CFL,
            band_only: false,
            scheme: ReinitScheme::default(),
        }
    }
}

impl ReinitParams {
    pub fn with_iterations(iterations: u32) -> Self {
        Self {
            iterations,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.iterations > 1000 {
            return Err(NumericsError::InvalidParams(format!(
                "iterations must be at most 1000, got {}",
                self.iterations
            )));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(NumericsError::InvalidParams(format!(
                "cfl must lie in (0, 1), got {}",
                self.cfl
            )));
        }
        Ok(())
    }
}

const NO_NODE: usize = usize::MAX;

/// Smallest subcell interface distance, as a fraction of `h`.
const MIN_SUBCELL_FRACTION: f64 = 1e-3;

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Per-node, per-direction data: the neighbor at distance one, the neighbor at
/// distance two, and (subcell scheme) the distance to the initial interface
/// when it crosses the edge toward that neighbor.
#[derive(Debug, Clone, Copy)]
struct Arm {
    near: usize,
    far: usize,
    interface: Option<f64>,
}

/// Incremental reinitialization solver. Each [`Reinitializer::step`] is one
/// full RK2 pseudo-time step, so intermediate iteration counts can be read off
/// a single run.
#[derive(Debug, Clone)]
pub struct Reinitializer<'g, G: Grid> {
    grid: &'g G,
    scheme: ReinitScheme,
    phi: Vec<f64>,
    sign: Vec<f64>,
    // W, E, S, N arms of every active node, indexed like `active`.
    arms: Vec<[Arm; 4]>,
    dt: Vec<f64>,
    active: Vec<NodeId>,
    steps_taken: u32,
    stage: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'g, G: Grid> Reinitializer<'g, G> {
    pub fn new(field: &LevelSetField<'g, G>, params: &ReinitParams) -> Result<Self, NumericsError> {
        params.validate()?;
        let grid = field.grid;
        let h = grid.h();
        let n = grid.node_count();
        let phi0 = &field.phi;
        let sign = phi0
            .iter()
            .map(|&p| match params.scheme {
                ReinitScheme::Eno2Subcell => sharp_sign(p),
                _ => p / (p * p + h * h).sqrt(),
            })
            .collect();
        let neighbors: Vec<[Option<NodeId>; 4]> = (0..n).map(|node| grid.axis_neighbors(node)).collect();
        let active: Vec<NodeId> = (0..n)
            .filter(|&node| !params.band_only || grid.stencil9(node).is_some())
            .collect();

        let mut arms = Vec::with_capacity(active.len());
        let mut dt = Vec::with_capacity(active.len());
        for &node in &active {
            let nb = &neighbors[node];
            let mut node_arms = [Arm {
                near: NO_NODE,
                far: NO_NODE,
                interface: None,
            }; 4];
            let mut shortest = h;
            for dir in [WEST, EAST, SOUTH, NORTH] {
                let Some(near) = nb[dir] else { continue };
                let far = neighbors[near][dir].unwrap_or(NO_NODE);
                let opposite = nb[opposite(dir)].unwrap_or(NO_NODE);
                let interface = if params.scheme == ReinitScheme::Eno2Subcell && phi0[node] * phi0[near] < 0.0 {
                    let dist = subcell_distance(phi0, node, near, far, opposite, h);
                    shortest = shortest.min(dist);
                    Some(dist)
                } else {
                    None
                };
                node_arms[dir] = Arm {
                    near,
                    far,
                    interface,
                };
            }
            arms.push(node_arms);
            dt.push(params.cfl * shortest);
        }

        Ok(Self {
            grid,
            scheme: params.scheme,
            phi: phi0.clone(),
            sign,
            arms,
            dt,
            active,
            steps_taken: 0,
            stage: vec![0.0; n],
            rhs: vec![0.0; n],
        })
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps_taken
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn field(&self) -> LevelSetField<'g, G> {
        LevelSetField {
            grid: self.grid,
            phi: self.phi.clone(),
        }
    }

    /// One Heun step: two forward-Euler stages, then the average of the
    /// initial state and the second stage.
    pub fn step(&mut self) {
        evaluate_rhs(self, true);
        // Frozen nodes keep their values in the intermediate stage.
        self.stage.copy_from_slice(&self.phi);
        for (k, &node) in self.active.iter().enumerate() {
            self.stage[node] = self.phi[node] + self.dt[k] * self.rhs[k];
        }
        evaluate_rhs(self, false);
        for (k, &node) in self.active.iter().enumerate() {
            let second = self.stage[node] + self.dt[k] * self.rhs[k];
            self.phi[node] = 0.5 * (self.phi[node] + second);
        }
        self.steps_taken += 1;
    }

    pub fn run(&mut self, iterations: u32) {
        for _ in 0..iterations {
            self.step();
        }
    }
}

#[inline]
fn sharp_sign(p: f64) -> f64 {
    if p > 0.0 {
        1.0
    } else if p < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn opposite(dir: usize) -> usize {
    match dir {
        WEST => EAST,
        EAST => WEST,
        SOUTH => NORTH,
        _ => SOUTH,
    }
}

/// Distance from `node` to the zero of `phi0` on the edge toward `near`, from
/// a quadratic interpolant whose second difference is minmod-limited.
fn subcell_distance(phi0: &[f64], node: usize, near: usize, far: usize, opposite: usize, h: f64) -> f64 {
    let p0 = phi0[node];
    let p1 = phi0[near];
    let dd_node = (opposite != NO_NODE).then(|| (phi0[opposite] - 2.0 * p0 + p1) / (h * h));
    let dd_near = (far != NO_NODE).then(|| (phi0[far] - 2.0 * p1 + p0) / (h * h));
    let curvature = match (dd_node, dd_near) {
        (Some(a), Some(b)) => minmod(a, b),
        _ => 0.0,
    };
    let linear = h * p0 / (p0 - p1);
    let dist = if curvature.abs() * h * h <= 1e-10 * (p0.abs() + p1.abs()) {
        linear
    } else {
        // p(x) = p0 + (p1 - p0) x / h + curvature / 2 * x (x - h), 0 <= x <= h.
        let qa = 0.5 * curvature;
        let qb = (p1 - p0) / h - 0.5 * curvature * h;
        let disc = qb * qb - 4.0 * qa * p0;
        if disc < 0.0 {
            linear
        } else {
            let root = disc.sqrt();
            let r1 = (-qb - root) / (2.0 * qa);
            let r2 = (-qb + root) / (2.0 * qa);
            [r1, r2]
                .into_iter()
                .filter(|x| (0.0..=h).contains(x))
                .fold(None, |best: Option<f64>, x| {
                    Some(best.map_or(x, |b| if (x - linear).abs() < (b - linear).abs() { x } else { b }))
                })
                .unwrap_or(linear)
        }
    };
    dist.clamp(MIN_SUBCELL_FRACTION * h, h)
}

/// `-S(phi0) (|grad phi|_Godunov - 1)` at every active node.
fn evaluate_rhs<G: Grid>(solver: &mut Reinitializer<'_, G>, from_phi: bool) {
    let h = solver.grid.h();
    let values: &[f64] = if from_phi { &solver.phi } else { &solver.stage };
    for (k, &node) in solver.active.iter().enumerate() {
        let s = solver.sign[node];
        if s == 0.0 {
            solver.rhs[k] = 0.0;
            continue;
        }
        let arms = &solver.arms[k];
        let (a, b) = axis_differences(values, node, &arms[WEST], &arms[EAST], h, solver.scheme);
        let (c, d) = axis_differences(values, node, &arms[SOUTH], &arms[NORTH], h, solver.scheme);
        let grad_sq = if s > 0.0 {
            a.max(0.0).powi(2).max(b.min(0.0).powi(2)) + c.max(0.0).powi(2).max(d.min(0.0).powi(2))
        } else {
            a.min(0.0).powi(2).max(b.max(0.0).powi(2)) + c.min(0.0).powi(2).max(d.max(0.0).powi(2))
        };
        solver.rhs[k] = -s * (grad_sq.sqrt() - 1.0);
    }
}

/// Backward and forward differences along one axis. A missing side reuses the
/// other one.
#[inline]
fn axis_differences(values: &[f64], node: usize, minus: &Arm, plus: &Arm, h: f64, scheme: ReinitScheme) -> (f64, f64) {
    let center = values[node];
    let dd_center = (minus.near != NO_NODE && plus.near != NO_NODE)
        .then(|| (values[minus.near] - 2.0 * center + values[plus.near]) / (h * h));
    let one_side = |arm: &Arm, forward: bool| -> Option<f64> {
        if arm.near == NO_NODE {
            return None;
        }
        if scheme == ReinitScheme::FirstOrder {
            let diff = (values[arm.near] - center) / h;
            return Some(if forward { diff } else { -diff });
        }
        let limited = match dd_center {
            Some(dc) if arm.far != NO_NODE => {
                minmod(dc, (values[arm.far] - 2.0 * values[arm.near] + center) / (h * h))
            }
            _ => 0.0,
        };
        // Subcell arms see the zero crossing at `dist` instead of the neighbor at `h`.
        let (reach, value) = match arm.interface {
            Some(dist) => (dist, 0.0),
            None => (h, values[arm.near]),
        };
        Some(if forward {
            (value - center) / reach - 0.5 * reach * limited
        } else {
            (center - value) / reach + 0.5 * reach * limited
        })
    };
    let back = one_side(minus, false);
    let fwd = one_side(plus, true);
    match (back, fwd) {
        (Some(b), Some(f)) => (b, f),
        (Some(b), None) => (b, b),
        (None, Some(f)) => (f, f),
        (None, None) => (0.0, 0.0),
    }
}

/// Runs `params.iterations` reinitialization steps and returns the new field.
pub fn reinitialize<'g, G: Grid>(
    field: &LevelSetField<'g, G>,
    params: &ReinitParams,
) -> Result<LevelSetField<'g, G>, NumericsError> {
    let mut solver = Reinitializer::new(field, params)?;
    solver.run(params.iterations);
    Ok(LevelSetField {
        grid: field.grid,
        phi: solver.phi,
    })
}
