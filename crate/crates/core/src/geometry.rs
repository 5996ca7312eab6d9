//! Notched rectangle, node lattice, bond table and boundary loading.
//!
//! Nodes sit at the centers of a uniform `h`-lattice on
//! `R = (0, a) x (-b/2, b/2)`. The notch is the open slot
//! `C = {|x2| < d, x1 < ell0 - d}` capped by the open disk of radius `d`
//! centered at `(ell0 - d, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub a: f64,
    pub b: f64,
    pub ell0: f64,
    /// Notch half-width.
    pub d: f64,
    pub epsilon: f64,
    /// `epsilon / h`.
    pub h_ratio: u32,
    /// Thickness of the loading layers.
    pub delta: f64,
    /// Subsamples per cell side for the partial-area weights.
    pub n_sub: u32,
}

impl DomainSpec {
    /// Rectangle `a x b`, notch of length `ell0`, half-width and layer
    /// thickness equal to the horizon.
    pub fn new(a: f64, b: f64, ell0: f64, epsilon: f64, h_ratio: u32) -> Self {
        Self {
            a,
            b,
            ell0,
            d: epsilon,
            epsilon,
            h_ratio,
            delta: epsilon,
            n_sub: 8,
        }
    }

    pub fn h(&self) -> f64 {
        self.epsilon / self.h_ratio as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Input(format!("{name} must be positive, got {v}")))
            }
        };
        positive("a", self.a)?;
        positive("b", self.b)?;
        positive("epsilon", self.epsilon)?;
        positive("delta", self.delta)?;
        if self.h_ratio < 2 {
            return Err(Error::Input(format!("h_ratio must be >= 2, got {}", self.h_ratio)));
        }
        if self.n_sub == 0 {
            return Err(Error::Input("n_sub must be >= 1".into()));
        }
        if !(self.ell0 >= 0.0 && self.ell0 < self.a) {
            return Err(Error::Input(format!(
                "notch length {} must lie in [0, a = {})",
                self.ell0, self.a
            )));
        }
        if !(self.d >= 0.0 && self.d <= self.epsilon) {
            return Err(Error::Input(format!(
                "notch half-width {} must lie in [0, epsilon = {}]",
                self.d, self.epsilon
            )));
        }
        if self.delta >= 0.5 * self.b {
            return Err(Error::Input(format!(
                "layer thickness {} must be below b/2 = {}",
                self.delta,
                0.5 * self.b
            )));
        }
        self.cell_counts().map(|_| ())
    }

    /// Lattice cells along each axis; `h` must divide both extents.
    pub fn cell_counts(&self) -> Result<(usize, usize)> {
        let h = self.h();
        let count = |name: &str, len: f64| {
            let n = (len / h).round();
            if n < 1.0 || ((n * h - len) / len).abs() > 1e-9 {
                Err(Error::Input(format!("grid spacing {h} does not divide {name} = {len}")))
            } else {
                Ok(n as usize)
            }
        };
        Ok((count("a", self.a)?, count("b", self.b)?))
    }

    /// Whether `p` lies in the open notch.
    pub fn in_notch(&self, p: Vec2) -> bool {
        if self.ell0 <= 0.0 {
            return false;
        }
        let tip = self.ell0 - self.d;
        if p[0] < tip && p[1].abs() < self.d {
            return true;
        }
        let dx = p[0] - tip;
        dx * dx + p[1] * p[1] < self.d * self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Interior,
    Top,
    Bottom,
}

/// Node positions of the lattice with the notch removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub positions: Vec<Vec2>,
    /// Lattice indices `(i, j)` of each node.
    pub cells: Vec<(u32, u32)>,
    pub layers: Vec<Layer>,
    /// Node id of each lattice cell, `u32::MAX` where the notch removed it.
    lookup: Vec<u32>,
}

pub const NO_NODE: u32 = u32::MAX;

impl Grid {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn node_volume(&self) -> f64 {
        self.h * self.h
    }

    pub fn node_at(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            return None;
        }
        let id = self.lookup[j as usize * self.nx + i as usize];
        (id != NO_NODE).then_some(id as usize)
    }

    /// The node reflected across `x2 = 0`.
    pub fn mirror(&self, node: usize) -> Option<usize> {
        let (i, j) = self.cells[node];
        self.node_at(i as i64, (self.ny - 1 - j as usize) as i64)
    }

    /// Lattice position of cell `(i, j)`; exactly antisymmetric in `x2`.
    pub fn cell_center(h: f64, ny: usize, i: usize, j: usize) -> Vec2 {
        [(i as f64 + 0.5) * h, (j as f64 - 0.5 * (ny as f64 - 1.0)) * h]
    }
}

pub fn build_grid(spec: &DomainSpec) -> Result<Grid> {
    spec.validate()?;
    let (nx, ny) = spec.cell_counts()?;
    let h = spec.h();
    let half_b = 0.5 * spec.b;
    let mut positions = Vec::with_capacity(nx * ny);
    let mut cells = Vec::with_capacity(nx * ny);
    let mut layers = Vec::with_capacity(nx * ny);
    let mut lookup = vec![NO_NODE; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let p = Grid::cell_center(h, ny, i, j);
            if spec.in_notch(p) {
                continue;
            }
            lookup[j * nx + i] = positions.len() as u32;
            let layer = if p[1] > half_b - spec.delta && p[1] < half_b {
                Layer::Top
            } else if p[1] < -half_b + spec.delta && p[1] > -half_b {
                Layer::Bottom
            } else {
                Layer::Interior
            };
            positions.push(p);
            cells.push((i as u32, j as u32));
            layers.push(layer);
        }
    }
    Ok(Grid {
        nx,
        ny,
        h,
        positions,
        cells,
        layers,
        lookup,
    })
}

/// Fraction of the cell at lattice offset `(di, dj)` inside the horizon of
/// radius `m` cells, from an `n x n` subsample test in integer arithmetic.
pub fn cell_area_fraction(di: i64, dj: i64, m: i64, n: i64) -> f64 {
    let r2 = (2 * n * m) * (2 * n * m);
    let mut inside = 0i64;
    for kx in 0..n {
        let x = 2 * n * di - n + 2 * kx + 1;
        for ky in 0..n {
            let y = 2 * n * dj - n + 2 * ky + 1;
            if x * x + y * y < r2 {
                inside += 1;
            }
        }
    }
    inside as f64 / (n * n) as f64
}

/// Lattice offsets inside one horizon, shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub offsets: Vec<(i32, i32)>,
    pub lengths: Vec<f64>,
    pub directions: Vec<Vec2>,
    /// `h^2` times the area fraction.
    pub weights: Vec<f64>,
    /// Stencil id of the offset reflected in `x2`.
    pub mirror: Vec<u16>,
}

impl Stencil {
    pub fn new(h_ratio: u32, n_sub: u32, h: f64) -> Self {
        let m = h_ratio as i32;
        let mut offsets = Vec::new();
        for di in -m..=m {
            for dj in -m..=m {
                if (di, dj) != (0, 0) && di * di + dj * dj < m * m {
                    offsets.push((di, dj));
                }
            }
        }
        offsets.sort_by_key(|&(di, dj)| (di, dj.abs(), dj));
        let lengths: Vec<f64> = offsets
            .iter()
            .map(|&(di, dj)| h * ((di * di + dj * dj) as f64).sqrt())
            .collect();
        let directions = offsets
            .iter()
            .map(|&(di, dj)| {
                let n = ((di * di + dj * dj) as f64).sqrt();
                [di as f64 / n, dj as f64 / n]
            })
            .collect();
        let weights = offsets
            .iter()
            .map(|&(di, dj)| h * h * cell_area_fraction(di as i64, dj as i64, m as i64, n_sub as i64))
            .collect();
        let mirror = offsets
            .iter()
            .map(|&(di, dj)| offsets.iter().position(|&o| o == (di, -dj)).unwrap() as u16)
            .collect();
        Self {
            offsets,
            lengths,
            directions,
            weights,
            mirror,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum BondState {
    Alive = 0,
    /// Broken during the evolution.
    Failed = 1,
    /// Crosses the initial notch.
    Excluded = 2,
}

/// Neighbor lists in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BondTable {
    pub stencil: Stencil,
    /// Bonds of node `i` are `start[i]..start[i + 1]`.
    pub start: Vec<u32>,
    pub neighbor: Vec<u32>,
    pub stencil_id: Vec<u16>,
    pub state: Vec<BondState>,
    /// Index of the bond `j -> i` for each bond `i -> j`.
    pub reverse: Vec<u32>,
}

impl BondTable {
    pub fn len(&self) -> usize {
        self.neighbor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.start.len() - 1
    }

    #[inline]
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.start[i] as usize..self.start[i + 1] as usize
    }

    #[inline]
    pub fn length(&self, k: usize) -> f64 {
        self.stencil.lengths[self.stencil_id[k] as usize]
    }

    #[inline]
    pub fn direction(&self, k: usize) -> Vec2 {
        self.stencil.directions[self.stencil_id[k] as usize]
    }

    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        self.stencil.weights[self.stencil_id[k] as usize]
    }

    #[inline]
    pub fn is_alive(&self, k: usize) -> bool {
        self.state[k] == BondState::Alive
    }

    /// Fraction of dead bonds at each node.
    pub fn damage(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|i| {
                let r = self.range(i);
                if r.is_empty() {
                    return 0.0;
                }
                let dead = self.state[r.clone()].iter().filter(|s| **s != BondState::Alive).count();
                dead as f64 / r.len() as f64
            })
            .collect()
    }
}

pub fn build_bonds(grid: &Grid, spec: &DomainSpec) -> BondTable {
    let stencil = Stencil::new(spec.h_ratio, spec.n_sub, grid.h);
    let n = grid.len();
    let mut start = Vec::with_capacity(n + 1);
    let mut neighbor = Vec::new();
    let mut stencil_id = Vec::new();
    let mut state = Vec::new();
    start.push(0u32);
    let center = 0.5 * (grid.ny as f64 - 1.0);
    for (node, &(ci, cj)) in grid.cells.iter().enumerate() {
        // Below the centerline the stencil is walked in mirrored order so that
        // reflected nodes accumulate reflected terms in the same sequence.
        let below = (cj as f64) < center;
        for s in 0..stencil.len() {
            let sid = if below { stencil.mirror[s] as usize } else { s };
            let (di, dj) = stencil.offsets[sid];
            let Some(j) = grid.node_at(ci as i64 + di as i64, cj as i64 + dj as i64) else {
                continue;
            };
            neighbor.push(j as u32);
            stencil_id.push(sid as u16);
            state.push(
                if segment_crosses_notch(grid.positions[node], grid.positions[j], spec) {
                    BondState::Excluded
                } else {
                    BondState::Alive
                },
            );
        }
        start.push(neighbor.len() as u32);
    }
    let mut reverse = vec![0u32; neighbor.len()];
    for i in 0..n {
        for k in start[i] as usize..start[i + 1] as usize {
            let j = neighbor[k] as usize;
            let back = (start[j] as usize..start[j + 1] as usize)
                .find(|&q| neighbor[q] as usize == i)
                .expect("neighbor relation is symmetric");
            reverse[k] = back as u32;
        }
    }
    BondTable {
        stencil,
        start,
        neighbor,
        stencil_id,
        state,
        reverse,
    }
}

/// Whether the closed segment `[x, y]` meets the open notch or the closed
/// initial centerline `[0, ell0] x {0}`.
pub fn segment_crosses_notch(x: Vec2, y: Vec2, spec: &DomainSpec) -> bool {
    if spec.ell0 <= 0.0 {
        return false;
    }
    let tip = spec.ell0 - spec.d;
    if spec.d > 0.0 {
        if segment_meets_open_slab(x, y, tip, spec.d) {
            return true;
        }
        if segment_disk_distance2(x, y, [tip, 0.0]) < spec.d * spec.d {
            return true;
        }
    }
    segment_crosses_centerline(x, y, 0.0, spec.ell0)
}

/// Whether the segment meets `{x1 < x_max, |x2| < d}`.
fn segment_meets_open_slab(x: Vec2, y: Vec2, x_max: f64, d: f64) -> bool {
    let dir = [y[0] - x[0], y[1] - x[1]];
    // constraints a + b t < 0
    let constraints = [(x[0] - x_max, dir[0]), (x[1] - d, dir[1]), (-x[1] - d, -dir[1])];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (a, b) in constraints {
        if b == 0.0 {
            if a >= 0.0 {
                return false;
            }
        } else if b > 0.0 {
            hi = hi.min(-a / b);
        } else {
            lo = lo.max(-a / b);
        }
    }
    lo < hi && lo < 1.0 && hi > 0.0
}

fn segment_disk_distance2(x: Vec2, y: Vec2, c: Vec2) -> f64 {
    let dir = [y[0] - x[0], y[1] - x[1]];
    let len2 = dir[0] * dir[0] + dir[1] * dir[1];
    let t = if len2 > 0.0 {
        (((c[0] - x[0]) * dir[0] + (c[1] - x[1]) * dir[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p = [x[0] + t * dir[0] - c[0], x[1] + t * dir[1] - c[1]];
    p[0] * p[0] + p[1] * p[1]
}

/// Whether the closed segment meets `{x2 = 0, lo <= x1 <= hi}`.
///
/// The crossing point is compared without dividing, so the answer is exact
/// whenever the products involved are.
pub fn segment_crosses_centerline(x: Vec2, y: Vec2, lo: f64, hi: f64) -> bool {
    if (x[1] > 0.0 && y[1] > 0.0) || (x[1] < 0.0 && y[1] < 0.0) {
        return false;
    }
    if x[1] == 0.0 && y[1] == 0.0 {
        return x[0].min(y[0]) <= hi && x[0].max(y[0]) >= lo;
    }
    // crossing at p = num / den with den > 0
    let (mut num, mut den) = (x[1] * y[0] - x[0] * y[1], x[1] - y[1]);
    if den < 0.0 {
        num = -num;
        den = -den;
    }
    lo * den <= num && num <= hi * den
}

/// The `x1`-range where the segment meets the line `x2 = 0`.
pub fn centerline_intersection(x: Vec2, y: Vec2) -> Option<(f64, f64)> {
    if (x[1] > 0.0 && y[1] > 0.0) || (x[1] < 0.0 && y[1] < 0.0) {
        return None;
    }
    if x[1] == 0.0 && y[1] == 0.0 {
        return Some((x[0].min(y[0]), x[0].max(y[0])));
    }
    let t = x[1] / (x[1] - y[1]);
    let p = x[0] + t * (y[0] - x[0]);
    Some((p, p))
}

/// Equal and opposite traction ramp on the top and bottom layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    pub f0: f64,
    pub t_ramp: f64,
    pub delta: f64,
}

impl LoadSchedule {
    pub fn ramp(&self, t: f64) -> f64 {
        if self.t_ramp <= 0.0 {
            1.0
        } else {
            (t / self.t_ramp).clamp(0.0, 1.0)
        }
    }

    /// Body force density magnitude on the layers.
    pub fn magnitude(&self, t: f64) -> f64 {
        self.f0 * self.ramp(t) / self.delta
    }

    #[inline]
    pub fn at(&self, layer: Layer, t: f64) -> Vec2 {
        match layer {
            Layer::Interior => [0.0, 0.0],
            Layer::Top => [0.0, self.magnitude(t)],
            Layer::Bottom => [0.0, -self.magnitude(t)],
        }
    }
}

pub fn body_force(grid: &Grid, t: f64, schedule: &LoadSchedule) -> Vec<Vec2> {
    grid.layers.iter().map(|&l| schedule.at(l, t)).collect()
}

/// Axis-aligned box translating rigidly with the crack tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub center: Vec2,
    pub half_widths: Vec2,
    pub velocity: Vec2,
}

impl ContourSpec {
    #[inline]
    pub fn contains(&self, p: Vec2) -> bool {
        (p[0] - self.center[0]).abs() < self.half_widths[0] && (p[1] - self.center[1]).abs() < self.half_widths[1]
    }

    /// Whether the box keeps a margin of `margin` from the rectangle and the notch.
    pub fn fits(&self, spec: &DomainSpec, margin: f64) -> bool {
        let lo = [
            self.center[0] - self.half_widths[0],
            self.center[1] - self.half_widths[1],
        ];
        let hi = [
            self.center[0] + self.half_widths[0],
            self.center[1] + self.half_widths[1],
        ];
        lo[0] >= margin && hi[0] <= spec.a - margin && lo[1] >= -0.5 * spec.b + margin && hi[1] <= 0.5 * spec.b - margin
    }

    pub fn translated(&self, dt: f64) -> Self {
        Self {
            center: [
                self.center[0] + self.velocity[0] * dt,
                self.center[1] + self.velocity[1] * dt,
            ],
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_size_spec() -> DomainSpec {
        DomainSpec::new(0.1, 0.3, 0.025, 2.5e-3, 4)
    }

    fn small_spec() -> DomainSpec {
        DomainSpec::new(0.02, 0.02, 0.008, 2e-3, 4)
    }

    #[test]
    fn full_size_lattice() {
        let spec = full_size_spec();
        assert_eq!(spec.cell_counts().unwrap(), (160, 480));
        let grid = build_grid(&spec).unwrap();
        assert!(grid.len() < 160 * 480);
        // slot of height 2d = 8h and length ell0 = 40h, minus the rounded tip
        let removed = 160 * 480 - grid.len();
        assert!(removed > 8 * 36 && removed <= 8 * 40, "removed {removed}");
        for p in &grid.positions {
            assert!(p[1] > -0.15 && p[1] < 0.15);
            assert!(p[0] > 0.0 && p[0] < 0.1);
            assert!(!spec.in_notch(*p));
        }
    }

    #[test]
    fn incommensurate_spacing_is_rejected() {
        let mut spec = small_spec();
        spec.a = 0.0201;
        assert!(matches!(build_grid(&spec), Err(Error::Input(_))));
        let mut spec = small_spec();
        spec.h_ratio = 1;
        assert!(build_grid(&spec).is_err());
        let mut spec = small_spec();
        spec.d = 2.0 * spec.epsilon;
        assert!(build_grid(&spec).is_err());
    }

    #[test]
    fn zero_notch_keeps_everything() {
        let mut spec = small_spec();
        spec.ell0 = 0.0;
        let grid = build_grid(&spec).unwrap();
        assert_eq!(grid.len(), 40 * 40);
        let bonds = build_bonds(&grid, &spec);
        assert!(bonds.state.iter().all(|s| *s == BondState::Alive));
    }

    #[test]
    fn layers_partition_strips() {
        let spec = small_spec();
        let grid = build_grid(&spec).unwrap();
        for (p, l) in grid.positions.iter().zip(&grid.layers) {
            let top = p[1] > 0.01 - spec.delta;
            let bottom = p[1] < -0.01 + spec.delta;
            match l {
                Layer::Top => assert!(top),
                Layer::Bottom => assert!(bottom),
                Layer::Interior => assert!(!top && !bottom),
            }
        }
        let top = grid.layers.iter().filter(|l| **l == Layer::Top).count();
        assert_eq!(top, 4 * 40);
    }

    #[test]
    fn mirror_is_exact() {
        let spec = small_spec();
        let grid = build_grid(&spec).unwrap();
        for i in 0..grid.len() {
            let m = grid.mirror(i).unwrap();
            assert_eq!(grid.positions[m][0], grid.positions[i][0]);
            assert_eq!(grid.positions[m][1], -grid.positions[i][1]);
        }
    }

    #[test]
    fn full_and_straddling_cells() {
        assert_eq!(cell_area_fraction(1, 0, 4, 8), 1.0);
        assert_eq!(cell_area_fraction(2, 2, 4, 8), 1.0);
        assert_eq!(cell_area_fraction(6, 0, 4, 8), 0.0);
    }

    /// Monte-Carlo area of the unit-spaced cell at `(di, dj)` inside radius `m`.
    fn monte_carlo_fraction(di: f64, dj: f64, m: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut hits = 0usize;
        for _ in 0..samples {
            let x = di + rng.gen_range(-0.5..0.5);
            let y = dj + rng.gen_range(-0.5..0.5);
            if x * x + y * y < m * m {
                hits += 1;
            }
        }
        hits as f64 / samples as f64
    }

    #[test]
    fn boundary_cell_fraction_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 8;
        let tol = 2.0 / (n * n) as f64;
        let v = cell_area_fraction(4, 0, 4, n);
        let oracle = monte_carlo_fraction(4.0, 0.0, 4.0, 400_000, &mut rng);
        assert!((v - oracle).abs() <= tol, "{v} vs {oracle}");
        assert!((v - 0.5).abs() <= tol);
        for &(di, dj) in &[(3, 2), (2, 3), (1, 4), (3, -3), (0, 4)] {
            let v = cell_area_fraction(di, dj, 4, n);
            let oracle = monte_carlo_fraction(di as f64, dj as f64, 4.0, 400_000, &mut rng);
            assert!((v - oracle).abs() <= tol, "({di},{dj}): {v} vs {oracle}");
        }
    }

    #[test]
    fn overlap_fractions_sum_to_disk_area() {
        // Every lattice cell meeting the horizon, not only those whose centers
        // lie inside, tiles the disk.
        for m in [4i64, 8] {
            let mut total = 0.0;
            for di in -m - 1..=m + 1 {
                for dj in -m - 1..=m + 1 {
                    total += cell_area_fraction(di, dj, m, 8);
                }
            }
            let disk = std::f64::consts::PI * (m * m) as f64;
            assert!((total - disk).abs() / disk < 0.01, "m={m}: {total} vs {disk}");
        }
    }

    #[test]
    fn stencil_weights_cover_most_of_the_disk() {
        let h = 1.0;
        let s = Stencil::new(4, 8, h);
        let sum: f64 = s.weights.iter().sum::<f64>() + h * h * cell_area_fraction(0, 0, 4, 8);
        let disk = std::f64::consts::PI * 16.0;
        assert!(sum < disk && sum > 0.85 * disk);
    }

    #[test]
    fn bond_table_symmetry_and_bounds() {
        let spec = small_spec();
        let grid = build_grid(&spec).unwrap();
        let bonds = build_bonds(&grid, &spec);
        let bound = (std::f64::consts::PI * (spec.h_ratio as f64 + 1.0).powi(2)).ceil() as usize;
        let tol = 2.0 / (spec.n_sub * spec.n_sub) as f64 * grid.h * grid.h;
        for i in 0..grid.len() {
            assert!(bonds.range(i).len() <= bound);
            for k in bonds.range(i) {
                let j = bonds.neighbor[k] as usize;
                let r = bonds.reverse[k] as usize;
                assert_eq!(bonds.neighbor[r] as usize, i);
                assert_eq!(bonds.length(k), bonds.length(r));
                assert!((bonds.weight(k) - bonds.weight(r)).abs() <= tol);
                let (e, f) = (bonds.direction(k), bonds.direction(r));
                assert_eq!(e[0], -f[0]);
                assert_eq!(e[1], -f[1]);
                assert_eq!(bonds.state[k], bonds.state[r]);
                assert!(bonds.length(k) < spec.epsilon);
                let xi = grid.positions[i];
                let xj = grid.positions[j];
                let dist = ((xj[0] - xi[0]).powi(2) + (xj[1] - xi[1]).powi(2)).sqrt();
                assert_relative_eq!(dist, bonds.length(k), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn excluded_bonds_are_those_crossing_the_notch() {
        // with d = epsilon no bond spans the slot, so use a thin one
        let mut spec = small_spec();
        spec.d = spec.h();
        let grid = build_grid(&spec).unwrap();
        let bonds = build_bonds(&grid, &spec);
        let mut excluded = 0;
        for i in 0..grid.len() {
            for k in bonds.range(i) {
                let j = bonds.neighbor[k] as usize;
                let crosses = segment_crosses_notch(grid.positions[i], grid.positions[j], &spec);
                assert_eq!(crosses, bonds.state[k] == BondState::Excluded);
                excluded += crosses as usize;
            }
        }
        assert!(excluded > 0);
    }

    #[test]
    fn builds_are_deterministic() {
        let spec = small_spec();
        let g1 = build_grid(&spec).unwrap();
        let g2 = build_grid(&spec).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(build_bonds(&g1, &spec), build_bonds(&g2, &spec));
    }

    #[test]
    fn notch_predicate_examples() {
        let spec = full_size_spec();
        let h = spec.h();
        assert!(segment_crosses_notch([0.02, h / 2.0], [0.02, -h / 2.0], &spec));
        assert!(!segment_crosses_notch([0.02, 0.01], [0.03, 0.004], &spec));
        assert!(segment_crosses_notch([0.01, 0.0], [0.01, 0.01], &spec));
        // touching the slot boundary from outside does not count
        assert!(!segment_crosses_notch([0.01, spec.d], [0.015, spec.d], &spec));
        // ahead of the tip
        assert!(!segment_crosses_notch([0.0255, 0.001], [0.0255, -0.001], &spec));
        // the closed centerline reaches the tip point
        let mut slit = spec;
        slit.d = 0.0;
        assert!(segment_crosses_notch([0.025, 0.001], [0.025, -0.001], &slit));
        assert!(!segment_crosses_notch([0.0251, 0.001], [0.0251, -0.001], &slit));
    }

    #[test]
    fn centerline_predicate() {
        assert!(segment_crosses_centerline([1.0, 1.0], [1.0, -1.0], 0.0, 1.0));
        assert!(!segment_crosses_centerline([1.5, 1.0], [1.5, -1.0], 0.0, 1.0));
        assert!(segment_crosses_centerline([0.5, 0.0], [0.7, 1.0], 0.0, 1.0));
        assert!(segment_crosses_centerline([-1.0, 0.0], [2.0, 0.0], 0.0, 1.0));
        assert!(!segment_crosses_centerline([0.5, 0.1], [0.7, 1.0], 0.0, 1.0));
    }

    #[test]
    fn body_force_ramp_and_balance() {
        let spec = small_spec();
        let grid = build_grid(&spec).unwrap();
        let load = LoadSchedule {
            f0: 1e10,
            t_ramp: 350e-6,
            delta: spec.delta,
        };
        assert!(body_force(&grid, 0.0, &load).iter().all(|b| *b == [0.0, 0.0]));
        for t in [350e-6, 400e-6, 560e-6] {
            let b = body_force(&grid, t, &load);
            let top = grid.layers.iter().position(|l| *l == Layer::Top).unwrap();
            assert_eq!(b[top], [0.0, 1e10 / spec.delta]);
            let sum: f64 = b.iter().map(|f| f[1]).sum();
            let scale: f64 = b.iter().map(|f| f[1].abs()).sum();
            assert!(sum.abs() <= 1e-14 * scale);
        }
        let mut prev = 0.0;
        for k in 0..=1000 {
            let r = load.ramp(k as f64 * 560e-9);
            assert!(r >= prev);
            prev = r;
        }
    }
}
