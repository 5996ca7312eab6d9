//! Energies, softening and failure sets, crack-tip kinematics, strain
//! splitting, the discrete nonlocal divergence identity and the moving-box
//! power balance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BondKernel, Frame};
use crate::geometry::{centerline_intersection, BondState, BondTable, ContourSpec, DomainSpec, Stencil, Vec2};
use crate::material::{MaterialModel, OMEGA_2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub external_work: f64,
    pub dissipated: f64,
    /// `kinetic + potential + dissipated - external_work`.
    pub residual: f64,
}

/// Energy density `sum_j l W(S_ij) w_ij` of each node over alive bonds.
pub fn node_energy_density(bonds: &BondTable, kernel: &BondKernel, u: &[Vec2]) -> Vec<f64> {
    (0..bonds.num_nodes())
        .into_par_iter()
        .map(|i| node_energy(i, bonds, kernel, u))
        .collect()
}

#[inline]
fn node_energy(i: usize, bonds: &BondTable, kernel: &BondKernel, u: &[Vec2]) -> f64 {
    let mut w = 0.0;
    for k in bonds.range(i) {
        if bonds.state[k] != BondState::Alive {
            continue;
        }
        let s = bonds.stencil_id[k] as usize;
        w += kernel.energy(s, kernel.strain(s, bonds, u[i], u[bonds.neighbor[k] as usize]));
    }
    w
}

pub fn kinetic_energy(v: &[Vec2], rho: f64, volume: f64) -> f64 {
    v.iter().map(|v| 0.5 * rho * (v[0] * v[0] + v[1] * v[1])).sum::<f64>() * volume
}

pub fn energy_ledger(frame: &Frame) -> EnergyLedger {
    let vol = frame.grid.node_volume();
    let kinetic = kinetic_energy(frame.v, frame.model.rho, vol);
    let potential = node_energy_density(frame.bonds, frame.kernel, frame.u)
        .iter()
        .sum::<f64>()
        * vol;
    EnergyLedger {
        t: frame.t,
        kinetic,
        potential,
        external_work: frame.external_work,
        dissipated: frame.dissipated,
        residual: kinetic + potential + frame.dissipated - frame.external_work,
    }
}

/// Softening zone (some non-excluded bond at `|S| >= S_c`) and failure set
/// (some failed bond) as node flags.
pub fn softening_zone(bonds: &BondTable, kernel: &BondKernel, u: &[Vec2]) -> (Vec<bool>, Vec<bool>) {
    (0..bonds.num_nodes())
        .into_par_iter()
        .map(|i| {
            let mut soft = false;
            let mut failed = false;
            for k in bonds.range(i) {
                match bonds.state[k] {
                    BondState::Excluded => continue,
                    BondState::Failed => failed = true,
                    BondState::Alive => {}
                }
                if !soft {
                    let s = bonds.stencil_id[k] as usize;
                    let strain = kernel.strain(s, bonds, u[i], u[bonds.neighbor[k] as usize]);
                    soft = strain.abs() >= kernel.s_c[s];
                }
            }
            (soft, failed)
        })
        .unzip()
}

/// Softening-zone nodes outside the failure set that lie farther than
/// `radius` from the tip `(ell, 0)`.
pub fn softening_outside_failure(positions: &[Vec2], soft: &[bool], failed: &[bool], ell: f64, radius: f64) -> usize {
    positions
        .iter()
        .zip(soft.iter().zip(failed))
        .filter(|(p, (s, f))| **s && !**f && ((p[0] - ell).powi(2) + p[1] * p[1]).sqrt() > radius)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrackTipSample {
    pub t: f64,
    pub ell: f64,
    pub v: f64,
    pub n_soft: usize,
    pub n_failed: usize,
}

/// Running crack length from the failure ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackTracker {
    ell0: f64,
    ell: f64,
    seen: usize,
}

impl CrackTracker {
    pub fn new(ell0: f64) -> Self {
        Self {
            ell0,
            ell: ell0,
            seen: 0,
        }
    }

    /// Largest `x1` where a failed bond meets `x2 = 0`, at least `ell0`.
    pub fn update(&mut self, positions: &[Vec2], ledger: &[crate::dynamics::BreakEvent]) -> f64 {
        for ev in &ledger[self.seen.min(ledger.len())..] {
            let (x, y) = (positions[ev.i as usize], positions[ev.j as usize]);
            if let Some((_, hi)) = centerline_intersection(x, y) {
                self.ell = self.ell.max(hi);
            }
        }
        self.seen = ledger.len();
        self.ell
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }
}

/// Crack length from the bond table alone.
pub fn crack_length(positions: &[Vec2], bonds: &BondTable, spec: &DomainSpec) -> f64 {
    let mut ell = spec.ell0;
    for i in 0..bonds.num_nodes() {
        for k in bonds.range(i) {
            if bonds.state[k] == BondState::Failed {
                if let Some((_, hi)) = centerline_intersection(positions[i], positions[bonds.neighbor[k] as usize]) {
                    ell = ell.max(hi);
                }
            }
        }
    }
    ell
}

/// Centered difference of `ell` over `window` output frames, one-sided at
/// the ends of the record, clamped at zero.
pub fn tip_velocity(t: &[f64], ell: &[f64], window: usize) -> Vec<f64> {
    let n = t.len();
    let half = (window / 2).max(1);
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n.saturating_sub(1));
            if hi <= lo {
                return 0.0;
            }
            ((ell[hi] - ell[lo]) / (t[hi] - t[lo])).max(0.0)
        })
        .collect()
}

/// `(I_minus, I_plus)`: the horizon-weighted strain against the test
/// function `phi`, split at `|S| = S_c`; the second part sums over
/// softening-zone nodes only.
pub fn strain_split(
    bonds: &BondTable,
    kernel: &BondKernel,
    model: &MaterialModel,
    epsilon: f64,
    u: &[Vec2],
    phi: &[f64],
    volume: f64,
) -> (f64, f64) {
    let st = &bonds.stencil;
    let (minus, plus): (Vec<f64>, Vec<f64>) = (0..bonds.num_nodes())
        .into_par_iter()
        .map(|i| {
            if phi[i] == 0.0 {
                return (0.0, 0.0);
            }
            let (mut lo, mut hi) = (0.0, 0.0);
            for k in bonds.range(i) {
                if bonds.state[k] == BondState::Excluded {
                    continue;
                }
                let s = bonds.stencil_id[k] as usize;
                let r = st.lengths[s] / epsilon;
                let weight = r * model.influence.eval(r) * st.weights[s];
                let strain = kernel.strain(s, bonds, u[i], u[bonds.neighbor[k] as usize]);
                if strain.abs() < kernel.s_c[s] {
                    lo += weight * strain;
                } else {
                    hi += weight * strain;
                }
            }
            (lo * phi[i], hi * phi[i])
        })
        .unzip();
    let scale = volume / (epsilon * epsilon * OMEGA_2);
    (minus.iter().sum::<f64>() * scale, plus.iter().sum::<f64>() * scale)
}

/// Both sides of the discrete nonlocal divergence identity for a vector field
/// `w`: the interior sum `sum_{i in P} sum_j phi_ij` over full neighborhoods and
/// the exterior-interior sum `sum_{i in P} sum_{j notin P} phi_ij`, with
/// `phi_ij = dW/dS(S_ij) e_ij . (w_i + w_j) w_ij V` over alive bonds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    pub interior: f64,
    pub exterior: f64,
    /// Sum of `|phi_ij|`, the scale for relative residuals.
    pub scale: f64,
}

impl DivergenceCheck {
    pub fn residual(&self) -> f64 {
        (self.interior - self.exterior).abs()
    }

    pub fn relative_residual(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.residual() / self.scale
        }
    }
}

pub fn nonlocal_divergence_check(
    positions: &[Vec2],
    bonds: &BondTable,
    kernel: &BondKernel,
    u: &[Vec2],
    w: &[Vec2],
    volume: f64,
    contour: &ContourSpec,
) -> DivergenceCheck {
    let inside: Vec<bool> = positions.iter().map(|p| contour.contains(*p)).collect();
    let mut check = DivergenceCheck {
        interior: 0.0,
        exterior: 0.0,
        scale: 0.0,
    };
    for i in (0..positions.len()).filter(|&i| inside[i]) {
        for k in bonds.range(i) {
            if let Some((j, phi)) = pair_flux(i, k, bonds, kernel, u, w) {
                check.interior += phi * volume;
                check.scale += phi.abs() * volume;
                if !inside[j] {
                    check.exterior += phi * volume;
                }
            }
        }
    }
    check
}

/// `dW/dS(S_ij) w_ij e_ij . (w_i + w_j)` for an alive bond.
#[inline]
fn pair_flux(
    i: usize,
    k: usize,
    bonds: &BondTable,
    kernel: &BondKernel,
    u: &[Vec2],
    w: &[Vec2],
) -> Option<(usize, f64)> {
    if bonds.state[k] != BondState::Alive {
        return None;
    }
    let j = bonds.neighbor[k] as usize;
    let s = bonds.stencil_id[k] as usize;
    // kernel.force is 2 dW/dS w
    let f = 0.5 * kernel.force(s, kernel.strain(s, bonds, u[i], u[j]));
    let e = bonds.stencil.directions[s];
    Some((j, f * (e[0] * (w[i][0] + w[j][0]) + e[1] * (w[i][1] + w[j][1]))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBalanceSample {
    pub t: f64,
    pub box_center: f64,
    pub box_velocity: f64,
    pub d_e_dt: f64,
    pub flux_advective: f64,
    pub flux_nonlocal: f64,
    pub residual: f64,
}

/// One frame of the moving-box bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BoxFrame {
    t: f64,
    center: f64,
    energy: f64,
    /// `sum (T + W) (e1 . n) h` over the left and right collars.
    collar: f64,
    flux_nonlocal: f64,
}

/// Power balance on a box that follows the crack tip.
///
/// The box starts at `start_x1` and its center is the larger of that value
/// and the running mean of the crack length over `window` frames, capped so
/// the box stays `epsilon` inside the rectangle. Samples lag one frame
/// because the rate of change of the box energy is a centered difference.
#[derive(Debug, Clone)]
pub struct PowerTracker {
    half_widths: Vec2,
    start_x1: f64,
    max_x1: f64,
    window: usize,
    ells: Vec<f64>,
    frames: Vec<BoxFrame>,
}

impl PowerTracker {
    pub fn new(spec: &DomainSpec, half_widths: Vec2, start_x1: f64, window: usize) -> Self {
        Self {
            half_widths,
            start_x1,
            max_x1: spec.a - spec.epsilon - half_widths[0],
            window: window.max(1),
            ells: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn contour_at(&self, center: f64) -> ContourSpec {
        ContourSpec {
            center: [center, 0.0],
            half_widths: self.half_widths,
            velocity: [0.0, 0.0],
        }
    }

    fn center_for(&self) -> f64 {
        let n = self.ells.len();
        let lo = n.saturating_sub(self.window);
        let mean = self.ells[lo..].iter().sum::<f64>() / (n - lo) as f64;
        self.start_x1.max(mean).min(self.max_x1.max(self.start_x1))
    }

    /// Records a frame; returns the sample for the previous one once two
    /// neighbors are known.
    pub fn observe(&mut self, frame: &Frame, ell: f64) -> Option<PowerBalanceSample> {
        self.ells.push(ell);
        let center = self.center_for();
        let contour = self.contour_at(center);
        let h = frame.grid.h;
        let vol = frame.grid.node_volume();
        let rho = frame.model.rho;
        let positions = &frame.grid.positions;
        let inside: Vec<bool> = positions.iter().map(|p| contour.contains(*p)).collect();
        let left_edge = center - self.half_widths[0];
        let right_edge = center + self.half_widths[0];

        let (energy, collar, flux) = (0..positions.len())
            .into_par_iter()
            .filter(|&i| inside[i])
            .map(|i| {
                let v = frame.v[i];
                let density = 0.5 * rho * (v[0] * v[0] + v[1] * v[1])
                    + node_energy(i, frame.bonds, frame.kernel, frame.u)
                    + frame.frozen_density[i];
                let x = positions[i][0];
                let mut collar = 0.0;
                if x > right_edge - h {
                    collar += density * h;
                }
                if x < left_edge + h {
                    collar -= density * h;
                }
                let mut flux = 0.0;
                for k in frame.bonds.range(i) {
                    if let Some((j, phi)) = pair_flux(i, k, frame.bonds, frame.kernel, frame.u, frame.v) {
                        if !inside[j] {
                            // counted from the exterior node: phi_ji = -phi_ij
                            flux -= phi * vol;
                        }
                    }
                }
                (density * vol, collar, flux)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2));

        self.frames.push(BoxFrame {
            t: frame.t,
            center,
            energy,
            collar,
            flux_nonlocal: flux,
        });
        let n = self.frames.len();
        if n < 3 {
            return None;
        }
        let (a, b, c) = (self.frames[n - 3], self.frames[n - 2], self.frames[n - 1]);
        let span = c.t - a.t;
        let d_e_dt = (c.energy - a.energy) / span;
        let velocity = (c.center - a.center) / span;
        let flux_advective = velocity * b.collar;
        Some(PowerBalanceSample {
            t: b.t,
            box_center: b.center,
            box_velocity: velocity,
            d_e_dt,
            flux_advective,
            flux_nonlocal: b.flux_nonlocal,
            residual: d_e_dt - (flux_advective - b.flux_nonlocal),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticRow {
    pub t: f64,
    pub v: f64,
    pub j_flux: f64,
    pub gc_v: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticReport {
    pub rows: Vec<KineticRow>,
    /// Frames of the longest run of positive tip speed, if at least
    /// `min_frames` long.
    pub steady_window: Option<(usize, usize)>,
    pub median_ratio: Option<f64>,
}

/// Tabulates the energy flux into the box, `-flux_nonlocal`, against
/// `G_c V`. Samples are matched by time.
pub fn kinetic_relation_report(
    crack: &[CrackTipSample],
    power: &[PowerBalanceSample],
    gc: f64,
    min_frames: usize,
) -> KineticReport {
    let mut rows = Vec::new();
    let mut ci = 0;
    for p in power {
        while ci < crack.len() && crack[ci].t < p.t {
            ci += 1;
        }
        let Some(c) = crack.get(ci).filter(|c| c.t == p.t) else {
            continue;
        };
        let j_flux = -p.flux_nonlocal;
        let gc_v = gc * c.v;
        rows.push(KineticRow {
            t: p.t,
            v: c.v,
            j_flux,
            gc_v,
            ratio: (c.v > 0.0).then(|| j_flux / gc_v),
        });
    }
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for k in 0..=rows.len() {
        let moving = rows.get(k).is_some_and(|r| r.v > 0.0);
        match (moving, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| k - s > b - a) {
                    best = Some((s, k));
                }
                start = None;
            }
            _ => {}
        }
    }
    let steady_window = best.filter(|(a, b)| b - a >= min_frames);
    let median_ratio = steady_window.and_then(|(a, b)| {
        let mut r: Vec<f64> = rows[a..b].iter().filter_map(|r| r.ratio).collect();
        median(&mut r)
    });
    KineticReport {
        rows,
        steady_window,
        median_ratio,
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Largest deviation from mode-I symmetry over mirrored node pairs, relative
/// to the largest displacement.
pub fn symmetry_deviation(grid: &crate::geometry::Grid, u: &[Vec2]) -> f64 {
    let scale = u.iter().map(|u| u[0].abs().max(u[1].abs())).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut dev: f64 = 0.0;
    for i in 0..grid.len() {
        if let Some(m) = grid.mirror(i) {
            dev = dev.max((u[i][0] - u[m][0]).abs()).max((u[i][1] + u[m][1]).abs());
        }
    }
    dev / scale
}

/// Fraction of crack-face nodes behind the tip whose vertical displacement
/// points away from the centerline, with the number of such nodes.
pub fn opening_fraction(positions: &[Vec2], failed: &[bool], u: &[Vec2], ell0: f64, ell: f64) -> (f64, usize) {
    let mut total = 0usize;
    let mut open = 0usize;
    for ((p, f), u) in positions.iter().zip(failed).zip(u) {
        if !*f || p[0] <= ell0 || p[0] >= ell || p[1] == 0.0 {
            continue;
        }
        total += 1;
        if u[1] * p[1] > 0.0 {
            open += 1;
        }
    }
    if total == 0 {
        (1.0, 0)
    } else {
        (open as f64 / total as f64, total)
    }
}

/// Fraction of alive bonds not crossing the centerline with
/// `|S| sqrt(l) > r_c`.
pub fn strain_bound_violation(positions: &[Vec2], bonds: &BondTable, kernel: &BondKernel, u: &[Vec2]) -> f64 {
    let mut total = 0usize;
    let mut over = 0usize;
    for i in 0..bonds.num_nodes() {
        for k in bonds.range(i) {
            if bonds.state[k] != BondState::Alive {
                continue;
            }
            let j = bonds.neighbor[k] as usize;
            if positions[i][1] * positions[j][1] <= 0.0 {
                continue;
            }
            total += 1;
            let s = bonds.stencil_id[k] as usize;
            if kernel.strain(s, bonds, u[i], u[j]).abs() >= kernel.s_c[s] {
                over += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        over as f64 / total as f64
    }
}

/// Quadratic field `u_c(x) = x . A_c x / 2 + g_c . x` with Hessians `A_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticField {
    pub hessians: [[[f64; 2]; 2]; 2],
    pub gradient: [[f64; 2]; 2],
}

impl QuadraticField {
    pub fn eval(&self, x: Vec2) -> Vec2 {
        let mut u = [0.0; 2];
        for (c, uc) in u.iter_mut().enumerate() {
            let a = &self.hessians[c];
            let g = &self.gradient[c];
            *uc = 0.5 * (a[0][0] * x[0] * x[0] + 2.0 * a[0][1] * x[0] * x[1] + a[1][1] * x[1] * x[1])
                + g[0] * x[0]
                + g[1] * x[1];
        }
        u
    }

    pub fn laplacian(&self) -> Vec2 {
        [
            self.hessians[0][0][0] + self.hessians[0][1][1],
            self.hessians[1][0][0] + self.hessians[1][1][1],
        ]
    }

    /// Gradient of `div u`.
    pub fn grad_div(&self) -> Vec2 {
        [
            self.hessians[0][0][0] + self.hessians[1][0][1],
            self.hessians[0][0][1] + self.hessians[1][1][1],
        ]
    }

    /// `div sigma = mu lap u + (lambda + mu) grad div u`.
    pub fn div_stress(&self, mu: f64, lambda: f64) -> Vec2 {
        let (l, g) = (self.laplacian(), self.grad_div());
        [mu * l[0] + (lambda + mu) * g[0], mu * l[1] + (lambda + mu) * g[1]]
    }
}

/// Force density at a bulk lattice node `x` from the full stencil of
/// horizon `epsilon` and spacing `epsilon / h_ratio`.
pub fn bulk_force<F: Fn(Vec2) -> Vec2>(
    model: &MaterialModel,
    epsilon: f64,
    h_ratio: u32,
    n_sub: u32,
    x: Vec2,
    field: F,
) -> Vec2 {
    let h = epsilon / h_ratio as f64;
    let st = Stencil::new(h_ratio, n_sub, h);
    let ux = field(x);
    let mut f = [0.0; 2];
    for s in 0..st.len() {
        let (di, dj) = st.offsets[s];
        let y = [x[0] + di as f64 * h, x[1] + dj as f64 * h];
        let uy = field(y);
        let l = st.lengths[s];
        let e = st.directions[s];
        let strain = ((uy[0] - ux[0]) * e[0] + (uy[1] - ux[1]) * e[1]) / l;
        let mag = 2.0 * model.pair_potential_slope(epsilon, l, strain) * st.weights[s];
        f[0] += mag * e[0];
        f[1] += mag * e[1];
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLimitRow {
    pub epsilon: f64,
    pub h_ratio: u32,
    pub error: f64,
    /// Order against the previous row, `log(e_prev / e) / log(eps_prev / eps)`.
    pub order: Option<f64>,
}

/// Relative error `|F - div sigma| / |div sigma|` at a bulk node for each
/// `(epsilon, h_ratio)` pair.
pub fn local_limit_error(
    model: &MaterialModel,
    family: &[(f64, u32)],
    n_sub: u32,
    field: &QuadraticField,
) -> Vec<LocalLimitRow> {
    let target = field.div_stress(model.mu, model.lambda);
    let norm = target[0].hypot(target[1]);
    let mut rows: Vec<LocalLimitRow> = Vec::new();
    for &(epsilon, h_ratio) in family {
        let h = epsilon / h_ratio as f64;
        // a lattice node off the origin so that odd terms are exercised
        let x = [3.5 * h, -1.5 * h];
        let f = bulk_force(model, epsilon, h_ratio, n_sub, x, |y| field.eval(y));
        let error = (f[0] - target[0]).hypot(f[1] - target[1]) / norm;
        let order = rows.last().map(|p| (p.error / error).ln() / (p.epsilon / epsilon).ln());
        rows.push(LocalLimitRow {
            epsilon,
            h_ratio,
            error,
            order,
        });
    }
    rows
}
