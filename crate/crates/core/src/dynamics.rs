//! Nonlocal force assembly and central-difference time stepping with
//! irreversible bond failure.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BondState, BondTable, Grid, LoadSchedule, Vec2};
use crate::material::{MaterialModel, OMEGA_2};

/// `S = (u_j - u_i) . e / l`.
#[inline]
pub fn bond_strain(u_i: Vec2, u_j: Vec2, rest_length: f64, e: Vec2) -> f64 {
    ((u_j[0] - u_i[0]) * e[0] + (u_j[1] - u_i[1]) * e[1]) / rest_length
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondStrainSample {
    pub strain: f64,
    pub s_c: f64,
    pub s_plus: f64,
    /// `2 dW/dS`, the pair force density along the bond.
    pub force_magnitude: f64,
}

/// Per-stencil constants of the bond force and energy.
#[derive(Debug, Clone, PartialEq)]
pub struct BondKernel {
    pub inv_length: Vec<f64>,
    pub sqrt_length: Vec<f64>,
    pub s_c: Vec<f64>,
    pub s_plus: Vec<f64>,
    /// `2 dW/dS w = force_coef * r * exp(-beta r^2)` with `r = sqrt(l) S`.
    force_coef: Vec<f64>,
    /// `l W(S) w = energy_coef * (1 - exp(-beta r^2))`.
    energy_coef: Vec<f64>,
    beta: f64,
}

impl BondKernel {
    pub fn new(bonds: &BondTable, model: &MaterialModel, epsilon: f64) -> Self {
        let st = &bonds.stencil;
        let c = model.potential.c();
        let beta = model.potential.beta();
        let n = st.len();
        let (mut inv_length, mut sqrt_length) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut s_c, mut s_plus) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut force_coef, mut energy_coef) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for s in 0..n {
            let l = st.lengths[s];
            let w = st.weights[s];
            let coef = model.influence.eval(l / epsilon) / (epsilon.powi(3) * OMEGA_2 * l);
            let (sc, sp) = model
                .potential
                .critical_strains(l)
                .expect("stencil lengths are positive");
            inv_length.push(1.0 / l);
            sqrt_length.push(l.sqrt());
            s_c.push(sc);
            s_plus.push(sp);
            force_coef.push(2.0 * coef * 2.0 * c * beta * l.sqrt() * w);
            energy_coef.push(l * coef * c * w);
        }
        Self {
            inv_length,
            sqrt_length,
            s_c,
            s_plus,
            force_coef,
            energy_coef,
            beta,
        }
    }

    #[inline]
    pub fn force(&self, s: usize, strain: f64) -> f64 {
        let r = self.sqrt_length[s] * strain;
        self.force_coef[s] * r * (-self.beta * r * r).exp()
    }

    /// Bond contribution `l W(S) w` to the energy density of one endpoint.
    #[inline]
    pub fn energy(&self, s: usize, strain: f64) -> f64 {
        let r = self.sqrt_length[s] * strain;
        self.energy_coef[s] * -(-self.beta * r * r).exp_m1()
    }

    #[inline]
    pub fn strain(&self, s: usize, bonds: &BondTable, u_i: Vec2, u_j: Vec2) -> f64 {
        let e = bonds.stencil.directions[s];
        ((u_j[0] - u_i[0]) * e[0] + (u_j[1] - u_i[1]) * e[1]) * self.inv_length[s]
    }

    pub fn sample(&self, bonds: &BondTable, k: usize, u: &[Vec2], i: usize) -> BondStrainSample {
        let s = bonds.stencil_id[k] as usize;
        let strain = self.strain(s, bonds, u[i], u[bonds.neighbor[k] as usize]);
        BondStrainSample {
            strain,
            s_c: self.s_c[s],
            s_plus: self.s_plus[s],
            force_magnitude: self.force(s, strain) / bonds.stencil.weights[s],
        }
    }
}

/// Force density at node `i` over alive bonds. Returns whether some alive
/// bond exceeds its failure strain; such bonds are left out of the sum.
#[inline]
fn node_force(i: usize, bonds: &BondTable, kernel: &BondKernel, u: &[Vec2]) -> (Vec2, bool) {
    let ui = u[i];
    let mut f = [0.0, 0.0];
    let mut trip = false;
    for k in bonds.range(i) {
        if bonds.state[k] != BondState::Alive {
            continue;
        }
        let s = bonds.stencil_id[k] as usize;
        let strain = kernel.strain(s, bonds, ui, u[bonds.neighbor[k] as usize]);
        if strain > kernel.s_plus[s] {
            trip = true;
            continue;
        }
        let mag = kernel.force(s, strain);
        let e = bonds.stencil.directions[s];
        f[0] += mag * e[0];
        f[1] += mag * e[1];
    }
    (f, trip)
}

/// `F_i = sum_j 2 dW/dS(S_ij) e_ij w_ij` over alive bonds, without failure.
pub fn assemble_force(grid: &Grid, bonds: &BondTable, u: &[Vec2], model: &MaterialModel, epsilon: f64) -> Vec<Vec2> {
    let kernel = BondKernel::new(bonds, model, epsilon);
    assemble_with(grid, bonds, &kernel, u)
}

fn assemble_with(grid: &Grid, bonds: &BondTable, kernel: &BondKernel, u: &[Vec2]) -> Vec<Vec2> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let ui = u[i];
            let mut f = [0.0, 0.0];
            for k in bonds.range(i) {
                if bonds.state[k] != BondState::Alive {
                    continue;
                }
                let s = bonds.stencil_id[k] as usize;
                let mag = kernel.force(s, kernel.strain(s, bonds, ui, u[bonds.neighbor[k] as usize]));
                let e = bonds.stencil.directions[s];
                f[0] += mag * e[0];
                f[1] += mag * e[1];
            }
            f
        })
        .collect()
}

/// Mean-square ratio `|L(u1) - L(u2)| / |u1 - u2|`.
pub fn lipschitz_probe(
    grid: &Grid,
    bonds: &BondTable,
    model: &MaterialModel,
    epsilon: f64,
    u1: &[Vec2],
    u2: &[Vec2],
) -> Result<f64> {
    let du: f64 = u1
        .iter()
        .zip(u2)
        .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
        .sum();
    if du == 0.0 {
        return Err(Error::Domain("fields must differ".into()));
    }
    let f1 = assemble_force(grid, bonds, u1, model, epsilon);
    let f2 = assemble_force(grid, bonds, u2, model, epsilon);
    let df: f64 = f1
        .iter()
        .zip(&f2)
        .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
        .sum();
    Ok((df / du).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    pub output_every: u64,
    pub stability_factor: f64,
}

impl StepperConfig {
    pub fn num_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    /// `stability_factor * h / c_l`.
    pub fn stable_dt(&self, h: f64, model: &MaterialModel) -> f64 {
        self.stability_factor * h / model.cl
    }
}

/// External loading of the body.
#[derive(Debug, Clone, PartialEq)]
pub enum Loading {
    None,
    Layers(LoadSchedule),
    /// The same body force density on every node.
    Uniform(Vec2),
}

impl Loading {
    fn fill(&self, grid: &Grid, t: f64, out: &mut [Vec2]) {
        match self {
            Loading::None => out.fill([0.0, 0.0]),
            Loading::Layers(s) => {
                for (b, &l) in out.iter_mut().zip(&grid.layers) {
                    *b = s.at(l, t);
                }
            }
            Loading::Uniform(b) => out.fill(*b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakEvent {
    pub step: u64,
    pub i: u32,
    pub j: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub step: u64,
    pub u: Vec<Vec2>,
    pub u_prev: Vec<Vec2>,
    /// Velocity at the previous time level, known once `u` is.
    pub v: Vec<Vec2>,
    pub external_work: f64,
    /// Energy held by failed bonds at the moment they failed.
    pub dissipated: f64,
    /// Per-node share `l W w` of the bonds failed so far.
    pub frozen_density: Vec<f64>,
    pub broken_this_step: Vec<u32>,
    pub ledger: Vec<BreakEvent>,
}

/// Consistent snapshot `(t_n, u^n, v^n)` handed to observers.
pub struct Frame<'a> {
    pub t: f64,
    pub step: u64,
    pub u: &'a [Vec2],
    pub v: &'a [Vec2],
    pub grid: &'a Grid,
    pub bonds: &'a BondTable,
    pub kernel: &'a BondKernel,
    pub model: &'a MaterialModel,
    pub epsilon: f64,
    pub frozen_density: &'a [f64],
    pub external_work: f64,
    pub dissipated: f64,
    pub ledger: &'a [BreakEvent],
}

pub struct Stepper {
    pub grid: Grid,
    pub bonds: BondTable,
    pub model: MaterialModel,
    pub kernel: BondKernel,
    pub epsilon: f64,
    pub loading: Loading,
    pub cfg: StepperConfig,
    pub state: SimState,
    force: Vec<Vec2>,
    trips: Vec<bool>,
    b_now: Vec<Vec2>,
    b_next: Vec<Vec2>,
    u_next: Vec<Vec2>,
}

impl Stepper {
    pub fn new(
        grid: Grid,
        mut bonds: BondTable,
        model: MaterialModel,
        epsilon: f64,
        loading: Loading,
        cfg: StepperConfig,
        u0: Vec<Vec2>,
        v0: Vec<Vec2>,
    ) -> Result<Self> {
        let n = grid.len();
        if u0.len() != n || v0.len() != n {
            return Err(Error::Domain(format!(
                "initial fields have {} and {} entries for {n} nodes",
                u0.len(),
                v0.len()
            )));
        }
        if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {}", cfg.dt)));
        }
        let limit = cfg.stable_dt(grid.h, &model);
        if cfg.dt > limit {
            warn!(
                "time step {:e} s exceeds the stability factor bound {:e} s (h / c_l = {:e} s)",
                cfg.dt,
                limit,
                grid.h / model.cl
            );
        }
        let kernel = BondKernel::new(&bonds, &model, epsilon);
        let mut state = SimState {
            t: 0.0,
            step: 0,
            u: u0,
            u_prev: vec![[0.0; 2]; n],
            v: v0,
            external_work: 0.0,
            dissipated: 0.0,
            frozen_density: vec![0.0; n],
            broken_this_step: Vec::new(),
            ledger: Vec::new(),
        };
        let mut force = vec![[0.0; 2]; n];
        let mut trips = vec![false; n];
        let mut b_now = vec![[0.0; 2]; n];
        loading.fill(&grid, 0.0, &mut b_now);
        compute_forces(&bonds, &kernel, &state.u, &mut force, &mut trips);
        commit_failures(&mut bonds, &kernel, &mut state, &trips, grid.node_volume());
        let dt = cfg.dt;
        let rho = model.rho;
        for i in 0..n {
            for c in 0..2 {
                let a = (force[i][c] + b_now[i][c]) / rho;
                state.u_prev[i][c] = state.u[i][c] - dt * state.v[i][c] + 0.5 * dt * dt * a;
            }
        }
        Ok(Self {
            grid,
            bonds,
            model,
            kernel,
            epsilon,
            loading,
            cfg,
            state,
            force,
            trips,
            b_now,
            b_next: vec![[0.0; 2]; n],
            u_next: vec![[0.0; 2]; n],
        })
    }

    /// Zero initial displacement and velocity.
    pub fn at_rest(
        grid: Grid,
        bonds: BondTable,
        model: MaterialModel,
        epsilon: f64,
        loading: Loading,
        cfg: StepperConfig,
    ) -> Result<Self> {
        let n = grid.len();
        Self::new(
            grid,
            bonds,
            model,
            epsilon,
            loading,
            cfg,
            vec![[0.0; 2]; n],
            vec![[0.0; 2]; n],
        )
    }

    pub fn step(&mut self) -> Result<()> {
        self.step_observed(|_| Ok(()))
    }

    /// Advances one step. The observer sees time level `n` with the
    /// failures detected on `u^n` applied and the centered velocity `v^n`.
    pub fn step_observed<F>(&mut self, mut observer: F) -> Result<()>
    where
        F: FnMut(&Frame) -> Result<()>,
    {
        let dt = self.cfg.dt;
        let rho = self.model.rho;
        let n = self.grid.len();
        let t = self.state.t;

        compute_forces(
            &self.bonds,
            &self.kernel,
            &self.state.u,
            &mut self.force,
            &mut self.trips,
        );
        commit_failures(
            &mut self.bonds,
            &self.kernel,
            &mut self.state,
            &self.trips,
            self.grid.node_volume(),
        );
        self.loading.fill(&self.grid, t, &mut self.b_now);
        self.loading.fill(&self.grid, t + dt, &mut self.b_next);

        let vol = self.grid.node_volume();
        let mut work = 0.0;
        let mut finite = true;
        for i in 0..n {
            for c in 0..2 {
                let a = (self.force[i][c] + self.b_now[i][c]) / rho;
                let un = self.state.u[i][c];
                let next = 2.0 * un - self.state.u_prev[i][c] + dt * dt * a;
                finite &= next.is_finite();
                self.u_next[i][c] = next;
                self.state.v[i][c] = (next - self.state.u_prev[i][c]) / (2.0 * dt);
                work += 0.5 * (self.b_now[i][c] + self.b_next[i][c]) * (next - un) * vol;
            }
        }
        if !finite {
            return Err(Error::NonFinite { step: self.state.step });
        }

        observer(&Frame {
            t,
            step: self.state.step,
            u: &self.state.u,
            v: &self.state.v,
            grid: &self.grid,
            bonds: &self.bonds,
            kernel: &self.kernel,
            model: &self.model,
            epsilon: self.epsilon,
            frozen_density: &self.state.frozen_density,
            external_work: self.state.external_work,
            dissipated: self.state.dissipated,
            ledger: &self.state.ledger,
        })?;

        self.state.external_work += work;
        std::mem::swap(&mut self.state.u_prev, &mut self.state.u);
        std::mem::swap(&mut self.state.u, &mut self.u_next);
        self.state.step += 1;
        self.state.t = self.state.step as f64 * dt;
        Ok(())
    }

    /// Breaks every alive bond strained past its failure strain in `u` and
    /// returns the number of bonds broken.
    pub fn update_failure(&mut self) -> usize {
        compute_forces(
            &self.bonds,
            &self.kernel,
            &self.state.u,
            &mut self.force,
            &mut self.trips,
        );
        commit_failures(
            &mut self.bonds,
            &self.kernel,
            &mut self.state,
            &self.trips,
            self.grid.node_volume(),
        )
    }
}

fn compute_forces(bonds: &BondTable, kernel: &BondKernel, u: &[Vec2], force: &mut [Vec2], trips: &mut [bool]) {
    force
        .par_iter_mut()
        .zip(trips.par_iter_mut())
        .enumerate()
        .for_each(|(i, (f, trip))| {
            let (fi, ti) = node_force(i, bonds, kernel, u);
            *f = fi;
            *trip = ti;
        });
}

/// Marks tripped bonds failed on both ends, in node order.
fn commit_failures(
    bonds: &mut BondTable,
    kernel: &BondKernel,
    state: &mut SimState,
    trips: &[bool],
    volume: f64,
) -> usize {
    state.broken_this_step.clear();
    for i in trips.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i) {
        for k in bonds.range(i) {
            if bonds.state[k] != BondState::Alive {
                continue;
            }
            let j = bonds.neighbor[k] as usize;
            let s = bonds.stencil_id[k] as usize;
            let strain = kernel.strain(s, bonds, state.u[i], state.u[j]);
            if strain <= kernel.s_plus[s] {
                continue;
            }
            let r = bonds.reverse[k] as usize;
            bonds.state[k] = BondState::Failed;
            bonds.state[r] = BondState::Failed;
            let e = kernel.energy(s, strain);
            state.frozen_density[i] += e;
            state.frozen_density[j] += e;
            state.dissipated += 2.0 * e * volume;
            state.broken_this_step.push(k as u32);
            state.ledger.push(BreakEvent {
                step: state.step,
                i: i as u32,
                j: j as u32,
            });
        }
    }
    state.broken_this_step.len()
}
