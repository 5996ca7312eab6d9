//! Property suites run by `perifract verify`: the discrete divergence
//! identity, rigid-motion invariance, horizon-independent toughness, the
//! local limit and pre-failure energy balance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{energy_ledger, local_limit_error, nonlocal_divergence_check, LocalLimitRow, QuadraticField};
use crate::dynamics::{assemble_force, BondKernel, Loading, Stepper, StepperConfig};
use crate::error::Result;
use crate::geometry::{build_bonds, build_grid, BondState, ContourSpec, DomainSpec, LoadSchedule, Vec2};
use crate::material::{gc_closed_form, gc_direct_quadrature, MaterialModel};

pub const DIVERGENCE_PAIRS: usize = 50;
pub const DIVERGENCE_TOL: f64 = 1e-10;
pub const RIGID_TOL: f64 = 1e-12;
pub const GC_SPREAD_TOL: f64 = 1e-6;
pub const GC_CLOSED_FORM_TOL: f64 = 1e-5;
pub const LOCAL_LIMIT_MIN_ORDER: f64 = 0.9;
pub const ENERGY_DRIFT_TOL: f64 = 1e-3;
pub const ENERGY_STEPS: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSuite {
    pub pairs: usize,
    pub max_relative_residual: f64,
    pub pass: bool,
}

/// Random displacement, test field and box on a notched plate with a
/// random fraction of failed bonds; the interior pair sum must equal the
/// exterior one.
pub fn divergence_suite(model: &MaterialModel, seed: u64, pairs: usize) -> Result<DivergenceSuite> {
    let spec = DomainSpec::new(0.02, 0.02, 0.006, 2e-3, 4);
    let grid = build_grid(&spec)?;
    let mut bonds = build_bonds(&grid, &spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..bonds.len() {
        if bonds.state[k] == BondState::Alive && rng.gen_bool(0.05) {
            let r = bonds.reverse[k] as usize;
            bonds.state[k] = BondState::Failed;
            bonds.state[r] = BondState::Failed;
        }
    }
    let kernel = BondKernel::new(&bonds, model, spec.epsilon);
    let (_, s_plus) = model.critical_strains(spec.epsilon)?;
    let amp = s_plus * spec.h();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u: Vec<Vec2> = (0..grid.len())
            .map(|_| [amp * rng.gen_range(-1.0..1.0), amp * rng.gen_range(-1.0..1.0)])
            .collect();
        let w: Vec<Vec2> = (0..grid.len())
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let hx = rng.gen_range(0.1..0.4) * spec.a;
        let hy = rng.gen_range(0.1..0.4) * spec.b;
        let contour = ContourSpec {
            center: [
                rng.gen_range(hx..spec.a - hx),
                rng.gen_range(-0.5 * spec.b + hy..0.5 * spec.b - hy),
            ],
            half_widths: [hx, hy],
            velocity: [0.0, 0.0],
        };
        let check = nonlocal_divergence_check(&grid.positions, &bonds, &kernel, &u, &w, grid.node_volume(), &contour);
        worst = worst.max(check.relative_residual());
    }
    Ok(DivergenceSuite {
        pairs,
        max_relative_residual: worst,
        pass: worst <= DIVERGENCE_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidSuite {
    pub nodes: usize,
    /// Largest force density component under a translation plus rotation.
    pub max_force: f64,
    /// Largest force density component under a uniform stretch of `1e-4`.
    pub force_scale: f64,
    pub pass: bool,
}

/// `u = c + theta (-x2, x1)` on a 100 x 100 lattice. The infinitesimal
/// rotation leaves every bond length unchanged to first order and its
/// projected bond strain is exactly zero.
pub fn rigid_suite(model: &MaterialModel) -> Result<RigidSuite> {
    let epsilon = 2e-3;
    let m = 4;
    let h = epsilon / m as f64;
    let spec = DomainSpec::new(100.0 * h, 100.0 * h, 0.0, epsilon, m);
    let grid = build_grid(&spec)?;
    let bonds = build_bonds(&grid, &spec);
    let theta = 1e-4;
    let c = [3e-6, -2e-6];
    let u: Vec<Vec2> = grid
        .positions
        .iter()
        .map(|x| [c[0] - theta * x[1], c[1] + theta * x[0]])
        .collect();
    let f = assemble_force(&grid, &bonds, &u, model, epsilon);
    let max_force = f.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, b| a.max(b.abs()));
    let stretch: Vec<Vec2> = grid.positions.iter().map(|x| [1e-4 * x[0], 1e-4 * x[1]]).collect();
    let fs = assemble_force(&grid, &bonds, &stretch, model, epsilon);
    let force_scale = fs.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(RigidSuite {
        nodes: grid.len(),
        max_force,
        force_scale,
        pass: max_force <= RIGID_TOL * force_scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToughnessSuite {
    pub closed_form: f64,
    /// `(epsilon, G_c)` by direct quadrature.
    pub quadrature: Vec<(f64, f64)>,
    pub max_spread: f64,
    pub max_closed_form_error: f64,
    pub pass: bool,
}

pub fn toughness_suite(model: &MaterialModel, epsilons: &[f64], gauss_order: usize) -> Result<ToughnessSuite> {
    let closed_form = gc_closed_form(model);
    let quadrature = epsilons
        .iter()
        .map(|&e| Ok((e, gc_direct_quadrature(model, e, gauss_order)?)))
        .collect::<Result<Vec<_>>>()?;
    let first = quadrature.first().map_or(closed_form, |q| q.1);
    let max_spread = quadrature
        .iter()
        .map(|q| (q.1 - first).abs() / first)
        .fold(0.0, f64::max);
    let max_closed_form_error = quadrature
        .iter()
        .map(|q| (q.1 - closed_form).abs() / closed_form)
        .fold(0.0, f64::max);
    Ok(ToughnessSuite {
        closed_form,
        quadrature,
        max_spread,
        max_closed_form_error,
        pass: max_spread <= GC_SPREAD_TOL && max_closed_form_error <= GC_CLOSED_FORM_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLimitSuite {
    pub rows: Vec<LocalLimitRow>,
    pub min_order: f64,
    pub pass: bool,
}

/// Manufactured quadratic field with amplitudes well below the critical
/// strain everywhere in the horizon.
pub fn manufactured_field() -> QuadraticField {
    let s = 1e-3;
    QuadraticField {
        hessians: [
            [[1.0 * s, 0.4 * s], [0.4 * s, -0.7 * s]],
            [[0.3 * s, -0.5 * s], [-0.5 * s, 0.8 * s]],
        ],
        gradient: [[1e-5, -2e-5], [3e-5, 1e-5]],
    }
}

/// Halving the horizon from `eps0` while the lattice refines faster, so
/// `epsilon / h` doubles each time.
pub fn local_limit_family(eps0: f64, m0: u32, levels: usize) -> Vec<(f64, u32)> {
    (0..levels).map(|k| (eps0 / (1u32 << k) as f64, m0 << k)).collect()
}

pub fn local_limit_suite(model: &MaterialModel, family: &[(f64, u32)], n_sub: u32) -> LocalLimitSuite {
    let rows = local_limit_error(model, family, n_sub, &manufactured_field());
    let min_order = rows.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min);
    LocalLimitSuite {
        pass: min_order.is_finite() && min_order >= LOCAL_LIMIT_MIN_ORDER,
        rows,
        min_order,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySuite {
    pub steps: u64,
    pub drift: f64,
    pub failed_bonds: usize,
    pub pass: bool,
}

/// Slowly ramped layer load on a small notched plate, kept below failure.
/// Drift is `max |E(t) - E(0) - W(t)| / max(E, W)`.
pub fn energy_suite(model: &MaterialModel, steps: u64) -> Result<EnergySuite> {
    let spec = DomainSpec::new(0.02, 0.03, 0.005, 2e-3, 4);
    let grid = build_grid(&spec)?;
    let bonds = build_bonds(&grid, &spec);
    let dt = 0.25 * grid.h / model.cl;
    let cfg = StepperConfig {
        dt,
        t_end: steps as f64 * dt,
        output_every: 1,
        stability_factor: 0.5,
    };
    // traction small enough that no bond reaches its failure strain
    let load = LoadSchedule {
        f0: 1e-4 * model.youngs_modulus,
        t_ramp: 0.5 * steps as f64 * dt,
        delta: spec.delta,
    };
    let mut stepper = Stepper::at_rest(grid, bonds, *model, spec.epsilon, Loading::Layers(load), cfg)?;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    let mut e0 = None;
    for _ in 0..steps {
        stepper.step_observed(|frame| {
            let l = energy_ledger(frame);
            let total = l.kinetic + l.potential + l.dissipated;
            let e_ref = *e0.get_or_insert(total);
            num = num.max((total - e_ref - l.external_work).abs());
            den = den.max(total.max(l.external_work));
            Ok(())
        })?;
    }
    let drift = if den > 0.0 { num / den } else { 0.0 };
    let failed_bonds = stepper.state.ledger.len();
    Ok(EnergySuite {
        steps,
        drift,
        failed_bonds,
        pass: drift <= ENERGY_DRIFT_TOL && failed_bonds == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub divergence: DivergenceSuite,
    pub rigid: RigidSuite,
    pub toughness: ToughnessSuite,
    pub local_limit: LocalLimitSuite,
    pub energy: EnergySuite,
    pub pass: bool,
}

pub fn verify_all(model: &MaterialModel, seed: u64, gauss_order: usize, n_sub: u32) -> Result<VerifyReport> {
    let divergence = divergence_suite(model, seed, DIVERGENCE_PAIRS)?;
    let rigid = rigid_suite(model)?;
    let toughness = toughness_suite(model, &[2.5e-3, 1.25e-3, 0.625e-3], gauss_order)?;
    let local_limit = local_limit_suite(model, &local_limit_family(8e-3, 2, 5), n_sub);
    let energy = energy_suite(model, ENERGY_STEPS)?;
    let pass = divergence.pass && rigid.pass && toughness.pass && local_limit.pass && energy.pass;
    Ok(VerifyReport {
        seed,
        divergence,
        rigid,
        toughness,
        local_limit,
        energy,
        pass,
    })
}

/// Plain-text table of the suite results.
pub fn render(report: &VerifyReport) -> String {
    let mark = |p: bool| if p { "PASS" } else { "FAIL" };
    let mut s = String::new();
    s += &format!(
        "{} divergence identity: max relative residual {:.3e} over {} pairs (tol {:.0e})\n",
        mark(report.divergence.pass),
        report.divergence.max_relative_residual,
        report.divergence.pairs,
        DIVERGENCE_TOL
    );
    s += &format!(
        "{} rigid invariance: max |F| {:.3e} vs scale {:.3e} on {} nodes\n",
        mark(report.rigid.pass),
        report.rigid.max_force,
        report.rigid.force_scale,
        report.rigid.nodes
    );
    s += &format!(
        "{} toughness: closed form {:.10e}, spread {:.3e}, vs closed form {:.3e}\n",
        mark(report.toughness.pass),
        report.toughness.closed_form,
        report.toughness.max_spread,
        report.toughness.max_closed_form_error
    );
    s += &format!(
        "{} local limit: min order {:.3}\n",
        mark(report.local_limit.pass),
        report.local_limit.min_order
    );
    s += "    epsilon_m      eps/h  rel_error   order\n";
    for r in &report.local_limit.rows {
        s += &format!(
            "    {:.4e}  {:5}  {:.3e}  {}\n",
            r.epsilon,
            r.h_ratio,
            r.error,
            r.order.map_or("-".to_string(), |o| format!("{o:.3}"))
        );
    }
    s += &format!(
        "{} energy balance: drift {:.3e} over {} steps, {} failed bonds\n",
        mark(report.energy.pass),
        report.energy.drift,
        report.energy.steps,
        report.energy.failed_bonds
    );
    s
}
