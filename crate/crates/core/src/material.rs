//! Cohesive bond potential, influence function and calibration.
//!
//! The bond energy between two points at distance `l` with tensile strain `S`
//! is
//!
//! ```text
//! W(S) = J(l/eps) / (eps^3 * pi * l) * g(sqrt(l) * S),   g(r) = c * (1 - exp(-beta * r^2))
//! ```
//!
//! and the energy density of a point is the horizon integral of `l * W(S)`.
//! Under an affine displacement with small strain `E` this density expands to
//! `mu |E|^2 + lambda/2 (tr E)^2` with `mu = lambda = M c beta / 2`, where
//! `M = int_0^1 r^2 J(r) dr`. Severing every bond across a line costs
//! `G_c = 4 M g(r_plus) / pi` per unit length, for every horizon.

use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area of the unit disk.
pub const OMEGA_2: f64 = PI;

/// Bond-based models in 2D are restricted to this Poisson ratio.
pub const POISSON_RATIO: f64 = 0.25;

/// Failure argument as a multiple of the inflection argument.
pub const FAILURE_MULTIPLE: f64 = 10.0;

/// Printed model constants for E = 3.24 GPa, G_c = 500 J/m^2.
pub const PRINTED_C: f64 = 392.7;
pub const PRINTED_BETA: f64 = 1.3201e7;

const MOMENT_QUADRATURE_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfluenceKind {
    /// `J(r) = 1 - r` on `[0, 1)`.
    LinearDecay,
}

/// Radial weight `J(r)` of the horizon, with its cached second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceFunction {
    kind: InfluenceKind,
    moment: f64,
}

impl InfluenceFunction {
    pub fn new(kind: InfluenceKind) -> Self {
        let rule = GaussLegendre::new(MOMENT_QUADRATURE_ORDER).expect("order >= 2");
        let moment = rule.integrate(0.0, 1.0, |r| r * r * Self::eval_kind(kind, r));
        Self { kind, moment }
    }

    pub fn linear_decay() -> Self {
        Self::new(InfluenceKind::LinearDecay)
    }

    fn eval_kind(kind: InfluenceKind, r: f64) -> f64 {
        match kind {
            InfluenceKind::LinearDecay => {
                if (0.0..1.0).contains(&r.abs()) {
                    1.0 - r.abs()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn kind(&self) -> InfluenceKind {
        self.kind
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        Self::eval_kind(self.kind, r)
    }

    /// `M = int_0^1 r^2 J(r) dr`.
    pub fn moment(&self) -> f64 {
        self.moment
    }
}

/// Exponential double-well potential `g(r) = c (1 - exp(-beta r^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondPotential {
    c: f64,
    beta: f64,
}

impl BondPotential {
    pub fn new(c: f64, beta: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Domain(format!("energy scale c must be >= 0, got {c}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { c, beta })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn g(&self, r: f64) -> f64 {
        self.c * -(-self.beta * r * r).exp_m1()
    }

    #[inline]
    pub fn g_prime(&self, r: f64) -> f64 {
        2.0 * self.c * self.beta * r * (-self.beta * r * r).exp()
    }

    /// `h(s)` with `g(r) = h(r^2)`.
    pub fn h(&self, s: f64) -> f64 {
        self.c * -(-self.beta * s).exp_m1()
    }

    pub fn h_prime(&self, s: f64) -> f64 {
        self.c * self.beta * (-self.beta * s).exp()
    }

    /// Inflection point of `g`, where the bond force peaks.
    pub fn r_c(&self) -> f64 {
        1.0 / (2.0 * self.beta).sqrt()
    }

    pub fn r_plus(&self) -> f64 {
        FAILURE_MULTIPLE * self.r_c()
    }

    /// Horizontal asymptote of `g`.
    pub fn c_plus(&self) -> f64 {
        self.c
    }

    /// Critical strain `S_c` and failure strain `S_plus` of a bond.
    pub fn critical_strains(&self, bond_length: f64) -> Result<(f64, f64)> {
        if !(bond_length > 0.0 && bond_length.is_finite()) {
            return Err(Error::Domain(format!(
                "bond length must be positive, got {bond_length}"
            )));
        }
        let s_c = self.r_c() / bond_length.sqrt();
        Ok((s_c, FAILURE_MULTIPLE * s_c))
    }
}

/// `g(r_plus) / c`; independent of `beta` because `beta r_plus^2 = 50`.
fn failure_energy_fraction() -> f64 {
    -(-0.5 * FAILURE_MULTIPLE * FAILURE_MULTIPLE).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Calibration {
    /// Invert the implemented toughness and moduli formulas for `(c, beta)`.
    SelfConsistent,
    /// Use the given constants as printed; moduli and toughness follow from them.
    Printed { c: f64, beta: f64 },
}

impl Calibration {
    pub fn printed() -> Self {
        Calibration::Printed {
            c: PRINTED_C,
            beta: PRINTED_BETA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Calibration::SelfConsistent => "self_consistent",
            Calibration::Printed { .. } => "printed",
        }
    }
}

/// Calibrated material. `mu`, `lambda`, `youngs_modulus`, `gc` and the wave
/// speeds are the values realized by the potential; the requested targets are
/// kept alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub rho: f64,
    pub youngs_modulus: f64,
    pub nu: f64,
    pub gc: f64,
    pub mu: f64,
    pub lambda: f64,
    pub potential: BondPotential,
    pub influence: InfluenceFunction,
    pub cs: f64,
    pub cl: f64,
    pub target_youngs_modulus: f64,
    pub target_gc: f64,
    pub calibration: Calibration,
}

/// `mu = E / (2 (1 + nu))` at `nu = 1/4`.
pub fn shear_modulus(youngs_modulus: f64) -> f64 {
    youngs_modulus / (2.0 * (1.0 + POISSON_RATIO))
}

/// Inverts the toughness and moduli relations for `(c, beta)`.
pub fn invert_constants(youngs_modulus: f64, gc: f64, influence: &InfluenceFunction) -> Result<(f64, f64)> {
    if !(gc.is_finite() && gc > 0.0) {
        return Err(Error::Calibration(format!("G_c must be positive, got {gc}")));
    }
    if !(youngs_modulus.is_finite() && youngs_modulus > 0.0) {
        return Err(Error::Calibration(format!(
            "Young's modulus must be positive, got {youngs_modulus}"
        )));
    }
    let m = influence.moment();
    if m <= 0.0 {
        return Err(Error::Calibration("influence moment is zero".into()));
    }
    let c = PI * gc / (4.0 * m * failure_energy_fraction());
    let beta = 2.0 * shear_modulus(youngs_modulus) / (m * c);
    Ok((c, beta))
}

pub fn calibrate(
    youngs_modulus: f64,
    gc: f64,
    rho: f64,
    influence: InfluenceFunction,
    calibration: &Calibration,
) -> Result<MaterialModel> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Calibration(format!("density must be positive, got {rho}")));
    }
    let potential = match *calibration {
        Calibration::SelfConsistent => {
            let (c, beta) = invert_constants(youngs_modulus, gc, &influence)?;
            BondPotential::new(c, beta)?
        }
        Calibration::Printed { c, beta } => {
            BondPotential::new(c, beta).map_err(|e| Error::Calibration(format!("printed constants: {e}")))?
        }
    };
    let mut model = MaterialModel::from_potential(potential, influence, rho)?;
    model.target_youngs_modulus = youngs_modulus;
    model.target_gc = gc;
    model.calibration = *calibration;
    Ok(model)
}

impl MaterialModel {
    /// Material realized by a given potential.
    pub fn from_potential(potential: BondPotential, influence: InfluenceFunction, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Domain(format!("density must be positive, got {rho}")));
        }
        let m = influence.moment();
        let mu = 0.5 * m * potential.h_prime(0.0);
        let lambda = mu;
        let youngs_modulus = 2.0 * mu * (1.0 + POISSON_RATIO);
        let gc = 4.0 / PI * m * potential.g(potential.r_plus());
        Ok(Self {
            rho,
            youngs_modulus,
            nu: POISSON_RATIO,
            gc,
            mu,
            lambda,
            potential,
            influence,
            cs: (mu / rho).sqrt(),
            cl: ((lambda + 2.0 * mu) / rho).sqrt(),
            target_youngs_modulus: youngs_modulus,
            target_gc: gc,
            calibration: Calibration::Printed {
                c: potential.c(),
                beta: potential.beta(),
            },
        })
    }

    /// Pair potential per unit length, `W(S)` for a bond of the given length.
    #[inline]
    pub fn pair_potential(&self, epsilon: f64, length: f64, strain: f64) -> f64 {
        let j = self.influence.eval(length / epsilon);
        j / (epsilon.powi(3) * OMEGA_2 * length) * self.potential.g(length.sqrt() * strain)
    }

    /// `dW/dS` for a bond of the given length.
    #[inline]
    pub fn pair_potential_slope(&self, epsilon: f64, length: f64, strain: f64) -> f64 {
        let j = self.influence.eval(length / epsilon);
        let root = length.sqrt();
        j / (epsilon.powi(3) * OMEGA_2 * length) * self.potential.g_prime(root * strain) * root
    }

    pub fn critical_strains(&self, bond_length: f64) -> Result<(f64, f64)> {
        self.potential.critical_strains(bond_length)
    }

    /// Rayleigh wave speed, the root of `D(V)` on `(0, c_s)`.
    pub fn rayleigh_speed(&self) -> f64 {
        let (mut lo, mut hi) = (0.5 * self.cs, self.cs);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rayleigh_function(mid, self.cs, self.cl) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Energy flux into a crack tip moving at speed `v` with mode-I dynamic
    /// stress intensity factor `k_i`.
    pub fn freund_energy_rate(&self, v: f64, k_i: f64) -> Result<f64> {
        if !(v.is_finite() && v >= 0.0 && v < self.cs) {
            return Err(Error::Domain(format!("crack speed {v} outside [0, c_s = {})", self.cs)));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        let cr = self.rayleigh_speed();
        if v >= cr {
            return Err(Error::Domain(format!(
                "crack speed {v} not below the Rayleigh speed {cr}"
            )));
        }
        let s = v * v / (self.cs * self.cs);
        let alpha_l = (1.0 - v * v / (self.cl * self.cl)).sqrt();
        let d = rayleigh_function(v, self.cs, self.cl);
        // V^3 / (c_s^2 D) = V * s / D, finite as V -> 0.
        Ok((1.0 + self.nu) / self.youngs_modulus * v * (s / d) * alpha_l * k_i * k_i)
    }
}

/// `D = 4 alpha_s alpha_l - (1 + alpha_s^2)^2`, evaluated without the
/// cancellation of its two O(1) terms at small speed.
fn rayleigh_function(v: f64, cs: f64, cl: f64) -> f64 {
    let s = v * v / (cs * cs);
    let l = v * v / (cl * cl);
    let p = (1.0 - s) * (1.0 - l);
    // 4 sqrt(p) - 4 = 4 (p - 1) / (sqrt(p) + 1)
    4.0 * (s * l - s - l) / (p.sqrt() + 1.0) + 4.0 * s - s * s
}

/// Kinetic relation `G_c = J / V`.
pub fn kinetic_toughness(j: f64, v: f64) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!("crack speed must be positive, got {v}")));
    }
    Ok(j / v)
}

/// Closed-form toughness `4/pi * g(r_plus) * M`, the same for every horizon.
pub fn gc_closed_form(model: &MaterialModel) -> f64 {
    4.0 / PI * model.potential.g(model.potential.r_plus()) * model.influence.moment()
}

/// Work per unit length to sever every bond crossing a line, by direct
/// quadrature over the point `x` at height `z` below the line and the cap of
/// partners `y` beyond it (distance `zeta`, angle `psi` from the normal).
///
/// The integrand is the pair energy `W(S_plus)` for both orientations of each
/// pair, so the cap angle runs over `(-acos(z/zeta), acos(z/zeta))`.
pub fn gc_direct_quadrature(model: &MaterialModel, epsilon: f64, n_quad: usize) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {epsilon}")));
    }
    if n_quad < 16 {
        return Err(Error::Domain(format!(
            "quadrature order must be at least 16 per axis, got {n_quad}"
        )));
    }
    let rule = GaussLegendre::new(n_quad).expect("order >= 16");
    let r_plus = model.potential.r_plus();
    let outer = rule.integrate(0.0, epsilon, |z| {
        // zeta = z + (eps - z) tau^2 removes the square-root endpoint behaviour
        // of acos(z / zeta) at zeta = z.
        rule.integrate(0.0, 1.0, |tau| {
            let zeta = z + (epsilon - z) * tau * tau;
            if zeta <= 0.0 {
                return 0.0;
            }
            let jac = 2.0 * (epsilon - z) * tau;
            let s_plus = r_plus / zeta.sqrt();
            let w = model.pair_potential(epsilon, zeta, s_plus);
            let half_angle = (z / zeta).clamp(-1.0, 1.0).acos();
            w * zeta * zeta * 2.0 * half_angle * jac
        })
    });
    Ok(2.0 * outer)
}
