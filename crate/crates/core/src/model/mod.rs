//! Model assembly: diffusion laws and potentials as named strategies, plus
//! the perspective function `G(s) = s E(1/s)` that carries the internal
//! energy into mass (quantile) coordinates.

mod law;
mod potential;

pub use law::{ArctanLaw, BoseEinsteinLaw, DiffusionLaw, GenericLaw, RationalLaw, DEPTH_CAP};
pub use potential::{DoubleWellPotential, Potential, PowerPotential, QuadraticPotential};

use crate::error::{CoreError, Result};
use std::sync::Arc;

/// A fully specified problem: law, potential, total mass, and the optional
/// linear viscosity `eps` (the flux becomes `beta(r) + eps r`).
#[derive(Clone)]
pub struct Problem {
    pub law: Arc<dyn DiffusionLaw>,
    pub potential: Arc<dyn Potential>,
    pub mass: f64,
    pub viscosity: f64,
}

impl Problem {
    pub fn new(
        law: Arc<dyn DiffusionLaw>,
        potential: Arc<dyn Potential>,
        mass: f64,
        viscosity: f64,
    ) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "total mass must be positive and finite, got {mass}"
            )));
        }
        if !(viscosity.is_finite() && viscosity >= 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "viscosity must be nonnegative, got {viscosity}"
            )));
        }
        Ok(Self { law, potential, mass, viscosity })
    }

    /// Viscous flux `beta(r) + eps r`.
    pub fn beta_eps(&self, r: f64) -> f64 {
        self.law.beta(r) + self.viscosity * r
    }

    /// `(beta + eps id)' = beta' + eps`, exactly.
    pub fn beta_eps_prime(&self, r: f64) -> f64 {
        self.law.beta_prime(r) + self.viscosity
    }
}

/// Perspective `G(s) = s E(1/s)` with `G(0) = 0`; convex because `E` is and
/// the internal energy in mass coordinates is `int G(dY/dw) dw`.
pub fn perspective(law: &dyn DiffusionLaw, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    debug_assert!(s > 0.0, "perspective argument must be a nonnegative slope, got {s}");
    let r = 1.0 / s;
    if !r.is_finite() {
        // Subnormal slope: G(s) -> 0 linearly, indistinguishable from 0 here.
        return 0.0;
    }
    s * law.energy_density(r)
}

/// `G'(s) = E(1/s) - E'(1/s)/s` for `s > 0`.
pub fn perspective_slope(law: &dyn DiffusionLaw, s: f64) -> f64 {
    debug_assert!(s > 0.0);
    // Saturate the reciprocal: closed forms are flat out there anyway.
    let r = (1.0 / s).min(1e300);
    law.energy_density(r) - law.energy_slope(r) * r
}

/// One-sided slope `G'(0+) = -beta_inf - lim_{r->inf} r E'(r)`.  The limit
/// term vanishes whenever `beta_inf` is finite (checked numerically at
/// r = 1e9); laws with infinite `beta_inf` have `G'(0+) = -inf` and get
/// `None`, signalling callers to clamp.
pub fn perspective_slope_at_zero(law: &dyn DiffusionLaw) -> Option<f64> {
    let binf = law.beta_inf();
    if !binf.is_finite() {
        return None;
    }
    let r = 1e9;
    let correction = r * law.energy_slope(r);
    Some(-binf - correction)
}

/// Catalog of diffusion laws constructible by name.
const LAW_TABLE: &[(&str, fn() -> Arc<dyn DiffusionLaw>)] = &[
    ("arctan", || Arc::new(ArctanLaw)),
    ("rational", || Arc::new(RationalLaw)),
    ("bose_einstein", || Arc::new(BoseEinsteinLaw)),
];

pub fn law_names() -> Vec<&'static str> {
    LAW_TABLE.iter().map(|(n, _)| *n).collect()
}

pub fn build_law(name: &str) -> Result<Arc<dyn DiffusionLaw>> {
    LAW_TABLE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor())
        .ok_or_else(|| {
            CoreError::InvalidInput(format!(
                "unknown law '{name}'; available: {}",
                law_names().join(", ")
            ))
        })
}

/// Parameters a potential constructor may need; only `power` reads `alpha`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PotentialParams {
    pub alpha: Option<f64>,
}

type PotentialCtor = fn(&PotentialParams) -> Result<Arc<dyn Potential>>;

const POTENTIAL_TABLE: &[(&str, PotentialCtor)] = &[
    ("power", |p| {
        let alpha = p.alpha.ok_or_else(|| {
            CoreError::InvalidInput("potential 'power' requires potential.alpha".into())
        })?;
        Ok(Arc::new(PowerPotential::new(alpha)?))
    }),
    ("quadratic", |_| Ok(Arc::new(QuadraticPotential))),
    ("double_well", |_| Ok(Arc::new(DoubleWellPotential::new()))),
];

pub fn potential_names() -> Vec<&'static str> {
    POTENTIAL_TABLE.iter().map(|(n, _)| *n).collect()
}

pub fn build_potential(name: &str, params: &PotentialParams) -> Result<Arc<dyn Potential>> {
    POTENTIAL_TABLE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor(params))
        .transpose()?
        .ok_or_else(|| {
            CoreError::InvalidInput(format!(
                "unknown potential '{name}'; available: {}",
                potential_names().join(", ")
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_catalog_by_name() {
        for name in law_names() {
            let law = build_law(name).unwrap();
            assert_eq!(law.name(), name);
        }
        let msg = match build_law("heavy-tails") {
            Err(e) => e.to_string(),
            Ok(_) => panic!("unknown law must be rejected"),
        };
        assert!(msg.contains("arctan") && msg.contains("rational"), "{msg}");
    }

    #[test]
    fn registry_builds_potentials() {
        let p = build_potential("power", &PotentialParams { alpha: Some(1.5) }).unwrap();
        assert_eq!(p.name(), "power");
        assert!(build_potential("power", &PotentialParams::default()).is_err());
        assert!(build_potential("quadratic", &PotentialParams::default()).is_ok());
        assert!(build_potential("double_well", &PotentialParams::default()).is_ok());
        assert!(build_potential("mexican_hat", &PotentialParams::default()).is_err());
    }

    #[test]
    fn problem_validation() {
        let law = build_law("arctan").unwrap();
        let pot = build_potential("quadratic", &PotentialParams::default()).unwrap();
        assert!(Problem::new(law.clone(), pot.clone(), 0.0, 0.0).is_err());
        assert!(Problem::new(law.clone(), pot.clone(), 1.0, -0.1).is_err());
        let p = Problem::new(law, pot, 1.0, 0.25).unwrap();
        // Viscous flux slope is exactly beta'(r) + eps, bit for bit.
        for r in [0.0, 0.3, 2.0, 50.0] {
            assert_eq!(p.beta_eps_prime(r), p.law.beta_prime(r) + 0.25, "at r={r}");
        }
    }

    #[test]
    fn perspective_values_and_convexity() {
        for name in law_names() {
            let law = build_law(name).unwrap();
            assert_eq!(perspective(law.as_ref(), 0.0), 0.0, "{name} G(0)");
            let g1 = perspective(law.as_ref(), 1.0);
            let e1 = law.energy_density(1.0);
            assert!((g1 - e1).abs() < 1e-14, "{name} G(1) = {g1} vs E(1) = {e1}");
            // Midpoint convexity on a positive grid.
            for k in 0..20 {
                let a = 0.05 + 0.21 * k as f64;
                let b = a + 0.73;
                let mid = perspective(law.as_ref(), 0.5 * (a + b));
                let avg = 0.5 * (perspective(law.as_ref(), a) + perspective(law.as_ref(), b));
                assert!(mid <= avg + 1e-12, "{name} convexity at [{a}, {b}]: {mid} > {avg}");
            }
        }
    }

    #[test]
    fn perspective_slope_matches_finite_differences() {
        let law = build_law("rational").unwrap();
        for s in [0.2, 1.0, 3.7] {
            let h = 1e-6;
            let fd = (perspective(law.as_ref(), s + h) - perspective(law.as_ref(), s - h)) / (2.0 * h);
            let gs = perspective_slope(law.as_ref(), s);
            assert!((fd - gs).abs() < 1e-6, "G'({s}): {gs} vs fd {fd}");
        }
    }

    #[test]
    fn perspective_slope_at_zero_is_minus_beta_inf() {
        let arctan = build_law("arctan").unwrap();
        let g0 = perspective_slope_at_zero(arctan.as_ref()).unwrap();
        assert!((g0 + std::f64::consts::FRAC_PI_2).abs() < 1e-8, "arctan G'(0+) = {g0}");
        let rational = build_law("rational").unwrap();
        let g0 = perspective_slope_at_zero(rational.as_ref()).unwrap();
        assert!((g0 + 1.0).abs() < 1e-8, "rational G'(0+) = {g0}");
        let be = build_law("bose_einstein").unwrap();
        assert!(perspective_slope_at_zero(be.as_ref()).is_none(), "bose_einstein slope must clamp");
    }
}
