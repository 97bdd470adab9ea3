//! Confining potentials.  `lambda` is the convexity modulus (largest constant
//! with `V'' >= lambda` on the line): positive for uniformly convex wells,
//! zero for merely convex ones, negative for multi-well shapes.

use crate::error::{CoreError, Result};

pub trait Potential: Send + Sync {
    fn name(&self) -> &'static str;

    fn v(&self, x: f64) -> f64;

    fn v_prime(&self, x: f64) -> f64;

    /// Convexity modulus of `V`.
    fn lambda(&self) -> f64;

    /// Second derivative where defined; `None` where it is unbounded or does
    /// not exist.
    fn v_second(&self, _x: f64) -> Option<f64> {
        None
    }

    /// `V(x) -> +inf` as `|x| -> inf`.
    fn coercive(&self) -> bool {
        true
    }

    /// `liminf V(x)/x^2 >= 0`; keeps second moments controlled along flows.
    fn quadratic_growth(&self) -> bool {
        true
    }
}

/// `V(x) = |x|^alpha`, `alpha >= 1`.  Convex with modulus 0 (curvature decays
/// at infinity for alpha < 2 and vanishes at the origin for alpha > 2; the
/// kink of `|x|` at 0 is handled by setting the derivative to 0 there).
#[derive(Clone, Copy, Debug)]
pub struct PowerPotential {
    alpha: f64,
}

impl PowerPotential {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(CoreError::InvalidInput(format!(
                "power potential needs alpha >= 1, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Potential for PowerPotential {
    fn name(&self) -> &'static str {
        "power"
    }

    fn v(&self, x: f64) -> f64 {
        x.abs().powf(self.alpha)
    }

    fn v_prime(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        self.alpha * x.abs().powf(self.alpha - 1.0) * x.signum()
    }

    fn lambda(&self) -> f64 {
        0.0
    }

    fn v_second(&self, x: f64) -> Option<f64> {
        if x == 0.0 && self.alpha < 2.0 {
            return None;
        }
        Some(self.alpha * (self.alpha - 1.0) * x.abs().powf(self.alpha - 2.0))
    }
}

/// `V(x) = x^2 / 2`: uniformly convex with modulus 1; the drift flow is the
/// exact exponential contraction `x e^-t`.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuadraticPotential;

impl Potential for QuadraticPotential {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn v(&self, x: f64) -> f64 {
        0.5 * x * x
    }

    fn v_prime(&self, x: f64) -> f64 {
        x
    }

    fn lambda(&self) -> f64 {
        1.0
    }

    fn v_second(&self, _x: f64) -> Option<f64> {
        Some(1.0)
    }
}

/// `V(x) = pi (x-1)^2 (x+1)^2`: two wells at +-1 of equal depth, barrier
/// `V(0) = pi`.  The modulus is scanned numerically at construction.
#[derive(Clone, Copy, Debug)]
pub struct DoubleWellPotential {
    lambda: f64,
}

impl DoubleWellPotential {
    pub fn new() -> Self {
        // V'' = 4 pi (3x^2 - 1); the scan over [-5, 5] lands on the x = 0
        // minimum, -4 pi.
        let mut lambda = f64::INFINITY;
        let second = |x: f64| 4.0 * std::f64::consts::PI * (3.0 * x * x - 1.0);
        for k in 0..=2000 {
            let x = -5.0 + 10.0 * k as f64 / 2000.0;
            lambda = lambda.min(second(x));
        }
        Self { lambda }
    }
}

impl Default for DoubleWellPotential {
    fn default() -> Self {
        Self::new()
    }
}

impl Potential for DoubleWellPotential {
    fn name(&self) -> &'static str {
        "double_well"
    }

    fn v(&self, x: f64) -> f64 {
        let q = x * x - 1.0;
        std::f64::consts::PI * q * q
    }

    fn v_prime(&self, x: f64) -> f64 {
        4.0 * std::f64::consts::PI * x * (x * x - 1.0)
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn v_second(&self, x: f64) -> Option<f64> {
        Some(4.0 * std::f64::consts::PI * (3.0 * x * x - 1.0))
    }
}
