//! Diffusion laws: the saturating flux function `beta` and everything derived
//! from it.
//!
//! The energy density behind the diffusion term is
//!
//! ```text
//! E(r) = -beta_inf + int_r^inf (1 - r/s) beta'(s) ds
//!      = -beta(r) - r int_r^inf beta'(s)/s ds
//! ```
//!
//! so `E(0) = 0`, `E` is convex and nonpositive, `E'(r) = -int_r^inf
//! beta'(s)/s ds` is negative increasing, and `r E''(r) = beta'(r)`.  The
//! depth `d = -lim_{r->0+} E'(r) = int_0^inf beta'(s)/s ds` may be infinite;
//! `H(v)` inverts `E'` (`E'(H(v)) = -v` for `0 < v < d`, `H(v) = 0` for
//! `v >= d`).  Catalog laws carry closed forms; anything else falls back to
//! the quadrature/bisection defaults on this trait.

use crate::error::{CoreError, Result};
use crate::quad::{improper_one_sided, integrate_best, integrate_upper_tail, Extent};

/// Depths beyond this are reported as infinite; a pit this deep never empties
/// in any simulation this crate can run.
pub const DEPTH_CAP: f64 = 1e6;

/// Tail cutoff rule for the energy quadratures: integrate out to the first
/// dyadic point where `beta_inf - beta(s) < 1e-12`.
const BETA_TAIL_TOL: f64 = 1e-12;

/// A diffusion law with bounded flux.  `beta` is C^1, increasing, `beta(0) =
/// 0`; `beta_inf = lim beta` (infinite only for the Bose-Einstein entry,
/// which carries its own closed forms).
pub trait DiffusionLaw: Send + Sync {
    fn name(&self) -> &'static str;

    fn beta(&self, r: f64) -> f64;

    fn beta_prime(&self, r: f64) -> f64;

    fn beta_inf(&self) -> f64;

    /// Energy density `E(r)`.  Default: quadrature of the defining integral,
    /// target absolute tolerance 1e-10; requires finite `beta_inf`.
    fn energy_density(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let cut = self.beta_tail_cutoff(r);
        let integral = chunked_integral(|s| (1.0 - r / s) * self.beta_prime(s), r, cut);
        -self.beta_inf() + integral
    }

    /// `E'(r)` for `r > 0`.  Default: quadrature of `-int_r^inf beta'/s`.
    fn energy_slope(&self, r: f64) -> f64 {
        let cut = self.beta_tail_cutoff(r.max(1.0));
        -chunked_integral(|s| self.beta_prime(s) / s, r, cut)
    }

    /// `H(v) = (E')^{-1}(-v)` for `0 < v < depth`, `0` beyond the depth,
    /// `+inf` as `v -> 0+` when the law has no a-priori ceiling.  Default:
    /// bracketed bisection on `energy_slope`.
    fn pseudo_inverse(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::INFINITY;
        }
        // Shrink the lower bracket end until E'(lo) <= -v.  If that never
        // happens the slope floor -depth lies above -v, i.e. v >= depth.
        let mut lo = 1.0f64;
        while self.energy_slope(lo) > -v {
            lo *= 0.5;
            if lo < 1e-280 {
                return 0.0;
            }
        }
        let mut hi = lo.max(1.0);
        while self.energy_slope(hi) < -v {
            hi *= 2.0;
            if hi > 1e280 {
                return hi;
            }
        }
        if lo == hi {
            return lo;
        }
        crate::quad::bisect(|r| self.energy_slope(r) + v, lo, hi).unwrap_or(0.5 * (lo + hi))
    }

    /// Depth of the energy slope at zero.  Default: dyadic-shell quadrature of
    /// `beta'(s)/s` near zero (divergence classified by shell decay) plus the
    /// regular tail; finite values above [`DEPTH_CAP`] count as infinite.
    fn depth(&self) -> Result<Extent> {
        let inner = improper_one_sided(|d| self.beta_prime(d) / d, 1.0, 1e-9)?;
        let inner_v = match inner {
            Extent::Finite(v) => v,
            Extent::Infinite => return Ok(Extent::Infinite),
        };
        let outer = integrate_upper_tail(|s| self.beta_prime(s) / s, 1.0, 1e-9)?;
        let total = inner_v + outer;
        if total > DEPTH_CAP {
            Ok(Extent::Infinite)
        } else {
            Ok(Extent::Finite(total))
        }
    }

    /// Supremum of `beta'` over `[0, r_max]` for stability bounds.  Default:
    /// dense sampling (beta' is continuous); padded by 0.1% so the bound errs
    /// on the safe side.
    fn beta_prime_sup(&self, r_max: f64) -> f64 {
        let mut sup = self.beta_prime(0.0).max(self.beta_prime(r_max.max(0.0)));
        let hi = r_max.max(1e-6);
        for k in 1..800 {
            let x = hi * k as f64 / 800.0;
            sup = sup.max(self.beta_prime(x));
        }
        let mut x = hi;
        for _ in 0..200 {
            x *= 0.5;
            if x < 1e-12 {
                break;
            }
            sup = sup.max(self.beta_prime(x));
        }
        sup * 1.001
    }

    /// First dyadic point past `from` where `beta` has saturated to within
    /// `1e-12` of `beta_inf`.
    fn beta_tail_cutoff(&self, from: f64) -> f64 {
        let binf = self.beta_inf();
        let mut s = from.max(1.0);
        for _ in 0..400 {
            if binf - self.beta(s) < BETA_TAIL_TOL {
                return s;
            }
            s *= 2.0;
        }
        s
    }
}

/// Sums adaptive panels over dyadic chunks of `[a, b]`; wide ranges (tail
/// cutoffs sit near 1e12) stay well-conditioned this way.
fn chunked_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut chunks = Vec::new();
    let mut lo = a;
    while lo * 2.0 < b {
        let hi = (lo * 2.0).max(lo + 1e-3);
        chunks.push((lo, hi.min(b)));
        lo = hi;
    }
    if lo < b {
        chunks.push((lo, b));
    }
    let per_chunk = 1e-10 / chunks.len().max(1) as f64;
    chunks.iter().map(|&(x0, x1)| integrate_best(&f, x0, x1, per_chunk)).sum()
}

/// `beta(r) = arctan(r)`.  Unbounded density ceiling (`depth = +inf`),
/// `E(r) = r ln(r / sqrt(1+r^2)) - arctan r`, `H(v) = e^-v / sqrt(1-e^-2v)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ArctanLaw;

impl DiffusionLaw for ArctanLaw {
    fn name(&self) -> &'static str {
        "arctan"
    }

    fn beta(&self, r: f64) -> f64 {
        r.atan()
    }

    fn beta_prime(&self, r: f64) -> f64 {
        1.0 / (1.0 + r * r)
    }

    fn beta_inf(&self) -> f64 {
        std::f64::consts::FRAC_PI_2
    }

    fn energy_density(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        // ln(1 + r^-2) in a form that never overflows: below r = 1 the
        // direct 1/r^2 would saturate for subnormal r.
        let log_term = if r < 1.0 {
            (r * r).ln_1p() - 2.0 * r.ln()
        } else {
            (1.0 / (r * r)).ln_1p()
        };
        -0.5 * r * log_term - r.atan()
    }

    fn energy_slope(&self, r: f64) -> f64 {
        if r == 0.0 {
            return f64::NEG_INFINITY;
        }
        if r < 1.0 {
            -0.5 * ((r * r).ln_1p() - 2.0 * r.ln())
        } else {
            -0.5 * (1.0 / (r * r)).ln_1p()
        }
    }

    fn pseudo_inverse(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::INFINITY;
        }
        let e = (-v).exp();
        if e == 0.0 {
            return 0.0;
        }
        e / (-(-2.0 * v).exp_m1()).sqrt()
    }

    fn depth(&self) -> Result<Extent> {
        Ok(Extent::Infinite)
    }
}

/// `beta(r) = r^2 / (1 + r^2)`.  Finite depth `pi/2`: densities below the
/// ceiling `H(V - v)` stay, mass beyond it condenses.  `E(r) = -r arctan(1/r)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct RationalLaw;

impl DiffusionLaw for RationalLaw {
    fn name(&self) -> &'static str {
        "rational"
    }

    fn beta(&self, r: f64) -> f64 {
        r * r / (1.0 + r * r)
    }

    fn beta_prime(&self, r: f64) -> f64 {
        let q = 1.0 + r * r;
        2.0 * r / (q * q)
    }

    fn beta_inf(&self) -> f64 {
        1.0
    }

    fn energy_density(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        -r * (1.0 / r).atan()
    }

    fn energy_slope(&self, r: f64) -> f64 {
        let t = 1.0 / r;
        if t < 0.05 {
            // Direct evaluation cancels catastrophically for large r; the
            // difference expands as -sum (2k/(2k+1)) (-1)^(k+1) t^(2k+1).
            let u = t * t;
            return -t * u
                * (2.0 / 3.0 - u * (4.0 / 5.0 - u * (6.0 / 7.0 - u * (8.0 / 9.0))));
        }
        r / (1.0 + r * r) - t.atan()
    }

    fn depth(&self) -> Result<Extent> {
        Ok(Extent::Finite(std::f64::consts::FRAC_PI_2))
    }
}

/// `beta(r) = ln(1 + r)`: the one-dimensional Bose-Einstein entropy
/// `E(r) = r ln r - (1+r) ln(1+r)` with steady profile `H(v) = 1/(e^v - 1)`.
/// `beta_inf = +inf`, so only the closed forms below are usable; the generic
/// quadrature form of `E` does not apply.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoseEinsteinLaw;

impl DiffusionLaw for BoseEinsteinLaw {
    fn name(&self) -> &'static str {
        "bose_einstein"
    }

    fn beta(&self, r: f64) -> f64 {
        r.ln_1p()
    }

    fn beta_prime(&self, r: f64) -> f64 {
        1.0 / (1.0 + r)
    }

    fn beta_inf(&self) -> f64 {
        f64::INFINITY
    }

    fn energy_density(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        // r ln r - (1+r) ln(1+r); each branch avoids overflow/cancellation
        // on its side of r = 1.
        if r <= 1.0 {
            r * r.ln() - (1.0 + r) * r.ln_1p()
        } else {
            -r * (1.0 / r).ln_1p() - r.ln_1p()
        }
    }

    fn energy_slope(&self, r: f64) -> f64 {
        if r == 0.0 {
            return f64::NEG_INFINITY;
        }
        -(1.0 / r).ln_1p()
    }

    fn pseudo_inverse(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::INFINITY;
        }
        let d = v.exp_m1();
        if d.is_infinite() {
            return 0.0;
        }
        1.0 / d
    }

    fn depth(&self) -> Result<Extent> {
        Ok(Extent::Infinite)
    }
}

/// User-supplied law: `beta`, `beta'`, and a finite `beta_inf`.  Everything
/// else comes from the trait defaults (quadrature, bisection, shell
/// classification).
pub struct GenericLaw {
    label: &'static str,
    beta: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    beta_prime: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    beta_inf: f64,
}

impl GenericLaw {
    pub fn new(
        label: &'static str,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta_inf: f64,
    ) -> Result<Self> {
        if !(beta_inf.is_finite() && beta_inf > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "generic law needs finite positive beta_inf, got {beta_inf}"
            )));
        }
        Ok(Self { label, beta: Box::new(beta), beta_prime: Box::new(beta_prime), beta_inf })
    }
}

impl DiffusionLaw for GenericLaw {
    fn name(&self) -> &'static str {
        self.label
    }

    fn beta(&self, r: f64) -> f64 {
        (self.beta)(r)
    }

    fn beta_prime(&self, r: f64) -> f64 {
        (self.beta_prime)(r)
    }

    fn beta_inf(&self) -> f64 {
        self.beta_inf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2};

    fn laws() -> Vec<Box<dyn DiffusionLaw>> {
        vec![Box::new(ArctanLaw), Box::new(RationalLaw), Box::new(BoseEinsteinLaw)]
    }

    #[test]
    fn energy_density_closed_values() {
        // arctan: E(1) = -ln2/2 - pi/4 ~= -1.1319718
        let e = ArctanLaw.energy_density(1.0);
        assert!((e - (-0.5 * LN_2 - FRAC_PI_4)).abs() < 1e-15, "got {e}");
        // bose_einstein: E(1) = -2 ln2 ~= -1.3862944
        let e = BoseEinsteinLaw.energy_density(1.0);
        assert!((e - (-2.0 * LN_2)).abs() < 1e-15, "got {e}");
        // rational: E(1) = -pi/4
        let e = RationalLaw.energy_density(1.0);
        assert!((e - (-FRAC_PI_4)).abs() < 1e-15, "got {e}");
        for law in laws() {
            assert_eq!(law.energy_density(0.0), 0.0, "{} E(0)", law.name());
        }
    }

    #[test]
    fn energy_slope_closed_values() {
        let s = ArctanLaw.energy_slope(1.0);
        assert!((s - (-0.5 * LN_2)).abs() < 1e-15, "arctan E'(1) = {s}");
        let s = RationalLaw.energy_slope(1.0);
        assert!((s - (0.5 - FRAC_PI_4)).abs() < 1e-15, "rational E'(1) = {s}");
        let s = BoseEinsteinLaw.energy_slope(1.0);
        assert!((s - (-LN_2)).abs() < 1e-15, "bose_einstein E'(1) = {s}");
    }

    #[test]
    fn pseudo_inverse_closed_values() {
        let h = ArctanLaw.pseudo_inverse(LN_2);
        assert!((h - 1.0 / 3.0f64.sqrt()).abs() < 1e-15, "arctan H(ln2) = {h}");
        let h = BoseEinsteinLaw.pseudo_inverse(LN_2);
        assert!((h - 1.0).abs() < 1e-15, "bose_einstein H(ln2) = {h}");
        let h = RationalLaw.pseudo_inverse(FRAC_PI_2 + 1.0);
        assert_eq!(h, 0.0, "rational H beyond depth");
    }

    #[test]
    fn depths() {
        assert_eq!(ArctanLaw.depth().unwrap(), Extent::Infinite);
        assert_eq!(BoseEinsteinLaw.depth().unwrap(), Extent::Infinite);
        match RationalLaw.depth().unwrap() {
            Extent::Finite(d) => assert!((d - FRAC_PI_2).abs() < 1e-12, "rational depth {d}"),
            Extent::Infinite => panic!("rational depth must be pi/2"),
        }
    }

    #[test]
    fn slope_inverse_consistency() {
        // E'(H(v)) = -v on (0, depth), to 1e-8.
        for law in laws() {
            let depth = law.depth().unwrap().as_f64();
            for k in 0..40 {
                let v = 1e-3 * 1.35f64.powi(k);
                if v >= 0.95 * depth {
                    break;
                }
                let h = law.pseudo_inverse(v);
                let back = law.energy_slope(h);
                assert!(
                    (back + v).abs() <= 1e-8 * (1.0 + v),
                    "{}: E'(H({v})) = {back}",
                    law.name()
                );
            }
        }
    }

    #[test]
    fn curvature_matches_beta_prime() {
        // r E''(r) = beta'(r), E'' by central differences of E'.
        for law in laws() {
            for k in -12..=12 {
                let r = 10f64.powf(k as f64 / 4.0);
                let h = r * 1e-5;
                let second = (law.energy_slope(r + h) - law.energy_slope(r - h)) / (2.0 * h);
                let lhs = r * second;
                let rhs = law.beta_prime(r);
                assert!(
                    (lhs - rhs).abs() <= 1e-4 * rhs.abs().max(1e-300),
                    "{} at r={r}: rE''={lhs}, beta'={rhs}",
                    law.name()
                );
            }
        }
    }

    #[test]
    fn energy_saturates_at_minus_beta_inf() {
        for law in [&ArctanLaw as &dyn DiffusionLaw, &RationalLaw] {
            let e = law.energy_density(1e6);
            assert!(
                (e + law.beta_inf()).abs() <= 1e-3,
                "{}: E(1e6) = {e} vs -beta_inf = {}",
                law.name(),
                -law.beta_inf()
            );
        }
    }

    #[test]
    fn slopes_negative_and_increasing() {
        for law in laws() {
            let mut prev = f64::NEG_INFINITY;
            for k in -8..8 {
                let r = 10f64.powi(k);
                let s = law.energy_slope(r);
                assert!(s < 0.0, "{} E'({r}) = {s}", law.name());
                assert!(s >= prev, "{} E' not increasing at {r}", law.name());
                prev = s;
            }
        }
    }

    #[test]
    fn generic_law_defaults_match_arctan_closed_forms() {
        let g = GenericLaw::new("arctan-generic", |r: f64| r.atan(), |r: f64| 1.0 / (1.0 + r * r), FRAC_PI_2)
            .unwrap();
        for r in [0.05, 0.3, 1.0, 4.0, 20.0] {
            let e = g.energy_density(r);
            let e_ref = ArctanLaw.energy_density(r);
            assert!((e - e_ref).abs() < 1e-7, "E({r}): {e} vs {e_ref}");
            let s = g.energy_slope(r);
            let s_ref = ArctanLaw.energy_slope(r);
            assert!((s - s_ref).abs() < 1e-7, "E'({r}): {s} vs {s_ref}");
        }
        for v in [0.1, 0.5, LN_2, 2.0] {
            let h = g.pseudo_inverse(v);
            let h_ref = ArctanLaw.pseudo_inverse(v);
            assert!((h - h_ref).abs() < 1e-6 * (1.0 + h_ref), "H({v}): {h} vs {h_ref}");
        }
        assert_eq!(g.depth().unwrap(), Extent::Infinite);
    }

    #[test]
    fn generic_law_default_depth_finds_rational_value() {
        let g = GenericLaw::new(
            "rational-generic",
            |r: f64| r * r / (1.0 + r * r),
            |r: f64| {
                let q = 1.0 + r * r;
                2.0 * r / (q * q)
            },
            1.0,
        )
        .unwrap();
        match g.depth().unwrap() {
            Extent::Finite(d) => assert!((d - FRAC_PI_2).abs() < 1e-6, "depth {d}"),
            Extent::Infinite => panic!("rational-shaped law classified divergent"),
        }
    }

    #[test]
    fn generic_law_rejects_infinite_beta_inf() {
        assert!(GenericLaw::new("bad", |r: f64| r, |_| 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn beta_prime_sup_covers_interior_maximum() {
        // rational beta' peaks at 1/sqrt(3) with value 9/(8 sqrt(3)).
        let sup = RationalLaw.beta_prime_sup(10.0);
        let peak = 9.0 / (8.0 * 3.0f64.sqrt());
        assert!(sup >= peak * 0.999 && sup <= peak * 1.01, "sup {sup} vs peak {peak}");
        assert!(ArctanLaw.beta_prime_sup(5.0) >= 1.0);
    }
}
