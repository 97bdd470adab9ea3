//! Numerical quadrature and scalar root finding.
//!
//! The workhorse is an adaptive 15-point Gauss–Kronrod rule: panels are split
//! at the midpoint, worst error first, until the summed error estimate drops
//! below the requested absolute tolerance.  Integrable endpoint singularities
//! are handled separately by dyadic shells around the singular point
//! ([`improper_one_sided`]), whose shell masses also decide between a finite
//! value, divergence, and an explicit undetermined verdict.

use crate::error::{CoreError, Result};
use std::collections::BinaryHeap;

/// Finite-or-infinite outcome of an improper integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extent {
    Finite(f64),
    Infinite,
}

impl Extent {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extent::Finite(v) => Some(v),
            Extent::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extent::Infinite)
    }

    /// `+inf` stands in for the infinite branch where a plain number is needed.
    pub fn as_f64(self) -> f64 {
        match self {
            Extent::Finite(v) => v,
            Extent::Infinite => f64::INFINITY,
        }
    }
}

// 15-point Kronrod abscissae on [-1, 1]; every other one is a 7-point Gauss
// abscissa.  Standard values, truncated to f64.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Gauss–Kronrod 15 panel: returns (integral, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_gauss = WG[3] * fc;
    let mut res_kronrod = WGK[7] * fc;
    for j in 0..3 {
        let i = 2 * j + 1;
        let dx = half * XGK[i];
        let fsum = f(center - dx) + f(center + dx);
        res_gauss += WG[j] * fsum;
        res_kronrod += WGK[i] * fsum;
    }
    for j in 0..4 {
        let i = 2 * j;
        let dx = half * XGK[i];
        let fsum = f(center - dx) + f(center + dx);
        res_kronrod += WGK[i] * fsum;
    }
    let result = res_kronrod * half;
    let err = ((res_kronrod - res_gauss) * half).abs();
    (result, err)
}

#[derive(PartialEq)]
struct Panel {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl Eq for Panel {}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const MAX_PANELS: usize = 4000;

/// Relative accuracy floor: error targets below `REL_FLOOR * |integral|` are
/// not certifiable in f64 arithmetic, so the stopping rule treats them as met.
const REL_FLOOR: f64 = 1e-12;

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `abstol` (with the relative floor above).  The integrand must be
/// finite on the closed interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abstol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "integration limits must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let (val, err) = gk15(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { err, a: lo, b: hi, val });
    let mut total_err = err;
    let mut total_val = val;
    while total_err > abstol + REL_FLOOR * total_val.abs() {
        if heap.len() >= MAX_PANELS {
            return Err(CoreError::NonConvergence {
                what: "adaptive quadrature",
                detail: format!(
                    "error estimate {total_err:.3e} above tolerance {abstol:.3e} after {MAX_PANELS} panels on [{lo}, {hi}]"
                ),
            });
        }
        let worst = heap.pop().expect("heap cannot be empty while error is positive");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating-point resolution; keep its estimate as is.
            total_err -= worst.err;
            total_val += 0.0;
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total_val += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { err: e1, a: worst.a, b: mid, val: v1 });
        heap.push(Panel { err: e2, a: mid, b: worst.b, val: v2 });
    }
    Ok(sign * total_val)
}

/// Like [`integrate`], but returns the running estimate instead of failing
/// when the panel budget is exhausted.  Used where the caller has no channel
/// for an error and the integrand is known to be benign.
pub fn integrate_best<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abstol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let (val, err) = gk15(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { err, a: lo, b: hi, val });
    let mut total_err = err;
    let mut total_val = val;
    while total_err > abstol + REL_FLOOR * total_val.abs() && heap.len() < MAX_PANELS {
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            total_err -= worst.err;
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total_val += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { err: e1, a: worst.a, b: mid, val: v1 });
        heap.push(Panel { err: e2, a: mid, b: worst.b, val: v2 });
    }
    sign * total_val
}

/// Integral of `f` over `[a, +inf)` for integrands that eventually decay.
/// Panels double in width; the sum stops once two consecutive panels fall
/// below `abstol / 10` each.
pub fn integrate_upper_tail<F: Fn(f64) -> f64>(f: F, a: f64, abstol: f64) -> Result<f64> {
    let mut lo = a;
    let mut width = 1.0f64.max(a.abs() * 0.5).min(1e6);
    let mut total = 0.0;
    let mut small_streak = 0;
    for _ in 0..200 {
        let hi = lo + width;
        let part = integrate(&f, lo, hi, abstol * 0.05)?;
        total += part;
        if part.abs() < abstol * 0.1 {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok(total);
            }
        } else {
            small_streak = 0;
        }
        lo = hi;
        width *= 2.0;
    }
    Err(CoreError::NonConvergence {
        what: "tail quadrature",
        detail: format!("no decay detected integrating from {a} upward"),
    })
}

/// Smallest dyadic shell scale used around singular points: 2^-40.
pub const DYADIC_FLOOR: f64 = 9.094947017729282e-13;

/// Ratio of successive shell masses at or above which the integral is
/// declared divergent (covers logarithmic, ratio -> 1, and power growth).
const DIVERGENT_RATIO: f64 = 0.98;

/// Improper integral of `g` over distances `d` in `(0, width]` from a
/// one-sided singular point, i.e. `int_0^width g(d) dd` where `g` may blow up
/// as `d -> 0`.
///
/// Shells `[2^-(k+1), 2^-k] * width` are integrated down to scale 2^-40.
/// The geometric ratio of the finest shell masses classifies the integral:
/// decaying shells give a finite value with a geometric tail extrapolation
/// (one-term Richardson correction), non-decaying shells mean divergence, and
/// erratic ratios produce an explicit undetermined error.
pub fn improper_one_sided<G: Fn(f64) -> f64>(g: G, width: f64, abstol: f64) -> Result<Extent> {
    if !(width > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "improper integral needs positive width, got {width}"
        )));
    }
    let levels = 40usize;
    let per_shell_tol = abstol / levels as f64;
    let mut shells = Vec::with_capacity(levels);
    let mut hi = width;
    let mut total = 0.0;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        let part = integrate(&g, lo, hi, per_shell_tol)?;
        shells.push(part);
        total += part;
        hi = lo;
    }
    // hi is now width * 2^-40; decide what the remaining core contributes.
    let scale = total.abs().max(abstol);
    let tiny = 1e-15 * scale;
    let last = *shells.last().expect("levels > 0");
    if last.abs() < tiny {
        return Ok(Extent::Finite(total));
    }
    // Geometric mean ratio over the finest shells that are still above noise.
    // Sign-consistent shells classify by magnitude (energy integrands run
    // negative near blow-up points); sign changes never enter the ratios.
    let tail: Vec<f64> = shells.iter().rev().take(8).copied().collect();
    let mut ratios = Vec::new();
    for w in tail.windows(2) {
        // tail is finest-first, so w[1] is the coarser shell.
        if w[1].abs() > tiny && w[0].abs() > tiny && w[0] * w[1] > 0.0 {
            ratios.push(w[0] / w[1]);
        }
    }
    if ratios.len() < 4 {
        return Err(CoreError::Undetermined {
            what: "improper integral",
            detail: "shell masses fell to noise level without a stable decay ratio".into(),
        });
    }
    let log_mean = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
    let rho = log_mean.exp();
    let spread = ratios
        .iter()
        .map(|r| (r.ln() - log_mean).abs())
        .fold(0.0f64, f64::max);
    if spread > 0.35 {
        return Err(CoreError::Undetermined {
            what: "improper integral",
            detail: format!("shell decay ratios unstable (geometric mean {rho:.4}, log spread {spread:.3})"),
        });
    }
    if rho >= DIVERGENT_RATIO {
        return Ok(Extent::Infinite);
    }
    // Finite: extrapolate the unintegrated core geometrically.
    let tail_estimate = last * rho / (1.0 - rho);
    Ok(Extent::Finite(total + tail_estimate))
}

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`.
/// Returns `(x, f(x))` once the bracket shrinks below `xtol`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > xtol && d > c {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}

/// Bisection for a root of `f` in `[lo, hi]`; the endpoints must bracket a
/// sign change.  Runs to floating-point resolution of the bracket, which for
/// ~200 iterations is always reached.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(CoreError::InvalidInput(format!(
            "bisection bracket [{lo}, {hi}] has no sign change (f={fa:.3e} and {fb:.3e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Ok(mid.clamp(a, b));
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Expands `hi` geometrically from `lo` until `f` changes sign, then bisects.
/// `f(lo)` fixes the reference sign.
pub fn bisect_expanding<F: Fn(f64) -> f64>(f: F, lo: f64, step0: f64) -> Result<f64> {
    let f_lo = f(lo);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let mut step = step0.abs().max(1e-12);
    let mut a = lo;
    for _ in 0..200 {
        let b = a + step;
        let fb = f(b);
        if fb == 0.0 {
            return Ok(b);
        }
        if fb.signum() != f_lo.signum() {
            return bisect(f, a, b);
        }
        a = b;
        step *= 2.0;
    }
    Err(CoreError::NonConvergence {
        what: "bracket expansion",
        detail: format!("no sign change found expanding from {lo}"),
    })
}
