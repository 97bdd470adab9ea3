//! Steady states: mass function, critical mass, level selection, minimizer
//! construction, and the stationarity checker.
//!
//! The closed-form steady density is `H(V(x) - v)` where `H` is the
//! pseudo-inverse of `-E'` and the level `v` is chosen so the density carries
//! the requested mass; mass beyond the critical value condenses into atoms at
//! the minimum set of `V`.

use crate::error::{CoreError, Result};
use crate::functionals::entropy_grid;
use crate::measures::{Atom, GridMeasure};
use crate::model::{DiffusionLaw, Potential, Problem};
use crate::quad::{bisect, golden_min, improper_one_sided, integrate_best, Extent};

/// Density values below this are treated as zero when cutting support tails.
const DENSITY_FLOOR: f64 = 1e-14;

/// Floor on `V(x) - v` inside singular integrands, so roundoff at the minimum
/// cannot produce a negative argument (`H` of a negative value is infinite).
const ARG_FLOOR: f64 = 1e-280;

/// Contiguous samples within this relative tolerance of the minimum are
/// declared a flat piece of the minimum set.
const FLAT_TOL: f64 = 1e-12;

/// Minimum set of the potential.
#[derive(Clone, Debug)]
pub struct QSet {
    pub v_min: f64,
    /// Closed intervals `[a, b]`, `a == b` for isolated points, sorted.
    pub components: Vec<(f64, f64)>,
}

impl QSet {
    pub fn min_x(&self) -> f64 {
        self.components[0].0
    }

    pub fn max_x(&self) -> f64 {
        self.components[self.components.len() - 1].1
    }

    pub fn has_interval(&self) -> bool {
        self.components.iter().any(|&(a, b)| b > a)
    }

    /// Isolated minimum points; meaningful only when `has_interval` is false.
    pub fn points(&self) -> Vec<f64> {
        self.components.iter().map(|&(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Locates `min V` and its argmin set by scanning an expanding window and
/// polishing each sampled local minimum with golden-section search.  Rejects
/// potentials that fail to grow by 10 above their minimum within `|x| <= 1e6`.
pub fn locate_min(potential: &dyn Potential, halfwidth_hint: f64) -> Result<QSet> {
    let n = 20_000usize;
    let mut r = halfwidth_hint.max(1.0);
    let (xs, vs) = loop {
        let xs: Vec<f64> = (0..=n).map(|i| -r + 2.0 * r * i as f64 / n as f64).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| potential.v(x)).collect();
        let v_low = vs.iter().cloned().fold(f64::INFINITY, f64::min);
        if vs[0] >= v_low + 10.0 && vs[n] >= v_low + 10.0 {
            break (xs, vs);
        }
        r *= 2.0;
        if r > 1e6 {
            return Err(CoreError::InvalidInput(
                "potential does not grow by 10 above its minimum within |x| <= 1e6; \
                 a coercive potential is required"
                    .into(),
            ));
        }
    };

    // Polish every sampled local minimum to machine resolution.  The golden
    // midpoint can land a few ulps off an exact minimum (kinks, symmetric
    // wells); the sampled point wins whenever it is at least as low, which
    // keeps exact grid hits like 0 exact.
    let mut cands: Vec<(f64, f64)> = Vec::new();
    for i in 1..n {
        if vs[i] <= vs[i - 1] && vs[i] <= vs[i + 1] {
            let xtol = 4.0 * f64::EPSILON * (1.0 + xs[i].abs());
            let (x, v) = golden_min(|x| potential.v(x), xs[i - 1], xs[i + 1], xtol);
            if vs[i] <= v {
                cands.push((xs[i], vs[i]));
            } else {
                cands.push((x, v));
            }
        }
    }
    let v_min = cands
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    let keep_tol = 1e-9 * (1.0 + v_min.abs());
    let mut kept: Vec<f64> = cands
        .iter()
        .filter(|&&(_, v)| v <= v_min + keep_tol)
        .map(|&(x, _)| x)
        .collect();
    kept.sort_by(f64::total_cmp);

    // Flat pieces: contiguous samples at the minimum within FLAT_TOL.
    let flat_tol = FLAT_TOL * (1.0 + v_min.abs());
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=n {
        if vs[i] <= v_min + flat_tol {
            run_start.get_or_insert(i);
        } else if let Some(s) = run_start.take() {
            if i - s >= 2 {
                intervals.push((xs[s], xs[i - 1]));
            }
        }
    }
    if let Some(s) = run_start {
        if n + 1 - s >= 2 {
            intervals.push((xs[s], xs[n]));
        }
    }

    // Merge: polished points inside a flat interval are redundant; points
    // closer than one sample spacing collapse to one.
    let spacing = xs[1] - xs[0];
    let mut components: Vec<(f64, f64)> = intervals;
    for x in kept {
        if components
            .iter()
            .any(|&(a, b)| x >= a - spacing && x <= b + spacing)
        {
            continue;
        }
        components.push((x, x));
    }
    components.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in components {
        match merged.last_mut() {
            Some(last) if a <= last.1 + spacing && last.1 - last.0 == 0.0 && b - a == 0.0 => {
                last.1 = b.max(last.1);
                // Two polished points within a sample spacing: keep midpoint.
                let mid = 0.5 * (last.0 + last.1);
                *last = (mid, mid);
            }
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    Ok(QSet { v_min, components: merged })
}

/// Level at which the steady density drops below `DENSITY_FLOOR`: beyond
/// `V(x) - v >= cut_width` the profile is numerically zero.
fn cut_width(law: &dyn DiffusionLaw) -> f64 {
    -law.energy_slope(DENSITY_FLOOR)
}

/// First sustained crossing of `V` through `target`, searched from `from` in
/// direction `dir` (+-1) with geometric expansion.
pub(crate) fn crossing(potential: &dyn Potential, from: f64, dir: f64, target: f64) -> Result<f64> {
    if potential.v(from) >= target {
        return Ok(from);
    }
    let mut inside = from;
    let mut step = 1.0;
    for _ in 0..60 {
        let probe = inside + dir * step;
        if potential.v(probe) >= target
            && potential.v(probe + dir * step) >= target
            && potential.v(probe + dir * 4.0 * step) >= target
        {
            let f = |x: f64| potential.v(x) - target;
            let (lo, hi) = if dir > 0.0 { (inside, probe) } else { (probe, inside) };
            return bisect(f, lo, hi);
        }
        if potential.v(probe) < target {
            inside = probe;
        }
        step *= 2.0;
    }
    Err(CoreError::InvalidInput(format!(
        "potential never reaches level {target} in direction {dir}; coercivity \
         (or a wider search) is required"
    )))
}

fn mass_function_with(problem: &Problem, q: &QSet, v: f64) -> Result<f64> {
    if !(v < q.v_min) {
        return Err(CoreError::InvalidInput(format!(
            "mass function needs v < V_min = {}, got {v}",
            q.v_min
        )));
    }
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let target = v + cut_width(law);
    let a = crossing(pot, q.min_x(), -1.0, target)?;
    let b = crossing(pot, q.max_x(), 1.0, target)?;
    let f = |x: f64| law.pseudo_inverse(pot.v(x) - v);
    Ok(integrate_best(f, a, b, 1e-10))
}

/// `M(v)`: total mass of the density profile `H(V(.) - v)` for `v < min V`.
pub fn mass_function(problem: &Problem, v: f64) -> Result<f64> {
    let q = locate_min(problem.potential.as_ref(), 8.0)?;
    mass_function_with(problem, &q, v)
}

fn critical_mass_with(problem: &Problem, q: &QSet) -> Result<Extent> {
    // H(0+) = +inf on a whole interval: infinite immediately.
    if q.has_interval() {
        return Ok(Extent::Infinite);
    }
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let v = q.v_min;
    let target = v + cut_width(law);
    let points = q.points();
    let a = crossing(pot, points[0], -1.0, target)?;
    let b = crossing(pot, *points.last().unwrap(), 1.0, target)?;

    let mut total = 0.0;
    for (i, &p) in points.iter().enumerate() {
        let left_edge = if i == 0 { a } else { 0.5 * (points[i - 1] + p) };
        let right_edge = if i + 1 == points.len() { b } else { 0.5 * (p + points[i + 1]) };
        for (width, side) in [(p - left_edge, -1.0), (right_edge - p, 1.0)] {
            if width <= 0.0 {
                continue;
            }
            let g = offset_density(law, pot, p, v);
            match improper_one_sided(|d| g(side * d), width, 1e-8)? {
                Extent::Infinite => return Ok(Extent::Infinite),
                Extent::Finite(m) => total += m,
            }
        }
    }
    Ok(Extent::Finite(total))
}

/// `m_c = lim_{v -> min V} M(v)`, the largest mass a pure density profile can
/// carry.  Divergence of the integral is detected by shell-growth analysis
/// near each minimum point.
pub fn critical_mass(problem: &Problem) -> Result<Extent> {
    let q = locate_min(problem.potential.as_ref(), 8.0)?;
    critical_mass_with(problem, &q)
}

fn level_with(problem: &Problem, q: &QSet, mc: Extent) -> Result<f64> {
    let m = problem.mass;
    if let Extent::Finite(mc_v) = mc {
        // Levels within quadrature slop of the critical mass are pinned to
        // V_min; the residue goes to the atoms.
        if m >= mc_v - 1e-7 * (1.0 + m) {
            return Ok(q.v_min);
        }
    }
    let v_min = q.v_min;
    let depth = problem.law.depth()?;

    // Lower bracket: M(lo) <= m.
    let mut lo = match depth {
        Extent::Finite(d) => v_min - d,
        Extent::Infinite => {
            let mut gap = 1.0;
            loop {
                let v = v_min - gap;
                if mass_function_with(problem, q, v)? <= m {
                    break v;
                }
                gap *= 2.0;
                if gap > 1e8 {
                    return Err(CoreError::NonConvergence {
                        what: "level bracket",
                        detail: format!("mass function still above {m} at v = {}", v_min - gap),
                    });
                }
            }
        }
    };
    // Upper bracket: approach V_min until the profile holds at least m.
    let mut hi = f64::NAN;
    let mut gap = 1e-6 * (1.0 + v_min.abs());
    for _ in 0..40 {
        let v = v_min - gap;
        if v <= lo {
            gap *= 0.0625;
            continue;
        }
        if mass_function_with(problem, q, v)? >= m {
            hi = v;
            break;
        }
        gap *= 0.0625;
    }
    if hi.is_nan() {
        return Err(CoreError::NonConvergence {
            what: "level bracket",
            detail: format!(
                "no level v in ({lo}, {v_min}) reaches mass {m}; nearest gap {gap:.3e}"
            ),
        });
    }

    let target_tol = 1e-9 * (1.0 + m);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = mass_function_with(problem, q, mid)? - m;
        if f.abs() <= target_tol {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The steady level `v`: inverse of the mass function below the critical
/// mass, `min V` at or beyond it.
pub fn level(problem: &Problem) -> Result<f64> {
    let q = locate_min(problem.potential.as_ref(), 8.0)?;
    let mc = critical_mass_with(problem, &q)?;
    level_with(problem, &q, mc)
}

/// Everything needed to evaluate and sample the steady state.
#[derive(Clone, Debug)]
pub struct SteadyProfile {
    pub level: f64,
    pub v_min: f64,
    pub critical_mass: Extent,
    pub depth: Extent,
    pub q_set: QSet,
    /// `(m - m_c)^+`; zero when the critical mass is infinite.
    pub atom_mass: f64,
    /// Interval outside which the density is below `1e-14`.
    pub support: (f64, f64),
}

impl SteadyProfile {
    pub fn density_at(&self, problem: &Problem, x: f64) -> f64 {
        problem
            .law
            .pseudo_inverse(problem.potential.v(x) - self.level)
    }

    /// Minimum points carrying atoms (empty when `atom_mass == 0`).
    pub fn atom_sites(&self) -> Vec<f64> {
        if self.atom_mass > 0.0 { self.q_set.points() } else { Vec::new() }
    }
}

/// Computes level, critical mass, atom mass, and effective support.
pub fn steady_profile(problem: &Problem) -> Result<SteadyProfile> {
    let q = locate_min(problem.potential.as_ref(), 8.0)?;
    let mc = critical_mass_with(problem, &q)?;
    let lvl = level_with(problem, &q, mc)?;
    let atom_mass = match mc {
        Extent::Finite(v) => (problem.mass - v).max(0.0),
        Extent::Infinite => 0.0,
    };
    let pot = problem.potential.as_ref();
    let target = lvl + cut_width(problem.law.as_ref());
    let support = (
        crossing(pot, q.min_x(), -1.0, target)?,
        crossing(pot, q.max_x(), 1.0, target)?,
    );
    Ok(SteadyProfile {
        level: lvl,
        v_min: q.v_min,
        critical_mass: mc,
        depth: problem.law.depth()?,
        q_set: q,
        atom_mass,
        support,
    })
}

/// Domain that comfortably contains the steady support.
pub fn default_domain(problem: &Problem) -> Result<(f64, f64)> {
    let prof = steady_profile(problem)?;
    let (a, b) = prof.support;
    let pad = 0.15 * (b - a) + 0.5;
    Ok((a - pad, b + pad))
}

/// Singular points of the profile `H(V - level)`: minimum points where the
/// level touches `min V`.
fn singular_points(prof: &SteadyProfile) -> Vec<f64> {
    if prof.v_min - prof.level <= 1e-12 * (1.0 + prof.v_min.abs()) {
        prof.q_set.points()
    } else {
        Vec::new()
    }
}

/// Density `H(V(q + s) - level)` as a function of the signed offset `s` from
/// a minimum point `q`.  Near `q` the direct difference is rounding noise
/// (forming `q + s` discards the low bits of `s`), so a quadratic model of
/// the well takes over; both branches agree to about `1e-8` relative at the
/// switch.  Degenerate minima (`V'' = 0`) keep the direct evaluation.
fn offset_density<'a>(
    law: &'a dyn DiffusionLaw,
    pot: &'a dyn Potential,
    q: f64,
    level: f64,
) -> impl Fn(f64) -> f64 + 'a {
    let base = pot.v(q) - level;
    let half_curv = pot.v_second(q).map(|c| 0.5 * c);
    let switch = 1e-8 * (1.0 + q.abs());
    move |s: f64| {
        let w = match half_curv {
            Some(hc) if hc > 0.0 && s.abs() < switch => base + hc * s * s,
            _ => pot.v(q + s) - level,
        };
        law.pseudo_inverse(w.max(ARG_FLOOR))
    }
}

/// Cell averages of `H(V(.) - level)` over `[lo, hi]` with `cells` uniform
/// cells, restricted to `window`.  Cells containing a singular point are
/// integrated with singularity-aware shells.
pub fn profile_cells(
    problem: &Problem,
    level: f64,
    window: (f64, f64),
    lo: f64,
    hi: f64,
    cells: usize,
    singular: &[f64],
) -> Result<Vec<f64>> {
    if cells == 0 || !(lo < hi) {
        return Err(CoreError::InvalidInput(format!(
            "profile sampling needs a nonempty grid, got [{lo}, {hi}] with {cells} cells"
        )));
    }
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let dx = (hi - lo) / cells as f64;
    let h = |x: f64| law.pseudo_inverse((pot.v(x) - level).max(ARG_FLOOR));
    let tol_cell = (1e-8 * problem.mass / cells as f64).max(1e-13);

    let mut out = vec![0.0; cells];
    for (j, u) in out.iter_mut().enumerate() {
        let xl = (lo + j as f64 * dx).max(window.0);
        let xr = (lo + (j + 1) as f64 * dx).min(window.1);
        if xr <= xl {
            continue;
        }
        let inside: Vec<f64> = singular
            .iter()
            .cloned()
            .filter(|&s| s > xl && s < xr)
            .collect();
        // A singular point exactly on a cell edge must still go through the
        // shell integrator: plain panels would eventually evaluate at the
        // blow-up point itself.
        let on_edge = singular.iter().any(|&s| s == xl || s == xr);
        let mut cell_mass = 0.0;
        if inside.is_empty() && !on_edge {
            cell_mass = integrate_best(h, xl, xr, tol_cell);
        } else {
            let mut edges = vec![xl];
            edges.extend(inside.iter().cloned());
            edges.push(xr);
            for w in edges.windows(2) {
                let (l, r) = (w[0], w[1]);
                let sing_l = singular.iter().any(|&s| s == l);
                let sing_r = singular.iter().any(|&s| s == r);
                let piece = if sing_l {
                    let g = offset_density(law, pot, l, level);
                    improper_one_sided(|d| g(d), r - l, tol_cell)?
                } else if sing_r {
                    let g = offset_density(law, pot, r, level);
                    improper_one_sided(|d| g(-d), r - l, tol_cell)?
                } else {
                    Extent::Finite(integrate_best(h, l, r, tol_cell))
                };
                match piece {
                    Extent::Finite(v) => cell_mass += v,
                    Extent::Infinite => {
                        return Err(CoreError::Undetermined {
                            what: "profile cell quadrature",
                            detail: format!("divergent density mass in cell [{l}, {r}]"),
                        })
                    }
                }
            }
        }
        *u = cell_mass / dx;
    }
    Ok(out)
}

/// Builds the steady minimizer on a grid: cell-averaged density `H(V - v)`
/// plus `(m - m_c)^+` of atom mass on the minimum set.  `atom_split` gives
/// the mass fractions per minimum point and is required when the minimum set
/// has several points and atoms are present (the minimizer is unique only for
/// a singleton).
pub fn minimizer(
    problem: &Problem,
    lo: f64,
    hi: f64,
    cells: usize,
    atom_split: Option<&[f64]>,
) -> Result<GridMeasure> {
    let prof = steady_profile(problem)?;
    let (sup_lo, sup_hi) = prof.support;
    if sup_lo < lo {
        return Err(CoreError::DomainTooSmall { lo, hi, value: sup_lo });
    }
    if sup_hi > hi {
        return Err(CoreError::DomainTooSmall { lo, hi, value: sup_hi });
    }
    let singular = singular_points(&prof);
    let density = profile_cells(problem, prof.level, prof.support, lo, hi, cells, &singular)?;

    let mut atoms = Vec::new();
    if prof.atom_mass > 0.0 {
        let sites = prof.q_set.points();
        let fractions: Vec<f64> = match atom_split {
            Some(f) => {
                if f.len() != sites.len() {
                    return Err(CoreError::InvalidInput(format!(
                        "atom split has {} entries for {} minimum points",
                        f.len(),
                        sites.len()
                    )));
                }
                if f.iter().any(|&x| x < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(CoreError::InvalidInput(
                        "atom split must be nonnegative fractions summing to 1".into(),
                    ));
                }
                f.to_vec()
            }
            None if sites.len() == 1 => vec![1.0],
            None => {
                return Err(CoreError::InvalidInput(format!(
                    "excess mass {} must be split over {} minimum points; the minimizer \
                     is unique only for a single minimum point, pass an explicit split",
                    prof.atom_mass,
                    sites.len()
                )))
            }
        };
        for (&x, &f) in sites.iter().zip(&fractions) {
            if f > 0.0 {
                atoms.push(Atom { position: x, mass: f * prof.atom_mass });
            }
        }
    }

    let dx = (hi - lo) / cells as f64;
    let content =
        density.iter().sum::<f64>() * dx + atoms.iter().map(|a| a.mass).sum::<f64>();
    GridMeasure::new(lo, hi, density, atoms, content)
}

/// Free energy of the exact steady profile (continuum quadrature, not a grid
/// sum): the reference value against which candidate energies are compared.
pub fn minimizer_energy(problem: &Problem) -> Result<f64> {
    let prof = steady_profile(problem)?;
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let lvl = prof.level;
    let f = |x: f64| {
        let u = law.pseudo_inverse((pot.v(x) - lvl).max(ARG_FLOOR));
        law.energy_density(u) + pot.v(x) * u
    };
    let (a, b) = prof.support;
    let singular = singular_points(&prof);
    let mut total = 0.0;
    let mut edges = vec![a];
    edges.extend(singular.iter().cloned());
    edges.push(b);
    for w in edges.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l {
            continue;
        }
        let sing_l = singular.contains(&l);
        let sing_r = singular.contains(&r);
        let piece = if sing_l && sing_r {
            let mid = 0.5 * (l + r);
            add_extents(
                improper_one_sided(|d| f(l + d), mid - l, 1e-9)?,
                improper_one_sided(|d| f(r - d), r - mid, 1e-9)?,
            )
        } else if sing_l {
            improper_one_sided(|d| f(l + d), r - l, 1e-9)?
        } else if sing_r {
            improper_one_sided(|d| f(r - d), r - l, 1e-9)?
        } else {
            Extent::Finite(integrate_best(&f, l, r, 1e-10))
        };
        match piece {
            Extent::Finite(v) => total += v,
            Extent::Infinite => {
                return Err(CoreError::Undetermined {
                    what: "minimizer energy",
                    detail: "energy quadrature diverged near a minimum point".into(),
                })
            }
        }
    }
    Ok(total + prof.atom_mass * prof.v_min)
}

fn add_extents(a: Extent, b: Extent) -> Extent {
    match (a, b) {
        (Extent::Finite(x), Extent::Finite(y)) => Extent::Finite(x + y),
        _ => Extent::Infinite,
    }
}

/// Outcome of the stationarity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    StationaryMinimizer,
    StationaryNonMinimizing,
    NotStationary,
}

#[derive(Clone, Debug)]
pub struct ComponentReport {
    /// Cell-edge coordinates of the positive component.
    pub interval: (f64, f64),
    /// Inclusive cell index range.
    pub cells: (usize, usize),
    /// Estimated level `c_I` with `u = H(V - c_I)` on the component.
    pub level: f64,
    pub mass: f64,
    /// Relative sup-norm distance from the fitted profile, over cells where
    /// the profile is resolved.
    pub profile_mismatch: f64,
    /// `|V(a) - V(b)|` for components closed inside the grid.
    pub endpoint_gap: Option<f64>,
    /// `|c_I - (V(a) - depth)|` for closed components under finite depth.
    pub depth_level_gap: Option<f64>,
    pub touches_boundary: bool,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct AtomReport {
    pub position: f64,
    pub mass: f64,
    /// `|V(x) - c_I|` against the enclosing component's level; infinite when
    /// no positive component encloses the atom.
    pub level_gap: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct StationaryReport {
    pub verdict: Verdict,
    pub components: Vec<ComponentReport>,
    pub atoms: Vec<AtomReport>,
    /// `F(candidate) - F(minimizer)`; near zero identifies the minimizer.
    pub energy_gap: f64,
    pub stationary: bool,
}

/// Tests whether a grid measure is a stationary state and, if so, whether it
/// is the energy minimizer.
///
/// A measure is accepted as stationary when every positive component of the
/// density matches `H(V - c_I)` for a component level `c_I`, components
/// closed inside the grid have matching endpoint potentials (and, for finite
/// depth, `c_I = V(a) - depth`), and every atom sits at a blow-up point of
/// its enclosing component's profile (`V(atom) = c_I`).  Atoms outside any
/// density component are never stationary: singular mass must be embedded in
/// a diverging density.
pub fn check_stationary(
    problem: &Problem,
    g: &GridMeasure,
    tol: f64,
) -> Result<StationaryReport> {
    if (g.mass() - problem.mass).abs() > 1e-6 * (1.0 + problem.mass) {
        return Err(CoreError::MassMismatch { left: g.mass(), right: problem.mass });
    }
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let depth = problem.law.depth()?;
    let u = g.density();
    let m_cells = u.len();
    let dx = g.dx();
    let max_u = u.iter().cloned().fold(0.0_f64, f64::max);
    let thr = 1e-12 * max_u;

    // Connected components of {u > thr}.
    let mut components: Vec<ComponentReport> = Vec::new();
    let mut j = 0;
    while j < m_cells {
        if u[j] <= thr {
            j += 1;
            continue;
        }
        let i0 = j;
        while j < m_cells && u[j] > thr {
            j += 1;
        }
        let i1 = j - 1;

        // Level estimate: median of E'(u) + V over the component; singular
        // cells contribute V(q) which is consistent with the level.
        let mut lev: Vec<f64> = (i0..=i1)
            .map(|k| law.energy_slope(u[k]) + pot.v(g.cell_center(k)))
            .collect();
        lev.sort_by(f64::total_cmp);
        let c = lev[lev.len() / 2];

        // Profile mismatch on cells where H(V - c) is resolved: skip cells
        // whose predicted profile varies by more than 30% across the cell.
        let mut mismatch = 0.0_f64;
        for k in i0..=i1 {
            let x = g.cell_center(k);
            let pl = law.pseudo_inverse((pot.v(x - 0.5 * dx) - c).max(ARG_FLOOR));
            let pr = law.pseudo_inverse((pot.v(x + 0.5 * dx) - c).max(ARG_FLOOR));
            let (pmin, pmax) = (pl.min(pr), pl.max(pr));
            if pmin <= 0.0 || pmax > 1.3 * pmin {
                continue;
            }
            let pred = law.pseudo_inverse((pot.v(x) - c).max(ARG_FLOOR));
            let err = (u[k] - pred).abs() / (1.0 + u[k].max(pred));
            mismatch = mismatch.max(err);
        }

        let a = g.lo() + i0 as f64 * dx;
        let b = g.lo() + (i1 + 1) as f64 * dx;
        let touches = i0 == 0 || i1 + 1 == m_cells;
        let endpoint_gap = (!touches).then(|| (pot.v(a) - pot.v(b)).abs());
        let depth_level_gap = match (touches, depth) {
            (false, Extent::Finite(d)) => Some((c - (pot.v(a) - d)).abs()),
            _ => None,
        };

        let slack = |x: f64| tol * (1.0 + pot.v(x).abs()) + 3.0 * dx * pot.v_prime(x).abs();
        let mut ok = mismatch <= tol;
        if let Some(gap) = endpoint_gap {
            ok &= gap <= slack(a) + slack(b);
        }
        if let Some(gap) = depth_level_gap {
            ok &= gap <= slack(a) + slack(b);
        }
        let mass = dx * u[i0..=i1].iter().sum::<f64>();
        components.push(ComponentReport {
            interval: (a, b),
            cells: (i0, i1),
            level: c,
            mass,
            profile_mismatch: mismatch,
            endpoint_gap,
            depth_level_gap,
            touches_boundary: touches,
            ok,
        });
    }

    // Atoms must sit inside a component, at a blow-up point of its profile.
    let mut atoms = Vec::new();
    for atom in g.atoms() {
        let enclosing = components
            .iter()
            .find(|cr| atom.position >= cr.interval.0 - dx && atom.position <= cr.interval.1 + dx);
        let (level_gap, ok) = match enclosing {
            Some(cr) => {
                let gap = (pot.v(atom.position) - cr.level).abs();
                let allowed = tol * (1.0 + cr.level.abs())
                    + 2.0 * dx * pot.v_prime(atom.position).abs();
                (gap, gap <= allowed)
            }
            None => (f64::INFINITY, false),
        };
        atoms.push(AtomReport { position: atom.position, mass: atom.mass, level_gap, ok });
    }

    let stationary = !components.is_empty()
        && components.iter().all(|c| c.ok)
        && atoms.iter().all(|a| a.ok);

    let f_min = minimizer_energy(problem)?;
    let energy_gap = entropy_grid(problem, g) - f_min;
    let verdict = if !stationary {
        Verdict::NotStationary
    } else if depth.is_infinite() || energy_gap <= tol * (1.0 + f_min.abs()) {
        // Infinite depth: stationary states and minimizers coincide.
        Verdict::StationaryMinimizer
    } else {
        Verdict::StationaryNonMinimizing
    };

    Ok(StationaryReport { verdict, components, atoms, energy_gap, stationary })
}
