//! Measure representations and one-dimensional optimal transport.
//!
//! A nonnegative measure of mass `m` is stored either as a quantile vector
//! (values of the generalized inverse CDF on the uniform mass grid
//! `w_i = (i + 1/2) m / n`) or as a grid measure (piecewise-constant density
//! on uniform cells plus a finite list of atoms).  All transport operations
//! work on the quantile side, where the 2-Wasserstein distance is the plain
//! L2 distance of quantile vectors and displacement interpolation is affine.

use crate::error::{CoreError, Result};

/// Point mass: position and (positive) mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

/// Quantile representation: `values[i]` is the pseudo-inverse CDF at
/// `w_i = (i + 1/2) * mass / n`.  Values are nondecreasing; equal runs
/// represent atoms.
#[derive(Clone, Debug)]
pub struct QuantileMeasure {
    mass: f64,
    values: Vec<f64>,
}

impl QuantileMeasure {
    pub fn new(mass: f64, values: Vec<f64>) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "quantile measure needs positive finite mass, got {mass}"
            )));
        }
        if values.len() < 2 {
            return Err(CoreError::InvalidInput(format!(
                "quantile measure needs at least 2 points, got {}",
                values.len()
            )));
        }
        for (i, w) in values.windows(2).enumerate() {
            if !w[1].is_finite() {
                return Err(CoreError::InvalidInput(format!(
                    "quantile value {} is not finite",
                    w[1]
                )));
            }
            if w[1] < w[0] {
                return Err(CoreError::InvalidInput(format!(
                    "quantile values must be nondecreasing, violated at index {i}: {} > {}",
                    w[0], w[1]
                )));
            }
        }
        if !values[0].is_finite() {
            return Err(CoreError::InvalidInput("quantile value not finite".into()));
        }
        Ok(Self { mass, values })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mass carried by each quantile point.
    pub fn mass_step(&self) -> f64 {
        self.mass / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mass coordinate of point `i`: midpoint of its mass cell.
    pub fn w_at(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.mass_step()
    }

    /// Rigid translation; monotonicity is preserved.
    pub fn translated(&self, shift: f64) -> Self {
        Self {
            mass: self.mass,
            values: self.values.iter().map(|y| y + shift).collect(),
        }
    }
}

/// Grid representation: density `u_j >= 0` on `cells` uniform cells over
/// `[lo, hi]`, plus atoms at strictly increasing positions inside the domain.
/// The declared mass must match the content to 1e-12 (relative for large
/// masses).
#[derive(Clone, Debug)]
pub struct GridMeasure {
    lo: f64,
    hi: f64,
    density: Vec<f64>,
    atoms: Vec<Atom>,
    mass: f64,
}

impl GridMeasure {
    pub fn new(lo: f64, hi: f64, density: Vec<f64>, atoms: Vec<Atom>, mass: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CoreError::InvalidInput(format!(
                "grid domain [{lo}, {hi}] is not a finite interval"
            )));
        }
        if density.is_empty() {
            return Err(CoreError::InvalidInput("grid measure needs at least one cell".into()));
        }
        for (j, u) in density.iter().enumerate() {
            if !(u.is_finite() && *u >= 0.0) {
                return Err(CoreError::InvalidInput(format!(
                    "density must be finite and nonnegative, cell {j} holds {u}"
                )));
            }
        }
        for pair in atoms.windows(2) {
            if !(pair[1].position > pair[0].position) {
                return Err(CoreError::InvalidInput(format!(
                    "atom positions must be strictly increasing, got {} then {}",
                    pair[0].position, pair[1].position
                )));
            }
        }
        for a in &atoms {
            if !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(CoreError::InvalidInput(format!(
                    "atom at {} must have positive finite mass, got {}",
                    a.position, a.mass
                )));
            }
            if a.position < lo || a.position > hi {
                return Err(CoreError::DomainTooSmall { lo, hi, value: a.position });
            }
        }
        let dx = (hi - lo) / density.len() as f64;
        let content = dx * density.iter().sum::<f64>() + atoms.iter().map(|a| a.mass).sum::<f64>();
        if (content - mass).abs() > 1e-12 * mass.abs().max(1.0) {
            return Err(CoreError::MassMismatch { left: content, right: mass });
        }
        Ok(Self { lo, hi, density, atoms, mass })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn cells(&self) -> usize {
        self.density.len()
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn cell_center(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.dx()
    }

    pub fn atom_mass_total(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

/// Pseudo-inverse CDF of a grid measure sampled at the uniform mass midpoints.
/// Ties resolve toward smaller positions (left-continuous infimum), so an
/// atom of mass `alpha` produces a run of equal values.
pub fn quantile_from_grid(g: &GridMeasure, n: usize) -> Result<QuantileMeasure> {
    if n < 2 {
        return Err(CoreError::InvalidInput(format!(
            "quantile sampling needs n >= 2, got {n}"
        )));
    }
    let total = g.mass();
    if !(total > 0.0) {
        return Err(CoreError::InvalidInput("cannot build quantiles of a zero-mass measure".into()));
    }
    // Mass pieces in position order: cells carry linear CDF growth, atoms are
    // jumps.  Atoms interleave with the cell that contains them; a piece is
    // split at each atom position.
    enum Piece {
        Linear { xa: f64, xb: f64, mass: f64 },
        Jump { x: f64, mass: f64 },
    }
    let dx = g.dx();
    let mut pieces = Vec::new();
    let mut atom_iter = g.atoms().iter().peekable();
    for j in 0..g.cells() {
        let xa = g.lo() + j as f64 * dx;
        let xb = xa + dx;
        let u = g.density()[j];
        let mut seg_lo = xa;
        while let Some(a) = atom_iter.peek() {
            // Atoms exactly on the right edge belong to the next cell, except
            // at the domain boundary.
            let in_cell = a.position < xb || (j + 1 == g.cells() && a.position <= xb);
            if !in_cell {
                break;
            }
            let a = *atom_iter.next().expect("peeked");
            if u > 0.0 && a.position > seg_lo {
                pieces.push(Piece::Linear { xa: seg_lo, xb: a.position, mass: u * (a.position - seg_lo) });
            }
            pieces.push(Piece::Jump { x: a.position, mass: a.mass });
            seg_lo = a.position;
        }
        if u > 0.0 && xb > seg_lo {
            pieces.push(Piece::Linear { xa: seg_lo, xb, mass: u * (xb - seg_lo) });
        }
    }
    let step = total / n as f64;
    let mut values = Vec::with_capacity(n);
    let mut cum = 0.0f64;
    let mut next_w = 0.5 * step;
    let mut last_x = g.lo();
    for piece in &pieces {
        match *piece {
            Piece::Linear { xa, xb, mass } => {
                while values.len() < n && next_w <= cum + mass {
                    values.push(xa + (next_w - cum) * (xb - xa) / mass);
                    next_w += step;
                }
                cum += mass;
                last_x = xb;
            }
            Piece::Jump { x, mass } => {
                while values.len() < n && next_w <= cum + mass {
                    values.push(x);
                    next_w += step;
                }
                cum += mass;
                last_x = x;
            }
        }
    }
    // Rounding can leave the last midpoint a hair above the accumulated mass.
    while values.len() < n {
        values.push(last_x);
    }
    QuantileMeasure::new(total, values)
}

/// Rebuilds a grid measure from quantile values.  Runs of near-equal values
/// (consecutive gaps below `atom_eps * dx`) become atoms with mass
/// `run length * mass_step` at the run mean; every other point spreads its
/// mass step over the interval between neighboring midpoints.
pub fn grid_from_quantile(
    q: &QuantileMeasure,
    lo: f64,
    hi: f64,
    cells: usize,
    atom_eps: f64,
) -> Result<GridMeasure> {
    if cells == 0 {
        return Err(CoreError::InvalidInput("grid needs at least one cell".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CoreError::InvalidInput(format!(
            "grid domain [{lo}, {hi}] is not a finite interval"
        )));
    }
    let y = q.values();
    for &v in [y[0], y[y.len() - 1]].iter() {
        if v < lo || v > hi {
            return Err(CoreError::DomainTooSmall { lo, hi, value: v });
        }
    }
    let dx = (hi - lo) / cells as f64;
    let gap_tol = atom_eps * dx;
    let step = q.mass_step();
    let n = y.len();

    // Maximal runs of consecutive points with gaps below the merge threshold.
    // Runs of length >= 2 become atoms.
    let mut atoms: Vec<Atom> = Vec::new();
    let mut density = vec![0.0f64; cells];
    let mut deposit = |x_lo: f64, x_hi: f64, mass: f64| {
        // Spread uniformly over the part of [x_lo, x_hi] inside the domain;
        // renormalizes so clipped intervals still deposit full mass.
        let a = x_lo.max(lo);
        let b = x_hi.min(hi);
        if b - a <= 0.0 {
            // Degenerate after clipping: drop into the containing cell.
            let j = (((a - lo) / dx).floor() as usize).min(cells - 1);
            density[j] += mass / dx;
            return;
        }
        let inv_width = 1.0 / (b - a);
        let j_first = (((a - lo) / dx).floor() as usize).min(cells - 1);
        let j_last = (((b - lo) / dx).floor() as usize).min(cells - 1);
        for j in j_first..=j_last {
            let cell_lo = lo + j as f64 * dx;
            let cell_hi = cell_lo + dx;
            let overlap = (b.min(cell_hi) - a.max(cell_lo)).max(0.0);
            density[j] += mass * overlap * inv_width / dx;
        }
    };

    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && y[j + 1] - y[j] < gap_tol {
            j += 1;
        }
        let run_len = j - i + 1;
        if run_len >= 2 {
            let mean = y[i..=j].iter().sum::<f64>() / run_len as f64;
            atoms.push(Atom { position: mean, mass: run_len as f64 * step });
        } else {
            // Support interval: midpoints to the neighboring values, mirrored
            // at the ends of the vector.
            let left = if i > 0 { 0.5 * (y[i - 1] + y[i]) } else { y[i] - 0.5 * (y[(i + 1).min(n - 1)] - y[i]) };
            let right = if i + 1 < n { 0.5 * (y[i] + y[i + 1]) } else { y[i] + 0.5 * (y[i] - y[i.max(1) - 1]) };
            if right - left < 0.5 * gap_tol {
                deposit(y[i], y[i], step);
            } else {
                deposit(left, right, step);
            }
        }
        i = j + 1;
    }

    // Merge atoms closer than the gap tolerance so positions stay strictly
    // increasing.
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match merged.last_mut() {
            Some(prev) if a.position - prev.position <= gap_tol => {
                let total = prev.mass + a.mass;
                prev.position = (prev.position * prev.mass + a.position * a.mass) / total;
                prev.mass = total;
            }
            _ => merged.push(a),
        }
    }
    GridMeasure::new(lo, hi, density, merged, q.mass())
}

/// 2-Wasserstein distance of two equal-mass, equal-resolution quantile
/// measures: the L2(mass) distance of the quantile vectors.
pub fn wasserstein(q1: &QuantileMeasure, q2: &QuantileMeasure) -> Result<f64> {
    check_compatible(q1, q2)?;
    let sum: f64 = q1
        .values()
        .iter()
        .zip(q2.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((q1.mass_step() * sum).sqrt())
}

fn check_compatible(q1: &QuantileMeasure, q2: &QuantileMeasure) -> Result<()> {
    if q1.len() != q2.len() {
        return Err(CoreError::ResolutionMismatch { left: q1.len(), right: q2.len() });
    }
    let scale = q1.mass().abs().max(q2.mass().abs()).max(1.0);
    if (q1.mass() - q2.mass()).abs() > 1e-12 * scale {
        return Err(CoreError::MassMismatch { left: q1.mass(), right: q2.mass() });
    }
    Ok(())
}

/// Exact transport cost between two small atomic measures via the monotone
/// (north-west corner) coupling, which is optimal in one dimension.  Serves
/// as the independent oracle for [`wasserstein`].
pub fn wasserstein_bruteforce(a: &[Atom], b: &[Atom]) -> Result<f64> {
    if a.len() > 16 || b.len() > 16 {
        return Err(CoreError::InvalidInput(format!(
            "brute-force coupling handles at most 16 atoms per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::InvalidInput("brute-force coupling needs nonempty atom lists".into()));
    }
    let ma: f64 = a.iter().map(|x| x.mass).sum();
    let mb: f64 = b.iter().map(|x| x.mass).sum();
    if (ma - mb).abs() > 1e-12 * ma.abs().max(mb.abs()).max(1.0) {
        return Err(CoreError::MassMismatch { left: ma, right: mb });
    }
    let mut left = a.to_vec();
    let mut right = b.to_vec();
    left.sort_by(|p, q| p.position.total_cmp(&q.position));
    right.sort_by(|p, q| p.position.total_cmp(&q.position));
    let mut cost = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut rem_i = left[0].mass;
    let mut rem_j = right[0].mass;
    loop {
        let take = rem_i.min(rem_j);
        let d = left[i].position - right[j].position;
        cost += take * d * d;
        rem_i -= take;
        rem_j -= take;
        if rem_i <= 0.0 {
            i += 1;
            if i == left.len() {
                break;
            }
            rem_i = left[i].mass;
        }
        if rem_j <= 0.0 {
            j += 1;
            if j == right.len() {
                break;
            }
            rem_j = right[j].mass;
        }
    }
    Ok(cost.max(0.0).sqrt())
}

/// Displacement interpolation `((1-theta) Y0 + theta Y1)` along the unique
/// constant-speed geodesic between equal-mass quantile measures.
pub fn displacement_interpolate(
    q0: &QuantileMeasure,
    q1: &QuantileMeasure,
    theta: f64,
) -> Result<QuantileMeasure> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(CoreError::InvalidInput(format!(
            "interpolation parameter must lie in [0, 1], got {theta}"
        )));
    }
    check_compatible(q0, q1)?;
    let mut values: Vec<f64> = q0
        .values()
        .iter()
        .zip(q1.values())
        .map(|(a, b)| (1.0 - theta) * a + theta * b)
        .collect();
    // Exact arithmetic keeps convex combinations of nondecreasing vectors
    // nondecreasing; clamp away last-ulp rounding.
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    QuantileMeasure::new(q0.mass(), values)
}

/// Second moment `int x^2 drho` in midpoint quadrature over mass coordinates.
pub fn second_moment(q: &QuantileMeasure) -> f64 {
    q.mass_step() * q.values().iter().map(|y| y * y).sum::<f64>()
}

/// Applies a map to atom positions, keeping masses.  Output is re-sorted and
/// exact position collisions are merged.
pub fn push_forward_atoms<F: Fn(f64) -> f64>(atoms: &[Atom], map: F) -> Vec<Atom> {
    let mut out: Vec<Atom> = atoms
        .iter()
        .map(|a| Atom { position: map(a.position), mass: a.mass })
        .collect();
    out.sort_by(|p, q| p.position.total_cmp(&q.position));
    let mut merged: Vec<Atom> = Vec::with_capacity(out.len());
    for a in out {
        match merged.last_mut() {
            Some(prev) if prev.position == a.position => prev.mass += a.mass,
            _ => merged.push(a),
        }
    }
    merged
}
