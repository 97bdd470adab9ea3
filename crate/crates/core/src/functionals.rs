//! Free energy and dissipation functionals on discrete measures.
//!
//! Two discretizations of the free energy coexist and must stay consistent:
//! a quantile form used by the variational stepper and a grid form used for
//! diagnostics on cell densities. The Fisher-type dissipation is evaluated on
//! grids only, split into a regular (density) part and a singular (atom) part.

use crate::error::Result;
use crate::measures::{displacement_interpolate, wasserstein, GridMeasure, QuantileMeasure};
use crate::model::{perspective, Problem};

/// Free energy of a quantile-form measure.
///
/// Sum of `h * [G(delta_i) + V(Y_i)]` over the `n` quantile points, where
/// `delta_i` is the forward difference quotient of the quantile values and the
/// last slope is repeated so every point carries an internal-energy term.
/// Vanishing slopes contribute zero internal energy (`G(0) = 0`), so atoms,
/// which appear as repeated quantile values, only pay their potential energy.
pub fn entropy_quantile(problem: &Problem, q: &QuantileMeasure) -> f64 {
    let y = q.values();
    let n = y.len();
    let h = q.mass_step();
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let mut sum = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let k = if i + 1 < n { i } else { n - 2 };
        let delta = ((y[k + 1] - y[k]) / h).max(0.0);
        sum += perspective(law, delta) + pot.v(yi);
    }
    h * sum
}

/// Free energy of a grid-form measure.
///
/// `dx * sum_j [E(u_j) + V(x_j) u_j]` over cell centers plus `sum_k alpha_k
/// V(x_k)` over atoms. Atoms carry no internal energy.
pub fn entropy_grid(problem: &Problem, g: &GridMeasure) -> f64 {
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let mut sum = 0.0;
    for (j, &u) in g.density().iter().enumerate() {
        sum += law.energy_density(u) + pot.v(g.cell_center(j)) * u;
    }
    let atom_part: f64 = g
        .atoms()
        .iter()
        .map(|a| a.mass * pot.v(a.position))
        .sum();
    g.dx() * sum + atom_part
}

/// Dissipation functional evaluated on a grid measure.
#[derive(Debug, Clone)]
pub struct FisherReport {
    /// `regular_part + singular_part`.
    pub total: f64,
    /// Face-based quadrature of `|d/dx beta(u)/u + V'|^2 u` over positive cells.
    pub regular_part: f64,
    /// `sum_k alpha_k V'(x_k)^2` over atoms.
    pub singular_part: f64,
    /// Per-cell velocity diagnostic `xi_j`; zero on cells below the threshold.
    pub velocity_field: Vec<f64>,
    /// Set when `|beta(u_{j+1}) - beta(u_j)|` across adjacent positive cells
    /// exceeds `beta_inf / 2`: the density gradient term is not resolved and
    /// the true dissipation should be treated as infinite.
    pub divergent: bool,
}

/// Computes the Fisher-type dissipation of a grid measure.
///
/// Faces between two cells above `positivity_threshold` (default
/// `1e-10 * max_j u_j`) contribute `dx * xi_f^2 * hm(u_l, u_r)` where
/// `xi_f = (beta(u_r) - beta(u_l)) / (dx * hm) + V'(x_f)` and `hm` is the
/// harmonic mean of the adjacent densities. Faces touching a vacuum cell are
/// skipped: no flux crosses the boundary of the support.
pub fn fisher(problem: &Problem, g: &GridMeasure, positivity_threshold: Option<f64>) -> FisherReport {
    let u = g.density();
    let m = u.len();
    let dx = g.dx();
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let max_u = u.iter().cloned().fold(0.0_f64, f64::max);
    let thr = positivity_threshold.unwrap_or(1e-10 * max_u);
    let beta_jump_cap = 0.5 * law.beta_inf();

    let mut regular = 0.0;
    let mut divergent = false;
    let mut face_xi = vec![f64::NAN; m + 1];
    for f in 1..m {
        let (ul, ur) = (u[f - 1], u[f]);
        if ul <= thr || ur <= thr {
            continue;
        }
        let jump = law.beta(ur) - law.beta(ul);
        if jump.abs() > beta_jump_cap {
            divergent = true;
        }
        let hm = 2.0 * ul * ur / (ul + ur);
        let x_face = g.lo() + f as f64 * dx;
        let xi = jump / (dx * hm) + pot.v_prime(x_face);
        face_xi[f] = xi;
        regular += dx * xi * xi * hm;
    }

    let mut velocity_field = vec![0.0; m];
    for (j, v) in velocity_field.iter_mut().enumerate() {
        if u[j] <= thr {
            continue;
        }
        let (l, r) = (face_xi[j], face_xi[j + 1]);
        *v = match (l.is_nan(), r.is_nan()) {
            (false, false) => 0.5 * (l + r),
            (false, true) => l,
            (true, false) => r,
            // Isolated positive cell: only the drift acts on it.
            (true, true) => pot.v_prime(g.cell_center(j)),
        };
    }

    let singular_part: f64 = g
        .atoms()
        .iter()
        .map(|a| {
            let vp = pot.v_prime(a.position);
            a.mass * vp * vp
        })
        .sum();

    FisherReport {
        total: regular + singular_part,
        regular_part: regular,
        singular_part,
        velocity_field,
        divergent,
    }
}

/// Outcome of probing the generalized geodesic convexity inequality.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    /// `(theta, defect)` pairs; `defect >= 0` certifies the inequality at
    /// that interpolation parameter.
    pub defects: Vec<(f64, f64)>,
    /// Smallest defect over all probed parameters.
    pub min_defect: f64,
}

/// Checks `F(rho_theta) <= (1-theta) F(rho_0) + theta F(rho_1)
/// - lambda/2 theta (1-theta) W2(rho_0, rho_1)^2` along the displacement
/// interpolation, reporting the defect (right side minus left side) at each
/// requested `theta`.
pub fn displacement_convexity_check(
    problem: &Problem,
    q0: &QuantileMeasure,
    q1: &QuantileMeasure,
    thetas: &[f64],
) -> Result<ConvexityReport> {
    let w = wasserstein(q0, q1)?;
    let f0 = entropy_quantile(problem, q0);
    let f1 = entropy_quantile(problem, q1);
    let lambda = problem.potential.lambda();
    let mut defects = Vec::with_capacity(thetas.len());
    let mut min_defect = f64::INFINITY;
    for &theta in thetas {
        let mid = displacement_interpolate(q0, q1, theta)?;
        let f_mid = entropy_quantile(problem, &mid);
        let bound = (1.0 - theta) * f0 + theta * f1 - 0.5 * lambda * theta * (1.0 - theta) * w * w;
        let defect = bound - f_mid;
        min_defect = min_defect.min(defect);
        defects.push((theta, defect));
    }
    Ok(ConvexityReport { defects, min_defect })
}
