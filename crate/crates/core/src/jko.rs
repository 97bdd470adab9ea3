//! Minimizing-movement time stepper on monotone quantile vectors.
//!
//! Each step solves `min Phi(Y) = F(Y) + ||Y - Y_prev||^2 / (2 tau)` over
//! nondecreasing `Y` with the `L^2(0, m)` norm, which is the Wasserstein
//! metric in quantile coordinates.  The inner solver is proximal gradient
//! descent: Barzilai-Borwein step proposal, backtracking on the composite
//! decrease condition, and exact isotonic projection after every move.

use crate::error::{CoreError, Result};
use crate::functionals::{entropy_quantile, fisher};
use crate::measures::{grid_from_quantile, second_moment, wasserstein, QuantileMeasure};
use crate::model::{perspective, perspective_slope, perspective_slope_at_zero, Problem};

/// Slopes below this are treated as exact atoms for gradient purposes.
const SLOPE_CLAMP: f64 = 1e-12;

/// Quantile gaps below this fraction of a cell width count as atoms when
/// trajectories are converted to grids for diagnostics.
pub const ATOM_DETECT_EPS: f64 = 1e-3;

/// Backtracking parameters for the inner solver.
#[derive(Clone, Copy, Debug)]
pub struct StepRule {
    /// Multiplies the trial step after a rejected candidate.
    pub shrink: f64,
    /// Multiplies the accepted step when no curvature estimate is available.
    pub grow: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule { shrink: 0.5, grow: 1.3 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct JkoConfig {
    pub tau: f64,
    /// Projected-gradient stopping tolerance in the `L^2(0, m)` norm.
    /// `None` resolves to `1e-9 * (1 + |F(Y_prev)|)` per step.
    pub inner_tol: Option<f64>,
    pub inner_max_iter: usize,
    pub step_rule: StepRule,
}

impl JkoConfig {
    pub fn new(tau: f64) -> Self {
        JkoConfig { tau, inner_tol: None, inner_max_iter: 50_000, step_rule: StepRule::default() }
    }

    /// The subproblem stays strongly convex only while `1 + lambda tau > 0`.
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "time step must be positive and finite, got {}",
                self.tau
            )));
        }
        let lam = problem.potential.lambda();
        if 1.0 + lam * self.tau <= 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "1 + lambda*tau = {} <= 0: step too large for lambda = {}",
                1.0 + lam * self.tau,
                lam
            )));
        }
        if self.inner_max_iter == 0 {
            return Err(CoreError::InvalidInput("inner_max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Inner-solver outcome for one step.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub iterations: usize,
    /// False when the iteration cap was hit; the returned iterate is still
    /// the best one found.
    pub converged: bool,
    /// Final projected-gradient norm in `L^2(0, m)`.
    pub pg_norm: f64,
    /// Final `Phi(Y) = F(Y) + W2(Y, Y_prev)^2 / (2 tau)`.
    pub objective: f64,
}

/// Exact pool-adjacent-violators projection onto nondecreasing vectors.
pub fn isotonic_projection(y: &mut [f64]) {
    let n = y.len();
    if n < 2 {
        return;
    }
    let mut sum = vec![0.0_f64; n];
    let mut cnt = vec![0usize; n];
    let mut top = 0usize;
    for i in 0..n {
        sum[top] = y[i];
        cnt[top] = 1;
        while top > 0 && sum[top - 1] / cnt[top - 1] as f64 > sum[top] / cnt[top] as f64 {
            sum[top - 1] += sum[top];
            cnt[top - 1] += cnt[top];
            top -= 1;
        }
        top += 1;
    }
    let mut i = 0;
    for b in 0..top {
        let mean = sum[b] / cnt[b] as f64;
        for _ in 0..cnt[b] {
            y[i] = mean;
            i += 1;
        }
    }
    // Block means are nondecreasing in exact arithmetic; repair the odd ulp.
    for i in 1..n {
        if y[i] < y[i - 1] {
            y[i] = y[i - 1];
        }
    }
}

/// `G'(delta_i)` for each of the `n-1` forward slopes, with the atom clamp.
fn slope_derivatives(problem: &Problem, y: &[f64], h: f64, gp_zero: f64, out: &mut Vec<f64>) {
    let law = problem.law.as_ref();
    out.clear();
    for w in y.windows(2) {
        let d = (w[1] - w[0]) / h;
        out.push(if d <= SLOPE_CLAMP { gp_zero } else { perspective_slope(law, d) });
    }
}

/// Gradient of `phi(Y) = Phi(Y)/h` given precomputed slope derivatives.
fn gradient(
    problem: &Problem,
    y: &[f64],
    y_prev: &[f64],
    tau: f64,
    h: f64,
    gp: &[f64],
    out: &mut Vec<f64>,
) {
    let pot = problem.potential.as_ref();
    let n = y.len();
    let a = |i: usize| if i == n - 2 { 2.0 } else { 1.0 };
    out.clear();
    for j in 0..n {
        let mut g = pot.v_prime(y[j]) + (y[j] - y_prev[j]) / tau;
        if j >= 1 {
            g += a(j - 1) * gp[j - 1] / h;
        }
        if j <= n - 2 {
            g -= a(j) * gp[j] / h;
        }
        out.push(g);
    }
}

/// `Phi(Y)/h`: internal + potential energy per unit mass step plus the
/// movement penalty.
fn phi(problem: &Problem, y: &[f64], y_prev: &[f64], tau: f64, h: f64) -> f64 {
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let n = y.len();
    let mut s = 0.0;
    for (i, w) in y.windows(2).enumerate() {
        let d = ((w[1] - w[0]) / h).max(0.0);
        let a = if i == n - 2 { 2.0 } else { 1.0 };
        s += a * perspective(law, d);
    }
    for j in 0..n {
        let dy = y[j] - y_prev[j];
        s += pot.v(y[j]) + dy * dy / (2.0 * tau);
    }
    s
}

/// Value used for `G'` on atom runs: the limit `G'(0+)` when finite,
/// otherwise the clamped surrogate `G'(1e-12)`.
fn slope_at_zero(problem: &Problem) -> f64 {
    perspective_slope_at_zero(problem.law.as_ref())
        .unwrap_or_else(|| perspective_slope(problem.law.as_ref(), SLOPE_CLAMP))
}

/// One minimizing-movement step.  The returned quantile vector is exactly
/// nondecreasing and satisfies `Phi(Y) <= Phi(Y_prev)`.
pub fn jko_step(
    problem: &Problem,
    q_prev: &QuantileMeasure,
    cfg: &JkoConfig,
) -> Result<(QuantileMeasure, StepInfo)> {
    cfg.validate(problem)?;
    let h = q_prev.mass_step();
    let tau = cfg.tau;
    let y_prev = q_prev.values();
    let n = y_prev.len();
    let tol = cfg
        .inner_tol
        .unwrap_or_else(|| 1e-9 * (1.0 + entropy_quantile(problem, q_prev).abs()));
    let gp_zero = slope_at_zero(problem);

    let mut y = y_prev.to_vec();
    let mut gp = Vec::with_capacity(n - 1);
    let mut g = Vec::with_capacity(n);
    let mut g_old = Vec::with_capacity(n);
    let mut y_old = vec![0.0; n];
    let mut cand = vec![0.0; n];

    slope_derivatives(problem, &y, h, gp_zero, &mut gp);
    gradient(problem, &y, y_prev, tau, h, &gp, &mut g);
    let mut phi_y = phi(problem, &y, y_prev, tau, h);

    // Inverse of the strong-convexity modulus (1 + lambda tau)/tau.
    let lam = problem.potential.lambda();
    let mut step = tau / (1.0 + lam * tau);
    let mut have_prev = false;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut pg_norm = f64::INFINITY;

    while iterations < cfg.inner_max_iter {
        iterations += 1;

        if have_prev {
            // Barzilai-Borwein step from the last accepted move.
            let mut ss = 0.0;
            let mut sy = 0.0;
            for j in 0..n {
                let s_j = y[j] - y_old[j];
                ss += s_j * s_j;
                sy += s_j * (g[j] - g_old[j]);
            }
            if sy > 0.0 && ss > 0.0 {
                step = (ss / sy).clamp(1e-15 * tau, 1e12 * tau);
            } else {
                step *= cfg.step_rule.grow;
            }
        }

        // Backtracking on the composite decrease condition.
        let mut accepted = false;
        for _ in 0..80 {
            for j in 0..n {
                cand[j] = y[j] - step * g[j];
            }
            isotonic_projection(&mut cand);
            let phi_cand = phi(problem, &cand, y_prev, tau, h);
            let mut lin = 0.0;
            let mut dist2 = 0.0;
            for j in 0..n {
                let d = cand[j] - y[j];
                lin += g[j] * d;
                dist2 += d * d;
            }
            if phi_cand <= phi_y + lin + dist2 / (2.0 * step) + 1e-14 * (1.0 + phi_y.abs()) {
                pg_norm = (h * dist2).sqrt() / step;
                phi_y = phi_cand;
                accepted = true;
                break;
            }
            step *= cfg.step_rule.shrink;
        }
        if !accepted {
            // Step underflow: no further progress is possible in f64.
            converged = true;
            break;
        }

        std::mem::swap(&mut y_old, &mut y);
        std::mem::swap(&mut y, &mut cand);
        std::mem::swap(&mut g_old, &mut g);
        slope_derivatives(problem, &y, h, gp_zero, &mut gp);
        gradient(problem, &y, y_prev, tau, h, &gp, &mut g);
        have_prev = true;

        if pg_norm <= tol {
            converged = true;
            break;
        }
    }

    let q = QuantileMeasure::new(q_prev.mass(), y)?;
    Ok((
        q,
        StepInfo { iterations, converged, pg_norm, objective: h * phi_y },
    ))
}

/// Uniform grid target for per-step diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl GridSpec {
    /// Grid that covers the quantile support with a padding margin.
    pub fn covering(q: &QuantileMeasure, cells: usize, pad: f64) -> Self {
        let y = q.values();
        let lo = y[0] - pad;
        let hi = y[y.len() - 1] + pad;
        GridSpec { lo, hi, cells }
    }
}

/// One diagnostics row per recorded time.
#[derive(Clone, Copy, Debug)]
pub struct DiagRow {
    pub t: f64,
    /// Quantile-form free energy.
    pub free_energy: f64,
    /// Grid-form dissipation estimate (regular + singular part).
    pub fisher_grid: f64,
    /// `W2(rho_{n-1}, rho_n)^2 / tau^2`; zero on the initial row.
    pub i_rate: f64,
    /// `W2(rho_{n-1}, rho_n)`; zero on the initial row.
    pub w2_step: f64,
    pub mom2: f64,
    /// Atom mass detected by grid reconstruction.
    pub atom_mass: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantileMeasure>,
    pub diagnostics: Vec<DiagRow>,
    /// False when any step hit the inner iteration cap.
    pub all_converged: bool,
}

impl Trajectory {
    pub fn tau(&self) -> f64 {
        if self.times.len() >= 2 { self.times[1] - self.times[0] } else { 0.0 }
    }
}

fn diag_row(
    problem: &Problem,
    q: &QuantileMeasure,
    grid: &GridSpec,
    t: f64,
    w2_step: f64,
    tau: f64,
) -> Result<DiagRow> {
    let g = grid_from_quantile(q, grid.lo, grid.hi, grid.cells, ATOM_DETECT_EPS)?;
    let rep = fisher(problem, &g, None);
    Ok(DiagRow {
        t,
        free_energy: entropy_quantile(problem, q),
        fisher_grid: rep.total,
        i_rate: if t > 0.0 { w2_step * w2_step / (tau * tau) } else { 0.0 },
        w2_step,
        mom2: second_moment(q),
        atom_mass: g.atom_mass_total(),
    })
}

/// Runs `round(T/tau)` minimizing-movement steps from `q0`, recording a
/// diagnostics row per state (including the initial one).  The observer, when
/// present, sees every state as it is produced.
pub fn evolve(
    problem: &Problem,
    q0: &QuantileMeasure,
    cfg: &JkoConfig,
    t_final: f64,
    grid: &GridSpec,
    mut observer: Option<&mut dyn FnMut(usize, &QuantileMeasure, &DiagRow)>,
) -> Result<Trajectory> {
    cfg.validate(problem)?;
    if !(t_final > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "final time must be positive, got {t_final}"
        )));
    }
    let steps = (t_final / cfg.tau).round() as usize;
    let steps = steps.max(1);

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let mut all_converged = true;

    let row0 = diag_row(problem, q0, grid, 0.0, 0.0, cfg.tau)?;
    if let Some(obs) = observer.as_deref_mut() {
        obs(0, q0, &row0);
    }
    times.push(0.0);
    states.push(q0.clone());
    diagnostics.push(row0);

    let mut current = q0.clone();
    for k in 1..=steps {
        let (next, info) = jko_step(problem, &current, cfg)?;
        all_converged &= info.converged;
        let w2 = wasserstein(&current, &next)?;
        let t = k as f64 * cfg.tau;
        let row = diag_row(problem, &next, grid, t, w2, cfg.tau)?;
        if let Some(obs) = observer.as_deref_mut() {
            obs(k, &next, &row);
        }
        times.push(t);
        states.push(next.clone());
        diagnostics.push(row);
        current = next;
    }

    Ok(Trajectory { times, states, diagnostics, all_converged })
}

/// Energy-dissipation bookkeeping over a trajectory window.
#[derive(Clone, Copy, Debug)]
pub struct DissipationReport {
    /// `max_t |F(t0) - F(t) - sum tau * I_rate|` over recorded `t` in
    /// `(t0, t1]`.
    pub max_residual: f64,
    /// Worst `I_rate(t) / (I_rate(t0) e^{-2 lambda (t - t0)})` over
    /// `t - t0 >= decay_gap`; `<= 1` means the exponential decay holds.
    pub max_decay_ratio: f64,
}

/// Audits the discrete energy-dissipation identity and the exponential decay
/// of the rate along a trajectory.
pub fn dissipation_audit(
    traj: &Trajectory,
    lambda: f64,
    t0: f64,
    t1: f64,
    decay_gap: f64,
) -> Result<DissipationReport> {
    if traj.times.len() < 4 {
        return Err(CoreError::InvalidInput(
            "dissipation audit needs at least 3 steps".into(),
        ));
    }
    let tau = traj.tau();
    let rows = &traj.diagnostics;
    let start = rows
        .iter()
        .position(|r| r.t >= t0 - 1e-12)
        .ok_or_else(|| CoreError::InvalidInput(format!("window start {t0} beyond trajectory")))?;
    let f0 = rows[start].free_energy;
    let rate0 = rows[start].i_rate.max(rows.get(start + 1).map_or(0.0, |r| r.i_rate));

    let mut max_residual = 0.0_f64;
    let mut max_decay_ratio = 0.0_f64;
    let mut dissipated = 0.0;
    for row in rows.iter().skip(start + 1) {
        if row.t > t1 + 1e-12 {
            break;
        }
        dissipated += tau * row.i_rate;
        let residual = f0 - row.free_energy - dissipated;
        max_residual = max_residual.max(residual.abs());
        if row.t - rows[start].t >= decay_gap - 1e-12 && rate0 > 0.0 {
            let bound = rate0 * (-2.0 * lambda * (row.t - rows[start].t)).exp();
            if bound > 0.0 {
                max_decay_ratio = max_decay_ratio.max(row.i_rate / bound);
            }
        }
    }
    Ok(DissipationReport { max_residual, max_decay_ratio })
}
