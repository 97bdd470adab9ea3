//! Independent cross-check for the quantile scheme: an explicit conservative
//! finite-volume solver for the viscous flux `beta^eps = beta + eps id` on a
//! truncated domain with no-flux boundaries, plus the characteristic flow
//! `dX/dt = -V'(X)` that carries atoms.
//!
//! The scheme is first order and upwinded, hence monotone under the CFL
//! bound; monotonicity gives the discrete comparison principle and L^1
//! contraction that the validation suite leans on.

use crate::error::{CoreError, Result};
use crate::measures::{Atom, GridMeasure};
use crate::model::{Potential, Problem};
use crate::quad::Extent;
use crate::steady::{crossing, default_domain, locate_min};

/// Fraction of the parabolic stability limit the scheme is allowed to use.
const CFL_SAFETY: f64 = 0.4;

/// Per-step budget for the renormalization that repairs clipped negatives
/// and summation roundoff.
const CLIP_BUDGET: f64 = 1e-12;

/// Fixed characteristic-ODE step used by atom transport.
const TRANSPORT_DT: f64 = 1e-3;

/// Cell-averaged densities on a uniform grid over `[lo, hi]` with no-flux
/// boundaries.  The viscosity is frozen into the state so a trajectory is
/// self-describing.
#[derive(Clone, Debug)]
pub struct FvState {
    lo: f64,
    hi: f64,
    density: Vec<f64>,
    time: f64,
    viscosity: f64,
}

impl FvState {
    pub fn new(lo: f64, hi: f64, density: Vec<f64>, viscosity: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CoreError::InvalidInput(format!(
                "domain [{lo}, {hi}] is not a finite interval"
            )));
        }
        if density.is_empty() {
            return Err(CoreError::InvalidInput("state needs at least one cell".into()));
        }
        if let Some(bad) = density.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
            return Err(CoreError::InvalidInput(format!(
                "cell densities must be finite and nonnegative, got {bad}"
            )));
        }
        if !(viscosity.is_finite() && viscosity >= 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "viscosity must be nonnegative, got {viscosity}"
            )));
        }
        Ok(FvState { lo, hi, density, time: 0.0, viscosity })
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

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cell_center(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.dx()
    }

    pub fn mass(&self) -> f64 {
        self.dx() * self.density.iter().sum::<f64>()
    }

    pub fn sup(&self) -> f64 {
        self.density.iter().cloned().fold(0.0, f64::max)
    }

    /// Atom-free grid measure carrying exactly the cell content.
    pub fn to_grid(&self) -> Result<GridMeasure> {
        GridMeasure::new(self.lo, self.hi, self.density.clone(), Vec::new(), self.mass())
    }
}

/// Largest admissible explicit step for the current state:
/// `0.4 dx^2 / (sup beta' + eps + dx sup|V'|)`, the suprema taken over the
/// attained density range and the grid faces.
pub fn cfl_bound(problem: &Problem, s: &FvState) -> f64 {
    let dx = s.dx();
    let b_sup = problem.law.beta_prime_sup(s.sup());
    let mut drift = 0.0f64;
    for j in 0..=s.cells() {
        drift = drift.max(problem.potential.v_prime(s.lo + j as f64 * dx).abs());
    }
    CFL_SAFETY * dx * dx / (b_sup + s.viscosity + dx * drift)
}

/// One explicit conservative update.  Face flux
/// `F_{j+1/2} = (beta^eps(u_{j+1}) - beta^eps(u_j))/dx + V'(x_{j+1/2}) u_up`,
/// the upwind cell chosen by the drift direction `-V'`; boundary faces carry
/// zero flux.  Negative cells (roundoff only, the scheme is monotone) are
/// clipped and the mass renormalized; the repair must stay within `1e-12`.
pub fn fv_step(problem: &Problem, s: &FvState, dt: f64) -> Result<FvState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CoreError::InvalidInput(format!("step must be positive, got {dt}")));
    }
    let bound = cfl_bound(problem, s);
    if dt > bound {
        return Err(CoreError::CflViolation { dt, bound });
    }
    let m = s.density.len();
    let dx = s.dx();
    let law = problem.law.as_ref();
    let pot = problem.potential.as_ref();
    let eps = s.viscosity;
    let beta = |r: f64| law.beta(r) + eps * r;

    let mut flux = vec![0.0; m + 1];
    for j in 0..m.saturating_sub(1) {
        let xf = s.lo + (j + 1) as f64 * dx;
        let vp = pot.v_prime(xf);
        let up = if vp > 0.0 { s.density[j + 1] } else { s.density[j] };
        flux[j + 1] = (beta(s.density[j + 1]) - beta(s.density[j])) / dx + vp * up;
    }

    let lam = dt / dx;
    let mut next: Vec<f64> =
        (0..m).map(|j| s.density[j] + lam * (flux[j + 1] - flux[j])).collect();

    let before: f64 = s.density.iter().sum();
    let mut clipped = 0.0;
    for u in &mut next {
        if *u < 0.0 {
            clipped -= *u;
            *u = 0.0;
        }
    }
    let after: f64 = next.iter().sum();
    if before > 0.0 {
        let factor = before / after;
        if !factor.is_finite() || (factor - 1.0).abs() > CLIP_BUDGET {
            return Err(CoreError::NonConvergence {
                what: "positivity repair",
                detail: format!(
                    "mass renormalization {factor} exceeds the {CLIP_BUDGET:.0e} budget \
                     (clipped {clipped:.3e}); the step is effectively unstable"
                ),
            });
        }
        if factor != 1.0 {
            for u in &mut next {
                *u *= factor;
            }
        }
    }
    Ok(FvState { lo: s.lo, hi: s.hi, density: next, time: s.time + dt, viscosity: eps })
}

/// One diagnostics row per finite-volume step.
#[derive(Clone, Copy, Debug)]
pub struct FvSample {
    pub t: f64,
    pub mass: f64,
    pub sup: f64,
    /// Grid free energy, same formula as `functionals::entropy_grid`.
    pub free_energy: f64,
}

/// Steps `s0` forward by `horizon` with steps of `dt`; a shorter final step
/// lands exactly on the target time.  Diagnostics are recorded at every
/// step, including the initial state.
pub fn fv_evolve(
    problem: &Problem,
    s0: &FvState,
    horizon: f64,
    dt: f64,
) -> Result<(FvState, Vec<FvSample>)> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CoreError::InvalidInput(format!("step must be positive, got {dt}")));
    }
    let dx = s0.dx();
    let v_centers: Vec<f64> =
        (0..s0.cells()).map(|j| problem.potential.v(s0.cell_center(j))).collect();
    let free_energy = |s: &FvState| {
        let mut sum = 0.0;
        for (u, v) in s.density.iter().zip(&v_centers) {
            sum += problem.law.energy_density(*u) + v * u;
        }
        dx * sum
    };
    let sample =
        |s: &FvState| FvSample { t: s.time, mass: s.mass(), sup: s.sup(), free_energy: free_energy(s) };

    let target = s0.time + horizon;
    let slack = 1e-12 * (1.0 + target.abs());
    let mut s = s0.clone();
    let mut rows = vec![sample(&s)];
    let max_steps = (horizon / dt).ceil() as usize + 2;
    for _ in 0..max_steps {
        if s.time >= target - slack {
            break;
        }
        let step = dt.min(target - s.time);
        s = fv_step(problem, &s, step)?;
        rows.push(sample(&s));
    }
    if s.time < target - slack {
        return Err(CoreError::NonConvergence {
            what: "fv time stepping",
            detail: format!("stalled at t = {} short of {target}", s.time),
        });
    }
    Ok((s, rows))
}

/// Characteristic position `X_t(x0)` for `dX/dt = -V'(X)`: fixed-step
/// classical Runge-Kutta; a shorter final step lands exactly on `t`.
pub fn flow_map(potential: &dyn Potential, x0: f64, t: f64, ode_dt: f64) -> f64 {
    assert!(t >= 0.0 && ode_dt > 0.0, "flow map needs t >= 0 and a positive step");
    let f = |x: f64| -potential.v_prime(x);
    let mut x = x0;
    let mut remaining = t;
    while remaining > 0.0 {
        let h = ode_dt.min(remaining);
        let k1 = f(x);
        let k2 = f(x + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h * k2);
        let k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
        remaining -= h;
    }
    x
}

/// Pushes atom positions through the characteristic flow.  Masses ride
/// unchanged: the flow only bounds the singular part from above, it does not
/// decide its decay.
pub fn transport_atoms(potential: &dyn Potential, atoms: &[Atom], t: f64) -> Vec<Atom> {
    atoms
        .iter()
        .map(|a| Atom { position: flow_map(potential, a.position, t, TRANSPORT_DT), mass: a.mass })
        .collect()
}

/// Symmetric truncation `[-L, L]` standing in for the whole line: with a
/// finite jam depth the boundary potential clears `min V + depth + 5`, so no
/// steady level can push mass to the wall; with infinite depth the steady
/// support plus padding is used (the density there is below `1e-14`).
pub fn fv_domain(problem: &Problem) -> Result<(f64, f64)> {
    let pot = problem.potential.as_ref();
    let l = match problem.law.depth()? {
        Extent::Finite(d) => {
            let q = locate_min(pot, 8.0)?;
            let target = q.v_min + d + 5.0;
            let a = crossing(pot, q.min_x(), -1.0, target)?;
            let b = crossing(pot, q.max_x(), 1.0, target)?;
            a.abs().max(b.abs())
        }
        Extent::Infinite => {
            let (a, b) = default_domain(problem)?;
            a.abs().max(b.abs())
        }
    };
    Ok((-l, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::entropy_grid;
    use crate::model::{build_law, build_potential, PotentialParams, Problem};
    use crate::rng::Xorshift64Star;
    use crate::steady::minimizer;

    fn problem(law: &str, pot: &str, alpha: Option<f64>, mass: f64, eps: f64) -> Problem {
        let params = PotentialParams { alpha };
        Problem::new(
            build_law(law).unwrap(),
            build_potential(pot, &params).unwrap(),
            mass,
            eps,
        )
        .unwrap()
    }

    fn sampled(lo: f64, hi: f64, cells: usize, f: impl Fn(f64) -> f64, eps: f64) -> FvState {
        let dx = (hi - lo) / cells as f64;
        let density: Vec<f64> =
            (0..cells).map(|j| f(lo + (j as f64 + 0.5) * dx).max(0.0)).collect();
        FvState::new(lo, hi, density, eps).unwrap()
    }

    fn gaussian(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| {
            let z = (x - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
    }

    fn l1(a: &FvState, b: &FvState) -> f64 {
        assert_eq!(a.cells(), b.cells());
        a.dx()
            * a.density()
            .iter()
            .zip(b.density())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
    }

    struct Flat;
    impl Potential for Flat {
        fn name(&self) -> &'static str {
            "flat"
        }
        fn v(&self, _x: f64) -> f64 {
            0.0
        }
        fn v_prime(&self, _x: f64) -> f64 {
            0.0
        }
        fn lambda(&self) -> f64 {
            0.0
        }
        fn coercive(&self) -> bool {
            false
        }
    }

    #[test]
    fn constant_state_without_forcing_is_fixed() {
        let p = Problem::new(
            build_law("arctan").unwrap(),
            std::sync::Arc::new(Flat),
            1.4,
            0.0,
        )
        .unwrap();
        let s = FvState::new(-1.0, 1.0, vec![0.7; 10], 0.0).unwrap();
        let dt = 0.9 * cfl_bound(&p, &s);
        let next = fv_step(&p, &s, dt).unwrap();
        // Every flux vanishes identically, so the update is bitwise a no-op.
        assert_eq!(next.density(), s.density());
        assert!(next.time() > 0.0);
    }

    #[test]
    fn state_validation_rejects_bad_input() {
        assert!(FvState::new(1.0, -1.0, vec![1.0], 0.0).is_err());
        assert!(FvState::new(-1.0, 1.0, vec![], 0.0).is_err());
        assert!(FvState::new(-1.0, 1.0, vec![-0.1], 0.0).is_err());
        assert!(FvState::new(-1.0, 1.0, vec![1.0], -0.5).is_err());
        assert!(FvState::new(-1.0, 1.0, vec![1.0, f64::NAN], 0.0).is_err());
    }

    #[test]
    fn oversized_step_is_rejected_with_the_bound() {
        let p = problem("rational", "quadratic", None, 1.0, 0.05);
        let s = sampled(-3.0, 3.0, 120, gaussian(0.0, 0.8), 0.05);
        let bound = cfl_bound(&p, &s);
        match fv_step(&p, &s, 1.01 * bound) {
            Err(CoreError::CflViolation { dt, bound: b }) => {
                assert!(dt > b);
                assert!((b - bound).abs() <= 1e-15 * bound);
            }
            other => panic!("expected CFL rejection, got {other:?}"),
        }
    }

    #[test]
    fn evolve_conserves_mass_and_positivity() {
        for (law, eps) in [("arctan", 0.0), ("rational", 0.1), ("bose_einstein", 0.0)] {
            let p = problem(law, "quadratic", None, 1.0, eps);
            let s0 = sampled(-4.0, 4.0, 160, gaussian(0.6, 0.7), eps);
            let m0 = s0.mass();
            let dt = 0.8 * cfl_bound(&p, &s0);
            let (end, rows) = fv_evolve(&p, &s0, 0.4, dt).unwrap();
            for row in &rows {
                assert!((row.mass - m0).abs() <= 1e-12, "{law}: mass drift {}", row.mass - m0);
            }
            assert!(end.density().iter().all(|u| *u >= 0.0), "{law}: negative cell");
            assert!((end.time() - 0.4).abs() <= 1e-12);
        }
    }

    #[test]
    fn halved_steps_converge_at_first_order_in_dt() {
        // One step of dt vs two of dt/2 differ by O(dt^2); halving dt must
        // shrink that gap by about 4.
        let p = problem("arctan", "quadratic", None, 1.0, 0.0);
        let s = sampled(-4.0, 4.0, 200, gaussian(0.0, 0.9), 0.0);
        let dt = 0.5 * cfl_bound(&p, &s);
        let gap = |h: f64| {
            let one = fv_step(&p, &s, h).unwrap();
            let half = fv_step(&p, &fv_step(&p, &s, 0.5 * h).unwrap(), 0.5 * h).unwrap();
            one.density()
                .iter()
                .zip(half.density())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let g1 = gap(dt);
        let g2 = gap(0.5 * dt);
        assert!(g1 > 0.0 && g2 > 0.0);
        let ratio = g1 / g2;
        assert!((2.5..6.0).contains(&ratio), "gap ratio {ratio}");
    }

    #[test]
    fn random_pairs_contract_in_l1() {
        let mut rng = Xorshift64Star::new(0x5eed_f00d);
        for trial in 0..6 {
            let law = ["arctan", "rational", "bose_einstein"][trial % 3];
            let eps = if trial % 2 == 0 { 0.0 } else { 0.08 };
            let p = problem(law, "quadratic", None, 1.0, eps);
            let cells = 90;
            let mk = |rng: &mut Xorshift64Star| {
                let u: Vec<f64> = (0..cells).map(|_| rng.uniform(0.0, 2.0)).collect();
                FvState::new(-3.0, 3.0, u, eps).unwrap()
            };
            let a0 = mk(&mut rng);
            let b0 = mk(&mut rng);
            let d0 = l1(&a0, &b0);
            let dt = 0.8 * cfl_bound(&p, &a0).min(cfl_bound(&p, &b0));
            let (a1, _) = fv_evolve(&p, &a0, 0.05, dt).unwrap();
            let (b1, _) = fv_evolve(&p, &b0, 0.05, dt).unwrap();
            let d1 = l1(&a1, &b1);
            assert!(d1 <= d0 + 1e-8, "{law} eps={eps}: L1 grew {d0} -> {d1}");
        }
    }

    #[test]
    fn ordered_data_stay_ordered() {
        let p = problem("arctan", "double_well", None, 1.0, 0.0);
        let low = sampled(-3.0, 3.0, 140, gaussian(0.3, 0.8), 0.0);
        let high = {
            let bump = gaussian(-0.5, 0.5);
            let f = gaussian(0.3, 0.8);
            sampled(-3.0, 3.0, 140, move |x| f(x) + 0.4 * bump(x), 0.0)
        };
        for (u, w) in low.density().iter().zip(high.density()) {
            assert!(u <= w);
        }
        let dt = 0.8 * cfl_bound(&p, &high);
        let (lt, _) = fv_evolve(&p, &low, 0.3, dt).unwrap();
        let (ht, _) = fv_evolve(&p, &high, 0.3, dt).unwrap();
        for (j, (u, w)) in lt.density().iter().zip(ht.density()).enumerate() {
            assert!(*u <= w + 1e-8, "cell {j}: {u} > {w}");
        }
    }

    #[test]
    fn sup_norm_respects_the_convexity_envelope() {
        // V'' = 1 for the quadratic well, so sup u_t <= sup u_0 e^t (1 + 2%).
        let p = problem("arctan", "quadratic", None, 1.0, 0.0);
        let s0 = sampled(-4.0, 4.0, 200, gaussian(0.5, 0.6), 0.0);
        let r0 = s0.sup();
        let dt = 0.6 * cfl_bound(&p, &s0);
        let (_, rows) = fv_evolve(&p, &s0, 0.3, dt).unwrap();
        for row in &rows {
            let cap = r0 * (row.t).exp() * 1.02;
            assert!(row.sup <= cap, "t={}: sup {} above {cap}", row.t, row.sup);
        }
    }

    #[test]
    fn free_energy_is_dissipated_along_the_flow() {
        let p = problem("arctan", "quadratic", None, 1.0, 0.0);
        let s0 = sampled(-4.0, 4.0, 200, gaussian(0.8, 0.5), 0.0);
        let dt = 0.8 * cfl_bound(&p, &s0);
        let (end, rows) = fv_evolve(&p, &s0, 0.5, dt).unwrap();
        // Recorded energy matches the functionals module bit for bit.
        assert_eq!(rows[0].free_energy, entropy_grid(&p, &s0.to_grid().unwrap()));
        assert_eq!(rows.last().unwrap().free_energy, entropy_grid(&p, &end.to_grid().unwrap()));
        for w in rows.windows(2) {
            assert!(
                w[1].free_energy <= w[0].free_energy + 1e-10,
                "free energy rose at t={}",
                w[1].t
            );
        }
        assert!(rows.last().unwrap().free_energy < rows[0].free_energy - 1e-3);
    }

    #[test]
    fn long_run_settles_on_the_steady_minimizer() {
        let p = problem("arctan", "quadratic", None, 1.0, 0.0);
        let (lo, hi) = fv_domain(&p).unwrap();
        let cells = 400;
        let s0 = {
            let dx = (hi - lo) / cells as f64;
            let u = 1.0 / (4.0 * dx * (cells / 4) as f64);
            let density: Vec<f64> = (0..cells)
                .map(|j| {
                    let x = lo + (j as f64 + 0.5) * dx;
                    if x.abs() <= 2.0 * dx * (cells / 4) as f64 / 2.0 { u } else { 0.0 }
                })
                .collect();
            let mut s = FvState::new(lo, hi, density, 0.0).unwrap();
            let scale = 1.0 / s.mass();
            for v in &mut s.density {
                *v *= scale;
            }
            s
        };
        let dt = 0.8 * cfl_bound(&p, &s0);
        let (end, _) = fv_evolve(&p, &s0, 6.0, dt).unwrap();
        let steady = minimizer(&p, lo, hi, cells, None).unwrap();
        let dist = end.dx()
            * end
                .density()
                .iter()
                .zip(steady.density())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        assert!(dist <= 0.03, "L1 distance to the minimizer {dist}");
    }

    #[test]
    fn flow_map_matches_the_exponential_and_fixes_critical_points() {
        let quad = build_potential("quadratic", &PotentialParams { alpha: None }).unwrap();
        assert_eq!(flow_map(quad.as_ref(), 0.37, 0.0, 1e-3), 0.37);
        let x = flow_map(quad.as_ref(), 1.0, 1.0, 1e-3);
        assert!((x - (-1.0f64).exp()).abs() <= 1e-8, "X_1(1) = {x}");
        let dw = build_potential("double_well", &PotentialParams { alpha: None }).unwrap();
        assert_eq!(flow_map(dw.as_ref(), 1.0, 2.5, 1e-3), 1.0);
        assert_eq!(flow_map(dw.as_ref(), -1.0, 2.5, 1e-3), -1.0);
    }

    #[test]
    fn atom_transport_rides_the_flow() {
        let quad = build_potential("quadratic", &PotentialParams { alpha: None }).unwrap();
        let atoms = vec![Atom { position: 1.0, mass: 0.25 }, Atom { position: -0.4, mass: 0.1 }];
        let same = transport_atoms(quad.as_ref(), &atoms, 0.0);
        assert_eq!(same[0].position, 1.0);
        assert_eq!(same[1].position, -0.4);
        let moved = transport_atoms(quad.as_ref(), &atoms, 0.7);
        let decay = (-0.7f64).exp();
        assert!((moved[0].position - decay).abs() <= 1e-8);
        assert!((moved[1].position + 0.4 * decay).abs() <= 1e-8);
        assert_eq!(moved[0].mass, 0.25);
        assert_eq!(moved[1].mass, 0.1);
        let dw = build_potential("double_well", &PotentialParams { alpha: None }).unwrap();
        let pinned = transport_atoms(dw.as_ref(), &[Atom { position: -1.0, mass: 0.5 }], 3.0);
        assert_eq!(pinned[0].position, -1.0);
    }

    #[test]
    fn truncation_rule_follows_the_jam_depth() {
        // rational law: depth pi/2, quadratic well -> V(L) = pi/2 + 5.
        let p = problem("rational", "quadratic", None, 1.0, 0.0);
        let (lo, hi) = fv_domain(&p).unwrap();
        assert_eq!(lo, -hi);
        let want = (2.0 * (std::f64::consts::FRAC_PI_2 + 5.0)).sqrt();
        assert!((hi - want).abs() <= 1e-6, "L = {hi} vs {want}");
        // arctan law: infinite depth -> padded steady support.
        let p2 = problem("arctan", "quadratic", None, 1.0, 0.0);
        let (lo2, hi2) = fv_domain(&p2).unwrap();
        assert_eq!(lo2, -hi2);
        assert!(hi2 > 5.0 && hi2 < 20.0, "L = {hi2}");
    }
}
