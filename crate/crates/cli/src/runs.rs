//! One driver per subcommand.  Every run writes `manifest.json` before doing
//! any work, prints structured `key=value` lines to stdout, and reports
//! failures as an exit code plus a message naming the offending key where
//! one exists.

use std::path::Path;

use sdd_core::io::{
    float17, read_grid_csv, read_quantile_csv, write_atoms_csv, write_compare_csv,
    write_diagnostics_csv, write_grid_csv, write_quantile_csv,
};
use sdd_core::jko::{evolve, GridSpec, JkoConfig, ATOM_DETECT_EPS};
use sdd_core::measures::{grid_from_quantile, quantile_from_grid, GridMeasure, QuantileMeasure};
use sdd_core::model::Problem;
use sdd_core::reference::{cfl_bound, flow_map, fv_domain, fv_evolve, FvState};
use sdd_core::rng::Xorshift64Star;
use sdd_core::steady::{check_stationary, default_domain, minimizer, steady_profile, Verdict};
use sdd_core::{CoreError, Extent};

use crate::config::{InitSpec, RunConfig};

/// Exit code plus diagnostic message.
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::NonConvergence { .. }
            | CoreError::Undetermined { .. }
            | CoreError::CflViolation { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure::config(message)
    }
}

pub type RunResult = Result<(), Failure>;

fn write_manifest(cfg: &RunConfig, out: &Path, subcommand: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::config(format!("--out {}: {e}", out.display())))?;
    std::fs::write(out.join("manifest.json"), cfg.manifest_json(subcommand))
        .map_err(|e| Failure::config(format!("--out {}: {e}", out.display())))?;
    Ok(())
}

/// Simulation window: configured `domain`, or the steady-support default
/// widened to contain the initial profile.
fn domain_for(cfg: &RunConfig, problem: &Problem, fv: bool) -> Result<(f64, f64), Failure> {
    if let Some(d) = cfg.domain {
        return Ok(d);
    }
    let (mut lo, mut hi) = if fv { fv_domain(problem)? } else { default_domain(problem)? };
    let reach = match &cfg.init {
        InitSpec::Dirac { x0 } => Some((*x0, *x0)),
        InitSpec::Uniform { a, b } => Some((*a, *b)),
        InitSpec::Gaussian { mu, sigma } => Some((mu - 6.0 * sigma, mu + 6.0 * sigma)),
        InitSpec::MinimizerPlusBump { bump_center, bump_sigma, .. } => {
            bump_center.map(|c| (c - 6.0 * bump_sigma, c + 6.0 * bump_sigma))
        }
        InitSpec::Random | InitSpec::FromFile { .. } => None,
    };
    if let Some((a, b)) = reach {
        lo = lo.min(a - 0.5);
        hi = hi.max(b + 0.5);
    }
    if fv {
        let l = lo.abs().max(hi.abs());
        return Ok((-l, l));
    }
    Ok((lo, hi))
}

/// Materializes the initial profile as a density-only grid measure of the
/// configured mass.  Profiles carrying atoms are rejected with the caller's
/// context (the finite-volume side cannot represent them).
fn initial_density(
    cfg: &RunConfig,
    problem: &Problem,
    lo: f64,
    hi: f64,
    cells: usize,
) -> Result<GridMeasure, Failure> {
    let dx = (hi - lo) / cells as f64;
    let density = match &cfg.init {
        InitSpec::Uniform { a, b } => {
            let scale = cfg.mass / (b - a);
            (0..cells)
                .map(|j| {
                    let xl = lo + j as f64 * dx;
                    let xr = xl + dx;
                    let overlap = (xr.min(*b) - xl.max(*a)).max(0.0);
                    scale * overlap / dx
                })
                .collect::<Vec<f64>>()
        }
        InitSpec::Gaussian { mu, sigma } => {
            let raw: Vec<f64> = (0..cells)
                .map(|j| {
                    let z = (lo + (j as f64 + 0.5) * dx - mu) / sigma;
                    (-0.5 * z * z).exp()
                })
                .collect();
            let total: f64 = raw.iter().sum::<f64>() * dx;
            if total <= 0.0 {
                return Err(Failure::config(
                    "init.mu/init.sigma: the gaussian carries no mass inside the domain",
                ));
            }
            raw.iter().map(|u| u * cfg.mass / total).collect()
        }
        InitSpec::MinimizerPlusBump { bump_mass, bump_center, bump_sigma } => {
            let base = minimizer(problem, lo, hi, cells, None)?;
            if !base.atoms().is_empty() {
                return Err(Failure::config(
                    "init.kind: minimizer-plus-bump needs a subcritical mass (the minimizer \
                     carries an atom)",
                ));
            }
            let prof = steady_profile(problem)?;
            let center =
                bump_center.unwrap_or_else(|| 0.5 * (prof.q_set.max_x() + prof.support.1));
            let raw: Vec<f64> = (0..cells)
                .map(|j| {
                    let z = (lo + (j as f64 + 0.5) * dx - center) / bump_sigma;
                    (-0.5 * z * z).exp()
                })
                .collect();
            let total: f64 = raw.iter().sum::<f64>() * dx;
            if total <= 0.0 {
                return Err(Failure::config(
                    "init.bump_center: the bump carries no mass inside the domain",
                ));
            }
            let bump_scale = bump_mass * cfg.mass / total;
            base.density()
                .iter()
                .zip(&raw)
                .map(|(u, g)| (1.0 - bump_mass) * u + bump_scale * g)
                .collect()
        }
        InitSpec::Random => {
            let mut rng = Xorshift64Star::new(cfg.seed);
            let raw: Vec<f64> = (0..cells).map(|_| rng.uniform(0.1, 1.0)).collect();
            let total: f64 = raw.iter().sum::<f64>() * dx;
            raw.iter().map(|u| u * cfg.mass / total).collect()
        }
        InitSpec::Dirac { .. } => {
            return Err(Failure::config(
                "init.kind: this subcommand needs a density profile, dirac is singular",
            ))
        }
        InitSpec::FromFile { path, .. } => {
            let q = read_quantile_csv(path)?;
            check_mass(q.mass(), cfg.mass)?;
            let g = grid_from_quantile(&q, lo, hi, cells, ATOM_DETECT_EPS)?;
            if !g.atoms().is_empty() {
                return Err(Failure::config(
                    "init.path: this subcommand needs a density profile, the file carries atoms",
                ));
            }
            return Ok(g);
        }
    };
    let mass = dx * density.iter().sum::<f64>();
    Ok(GridMeasure::new(lo, hi, density, Vec::new(), mass)?)
}

fn check_mass(found: f64, declared: f64) -> Result<(), Failure> {
    if (found - declared).abs() > 1e-9 * (1.0 + declared) {
        return Err(Failure::config(format!(
            "mass: config declares {declared} but the initial profile carries {found}"
        )));
    }
    Ok(())
}

/// Initial quantile vector at the configured resolution.
fn initial_quantile(
    cfg: &RunConfig,
    problem: &Problem,
    lo: f64,
    hi: f64,
) -> Result<QuantileMeasure, Failure> {
    match &cfg.init {
        InitSpec::Dirac { x0 } => {
            Ok(QuantileMeasure::new(cfg.mass, vec![*x0; cfg.n_quantiles])?)
        }
        InitSpec::FromFile { path, .. } => {
            let q = read_quantile_csv(path)?;
            check_mass(q.mass(), cfg.mass)?;
            Ok(q)
        }
        _ => {
            let sample_cells = cfg.n_cells.max(4 * cfg.n_quantiles);
            let g = initial_density(cfg, problem, lo, hi, sample_cells)?;
            Ok(quantile_from_grid(&g, cfg.n_quantiles)?)
        }
    }
}

pub fn run_simulate(cfg: &RunConfig, out: &Path) -> RunResult {
    write_manifest(cfg, out, "simulate")?;
    let problem = cfg.problem()?;
    let (lo, hi) = domain_for(cfg, &problem, false)?;
    let q0 = initial_quantile(cfg, &problem, lo, hi)?;
    let spec = GridSpec { lo, hi, cells: cfg.n_cells };
    let traj = evolve(&problem, &q0, &JkoConfig::new(cfg.tau), cfg.t_final, &spec, None)?;
    for (i, state) in traj.states.iter().enumerate() {
        write_quantile_csv(&out.join(format!("quantile_{i:06}.csv")), state)?;
    }
    write_diagnostics_csv(&out.join("diagnostics.csv"), &traj.diagnostics)?;
    println!("steps={}", traj.states.len() - 1);
    println!("final_free_energy={}", float17(traj.diagnostics.last().unwrap().free_energy));
    if !traj.all_converged {
        return Err(Failure {
            code: 2,
            message: "inner solver hit the iteration cap; results were still written".into(),
        });
    }
    Ok(())
}

fn extent_text(e: Extent) -> String {
    match e {
        Extent::Finite(v) => float17(v),
        Extent::Infinite => "inf".into(),
    }
}

pub fn run_steady(cfg: &RunConfig, out: &Path) -> RunResult {
    write_manifest(cfg, out, "steady")?;
    let problem = cfg.problem()?;
    let prof = steady_profile(&problem)?;
    println!("d={}", extent_text(prof.depth));
    println!("m_c={}", extent_text(prof.critical_mass));
    println!("v_level={}", float17(prof.level));
    println!("atom_mass={}", float17(prof.atom_mass));
    println!("support={},{}", float17(prof.support.0), float17(prof.support.1));
    let (lo, hi) = match cfg.domain {
        Some(d) => d,
        None => default_domain(&problem)?,
    };
    let points = prof.q_set.points();
    let split: Option<Vec<f64>> = if prof.atom_mass > 0.0 && points.len() > 1 {
        Some(vec![1.0 / points.len() as f64; points.len()])
    } else {
        None
    };
    let g = minimizer(&problem, lo, hi, cfg.n_cells, split.as_deref())?;
    write_grid_csv(&out.join("steady_density.csv"), &g)?;
    if !g.atoms().is_empty() {
        write_atoms_csv(&out.join("steady_atoms.csv"), g.atoms())?;
    }
    Ok(())
}

pub fn run_critical_mass(cfg: &RunConfig, out: &Path) -> RunResult {
    write_manifest(cfg, out, "critical-mass")?;
    let problem = cfg.problem()?;
    let mc = sdd_core::steady::critical_mass(&problem)?;
    println!("m_c={}", extent_text(mc));
    Ok(())
}

/// Advances the finite-volume state in chunks, re-deriving the stable step
/// from the current profile each time.
fn fv_to_time(problem: &Problem, mut s: FvState, horizon: f64) -> Result<FvState, Failure> {
    let chunks = 16usize;
    let h = horizon / chunks as f64;
    for _ in 0..chunks {
        let dt = 0.5 * cfl_bound(problem, &s);
        let (next, _) = fv_evolve(problem, &s, h, dt)?;
        s = next;
    }
    Ok(s)
}

pub fn run_compare(cfg: &RunConfig, out: &Path) -> RunResult {
    write_manifest(cfg, out, "compare")?;
    let problem = cfg.problem()?;
    let (lo, hi) = domain_for(cfg, &problem, true)?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for k in 0..cfg.levels {
        let cells = cfg.n_cells << k;
        let nq = cfg.n_quantiles << k;
        let tau = cfg.tau / (1u64 << k) as f64;
        let g0 = initial_density(cfg, &problem, lo, hi, cells)?;
        let q0 = quantile_from_grid(&g0, nq)?;

        let spec = GridSpec { lo, hi, cells };
        let traj = evolve(&problem, &q0, &JkoConfig::new(tau), cfg.t_final, &spec, None)?;
        let q_end = traj.states.last().expect("trajectory never empty");
        let jko_grid = grid_from_quantile(q_end, lo, hi, cells, ATOM_DETECT_EPS)?;

        let fv0 = FvState::new(lo, hi, g0.density().to_vec(), cfg.epsilon)?;
        let fv = fv_to_time(&problem, fv0, cfg.t_final)?;

        let dx = (hi - lo) / cells as f64;
        let mut l1 = dx
            * jko_grid
                .density()
                .iter()
                .zip(fv.density())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        l1 += jko_grid.atoms().iter().map(|a| a.mass).sum::<f64>();
        rows.push((cells, l1));
        println!("level={k} resolution={cells} l1_distance={}", float17(l1));

        if k + 1 == cfg.levels {
            write_grid_csv(&out.join("fv_density.csv"), &fv.to_grid()?)?;
            write_grid_csv(&out.join("jko_density.csv"), &jko_grid)?;
        }
    }
    write_compare_csv(&out.join("compare.csv"), &rows)?;
    Ok(())
}

pub fn run_flow(cfg: &RunConfig, out: &Path) -> RunResult {
    write_manifest(cfg, out, "flow")?;
    let problem = cfg.problem()?;
    let x0 = match &cfg.init {
        InitSpec::Dirac { x0 } => *x0,
        _ => {
            return Err(Failure::config(
                "init.kind: flow follows a single characteristic, set init.kind=dirac",
            ))
        }
    };
    let pot = problem.potential.as_ref();
    let samples = 100usize;
    let mut table = String::from("t,X\n");
    for k in 0..=samples {
        let t = cfg.t_final * k as f64 / samples as f64;
        let x = flow_map(pot, x0, t, cfg.ode_dt);
        table.push_str(&format!("{},{}\n", float17(t), float17(x)));
    }
    std::fs::write(out.join("flow.csv"), table)
        .map_err(|e| Failure::config(format!("--out {}: {e}", out.display())))?;
    println!("X_T={}", float17(flow_map(pot, x0, cfg.t_final, cfg.ode_dt)));
    Ok(())
}

pub fn run_check_stationary(cfg: &RunConfig, out: &Path) -> RunResult {
    write_manifest(cfg, out, "check-stationary")?;
    let problem = cfg.problem()?;
    let (path, atoms) = match &cfg.init {
        InitSpec::FromFile { path, atoms } => (path.clone(), atoms.clone()),
        _ => {
            return Err(Failure::config(
                "init.kind: check-stationary reads a measure from disk, set init.kind=from-file",
            ))
        }
    };
    let g = read_grid_csv(&path, atoms.as_deref())?;
    let report = check_stationary(&problem, &g, cfg.tol)?;
    let verdict = match report.verdict {
        Verdict::StationaryMinimizer => "stationary-minimizer",
        Verdict::StationaryNonMinimizing => "stationary-non-minimizing",
        Verdict::NotStationary => "not-stationary",
    };
    println!("verdict={verdict}");
    println!("stationary={}", report.stationary);
    println!("components={}", report.components.len());
    println!("atoms={}", report.atoms.len());
    println!("energy_gap={}", float17(report.energy_gap));
    Ok(())
}
