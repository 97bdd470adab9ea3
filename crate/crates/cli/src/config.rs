//! Flat key-value run configuration.
//!
//! The config file is plain text, one `key=value` per line, `#` comments;
//! `--set key=value` flags override file entries.  Every key is validated
//! against the schema below and every error message names the offending key,
//! so batch failures are diagnosable from the exit line alone.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sdd_core::model::{build_law, build_potential, law_names, potential_names, PotentialParams, Problem};

/// Keys the schema accepts, with the defaults materialized into every
/// manifest.  `None` marks keys that are required or conditional.
const SCHEMA: &[(&str, Option<&str>)] = &[
    ("law.name", Some("arctan")),
    ("potential.name", Some("quadratic")),
    ("potential.alpha", None),
    ("mass", None),
    ("epsilon", Some("0")),
    ("tau", Some("0.01")),
    ("T", Some("2")),
    ("n_quantiles", Some("400")),
    ("n_cells", Some("800")),
    ("domain", Some("auto")),
    ("ode_dt", Some("0.001")),
    ("seed", Some("42")),
    ("tol", Some("1e-6")),
    ("levels", Some("3")),
    ("init.kind", Some("gaussian")),
    ("init.x0", None),
    ("init.a", None),
    ("init.b", None),
    ("init.mu", Some("0")),
    ("init.sigma", Some("1")),
    ("init.bump_mass", Some("0.1")),
    ("init.bump_center", Some("auto")),
    ("init.bump_sigma", Some("0.3")),
    ("init.path", None),
    ("init.atoms", None),
];

/// Initial-condition profile, fully parsed.
#[derive(Clone, Debug)]
pub enum InitSpec {
    Dirac { x0: f64 },
    Uniform { a: f64, b: f64 },
    Gaussian { mu: f64, sigma: f64 },
    MinimizerPlusBump { bump_mass: f64, bump_center: Option<f64>, bump_sigma: f64 },
    /// Piecewise-constant density with i.i.d. uniform cell values drawn from
    /// the seeded generator, normalized to the configured mass.
    Random,
    FromFile { path: PathBuf, atoms: Option<PathBuf> },
}

/// A resolved run: every numeric field validated, the manifest holding the
/// literal strings that produced it.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub law: String,
    pub potential: String,
    pub alpha: Option<f64>,
    pub mass: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub t_final: f64,
    pub n_quantiles: usize,
    pub n_cells: usize,
    pub domain: Option<(f64, f64)>,
    pub ode_dt: f64,
    pub seed: u64,
    pub tol: f64,
    pub levels: usize,
    pub init: InitSpec,
    pub manifest: BTreeMap<String, String>,
}

fn parse_lines(text: &str, origin: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{origin}: line {}: expected key=value, got {line:?}", idx + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn known(key: &str) -> bool {
    SCHEMA.iter().any(|(k, _)| *k == key)
}

/// Collects the file (if any) and `--set` overrides into one literal map,
/// rejecting unknown keys.
pub fn gather(
    config_path: Option<&PathBuf>,
    sets: &[String],
) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("config file {}: {e}", path.display()))?;
        map = parse_lines(&text, &path.display().to_string())?;
    }
    for s in sets {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| format!("--set {s:?}: expected key=value"))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    if let Some(bad) = map.keys().find(|k| !known(k)) {
        return Err(format!("unknown config key `{bad}`"));
    }
    Ok(map)
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    manifest: BTreeMap<String, String>,
}

impl<'a> Reader<'a> {
    fn literal(&mut self, key: &str) -> Option<String> {
        let def = SCHEMA.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d);
        let value = self.map.get(key).cloned().or_else(|| def.map(str::to_string));
        if let Some(v) = &value {
            self.manifest.insert(key.to_string(), v.clone());
        }
        value
    }

    fn required(&mut self, key: &str) -> Result<String, String> {
        self.literal(key).ok_or_else(|| format!("{key} is required"))
    }

    fn f64(&mut self, key: &str) -> Result<f64, String> {
        let lit = self.required(key)?;
        lit.parse::<f64>().map_err(|_| format!("{key}: not a number: {lit:?}"))
    }

    fn positive(&mut self, key: &str) -> Result<f64, String> {
        let v = self.f64(key)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("{key}: must be positive and finite, got {v}"));
        }
        Ok(v)
    }

    fn usize(&mut self, key: &str) -> Result<usize, String> {
        let lit = self.required(key)?;
        let v: usize = lit.parse().map_err(|_| format!("{key}: not a count: {lit:?}"))?;
        if v == 0 {
            return Err(format!("{key}: must be positive"));
        }
        Ok(v)
    }
}

/// Resolves literals into a validated run configuration.
pub fn resolve(map: &BTreeMap<String, String>) -> Result<RunConfig, String> {
    let mut r = Reader { map, manifest: BTreeMap::new() };

    let law = r.required("law.name")?;
    if !law_names().contains(&law.as_str()) {
        return Err(format!("law.name: unknown law {law:?}, expected one of {:?}", law_names()));
    }
    let potential = r.required("potential.name")?;
    if !potential_names().contains(&potential.as_str()) {
        return Err(format!(
            "potential.name: unknown potential {potential:?}, expected one of {:?}",
            potential_names()
        ));
    }
    let alpha = if potential == "power" {
        match r.literal("potential.alpha") {
            Some(lit) => {
                let a: f64 =
                    lit.parse().map_err(|_| format!("potential.alpha: not a number: {lit:?}"))?;
                Some(a)
            }
            None => return Err("potential.alpha is required for potential.name=power".into()),
        }
    } else {
        None
    };

    let mass = {
        let v = r.f64("mass")?;
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("mass: must be positive and finite, got {v}"));
        }
        v
    };
    let epsilon = {
        let v = r.f64("epsilon")?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("epsilon: must be nonnegative, got {v}"));
        }
        v
    };
    let tau = r.positive("tau")?;
    let t_final = r.positive("T")?;
    let steps = t_final / tau;
    if (steps - steps.round()).abs() > 1e-12 * steps.max(1.0) {
        return Err(format!("T: must be a multiple of tau, got T={t_final} tau={tau}"));
    }
    let n_quantiles = {
        let v = r.usize("n_quantiles")?;
        if v < 2 {
            return Err(format!("n_quantiles: needs at least 2, got {v}"));
        }
        v
    };
    let n_cells = r.usize("n_cells")?;
    let domain = {
        let lit = r.required("domain")?;
        if lit == "auto" {
            None
        } else {
            let parts: Vec<&str> = lit.split(',').collect();
            let bad = || format!("domain: expected `lo,hi` or `auto`, got {lit:?}");
            if parts.len() != 2 {
                return Err(bad());
            }
            let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
            let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("domain: needs lo < hi, got {lit:?}"));
            }
            Some((lo, hi))
        }
    };
    let ode_dt = r.positive("ode_dt")?;
    let seed = {
        let lit = r.required("seed")?;
        lit.parse::<u64>().map_err(|_| format!("seed: not an integer: {lit:?}"))?
    };
    let tol = r.positive("tol")?;
    let levels = r.usize("levels")?;

    let kind = r.required("init.kind")?;
    let init = match kind.as_str() {
        "dirac" => InitSpec::Dirac { x0: r.f64("init.x0").map_err(|e| e + " (required by init.kind=dirac)")? },
        "uniform" => {
            let a = r.f64("init.a").map_err(|e| e + " (required by init.kind=uniform)")?;
            let b = r.f64("init.b").map_err(|e| e + " (required by init.kind=uniform)")?;
            if !(a < b) {
                return Err(format!("init.a/init.b: need a < b, got {a}, {b}"));
            }
            InitSpec::Uniform { a, b }
        }
        "gaussian" => {
            let mu = r.f64("init.mu")?;
            let sigma = r.positive("init.sigma")?;
            InitSpec::Gaussian { mu, sigma }
        }
        "minimizer-plus-bump" => {
            let bump_mass = r.f64("init.bump_mass")?;
            // Zero is allowed: the profile degenerates to the plain minimizer.
            if !(0.0..1.0).contains(&bump_mass) {
                return Err(format!(
                    "init.bump_mass: must be a fraction in [0, 1), got {bump_mass}"
                ));
            }
            let bump_center = {
                let lit = r.required("init.bump_center")?;
                if lit == "auto" {
                    None
                } else {
                    Some(
                        lit.parse::<f64>()
                            .map_err(|_| format!("init.bump_center: not a number: {lit:?}"))?,
                    )
                }
            };
            let bump_sigma = r.positive("init.bump_sigma")?;
            InitSpec::MinimizerPlusBump { bump_mass, bump_center, bump_sigma }
        }
        "random" => InitSpec::Random,
        "from-file" => {
            let path = PathBuf::from(
                r.literal("init.path").ok_or("init.path is required for init.kind=from-file")?,
            );
            let atoms = r.literal("init.atoms").map(PathBuf::from);
            InitSpec::FromFile { path, atoms }
        }
        other => {
            return Err(format!(
                "init.kind: unknown profile {other:?}, expected dirac | uniform | gaussian | \
                 minimizer-plus-bump | random | from-file"
            ))
        }
    };

    Ok(RunConfig {
        law,
        potential,
        alpha,
        mass,
        epsilon,
        tau,
        t_final,
        n_quantiles,
        n_cells,
        domain,
        ode_dt,
        seed,
        tol,
        levels,
        init,
        manifest: r.manifest,
    })
}

impl RunConfig {
    /// Builds the problem, prefixing any catalog rejection with the config
    /// key that caused it.
    pub fn problem(&self) -> Result<Problem, String> {
        let law = build_law(&self.law).map_err(|e| format!("law.name: {e}"))?;
        let potential = build_potential(&self.potential, &PotentialParams { alpha: self.alpha })
            .map_err(|e| format!("potential.alpha: {e}"))?;
        Problem::new(law, potential, self.mass, self.epsilon)
            .map_err(|e| format!("mass/epsilon: {e}"))
    }

    /// Serializes the materialized manifest deterministically.
    pub fn manifest_json(&self, subcommand: &str) -> String {
        let mut map = self.manifest.clone();
        map.insert("subcommand".to_string(), subcommand.to_string());
        serde_json::to_string_pretty(&map).expect("string map always serializes") + "\n"
    }
}
