//! Flat `key = value` configuration with per-experiment defaults.
//!
//! Section headers like `[run]` are accepted and ignored; keys are global.
//! Command-line flags override file values, and the subcommand overrides the
//! `experiment` key.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: String,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub tau: f64,
    pub t_final: f64,
    pub mu: [f64; 3],
    pub order: usize,
    /// "lu" or "gmres".
    pub solver: String,
    pub tol: f64,
    pub out_dir: PathBuf,
    /// Snapshot every this many steps (step 1 and the final step are always
    /// written).
    pub cadence: usize,
    /// Reserved; the solver itself is deterministic.
    pub seed: u64,
    /// Initial data for single-run: "stability", "repulsion" or "plume".
    pub initial: String,
}

pub const EXPERIMENTS: [&str; 6] = [
    "converge-time",
    "converge-space",
    "stability",
    "repulsion",
    "plume",
    "single-run",
];

fn preset(experiment: &str) -> Result<RunConfig> {
    let base = RunConfig {
        experiment: experiment.to_string(),
        lx: 1.0,
        ly: 1.0,
        nx: 16,
        ny: 16,
        tau: 0.01,
        t_final: 1.0,
        mu: [1.0, 1.0, 1.0],
        order: 1,
        solver: "lu".into(),
        tol: 1e-10,
        out_dir: PathBuf::from("out"),
        cadence: 10,
        seed: 0,
        initial: "stability".into(),
    };
    let cfg = match experiment {
        "converge-time" => RunConfig {
            nx: 64,
            ny: 64,
            tau: 0.25,
            t_final: 1.0,
            ..base
        },
        "converge-space" => RunConfig {
            nx: 4,
            ny: 4,
            tau: 1e-3,
            t_final: 0.1,
            ..base
        },
        "stability" => RunConfig {
            nx: 16,
            ny: 16,
            tau: 0.01,
            t_final: 2.5,
            cadence: 50,
            ..base
        },
        "repulsion" => RunConfig {
            nx: 48,
            ny: 48,
            tau: 1e-3,
            t_final: 0.03,
            cadence: 5,
            initial: "repulsion".into(),
            ..base
        },
        "plume" => RunConfig {
            lx: 2.0,
            ly: 1.0,
            nx: 96,
            ny: 48,
            tau: 1e-3,
            t_final: 0.05,
            cadence: 10,
            initial: "plume".into(),
            ..base
        },
        "single-run" => base,
        other => {
            return Err(Error::Config(format!(
                "unknown experiment '{other}'; expected one of {EXPERIMENTS:?}"
            )))
        }
    };
    Ok(cfg)
}

fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn apply(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let bad = |what: &str| {
        Error::Config(format!(
            "key '{key}': invalid value '{value}' ({what})"
        ))
    };
    match key {
        "experiment" => cfg.experiment = value.to_string(),
        "lx" => cfg.lx = value.parse().map_err(|_| bad("positive number"))?,
        "ly" => cfg.ly = value.parse().map_err(|_| bad("positive number"))?,
        "nx" => cfg.nx = value.parse().map_err(|_| bad("positive integer"))?,
        "ny" => cfg.ny = value.parse().map_err(|_| bad("positive integer"))?,
        "tau" => cfg.tau = value.parse().map_err(|_| bad("positive number"))?,
        "t_final" => cfg.t_final = value.parse().map_err(|_| bad("positive number"))?,
        "mu1" => cfg.mu[0] = value.parse().map_err(|_| bad("positive number"))?,
        "mu2" => cfg.mu[1] = value.parse().map_err(|_| bad("positive number"))?,
        "mu3" => cfg.mu[2] = value.parse().map_err(|_| bad("positive number"))?,
        "order" => cfg.order = value.parse().map_err(|_| bad("1 or 2"))?,
        "solver" => cfg.solver = value.to_string(),
        "tol" => cfg.tol = value.parse().map_err(|_| bad("positive number"))?,
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        "cadence" => cfg.cadence = value.parse().map_err(|_| bad("integer >= 1"))?,
        "seed" => cfg.seed = value.parse().map_err(|_| bad("unsigned integer"))?,
        "initial" => cfg.initial = value.to_string(),
        other => {
            return Err(Error::Config(format!(
                "unknown key '{other}' (known: experiment, lx, ly, nx, ny, tau, t_final, \
                 mu1, mu2, mu3, order, solver, tol, out_dir, cadence, seed, initial)"
            )))
        }
    }
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let fail = |key: &str, what: &str| Err(Error::Config(format!("key '{key}': {what}")));
    if !EXPERIMENTS.contains(&cfg.experiment.as_str()) {
        return fail("experiment", "must name one of the known experiments");
    }
    if !(cfg.lx > 0.0) || !(cfg.ly > 0.0) {
        return fail("lx/ly", "domain dimensions must be positive");
    }
    if cfg.nx == 0 || cfg.ny == 0 {
        return fail("nx/ny", "cell counts must be at least 1");
    }
    if !(cfg.tau > 0.0) {
        return fail("tau", "time step must be positive");
    }
    if cfg.t_final < cfg.tau {
        return fail("t_final", "final time must be at least one time step");
    }
    if cfg.mu.iter().any(|&m| !(m > 0.0)) {
        return fail("mu1/mu2/mu3", "coefficients must be positive");
    }
    if cfg.order != 1 && cfg.order != 2 {
        return fail("order", "must be 1 or 2");
    }
    if cfg.solver != "lu" && cfg.solver != "gmres" {
        return fail("solver", "must be 'lu' or 'gmres'");
    }
    if !(cfg.tol > 0.0) {
        return fail("tol", "tolerance must be positive");
    }
    if cfg.cadence == 0 {
        return fail("cadence", "must be at least 1");
    }
    if !["stability", "repulsion", "plume"].contains(&cfg.initial.as_str()) {
        return fail("initial", "must be 'stability', 'repulsion' or 'plume'");
    }
    Ok(())
}

/// Parse a config file on its own; the file must name the experiment.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let map = parse_key_values(text)?;
    let Some(experiment) = map.get("experiment") else {
        return Err(Error::Config(
            "mandatory key 'experiment' is missing; expected one of \
             converge-time, converge-space, stability, repulsion, plume, single-run"
                .into(),
        ));
    };
    let mut cfg = preset(experiment)?;
    for (k, v) in &map {
        apply(&mut cfg, k, v)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

/// Parse `<subcommand> [--config path] [--flag value]...`; flags override
/// config-file values, the subcommand overrides the experiment key.
pub fn parse_args(args: &[String]) -> Result<RunConfig> {
    let subcommand = args[0].as_str();
    let mut cfg = preset(subcommand)?;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let flag = args[i].as_str();
        let Some(key) = flag.strip_prefix("--") else {
            return Err(Error::Config(format!("expected a --flag, got '{flag}'")));
        };
        let Some(value) = args.get(i + 1) else {
            return Err(Error::Config(format!("flag '--{key}' needs a value")));
        };
        match key {
            "config" => {
                let path = Path::new(value);
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let map = parse_key_values(&text)?;
                for (k, v) in &map {
                    if k != "experiment" {
                        apply(&mut cfg, k, v)?;
                    }
                }
            }
            "out" => overrides.push(("out_dir".into(), value.clone())),
            other => overrides.push((other.into(), value.clone())),
        }
        i += 2;
    }
    for (k, v) in &overrides {
        apply(&mut cfg, k, v)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_reports_missing_experiment() {
        let err = parse_config_str("").unwrap_err();
        assert!(err.to_string().contains("experiment"), "{err}");
    }

    #[test]
    fn stability_stanza_parses() {
        let cfg = parse_config_str(
            "[run]\nexperiment = stability\nt_final = 2.5\nnx = 8\nny = 8\ntau = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, "stability");
        assert_eq!(cfg.t_final, 2.5);
        assert_eq!(cfg.nx, 8);
        assert_eq!(cfg.mu, [1.0; 3]);
        assert_eq!(cfg.order, 1);
        assert_eq!(cfg.solver, "lu");
    }

    #[test]
    fn zero_tau_rejected() {
        let err = parse_config_str("experiment = stability\ntau = 0\n").unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config_str("experiment = stability\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn flags_override_presets() {
        let args: Vec<String> = ["repulsion", "--nx", "12", "--ny", "12", "--tau", "0.002"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cfg = parse_args(&args).unwrap();
        assert_eq!(cfg.experiment, "repulsion");
        assert_eq!(cfg.nx, 12);
        assert_eq!(cfg.tau, 0.002);
        assert_eq!(cfg.initial, "repulsion");
    }

    #[test]
    fn bad_order_rejected() {
        let args: Vec<String> = ["stability", "--order", "3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert!(parse_args(&args).is_err());
    }
}
