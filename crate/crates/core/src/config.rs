//! Run configuration: flat `key=value` text files with `--key value` flag
//! overrides. Unknown keys are rejected so typos cannot silently change an
//! experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::grid::ModelParams;
use crate::wave::{Preset, RunSpec};
use crate::Result;

/// The CLI commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Fit,
    Solve,
    Curve,
    Analyze,
}

impl Command {
    pub fn parse(s: &str) -> Result<Command> {
        match s {
            "verify" => Ok(Command::Verify),
            "fit" => Ok(Command::Fit),
            "solve" => Ok(Command::Solve),
            "curve" => Ok(Command::Curve),
            "analyze" => Ok(Command::Analyze),
            other => Err(Error::config(format!(
                "unknown command '{other}' (expected verify|fit|solve|curve|analyze)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Fit => "fit",
            Command::Solve => "solve",
            Command::Curve => "curve",
            Command::Analyze => "analyze",
        }
    }

    /// Keys each command accepts.
    fn allowed_keys(&self) -> &'static [&'static str] {
        const COMMON: &[&str] = &["p", "out", "seed", "threads"];
        const SOLVER: &[&str] = &[
            "x_min", "x_max", "nx", "cfl", "u_max", "t_max", "preset", "d", "t_blowup",
            "amplitude", "sigma", "c", "x0", "s_min", "s_max", "n_slices", "grid_n",
        ];
        match self {
            Command::Verify => COMMON,
            Command::Fit => &["p", "out", "seed", "threads", "input", "m", "init", "theta1",
                "grid_n", "newton_tol", "max_iter", "damping", "a_bound", "e_gap_min"],
            Command::Solve => {
                const K: &[&str] = &[
                    "p", "out", "seed", "threads", "x_min", "x_max", "nx", "cfl", "u_max",
                    "t_max", "preset", "d", "t_blowup", "amplitude", "sigma", "c", "x0",
                    "s_min", "s_max", "n_slices", "grid_n", "t_x0",
                ];
                let _ = SOLVER;
                K
            }
            Command::Curve => &[
                "p", "out", "seed", "threads", "x_min", "x_max", "nx", "cfl", "u_max", "t_max",
                "preset", "d", "t_blowup", "amplitude", "sigma", "c", "refinements",
            ],
            Command::Analyze => &[
                "p", "out", "seed", "threads", "x_min", "x_max", "nx", "cfl", "u_max", "t_max",
                "preset", "d", "t_blowup", "amplitude", "sigma", "c", "x0", "s_min", "s_max",
                "n_slices", "grid_n", "k_max", "refinements", "fit_window_lo", "fit_window_hi",
            ],
        }
    }
}

/// Parsed configuration: a command plus validated key/value pairs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Builds a config from an optional file and a flat list of
    /// `--key value` overrides.
    pub fn build(command: Command, file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut values = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read config {path:?}: {e}")))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::config(format!("config line {} is not key=value: '{line}'", lineno + 1))
                })?;
                values.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        for (k, v) in overrides {
            values.insert(k.clone(), v.clone());
        }
        let cfg = RunConfig { command, values };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let allowed = self.command.allowed_keys();
        for k in self.values.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::config(format!(
                    "unknown key '{k}' for command '{}'",
                    self.command.name()
                )));
            }
        }
        // p > 1 enforced through ModelParams.
        self.params()?;
        Ok(())
    }

    /// Canonical text of the configuration (sorted keys) for hashing.
    pub fn canonical(&self) -> String {
        let mut out = format!("command={}\n", self.command.name());
        for (k, v) in &self.values {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("key '{key}' is not a number: '{v}'"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("key '{key}' is not an integer: '{v}'"))),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.f64_or("p", 3.0)?)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out").unwrap_or("out"))
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.usize_or("seed", 0)? as u64)
    }

    pub fn threads(&self) -> Result<usize> {
        let t = self.usize_or("threads", 3)?;
        if t == 0 {
            return Err(Error::config("threads must be >= 1"));
        }
        Ok(t)
    }

    /// The solver run specification for solve/curve/analyze commands.
    pub fn run_spec(&self) -> Result<RunSpec> {
        let params = self.params()?;
        let preset = match self.get("preset").unwrap_or("gaussian") {
            "ode" => Preset::Ode { c: self.f64_or("c", 1.0)? },
            "exact-soliton" => Preset::ExactSoliton {
                d: self.f64_or("d", 0.3)?,
                t_blowup: self.f64_or("t_blowup", 1.0)?,
            },
            "gaussian" => Preset::Gaussian {
                amplitude: self.f64_or("amplitude", 3.0)?,
                sigma: self.f64_or("sigma", 0.5)?,
            },
            "odd" => Preset::Odd {
                amplitude: self.f64_or("amplitude", 10.0)?,
                sigma: self.f64_or("sigma", 1.0)?,
            },
            other => {
                return Err(Error::config(format!(
                    "unknown preset '{other}' (ode|exact-soliton|gaussian|odd)"
                )))
            }
        };
        let spec = RunSpec {
            params,
            x_min: self.f64_or("x_min", -2.0)?,
            x_max: self.f64_or("x_max", 2.0)?,
            nx: self.usize_or("nx", 4096)?,
            cfl: self.f64_or("cfl", 0.9)?,
            u_max: self.f64_or("u_max", 1e8)?,
            t_max: self.f64_or("t_max", 2.0)?,
            preset,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid refinement factors for curve estimation.
    pub fn refinements(&self) -> Result<Vec<usize>> {
        match self.get("refinements") {
            None => Ok(vec![1, 2, 4]),
            Some(v) => {
                let parts: Result<Vec<usize>> = v
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::config(format!("bad refinement '{s}'")))
                    })
                    .collect();
                let parts = parts?;
                if parts.len() < 3 {
                    return Err(Error::config("need at least 3 refinement factors"));
                }
                Ok(parts)
            }
        }
    }

    /// The requested similarity times `s` (geometric in `e^{-s}` spacing is
    /// not needed; uniform spacing in `s` suits every law fit).
    pub fn s_values(&self) -> Result<Vec<f64>> {
        let lo = self.f64_or("s_min", 1.0)?;
        let hi = self.f64_or("s_max", 6.0)?;
        let n = self.usize_or("n_slices", 24)?;
        if !(hi > lo) || n < 2 {
            return Err(Error::config("need s_max > s_min and n_slices >= 2"));
        }
        Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }
}
