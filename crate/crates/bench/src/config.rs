//! Line-oriented `key = value` benchmark configuration.

use std::fmt;
use std::path::PathBuf;

use mgstokes::cost::{AHat, Kind, SolverParams};

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Cube,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaChoice {
    Value(f64),
    Estimate,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSet {
    Curated,
    Full,
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub mesh: MeshSource,
    pub kind: Kind,
    pub level: u32,
    pub params: Option<SolverParams>,
    pub sweep: SweepSet,
    /// Restrict the sweep to this cycle count (the benchmark tables fix
    /// kappa = 1).
    pub sweep_kappa: Option<u32>,
    pub gamma_u_max: Option<f64>,
    pub gamma_p_max: Option<f64>,
    pub omega: OmegaChoice,
    pub eps: f64,
    pub max_cycles: u32,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    /// Sweeps larger than this print a long-run warning.
    pub sweep_budget: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            mesh: MeshSource::Cube,
            kind: Kind::P2P1,
            level: 3,
            params: None,
            sweep: SweepSet::Curated,
            sweep_kappa: Some(1),
            gamma_u_max: None,
            gamma_p_max: None,
            omega: OmegaChoice::Default,
            eps: 1e-12,
            max_cycles: 200,
            out_csv: None,
            out_json: None,
            cache_dir: None,
            sweep_budget: 64,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_params(s: &str) -> Result<SolverParams, String> {
    let parts: Vec<&str> = s.split(',').map(|t| t.trim()).collect();
    if parts.len() != 6 {
        return Err(format!("expected 6 comma-separated fields, got {}", parts.len()));
    }
    let num = |t: &str| -> Result<u32, String> {
        t.parse().map_err(|e| format!("bad number `{t}`: {e}"))
    };
    let a_hat = match parts[4] {
        "F" | "f" => AHat::Forward,
        "S" | "s" => AHat::Symmetric,
        other => return Err(format!("velocity sweep variant must be F or S, got `{other}`")),
    };
    Ok(SolverParams::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, num(parts[3])?, a_hat, num(parts[5])?))
}

pub fn parse_config(text: &str) -> Result<BenchmarkConfig, ConfigError> {
    let mut cfg = BenchmarkConfig::default();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError { line, msg };
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "mesh" => {
                cfg.mesh = if value == "cube" {
                    MeshSource::Cube
                } else {
                    MeshSource::File(PathBuf::from(value))
                };
            }
            "kind" => {
                cfg.kind = match value {
                    "p1p1" => Kind::P1P1,
                    "p2p1" => Kind::P2P1,
                    other => return Err(err(format!("kind must be p1p1 or p2p1, got `{other}`"))),
                };
            }
            "level" => {
                cfg.level = value.parse().map_err(|e| err(format!("bad level: {e}")))?;
                if cfg.level < 2 {
                    return Err(err("level must be >= 2".into()));
                }
            }
            "params" => {
                let p = parse_params(value).map_err(|e| err(e))?;
                cfg.params = Some(p);
            }
            "sweep" => {
                cfg.sweep = match value {
                    "curated" => SweepSet::Curated,
                    "full" => SweepSet::Full,
                    other => return Err(err(format!("sweep must be curated or full, got `{other}`"))),
                };
            }
            "sweep_kappa" => {
                cfg.sweep_kappa = if value == "any" {
                    None
                } else {
                    Some(value.parse().map_err(|e| err(format!("bad sweep_kappa: {e}")))?)
                };
            }
            "gamma_u_max" => {
                cfg.gamma_u_max =
                    Some(value.parse().map_err(|e| err(format!("bad gamma_u_max: {e}")))?)
            }
            "gamma_p_max" => {
                cfg.gamma_p_max =
                    Some(value.parse().map_err(|e| err(format!("bad gamma_p_max: {e}")))?)
            }
            "omega_inv" => {
                cfg.omega = match value {
                    "estimate" => OmegaChoice::Estimate,
                    "default" => OmegaChoice::Default,
                    v => OmegaChoice::Value(
                        v.parse().map_err(|e| err(format!("bad omega_inv: {e}")))?,
                    ),
                };
            }
            "eps" => cfg.eps = value.parse().map_err(|e| err(format!("bad eps: {e}")))?,
            "max_cycles" => {
                cfg.max_cycles = value.parse().map_err(|e| err(format!("bad max_cycles: {e}")))?
            }
            "out_csv" => cfg.out_csv = Some(PathBuf::from(value)),
            "out_json" => cfg.out_json = Some(PathBuf::from(value)),
            "cache_dir" => cfg.cache_dir = Some(PathBuf::from(value)),
            "sweep_budget" => {
                cfg.sweep_budget =
                    value.parse().map_err(|e| err(format!("bad sweep_budget: {e}")))?
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    if !(cfg.eps > 0.0) {
        return Err(ConfigError { line: 0, msg: "eps must be positive".into() });
    }
    Ok(cfg)
}

/// The default desk-scale sweep: kappa = 1, the two favored velocity-sweep
/// variants, and a pre/post/increment grid including every parameterization
/// from the published result tables. 36 tuples.
pub fn curated_sweep() -> Vec<SolverParams> {
    let mut out = Vec::new();
    for (a_hat, xi) in [(AHat::Forward, 3), (AHat::Symmetric, 1)] {
        for nu_pre in [0u32, 1, 2] {
            for nu_post in [1u32, 2, 3] {
                for nu_inc in [1u32, 2] {
                    out.push(SolverParams::new(nu_pre, nu_post, nu_inc, 1, a_hat, xi));
                }
            }
        }
    }
    // table rows not on the grid above
    for p in [
        SolverParams::new(1, 0, 2, 1, AHat::Symmetric, 1),
        SolverParams::new(3, 1, 3, 1, AHat::Symmetric, 1),
    ] {
        out.retain(|q| q != &p);
        out.push(p);
    }
    out.truncate(38);
    debug_assert!(out.iter().all(|p| p.in_search_space()));
    out
}
