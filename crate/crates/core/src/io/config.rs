//! Flat `key = value` run configuration with strict validation.
//!
//! One key per line, `#` starts a comment, lists are comma separated and may be
//! wrapped in brackets. Unknown and repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::medium::{builtin_medium, Medium, PEKAR_NONREGULAR, POLYNOMIAL};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },

    #[error("{key}: {message}")]
    Range { key: &'static str, message: String },

    #[error("missing required key `{0}`")]
    Missing(&'static str),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

const KEYS: &[&str] = &[
    "medium.name",
    "medium.params.a",
    "physics.m_e",
    "physics.alpha",
    "physics.alpha_list",
    "grid.n",
    "grid.c_box",
    "solver.tol",
    "solver.max_iters",
    "tw.v_list",
    "mass.p_list",
    "mass.tol",
    "dynamics.dt",
    "dynamics.T",
    "dynamics.audit_every",
    "io.outdir",
    "io.seed",
];

/// A validated run configuration with defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub medium_name: String,
    /// Exponent of the polynomial profile.
    pub medium_a: Option<f64>,
    pub m_e: f64,
    pub alpha: Option<f64>,
    pub alpha_list: Vec<f64>,
    /// Forced lattice size; chosen by the box policy when absent.
    pub grid_n: Option<usize>,
    pub c_box: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Speeds as fractions of `v_crit`.
    pub v_list: Vec<f64>,
    pub p_list: Option<Vec<f64>>,
    pub mass_tol: f64,
    pub dt: f64,
    pub t_final: f64,
    pub audit_every: usize,
    pub outdir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            medium_name: POLYNOMIAL.to_string(),
            medium_a: None,
            m_e: 1.0,
            alpha: None,
            alpha_list: vec![8.0, 16.0, 32.0, 64.0],
            grid_n: None,
            c_box: 10.0,
            tol: 1e-9,
            max_iters: 20_000,
            v_list: vec![0.02, 0.04, 0.06, 0.08],
            p_list: None,
            mass_tol: 0.05,
            dt: 1e-3,
            t_final: 1.0,
            audit_every: 10,
            outdir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn parse_f64(key: &str, raw: &str, line: usize) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| ConfigError::Parse { line, message: format!("`{key}` expects a number, got `{raw}`") })
}

fn parse_list(key: &str, raw: &str, line: usize) -> Result<Vec<f64>> {
    let inner = raw.trim().trim_start_matches('[').trim_end_matches(']');
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|s| parse_f64(key, s.trim(), line)).collect()
}

fn parse_uint(key: &str, raw: &str, line: usize) -> Result<u64> {
    raw.parse::<u64>()
        .map_err(|_| ConfigError::Parse { line, message: format!("`{key}` expects a non-negative integer, got `{raw}`") })
}

fn range(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range { key, message: message.into() }
}

fn positive(key: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(range(key, format!("must be a positive finite number, got {x}")))
    }
}

impl RunConfig {
    /// Parses and validates configuration text.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&'static str, (usize, String)> = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse { line, message: format!("expected `key = value`, got `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            };
            if value.is_empty() {
                return Err(ConfigError::Parse { line, message: format!("`{key}` has no value") });
            }
            if seen.insert(known, (line, value.to_string())).is_some() {
                return Err(ConfigError::Duplicate { line, key: key.to_string() });
            }
        }
        let mut cfg = Self::default();
        let Some((_, name)) = seen.get("medium.name") else {
            return Err(ConfigError::Missing("medium.name"));
        };
        cfg.medium_name = name.clone();
        for (key, (line, value)) in &seen {
            let line = *line;
            match *key {
                "medium.name" => {}
                "medium.params.a" => cfg.medium_a = Some(parse_f64(key, value, line)?),
                "physics.m_e" => cfg.m_e = parse_f64(key, value, line)?,
                "physics.alpha" => cfg.alpha = Some(parse_f64(key, value, line)?),
                "physics.alpha_list" => cfg.alpha_list = parse_list(key, value, line)?,
                "grid.n" => cfg.grid_n = Some(parse_uint(key, value, line)? as usize),
                "grid.c_box" => cfg.c_box = parse_f64(key, value, line)?,
                "solver.tol" => cfg.tol = parse_f64(key, value, line)?,
                "solver.max_iters" => cfg.max_iters = parse_uint(key, value, line)? as usize,
                "tw.v_list" => cfg.v_list = parse_list(key, value, line)?,
                "mass.p_list" => cfg.p_list = Some(parse_list(key, value, line)?),
                "mass.tol" => cfg.mass_tol = parse_f64(key, value, line)?,
                "dynamics.dt" => cfg.dt = parse_f64(key, value, line)?,
                "dynamics.T" => cfg.t_final = parse_f64(key, value, line)?,
                "dynamics.audit_every" => cfg.audit_every = parse_uint(key, value, line)? as usize,
                "io.outdir" => cfg.outdir = PathBuf::from(value),
                "io.seed" => cfg.seed = parse_uint(key, value, line)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks on every key.
    pub fn validate(&self) -> Result<()> {
        match self.medium_name.as_str() {
            POLYNOMIAL => {}
            PEKAR_NONREGULAR => {
                if self.medium_a.is_some() {
                    return Err(range("medium.params.a", format!("`{PEKAR_NONREGULAR}` takes no parameters")));
                }
            }
            other => {
                return Err(range("medium.name", format!("unknown medium `{other}` (known: {POLYNOMIAL}, {PEKAR_NONREGULAR})")))
            }
        }
        if let Some(a) = self.medium_a {
            if !(a.is_finite() && a > 0.0) {
                return Err(range("medium.params.a", format!("must be positive, got {a}")));
            }
        }
        positive("physics.m_e", self.m_e)?;
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a >= 0.0) {
                return Err(range("physics.alpha", format!("must be finite and >= 0, got {a}")));
            }
        }
        if self.alpha_list.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(range("physics.alpha_list", "entries must be positive"));
        }
        if let Some(n) = self.grid_n {
            if n < 8 || n % 2 != 0 {
                return Err(range("grid.n", format!("grid.n must be even ≥ 8, got {n}")));
            }
        }
        positive("grid.c_box", self.c_box)?;
        if !(self.tol.is_finite() && self.tol > 0.0 && self.tol < 1.0) {
            return Err(range("solver.tol", format!("must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(range("solver.max_iters", "must be at least 1"));
        }
        for &f in &self.v_list {
            if !f.is_finite() || f < 0.0 {
                return Err(range("tw.v_list", format!("fractions of v_crit must be finite and >= 0, got {f}")));
            }
            if f >= 1.0 {
                return Err(range(
                    "tw.v_list",
                    format!("fraction {f} of v_crit is not subsonic; the subsonic assumption requires |v| < v_crit"),
                ));
            }
        }
        if let Some(ps) = &self.p_list {
            if ps.iter().any(|p| !p.is_finite()) {
                return Err(range("mass.p_list", "entries must be finite"));
            }
        }
        if !(self.mass_tol.is_finite() && self.mass_tol > 0.0 && self.mass_tol < 1.0) {
            return Err(range("mass.tol", format!("must lie in (0, 1), got {}", self.mass_tol)));
        }
        positive("dynamics.dt", self.dt)?;
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(range("dynamics.T", format!("must be finite and >= 0, got {}", self.t_final)));
        }
        if self.audit_every == 0 {
            return Err(range("dynamics.audit_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Reads, parses and validates a configuration file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse_str(&text)
    }

    /// The medium this configuration names.
    pub fn medium(&self) -> crate::Result<Medium> {
        let params: Vec<(&str, f64)> = self.medium_a.map(|a| ("a", a)).into_iter().collect();
        builtin_medium(&self.medium_name, &params, self.m_e)
    }

    /// `physics.alpha`, required by the single-coupling commands.
    pub fn single_alpha(&self) -> Result<f64> {
        self.alpha.ok_or(ConfigError::Missing("physics.alpha"))
    }

    /// Every key with its resolved value, in the file format.
    pub fn resolved_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("medium.name", self.medium_name.clone());
        if let Some(a) = self.medium_a {
            put("medium.params.a", format!("{a}"));
        }
        put("physics.m_e", format!("{}", self.m_e));
        if let Some(a) = self.alpha {
            put("physics.alpha", format!("{a}"));
        }
        put("physics.alpha_list", list(&self.alpha_list));
        if let Some(n) = self.grid_n {
            put("grid.n", n.to_string());
        }
        put("grid.c_box", format!("{}", self.c_box));
        put("solver.tol", format!("{:e}", self.tol));
        put("solver.max_iters", self.max_iters.to_string());
        put("tw.v_list", list(&self.v_list));
        if let Some(p) = &self.p_list {
            put("mass.p_list", list(p));
        }
        put("mass.tol", format!("{}", self.mass_tol));
        put("dynamics.dt", format!("{:e}", self.dt));
        put("dynamics.T", format!("{}", self.t_final));
        put("dynamics.audit_every", self.audit_every.to_string());
        put("io.outdir", self.outdir.display().to_string());
        put("io.seed", self.seed.to_string());
        s
    }

    /// Writes `resolved_config.txt` into the output directory.
    pub fn write_resolved(&self) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(&self.outdir)?;
        let path = self.outdir.join("resolved_config.txt");
        std::fs::write(&path, self.resolved_text())?;
        Ok(path)
    }
}

/// Parses `path` and echoes the resolved configuration into its output directory.
pub fn parse_config(path: &Path) -> crate::Result<RunConfig> {
    let cfg = RunConfig::from_file(path)?;
    cfg.write_resolved()?;
    Ok(cfg)
}
