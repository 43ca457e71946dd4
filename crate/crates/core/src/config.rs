//! Protocol configuration: a single versioned TOML file with validated
//! ranges, plus the defaults of the reference simulation (truncation 9,
//! dark count probability 1e-8, error-correction inefficiency 1.16, weak
//! intensity one fifth of the signal, vacuum decoy).

use std::path::Path;

use serde::Deserialize;

use crate::calibration::q_from_visibility;
use crate::error::{Error, Result};

/// Validated runtime configuration.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    /// Phase-uniformity parameter, either given directly or calibrated from
    /// a measured visibility.
    pub q: f64,
    /// Visibility the q value was derived from, when it was.
    pub visibility: Option<f64>,
    /// Correlation length of the phase process. Recorded for provenance and
    /// echoed into outputs; the asymptotic rate does not depend on it.
    pub l_c: u32,
    /// Fock-space truncation M.
    pub truncation: usize,
    pub mu_s_grid: Vec<f64>,
    /// Weak decoy intensity as a fraction of the signal intensity.
    pub mu_w_ratio: f64,
    /// Dark count probability per detector per gate.
    pub p_d: f64,
    /// Error-correction inefficiency f.
    pub error_correction: f64,
    pub loss_grid_db: Vec<f64>,
    /// Relative duality-gap tolerance required of every certificate.
    pub solver_tol: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            q: 1.0,
            visibility: None,
            l_c: 1,
            truncation: 9,
            mu_s_grid: grid_values(0.05, 1.0, 0.05),
            mu_w_ratio: 0.2,
            p_d: 1e-8,
            error_correction: 1.16,
            loss_grid_db: grid_values(0.0, 60.0, 5.0),
            solver_tol: 1e-8,
        }
    }
}

/// Inclusive arithmetic grid start, start+step, ..., stop.
fn grid_values(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    start: f64,
    stop: f64,
    step: f64,
}

impl GridSpec {
    fn values(&self, name: &str, min_start: f64) -> Result<Vec<f64>> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::Config(format!("{name}: step must be > 0")));
        }
        if self.start < min_start || !self.start.is_finite() {
            return Err(Error::Config(format!("{name}: start must be >= {min_start}")));
        }
        if self.stop < self.start {
            return Err(Error::Config(format!(
                "{name}: stop {} is below start {} (empty grid)",
                self.stop, self.start
            )));
        }
        Ok(grid_values(self.start, self.stop, self.step))
    }
}

/// Raw file schema; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema: Option<u32>,
    q: Option<f64>,
    visibility: Option<f64>,
    l_c: Option<u32>,
    truncation: Option<usize>,
    mu_s_grid: Option<GridSpec>,
    mu_w_ratio: Option<f64>,
    p_d: Option<f64>,
    f: Option<f64>,
    loss_grid_db: Option<GridSpec>,
    solver_tol: Option<f64>,
}

/// Load and validate a configuration file. An empty file yields the
/// defaults. `q` and `visibility` are mutually exclusive; giving only the
/// visibility runs the wrapped-Gaussian calibration to fill `q`.
pub fn load_config(path: &Path) -> Result<ProtocolConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ProtocolConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("config syntax: {e}")))?;
    if let Some(v) = file.schema {
        if v != 1 {
            return Err(Error::Config(format!("unsupported config schema version {v}")));
        }
    }
    let defaults = ProtocolConfig::default();
    let mut config = ProtocolConfig {
        q: file.q.unwrap_or(defaults.q),
        visibility: file.visibility,
        l_c: file.l_c.unwrap_or(defaults.l_c),
        truncation: file.truncation.unwrap_or(defaults.truncation),
        mu_s_grid: match &file.mu_s_grid {
            Some(g) => g.values("mu_s_grid", f64::MIN_POSITIVE)?,
            None => defaults.mu_s_grid,
        },
        mu_w_ratio: file.mu_w_ratio.unwrap_or(defaults.mu_w_ratio),
        p_d: file.p_d.unwrap_or(defaults.p_d),
        error_correction: file.f.unwrap_or(defaults.error_correction),
        loss_grid_db: match &file.loss_grid_db {
            Some(g) => g.values("loss_grid_db", 0.0)?,
            None => defaults.loss_grid_db,
        },
        solver_tol: file.solver_tol.unwrap_or(defaults.solver_tol),
    };
    if file.q.is_some() && file.visibility.is_some() {
        return Err(Error::Config(
            "give either q or visibility, not both".into(),
        ));
    }
    if let (None, Some(v)) = (file.q, file.visibility) {
        config.apply_visibility(v)?;
    }
    config.validate()?;
    Ok(config)
}

impl ProtocolConfig {
    /// Derive q from a measured fringe visibility.
    pub fn apply_visibility(&mut self, visibility: f64) -> Result<()> {
        let min = q_from_visibility(visibility).map_err(|e| match e {
            Error::Domain(msg) => Error::Config(msg),
            other => other,
        })?;
        self.q = min.q;
        self.visibility = Some(visibility);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let c = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        c(
            self.q.is_finite() && (0.0..=1.0).contains(&self.q),
            &format!("q = {} outside [0, 1]", self.q),
        )?;
        if let Some(v) = self.visibility {
            c(v > 0.0 && v < 1.0, &format!("visibility = {v} outside (0, 1)"))?;
        }
        c(
            (1..=13).contains(&self.truncation),
            &format!(
                "truncation = {} outside [1, 13] (the two-mode SDP dimension cap)",
                self.truncation
            ),
        )?;
        c(!self.mu_s_grid.is_empty(), "mu_s_grid is empty")?;
        c(
            self.mu_s_grid.iter().all(|&m| m.is_finite() && m > 0.0 && m <= 5.0),
            "mu_s_grid values must lie in (0, 5]",
        )?;
        c(
            self.mu_w_ratio.is_finite() && self.mu_w_ratio > 0.0 && self.mu_w_ratio < 1.0,
            &format!("mu_w_ratio = {} outside (0, 1)", self.mu_w_ratio),
        )?;
        c(
            self.p_d.is_finite() && (0.0..=1.0).contains(&self.p_d),
            &format!("p_d = {} outside [0, 1]", self.p_d),
        )?;
        c(
            self.error_correction.is_finite() && self.error_correction >= 1.0,
            &format!("f = {} must be >= 1", self.error_correction),
        )?;
        c(!self.loss_grid_db.is_empty(), "loss_grid_db is empty")?;
        c(
            self.loss_grid_db.iter().all(|&l| l.is_finite() && l >= 0.0),
            "loss grid values must be >= 0 dB",
        )?;
        c(
            self.solver_tol.is_finite() && self.solver_tol > 0.0 && self.solver_tol <= 1e-2,
            &format!("solver_tol = {} outside (0, 1e-2]", self.solver_tol),
        )?;
        Ok(())
    }
}
