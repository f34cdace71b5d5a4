//! Run configuration: a TOML file, `--set section.key=value` overrides and
//! typed flag overrides, validated before any computation starts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use semiperc_core::amp::{AmpConfig, ChannelEquations, ProtocolConfig, UpdateOrder};
use semiperc_core::replica::{SolverConfig, SpinodalScanConfig};
use semiperc_core::Integrator;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    PhaseDiagram,
    AmpEnsemble,
    Spinodal,
    LearningCurve,
    Datagen,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PhaseDiagram => "phase-diagram",
            Self::AmpEnsemble => "amp-ensemble",
            Self::Spinodal => "spinodal",
            Self::LearningCurve => "learning-curve",
            Self::Datagen => "datagen",
        }
    }

    fn section(self) -> &'static str {
        match self {
            Self::PhaseDiagram => "phase_diagram",
            Self::AmpEnsemble => "amp_ensemble",
            Self::Spinodal => "spinodal",
            Self::LearningCurve => "learning_curve",
            Self::Datagen => "datagen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub numerics: Numerics,
    pub phase_diagram: PhaseDiagram,
    pub amp_ensemble: AmpEnsemble,
    pub spinodal: Spinodal,
    pub learning_curve: LearningCurve,
    pub datagen: Datagen,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 1,
            out: None,
            numerics: Numerics::default(),
            phase_diagram: PhaseDiagram::default(),
            amp_ensemble: AmpEnsemble::default(),
            spinodal: Spinodal::default(),
            learning_curve: LearningCurve::default(),
            datagen: Datagen::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Gauss-Legendre order per panel of the clustered quadrature.
    pub quadrature_order: usize,
    pub solver_damping: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// Uniform points of the root-scan grid in `q`.
    pub root_grid: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { quadrature_order: 20, solver_damping: 0.5, solver_tol: 1e-10, solver_max_iter: 5000, root_grid: 1500 }
    }
}

impl Numerics {
    pub fn integrator(&self) -> Integrator {
        Integrator::clustered(self.quadrature_order)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            damping: self.solver_damping,
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
            ..SolverConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(2..=200).contains(&self.quadrature_order) {
            return Err(HarnessError::config("numerics.quadrature_order must lie in [2, 200]"));
        }
        if self.root_grid < 100 {
            return Err(HarnessError::config("numerics.root_grid must be at least 100"));
        }
        self.solver().validate().map_err(|e| HarnessError::config(format!("numerics: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiagram {
    pub h: Vec<f64>,
    /// Data margin; the learner margin `h` is used when absent.
    pub g: Option<f64>,
    pub alpha: Vec<f64>,
    pub beta_min: f64,
    /// Upper end of the sweep; when absent it is `beta_span` times the
    /// largest spinodal edge, or `beta_fallback` without a window.
    pub beta_max: Option<f64>,
    pub beta_span: f64,
    pub beta_fallback: f64,
    pub beta_points: usize,
    /// Also emit every root of the single equation at each `beta`.
    pub roots: bool,
}

impl Default for PhaseDiagram {
    fn default() -> Self {
        Self {
            h: vec![0.1, 0.05, 0.03, 0.02, 0.01],
            g: None,
            alpha: vec![1.0, 10.0],
            beta_min: 1.0,
            beta_max: None,
            beta_span: 2.0,
            beta_fallback: 1000.0,
            beta_points: 120,
            roots: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equations {
    Verbatim,
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    Synchronous,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmpEnsemble {
    pub n: usize,
    pub g: f64,
    pub h: f64,
    pub beta: Vec<f64>,
    /// Explicit ascending schedule starting at 0; overrides the step grid.
    pub alpha_schedule: Option<Vec<f64>>,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub n_samples: usize,
    /// Sweeps per fine-tuning stage.
    pub max_iter: usize,
    pub pretrain_max_iter: usize,
    pub rel_tol: f64,
    pub damping: f64,
    pub divergence_bound: f64,
    pub init_variance: f64,
    pub equations: Equations,
    pub order: Order,
    pub label_in_field: bool,
    /// Iteration log of the first sample of the first `beta`.
    pub trajectory: Option<PathBuf>,
}

impl Default for AmpEnsemble {
    fn default() -> Self {
        Self {
            n: 100,
            g: 0.05,
            h: 0.05,
            beta: vec![100.0, 200.0],
            alpha_schedule: None,
            alpha_max: 8.0,
            alpha_step: 0.25,
            n_samples: 1000,
            max_iter: 20,
            pretrain_max_iter: 200,
            rel_tol: 1e-6,
            damping: 1.0,
            divergence_bound: 1e8,
            init_variance: 1e-2,
            equations: Equations::Consistent,
            order: Order::Sequential,
            label_in_field: true,
            trajectory: None,
        }
    }
}

impl AmpEnsemble {
    pub fn amp_config(&self) -> AmpConfig {
        AmpConfig {
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            damping: self.damping,
            divergence_bound: self.divergence_bound,
            equations: match self.equations {
                Equations::Verbatim => ChannelEquations::Verbatim,
                Equations::Consistent => ChannelEquations::Consistent,
            },
            order: match self.order {
                Order::Synchronous => UpdateOrder::Synchronous,
                Order::Sequential => UpdateOrder::Sequential,
            },
            label_in_field: self.label_in_field,
            record_trajectory: false,
        }
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            amp: self.amp_config(),
            pretrain_max_iter: self.pretrain_max_iter,
            init_variance: self.init_variance,
        }
    }

    pub fn schedule(&self) -> Vec<f64> {
        if let Some(s) = &self.alpha_schedule {
            return s.clone();
        }
        let steps = (self.alpha_max / self.alpha_step + 1e-9).floor() as usize;
        (0..=steps).map(|i| i as f64 * self.alpha_step).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(HarnessError::config("amp_ensemble.n must be at least 2"));
        }
        non_negative("amp_ensemble.g", self.g)?;
        non_negative("amp_ensemble.h", self.h)?;
        if self.beta.is_empty() {
            return Err(HarnessError::config("amp_ensemble.beta must not be empty"));
        }
        for &b in &self.beta {
            non_negative("amp_ensemble.beta", b)?;
        }
        if self.alpha_schedule.is_none() && !(self.alpha_step > 0.0 && self.alpha_max >= 0.0) {
            return Err(HarnessError::config("amp_ensemble.alpha_step must be positive and alpha_max non-negative"));
        }
        if self.n_samples == 0 {
            return Err(HarnessError::config("amp_ensemble.n_samples must be at least 1"));
        }
        if self.pretrain_max_iter == 0 {
            return Err(HarnessError::config("amp_ensemble.pretrain_max_iter must be at least 1"));
        }
        if !(self.init_variance >= 0.0 && self.init_variance.is_finite()) {
            return Err(HarnessError::config("amp_ensemble.init_variance must be finite and non-negative"));
        }
        semiperc_core::amp::validate_schedule(&self.schedule())
            .map_err(|e| HarnessError::config(format!("amp_ensemble: {e}")))?;
        self.amp_config().validate().map_err(|e| HarnessError::config(format!("amp_ensemble: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Spinodal {
    pub h: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta_min: f64,
    pub beta_max: f64,
    pub coarse_points: usize,
    pub tolerance_beta: f64,
}

impl Default for Spinodal {
    fn default() -> Self {
        Self {
            h: vec![0.1, 0.05, 0.03, 0.02, 0.01],
            alpha: vec![0.0, 1.0, 3.0, 5.0, 7.0, 10.0],
            beta_min: 1.0,
            beta_max: 1e5,
            coarse_points: 160,
            tolerance_beta: 1e-3,
        }
    }
}

impl Spinodal {
    pub fn scan_config(&self, numerics: &Numerics) -> SpinodalScanConfig {
        SpinodalScanConfig {
            grid_size: numerics.root_grid,
            coarse_points: self.coarse_points,
            tolerance_beta: self.tolerance_beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningCurve {
    pub h: f64,
    pub alpha: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub points: usize,
}

impl Default for LearningCurve {
    fn default() -> Self {
        Self { h: 0.05, alpha: 1.0, beta_min: 1e3, beta_max: 1e4, points: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Datagen {
    pub n: usize,
    pub g: f64,
    /// Labelled data `round(alpha N)`.
    pub alpha: f64,
    /// Unlabelled data `round(beta N)`.
    pub beta: f64,
}

impl Default for Datagen {
    fn default() -> Self {
        Self { n: 100, g: 0.05, alpha: 1.0, beta: 10.0 }
    }
}

impl Datagen {
    pub fn counts(&self) -> (usize, usize) {
        let n = self.n as f64;
        ((self.alpha * n).round() as usize, (self.beta * n).round() as usize)
    }
}

fn non_negative(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(HarnessError::config(format!("{name} must be finite and non-negative, got {x}")))
    }
}

fn positive_range(name: &str, lo: f64, hi: f64) -> Result<()> {
    if lo > 0.0 && hi > lo && hi.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::config(format!("{name} needs 0 < min < max, got [{lo}, {hi}]")))
    }
}

fn non_empty(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(HarnessError::config(format!("{name} must not be empty")));
    }
    xs.iter().try_for_each(|&x| non_negative(name, x))
}

impl Config {
    /// Reads `path` (defaults when absent), applies `section.key=value`
    /// overrides and deserializes.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| HarnessError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for s in sets {
            apply_set(&mut table, s)?;
        }
        Config::deserialize(toml::Value::Table(table)).map_err(|e| HarnessError::config(e.to_string()))
    }

    /// Validates the shared settings and the section used by `command`.
    pub fn validate(&self, command: Command) -> Result<()> {
        self.numerics.validate()?;
        match command {
            Command::PhaseDiagram => {
                let p = &self.phase_diagram;
                non_empty("phase_diagram.h", &p.h)?;
                non_empty("phase_diagram.alpha", &p.alpha)?;
                if let Some(g) = p.g {
                    non_negative("phase_diagram.g", g)?;
                }
                positive_range("phase_diagram.beta", p.beta_min, p.beta_max.unwrap_or(f64::MAX / 4.0))?;
                if !(p.beta_span > 1.0 && p.beta_fallback > p.beta_min) {
                    return Err(HarnessError::config("phase_diagram.beta_span must exceed 1 and beta_fallback beta_min"));
                }
                if p.beta_points < 2 {
                    return Err(HarnessError::config("phase_diagram.beta_points must be at least 2"));
                }
            }
            Command::AmpEnsemble => self.amp_ensemble.validate()?,
            Command::Spinodal => {
                let s = &self.spinodal;
                non_empty("spinodal.h", &s.h)?;
                non_empty("spinodal.alpha", &s.alpha)?;
                positive_range("spinodal.beta", s.beta_min, s.beta_max)?;
                if s.coarse_points < 3 || !(s.tolerance_beta > 0.0) {
                    return Err(HarnessError::config("spinodal needs coarse_points >= 3 and tolerance_beta > 0"));
                }
            }
            Command::LearningCurve => {
                let l = &self.learning_curve;
                non_negative("learning_curve.h", l.h)?;
                non_negative("learning_curve.alpha", l.alpha)?;
                positive_range("learning_curve.beta", l.beta_min, l.beta_max)?;
                if l.points < 2 {
                    return Err(HarnessError::config("learning_curve.points must be at least 2"));
                }
            }
            Command::Datagen => {
                let d = &self.datagen;
                if d.n < 2 {
                    return Err(HarnessError::config("datagen.n must be at least 2"));
                }
                non_negative("datagen.g", d.g)?;
                non_negative("datagen.alpha", d.alpha)?;
                non_negative("datagen.beta", d.beta)?;
            }
        }
        Ok(())
    }

    /// The settings that determine the output of `command`, as TOML.
    /// Worker count and output paths are excluded.
    pub fn canonical(&self, command: Command) -> Result<String> {
        let mut full = toml::Table::try_from(self).map_err(|e| HarnessError::config(e.to_string()))?;
        let mut view = toml::Table::new();
        view.insert("command".into(), toml::Value::String(command.as_str().into()));
        view.insert("seed".into(), toml::Value::Integer(i64::from_ne_bytes(self.seed.to_ne_bytes())));
        for key in ["numerics", command.section()] {
            if let Some(mut v) = full.remove(key) {
                if let toml::Value::Table(t) = &mut v {
                    t.remove("trajectory");
                }
                view.insert(key.into(), v);
            }
        }
        toml::to_string(&view).map_err(|e| HarnessError::config(e.to_string()))
    }

    /// Hex SHA-256 of [`Config::canonical`].
    pub fn hash(&self, command: Command) -> Result<String> {
        let digest = Sha256::digest(self.canonical(command)?.as_bytes());
        let mut s = String::with_capacity(64);
        for b in digest {
            let _ = write!(s, "{b:02x}");
        }
        Ok(s)
    }
}

/// Applies `a.b.c=value`; the value is parsed as TOML and taken as a bare
/// string when that fails.
fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::config(format!("override `{assignment}` is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::config(format!("override key `{key}` crosses a non-table value")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_command() {
        let c = Config::default();
        for cmd in [Command::PhaseDiagram, Command::AmpEnsemble, Command::Spinodal, Command::LearningCurve, Command::Datagen] {
            c.validate(cmd).unwrap();
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = Config::load(None, &["amp_ensemble.n_samples=7".into(), "amp_ensemble.equations=verbatim".into(), "seed=9".into()])
            .unwrap();
        assert_eq!(c.amp_ensemble.n_samples, 7);
        assert_eq!(c.amp_ensemble.equations, Equations::Verbatim);
        assert_eq!(c.seed, 9);
        assert!(Config::load(None, &["phase_diagram.nope=1".into()]).is_err());
        assert!(Config::load(None, &["broken".into()]).is_err());
    }

    #[test]
    fn hash_ignores_workers_and_outputs() {
        let a = Config::default();
        let mut b = a.clone();
        b.workers = 8;
        b.out = Some("x.csv".into());
        b.amp_ensemble.trajectory = Some("t.csv".into());
        assert_eq!(a.hash(Command::AmpEnsemble).unwrap(), b.hash(Command::AmpEnsemble).unwrap());
        b.datagen.n = 3;
        assert_eq!(a.hash(Command::AmpEnsemble).unwrap(), b.hash(Command::AmpEnsemble).unwrap());
        assert_ne!(a.hash(Command::AmpEnsemble).unwrap(), b.hash(Command::Datagen).unwrap());
        b.seed = 2;
        assert_ne!(a.hash(Command::AmpEnsemble).unwrap(), b.hash(Command::AmpEnsemble).unwrap());
        assert_eq!(a.hash(Command::Spinodal).unwrap().len(), 64);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_invalid_sections() {
        let mut c = Config::default();
        c.amp_ensemble.alpha_schedule = Some(vec![0.5, 1.0]);
        assert!(c.validate(Command::AmpEnsemble).is_err());
        c.spinodal.beta_min = 0.0;
        assert!(c.validate(Command::Spinodal).is_err());
        c.numerics.quadrature_order = 1;
        assert!(matches!(c.validate(Command::Datagen), Err(HarnessError::Config(_))));
    }

    #[test]
    fn schedule_from_step() {
        let a = AmpEnsemble { alpha_max: 1.0, alpha_step: 0.25, ..AmpEnsemble::default() };
        assert_eq!(a.schedule(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
