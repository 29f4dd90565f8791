//! Study configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::lla::LlaConfig;
use crate::network::{parse_network, LogRates};

use super::systems::{builtin_system, BuiltinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Comparison,
    Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Lla,
    Em,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Lla => "lla",
            Estimator::Em => "em",
        }
    }
}

/// A reaction network given by file, with its reference rates and start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSystem {
    pub name: String,
    pub network_file: PathBuf,
    pub beta_true: Vec<f64>,
    pub y0: Vec<f64>,
}

/// One timing scenario: every listed system at every `(N, jump)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingScenario {
    pub name: String,
    pub systems: Vec<String>,
    pub n_intervals: Vec<usize>,
    pub jumps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub study: String,
    pub kind: StudyKind,
    /// Built-in system name, or the name of `custom`.
    pub system: String,
    pub custom: Option<CustomSystem>,
    pub jumps: Vec<usize>,
    pub n_intervals: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    /// Fresh datasets per KL estimate.
    pub kl_reps: usize,
    /// Write measured wall time; `false` writes zeros so reruns are
    /// byte-identical.
    pub record_timing: bool,
    /// EM iterations per timed fit.
    pub timing_iterations: usize,
    pub scenarios: Vec<TimingScenario>,
    pub em: EmConfig,
    pub lla: LlaConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            study: "study".into(),
            kind: StudyKind::Comparison,
            system: "cell-diff".into(),
            custom: None,
            jumps: vec![10, 15, 20, 25, 30],
            n_intervals: vec![5, 50],
            replicates: 100,
            seed: 1,
            estimators: vec![Estimator::Lla, Estimator::Em],
            kl_reps: 20,
            record_timing: true,
            timing_iterations: 10,
            scenarios: Vec::new(),
            em: EmConfig::default(),
            lla: LlaConfig::default(),
        }
    }
}

/// One `(system, N, jump)` cell of a study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellPlan {
    pub scenario: String,
    pub system: String,
    pub n_intervals: usize,
    pub jump: usize,
    pub replicates: usize,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; a relative `custom.network_file` is resolved
    /// against the config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = StudyConfig::from_toml(&text)?;
        if let Some(custom) = cfg.custom.as_mut() {
            if custom.network_file.is_relative() {
                if let Some(dir) = path.parent() {
                    custom.network_file = dir.join(&custom.network_file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        let check = |jumps: &[usize], ns: &[usize], what: &str| -> Result<()> {
            if jumps.is_empty() || ns.is_empty() {
                return Err(Error::Config(format!("{what}: jumps and n_intervals must be non-empty")));
            }
            if let Some(j) = jumps.iter().find(|j| **j == 0) {
                return Err(Error::Config(format!("{what}: invalid jump {j}, jumps must be >= 1")));
            }
            if ns.contains(&0) {
                return Err(Error::Config(format!("{what}: n_intervals entries must be >= 1")));
            }
            Ok(())
        };
        match self.kind {
            StudyKind::Comparison => {
                check(&self.jumps, &self.n_intervals, "comparison")?;
                if self.estimators.is_empty() {
                    return Err(Error::Config("estimators must be non-empty".into()));
                }
                if self.kl_reps == 0 {
                    return Err(Error::Config("kl_reps must be at least 1".into()));
                }
            }
            StudyKind::Timing => {
                if self.scenarios.is_empty() {
                    return Err(Error::Config("timing study needs at least one scenario".into()));
                }
                if self.timing_iterations == 0 {
                    return Err(Error::Config("timing_iterations must be at least 1".into()));
                }
                for s in &self.scenarios {
                    check(&s.jumps, &s.n_intervals, &s.name)?;
                    if s.systems.is_empty() {
                        return Err(Error::Config(format!("{}: systems must be non-empty", s.name)));
                    }
                }
            }
        }
        self.em.validate()?;
        self.lla.validate()
    }

    /// Resolve a system name against `custom` and the built-ins.
    pub fn resolve_system(&self, name: &str) -> Result<BuiltinSystem> {
        if let Some(c) = &self.custom {
            if c.name == name {
                let text = std::fs::read_to_string(&c.network_file).map_err(|e| {
                    Error::Config(format!("cannot read {}: {e}", c.network_file.display()))
                })?;
                let network = parse_network(&text)?;
                if c.y0.len() != network.n_species() || c.beta_true.len() != network.n_params() {
                    return Err(Error::Config(format!(
                        "custom system '{name}': y0 needs {} entries and beta_true {}",
                        network.n_species(),
                        network.n_params()
                    )));
                }
                return Ok(BuiltinSystem {
                    name: "custom",
                    network,
                    beta_true: LogRates::new(c.beta_true.clone())?,
                    y0: c.y0.clone(),
                });
            }
        }
        builtin_system(name)
    }

    /// Cells in execution order.
    pub fn plan(&self) -> Vec<CellPlan> {
        match self.kind {
            StudyKind::Comparison => {
                let mut cells = Vec::new();
                for &n in &self.n_intervals {
                    for &jump in &self.jumps {
                        cells.push(CellPlan {
                            scenario: self.study.clone(),
                            system: self.system.clone(),
                            n_intervals: n,
                            jump,
                            replicates: self.replicates,
                        });
                    }
                }
                cells
            }
            StudyKind::Timing => {
                let mut cells = Vec::new();
                for s in &self.scenarios {
                    for sys in &s.systems {
                        for &n in &s.n_intervals {
                            for &jump in &s.jumps {
                                cells.push(CellPlan {
                                    scenario: s.name.clone(),
                                    system: sys.clone(),
                                    n_intervals: n,
                                    jump,
                                    replicates: self.replicates,
                                });
                            }
                        }
                    }
                }
                cells
            }
        }
    }
}
