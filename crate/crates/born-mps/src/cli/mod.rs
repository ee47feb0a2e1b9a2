//! Experiment orchestration: resolved configuration, the flat
//! `key = value` config-file format, and exit-code classification.
//!
//! Precedence: built-in defaults < config file (`--config PATH`) < CLI
//! flags. All randomness is seeded explicitly; nothing is drawn from the
//! environment.

pub mod commands;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::mps::MeasurementBasis;
use crate::spin_model::Boundary;
use crate::training::TrainConfig;

/// Exit codes: 0 success, 2 usage/config error, 3 numerical failure,
/// 4 I/O error.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<crate::spin_model::SpinModelError> for CliError {
    fn from(e: crate::spin_model::SpinModelError) -> Self {
        use crate::spin_model::SpinModelError::*;
        match &e {
            ChainTooShort(_) | ChainTooLarge { .. } | LengthMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            NoConvergence { .. } | Linalg(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<crate::mps::MpsError> for CliError {
    fn from(e: crate::mps::MpsError) -> Self {
        use crate::mps::MpsError::*;
        match &e {
            TooFewSites(_)
            | ZeroBondDim
            | TooLargeForDense { .. }
            | SiteOutOfRange { .. }
            | DuplicateSite
            | BadBit
            | ConfigLengthMismatch { .. }
            | SiteCountMismatch { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<crate::sampler::SamplerError> for CliError {
    fn from(e: crate::sampler::SamplerError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::training::TrainingError> for CliError {
    fn from(e: crate::training::TrainingError) -> Self {
        use crate::training::TrainingError::*;
        match &e {
            InvalidConfig(_) | SiteCountMismatch { .. } | EmptyDataset | EmptyBatch => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<crate::analysis::AnalysisError> for CliError {
    fn from(e: crate::analysis::AnalysisError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::io::IoFormatError> for CliError {
    fn from(e: crate::io::IoFormatError) -> Self {
        use crate::io::IoFormatError::*;
        match &e {
            Io(_) => CliError::Io(e.to_string()),
            BadMagic { .. } | UnsupportedVersion(_) | Corrupt(_) => CliError::Io(e.to_string()),
            SpinModel(inner) => CliError::from_spin_ref(inner),
            Mps(_) | Sampler(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl CliError {
    fn from_spin_ref(e: &crate::spin_model::SpinModelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Named phase-diagram study points (γ, h).
pub fn preset_point(name: &str) -> Option<(f64, f64)> {
    match name {
        "critical" => Some((1.0, 1.0)),
        "ordered" => Some((1.5, 0.5)),
        "disordered" => Some((2.0, 2.0)),
        "oscillatory" => Some((0.5, 0.5)),
        _ => None,
    }
}

/// Fully resolved experiment configuration; echoed into every JSON
/// output so a run can be reproduced from its artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub h: f64,
    pub coupling: f64,
    pub sites: usize,
    pub data_boundary: Boundary,
    pub model_boundary: Boundary,
    pub bond_dim: usize,
    pub samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed_state: u64,
    pub seed_sample: u64,
    pub seed_init: u64,
    pub seed_shuffle: u64,
    /// Bases evaluated for histograms (z is always included).
    pub bases: Vec<String>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub artifact_version: String,
    /// True once learning_rate was assigned explicitly (file or flag).
    #[serde(skip)]
    pub lr_explicit: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            gamma: 1.0,
            h: 1.0,
            coupling: 1.0,
            sites: 13,
            data_boundary: Boundary::Open,
            model_boundary: Boundary::Open,
            bond_dim: 4,
            samples: 30_000,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            seed_state: 1,
            seed_sample: 42,
            seed_init: 11,
            seed_shuffle: 11,
            bases: vec!["z".into(), "x".into(), "y".into()],
            out_dir: PathBuf::from("out"),
            threads: None,
            artifact_version: ARTIFACT_VERSION.to_string(),
            lr_explicit: false,
        }
    }
}

impl ExperimentConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            shuffle_seed: self.seed_shuffle,
            ..TrainConfig::default()
        }
    }

    pub fn model_parameters(
        &self,
        boundary: Boundary,
    ) -> CliResult<crate::spin_model::ModelParameters> {
        crate::spin_model::ModelParameters::new(
            self.coupling,
            self.gamma,
            self.h,
            self.sites,
            boundary,
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn parsed_bases(&self) -> CliResult<Vec<MeasurementBasis>> {
        let mut bases = vec![MeasurementBasis::Z];
        for b in &self.bases {
            let parsed: MeasurementBasis = b.parse().map_err(|e: String| CliError::Usage(e))?;
            if !bases.contains(&parsed) {
                bases.push(parsed);
            }
        }
        Ok(bases)
    }

    /// Apply one `key = value` assignment (config-file line or flag).
    pub fn assign(&mut self, key: &str, value: &str) -> CliResult<()> {
        let bad = |e: String| CliError::Usage(e);
        let key = key.replace('-', "_");
        match key.as_str() {
            "preset" => {
                let (gamma, h) = preset_point(value).ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown preset `{value}` (critical|ordered|disordered|oscillatory)"
                    ))
                })?;
                self.gamma = gamma;
                self.h = h;
            }
            "gamma" => {
                self.gamma = value
                    .parse()
                    .map_err(|_| bad(format!("bad gamma `{value}`")))?
            }
            "h" => self.h = value.parse().map_err(|_| bad(format!("bad h `{value}`")))?,
            "coupling" => {
                self.coupling = value
                    .parse()
                    .map_err(|_| bad(format!("bad coupling `{value}`")))?
            }
            "sites" => {
                self.sites = value
                    .parse()
                    .map_err(|_| bad(format!("bad sites `{value}`")))?
            }
            "data_boundary" => {
                self.data_boundary = value.parse().map_err(bad)?;
            }
            "model_boundary" => {
                self.model_boundary = value.parse().map_err(bad)?;
            }
            "bond_dim" => {
                self.bond_dim = value
                    .parse()
                    .map_err(|_| bad(format!("bad bond_dim `{value}`")))?
            }
            "samples" => {
                self.samples = value
                    .parse()
                    .map_err(|_| bad(format!("bad samples `{value}`")))?
            }
            "epochs" => {
                self.epochs = value
                    .parse()
                    .map_err(|_| bad(format!("bad epochs `{value}`")))?
            }
            "batch_size" => {
                self.batch_size = value
                    .parse()
                    .map_err(|_| bad(format!("bad batch_size `{value}`")))?
            }
            "learning_rate" => {
                self.learning_rate = value
                    .parse()
                    .map_err(|_| bad(format!("bad learning_rate `{value}`")))?;
                self.lr_explicit = true;
            }
            "seed_state" => {
                self.seed_state = value
                    .parse()
                    .map_err(|_| bad(format!("bad seed `{value}`")))?
            }
            "seed_sample" => {
                self.seed_sample = value
                    .parse()
                    .map_err(|_| bad(format!("bad seed `{value}`")))?
            }
            "seed_init" => {
                self.seed_init = value
                    .parse()
                    .map_err(|_| bad(format!("bad seed `{value}`")))?
            }
            "seed_shuffle" => {
                self.seed_shuffle = value
                    .parse()
                    .map_err(|_| bad(format!("bad seed `{value}`")))?
            }
            "basis" => {
                self.bases = value.split(',').map(|s| s.trim().to_string()).collect();
            }
            "out" => self.out_dir = PathBuf::from(value),
            "threads" => {
                self.threads = Some(
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad threads `{value}`")))?,
                )
            }
            other => {
                return Err(CliError::Usage(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    /// Load `key = value` lines with `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.assign(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Stable map used for the config echo inside reports.
    pub fn echo(&self) -> BTreeMap<String, serde_json::Value> {
        let json = serde_json::to_value(self).expect("config serializes");
        match json {
            serde_json::Value::Object(map) => map.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_points_match_phase_diagram() {
        assert_eq!(preset_point("critical"), Some((1.0, 1.0)));
        assert_eq!(preset_point("ordered"), Some((1.5, 0.5)));
        assert_eq!(preset_point("disordered"), Some((2.0, 2.0)));
        assert_eq!(preset_point("oscillatory"), Some((0.5, 0.5)));
        assert_eq!(preset_point("bogus"), None);
    }

    #[test]
    fn config_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(
            &path,
            "# experiment\npreset = ordered\nsites = 9\ndata-boundary = periodic\nsamples = 500\n",
        )
        .unwrap();
        let mut config = ExperimentConfig::default();
        config.apply_file(&path).unwrap();
        assert_eq!(config.gamma, 1.5);
        assert_eq!(config.h, 0.5);
        assert_eq!(config.sites, 9);
        assert_eq!(config.data_boundary, Boundary::Periodic);
        // flag overrides file
        config.assign("sites", "7").unwrap();
        assert_eq!(config.sites, 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut config = ExperimentConfig::default();
        assert!(matches!(
            config.assign("bogus_key", "1"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            config.assign("preset", "nope"),
            Err(CliError::Usage(_))
        ));
    }
}
