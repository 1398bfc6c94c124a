use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corruption::{CorruptionKind, CorruptionSpec, Gaussian};
use crate::error::{Error, Result};
use crate::feature_map::FeatureMapSpec;
use crate::robust_mean::GmSolverConfig;
use crate::selectors::{SelectionConfig, SelectorKind, TargetMode};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_K_GRID: [usize; 6] = [8, 16, 32, 64, 128, 256];
pub const DEFAULT_PSI_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.45];
pub const DEFAULT_SEED_COUNT: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Named mixture preset, regenerated at every `psi`.
    Preset { name: String, n: usize },
    /// Custom clean/adversary mixture, regenerated at every `psi`.
    Mixture {
        clean: Gaussian,
        adversary: Gaussian,
        n: usize,
    },
    /// Precomputed embeddings. The `psi` grid is ignored; the file's own
    /// corruption mask, if any, is used for evaluation.
    File { path: PathBuf },
}

impl DatasetSource {
    pub fn mixture_spec(&self, psi: f64) -> Result<Option<(usize, CorruptionSpec)>> {
        match self {
            DatasetSource::Preset { name, n } => Ok(Some((*n, CorruptionSpec::preset(name, psi)?))),
            DatasetSource::Mixture {
                clean,
                adversary,
                n,
            } => {
                let spec = CorruptionSpec {
                    psi,
                    kind: CorruptionKind::GaussianMixture {
                        clean: clean.clone(),
                        adversary: adversary.clone(),
                    },
                };
                spec.validate()?;
                Ok(Some((*n, spec)))
            }
            DatasetSource::File { .. } => Ok(None),
        }
    }
}

/// What `delta_sq` measures against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// The generator's clean-component mean and covariance.
    #[default]
    Population,
    /// Sample moments of the rows not marked corrupt.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSpec {
    pub name: SelectorKind,
    #[serde(default = "one")]
    pub batches: usize,
    #[serde(default)]
    pub target_mode: TargetMode,
    /// Solver settings; `gm.seed` is replaced by the run seed.
    #[serde(default)]
    pub gm: GmSolverConfig,
}

fn one() -> usize {
    1
}

impl SelectorSpec {
    pub fn new(name: SelectorKind) -> Self {
        Self {
            name,
            batches: 1,
            target_mode: TargetMode::GmGlobal,
            gm: GmSolverConfig::default(),
        }
    }

    pub fn selection_config(&self, k: usize, seed: u64) -> SelectionConfig {
        SelectionConfig {
            k,
            batches: self.batches.min(k),
            seed,
            gm: GmSolverConfig { seed, ..self.gm },
            target_mode: self.target_mode,
            execution: Default::default(),
        }
    }

    /// Short label used in output tables.
    pub fn label(&self) -> String {
        self.name.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub feature_map: FeatureMapSpec,
    pub selectors: Vec<SelectorSpec>,
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_psi_grid")]
    pub psi_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub reference: ReferenceMode,
    /// Solver used by the breakdown sweep.
    #[serde(default)]
    pub gm: GmSolverConfig,
    /// Smallest k values excluded from slope fits.
    #[serde(default)]
    pub drop_smallest_k: usize,
    /// Keep selected indices in every record.
    #[serde(default)]
    pub keep_indices: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_k_grid() -> Vec<usize> {
    DEFAULT_K_GRID.to_vec()
}

fn default_psi_grid() -> Vec<f64> {
    DEFAULT_PSI_GRID.to_vec()
}

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_SEED_COUNT).collect()
}

impl ExperimentConfig {
    /// Defaults on the given source with the given selectors.
    pub fn new(dataset: DatasetSource, selectors: Vec<SelectorSpec>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dataset,
            feature_map: FeatureMapSpec::Identity,
            selectors,
            k_grid: default_k_grid(),
            psi_grid: default_psi_grid(),
            seeds: default_seeds(),
            reference: ReferenceMode::Population,
            gm: GmSolverConfig::default(),
            drop_smallest_k: 0,
            keep_indices: false,
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.selectors.is_empty() {
            return Err(Error::config("at least one selector is required"));
        }
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return Err(Error::config("k_grid must be non-empty with k >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.psi_grid.is_empty() {
            return Err(Error::config("psi_grid must be non-empty"));
        }
        for &psi in &self.psi_grid {
            if !(0.0..0.5).contains(&psi) {
                return Err(Error::config(format!("psi {psi} outside [0, 0.5)")));
            }
        }
        for s in &self.selectors {
            if s.batches == 0 {
                return Err(Error::config("batches must be >= 1"));
            }
            s.gm.validate()?;
        }
        self.feature_map.validate()?;
        self.gm.validate()
    }

    /// Hex SHA-256 prefix of the canonical JSON form, ignoring
    /// `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let json = serde_json::to_string(&canonical).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig::new(
            DatasetSource::Preset {
                name: "paper-2d-mixture".into(),
                n: 1000,
            },
            vec![SelectorSpec::new(SelectorKind::GmMatching)],
        )
    }

    #[test]
    fn defaults_fill_in() {
        let json = r#"{
            "schema_version": 1,
            "dataset": {"source": "preset", "name": "paper-2d-mixture", "n": 1000},
            "selectors": [{"name": "gm-matching"}, {"name": "random"}]
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.k_grid, DEFAULT_K_GRID.to_vec());
        assert_eq!(cfg.psi_grid, DEFAULT_PSI_GRID.to_vec());
        assert_eq!(cfg.seeds.len(), 10);
        assert_eq!(cfg.reference, ReferenceMode::Population);
        assert_eq!(cfg.selectors[1].name, SelectorKind::Random);
        assert_eq!(cfg.hash(), sample_with_random().hash());
    }

    fn sample_with_random() -> ExperimentConfig {
        let mut c = sample();
        c.selectors.push(SelectorSpec::new(SelectorKind::Random));
        c
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = sample();
        let mut b = sample();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![1];
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn validation_errors() {
        let mut c = sample();
        c.selectors.clear();
        assert!(c.validate().is_err());
        let mut c = sample();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = sample();
        c.psi_grid = vec![0.5];
        assert!(c.validate().is_err());
        let mut c = sample();
        c.schema_version = 2;
        assert!(c.validate().is_err());
    }
}
