use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, ExperimentConfig, ReferenceMode};
use super::{write_json, write_rows, OutputFormat, RowSink};
use crate::corruption::make_gmm_dataset;
use crate::data::{Dataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::feature_map::apply_feature_map;
use crate::io::read_dataset;
use crate::metrics::{
    corrupt_fraction, fit_loglog_slope, frechet_gaussian, moment_discrepancy, sample_moments,
    MetricsReport,
};
use crate::robust_mean::{empirical_mean, euclidean, weiszfeld_gm, GmSolverConfig};
use crate::selectors::SelectionResult;

/// Clean-distribution summary every selection is scored against.
#[derive(Debug, Clone)]
pub struct Reference {
    /// Mean in the input space; `delta_sq` is measured against it.
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// Mean of the clean rows in feature space; `mmd_sq` uses it.
    pub feature_mean: Vec<f64>,
}

impl Reference {
    /// Sample moments of the rows not marked corrupt (all rows without a
    /// mask).
    pub fn from_clean_rows(data: &Dataset, phi: &EmbeddingMatrix) -> Result<Self> {
        let clean_rows = data.clean_indices();
        if clean_rows.is_empty() {
            return Err(Error::Shape("no clean rows to use as reference".into()));
        }
        let (mean, cov) = sample_moments(&data.embeddings.select_rows(&clean_rows)?);
        Ok(Self {
            mean,
            cov,
            feature_mean: empirical_mean(&phi.select_rows(&clean_rows)?),
        })
    }

    /// Population moments of the generator's clean component when `mode`
    /// asks for them and the source has one, sample moments otherwise.
    pub fn build(
        data: &Dataset,
        phi: &EmbeddingMatrix,
        source: &DatasetSource,
        psi: f64,
        mode: ReferenceMode,
    ) -> Result<Self> {
        let mut r = Self::from_clean_rows(data, phi)?;
        if mode == ReferenceMode::Population {
            if let Some((_, spec)) = source.mixture_spec(psi)? {
                if let Some(g) = spec.clean_component() {
                    r.cov = g.cov_matrix()?;
                    r.mean = g.mean.clone();
                }
            }
        }
        Ok(r)
    }
}

/// Scores one selection. Without a corruption mask every row counts as
/// clean.
pub fn evaluate_selection(
    x: &EmbeddingMatrix,
    phi: &EmbeddingMatrix,
    selection: &SelectionResult,
    mask: Option<&[bool]>,
    reference: &Reference,
) -> Result<MetricsReport> {
    let xs = x.select_rows(&selection.indices)?;
    let phis = phi.select_rows(&selection.indices)?;
    let delta_sq = moment_discrepancy(&empirical_mean(&xs), &reference.mean)?;
    let mmd_sq = moment_discrepancy(&empirical_mean(&phis), &reference.feature_mean)?;
    let frechet = if xs.n() >= 2 {
        let (mu, cov) = sample_moments(&xs);
        Some(frechet_gaussian(
            &mu,
            &cov,
            &reference.mean,
            &reference.cov,
        )?)
    } else {
        None
    };
    let corrupt_fraction = match mask {
        Some(m) => corrupt_fraction(selection, Some(m))?,
        None => 0.0,
    };
    Ok(MetricsReport {
        delta_sq,
        mmd_sq,
        frechet,
        corrupt_fraction,
        slope: None,
        wall_times: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub selector: String,
    pub psi: f64,
    pub k: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct CsvRecord<'a> {
    selector: &'a str,
    psi: f64,
    k: usize,
    seed: u64,
    delta_sq: f64,
    mmd_sq: f64,
    corrupt_fraction: f64,
}

impl<'a> From<&'a RunRecord> for CsvRecord<'a> {
    fn from(r: &'a RunRecord) -> Self {
        Self {
            selector: &r.selector,
            psi: r.psi,
            k: r.k,
            seed: r.seed,
            delta_sq: r.metrics.delta_sq,
            mmd_sq: r.metrics.mmd_sq,
            corrupt_fraction: r.metrics.corrupt_fraction,
        }
    }
}

/// Log-log slope of the seed-averaged `sqrt(delta_sq)` against `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub selector: String,
    pub psi: f64,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceOutput {
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub slopes: Vec<SlopeRecord>,
}

impl ConvergenceOutput {
    pub fn slope(&self, selector: &str, psi: f64) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.selector == selector && s.psi == psi)
            .and_then(|s| s.slope)
    }
}

fn load_cell(cfg: &ExperimentConfig, psi: f64, seed: u64) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::File { path } => read_dataset(path),
        source => {
            let (n, spec) = source.mixture_spec(psi)?.expect("generator source");
            make_gmm_dataset(n, &spec, seed)
        }
    }
}

/// Runs every selector at every `k` for every `(psi, seed)` cell.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceOutput> {
    run_convergence_with(cfg, |_| Ok(()))
}

/// [`run_convergence`], handing each finished `(psi, seed)` cell to
/// `on_cell` before moving on. Slopes are filled in only after the sweep,
/// so records seen by `on_cell` carry `slope: None`.
pub fn run_convergence_with(
    cfg: &ExperimentConfig,
    mut on_cell: impl FnMut(&[RunRecord]) -> Result<()>,
) -> Result<ConvergenceOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let psis: Vec<f64> = match cfg.dataset {
        DatasetSource::File { .. } => vec![0.0],
        _ => cfg.psi_grid.clone(),
    };
    let labels = selector_labels(cfg);
    let mut records = Vec::new();
    for &psi in &psis {
        for &seed in &cfg.seeds {
            let data = load_cell(cfg, psi, seed)?;
            let phi = apply_feature_map(&cfg.feature_map, &data.embeddings)?;
            let reference = Reference::build(&data, &phi, &cfg.dataset, psi, cfg.reference)?;
            let mask = data.corrupt_mask.as_deref();
            let jobs: Vec<(usize, usize)> = (0..cfg.selectors.len())
                .flat_map(|s| cfg.k_grid.iter().map(move |&k| (s, k)))
                .collect();
            let cell: Vec<RunRecord> = jobs
                .into_par_iter()
                .map(|(s, k)| {
                    let spec = &cfg.selectors[s];
                    let sel_cfg = spec.selection_config(k, seed);
                    let t0 = Instant::now();
                    let sel = spec.name.select(&phi, &sel_cfg)?;
                    let t_select = t0.elapsed().as_secs_f64();
                    let t1 = Instant::now();
                    let mut metrics =
                        evaluate_selection(&data.embeddings, &phi, &sel, mask, &reference)?;
                    metrics.wall_times.insert("select".into(), t_select);
                    metrics
                        .wall_times
                        .insert("metrics".into(), t1.elapsed().as_secs_f64());
                    Ok(RunRecord {
                        config_hash: hash.clone(),
                        selector: labels[s].clone(),
                        psi,
                        k,
                        seed,
                        metrics,
                        indices: cfg.keep_indices.then_some(sel.indices),
                    })
                })
                .collect::<Result<_>>()?;
            on_cell(&cell)?;
            records.extend(cell);
        }
    }

    let mut ks = cfg.k_grid.clone();
    ks.sort_unstable();
    ks.dedup();
    let fit_ks: Vec<usize> = ks.iter().copied().skip(cfg.drop_smallest_k).collect();
    let mut slopes = Vec::new();
    for label in &labels {
        for &psi in &psis {
            let avg: Vec<f64> = fit_ks
                .iter()
                .map(|&k| {
                    let vals: Vec<f64> = records
                        .iter()
                        .filter(|r| &r.selector == label && r.psi == psi && r.k == k)
                        .map(|r| r.metrics.delta_sq.sqrt())
                        .collect();
                    vals.iter().sum::<f64>() / vals.len() as f64
                })
                .collect();
            let slope = fit_loglog_slope(&fit_ks, &avg).ok();
            for r in records
                .iter_mut()
                .filter(|r| &r.selector == label && r.psi == psi)
            {
                r.metrics.slope = slope;
            }
            slopes.push(SlopeRecord {
                selector: label.clone(),
                psi,
                slope,
            });
        }
    }
    Ok(ConvergenceOutput {
        config_hash: hash,
        records,
        slopes,
    })
}

/// Distinct table labels: the selector name, suffixed with its batch count
/// and target mode when several entries share a name.
fn selector_labels(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.selectors
        .iter()
        .map(|s| {
            let shared = cfg.selectors.iter().filter(|o| o.name == s.name).count() > 1;
            if shared {
                format!("{}-b{}-{:?}", s.label(), s.batches, s.target_mode).to_lowercase()
            } else {
                s.label()
            }
        })
        .collect()
}

/// Runs the sweep and writes `records.{csv,jsonl}` (flushed after every
/// cell), `slopes.{csv,jsonl}` and `metadata.json` into `dir`.
pub fn run_convergence_to(
    dir: &Path,
    cfg: &ExperimentConfig,
    format: OutputFormat,
) -> Result<ConvergenceOutput> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = format.extension();
    let mut sink = RowSink::create(&dir.join(format!("records.{ext}")), format)?;
    let out = run_convergence_with(cfg, |cell| {
        for r in cell {
            match format {
                OutputFormat::Csv => sink.push(&CsvRecord::from(r))?,
                OutputFormat::Json => sink.push(r)?,
            }
        }
        sink.flush()
    })?;
    write_rows(&dir.join(format!("slopes.{ext}")), &out.slopes, format)?;
    write_json(
        &dir.join("metadata.json"),
        &serde_json::json!({
            "config_hash": out.config_hash,
            "config": cfg,
            "reference": cfg.reference,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "records": out.records.len(),
        }),
    )?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRecord {
    pub config_hash: String,
    pub psi: f64,
    pub seed: u64,
    /// `||mean(X) - clean mean||`.
    pub mean_error: f64,
    /// `||GM(X) - clean mean||`.
    pub gm_error: f64,
    pub gm_iterations: usize,
}

/// Estimation error of the empirical mean and of the geometric median
/// against the clean-component mean, across `psi_grid x seeds`.
pub fn run_breakdown(cfg: &ExperimentConfig) -> Result<Vec<BreakdownRecord>> {
    cfg.validate()?;
    if matches!(cfg.dataset, DatasetSource::File { .. }) {
        return Err(Error::config("breakdown needs a generator dataset source"));
    }
    let hash = cfg.hash();
    let mut out = Vec::with_capacity(cfg.psi_grid.len() * cfg.seeds.len());
    for &psi in &cfg.psi_grid {
        let (n, spec) = cfg.dataset.mixture_spec(psi)?.expect("generator source");
        let clean_mean = &spec.clean_component().expect("mixture").mean;
        for &seed in &cfg.seeds {
            let data = make_gmm_dataset(n, &spec, seed)?;
            let gm = weiszfeld_gm(&data.embeddings, &GmSolverConfig { seed, ..cfg.gm })?;
            out.push(BreakdownRecord {
                config_hash: hash.clone(),
                psi,
                seed,
                mean_error: euclidean(&empirical_mean(&data.embeddings), clean_mean),
                gm_error: euclidean(&gm.point, clean_mean),
                gm_iterations: gm.iterations,
            });
        }
    }
    Ok(out)
}
