//! Subset selectors. Every selector sees only an [`EmbeddingMatrix`].
//!
//! GM Matching and kernel herding share one batched driver: rows are
//! shuffled by seed, split into `B` contiguous batches whose sizes differ by
//! at most one, and each batch herds toward its target for `k / B` picks
//! (earlier batches take the remainder). Indices are concatenated in batch
//! order.

mod baselines;
mod herding;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::robust_mean::{empirical_mean, subsampled_gm, GmSolverConfig};
use crate::seeded_rng;

pub use baselines::{median, select_by_centroid, select_random, CentroidMode};
pub use herding::{herd_toward, Herder};

/// What each batch herds toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// One sub-sampled geometric median of the whole pool.
    #[default]
    GmGlobal,
    /// Geometric median recomputed inside every batch.
    GmPerBatch,
    /// Empirical mean of the whole pool (kernel herding).
    EmpiricalMean,
    /// Empirical mean of every batch.
    EmpiricalMeanPerBatch,
}

impl TargetMode {
    pub fn is_global(self) -> bool {
        matches!(self, TargetMode::GmGlobal | TargetMode::EmpiricalMean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Sequential,
    /// Run batches on the rayon pool. Only honoured for global targets.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k: usize,
    #[serde(default = "one")]
    pub batches: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gm: GmSolverConfig,
    #[serde(default)]
    pub target_mode: TargetMode,
    #[serde(default)]
    pub execution: Execution,
}

fn one() -> usize {
    1
}

impl SelectionConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            batches: 1,
            seed: 0,
            gm: GmSolverConfig::default(),
            target_mode: TargetMode::GmGlobal,
            execution: Execution::Sequential,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::config(format!(
                "k must lie in [1, {n}], got {}",
                self.k
            )));
        }
        if self.batches == 0 || self.batches > self.k {
            return Err(Error::config(format!(
                "batches must lie in [1, k={}], got {}",
                self.k, self.batches
            )));
        }
        self.gm.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    /// `<theta_t, phi(x_t)>` for herding selectors, the ranking key for
    /// centroid baselines, zero for random sampling.
    pub score: f64,
    /// `||theta_t||` before the update; herding selectors only.
    pub theta_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchTarget {
    None,
    Global(Vec<f64>),
    PerBatch(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    pub trace: Vec<TraceStep>,
    pub target: MatchTarget,
}

impl SelectionResult {
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn max_theta_norm(&self) -> Option<f64> {
        self.trace
            .iter()
            .filter_map(|t| t.theta_norm)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

/// Every selector, by its command-line and config-file name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    GmMatching,
    KernelHerding,
    Random,
    Easy,
    Hard,
    Moderate,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 6] = [
        SelectorKind::GmMatching,
        SelectorKind::KernelHerding,
        SelectorKind::Random,
        SelectorKind::Easy,
        SelectorKind::Hard,
        SelectorKind::Moderate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::GmMatching => "gm-matching",
            SelectorKind::KernelHerding => "kernel-herding",
            SelectorKind::Random => "random",
            SelectorKind::Easy => "easy",
            SelectorKind::Hard => "hard",
            SelectorKind::Moderate => "moderate",
        }
    }

    pub fn select(self, phi: &EmbeddingMatrix, cfg: &SelectionConfig) -> Result<SelectionResult> {
        match self {
            SelectorKind::GmMatching => select_gm_matching(phi, cfg),
            SelectorKind::KernelHerding => select_kernel_herding(phi, cfg),
            SelectorKind::Random => select_random(phi.n(), cfg.k, cfg.seed),
            SelectorKind::Easy => select_by_centroid(phi, cfg.k, CentroidMode::Easy),
            SelectorKind::Hard => select_by_centroid(phi, cfg.k, CentroidMode::Hard),
            SelectorKind::Moderate => select_by_centroid(phi, cfg.k, CentroidMode::Moderate),
        }
    }
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown selector `{s}`")))
    }
}

/// Seeded shuffle of `0..n` split into `batches` contiguous runs whose
/// lengths differ by at most one, longer runs first.
pub fn partition_rows(n: usize, batches: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(seed));
    let base = n / batches;
    let extra = n % batches;
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Picks per batch: `k / batches`, earliest batches take the remainder.
pub fn batch_quotas(k: usize, batches: usize) -> Vec<usize> {
    (0..batches)
        .map(|b| k / batches + usize::from(b < k % batches))
        .collect()
}

/// GM Matching: herd toward a geometric median of the embeddings.
pub fn select_gm_matching(phi: &EmbeddingMatrix, cfg: &SelectionConfig) -> Result<SelectionResult> {
    select_batched(phi, cfg)
}

/// Kernel herding: GM Matching with the empirical mean as target.
pub fn select_kernel_herding(
    phi: &EmbeddingMatrix,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    let mut cfg = *cfg;
    cfg.target_mode = match cfg.target_mode {
        TargetMode::GmPerBatch | TargetMode::EmpiricalMeanPerBatch => {
            TargetMode::EmpiricalMeanPerBatch
        }
        TargetMode::GmGlobal | TargetMode::EmpiricalMean => TargetMode::EmpiricalMean,
    };
    select_batched(phi, &cfg)
}

/// Computes the target for `rows` of `phi` under a given mode.
pub fn compute_target(
    phi: &EmbeddingMatrix,
    mode: TargetMode,
    gm: &GmSolverConfig,
) -> Result<Vec<f64>> {
    Ok(match mode {
        TargetMode::GmGlobal | TargetMode::GmPerBatch => subsampled_gm(phi, gm)?.point,
        TargetMode::EmpiricalMean | TargetMode::EmpiricalMeanPerBatch => empirical_mean(phi),
    })
}

/// The batched driver behind [`select_gm_matching`] and
/// [`select_kernel_herding`].
pub fn select_batched(phi: &EmbeddingMatrix, cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate(phi.n())?;
    if cfg.target_mode.is_global() {
        let target = compute_target(phi, cfg.target_mode, &cfg.gm)?;
        select_batched_toward(phi, cfg, &target)
    } else {
        let batches = partition_rows(phi.n(), cfg.batches, cfg.seed);
        let quotas = batch_quotas(cfg.k, cfg.batches);
        let mut indices = Vec::with_capacity(cfg.k);
        let mut trace = Vec::with_capacity(cfg.k);
        let mut targets = Vec::with_capacity(cfg.batches);
        for (rows, quota) in batches.into_iter().zip(quotas) {
            let target = compute_target(&phi.select_rows(&rows)?, cfg.target_mode, &cfg.gm)?;
            let (idx, tr) = Herder::over_rows(phi, rows, &target, true)?.run(quota)?;
            indices.extend(idx);
            trace.extend(tr);
            targets.push(target);
        }
        Ok(SelectionResult {
            indices,
            trace,
            target: MatchTarget::PerBatch(targets),
        })
    }
}

/// Batched herding toward a fixed, precomputed target. `cfg.target_mode`
/// is ignored.
pub fn select_batched_toward(
    phi: &EmbeddingMatrix,
    cfg: &SelectionConfig,
    target: &[f64],
) -> Result<SelectionResult> {
    cfg.validate(phi.n())?;
    let batches = partition_rows(phi.n(), cfg.batches, cfg.seed);
    let quotas = batch_quotas(cfg.k, cfg.batches);
    let run = |(rows, quota): (Vec<usize>, usize)| -> Result<_> {
        Herder::over_rows(phi, rows, target, true)?.run(quota)
    };
    let work = batches.into_iter().zip(quotas);
    let per_batch: Vec<_> = match cfg.execution {
        Execution::Sequential => work.map(run).collect::<Result<_>>()?,
        Execution::Parallel => work
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(run)
            .collect::<Result<_>>()?,
    };
    let mut indices = Vec::with_capacity(cfg.k);
    let mut trace = Vec::with_capacity(cfg.k);
    for (idx, tr) in per_batch {
        indices.extend(idx);
        trace.extend(tr);
    }
    Ok(SelectionResult {
        indices,
        trace,
        target: MatchTarget::Global(target.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust_mean::weiszfeld_gm;
    use rand::Rng;
    use std::collections::HashSet;

    fn gaussian_cloud(n: usize, s: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = seeded_rng(seed);
        let v = (0..n * s).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingMatrix::new(n, s, v).unwrap()
    }

    #[test]
    fn partition_sizes_and_coverage() {
        let parts = partition_rows(10, 3, 1);
        assert_eq!(
            parts.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![4, 3, 3]
        );
        let all: HashSet<usize> = parts.iter().flatten().copied().collect();
        assert_eq!(all.len(), 10);
        assert_eq!(batch_quotas(7, 3), vec![3, 2, 2]);
        assert_eq!(batch_quotas(6, 3), vec![2, 2, 2]);
    }

    #[test]
    fn square_corners_all_selected() {
        let x = EmbeddingMatrix::from_rows(&[[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
            .unwrap();
        let r = select_gm_matching(&x, &SelectionConfig::new(4)).unwrap();
        // theta_0 = 0 ties -> row 0, then its antipode, then tie -> row 1, antipode.
        assert_eq!(r.indices, vec![0, 2, 1, 3]);
    }

    #[test]
    fn config_validation() {
        let x = gaussian_cloud(10, 2, 0);
        let mut cfg = SelectionConfig::new(11);
        assert!(select_gm_matching(&x, &cfg).is_err());
        cfg.k = 3;
        cfg.batches = 4;
        assert!(select_gm_matching(&x, &cfg).is_err());
        cfg.batches = 0;
        assert!(select_gm_matching(&x, &cfg).is_err());
    }

    #[test]
    fn deterministic_and_distinct_with_batches() {
        let x = gaussian_cloud(500, 3, 4);
        let mut cfg = SelectionConfig::new(50);
        cfg.batches = 7;
        cfg.seed = 12;
        cfg.gm.gamma_gm = 0.5;
        let a = select_gm_matching(&x, &cfg).unwrap();
        let b = select_gm_matching(&x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.indices.len(), 50);
        assert_eq!(a.trace.len(), 50);
        let uniq: HashSet<_> = a.indices.iter().collect();
        assert_eq!(uniq.len(), 50);
        // Each batch's picks come from that batch's rows.
        let parts = partition_rows(500, 7, 12);
        let mut at = 0;
        for (rows, q) in parts.iter().zip(batch_quotas(50, 7)) {
            let rows: HashSet<_> = rows.iter().collect();
            assert!(a.indices[at..at + q].iter().all(|i| rows.contains(i)));
            at += q;
        }
    }

    #[test]
    fn parallel_batches_match_sequential() {
        let x = gaussian_cloud(800, 4, 8);
        let mut cfg = SelectionConfig::new(64);
        cfg.batches = 8;
        let seq = select_gm_matching(&x, &cfg).unwrap();
        cfg.execution = Execution::Parallel;
        assert_eq!(select_gm_matching(&x, &cfg).unwrap(), seq);
    }

    #[test]
    fn single_batch_equals_plain_herding() {
        let x = gaussian_cloud(300, 3, 2);
        let mut cfg = SelectionConfig::new(40);
        cfg.seed = 99;
        let gm = weiszfeld_gm(&x, &cfg.gm).unwrap().point;
        let batched = select_gm_matching(&x, &cfg).unwrap();
        let plain = herd_toward(&x, &gm, 40, true).unwrap();
        assert_eq!(batched, plain);
    }

    #[test]
    fn per_batch_targets_recorded() {
        let x = gaussian_cloud(200, 2, 3);
        let mut cfg = SelectionConfig::new(20);
        cfg.batches = 4;
        cfg.target_mode = TargetMode::GmPerBatch;
        let r = select_gm_matching(&x, &cfg).unwrap();
        match &r.target {
            MatchTarget::PerBatch(t) => assert_eq!(t.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
        let h = select_kernel_herding(&x, &cfg).unwrap();
        let parts = partition_rows(200, 4, 0);
        match &h.target {
            MatchTarget::PerBatch(t) => {
                let m = empirical_mean(&x.select_rows(&parts[2]).unwrap());
                assert_eq!(t[2], m);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn herding_equals_gm_matching_on_symmetric_pool() {
        // Point-symmetric pool: GM and mean coincide at the origin.
        let mut rows = Vec::new();
        let mut rng = seeded_rng(21);
        for _ in 0..100 {
            let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            rows.push(p);
            rows.push([-p[0], -p[1]]);
        }
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let cfg = SelectionConfig::new(30);
        let gm = select_gm_matching(&x, &cfg).unwrap();
        let kh = select_kernel_herding(&x, &cfg).unwrap();
        assert_eq!(gm.indices, kh.indices);
    }

    #[test]
    fn theta_stays_bounded() {
        let x = gaussian_cloud(400, 5, 17);
        let r = select_gm_matching(&x, &SelectionConfig::new(200)).unwrap();
        let max_row = x
            .rows()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let max_theta = r.max_theta_norm().unwrap();
        assert!(max_theta.is_finite() && max_theta <= 1e3 * max_row);
    }
}
