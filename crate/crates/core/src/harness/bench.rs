use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::moment_discrepancy;
use crate::robust_mean::{empirical_mean, subsampled_gm, GmSolverConfig};
use crate::seeded_rng;
use crate::selectors::{select_batched_toward, Execution, SelectionConfig};

fn standard_normal(n: usize, d: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let mut rng = seeded_rng(seed);
    let v = (0..n * d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    EmbeddingMatrix::new(n, d, v)
}

fn mean_and_median(mut t: Vec<f64>) -> (f64, f64) {
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    t.sort_by(f64::total_cmp);
    (mean, crate::selectors::median(&t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmTiming {
    pub n: usize,
    pub d: usize,
    pub mean_secs: f64,
    pub median_secs: f64,
    pub iterations: usize,
}

/// Times the (sub-sampled) geometric-median solve on standard-normal data
/// for every `(n, d)` pair. Repetitions are interleaved across the grid so
/// slow drift in machine load hits every cell alike.
pub fn bench_gm_scaling(
    ns: &[usize],
    ds: &[usize],
    cfg: &GmSolverConfig,
    reps: usize,
    seed: u64,
) -> Result<Vec<GmTiming>> {
    cfg.validate()?;
    if reps == 0 {
        return Err(Error::config("reps must be >= 1"));
    }
    let cells: Vec<(usize, usize)> = ds
        .iter()
        .flat_map(|&d| ns.iter().map(move |&n| (n, d)))
        .collect();
    let data = cells
        .iter()
        .map(|&(n, d)| standard_normal(n, d, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut times = vec![Vec::with_capacity(reps); cells.len()];
    let mut iterations = vec![0; cells.len()];
    for _ in 0..reps {
        for (c, x) in data.iter().enumerate() {
            let t = Instant::now();
            let r = subsampled_gm(x, cfg)?;
            times[c].push(t.elapsed().as_secs_f64());
            iterations[c] = r.iterations;
        }
    }
    Ok(cells
        .into_iter()
        .zip(times)
        .zip(iterations)
        .map(|(((n, d), t), iterations)| {
            let (mean_secs, median_secs) = mean_and_median(t);
            GmTiming {
                n,
                d,
                mean_secs,
                median_secs,
                iterations,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    pub batches: usize,
    /// Median herding time; the shared target solve is excluded.
    pub median_secs: f64,
    /// First entry's median time divided by this one's.
    pub speedup: f64,
    /// Squared distance of the selection mean from the true mean (zero).
    pub delta_sq: f64,
}

/// Herding cost versus batch count on standard-normal data, toward one
/// geometric-median target shared by every batch count. Repetitions are
/// interleaved across batch counts.
#[allow(clippy::too_many_arguments)]
pub fn bench_batching(
    n: usize,
    k: usize,
    batches: &[usize],
    dim: usize,
    cfg: &GmSolverConfig,
    execution: Execution,
    reps: usize,
    seed: u64,
) -> Result<Vec<BatchTiming>> {
    if reps == 0 || batches.is_empty() {
        return Err(Error::config("need reps >= 1 and at least one batch count"));
    }
    let x = standard_normal(n, dim, seed)?;
    let target = subsampled_gm(&x, &GmSolverConfig { seed, ..*cfg })?.point;
    let configs: Vec<SelectionConfig> = batches
        .iter()
        .map(|&b| SelectionConfig {
            k,
            batches: b,
            seed,
            gm: *cfg,
            target_mode: Default::default(),
            execution,
        })
        .collect();
    let mut times = vec![Vec::with_capacity(reps); configs.len()];
    let mut delta_sq = vec![0.0; configs.len()];
    for _ in 0..reps {
        for (c, sel_cfg) in configs.iter().enumerate() {
            let t = Instant::now();
            let sel = select_batched_toward(&x, sel_cfg, &target)?;
            times[c].push(t.elapsed().as_secs_f64());
            let mean = empirical_mean(&x.select_rows(&sel.indices)?);
            delta_sq[c] = moment_discrepancy(&mean, &vec![0.0; dim])?;
        }
    }
    let medians: Vec<f64> = times.into_iter().map(|t| mean_and_median(t).1).collect();
    Ok(batches
        .iter()
        .zip(&medians)
        .zip(delta_sq)
        .map(|((&b, &median_secs), delta_sq)| BatchTiming {
            batches: b,
            median_secs,
            speedup: medians[0] / median_secs,
            delta_sq,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gm_bench_shapes() {
        let t = bench_gm_scaling(&[100, 200], &[2, 3], &GmSolverConfig::default(), 2, 0).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|r| r.median_secs >= 0.0 && r.iterations >= 1));
    }

    #[test]
    fn batch_bench_reports_relative_speedup() {
        let t = bench_batching(
            400,
            40,
            &[1, 4],
            3,
            &GmSolverConfig::default(),
            Execution::Sequential,
            1,
            3,
        )
        .unwrap();
        assert_eq!(t[0].speedup, 1.0);
        assert!(t[1].delta_sq.is_finite());
    }
}
