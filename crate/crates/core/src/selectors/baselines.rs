//! Geometric baselines: uniform sampling and centroid-distance rankings.

use std::cmp::Ordering;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::robust_mean::{empirical_mean, euclidean};
use crate::seeded_rng;

use super::{MatchTarget, SelectionResult, TraceStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidMode {
    /// Closest to the centroid.
    Easy,
    /// Farthest from the centroid.
    Hard,
    /// Closest to the median centroid distance.
    Moderate,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::config(format!("k must lie in [1, {n}], got {k}")));
    }
    Ok(())
}

/// Uniform `k`-subset without replacement, in draw order.
pub fn select_random(n: usize, k: usize, seed: u64) -> Result<SelectionResult> {
    check_k(n, k)?;
    let mut rng = seeded_rng(seed);
    let indices = index::sample(&mut rng, n, k).into_vec();
    let trace = indices
        .iter()
        .map(|&index| TraceStep {
            index,
            score: 0.0,
            theta_norm: None,
        })
        .collect();
    Ok(SelectionResult {
        indices,
        trace,
        target: MatchTarget::None,
    })
}

pub fn select_by_centroid(
    phi: &EmbeddingMatrix,
    k: usize,
    mode: CentroidMode,
) -> Result<SelectionResult> {
    check_k(phi.n(), k)?;
    let centroid = empirical_mean(phi);
    let dist: Vec<f64> = phi.rows().map(|r| euclidean(r, &centroid)).collect();
    let keys: Vec<f64> = match mode {
        CentroidMode::Easy => dist,
        CentroidMode::Hard => dist.iter().map(|d| -d).collect(),
        CentroidMode::Moderate => {
            let med = median(&dist);
            dist.iter().map(|d| (d - med).abs()).collect()
        }
    };
    let mut order: Vec<usize> = (0..phi.n()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    order.truncate(k);
    let trace = order
        .iter()
        .map(|&index| TraceStep {
            index,
            score: keys[index].abs(),
            theta_norm: None,
        })
        .collect();
    Ok(SelectionResult {
        indices: order,
        trace,
        target: MatchTarget::Global(centroid),
    })
}

/// Median, averaging the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}
