//! Selection quality metrics.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corruption::psd_sqrt_with_tol;
use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::robust_mean::empirical_mean;
use crate::selectors::SelectionResult;

/// Eigenvalues down to this (relative) level are treated as rounding noise.
const FRECHET_EIG_TOL: f64 = 1e-8;

/// Fixed-key JSON report. Every key is always present; absent optional
/// values serialise as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub delta_sq: f64,
    pub mmd_sq: f64,
    pub frechet: Option<f64>,
    pub corrupt_fraction: f64,
    pub slope: Option<f64>,
    /// Phase name to seconds.
    pub wall_times: BTreeMap<String, f64>,
}

/// `||subset_mean - reference||^2`.
pub fn moment_discrepancy(subset_mean: &[f64], reference: &[f64]) -> Result<f64> {
    if subset_mean.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: subset_mean.len(),
        });
    }
    Ok(subset_mean
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Explicit-feature MMD: squared distance between the two feature means.
pub fn mmd_sq(phi_s: &EmbeddingMatrix, phi_ref: &EmbeddingMatrix) -> Result<f64> {
    moment_discrepancy(&empirical_mean(phi_s), &empirical_mean(phi_ref))
}

/// Squared 2-Wasserstein distance between `N(mu1, sigma1)` and
/// `N(mu2, sigma2)`:
/// `||mu1 - mu2||^2 + tr(sigma1 + sigma2 - 2 (sigma1^{1/2} sigma2 sigma1^{1/2})^{1/2})`.
pub fn frechet_gaussian(
    mu1: &[f64],
    sigma1: &DMatrix<f64>,
    mu2: &[f64],
    sigma2: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu1.len();
    for (m, s) in [(mu2.len(), sigma1), (mu2.len(), sigma2)] {
        if m != d || s.nrows() != d || s.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if m != d { m } else { s.nrows() },
            });
        }
    }
    let mean_term = moment_discrepancy(mu1, mu2)?;
    let root1 = psd_sqrt_with_tol(sigma1, FRECHET_EIG_TOL)?;
    // Validates sigma2 as PSD too.
    psd_sqrt_with_tol(sigma2, FRECHET_EIG_TOL)?;
    let inner = &root1 * sigma2 * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let scale = inner.amax().max(1.0);
    let eig = inner.symmetric_eigen();
    let mut tr_sqrt = 0.0;
    for &l in eig.eigenvalues.iter() {
        if l < -FRECHET_EIG_TOL * scale {
            return Err(Error::NotPsd(format!("product has eigenvalue {l:e}")));
        }
        tr_sqrt += l.max(0.0).sqrt();
    }
    let value = mean_term + sigma1.trace() + sigma2.trace() - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}

/// Sample mean and covariance (`1 / (n - 1)` normalisation; zero for a
/// single row).
pub fn sample_moments(x: &EmbeddingMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let mean = empirical_mean(x);
    let s = x.dim();
    let mut cov = DMatrix::zeros(s, s);
    if x.n() > 1 {
        for row in x.rows() {
            for i in 0..s {
                let di = row[i] - mean[i];
                for j in i..s {
                    cov[(i, j)] += di * (row[j] - mean[j]);
                }
            }
        }
        let denom = (x.n() - 1) as f64;
        for i in 0..s {
            for j in i..s {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
    }
    (mean, cov)
}

/// Fraction of selected rows whose ground-truth mask is set.
pub fn corrupt_fraction(selection: &SelectionResult, mask: Option<&[bool]>) -> Result<f64> {
    let mask = mask.ok_or(Error::MissingMask)?;
    if selection.indices.is_empty() {
        return Err(Error::config("empty selection"));
    }
    let mut bad = 0usize;
    for &i in &selection.indices {
        match mask.get(i) {
            Some(true) => bad += 1,
            Some(false) => {}
            None => {
                return Err(Error::Shape(format!(
                    "index {i} outside mask of length {}",
                    mask.len()
                )))
            }
        }
    }
    Ok(bad as f64 / selection.indices.len() as f64)
}

/// Least-squares slope of `ln(values)` against `ln(ks)`.
pub fn fit_loglog_slope(ks: &[usize], values: &[f64]) -> Result<f64> {
    if ks.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: ks.len(),
            got: values.len(),
        });
    }
    if ks.len() < 3 {
        return Err(Error::config("slope fit needs at least 3 points"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::config(format!(
            "slope fit needs positive values, got {v}"
        )));
    }
    if ks.contains(&0) {
        return Err(Error::config("slope fit needs positive k"));
    }
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::config("slope fit needs at least two distinct k"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}
