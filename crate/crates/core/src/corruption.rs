//! Grossly corrupted dataset generators with ground-truth masks.
//!
//! Every generator corrupts exactly `round(psi * n)` rows and is fully
//! determined by its seed.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::robust_mean::CompensatedSum;
use crate::seeded_rng;

/// Tolerance below zero for eigenvalues of a covariance matrix.
const PSD_TOL: f64 = 1e-10;

/// Multivariate normal `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    /// Row-major `d x d` covariance.
    pub cov: Vec<Vec<f64>>,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let g = Self { mean, cov };
        g.sampler()?;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d == 0 || self.cov.len() != d || self.cov.iter().any(|r| r.len() != d) {
            return Err(Error::Shape(format!(
                "covariance must be {d}x{d} to match the mean"
            )));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| self.cov[i][j]))
    }

    /// Validates the covariance and precomputes its symmetric square root.
    pub fn sampler(&self) -> Result<GaussianSampler> {
        let cov = self.cov_matrix()?;
        let root = symmetric_sqrt(&cov)?;
        Ok(GaussianSampler {
            mean: DVector::from_column_slice(&self.mean),
            root,
        })
    }

    /// Standard deviation along the widest axis.
    pub fn max_std(&self) -> Result<f64> {
        let eig = self.cov_matrix()?.symmetric_eigen();
        Ok(eig.eigenvalues.max().max(0.0).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let d = self.mean.len();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let x = &self.mean + &self.root * z;
        out.copy_from_slice(x.as_slice());
    }
}

/// `A^{1/2}` of a symmetric PSD matrix through its eigendecomposition.
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped to zero.
pub fn symmetric_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    psd_sqrt_with_tol(a, PSD_TOL)
}

pub(crate) fn psd_sqrt_with_tol(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::NotPsd("matrix is not square".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPsd("matrix has non-finite entries".into()));
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPsd("matrix is not symmetric".into()));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if let Some(&min) = eig.eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < -tol * scale {
            return Err(Error::NotPsd(format!("eigenvalue {min:e} is negative")));
        }
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Adversary description for [`CorruptionSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianMixture {
        clean: Gaussian,
        adversary: Gaussian,
    },
    AdditiveGaussian {
        scale: f64,
    },
    AdditiveUniform {
        scale: f64,
    },
    LabelFlip {
        num_classes: u32,
    },
    MeanHijack {
        target: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub psi: f64,
    #[serde(flatten)]
    pub kind: CorruptionKind,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        check_psi(self.psi)?;
        match &self.kind {
            CorruptionKind::GaussianMixture { clean, adversary } => {
                clean.sampler()?;
                adversary.sampler()?;
                if clean.dim() != adversary.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: clean.dim(),
                        got: adversary.dim(),
                    });
                }
                Ok(())
            }
            CorruptionKind::AdditiveGaussian { scale }
            | CorruptionKind::AdditiveUniform { scale } => check_scale(*scale),
            CorruptionKind::LabelFlip { num_classes } => check_classes(*num_classes),
            CorruptionKind::MeanHijack { .. } => Ok(()),
        }
    }

    /// Named presets: `paper-2d-mixture` and `appendix-2d-mixture`.
    pub fn preset(name: &str, psi: f64) -> Result<Self> {
        let kind = match name {
            "paper-2d-mixture" => CorruptionKind::GaussianMixture {
                clean: Gaussian {
                    mean: vec![0.0, 0.0],
                    cov: vec![vec![1.0, -0.5], vec![-0.5, 0.5]],
                },
                adversary: Gaussian {
                    mean: vec![10.0, 6.0],
                    cov: vec![vec![1.0, 0.5], vec![0.5, 0.5]],
                },
            },
            "appendix-2d-mixture" => {
                let cov = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
                CorruptionKind::GaussianMixture {
                    clean: Gaussian {
                        mean: vec![0.0, 0.0],
                        cov: cov.clone(),
                    },
                    adversary: Gaussian {
                        mean: vec![-5.0, 5.0],
                        cov,
                    },
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown preset `{other}` (expected paper-2d-mixture or appendix-2d-mixture)"
                )))
            }
        };
        let spec = Self { psi, kind };
        spec.validate()?;
        Ok(spec)
    }

    /// The clean-component Gaussian, for mixture specs.
    pub fn clean_component(&self) -> Option<&Gaussian> {
        match &self.kind {
            CorruptionKind::GaussianMixture { clean, .. } => Some(clean),
            _ => None,
        }
    }
}

pub const PRESETS: &[&str] = &["paper-2d-mixture", "appendix-2d-mixture"];

fn check_psi(psi: f64) -> Result<()> {
    if !(0.0..0.5).contains(&psi) {
        return Err(Error::config(format!(
            "psi must lie in [0, 0.5), got {psi}"
        )));
    }
    Ok(())
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::config(format!(
            "noise scale must be >= 0, got {scale}"
        )));
    }
    Ok(())
}

fn check_classes(num_classes: u32) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::config(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    Ok(())
}

/// `round(psi * n)`, half away from zero.
pub fn corrupt_count(psi: f64, n: usize) -> usize {
    ((psi * n as f64).round() as usize).min(n)
}

/// Draws `round(psi * n)` rows from the adversary and the rest from the
/// clean component, then shuffles row order.
pub fn make_gmm_dataset(n: usize, spec: &CorruptionSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let CorruptionKind::GaussianMixture { clean, adversary } = &spec.kind else {
        return Err(Error::config(
            "make_gmm_dataset needs a gaussian_mixture spec",
        ));
    };
    if n == 0 {
        return Err(Error::config("n must be >= 1"));
    }
    let bad = corrupt_count(spec.psi, n);
    let d = clean.dim();
    let (clean_s, adv_s) = (clean.sampler()?, adversary.sampler()?);
    let mut rng = seeded_rng(seed);
    let mut mask: Vec<bool> = (0..n).map(|i| i >= n - bad).collect();
    mask.shuffle(&mut rng);
    let mut values = vec![0.0; n * d];
    for (row, &is_bad) in values.chunks_exact_mut(d).zip(&mask) {
        if is_bad {
            adv_s.sample_into(&mut rng, row);
        } else {
            clean_s.sample_into(&mut rng, row);
        }
    }
    Dataset::new(EmbeddingMatrix::new(n, d, values)?, None, Some(mask))
}

/// Appends `x_B = (n + 1) * target - sum_i x_i`, which moves the empirical
/// mean of the augmented set to `target`. Returns the new matrix and the
/// crafted row's index.
pub fn hijack_mean(x: &EmbeddingMatrix, target: &[f64]) -> Result<(EmbeddingMatrix, usize)> {
    if target.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: target.len(),
        });
    }
    let mut sums = vec![CompensatedSum::default(); x.dim()];
    for row in x.rows() {
        for (s, &v) in sums.iter_mut().zip(row) {
            s.add(v);
        }
    }
    let m = (x.n() + 1) as f64;
    let crafted: Vec<f64> = sums
        .iter()
        .zip(target)
        .map(|(s, &t)| {
            let mut c = CompensatedSum::default();
            c.add(m * t);
            c.add(-s.sum_parts().0);
            c.add(-s.sum_parts().1);
            c.value()
        })
        .collect();
    let mut out = x.clone();
    let idx = out.push_row(&crafted)?;
    Ok((out, idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
}

/// Perturbs `round(psi * n)` seeded rows with `N(0, scale^2 I)` or
/// `U(-scale, scale)^s` noise and marks them in the mask.
pub fn additive_noise(
    x: &EmbeddingMatrix,
    psi: f64,
    kind: NoiseKind,
    scale: f64,
    seed: u64,
) -> Result<Dataset> {
    check_psi(psi)?;
    check_scale(scale)?;
    let mut rng = seeded_rng(seed);
    let picked = index::sample(&mut rng, x.n(), corrupt_count(psi, x.n()));
    let mut mask = vec![false; x.n()];
    for i in picked.iter() {
        mask[i] = true;
    }
    let mut noise_rng = rng.clone();
    let noisy = x.map_rows(|i, src, dst| {
        dst.copy_from_slice(src);
        if mask[i] {
            for v in dst.iter_mut() {
                let e: f64 = match kind {
                    NoiseKind::Gaussian => StandardNormal.sample(&mut noise_rng),
                    NoiseKind::Uniform => noise_rng.random_range(-1.0..=1.0),
                };
                *v += scale * e;
            }
        }
    })?;
    Dataset::new(noisy, None, Some(mask))
}

/// Reassigns `round(psi * n)` seeded rows to a uniformly random different
/// class.
pub fn flip_labels(labels: &[u32], psi: f64, num_classes: u32, seed: u64) -> Result<Vec<u32>> {
    check_psi(psi)?;
    check_classes(num_classes)?;
    if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::config(format!(
            "label {bad} outside [0, {num_classes})"
        )));
    }
    let mut rng = seeded_rng(seed);
    let picked = index::sample(&mut rng, labels.len(), corrupt_count(psi, labels.len()));
    let mut out = labels.to_vec();
    for i in picked.iter() {
        let shift = rng.random_range(1..num_classes);
        out[i] = (out[i] + shift) % num_classes;
    }
    Ok(out)
}

/// Change in the squared centroid distance of `x` when the centroid moves
/// from `mu_clean` to `mu_clean + delta_mu`:
/// `||delta_mu||^2 - 2 (x - mu_clean)^T delta_mu`, i.e. `d' - d`.
pub fn score_deviation(x: &[f64], mu_clean: &[f64], delta_mu: &[f64]) -> Result<f64> {
    if x.len() != mu_clean.len() || x.len() != delta_mu.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: if mu_clean.len() != x.len() {
                mu_clean.len()
            } else {
                delta_mu.len()
            },
        });
    }
    let sq: f64 = delta_mu.iter().map(|d| d * d).sum();
    let cross: f64 = x
        .iter()
        .zip(mu_clean)
        .zip(delta_mu)
        .map(|((xi, mi), di)| (xi - mi) * di)
        .sum();
    Ok(sq - 2.0 * cross)
}
