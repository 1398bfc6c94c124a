//! Empirical mean and epsilon-approximate geometric median.
//!
//! The geometric median minimises `rho(z) = sum_i ||z - x_i||`. It is found
//! with the Weiszfeld re-weighted averaging iteration
//!
//! ```text
//! z_{k+1} = sum_i x_i / (||x_i - z_k|| + delta)  /  sum_i 1 / (||x_i - z_k|| + delta)
//! ```
//!
//! started from the arithmetic mean and stopped once `||z_{k+1} - z_k|| < epsilon`
//! or after `t_max` updates. `delta > 0` keeps the weights finite when an
//! iterate lands on a data point.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seeded_rng;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Running sum and compensation term, unrounded.
    pub fn sum_parts(&self) -> (f64, f64) {
        (self.sum, self.comp)
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmSolverConfig {
    /// Stop once an update moves the iterate less than this.
    pub epsilon: f64,
    /// Added to every distance in the weight denominators.
    pub delta: f64,
    pub t_max: usize,
    /// Fraction of rows used by [`subsampled_gm`].
    pub gamma_gm: f64,
    pub seed: u64,
}

impl Default for GmSolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            delta: 1e-10,
            t_max: 1000,
            gamma_gm: 1.0,
            seed: 0,
        }
    }
}

impl GmSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!(
                "delta must be > 0, got {}",
                self.delta
            )));
        }
        if self.t_max == 0 {
            return Err(Error::config("t_max must be >= 1"));
        }
        if !(self.gamma_gm > 0.0 && self.gamma_gm <= 1.0) {
            return Err(Error::config(format!(
                "gamma_gm must lie in (0, 1], got {}",
                self.gamma_gm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmResult {
    pub point: Vec<f64>,
    /// Number of updates performed. Equal to `t_max` when the step-norm
    /// test never fired.
    pub iterations: usize,
    pub final_step_norm: f64,
    /// `rho` at `point`.
    pub objective: f64,
}

impl GmResult {
    pub fn converged(&self, cfg: &GmSolverConfig) -> bool {
        self.final_step_norm < cfg.epsilon
    }
}

pub fn empirical_mean(x: &EmbeddingMatrix) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::default(); x.dim()];
    for row in x.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            a.add(v);
        }
    }
    let n = x.n() as f64;
    acc.iter().map(|a| a.value() / n).collect()
}

/// `rho(z) = sum_i ||z - x_i||`.
pub fn distance_sum(x: &EmbeddingMatrix, z: &[f64]) -> f64 {
    x.rows()
        .map(|row| euclidean(row, z))
        .collect::<CompensatedSum>()
        .value()
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

pub fn weiszfeld_gm(x: &EmbeddingMatrix, cfg: &GmSolverConfig) -> Result<GmResult> {
    weiszfeld_gm_observed(x, cfg, |_, _| {})
}

/// As [`weiszfeld_gm`], calling `observe(k, z_k)` on the starting point
/// (`k = 0`) and after every update.
pub fn weiszfeld_gm_observed(
    x: &EmbeddingMatrix,
    cfg: &GmSolverConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<GmResult> {
    cfg.validate()?;
    let s = x.dim();
    let mut z = empirical_mean(x);
    observe(0, &z);

    let mut numer = vec![CompensatedSum::default(); s];
    let mut next = vec![0.0; s];
    let mut iterations = 0;
    let mut step = f64::INFINITY;
    for k in 1..=cfg.t_max {
        numer.fill(CompensatedSum::default());
        let mut denom = CompensatedSum::default();
        for row in x.rows() {
            let w = 1.0 / (euclidean(row, &z) + cfg.delta);
            denom.add(w);
            for (acc, &v) in numer.iter_mut().zip(row) {
                acc.add(w * v);
            }
        }
        let denom = denom.value();
        for (out, acc) in next.iter_mut().zip(&numer) {
            *out = acc.value() / denom;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDiverged { iteration: k });
        }
        step = euclidean(&next, &z);
        std::mem::swap(&mut z, &mut next);
        iterations = k;
        observe(k, &z);
        if step < cfg.epsilon {
            break;
        }
    }

    let objective = distance_sum(x, &z);
    Ok(GmResult {
        point: z,
        iterations,
        final_step_norm: step,
        objective,
    })
}

/// Rows used by [`subsampled_gm`]: `ceil(gamma_gm * n)` distinct indices in
/// ascending order, or every row when that covers the whole set.
pub fn gm_subsample_indices(n: usize, cfg: &GmSolverConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let m = ((cfg.gamma_gm * n as f64).ceil() as usize).clamp(1, n);
    if m == n {
        return Ok((0..n).collect());
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut picked = index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Geometric median of a seeded uniform subsample of `ceil(gamma_gm * n)`
/// rows, drawn without replacement.
pub fn subsampled_gm(x: &EmbeddingMatrix, cfg: &GmSolverConfig) -> Result<GmResult> {
    let picked = gm_subsample_indices(x.n(), cfg)?;
    if picked.len() == x.n() {
        return weiszfeld_gm(x, cfg);
    }
    weiszfeld_gm(&x.select_rows(&picked)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        euclidean(a, b) <= tol
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            empirical_mean(&m(&[&[1.0, 2.0], &[3.0, 4.0]])),
            vec![2.0, 3.0]
        );
        assert_eq!(empirical_mean(&m(&[&[-7.5, 0.25]])), vec![-7.5, 0.25]);
    }

    #[test]
    fn mean_matches_exact_rational_sum() {
        // Exact means computed with Python's fractions.Fraction over the
        // binary values of these literals, rounded once to f64.
        let x = m(&[
            &[0.1, 1e16],
            &[0.2, 1.0],
            &[0.3, -1e16],
            &[0.7, 3.0],
            &[-0.4, 1.0],
        ]);
        let mean = empirical_mean(&x);
        assert_eq!(mean[0], 0.18);
        assert_eq!(mean[1], 1.0);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let s: CompensatedSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn one_dimensional_median() {
        let r = weiszfeld_gm(&m(&[&[0.0], &[0.0], &[10.0]]), &GmSolverConfig::default()).unwrap();
        assert!(r.point[0].abs() < 1e-6, "{:?}", r);
    }

    #[test]
    fn equilateral_triangle_centroid() {
        let h = 3f64.sqrt() / 2.0;
        let r = weiszfeld_gm(
            &m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, h]]),
            &GmSolverConfig::default(),
        )
        .unwrap();
        assert!(close(&r.point, &[0.5, 3f64.sqrt() / 6.0], 1e-6), "{:?}", r);
    }

    #[test]
    fn square_center() {
        let r = weiszfeld_gm(
            &m(&[&[1.0, 1.0], &[-1.0, 1.0], &[-1.0, -1.0], &[1.0, -1.0]]),
            &GmSolverConfig::default(),
        )
        .unwrap();
        assert!(close(&r.point, &[0.0, 0.0], 1e-12));
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn hits_t_max_without_error() {
        let x = m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 3.0], &[7.0, 2.0]]);
        let cfg = GmSolverConfig {
            t_max: 2,
            epsilon: 1e-300,
            ..Default::default()
        };
        let r = weiszfeld_gm(&x, &cfg).unwrap();
        assert_eq!(r.iterations, 2);
        assert!(!r.converged(&cfg));
    }

    #[test]
    fn rejects_invalid_config() {
        let x = m(&[&[0.0]]);
        for cfg in [
            GmSolverConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            GmSolverConfig {
                delta: -1.0,
                ..Default::default()
            },
            GmSolverConfig {
                t_max: 0,
                ..Default::default()
            },
            GmSolverConfig {
                gamma_gm: 0.0,
                ..Default::default()
            },
            GmSolverConfig {
                gamma_gm: 1.5,
                ..Default::default()
            },
        ] {
            assert!(weiszfeld_gm(&x, &cfg).is_err());
        }
    }

    #[test]
    fn overflow_is_reported() {
        let x = m(&[&[1e308, 0.0], &[-1e308, 0.0], &[1e308, 1e308]]);
        assert!(weiszfeld_gm(&x, &GmSolverConfig::default()).is_err());
    }

    #[test]
    fn subsample_counts_and_determinism() {
        let mut rng = seeded_rng(9);
        let values: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let x = EmbeddingMatrix::new(1000, 2, values).unwrap();
        let cfg = GmSolverConfig {
            gamma_gm: 0.5,
            seed: 3,
            ..Default::default()
        };
        let idx = gm_subsample_indices(1000, &cfg).unwrap();
        assert_eq!(idx.len(), 500);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            subsampled_gm(&x, &cfg).unwrap(),
            subsampled_gm(&x, &cfg).unwrap()
        );

        let full = GmSolverConfig::default();
        assert_eq!(
            subsampled_gm(&x, &full).unwrap(),
            weiszfeld_gm(&x, &full).unwrap()
        );
    }

    #[test]
    fn objective_not_worse_than_mean() {
        let mut rng = seeded_rng(1);
        for _ in 0..20 {
            let values: Vec<f64> = (0..60).map(|_| rng.random_range(-5.0..5.0)).collect();
            let x = EmbeddingMatrix::new(20, 3, values).unwrap();
            let r = weiszfeld_gm(&x, &GmSolverConfig::default()).unwrap();
            let at_mean = distance_sum(&x, &empirical_mean(&x));
            assert!(r.objective <= at_mean + 1e-6 * r.objective);
            assert!(r.final_step_norm < 1e-8 || r.iterations == 1000);
        }
    }

    proptest! {
        #[test]
        fn monotone_descent(rows in proptest::collection::vec(
            proptest::collection::vec(-10.0f64..10.0, 3), 2..30)
        ) {
            let x = EmbeddingMatrix::from_rows(&rows).unwrap();
            let mut prev = f64::INFINITY;
            let mut ok = true;
            weiszfeld_gm_observed(&x, &GmSolverConfig::default(), |_, z| {
                let rho = distance_sum(&x, z);
                ok &= rho <= prev + 1e-9;
                prev = rho;
            }).unwrap();
            prop_assert!(ok);
        }

        #[test]
        fn odd_one_dimensional_sets_give_the_median(
            mut v in proptest::collection::vec(-100.0f64..100.0, 1..15)
        ) {
            if v.len() % 2 == 0 {
                v.pop();
            }
            let rows: Vec<[f64; 1]> = v.iter().map(|&a| [a]).collect();
            let r = weiszfeld_gm(&EmbeddingMatrix::from_rows(&rows).unwrap(),
                                 &GmSolverConfig::default()).unwrap();
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assert!((r.point[0] - sorted[sorted.len() / 2]).abs() < 1e-6);
        }
    }
}
