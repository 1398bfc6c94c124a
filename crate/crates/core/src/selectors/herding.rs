//! Greedy herding toward a target moment.
//!
//! With `theta_0 = target`, each step picks the candidate maximising
//! `<theta_t, phi(x)>` and then sets `theta_{t+1} = theta_t + (target - phi(x_{t+1}))`,
//! so after `T` steps `theta_T = theta_0 + T * target - sum_t phi(x_t)`.

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};

use super::{MatchTarget, SelectionResult, TraceStep};

/// Step-by-step herding state over a pool of candidate rows.
#[derive(Debug, Clone)]
pub struct Herder<'a> {
    phi: &'a EmbeddingMatrix,
    pool: Vec<usize>,
    target: Vec<f64>,
    theta: Vec<f64>,
    without_replacement: bool,
    steps: usize,
}

impl<'a> Herder<'a> {
    /// Herds over every row of `phi`.
    pub fn new(
        phi: &'a EmbeddingMatrix,
        target: &[f64],
        without_replacement: bool,
    ) -> Result<Self> {
        Self::over_rows(phi, (0..phi.n()).collect(), target, without_replacement)
    }

    /// Herds over the given subset of rows. Pool order does not affect the
    /// picks: ties always go to the lowest row index.
    pub fn over_rows(
        phi: &'a EmbeddingMatrix,
        pool: Vec<usize>,
        target: &[f64],
        without_replacement: bool,
    ) -> Result<Self> {
        if target.len() != phi.dim() {
            return Err(Error::DimensionMismatch {
                expected: phi.dim(),
                got: target.len(),
            });
        }
        if let Some(&bad) = pool.iter().find(|&&i| i >= phi.n()) {
            return Err(Error::Shape(format!("pool row {bad} out of range")));
        }
        Ok(Self {
            phi,
            pool,
            target: target.to_vec(),
            theta: target.to_vec(),
            without_replacement,
            steps: 0,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn remaining(&self) -> usize {
        self.pool.len()
    }

    pub fn step(&mut self) -> Result<TraceStep> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (pos, &row) in self.pool.iter().enumerate() {
            let score = dot(&self.theta, self.phi.row(row));
            let better = match best {
                None => true,
                Some((_, best_row, best_score)) => {
                    score > best_score || (score == best_score && row < best_row)
                }
            };
            if better {
                best = Some((pos, row, score));
            }
        }
        let Some((pos, row, score)) = best else {
            return Err(Error::PoolExhausted {
                picked: self.steps,
                requested: self.steps + 1,
            });
        };
        let theta_norm = dot(&self.theta, &self.theta).sqrt();
        for ((t, &g), &x) in self
            .theta
            .iter_mut()
            .zip(&self.target)
            .zip(self.phi.row(row))
        {
            *t += g - x;
        }
        if self.without_replacement {
            self.pool.swap_remove(pos);
        }
        self.steps += 1;
        Ok(TraceStep {
            index: row,
            score,
            theta_norm: Some(theta_norm),
        })
    }

    /// Runs `k` steps, collecting indices and trace.
    pub fn run(&mut self, k: usize) -> Result<(Vec<usize>, Vec<TraceStep>)> {
        let mut indices = Vec::with_capacity(k);
        let mut trace = Vec::with_capacity(k);
        for _ in 0..k {
            let step = self.step().map_err(|e| match e {
                Error::PoolExhausted { picked, .. } => Error::PoolExhausted {
                    picked,
                    requested: k,
                },
                other => other,
            })?;
            indices.push(step.index);
            trace.push(step);
        }
        Ok((indices, trace))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Selects `k` rows of `phi` whose mean tracks `target`.
pub fn herd_toward(
    phi: &EmbeddingMatrix,
    target: &[f64],
    k: usize,
    without_replacement: bool,
) -> Result<SelectionResult> {
    if without_replacement && k > phi.n() {
        return Err(Error::PoolExhausted {
            picked: phi.n(),
            requested: k,
        });
    }
    let mut herder = Herder::new(phi, target, without_replacement)?;
    let (indices, trace) = herder.run(k)?;
    Ok(SelectionResult {
        indices,
        trace,
        target: MatchTarget::Global(target.to_vec()),
    })
}
