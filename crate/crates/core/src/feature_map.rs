//! Explicit feature maps.
//!
//! The polynomial map realises `k(x, y) = (<x, y> + c)^p` as a finite inner
//! product. Writing `x_0 = sqrt(c)`, the multinomial theorem gives one feature
//! per exponent vector `a` over `x_1..x_d` with `|a| <= p`:
//!
//! ```text
//! phi_a(x) = sqrt(p! / (a_0! a_1! ... a_d!)) * c^(a_0 / 2) * x_1^a_1 ... x_d^a_d
//! ```
//!
//! where `a_0 = p - |a|`. Features are laid out in graded lexicographic
//! order: constant first, then degree 1 as `x_1, ..., x_d`, then degree 2 as
//! `x_1^2, x_1 x_2, ..., x_d^2`, and so on.

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Largest output matrix (`n * output_dim`) built without an explicit cap.
pub const DEFAULT_MAX_ENTRIES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMapSpec {
    #[default]
    Identity,
    Polynomial {
        degree: u32,
        c: f64,
    },
}

impl FeatureMapSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FeatureMapSpec::Identity => Ok(()),
            FeatureMapSpec::Polynomial { degree, c } => {
                if degree == 0 {
                    return Err(Error::config("polynomial degree must be >= 1"));
                }
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::config(format!(
                        "polynomial offset must be finite and >= 0, got {c}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match *self {
            FeatureMapSpec::Identity => Ok(input_dim),
            FeatureMapSpec::Polynomial { degree, .. } => {
                poly_feature_dim(input_dim, degree as usize)
            }
        }
    }

    /// Kernel value the map reproduces as an inner product.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        match *self {
            FeatureMapSpec::Identity => dot,
            FeatureMapSpec::Polynomial { degree, c } => (dot + c).powi(degree as i32),
        }
    }
}

/// `binomial(input_dim + degree, degree)`: the number of monomials of total
/// degree at most `degree` in `input_dim` variables.
pub fn poly_feature_dim(input_dim: usize, degree: usize) -> Result<usize> {
    if input_dim == 0 || degree == 0 {
        return Err(Error::config("input_dim and degree must both be >= 1"));
    }
    let overflow = || {
        Error::InfeasibleExpansion(format!(
            "binomial({} + {degree}, {degree}) overflows",
            input_dim
        ))
    };
    // C(d+i, i) = C(d+i-1, i-1) * (d+i) / i, exact at every step.
    let mut acc: u128 = 1;
    for i in 1..=degree as u128 {
        let top = (input_dim as u128).checked_add(i).ok_or_else(overflow)?;
        acc = acc.checked_mul(top).ok_or_else(overflow)? / i;
    }
    usize::try_from(acc).map_err(|_| overflow())
}

pub fn apply_feature_map(spec: &FeatureMapSpec, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    apply_feature_map_capped(spec, x, DEFAULT_MAX_ENTRIES)
}

pub fn apply_feature_map_capped(
    spec: &FeatureMapSpec,
    x: &EmbeddingMatrix,
    max_entries: usize,
) -> Result<EmbeddingMatrix> {
    spec.validate()?;
    let (degree, c) = match *spec {
        FeatureMapSpec::Identity => return Ok(x.clone()),
        FeatureMapSpec::Polynomial { degree, c } => (degree as usize, c),
    };
    let out_dim = poly_feature_dim(x.dim(), degree)?;
    let total = out_dim.checked_mul(x.n()).filter(|&t| t <= max_entries);
    let Some(total) = total else {
        return Err(Error::InfeasibleExpansion(format!(
            "{} rows x {out_dim} features exceeds the cap of {max_entries} entries",
            x.n()
        )));
    };

    let terms = monomial_terms(x.dim(), degree, c);
    debug_assert_eq!(terms.len(), out_dim);
    let mut values = Vec::with_capacity(total);
    for row in x.rows() {
        for term in &terms {
            let mut v = term.weight;
            for &(var, pow) in &term.factors {
                v *= row[var].powi(pow as i32);
            }
            values.push(v);
        }
    }
    EmbeddingMatrix::new(x.n(), out_dim, values)
}

struct Term {
    weight: f64,
    /// (variable index, exponent) for nonzero exponents only.
    factors: Vec<(usize, u32)>,
}

fn monomial_terms(dim: usize, degree: usize, c: f64) -> Vec<Term> {
    let sqrt_c = c.sqrt();
    let mut terms = Vec::new();
    let mut exps = vec![0u32; dim];
    for total in 0..=degree {
        push_compositions(&mut exps, 0, total as u32, &mut |a| {
            let a0 = (degree - total) as u32;
            let multinomial = multinomial(degree as u32, a0, a);
            terms.push(Term {
                weight: multinomial.sqrt() * sqrt_c.powi(a0 as i32),
                factors: a
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(i, &p)| (i, p))
                    .collect(),
            });
        });
    }
    terms
}

// Enumerates exponent vectors summing to `remaining` with larger leading
// exponents first, which is lexicographic order within one total degree.
fn push_compositions(exps: &mut [u32], pos: usize, remaining: u32, f: &mut impl FnMut(&[u32])) {
    if pos == exps.len() - 1 {
        exps[pos] = remaining;
        f(exps);
        return;
    }
    for e in (0..=remaining).rev() {
        exps[pos] = e;
        push_compositions(exps, pos + 1, remaining - e, f);
    }
    exps[pos] = 0;
}

fn multinomial(n: u32, first: u32, rest: &[u32]) -> f64 {
    let mut remaining = n;
    let mut acc = 1.0;
    for &k in std::iter::once(&first).chain(rest) {
        acc *= binomial_f64(remaining, k);
        remaining -= k;
    }
    acc
}

fn binomial_f64(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(degree: u32, c: f64) -> FeatureMapSpec {
        FeatureMapSpec::Polynomial { degree, c }
    }

    #[test]
    fn dim_examples() {
        assert_eq!(poly_feature_dim(2, 2).unwrap(), 6);
        assert_eq!(poly_feature_dim(7, 1).unwrap(), 8);
        assert_eq!(poly_feature_dim(1, 1).unwrap(), 2);
    }

    #[test]
    fn dim_matches_monomial_enumeration() {
        // Brute force: count exponent triples with a + b + c <= 3.
        let mut count = 0;
        for a in 0..=3 {
            for b in 0..=3 {
                for c in 0..=3 {
                    if a + b + c <= 3 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 20);
        assert_eq!(poly_feature_dim(3, 3).unwrap(), count);
    }

    #[test]
    fn dim_overflow_is_an_error() {
        assert!(matches!(
            poly_feature_dim(usize::MAX / 2, 4),
            Err(Error::InfeasibleExpansion(_))
        ));
        assert!(poly_feature_dim(0, 2).is_err());
        assert!(poly_feature_dim(2, 0).is_err());
    }

    #[test]
    fn identity_is_noop() {
        let x = EmbeddingMatrix::from_rows(&[[1.5, -2.0], [0.25, 4.0]]).unwrap();
        assert_eq!(apply_feature_map(&FeatureMapSpec::Identity, &x).unwrap(), x);
    }

    #[test]
    fn degree_two_layout() {
        let x = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let phi = apply_feature_map(&poly(2, 1.0), &x).unwrap();
        let r2 = 2f64.sqrt();
        let expected = [1.0, r2, 0.0, 1.0, 0.0, 0.0];
        for (a, b) in phi.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let dot: f64 = phi.row(0).iter().zip(phi.row(1)).map(|(a, b)| a * b).sum();
        assert!((dot - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degree_one_zero_offset_reproduces_input() {
        let x = EmbeddingMatrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]]).unwrap();
        let phi = apply_feature_map(&poly(1, 0.0), &x).unwrap();
        assert_eq!(phi.dim(), 4);
        for (i, row) in phi.rows().enumerate() {
            assert_eq!(row[0], 0.0);
            assert_eq!(&row[1..], x.row(i));
        }
    }

    #[test]
    fn cap_rejects_large_expansion() {
        let x = EmbeddingMatrix::new(10, 10, vec![0.1; 100]).unwrap();
        let err = apply_feature_map_capped(&poly(3, 1.0), &x, 1000).unwrap_err();
        assert!(matches!(err, Error::InfeasibleExpansion(_)));
        assert!(apply_feature_map_capped(&poly(3, 1.0), &x, 2860).is_ok());
    }

    #[test]
    fn rejects_bad_spec() {
        let x = EmbeddingMatrix::from_rows(&[[1.0]]).unwrap();
        assert!(apply_feature_map(&poly(0, 1.0), &x).is_err());
        assert!(apply_feature_map(&poly(2, -1.0), &x).is_err());
    }

    #[test]
    fn deterministic_bits() {
        let x = EmbeddingMatrix::from_rows(&[[0.3, -1.7, 2.2]]).unwrap();
        let a = apply_feature_map(&poly(4, 0.5), &x).unwrap();
        let b = apply_feature_map(&poly(4, 0.5), &x).unwrap();
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    proptest! {
        #[test]
        fn kernel_consistency(
            degree in 1u32..=4,
            c in 0.0f64..3.0,
            pair in (1usize..=4).prop_flat_map(|d| (
                proptest::collection::vec(-2.0f64..2.0, d),
                proptest::collection::vec(-2.0f64..2.0, d),
            )),
        ) {
            let (x, y) = pair;
            let spec = poly(degree, c);
            let m = EmbeddingMatrix::from_rows(&[x.clone(), y.clone()]).unwrap();
            let phi = apply_feature_map(&spec, &m).unwrap();
            let dot: f64 = phi.row(0).iter().zip(phi.row(1)).map(|(a, b)| a * b).sum();
            let direct = (x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() + c)
                .powi(degree as i32);
            prop_assert!((dot - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        }
    }
}
