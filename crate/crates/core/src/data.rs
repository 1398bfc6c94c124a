//! Point clouds and labelled datasets.

use crate::error::{Error, Result};

/// Dense row-major `n x s` matrix of finite reals. Rows are points in
/// feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    s: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, s: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || s == 0 {
            return Err(Error::Shape(format!("need n >= 1 and s >= 1, got {n}x{s}")));
        }
        if values.len() != n * s {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {n}x{s} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / s,
                col: pos % s,
            });
        }
        Ok(Self { n, s, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let s = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * s);
        for row in rows {
            let row = row.as_ref();
            if row.len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), s, values)
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.s..(i + 1) * self.s]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.s)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Copies the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.s);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Shape(format!(
                    "row {i} out of range for n={}",
                    self.n
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.s, values)
    }

    /// Appends one row, returning its index.
    pub fn push_row(&mut self, row: &[f64]) -> Result<usize> {
        if row.len() != self.s {
            return Err(Error::DimensionMismatch {
                expected: self.s,
                got: row.len(),
            });
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: self.n, col });
        }
        self.values.extend_from_slice(row);
        self.n += 1;
        Ok(self.n - 1)
    }

    /// Applies `f` to every row, producing a matrix of the same shape.
    pub fn map_rows(&self, mut f: impl FnMut(usize, &[f64], &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; self.values.len()];
        for (i, (src, dst)) in self.rows().zip(values.chunks_exact_mut(self.s)).enumerate() {
            f(i, src, dst);
        }
        Self::new(self.n, self.s, values)
    }
}

/// Embeddings plus optional labels and ground-truth corruption mask.
///
/// The mask exists for evaluation only. Selectors take an
/// [`EmbeddingMatrix`] and never see it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub embeddings: EmbeddingMatrix,
    pub labels: Option<Vec<u32>>,
    pub corrupt_mask: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(
        embeddings: EmbeddingMatrix,
        labels: Option<Vec<u32>>,
        corrupt_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = embeddings.n();
        for (name, len) in [
            ("labels", labels.as_ref().map(Vec::len)),
            ("corrupt_mask", corrupt_mask.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != n {
                    return Err(Error::Shape(format!(
                        "{name} has {len} entries for {n} rows"
                    )));
                }
            }
        }
        Ok(Self {
            embeddings,
            labels,
            corrupt_mask,
        })
    }

    pub fn unlabelled(embeddings: EmbeddingMatrix) -> Self {
        Self {
            embeddings,
            labels: None,
            corrupt_mask: None,
        }
    }

    pub fn n(&self) -> usize {
        self.embeddings.n()
    }

    pub fn corrupt_count(&self) -> Option<usize> {
        self.corrupt_mask
            .as_ref()
            .map(|m| m.iter().filter(|&&b| b).count())
    }

    /// Indices of rows not marked corrupt (all rows when there is no mask).
    pub fn clean_indices(&self) -> Vec<usize> {
        match &self.corrupt_mask {
            Some(mask) => (0..self.n()).filter(|&i| !mask[i]).collect(),
            None => (0..self.n()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(EmbeddingMatrix::new(0, 2, vec![]).is_err());
        assert!(EmbeddingMatrix::new(2, 0, vec![]).is_err());
        assert!(EmbeddingMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(EmbeddingMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = EmbeddingMatrix::new(2, 2, vec![0.0, 1.0, f64::NAN, 2.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
        assert!(EmbeddingMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn row_access_and_selection() {
        let x = EmbeddingMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(x.n(), 3);
        assert_eq!(x.dim(), 2);
        assert_eq!(x.row(1), &[3.0, 4.0]);
        let sub = x.select_rows(&[2, 0]).unwrap();
        assert_eq!(sub.as_slice(), &[5.0, 6.0, 1.0, 2.0]);
        assert!(x.select_rows(&[3]).is_err());
    }

    #[test]
    fn push_row_checks_dimension() {
        let mut x = EmbeddingMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(x.push_row(&[3.0, 4.0]).unwrap(), 1);
        assert!(x.push_row(&[1.0]).is_err());
        assert_eq!(x.n(), 2);
    }

    #[test]
    fn dataset_lengths_must_match() {
        let x = EmbeddingMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(Dataset::new(x.clone(), Some(vec![0]), None).is_err());
        assert!(Dataset::new(x.clone(), None, Some(vec![true])).is_err());
        let d = Dataset::new(x, Some(vec![0, 1]), Some(vec![false, true])).unwrap();
        assert_eq!(d.corrupt_count(), Some(1));
        assert_eq!(d.clean_indices(), vec![0]);
    }
}
