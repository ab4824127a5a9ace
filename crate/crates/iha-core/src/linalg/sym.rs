//! Dense symmetric matrix storage.

use super::LinalgError;

/// A dense symmetric matrix with full row-major storage. Symmetry is enforced
/// on construction (either verified exactly or produced by mirroring), so
/// `get(i, j) == get(j, i)` holds bit-for-bit afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Build from full row-major entries, verifying exact symmetry.
    pub fn from_rows(dim: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        assert!(dim >= 1, "dimension must be at least 1");
        assert_eq!(entries.len(), dim * dim, "entry count must be dim^2");
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFiniteInput);
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if a != b {
                    return Err(LinalgError::NotSymmetric {
                        i,
                        j,
                        delta: (a - b).abs(),
                    });
                }
            }
        }
        Ok(Self { dim, entries })
    }

    /// Build by evaluating `f(i, j)` for `i <= j` and mirroring the result.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        Self { dim, entries }
    }

    /// Symmetrize an arbitrary square matrix: `(A + A') / 2`.
    pub fn from_average(dim: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        Self::from_fn(dim, |i, j| {
            0.5 * (entries[i * dim + j] + entries[j * dim + i])
        })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1);
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Full row-major entries (mirrored).
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let row = &self.entries[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(v).map(|(a, x)| a * x).sum()
            })
            .collect()
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Relative Frobenius distance `|A - B|_F / |B|_F` (absolute if `B = 0`).
    pub fn rel_frobenius_distance(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let diff: f64 = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let denom = other.frobenius_norm();
        if denom == 0.0 {
            diff
        } else {
            diff / denom
        }
    }

    /// Scale every entry in place.
    pub fn scale(&mut self, s: f64) {
        self.entries.iter_mut().for_each(|x| *x *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_rejects_asymmetry() {
        let err = SymMatrix::from_rows(2, vec![1.0, 2.0, 2.5, 3.0]).unwrap_err();
        assert!(matches!(err, LinalgError::NotSymmetric { .. }));
    }

    #[test]
    fn from_rows_rejects_non_finite() {
        let err = SymMatrix::from_rows(2, vec![1.0, f64::NAN, f64::NAN, 3.0]).unwrap_err();
        assert!(matches!(err, LinalgError::NonFiniteInput));
    }

    #[test]
    fn from_fn_mirrors_exactly() {
        let m = SymMatrix::from_fn(3, |i, j| (i * 10 + j) as f64);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn apply_matches_hand_product() {
        let m = SymMatrix::from_rows(2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(m.apply(&[1.0, 1.0]), vec![3.0, 4.0]);
    }
}
