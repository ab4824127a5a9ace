//! Symmetric eigendecomposition and conditioned inverse application.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{LinalgError, SymMatrix};

const EIGEN_MAGIC: &[u8; 7] = b"IHAEIG1";

/// How to apply the inverse of a spectrum with near-zero or slightly negative
/// eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ConditioningPolicy {
    /// Add `epsilon` to every eigenvalue before inverting.
    Damped { epsilon: f64 },
    /// Keep only eigenvalues strictly above `epsilon`; drop the rest.
    LowRank { epsilon: f64 },
}

impl ConditioningPolicy {
    pub fn damped(epsilon: f64) -> Result<Self, LinalgError> {
        if epsilon < 0.0 || !epsilon.is_finite() {
            return Err(LinalgError::InvalidPolicy(format!(
                "damped epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(Self::Damped { epsilon })
    }

    pub fn low_rank(epsilon: f64) -> Result<Self, LinalgError> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(LinalgError::InvalidPolicy(format!(
                "low-rank epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        Ok(Self::LowRank { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Self::Damped { epsilon } | Self::LowRank { epsilon } => *epsilon,
        }
    }
}

impl Default for ConditioningPolicy {
    /// Damping with epsilon 0.2, the setting that performs best across the
    /// audited model families.
    fn default() -> Self {
        Self::Damped { epsilon: 0.2 }
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and orthonormal eigenvectors stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    dim: usize,
    /// `eigenvalues[0] >= eigenvalues[1] >= ...`
    eigenvalues: Vec<f64>,
    /// Column `k` (the eigenvector of `eigenvalues[k]`) occupies
    /// `vectors[k * dim..(k + 1) * dim]`.
    vectors: Vec<f64>,
}

/// Eigendecompose a symmetric matrix. Eigenvalues come back descending.
pub fn sym_eigendecompose(m: &SymMatrix) -> Result<EigenDecomposition, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let dim = m.dim();
    let dense = DMatrix::from_fn(dim, dim, |i, j| m.get(i, j));
    let eig = SymmetricEigen::new(dense);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("symmetric eigenvalues are finite")
    });

    let mut eigenvalues = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim * dim);
    for &k in &order {
        eigenvalues.push(eig.eigenvalues[k]);
        vectors.extend(eig.eigenvectors.column(k).iter());
    }
    Ok(EigenDecomposition {
        dim,
        eigenvalues,
        vectors,
    })
}

impl EigenDecomposition {
    /// Construct directly from a sorted spectrum and column-major orthonormal
    /// basis. Used by tests that need hand-built degenerate spectra.
    pub fn from_parts(
        dim: usize,
        eigenvalues: Vec<f64>,
        vectors: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if eigenvalues.len() != dim || vectors.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                got: eigenvalues.len(),
            });
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(LinalgError::InvalidPolicy(
                "eigenvalues must be sorted descending".into(),
            ));
        }
        Ok(Self {
            dim,
            eigenvalues,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvector for the k-th largest eigenvalue.
    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    /// Coefficients of `v` in the eigenbasis: `U' v`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok((0..self.dim)
            .map(|k| super::dot(self.eigenvector(k), v))
            .collect())
    }

    /// Reassemble `U c` from eigenbasis coefficients.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (o, u) in out.iter_mut().zip(self.eigenvector(k)) {
                    *o += c * u;
                }
            }
        }
        out
    }

    /// Apply the matrix itself: `U diag(sigma) U' v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut coeffs = self.project(v)?;
        for (c, s) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= s;
        }
        Ok(self.combine(&coeffs))
    }

    /// Rebuild the dense matrix `U diag(sigma) U'`.
    pub fn reconstruct(&self) -> SymMatrix {
        let d = self.dim;
        let mut full = vec![0.0; d * d];
        for k in 0..d {
            let s = self.eigenvalues[k];
            let u = self.eigenvector(k);
            for i in 0..d {
                let si = s * u[i];
                for j in 0..d {
                    full[i * d + j] += si * u[j];
                }
            }
        }
        SymMatrix::from_average(d, &full)
    }

    /// Per-mode inverse factors under `policy`: damped modes use
    /// `1 / (sigma + eps)`, low-rank keeps `1 / sigma` for `sigma > eps` and
    /// zeroes the rest.
    pub fn inverse_factors(&self, policy: ConditioningPolicy) -> Result<Vec<f64>, LinalgError> {
        match policy {
            ConditioningPolicy::Damped { epsilon } => {
                let min = self.eigenvalues[self.dim - 1] + epsilon;
                if min <= 0.0 {
                    return Err(LinalgError::IllConditioned { sigma: min });
                }
                Ok(self
                    .eigenvalues
                    .iter()
                    .map(|s| 1.0 / (s + epsilon))
                    .collect())
            }
            ConditioningPolicy::LowRank { epsilon } => Ok(self
                .eigenvalues
                .iter()
                .map(|&s| if s > epsilon { 1.0 / s } else { 0.0 })
                .collect()),
        }
    }

    /// Write as: magic `IHAEIG1`, dim u64 LE, eigenvalues f64 LE, then
    /// eigenvectors column-major f64 LE.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), LinalgError> {
        w.write_all(EIGEN_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for v in &self.eigenvalues {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.vectors {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, LinalgError> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != EIGEN_MAGIC {
            return Err(LinalgError::FormatError(format!(
                "bad eigendecomposition magic {magic:?}"
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let dim = u64::from_le_bytes(b8) as usize;
        if dim == 0 {
            return Err(LinalgError::FormatError("zero dimension".into()));
        }
        let mut read_f64s = |n: usize| -> Result<Vec<f64>, LinalgError> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let eigenvalues = read_f64s(dim)?;
        let vectors = read_f64s(dim * dim)?;
        Self::from_parts(dim, eigenvalues, vectors)
    }

    pub fn save(&self, path: &Path) -> Result<(), LinalgError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LinalgError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

/// Apply the conditioned inverse to `v`.
///
/// Damped: `sum_i (u_i'v) / (sigma_i + eps) u_i`. Low-rank: the same sum
/// restricted to `sigma_i > eps`, dividing by the raw `sigma_i`.
pub fn conditioned_inverse_apply(
    decomp: &EigenDecomposition,
    policy: ConditioningPolicy,
    v: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    if v.len() != decomp.dim {
        return Err(LinalgError::DimensionMismatch {
            expected: decomp.dim,
            got: v.len(),
        });
    }
    let factors = decomp.inverse_factors(policy)?;
    let mut coeffs = decomp.project(v)?;
    for (c, f) in coeffs.iter_mut().zip(&factors) {
        *c *= f;
    }
    Ok(decomp.combine(&coeffs))
}
