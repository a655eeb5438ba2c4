//! Dense symmetric matrices with a cached eigendecomposition.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest supported dimension. Verification grids keep d ≤ 3; the matrix
/// calculus itself is exercised up to d = 16 in property tests.
pub const MAX_DIM: usize = 16;

/// Eigendecomposition with eigenvalues in non-increasing order and a
/// deterministic orthonormal eigenvector basis (columns of `vectors`).
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Eigenvalues, λ₁ ≥ λ₂ ≥ … ≥ λ_d.
    pub values: Vec<f64>,
    /// Column-major d×d orthonormal matrix; column k pairs with `values[k]`.
    pub vectors: Vec<f64>,
}

impl Eigen {
    pub fn vector(&self, k: usize, dim: usize) -> &[f64] {
        &self.vectors[k * dim..(k + 1) * dim]
    }
}

/// Symmetric d×d real matrix, stored as the packed upper triangle so symmetry
/// holds by construction. The eigendecomposition is computed on first use and
/// cached.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    dim: usize,
    /// Row-major packed upper triangle: (i,j), i ≤ j.
    data: Vec<f64>,
    eigen: OnceLock<Eigen>,
}

impl PartialEq for SymMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.data == other.data
    }
}

fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl SymMatrix {
    fn check_dim(dim: usize) -> Result<()> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidSpec(format!(
                "matrix dimension {dim} outside supported range 1..={MAX_DIM}"
            )));
        }
        Ok(())
    }

    pub fn zeros(dim: usize) -> Self {
        Self::check_dim(dim).expect("dimension in range");
        SymMatrix {
            dim,
            data: vec![0.0; packed_len(dim)],
            eigen: OnceLock::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(entries: &[f64]) -> Self {
        Self::from_fn(entries.len(), |i, j| if i == j { entries[i] } else { 0.0 })
    }

    /// Build from a function of (row, col); only the upper triangle is read.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::check_dim(dim).expect("dimension in range");
        let mut data = Vec::with_capacity(packed_len(dim));
        for i in 0..dim {
            for j in i..dim {
                data.push(f(i, j));
            }
        }
        SymMatrix {
            dim,
            data,
            eigen: OnceLock::new(),
        }
    }

    /// Build from a row-major dense matrix, averaging the two triangles.
    /// Errors when the input is not symmetric to within `1e-9 · max|entry|`.
    pub fn from_dense(dim: usize, row_major: &[f64]) -> Result<Self> {
        Self::check_dim(dim)?;
        if row_major.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: row_major.len(),
            });
        }
        let scale = row_major.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = row_major[i * dim + j];
                let b = row_major[j * dim + i];
                if (a - b).abs() > 1e-9 * (1.0 + scale) {
                    return Err(Error::InvalidSpec(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| {
            0.5 * (row_major[i * dim + j] + row_major[j * dim + i])
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        r * self.dim - r * (r + 1) / 2 + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    /// Set entry (i,j) = (j,i); drops the cached eigendecomposition.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let off = self.offset(i, j);
        self.data[off] = v;
        self.eigen = OnceLock::new();
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.get(i, j);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Frobenius inner product ⟨A,B⟩ = Tr(BᵀA).
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "inner product dimension mismatch");
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.get(i, i) * other.get(i, i);
            for j in (i + 1)..self.dim {
                acc += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        SymMatrix::from_fn(self.dim, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        SymMatrix::from_fn(self.dim, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scale(&self, t: f64) -> SymMatrix {
        SymMatrix::from_fn(self.dim, |i, j| t * self.get(i, j))
    }

    /// Rank-one vvᵀ.
    pub fn outer(v: &[f64]) -> SymMatrix {
        SymMatrix::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// ⟨v, Av⟩.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Eigendecomposition, computed once and cached. Eigenvalues descend;
    /// each eigenvector is sign-normalized so its largest-magnitude entry is
    /// positive, making the basis deterministic for reproducible runs.
    pub fn eigen(&self) -> &Eigen {
        self.eigen.get_or_init(|| {
            let d = self.dim;
            let m = DMatrix::from_fn(d, d, |i, j| self.get(i, j));
            let se = m.symmetric_eigen();
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| {
                se.eigenvalues[b]
                    .partial_cmp(&se.eigenvalues[a])
                    .expect("finite eigenvalues")
                    .then(a.cmp(&b))
            });
            let mut values = Vec::with_capacity(d);
            let mut vectors = vec![0.0; d * d];
            for (k, &src) in order.iter().enumerate() {
                values.push(se.eigenvalues[src]);
                let col = se.eigenvectors.column(src);
                let mut lead = 0;
                for r in 1..d {
                    if col[r].abs() > col[lead].abs() + 1e-14 {
                        lead = r;
                    }
                }
                let flip = if col[lead] < 0.0 { -1.0 } else { 1.0 };
                for r in 0..d {
                    vectors[k * d + r] = flip * col[r];
                }
            }
            Eigen { values, vectors }
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen().values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty spectrum")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// U · diag(f(λ)) · Uᵀ on the cached basis.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim;
        let eig = self.eigen();
        let mapped: Vec<f64> = eig.values.iter().map(|&l| f(l)).collect();
        Self::from_eigenbasis(d, &mapped, &eig.vectors)
    }

    /// Assemble Σ_k μ_k u_k u_kᵀ from eigenvalue weights and a column-major
    /// orthonormal basis.
    pub fn from_eigenbasis(dim: usize, weights: &[f64], vectors: &[f64]) -> SymMatrix {
        SymMatrix::from_fn(dim, |i, j| {
            (0..dim)
                .map(|k| weights[k] * vectors[k * dim + i] * vectors[k * dim + j])
                .sum()
        })
    }

    /// Inverse of a positive definite matrix through the spectral cache.
    pub fn inverse_spd(&self) -> Result<SymMatrix> {
        let min = self.min_eigenvalue();
        if min <= 1e-12 {
            return Err(Error::SingularMatrix { min_eig: min });
        }
        Ok(self.spectral_map(|l| 1.0 / l))
    }

    /// Principal square root of a PSD matrix (eigenvalues clamped at zero
    /// within `1e-10` slack; more negative spectra are rejected).
    pub fn sqrt_psd(&self) -> Result<SymMatrix> {
        let min = self.min_eigenvalue();
        if min < -1e-10 * (1.0 + self.max_eigenvalue().abs()) {
            return Err(Error::InvalidSpec(format!(
                "sqrt of a non-PSD matrix (λ_min = {min:.3e})"
            )));
        }
        Ok(self.spectral_map(|l| l.max(0.0).sqrt()))
    }

    pub fn is_psd(&self, slack: f64) -> bool {
        self.min_eigenvalue() >= -slack
    }

    /// log det of a positive definite matrix.
    pub fn log_det_spd(&self) -> Result<f64> {
        let min = self.min_eigenvalue();
        if min <= 0.0 {
            return Err(Error::SingularMatrix { min_eig: min });
        }
        Ok(self.eigenvalues().iter().map(|l| l.ln()).sum())
    }
}

/// Dense row-major product of two symmetric matrices (result is generally not
/// symmetric).
pub(crate) fn sym_product_dense(a: &SymMatrix, b: &SymMatrix) -> Vec<f64> {
    let d = a.dim();
    assert_eq!(d, b.dim());
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a.get(i, k) * b.get(k, j);
            }
            out[i * d + j] = acc;
        }
    }
    out
}

pub(crate) fn dense_trace(m: &[f64], d: usize) -> f64 {
    (0..d).map(|i| m[i * d + i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs_matrix() {
        let x = SymMatrix::from_fn(4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 4.0 } else { 0.0 });
        let eig = x.eigen();
        let rebuilt = SymMatrix::from_eigenbasis(4, &eig.values, &eig.vectors);
        let err = x.sub(&rebuilt).norm_frobenius();
        assert!(
            err <= 10.0 * f64::EPSILON * x.norm_frobenius().max(1.0),
            "reconstruction error {err}"
        );
    }

    #[test]
    fn eigenvalues_descend() {
        let x = SymMatrix::diag(&[1.0, 5.0, -2.0, 3.0]);
        let vals = x.eigenvalues();
        assert_eq!(vals, &[5.0, 3.0, 1.0, -2.0]);
        for w in x.eigenvalues().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eigenvectors_orthonormal() {
        let x = SymMatrix::from_fn(5, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let eig = x.eigen();
        for a in 0..5 {
            for b in 0..5 {
                let dot: f64 = (0..5).map(|r| eig.vectors[a * 5 + r] * eig.vectors[b * 5 + r]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "gram({a},{b}) = {dot}");
            }
        }
    }

    #[test]
    fn inverse_spd_round_trip() {
        let x = SymMatrix::from_fn(3, |i, j| if i == j { 3.0 + i as f64 } else { 0.5 });
        let inv = x.inverse_spd().unwrap();
        let prod = sym_product_dense(&x, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_guard() {
        assert!(SymMatrix::from_dense(2, &[1.0, 2.0, 2.0, 1.0]).is_ok());
        assert!(SymMatrix::from_dense(2, &[1.0, 2.0, 2.5, 1.0]).is_err());
    }
}
