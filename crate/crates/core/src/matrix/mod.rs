//! Dense real matrix algebra.
//!
//! Everything is `f64` and dense; global matrices top out at a few hundred
//! rows. [`SymMatrix`] is the carrier for every symmetric object (storage
//! matrices, supply-rate blocks, Laplacians, LMI left-hand sides) and is
//! always stored exactly symmetric.

mod eigen;
mod expm;

pub use eigen::{eig_general, eig_sym, SymEigen};
pub use expm::{expm, expm_with_integral};
pub use nalgebra::Complex;

use crate::error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Relative symmetry tolerance accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A real symmetric matrix, stored as `(M + Mᵀ)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Checks `|M − Mᵀ|_max ≤ 1e−12·(1 + |M|_max)` and stores the symmetrized
    /// matrix.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.amax();
        let asym = (&m - m.transpose()).amax();
        let tol = SYMMETRY_TOL * (1.0 + scale);
        if asym > tol || asym.is_nan() {
            return Err(Error::NotSymmetric {
                asymmetry: asym,
                tolerance: tol,
            });
        }
        Ok(Self::from_symmetrized(m))
    }

    /// Symmetrizes without checking. Meant for matrices that are symmetric
    /// by construction up to rounding.
    pub fn from_symmetrized(m: Matrix) -> Self {
        assert!(m.is_square(), "symmetric matrix must be square");
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn scalar(v: f64) -> Self {
        Self(Matrix::from_element(1, 1, v))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `Tᵀ M T`.
    pub fn congruence(&self, t: &Matrix) -> Self {
        Self::from_symmetrized(t.transpose() * &self.0 * t)
    }

    pub fn eig(&self) -> Result<SymEigen> {
        eig_sym(self)
    }

    pub fn min_eig(&self) -> Result<f64> {
        Ok(self.eig()?.min())
    }

    pub fn max_eig(&self) -> Result<f64> {
        Ok(self.eig()?.max())
    }

    /// Inverse via eigen-decomposition; errors when an eigenvalue is
    /// numerically zero.
    pub fn inverse(&self) -> Result<SymMatrix> {
        let e = self.eig()?;
        let big = e.spectral_norm();
        let small = e.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if self.dim() > 0 && small <= 1e-14 * big.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!(
                "symmetric inverse: smallest |eigenvalue| {small:e}, largest {big:e}"
            )));
        }
        Ok(Self::from_symmetrized(e.map(|v| 1.0 / v)))
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

/// Sign classes of a symmetric matrix. The first four double as query modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    NegativeDefinite,
    NegativeSemidefinite,
    Indefinite,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct DefinitenessVerdict {
    /// Strongest class the spectrum falls in.
    pub kind: Definiteness,
    /// Whether the queried mode holds.
    pub holds: bool,
    pub min_eig: f64,
    pub max_eig: f64,
    pub tol_used: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Inertia {
    pub neg: usize,
    pub zero: usize,
    pub pos: usize,
}

/// `1e−9·(1 + max|λ|)`, floored at `1e−12`.
pub fn default_tol(spectral_norm: f64) -> f64 {
    (1e-9 * (1.0 + spectral_norm)).max(1e-12)
}

fn classify(min: f64, max: f64, tol: f64) -> Definiteness {
    if min > tol {
        Definiteness::PositiveDefinite
    } else if max < -tol {
        Definiteness::NegativeDefinite
    } else if min > -tol {
        Definiteness::PositiveSemidefinite
    } else if max < tol {
        Definiteness::NegativeSemidefinite
    } else {
        Definiteness::Indefinite
    }
}

pub fn definiteness(m: &SymMatrix, mode: Definiteness, tol: Option<f64>) -> Result<DefinitenessVerdict> {
    let e = m.eig()?;
    let (min, max) = if m.dim() == 0 { (0.0, 0.0) } else { (e.min(), e.max()) };
    let tol = tol.unwrap_or_else(|| default_tol(e.spectral_norm()));
    if tol < 0.0 {
        return Err(Error::InvalidArgument(format!("negative tolerance {tol}")));
    }
    let holds = match mode {
        Definiteness::PositiveDefinite => min > tol,
        Definiteness::PositiveSemidefinite => min > -tol,
        Definiteness::NegativeDefinite => max < -tol,
        Definiteness::NegativeSemidefinite => max < tol,
        Definiteness::Indefinite => min < -tol && max > tol,
    };
    Ok(DefinitenessVerdict {
        kind: classify(min, max, tol),
        holds,
        min_eig: min,
        max_eig: max,
        tol_used: tol,
    })
}

pub fn is_pd(m: &SymMatrix) -> Result<bool> {
    Ok(definiteness(m, Definiteness::PositiveDefinite, None)?.holds)
}

pub fn is_nd(m: &SymMatrix) -> Result<bool> {
    Ok(definiteness(m, Definiteness::NegativeDefinite, None)?.holds)
}

pub fn is_psd(m: &SymMatrix) -> Result<bool> {
    Ok(definiteness(m, Definiteness::PositiveSemidefinite, None)?.holds)
}

pub fn inertia(m: &SymMatrix, tol: Option<f64>) -> Result<Inertia> {
    let e = m.eig()?;
    let tol = tol.unwrap_or_else(|| default_tol(e.spectral_norm()));
    let mut out = Inertia {
        neg: 0,
        zero: 0,
        pos: 0,
    };
    for &v in e.values.iter() {
        if v < -tol {
            out.neg += 1;
        } else if v > tol {
            out.pos += 1;
        } else {
            out.zero += 1;
        }
    }
    Ok(out)
}

/// Which diagonal block of `[A B; Bᵀ C]` is eliminated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Eliminate {
    /// Returns `A − B C⁻¹ Bᵀ`.
    Trailing,
    /// Returns `C − Bᵀ A⁻¹ B`.
    Leading,
}

/// Schur complement of the partition `[A B; Bᵀ C]` with `A` of size `lead`.
pub fn schur_complement(m: &SymMatrix, lead: usize, which: Eliminate) -> Result<SymMatrix> {
    let n = m.dim();
    if lead == 0 || lead >= n {
        return Err(Error::Dimension(format!(
            "leading block size {lead} must lie strictly between 0 and {n}"
        )));
    }
    let mm = m.as_matrix();
    let a = mm.view((0, 0), (lead, lead)).into_owned();
    let b = mm.view((0, lead), (lead, n - lead)).into_owned();
    let c = mm.view((lead, lead), (n - lead, n - lead)).into_owned();
    let (keep, pivot, coupling) = match which {
        Eliminate::Trailing => (a, c, b.transpose()),
        Eliminate::Leading => (c, a, b),
    };
    let pivot = SymMatrix::from_symmetrized(pivot);
    let pe = pivot.eig()?;
    let big = pe.spectral_norm();
    let small = pe.values.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    let condition = if small > 0.0 { big / small } else { f64::INFINITY };
    if small <= 1e-12 * big.max(1.0) {
        return Err(Error::SingularPivot { condition });
    }
    let inv = pe.map(|v| 1.0 / v);
    Ok(SymMatrix::from_symmetrized(
        keep - coupling.transpose() * inv * coupling,
    ))
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Assembles a block matrix from a grid of blocks with consistent row and
/// column sizes.
pub fn block(grid: &[Vec<Matrix>]) -> Result<Matrix> {
    if grid.is_empty() {
        return Ok(Matrix::zeros(0, 0));
    }
    let heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = grid[0].iter().map(|b| b.ncols()).collect();
    let mut out = Matrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r = 0;
    for (i, row) in grid.iter().enumerate() {
        if row.len() != widths.len() {
            return Err(Error::Dimension(format!("block row {i} has {} blocks", row.len())));
        }
        let mut c = 0;
        for (j, b) in row.iter().enumerate() {
            if b.nrows() != heights[i] || b.ncols() != widths[j] {
                return Err(Error::Dimension(format!(
                    "block ({i},{j}) is {}x{}, expected {}x{}",
                    b.nrows(),
                    b.ncols(),
                    heights[i],
                    widths[j]
                )));
            }
            out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
            c += widths[j];
        }
        r += heights[i];
    }
    Ok(out)
}

/// Inverts `[Q S; Sᵀ R]` and splits the inverse into the same partition.
pub fn block_inverse_2x2(q: &SymMatrix, s: &Matrix, r: &SymMatrix) -> Result<(SymMatrix, Matrix, SymMatrix)> {
    let p = q.dim();
    let m = r.dim();
    if s.nrows() != p || s.ncols() != m {
        return Err(Error::Dimension(format!(
            "S is {}x{}, expected {p}x{m}",
            s.nrows(),
            s.ncols()
        )));
    }
    let full = block(&[
        vec![q.as_matrix().clone(), s.clone()],
        vec![s.transpose(), r.as_matrix().clone()],
    ])?;
    let full = SymMatrix::from_symmetrized(full);
    let inv = full
        .inverse()
        .map_err(|_| Error::Singular("block matrix [Q S; Sᵀ R] is not invertible".into()))?;
    let residual = (full.as_matrix() * inv.as_matrix() - Matrix::identity(p + m, p + m)).amax();
    if residual > 1e-9 {
        return Err(Error::Singular(format!(
            "block inverse residual {residual:e} exceeds 1e-9"
        )));
    }
    let im = inv.as_matrix();
    Ok((
        SymMatrix::from_symmetrized(im.view((0, 0), (p, p)).into_owned()),
        im.view((0, p), (p, m)).into_owned(),
        SymMatrix::from_symmetrized(im.view((p, p), (m, m)).into_owned()),
    ))
}

/// Pseudoinverse of a PSD matrix; eigenvalues below `1e−10·λ_max` count as
/// zero.
pub fn pinv_sym_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let e = m.eig()?;
    let cut = 1e-10 * e.max().max(0.0);
    Ok(SymMatrix::from_symmetrized(e.map(
        |v| {
            if v > cut {
                1.0 / v
            } else {
                0.0
            }
        },
    )))
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eig_general(m)?.iter().fold(0.0, |acc, c| acc.max(c.norm())))
}

/// All-ones column of length `n`.
pub fn ones(n: usize) -> Vector {
    Vector::from_element(n, 1.0)
}


/// Serde adapter storing a [`Matrix`] as a list of rows.
pub mod rows {
    use super::Matrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != nc) {
            return Err("ragged matrix rows".into());
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err("non-finite matrix entry".into());
        }
        Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Matrix>, D::Error> {
            let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
            rows.map(|r| from_rows(&r).map_err(D::Error::custom)).transpose()
        }
    }
}

impl serde::Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        rows::serialize(&self.0, s)
    }
}

impl<'de> serde::Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = rows::deserialize(d)?;
        SymMatrix::new(m).map_err(serde::de::Error::custom)
    }
}
