//! Validated symmetric positive semi-definite matrices with their spectra.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative symmetry tolerance applied at construction.
const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues below `-PSD_TOL * scale` reject the matrix outright.
const PSD_TOL: f64 = 1e-8;
/// Eigenvalues below `RANK_TOL * scale` mark the matrix rank deficient.
const RANK_TOL: f64 = 1e-10;

/// A symmetric positive semi-definite matrix carrying its eigenvalue
/// spectrum, which is the only thing the invariant transforms depend on.
///
/// Construction validates symmetry, near-positive-semi-definiteness and the
/// trace/eigenvalue-sum consistency of the solver output. Rank-deficient
/// matrices (numerically singular covariance blocks) are accepted and
/// flagged rather than rejected.
#[derive(Debug, Clone)]
pub struct SpectralMatrix {
    entries: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    rank_deficient: bool,
}

impl SpectralMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let m = entries.nrows();
        let max_abs = entries.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
        let sym_tol = SYMMETRY_TOL * max_abs.max(1e-300);
        for i in 0..m {
            for j in (i + 1)..m {
                if (entries[(i, j)] - entries[(j, i)]).abs() > sym_tol {
                    return Err(Error::NotSymmetric(format!(
                        "entries ({i},{j}) and ({j},{i}) differ by {}",
                        (entries[(i, j)] - entries[(j, i)]).abs()
                    )));
                }
            }
        }
        // Work on the symmetrized matrix so solver input is exact.
        let sym = (&entries + entries.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> =
            sym.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));

        let trace = sym.trace();
        let eig_sum: f64 = eigenvalues.iter().sum();
        let scale = trace.abs().max(max_abs).max(1e-300);
        if (trace - eig_sum).abs() > 1e-10 * scale {
            return Err(Error::Inconsistency(format!(
                "eigenvalue sum {eig_sum} does not match trace {trace}"
            )));
        }
        let min_eig = *eigenvalues.last().expect("m >= 1");
        if min_eig < -PSD_TOL * scale {
            return Err(Error::NotPositiveSemiDefinite(format!(
                "minimum eigenvalue {min_eig} below tolerance for scale {scale}"
            )));
        }
        let rank_deficient = min_eig <= RANK_TOL * scale;
        Ok(SpectralMatrix {
            entries: sym,
            eigenvalues,
            rank_deficient,
        })
    }

    /// Build from dense row data (row-major, square).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(
                "row lengths do not match the number of rows".into(),
            ));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    /// Diagonal matrix with the given (non-negative) diagonal.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::EmptyInput("diagonal".into()));
        }
        let m = diag.len();
        Self::new(DMatrix::from_fn(m, m, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    pub fn identity(m: usize) -> Self {
        Self::scaled_identity(m, 1.0)
    }

    pub fn scaled_identity(m: usize, c: f64) -> Self {
        Self::from_diagonal(&vec![c; m]).expect("scaled identity is always valid")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("m >= 1")
    }

    /// Numerically singular (or indefinite within tolerance).
    pub fn is_rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// Strict positive definiteness, for operations whose preconditions
    /// demand it.
    pub fn require_positive_definite(&self, what: &str) -> Result<()> {
        if self.rank_deficient {
            return Err(Error::NotPositiveSemiDefinite(format!(
                "{what} must be strictly positive definite; minimum eigenvalue {}",
                self.min_eigenvalue()
            )));
        }
        Ok(())
    }

    /// Conjugation `H' M H` by an orthogonal matrix, which permutes nothing
    /// in the spectrum; used by the invariance tests.
    pub fn conjugate_by(&self, h: &DMatrix<f64>) -> Result<Self> {
        if h.nrows() != self.dim() || h.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(
                "conjugating matrix has wrong shape".into(),
            ));
        }
        Self::new(h.transpose() * &self.entries * h)
    }
}
