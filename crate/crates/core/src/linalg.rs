//! Dense symmetric positive-definite solves used by the fitters.
//!
//! nalgebra's own Cholesky will happily "succeed" on a Gram matrix built from
//! duplicated columns because rounding keeps the pivots a hair above zero, so
//! this module carries its own factorization with a *relative* pivot
//! tolerance: a pivot that collapses below `tol` times the original diagonal
//! entry marks the corresponding column as linearly dependent on its
//! predecessors, and the factorization reports which column failed.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Lower-triangular Cholesky factor of an SPD matrix.
pub struct SpdFactor<T: Real> {
    l: DMatrix<T>,
}

/// Relative pivot floor: pivots below `RELATIVE_PIVOT_TOL * a[j][j]` are
/// treated as exact rank deficiency. `1e3 * eps` keeps exactly duplicated
/// columns (pivot ratio near machine epsilon) well separated from genuinely
/// correlated ones.
fn pivot_tol<T: Real>() -> T {
    T::of_f64(1e3) * T::default_epsilon()
}

impl<T: Real> SpdFactor<T> {
    /// Factor `a = L Lᵀ`. On failure returns the index of the first column
    /// whose pivot collapsed (i.e. the first column linearly dependent on the
    /// columns before it, or a non-positive diagonal).
    pub fn new(a: &DMatrix<T>) -> Result<Self, usize> {
        let p = a.nrows();
        assert_eq!(p, a.ncols(), "Cholesky needs a square matrix");
        let tol = pivot_tol::<T>();
        let mut l = DMatrix::zeros(p, p);
        for j in 0..p {
            let orig = a[(j, j)];
            if orig <= T::zero() {
                return Err(j);
            }
            let mut d = orig;
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= tol * orig {
                return Err(j);
            }
            let lj = d.sqrt();
            l[(j, j)] = lj;
            for i in (j + 1)..p {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / lj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let p = self.dim();
        assert_eq!(b.len(), p, "rhs length mismatch");
        let mut x = b.clone();
        // Forward substitution L z = b.
        for i in 0..p {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        // Back substitution Lᵀ x = z.
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in (i + 1)..p {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Full inverse `A⁻¹`, column by column.
    pub fn inverse(&self) -> DMatrix<T> {
        let p = self.dim();
        let mut inv = DMatrix::zeros(p, p);
        let mut e = DVector::zeros(p);
        for j in 0..p {
            e[j] = T::one();
            let col = self.solve(&e);
            inv.set_column(j, &col);
            e[j] = T::zero();
        }
        // Symmetrize to wash out the last bits of rounding skew.
        let half = T::of_f64(0.5);
        let invt = inv.transpose();
        (inv + invt) * half
    }
}

/// Gram matrix `XᵀX`.
pub fn gram<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    x.transpose() * x
}

/// Extract the principal submatrix of `a` on the index set `idx`.
pub fn principal_submatrix<T: Real>(a: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    let k = idx.len();
    let mut out = DMatrix::zeros(k, k);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            out[(r, c)] = a[(i, j)];
        }
    }
    out
}

/// Extract the subvector of `v` on the index set `idx`.
pub fn subvector<T: Real>(v: &DVector<T>, idx: &[usize]) -> DVector<T> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Gather the named columns of `x` into a fresh `n × idx.len()` matrix.
pub fn select_columns<T: Real>(x: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, idx.len());
    for (c, &j) in idx.iter().enumerate() {
        out.set_column(c, &x.column(j));
    }
    out
}

/// Gather the given rows of `x` (with repetition allowed, e.g. bootstrap
/// resamples) into a fresh matrix.
pub fn select_rows<T: Real>(x: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    let mut out = DMatrix::zeros(rows.len(), x.ncols());
    for (r, &i) in rows.iter().enumerate() {
        for c in 0..x.ncols() {
            out[(r, c)] = x[(i, c)];
        }
    }
    out
}
