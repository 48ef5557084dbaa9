//! Sparse complex matrices in compressed-row form.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{PdmError, Result};

pub type C64 = Complex64;

/// A sparse complex matrix acting on grid-sampled wavefunctions.
///
/// Hamiltonians are square; first-order operators that map node values onto
/// cell links are rectangular. Rows hold their column indices in ascending
/// order; exact zeros produced by assembly are dropped. `measure` is the quadrature weight of one grid node
/// (`hx·hy` in 2D, `h` in 1D) and defines the inner product used to normalize
/// eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
    measure: f64,
}

impl LinearOperator {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed in
    /// (row, col, insertion) order.
    pub fn from_triplets(dim: usize, triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        Self::from_triplets_rect(dim, dim, triplets)
    }

    pub fn from_triplets_rect(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= nrows || c >= ncols {
                return Err(PdmError::DimensionMismatch {
                    expected: if r >= nrows { nrows } else { ncols },
                    got: if r >= nrows { r + 1 } else { c + 1 },
                });
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(PdmError::InvalidParameter(format!(
                    "non-finite matrix entry {v} at ({r}, {c})"
                )));
            }
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut iter = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != C64::new(0.0, 0.0) {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
            measure: 1.0,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(vec![C64::new(1.0, 0.0); dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self::zeros_rect(dim, dim)
    }

    pub fn zeros_rect(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
            measure: 1.0,
        }
    }

    pub fn diagonal(diag: Vec<C64>) -> Self {
        let dim = diag.len();
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::with_capacity(dim);
        let mut values = Vec::with_capacity(dim);
        indptr.push(0);
        for (i, v) in diag.into_iter().enumerate() {
            if v != C64::new(0.0, 0.0) {
                indices.push(i);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: dim,
            ncols: dim,
            indptr,
            indices,
            values,
            measure: 1.0,
        }
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        Self::diagonal(diag.iter().map(|&d| C64::new(d, 0.0)).collect())
    }

    /// Row count; the dimension of a square operator.
    pub fn dim(&self) -> usize {
        self.nrows
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn with_measure(mut self, measure: f64) -> Self {
        self.measure = measure;
        self
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Stored entries in (row, col) order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(PdmError::DimensionMismatch {
                expected: self.nrows * self.ncols,
                got: other.nrows * other.ncols,
            });
        }
        Ok(())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(PdmError::DimensionMismatch {
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let n = self.nrows;
        let mut acc = vec![C64::new(0.0, 0.0); other.ncols];
        let mut seen = vec![usize::MAX; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..n {
            cols.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if seen[c] != r {
                        seen[c] = r;
                        acc[c] = C64::new(0.0, 0.0);
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                if acc[c] != C64::new(0.0, 0.0) {
                    indices.push(c);
                    values.push(acc[c]);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: n,
            ncols: other.ncols,
            indptr,
            indices,
            values,
            measure: self.measure,
        })
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.check_shape(other)?;
        let n = self.nrows;
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..n {
            let mut lhs = self.row(r).peekable();
            let mut rhs = other.row(r).peekable();
            loop {
                let (c, v) = match (lhs.peek(), rhs.peek()) {
                    (Some(&(cl, vl)), Some(&(cr, vr))) => {
                        if cl == cr {
                            lhs.next();
                            rhs.next();
                            (cl, a * vl + b * vr)
                        } else if cl < cr {
                            lhs.next();
                            (cl, a * vl)
                        } else {
                            rhs.next();
                            (cr, b * vr)
                        }
                    }
                    (Some(&(cl, vl)), None) => {
                        lhs.next();
                        (cl, a * vl)
                    }
                    (None, Some(&(cr, vr))) => {
                        rhs.next();
                        (cr, b * vr)
                    }
                    (None, None) => break,
                };
                if v != C64::new(0.0, 0.0) {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: n,
            ncols: self.ncols,
            indptr,
            indices,
            values,
            measure: self.measure,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(C64::new(1.0, 0.0), other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(C64::new(1.0, 0.0), other, C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out.drop_zeros()
    }

    fn drop_zeros(self) -> Self {
        if self.values.iter().all(|v| *v != C64::new(0.0, 0.0)) {
            return self;
        }
        let triplets = self.entries().collect();
        Self::from_triplets_rect(self.nrows, self.ncols, triplets)
            .expect("entries of a valid operator")
            .with_measure(self.measure)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        self.transpose_with(|v| v.conj())
    }

    pub fn transpose(&self) -> Self {
        self.transpose_with(|v| v)
    }

    fn transpose_with(&self, f: impl Fn(C64) -> C64) -> Self {
        let n = self.ncols;
        let mut counts = vec![0usize; n + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![C64::new(0.0, 0.0); self.nnz()];
        for (r, c, v) in self.entries() {
            let slot = next[c];
            indices[slot] = r;
            values[slot] = f(v);
            next[c] += 1;
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
            measure: self.measure,
        }
    }

    /// `(H + H†)/2`.
    pub fn hermitian_part(&self) -> Self {
        self.combine(C64::new(0.5, 0.0), &self.adjoint(), C64::new(0.5, 0.0))
            .expect("same dimension")
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols, "matvec input length");
        assert_eq!(y.len(), self.nrows, "matvec output length");
        for (r, out) in y.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *out = s;
        }
    }

    /// Largest entry modulus, `‖H‖_max`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum; bounds the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |H_mn − conj(H_nm)|` over stored entries, absent entries read as
    /// zero. Infinite for a non-square matrix.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.entries()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// Kronecker product `a ⊗ b`; with x-fastest indexing `I_y ⊗ D_x` acts along x.
    pub fn kron(a: &Self, b: &Self) -> Self {
        let mut triplets = Vec::with_capacity(a.nnz() * b.nnz());
        for (ra, ca, va) in a.entries() {
            for (rb, cb, vb) in b.entries() {
                triplets.push((ra * b.nrows + rb, ca * b.ncols + cb, va * vb));
            }
        }
        Self::from_triplets_rect(a.nrows * b.nrows, a.ncols * b.ncols, triplets).expect("kron indices in range")
    }

    /// Coordinate-list dump, one `row col real imag` line per stored entry,
    /// sorted by (row, col), 17 significant digits.
    pub fn write_coo<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (r, c, v) in self.entries() {
            writeln!(w, "{r} {c} {:.16e} {:.16e}", v.re, v.im)?;
        }
        Ok(())
    }
}
