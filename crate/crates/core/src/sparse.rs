//! Compressed sparse row storage for the spatial mass and stiffness matrices.

use std::ops::{AddAssign, Mul};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

/// Scalars that can be multiplied by real matrix entries.
pub trait Scalar:
    Copy + Default + Send + Sync + AddAssign + Mul<f64, Output = Self> + std::fmt::Debug
{
}
impl Scalar for f64 {}
impl Scalar for Complex64 {}

/// Sparsity of a tensor-product spline space with `q`-banded coupling per
/// direction. Columns in each row are sorted, so the position of an entry
/// follows from the multi-indices alone.
#[derive(Debug, Clone)]
pub struct CsrPattern {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    dims: Vec<usize>,
    band: usize,
}

impl CsrPattern {
    /// Pattern for active indices with per-direction sizes `dims` (first
    /// direction fastest) and half-bandwidth `band`.
    pub fn tensor_band(dims: &[usize], band: usize) -> Self {
        let nrows: usize = dims.iter().product();
        assert!(nrows < u32::MAX as usize, "too many unknowns for u32 column indices");
        let d = dims.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut idx = vec![0usize; d];
        let mut lo = vec![0usize; d];
        let mut hi = vec![0usize; d];
        for row in 0..nrows {
            unflatten(row, dims, &mut idx);
            for i in 0..d {
                lo[i] = idx[i].saturating_sub(band);
                hi[i] = (idx[i] + band).min(dims[i] - 1);
            }
            let mut cur = lo.clone();
            loop {
                col_idx.push(flatten(&cur, dims) as u32);
                // odometer, first direction fastest
                let mut i = 0;
                while i < d {
                    if cur[i] < hi[i] {
                        cur[i] += 1;
                        break;
                    }
                    cur[i] = lo[i];
                    i += 1;
                }
                if i == d {
                    break;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            row_ptr,
            col_idx,
            dims: dims.to_vec(),
            band,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Position in the value array of entry `(row, col)` given their
    /// multi-indices. Panics (in debug) if the entry is outside the band.
    #[inline]
    pub fn position(&self, row: usize, row_idx: &[usize], col_idx: &[usize]) -> usize {
        let mut pos = 0;
        let mut stride = 1;
        for i in 0..self.dims.len() {
            let lo = row_idx[i].saturating_sub(self.band);
            let hi = (row_idx[i] + self.band).min(self.dims[i] - 1);
            debug_assert!(col_idx[i] >= lo && col_idx[i] <= hi);
            pos += (col_idx[i] - lo) * stride;
            stride *= hi - lo + 1;
        }
        self.row_ptr[row] + pos
    }

    /// Estimated number of stored entries, without building the pattern.
    pub fn estimate_nnz(dims: &[usize], band: usize) -> usize {
        dims.iter()
            .map(|&n| {
                (0..n)
                    .map(|i| (i + band).min(n - 1) - i.saturating_sub(band) + 1)
                    .sum::<usize>()
            })
            .product()
    }
}

#[inline]
pub fn flatten(idx: &[usize], dims: &[usize]) -> usize {
    let mut flat = 0;
    for i in (0..dims.len()).rev() {
        flat = flat * dims[i] + idx[i];
    }
    flat
}

#[inline]
pub fn unflatten(mut flat: usize, dims: &[usize], idx: &mut [usize]) {
    for (i, &n) in dims.iter().enumerate() {
        idx[i] = flat % n;
        flat /= n;
    }
}

/// A square CSR matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pattern: Arc<CsrPattern>,
    pub values: Vec<f64>,
    pub symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>, symmetric: bool) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self {
            pattern,
            values,
            symmetric,
        }
    }

    pub fn pattern(&self) -> &CsrPattern {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let p = &self.pattern;
        let cols = &p.col_idx[p.row_ptr[row]..p.row_ptr[row + 1]];
        match cols.binary_search(&(col as u32)) {
            Ok(k) => self.values[p.row_ptr[row] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn apply<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        let p = &self.pattern;
        for (row, yr) in y.iter_mut().enumerate() {
            let mut acc = T::default();
            for k in p.row_ptr[row]..p.row_ptr[row + 1] {
                acc += x[p.col_idx[k] as usize] * self.values[k];
            }
            *yr = acc;
        }
    }

    /// `Y = A X` for the column-major blocks `X`, `Y` with `ncols` columns of
    /// length `nrows`. Columns are processed four at a time so that each
    /// matrix row is read once per block.
    pub fn apply_columns<T: Scalar>(&self, x: &[T], y: &mut [T], ncols: usize) {
        let n = self.nrows();
        assert_eq!(x.len(), n * ncols);
        assert_eq!(y.len(), n * ncols);
        const BLOCK: usize = 4;
        y.par_chunks_mut(n * BLOCK)
            .enumerate()
            .for_each(|(blk, yb)| {
                let c0 = blk * BLOCK;
                let nc = yb.len() / n;
                let xb = &x[c0 * n..(c0 + nc) * n];
                self.apply_block(xb, yb, nc);
            });
    }

    fn apply_block<T: Scalar>(&self, x: &[T], y: &mut [T], nc: usize) {
        let p = &self.pattern;
        let n = self.nrows();
        for row in 0..n {
            let range = p.row_ptr[row]..p.row_ptr[row + 1];
            let mut acc = [T::default(); 4];
            for k in range {
                let v = self.values[k];
                let j = p.col_idx[k] as usize;
                for c in 0..nc {
                    acc[c] += x[c * n + j] * v;
                }
            }
            for c in 0..nc {
                y[c * n + row] = acc[c];
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.nrows();
        let p = &self.pattern;
        let mut d = nalgebra::DMatrix::zeros(n, n);
        for row in 0..n {
            for k in p.row_ptr[row]..p.row_ptr[row + 1] {
                d[(row, p.col_idx[k] as usize)] = self.values[k];
            }
        }
        d
    }
}

/// Conjugate gradients for SPD `A`; returns the iteration count.
pub fn conjugate_gradient(a: &SparseMatrix, b: &[f64], x: &mut [f64], tol: f64, maxit: usize) -> usize {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return 0;
    }
    let mut ax = vec![0.0; n];
    a.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..maxit {
        if rr.sqrt() <= tol * bnorm {
            return it;
        }
        a.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    maxit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_pattern_positions() {
        let dims = [4, 3];
        let p = CsrPattern::tensor_band(&dims, 1);
        assert_eq!(p.nnz(), CsrPattern::estimate_nnz(&dims, 1));
        let mut ri = [0; 2];
        let mut ci = [0; 2];
        for row in 0..p.nrows {
            unflatten(row, &dims, &mut ri);
            let cols = &p.col_idx[p.row_ptr[row]..p.row_ptr[row + 1]];
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
            for (k, &c) in cols.iter().enumerate() {
                unflatten(c as usize, &dims, &mut ci);
                assert_eq!(p.position(row, &ri, &ci), p.row_ptr[row] + k);
            }
        }
    }

    #[test]
    fn multi_column_apply_matches_single() {
        let dims = [5, 4];
        let p = Arc::new(CsrPattern::tensor_band(&dims, 2));
        let mut a = SparseMatrix::zeros(p, false);
        for (k, v) in a.values.iter_mut().enumerate() {
            *v = ((k * 7919) % 13) as f64 - 6.0;
        }
        let n = a.nrows();
        let ncols = 7;
        let x: Vec<f64> = (0..n * ncols).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; n * ncols];
        a.apply_columns(&x, &mut y, ncols);
        for c in 0..ncols {
            let mut yc = vec![0.0; n];
            a.apply(&x[c * n..(c + 1) * n], &mut yc);
            assert_eq!(&y[c * n..(c + 1) * n], &yc[..]);
        }
    }
}
