//! Minimal compressed-sparse-row matrix support.
//!
//! The affinity matrix lives on `u × u` assignment slots where `u = Σ|S_i|`;
//! after threshold sparsification most entries are zero, so a CSR layout
//! keeps both memory and the solver's matrix–vector product proportional to
//! the number of stored entries. Only the handful of operations the pipeline
//! needs are implemented — this is not a general sparse-algebra library.

use ndarray::Array2;

/// Compressed-sparse-row matrix of `f64` values.
///
/// Stored entries may include explicit zeros only if the caller inserts
/// them; the constructors in this crate drop exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from a dense array, dropping exact zeros.
    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let (rows, cols) = dense.dim();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..rows {
            for c in 0..cols {
                let v = dense[[r, c]];
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a CSR matrix from triples sorted by `(row, col)`.
    ///
    /// Returns `None` when the triples are out of range, unsorted, or contain
    /// duplicate coordinates. Exact zeros are dropped.
    pub fn from_sorted_triples(
        rows: usize,
        cols: usize,
        triples: &[(usize, usize, f64)],
    ) -> Option<Self> {
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triples.len());
        let mut values = Vec::with_capacity(triples.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triples {
            if r >= rows || c >= cols {
                return None;
            }
            if let Some(prev) = last {
                if (r, c) <= prev {
                    return None;
                }
            }
            last = Some((r, c));
            if v != 0.0 {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Some(CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Materializes the matrix densely. Intended for small fixtures and the
    /// exhaustive oracle, not for production-sized affinity matrices.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                dense[[r, c]] = v;
            }
        }
        dense
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`, sorted by column.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Value at `(r, c)`; zero when the entry is not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Matrix–vector product `self · x`.
    ///
    /// The reduction order over each row is fixed (ascending column), so the
    /// result is bit-reproducible across runs.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "dimension mismatch in mul_vec");
        let mut out = vec![0.0; self.rows];
        for (r, slot) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            *slot = acc;
        }
        out
    }

    /// Multiplies every stored entry of row `r` by `factors[r]`.
    pub fn scale_rows(&mut self, factors: &[f64]) {
        assert_eq!(factors.len(), self.rows, "dimension mismatch in scale_rows");
        for (r, &f) in factors.iter().enumerate() {
            if f == 1.0 {
                continue;
            }
            for v in &mut self.values[self.row_ptr[r]..self.row_ptr[r + 1]] {
                *v *= f;
            }
        }
    }

    /// Iterates stored entries as `(row, col, value)` in `(row, col)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Checks `|A[r,c] − A[c,r]| ≤ tol` for every stored entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        self.iter().all(|(r, c, v)| (v - self.get(c, r)).abs() <= tol)
    }
}
