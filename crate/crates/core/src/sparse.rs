//! Compressed sparse row matrices with a fixed accumulation order.
//!
//! Every product walks rows in index order and, inside a row, the stored
//! columns in ascending order, so results are bit-identical across runs.

use ndarray::{Array2, ArrayView2};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from per-row `(column, value)` lists. Columns inside a
    /// row must be strictly increasing and below `n_cols`.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, T)>>) -> Self {
        let n_rows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                assert!(c < n_cols, "column {c} out of bounds for {n_cols} columns");
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { n_rows, n_cols, indptr, indices, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Range of positions in the flat storage belonging to row `i`.
    pub fn row_span(&self, i: usize) -> std::ops::Range<usize> {
        self.indptr[i]..self.indptr[i + 1]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Same sparsity pattern, new values (one per stored entry).
    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.values.len());
        CsrMatrix { values, ..self.clone() }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_span(i);
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    /// `self · dense`
    pub fn matmul(&self, dense: ArrayView2<'_, T>) -> Array2<T> {
        assert_eq!(self.n_cols, dense.nrows(), "sparse-dense shape mismatch");
        let width = dense.ncols();
        let mut out = Array2::<T>::zeros((self.n_rows, width));
        for i in 0..self.n_rows {
            let mut out_row = out.row_mut(i);
            for (c, v) in self.row(i) {
                out_row.scaled_add(v, &dense.row(c));
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); self.n_cols];
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                rows[c].push((i, v));
            }
        }
        CsrMatrix::from_rows(self.n_rows, rows)
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::<T>::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                out[[i, c]] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> CsrMatrix<f64> {
        CsrMatrix::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, -1.0)]])
    }

    #[test]
    fn matmul_matches_dense_product() {
        let m = sample();
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(m.matmul(x.view()), m.to_dense().dot(&x));
    }

    #[test]
    fn transpose_and_lookup() {
        let m = sample();
        let t = m.transpose();
        assert_eq!(t.to_dense(), m.to_dense().t().to_owned());
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 3);
    }
}
