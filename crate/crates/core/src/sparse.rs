//! Compressed sparse column storage for constraint gradients.

/// Column-compressed matrix with sorted row indices per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.col(j);
            for (&r, &v) in rows.iter().zip(vals) {
                y[r] += v * xj;
            }
        }
        y
    }

    /// `y = Aᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols)
            .map(|j| {
                let (rows, vals) = self.col(j);
                rows.iter().zip(vals).map(|(&r, &v)| v * x[r]).sum()
            })
            .collect()
    }

    /// Dense copy, column-major `nrows × ncols`.
    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::<f64>::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&r, &v) in rows.iter().zip(vals) {
                m[(r, j)] += v;
            }
        }
        m
    }

    /// Row-compressed view of the pattern: for each row, the columns touching it.
    pub fn row_pattern(&self) -> (Vec<usize>, Vec<usize>) {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.row_idx {
            count[r + 1] += 1;
        }
        for r in 0..self.nrows {
            count[r + 1] += count[r];
        }
        let ptr = count.clone();
        let mut next = count;
        let mut cols = vec![0usize; self.row_idx.len()];
        for j in 0..self.ncols {
            for &r in &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]] {
                cols[next[r]] = j;
                next[r] += 1;
            }
        }
        (ptr, cols)
    }
}
