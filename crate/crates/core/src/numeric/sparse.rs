use crate::error::{AguError, Result};
use crate::numeric::Tensor;

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing inside each row, so products
/// accumulate in a fixed order and are bitwise reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from raw CSR arrays, checking every structural invariant.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(AguError::dim("csr", "row offsets length must be rows + 1"));
        }
        if col_indices.len() != values.len() || *row_offsets.last().unwrap() != values.len() {
            return Err(AguError::dim("csr", "last offset must equal nnz"));
        }
        for r in 0..rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(AguError::dim("csr", format!("row {r}: offsets decrease")));
            }
            let cs = &col_indices[lo..hi];
            if cs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(AguError::dim(
                    "csr",
                    format!("row {r}: column indices not strictly increasing"),
                ));
            }
            if cs.iter().any(|&c| c >= cols) {
                return Err(AguError::dim("csr", format!("row {r}: column out of range")));
            }
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are
    /// rejected; explicit zeros are kept as stored entries.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for (i, &(r, c, v)) in triplets.iter().enumerate() {
            if r >= rows || c >= cols {
                return Err(AguError::dim(
                    "from_triplets",
                    format!("entry ({r},{c}) outside {rows}x{cols}"),
                ));
            }
            if i > 0 && triplets[i - 1].0 == r && triplets[i - 1].1 == c {
                return Err(AguError::dim("from_triplets", format!("duplicate entry ({r},{c})")));
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        match self.col_indices[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `self · dense`, accumulated in CSR order.
    pub fn spmm(&self, dense: &Tensor) -> Result<Tensor> {
        if self.cols != dense.rows() {
            return Err(AguError::dim(
                "spmm",
                format!(
                    "{}x{} sparse times {}x{} dense",
                    self.rows,
                    self.cols,
                    dense.rows(),
                    dense.cols()
                ),
            ));
        }
        let width = dense.cols();
        let mut out = Tensor::zeros(self.rows, width);
        for r in 0..self.rows {
            let out_row = out.row_mut(r);
            for (c, w) in self.row(r) {
                for (o, x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, used by the backward pass of [`SparseMatrix::spmm`].
    pub fn spmm_transposed(&self, dense: &Tensor) -> Result<Tensor> {
        if self.rows != dense.rows() {
            return Err(AguError::dim(
                "spmm_transposed",
                format!("{}x{} sparse (transposed) times {} rows", self.rows, self.cols, dense.rows()),
            ));
        }
        let width = dense.cols();
        let mut out = Tensor::zeros(self.cols, width);
        for r in 0..self.rows {
            let src = dense.row(r);
            for (c, w) in self.row(r) {
                for (o, x) in out.row_mut(c).iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }
}
