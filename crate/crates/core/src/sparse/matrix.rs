use super::SparseError;

/// One `(row, col, value)` contribution. Duplicates are summed on assembly.
pub type Triplet = (usize, usize, f64);

/// Compressed sparse column matrix.
///
/// Entries within a column are sorted by row and unique. Assembly sums
/// duplicate contributions in a canonical order (sorted by value bits), so
/// the result does not depend on the order the triplets were produced in.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn assemble(
        n_rows: usize,
        n_cols: usize,
        triplets: &[Triplet],
    ) -> Result<Self, SparseError> {
        for &(row, col, _) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(SparseError::IndexOutOfRange {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut sorted: Vec<Triplet> = triplets.to_vec();
        sorted.sort_by(|a, b| {
            a.1.cmp(&b.1)
                .then(a.0.cmp(&b.0))
                .then(a.2.total_cmp(&b.2))
        });

        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut row_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut iter = sorted.into_iter().peekable();
        while let Some((row, col, value)) = iter.next() {
            let mut sum = value;
            while let Some(&(r, c, v)) = iter.peek() {
                if r == row && c == col {
                    sum += v;
                    iter.next();
                } else {
                    break;
                }
            }
            row_idx.push(row);
            values.push(sum);
            col_ptr[col + 1] += 1;
        }
        for c in 0..n_cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(Self {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<Triplet> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::assemble(n, n, &triplets).expect("identity indices are in range")
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

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Row indices and values of column `col`.
    pub fn column(&self, col: usize) -> (&[usize], &[f64]) {
        let span = self.col_ptr[col]..self.col_ptr[col + 1];
        (&self.row_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (rows, vals) = self.column(col);
        match rows.binary_search(&row) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Entries in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.n_cols).flat_map(move |c| {
            let (rows, vals) = self.column(c);
            rows.iter().zip(vals).map(move |(&r, &v)| (r, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.n_cols {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        for (r, c, v) in self.iter() {
            y[r] += v * x[c];
        }
        Ok(y)
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let mut sums = vec![0.0; self.n_rows];
        for (r, _, v) in self.iter() {
            sums[r] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.iter() {
            dense[r][c] = v;
        }
        dense
    }

    /// Returns `diag(row_scale) * self * diag(col_scale)`.
    pub fn scaled(&self, row_scale: &[f64], col_scale: &[f64]) -> Self {
        let mut out = self.clone();
        for c in 0..self.n_cols {
            for k in out.col_ptr[c]..out.col_ptr[c + 1] {
                out.values[k] *= row_scale[out.row_idx[k]] * col_scale[c];
            }
        }
        out
    }
}
