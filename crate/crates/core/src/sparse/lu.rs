use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{SparseError, SparseMatrix};

/// Pivots smaller than this fraction of the original column magnitude are
/// reported as numerical singularity.
const SINGULAR_RTOL: f64 = 1e-20;

/// Left-looking sparse LU with row partial pivoting: `P·A = L·U`.
///
/// `L` is unit lower triangular and stored by column in original row
/// indices; `U` is stored by column in pivot-step indices.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    /// Original row chosen as pivot at step `k`.
    pivot_row: Vec<usize>,
    /// Step at which original row `r` became pivot.
    row_step: Vec<usize>,
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Off-diagonal entries of `U(:, k)` as `(step, value)`, ascending step.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    #[cfg(debug_assertions)]
    original: SparseMatrix,
}

impl Factorization {
    pub fn new(a: &SparseMatrix) -> Result<Self, SparseError> {
        if !a.is_square() {
            return Err(SparseError::NotSquare {
                n_rows: a.n_rows(),
                n_cols: a.n_cols(),
            });
        }
        let n = a.n_rows();
        let unset = usize::MAX;
        let mut pivot_row = Vec::with_capacity(n);
        let mut row_step = vec![unset; n];
        let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut u_diag = Vec::with_capacity(n);

        let mut work = vec![0.0; n];
        let mut touched = vec![false; n];
        let mut touched_rows: Vec<usize> = Vec::new();
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

        for k in 0..n {
            let (rows, vals) = a.column(k);
            let mut col_max = 0.0f64;
            for (&r, &v) in rows.iter().zip(vals) {
                work[r] = v;
                col_max = col_max.max(v.abs());
                if !touched[r] {
                    touched[r] = true;
                    touched_rows.push(r);
                    if row_step[r] != unset {
                        heap.push(Reverse(row_step[r]));
                    }
                }
            }

            let mut u_col = Vec::new();
            while let Some(Reverse(j)) = heap.pop() {
                let xj = work[pivot_row[j]];
                if xj == 0.0 {
                    continue;
                }
                u_col.push((j, xj));
                for &(r, l) in &l_cols[j] {
                    work[r] -= l * xj;
                    if !touched[r] {
                        touched[r] = true;
                        touched_rows.push(r);
                        if row_step[r] != unset {
                            heap.push(Reverse(row_step[r]));
                        }
                    }
                }
            }

            // Partial pivoting over the rows not yet eliminated. Ties go to
            // the smallest row index so the choice is reproducible.
            touched_rows.sort_unstable();
            let mut best: Option<(usize, f64)> = None;
            for &r in &touched_rows {
                if row_step[r] != unset {
                    continue;
                }
                let mag = work[r].abs();
                if best.is_none_or(|(_, m)| mag > m) {
                    best = Some((r, mag));
                }
            }
            let (p, mag) = match best {
                Some(b) => b,
                None => return Err(SparseError::Singular { pivot: k }),
            };
            if !mag.is_finite() || mag == 0.0 || mag <= SINGULAR_RTOL * col_max {
                return Err(SparseError::Singular { pivot: k });
            }
            let pivot = work[p];
            row_step[p] = k;
            pivot_row.push(p);

            let mut l_col = Vec::new();
            for &r in &touched_rows {
                if row_step[r] == unset && work[r] != 0.0 {
                    l_col.push((r, work[r] / pivot));
                }
                work[r] = 0.0;
                touched[r] = false;
            }
            touched_rows.clear();

            u_col.sort_unstable_by_key(|&(j, _)| j);
            u_cols.push(u_col);
            u_diag.push(pivot);
            l_cols.push(l_col);
        }

        Ok(Self {
            n,
            pivot_row,
            row_step,
            l_cols,
            u_cols,
            u_diag,
            #[cfg(debug_assertions)]
            original: a.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        if b.len() != self.n {
            return Err(SparseError::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        // Forward: L·y = P·b, working in original row indices.
        let mut w = b.to_vec();
        let mut y = vec![0.0; self.n];
        for k in 0..self.n {
            let yk = w[self.pivot_row[k]];
            y[k] = yk;
            if yk != 0.0 {
                for &(r, l) in &self.l_cols[k] {
                    w[r] -= l * yk;
                }
            }
        }
        // Backward: U·x = y, column oriented.
        let mut x = y;
        for k in (0..self.n).rev() {
            x[k] /= self.u_diag[k];
            let xk = x[k];
            if xk != 0.0 {
                for &(j, u) in &self.u_cols[k] {
                    x[j] -= u * xk;
                }
            }
        }
        #[cfg(debug_assertions)]
        self.debug_check_residual(b, &x);
        Ok(x)
    }

    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SparseError> {
        rhs.iter().map(|b| self.solve(b)).collect()
    }

    /// Original row index eliminated at step `k`.
    pub fn pivot_row(&self, k: usize) -> usize {
        self.pivot_row[k]
    }

    pub fn step_of_row(&self, row: usize) -> usize {
        self.row_step[row]
    }

    #[cfg(debug_assertions)]
    fn debug_check_residual(&self, b: &[f64], x: &[f64]) {
        let ax = self.original.mul_vec(x).expect("dimensions checked");
        let res = ax
            .iter()
            .zip(b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let xn = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let bn = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let bound = 1e-10 * (self.original.norm_inf() * xn + bn);
        debug_assert!(
            res <= bound,
            "LU residual {res:e} exceeds bound {bound:e}"
        );
    }
}
