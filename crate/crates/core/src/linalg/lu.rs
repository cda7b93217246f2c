use rsparse::data::{Nmrc, Sprs, Symb};
use thiserror::Error;

use super::CscMatrix;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinearSolveError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is structurally or numerically singular (no pivot for column {column})")]
    Singular { column: usize },
    #[error("matrix is ill-conditioned (estimate {estimate:.3e}); smallest pivot at column {column}")]
    IllConditioned { estimate: f64, column: usize },
}

impl LinearSolveError {
    /// Column of the matrix the failure is attributed to.
    pub fn column(&self) -> Option<usize> {
        match self {
            LinearSolveError::NotSquare { .. } => None,
            LinearSolveError::Singular { column } | LinearSolveError::IllConditioned { column, .. } => Some(*column),
        }
    }
}

/// Row-equilibrated sparse LU, `P D A Q = L U`, with AMD column ordering and
/// partial pivoting.
pub struct SparseLu {
    n: usize,
    row_scale: Vec<f64>,
    symbolic: Symb,
    numeric: Nmrc<f64>,
    scaled_norm_one: f64,
}

impl SparseLu {
    pub fn factorize(a: &CscMatrix) -> Result<SparseLu, LinearSolveError> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(LinearSolveError::NotSquare {
                rows: n,
                cols: a.n_cols(),
            });
        }

        let row_max = a.row_max_abs();
        if let Some(empty) = row_max.iter().position(|&m| m == 0.0) {
            // an all-zero row leaves some column without a pivot; report the row
            return Err(LinearSolveError::Singular { column: empty });
        }
        let row_scale: Vec<f64> = row_max.iter().map(|m| 1.0 / m).collect();
        let mut scaled = a.clone();
        scaled.scale_rows(&row_scale);

        let sprs = Sprs {
            nzmax: scaled.nnz(),
            m: n,
            n,
            p: scaled.col_ptr().iter().map(|&p| p as isize).collect(),
            i: scaled.row_idx().to_vec(),
            x: scaled.values().to_vec(),
        };
        // the AMD routine needs at least three columns
        let order = if n > 2 { 2 } else { -1 };
        let mut symbolic = rsparse::sqr(&sprs, order, false);
        let numeric = rsparse::lu(&sprs, &mut symbolic, 1.0).map_err(|_| {
            let column = (0..n).find(|&j| scaled.column(j).all(|(_, v)| v == 0.0)).unwrap_or(0);
            LinearSolveError::Singular { column }
        })?;
        Ok(SparseLu {
            n,
            row_scale,
            symbolic,
            numeric,
            scaled_norm_one: scaled.norm_one(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn column_of_step(&self, k: usize) -> usize {
        self.symbolic.q.as_ref().map_or(k, |q| q[k] as usize)
    }

    /// `|U_kk|` for every elimination step.
    pub fn pivots(&self) -> Vec<f64> {
        let u = &self.numeric.u;
        (0..self.n).map(|k| u.x[(u.p[k + 1] - 1) as usize].abs()).collect()
    }

    /// Original column eliminated with the smallest pivot.
    pub fn weakest_pivot_column(&self) -> usize {
        let pivots = self.pivots();
        let k = pivots
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        self.column_of_step(k)
    }

    fn solve_scaled(&self, rhs: &[f64]) -> Vec<f64> {
        let pinv = self.numeric.pinv.as_ref().expect("lu sets pinv");
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            x[pinv[i] as usize] = rhs[i];
        }
        rsparse::lsolve(&self.numeric.l, &mut x);
        rsparse::usolve(&self.numeric.u, &mut x);
        let mut out = vec![0.0; self.n];
        for (k, xk) in x.into_iter().enumerate() {
            out[self.column_of_step(k)] = xk;
        }
        out
    }

    fn solve_scaled_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let pinv = self.numeric.pinv.as_ref().expect("lu sets pinv");
        let mut w: Vec<f64> = (0..self.n).map(|k| rhs[self.column_of_step(k)]).collect();
        rsparse::utsolve(&self.numeric.u, &mut w);
        rsparse::ltsolve(&self.numeric.l, &mut w);
        (0..self.n).map(|i| w[pinv[i] as usize]).collect()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = b.iter().zip(&self.row_scale).map(|(v, s)| v * s).collect();
        self.solve_scaled(&scaled)
    }

    /// Solves `Aᵀ y = c`.
    pub fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let w = self.solve_scaled_transpose(c);
        w.iter().zip(&self.row_scale).map(|(v, s)| v * s).collect()
    }

    /// Hager–Higham estimate of the 1-norm condition number of the
    /// row-equilibrated matrix.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve_scaled(&x);
            let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
            if !y_norm.is_finite() {
                return f64::INFINITY;
            }
            estimate = f64::max(estimate, y_norm);
            let sign: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_scaled_transpose(&sign);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        estimate * self.scaled_norm_one
    }
}
