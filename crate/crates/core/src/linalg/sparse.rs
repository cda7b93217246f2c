/// Coordinate-form accumulator. Duplicate entries are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Triplets {
        Triplets {
            n_rows,
            n_cols,
            ..Default::default()
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Triplets {
        Triplets {
            n_rows,
            n_cols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    /// Records a structural entry; explicit zeros are kept in the pattern.
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn to_csc(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; self.vals.len()];
        let mut vals = vec![0.0; self.vals.len()];
        for k in 0..self.vals.len() {
            let c = self.cols[k];
            let dst = next[c];
            rows[dst] = self.rows[k];
            vals[dst] = self.vals[k];
            next[c] += 1;
        }

        // sort each column by row and merge duplicates
        let mut col_ptr = Vec::with_capacity(self.n_cols + 1);
        let mut row_idx = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for j in 0..self.n_cols {
            scratch.clear();
            scratch.extend((counts[j]..counts[j + 1]).map(|k| (rows[k], vals[k])));
            scratch.sort_by_key(|e| e.0);
            for &(r, v) in &scratch {
                if row_idx.len() > col_ptr[j] && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }
}

/// Compressed sparse column matrix with sorted, unique row indices per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> CscMatrix {
        CscMatrix {
            n_rows,
            n_cols,
            col_ptr: vec![0; n_cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> CscMatrix {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.to_csc()
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> CscMatrix {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut t = Triplets::new(n_rows, n_cols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.to_csc()
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

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(row, value)` pairs of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// `(row, col, value)` over all stored entries, column-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_cols).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for (j, &xj) in x.iter().enumerate().take(self.n_cols) {
            if xj != 0.0 {
                for (i, v) in self.column(j) {
                    y[i] += v * xj;
                }
            }
        }
        y
    }

    /// `y = Aᵀ x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_cols)
            .map(|j| self.column(j).map(|(i, v)| v * x[i]).sum())
            .collect()
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut t = Triplets::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for (i, j, v) in self.iter() {
            t.push(j, i, v);
        }
        t.to_csc()
    }

    /// Exact structural and numeric symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.iter() {
            d[i][j] = v;
        }
        d
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.n_cols)
            .map(|j| self.column(j).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Which rows hold at least one stored entry.
    pub fn row_occupancy(&self) -> Vec<bool> {
        let mut occ = vec![false; self.n_rows];
        for &i in &self.row_idx {
            occ[i] = true;
        }
        occ
    }

    pub fn col_occupancy(&self) -> Vec<bool> {
        (0..self.n_cols).map(|j| self.col_ptr[j + 1] > self.col_ptr[j]).collect()
    }

    /// Sub-matrix keeping rows/columns whose flag is set, renumbered densely.
    pub fn select(&self, keep_rows: &[bool], keep_cols: &[bool]) -> CscMatrix {
        let row_map = renumber(keep_rows);
        let col_map = renumber(keep_cols);
        let n_rows = keep_rows.iter().filter(|&&k| k).count();
        let n_cols = keep_cols.iter().filter(|&&k| k).count();
        let mut t = Triplets::with_capacity(n_rows, n_cols, self.nnz());
        for (i, j, v) in self.iter() {
            if let (Some(r), Some(c)) = (row_map[i], col_map[j]) {
                t.push(r, c, v);
            }
        }
        t.to_csc()
    }

    pub(crate) fn scale_rows(&mut self, scale: &[f64]) {
        for (v, &i) in self.values.iter_mut().zip(&self.row_idx) {
            *v *= scale[i];
        }
    }

    pub(crate) fn row_max_abs(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.n_rows];
        for (v, &i) in self.values.iter().zip(&self.row_idx) {
            m[i] = m[i].max(v.abs());
        }
        m
    }
}

fn renumber(keep: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    keep.iter()
        .map(|&k| {
            if k {
                next += 1;
                Some(next - 1)
            } else {
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 2.0);
        t.push(0, 0, 3.0);
        t.push(1, 1, -1.0);
        let a = t.to_csc();
        assert_eq!(a.to_dense(), vec![vec![4.0, 0.0], vec![2.0, -1.0]]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![4.0, 1.0]);
        assert_eq!(a.mul_vec_transpose(&[1.0, 1.0]), vec![6.0, -1.0]);
        assert_eq!(a.transpose().to_dense(), vec![vec![4.0, 2.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn select_drops_empty_lines() {
        let a = CscMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, 0.0, 0.0], vec![3.0, 0.0, 4.0]]);
        let rows = a.row_occupancy();
        let cols = a.col_occupancy();
        assert_eq!(rows, vec![true, false, true]);
        assert_eq!(cols, vec![true, false, true]);
        let s = a.select(&rows, &cols);
        assert_eq!(s.to_dense(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }
}
