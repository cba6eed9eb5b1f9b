//! Compressed sparse row matrices for the assembled operators.

use crate::error::{Error, Result};

/// Triplet accumulator; duplicates are summed when converting to CSR.
#[derive(Debug, Clone)]
pub struct Triplets {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Triplets {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    /// Sorted, deduplicated CSR conversion. The stable sort fixes the
    /// summation order, so the result is reproducible.
    pub fn into_csr(mut self) -> CsrMatrix {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_idx: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut counts = vec![0usize; self.n_rows];
        let mut last: Option<(usize, usize)> = None;
        for &(row, col, value) in &self.entries {
            if last == Some((row, col)) {
                *values.last_mut().unwrap() += value;
            } else {
                col_idx.push(col);
                values.push(value);
                counts[row] += 1;
                last = Some((row, col));
            }
        }
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        for i in 0..self.n_rows {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Row-sum norm `max_i sum_j |a_ij|`.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    /// Largest asymmetry `max |a_ij - a_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                defect = defect.max((v - self.get(*c, i)).abs());
            }
        }
        defect
    }

    /// Half bandwidth: `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &c in cols {
                bw = bw.max(i.abs_diff(c));
            }
        }
        bw
    }

    /// Symmetric elimination of Dirichlet rows and columns: eliminated rows
    /// and columns are dropped, the diagonal is set to 1, and the matching
    /// right-hand side entries are zeroed. For homogeneous boundary data the
    /// reduced system is equivalent to restriction onto the zero-trace space.
    pub fn apply_dirichlet(&self, rhs: &[f64], boundary_nodes: &[usize]) -> Result<(CsrMatrix, Vec<f64>)> {
        if rhs.len() != self.n_rows || self.n_rows != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "system is {}x{}, rhs has {} entries",
                self.n_rows,
                self.n_cols,
                rhs.len()
            )));
        }
        let mut mask = vec![false; self.n_rows];
        for &b in boundary_nodes {
            if b >= self.n_rows {
                return Err(Error::IndexOutOfRange {
                    what: "boundary node",
                    index: b,
                    len: self.n_rows,
                });
            }
            mask[b] = true;
        }
        let mut out = Triplets::new(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            if mask[i] {
                out.push(i, i, 1.0);
                continue;
            }
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if !mask[*c] {
                    out.push(i, *c, *v);
                }
            }
        }
        let new_rhs: Vec<f64> = rhs
            .iter()
            .enumerate()
            .map(|(i, &b)| if mask[i] { 0.0 } else { b })
            .collect();
        Ok((out.into_csr(), new_rhs))
    }

    /// Matrix Market ("coordinate real general") text export, 1-based.
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        out.push_str(&format!("{} {} {}\n", self.n_rows, self.n_cols, self.nnz()));
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                out.push_str(&format!("{} {} {:.17e}\n", i + 1, c + 1, v));
            }
        }
        out
    }
}
