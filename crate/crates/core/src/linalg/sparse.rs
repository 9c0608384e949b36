//! Row-compressed sparse complex matrices with an exact-structure rank routine.
//!
//! The large schemes produce matrices with hundreds of thousands of rows but
//! only a handful of nonzeros per row. Rank is found by peeling row and column
//! singletons (each removes one pivot exactly) and then taking a dense SVD of
//! every connected component that survives.

use num_complex::Complex64;

use super::{numeric_rank, ComplexMatrix};
use crate::error::{BiaError, Result};

/// Largest surviving component (rows * cols) handed to the dense SVD.
pub const MAX_COMPONENT_ENTRIES: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn new(cols: usize) -> Self {
        SparseMatrix { rows: 0, cols, row_ptr: vec![0], col_idx: Vec::new(), vals: Vec::new() }
    }

    pub fn with_capacity(cols: usize, rows: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        SparseMatrix {
            rows: 0,
            cols,
            row_ptr,
            col_idx: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    /// Appends a row given as `(column, value)` pairs. Zero values are dropped.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, Complex64)>) {
        for (c, v) in entries {
            assert!(c < self.cols, "column {c} out of range {}", self.cols);
            if v != Complex64::new(0.0, 0.0) {
                self.col_idx.push(c);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.col_idx.len());
        self.rows += 1;
    }

    pub fn from_dense(a: &ComplexMatrix) -> Self {
        let mut s = SparseMatrix::new(a.ncols());
        for i in 0..a.nrows() {
            s.push_row((0..a.ncols()).map(|j| (j, a[(i, j)])));
        }
        s
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[Complex64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                out[(i, j)] += x;
            }
        }
        out
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn hconcat(parts: &[&SparseMatrix]) -> SparseMatrix {
        let rows = parts.first().map_or(0, |p| p.rows);
        assert!(parts.iter().all(|p| p.rows == rows), "row count mismatch");
        let cols = parts.iter().map(|p| p.cols).sum();
        let nnz = parts.iter().map(|p| p.nnz()).sum();
        let mut out = SparseMatrix::with_capacity(cols, rows, nnz);
        let offsets: Vec<usize> = parts
            .iter()
            .scan(0, |acc, p| {
                let o = *acc;
                *acc += p.cols;
                Some(o)
            })
            .collect();
        for i in 0..rows {
            for (p, &off) in parts.iter().zip(&offsets) {
                let (c, v) = p.row(i);
                out.col_idx.extend(c.iter().map(|&j| j + off));
                out.vals.extend_from_slice(v);
            }
            out.row_ptr.push(out.col_idx.len());
            out.rows += 1;
        }
        out
    }

    /// Numerical rank. Entries at or below `tol * max|entry|` are treated as zero;
    /// surviving components use `numeric_rank` with the same relative `tol`.
    pub fn rank(&self, tol: f64) -> Result<usize> {
        let cutoff = tol * self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let keep: Vec<bool> = self.vals.iter().map(|v| v.norm() > cutoff).collect();

        // column-major view of the kept entries: (row, entry index)
        let mut col_ptr = vec![0usize; self.cols + 1];
        for (e, &j) in self.col_idx.iter().enumerate() {
            if keep[e] {
                col_ptr[j + 1] += 1;
            }
        }
        for j in 0..self.cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut fill = col_ptr.clone();
        let mut col_rows = vec![0usize; col_ptr[self.cols]];
        for i in 0..self.rows {
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                if keep[e] {
                    let j = self.col_idx[e];
                    col_rows[fill[j]] = i;
                    fill[j] += 1;
                }
            }
        }

        let mut row_alive = vec![true; self.rows];
        let mut col_alive = vec![true; self.cols];
        let mut row_deg: Vec<usize> = (0..self.rows)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).filter(|&e| keep[e]).count())
            .collect();
        let mut col_deg: Vec<usize> = (0..self.cols).map(|j| col_ptr[j + 1] - col_ptr[j]).collect();

        enum Item {
            Row(usize),
            Col(usize),
        }
        let mut queue: Vec<Item> = Vec::new();
        queue.extend((0..self.rows).filter(|&i| row_deg[i] == 1).map(Item::Row));
        queue.extend((0..self.cols).filter(|&j| col_deg[j] == 1).map(Item::Col));

        let mut rank = 0;
        while let Some(item) = queue.pop() {
            match item {
                Item::Row(i) => {
                    if !row_alive[i] || row_deg[i] != 1 {
                        continue;
                    }
                    let j = (self.row_ptr[i]..self.row_ptr[i + 1])
                        .filter(|&e| keep[e])
                        .map(|e| self.col_idx[e])
                        .find(|&j| col_alive[j])
                        .expect("row degree out of sync");
                    rank += 1;
                    row_alive[i] = false;
                    col_alive[j] = false;
                    for &r in &col_rows[col_ptr[j]..col_ptr[j + 1]] {
                        if row_alive[r] {
                            row_deg[r] -= 1;
                            if row_deg[r] == 1 {
                                queue.push(Item::Row(r));
                            }
                        }
                    }
                }
                Item::Col(j) => {
                    if !col_alive[j] || col_deg[j] != 1 {
                        continue;
                    }
                    let i = col_rows[col_ptr[j]..col_ptr[j + 1]]
                        .iter()
                        .copied()
                        .find(|&r| row_alive[r])
                        .expect("column degree out of sync");
                    rank += 1;
                    col_alive[j] = false;
                    row_alive[i] = false;
                    for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                        let c = self.col_idx[e];
                        if keep[e] && col_alive[c] {
                            col_deg[c] -= 1;
                            if col_deg[c] == 1 {
                                queue.push(Item::Col(c));
                            }
                        }
                    }
                }
            }
        }

        // connected components of what is left (rows and columns as one node set)
        let mut parent: Vec<usize> = (0..self.rows + self.cols).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let live_entry = |i: usize, e: usize| keep[e] && row_alive[i] && col_alive[self.col_idx[e]];
        for i in 0..self.rows {
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                if live_entry(i, e) {
                    let a = find(&mut parent, i);
                    let b = find(&mut parent, self.rows + self.col_idx[e]);
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let mut comp_rows: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        let mut comp_cols: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in (0..self.rows).filter(|&i| row_alive[i] && row_deg[i] > 0) {
            let root = find(&mut parent, i);
            comp_rows.entry(root).or_default().push(i);
        }
        for j in (0..self.cols).filter(|&j| col_alive[j] && col_deg[j] > 0) {
            let root = find(&mut parent, self.rows + j);
            comp_cols.entry(root).or_default().push(j);
        }
        for (root, rows) in &comp_rows {
            let cols = comp_cols.get(root).map(Vec::as_slice).unwrap_or(&[]);
            let entries = rows.len() * cols.len();
            if entries > MAX_COMPONENT_ENTRIES {
                return Err(BiaError::Size {
                    slots: entries as u128,
                    limit: MAX_COMPONENT_ENTRIES as u128,
                });
            }
            let mut local = ComplexMatrix::zeros(rows.len(), cols.len());
            for (a, &i) in rows.iter().enumerate() {
                for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                    if live_entry(i, e) {
                        let b = cols.binary_search(&self.col_idx[e]).expect("column in component");
                        local[(a, b)] += self.vals[e];
                    }
                }
            }
            rank += numeric_rank(&local, tol);
        }
        Ok(rank)
    }
}
