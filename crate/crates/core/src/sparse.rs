//! Compressed sparse row storage with deterministic assembly.

use std::io::Write;

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square `n×n` matrix from (row, col, value) triples. Duplicates are summed
    /// in the order they appear, so the result does not depend on hashing or threads.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len() / 4);
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len() / 4);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    /// Bitwise equality with the transpose.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i).to_bits() == v.to_bits()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Largest absolute column sum.
    pub fn norm_1(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for (j, v) in self.col_idx.iter().zip(&self.values) {
            col[*j] += v.abs();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        CsrMatrix {
            values: self.values.iter().map(|v| alpha * v).collect(),
            ..self.clone()
        }
    }

    /// self + alpha·other
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> Self {
        assert_eq!(self.n, other.n);
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, alpha * v)));
        CsrMatrix::from_triplets(self.n, t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| Error::Factorization(format!("cannot build sparse matrix: {e:?}")))
    }

    /// One `row col value` line per stored entry, 0-based, 17 significant digits.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "% {} {} {}", self.n, self.n, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }
}
