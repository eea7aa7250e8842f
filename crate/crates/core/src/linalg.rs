//! Small sparse-matrix toolkit: CSR storage and a banded LU with partial pivoting.
//!
//! Every matrix in this crate comes from a 5-point stencil on a rectangle, so a
//! banded factorisation with bandwidth ≈ 2·width is the direct sparse solver.

use crate::error::{OcpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(out.len(), self.nrows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Largest lower and upper distance from the diagonal among stored entries.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.nrows {
            for (c, _) in self.row(r) {
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    pub fn factor(&self) -> Result<BandedLu> {
        if self.nrows != self.ncols {
            return Err(OcpError::DimensionMismatch {
                expected: self.nrows,
                got: self.ncols,
            });
        }
        let (kl, ku) = self.bandwidths();
        let mut band = BandedMatrix::zeros(self.nrows, kl, ku);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                band.add(r, c, v);
            }
        }
        band.factor()
    }
}

/// Square band matrix in LAPACK `gb` layout, with room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            ld,
            ab: vec![0.0; ld * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        j * self.ld + (self.kl + self.ku + i - j)
    }

    /// Adds `v` to entry `(i, j)`; panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i <= j + self.kl && j <= i + self.ku,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > j + self.kl || j > i + self.ku {
            0.0
        } else {
            self.ab[self.slot(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *o = (lo..=hi).map(|j| self.ab[self.slot(i, j)] * x[j]).sum();
        }
    }

    /// LU factorisation with partial (row) pivoting, in place.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let kuu = self.kl + self.ku;
        let mut piv = vec![0; n];
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.ab[self.slot(j, j)].abs();
            for i in j + 1..=last {
                let v = self.ab[self.slot(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(OcpError::SingularMatrix { column: j });
            }
            piv[j] = p;
            let cmax = (j + kuu).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    let a = self.slot(j, c);
                    let b = self.slot(p, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.slot(j, j)];
            let col = self.slot(j + 1, j);
            for v in &mut self.ab[col..col + (last - j)] {
                *v /= pivot;
            }
            for c in j + 1..=cmax {
                let ajc = self.ab[self.slot(j, c)];
                if ajc == 0.0 {
                    continue;
                }
                let dst = self.slot(j + 1, c);
                for t in 0..(last - j) {
                    let l = self.ab[col + t];
                    self.ab[dst + t] -= l * ajc;
                }
            }
        }
        Ok(BandedLu { lu: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.lu;
        let n = m.n;
        assert_eq!(b.len(), n);
        let kuu = m.kl + m.ku;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let last = (j + m.kl).min(n - 1);
                let col = m.slot(j + 1, j);
                for (t, bi) in b[j + 1..=last].iter_mut().enumerate() {
                    *bi -= m.ab[col + t] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= m.ab[m.slot(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let first = j.saturating_sub(kuu);
                let col = m.slot(first, j);
                for (t, bi) in b[first..j].iter_mut().enumerate() {
                    *bi -= m.ab[col + t] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// A banded LU stored in a reordered basis: vector entry `k` lives at
/// position `order[k]` of the factorised system.
#[derive(Debug, Clone)]
pub struct PermutedLu {
    lu: BandedLu,
    order: Vec<usize>,
}

impl PermutedLu {
    pub fn new(lu: BandedLu, order: Vec<usize>) -> Result<Self> {
        if order.len() != lu.dim() {
            return Err(OcpError::DimensionMismatch {
                expected: lu.dim(),
                got: order.len(),
            });
        }
        Ok(PermutedLu { lu, order })
    }

    pub fn dim(&self) -> usize {
        self.lu.dim()
    }

    pub fn solve_into(&self, b: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.clear();
        scratch.resize(b.len(), 0.0);
        for (k, &o) in self.order.iter().enumerate() {
            scratch[o] = b[k];
        }
        self.lu.solve_in_place(scratch);
        for (k, &o) in self.order.iter().enumerate() {
            out[k] = scratch[o];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; b.len()];
        self.solve_into(b, &mut out, &mut Vec::new());
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
