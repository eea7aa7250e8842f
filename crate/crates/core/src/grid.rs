//! Structured interior grid of the unit square and the 5-point Laplacian.
//!
//! Unknowns live on the `n × n` interior points only; the homogeneous
//! Dirichlet boundary is eliminated. Point `(row, col)` sits at
//! `x1 = (col + 1)·h`, `x2 = (row + 1)·h` and has lexicographic index
//! `row·n + col`.

use std::io::{Read, Write};

use crate::error::{OcpError, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(n_per_dim: usize) -> Result<Self> {
        if n_per_dim == 0 {
            return Err(OcpError::InvalidArgument(
                "grid needs at least one interior point per dimension".into(),
            ));
        }
        Ok(Grid {
            n: n_per_dim,
            h: 1.0 / (n_per_dim as f64 + 1.0),
        })
    }

    /// Interior points per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of interior points, `n²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n && col < self.n);
        row * self.n + col
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.n, index % self.n)
    }

    /// Physical position `(x1, x2)` of an interior point.
    pub fn point(&self, index: usize) -> (f64, f64) {
        let (row, col) = self.coords(index);
        ((col as f64 + 1.0) * self.h, (row as f64 + 1.0) * self.h)
    }

    pub fn full_rect(&self) -> Rect {
        Rect {
            rows: 0..self.n,
            cols: 0..self.n,
        }
    }

    /// Samples `f(x1, x2)` at every interior point.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let values = (0..self.len())
            .map(|k| {
                let (x1, x2) = self.point(k);
                f(x1, x2)
            })
            .collect();
        Field {
            grid: *self,
            values,
        }
    }
}

/// Axis-aligned block of interior grid points, half-open in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rect {
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
}

impl Rect {
    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }

    pub fn len(&self) -> usize {
        self.height() * self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.rows.contains(&row) && self.cols.contains(&col)
    }

    pub fn local_index(&self, row: usize, col: usize) -> usize {
        (row - self.rows.start) * self.width() + (col - self.cols.start)
    }

    /// Global lexicographic indices of the block, in local (row-major) order.
    pub fn global_indices(&self, grid: &Grid) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for row in self.rows.clone() {
            for col in self.cols.clone() {
                out.push(grid.index(row, col));
            }
        }
        out
    }

    /// Grows the block by `m` cells in every direction, clipped to the grid.
    pub fn dilate(&self, m: usize, grid: &Grid) -> Rect {
        Rect {
            rows: self.rows.start.saturating_sub(m)..(self.rows.end + m).min(grid.n()),
            cols: self.cols.start.saturating_sub(m)..(self.cols.end + m).min(grid.n()),
        }
    }
}

/// The four stencil neighbours of `(row, col)` that are interior points.
pub(crate) fn interior_neighbors(
    grid: &Grid,
    row: usize,
    col: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let n = grid.n() as isize;
    let (r, c) = (row as isize, col as isize);
    [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
        .into_iter()
        .filter(move |&(a, b)| a >= 0 && b >= 0 && a < n && b < n)
        .map(|(a, b)| (a as usize, b as usize))
}

/// Grid function on the interior points.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(OcpError::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(OcpError::NonFinite {
                what: "field",
                index,
            });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Writes one CSV line per grid row with shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        let n = self.grid.n();
        for row in self.values.chunks(n) {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut values = Vec::new();
        let mut rows = 0;
        for record in r.records() {
            let record = record?;
            for cell in record.iter() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| OcpError::Io(format!("bad number {cell:?}")))?;
                values.push(v);
            }
            rows += 1;
        }
        let grid = Grid::new(rows)?;
        Field::new(grid, values)
    }
}

/// The discrete `-Δ`: 5-point stencil scaled by `1/h²`, Dirichlet rows eliminated.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    matrix: CsrMatrix,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.matrix.matvec(v, out);
    }
}

pub fn build_laplacian(grid: &Grid) -> Result<DiscreteOperator> {
    if grid.n() == 0 {
        return Err(OcpError::InvalidArgument("empty grid".into()));
    }
    let n = grid.len();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut triplets = Vec::with_capacity(5 * n);
    for k in 0..n {
        let (row, col) = grid.coords(k);
        triplets.push((k, k, 4.0 * inv_h2));
        for (a, b) in interior_neighbors(grid, row, col) {
            triplets.push((k, grid.index(a, b), -inv_h2));
        }
    }
    Ok(DiscreteOperator {
        grid: *grid,
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
    })
}

/// Applies `-Δ_h` matrix-free on a block. Neighbour values outside the block are
/// taken from `exterior` (a full-grid vector), points outside the grid are zero.
pub(crate) fn apply_laplacian_block(
    grid: &Grid,
    rect: &Rect,
    local: &[f64],
    exterior: Option<&[f64]>,
    out: &mut [f64],
) {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let n = grid.n();
    let w = rect.width();
    for (lr, row) in rect.rows.clone().enumerate() {
        for (lc, col) in rect.cols.clone().enumerate() {
            let l = lr * w + lc;
            let mut acc = 4.0 * local[l];
            let mut visit = |r: usize, c: usize| {
                if rect.contains(r, c) {
                    acc -= local[rect.local_index(r, c)];
                } else if let Some(ext) = exterior {
                    acc -= ext[r * n + c];
                }
            };
            if row > 0 {
                visit(row - 1, col);
            }
            if row + 1 < n {
                visit(row + 1, col);
            }
            if col > 0 {
                visit(row, col - 1);
            }
            if col + 1 < n {
                visit(row, col + 1);
            }
            out[l] = acc * inv_h2;
        }
    }
}

/// Pointwise (mass-lumped) Nemytskii operator: `result_i = f(v_i)`.
pub fn apply_nemytskii(f: impl Fn(f64) -> f64 + Sync, v: &Field) -> Result<Field> {
    let mut values = Vec::with_capacity(v.values.len());
    for (index, &x) in v.values.iter().enumerate() {
        let y = f(x);
        if !y.is_finite() {
            return Err(OcpError::NonFinite {
                what: "Nemytskii evaluation",
                index,
            });
        }
        values.push(y);
    }
    Ok(Field {
        grid: v.grid,
        values,
    })
}
