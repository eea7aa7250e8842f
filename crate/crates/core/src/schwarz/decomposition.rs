use serde::{Deserialize, Serialize};

use crate::error::{OcpError, Result};
use crate::grid::{Grid, Rect};

/// One overlapping subdomain `Ω_i` with its ownership block `Ω̃_i ⊆ Ω_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    id: usize,
    owned: Rect,
    overlap: Rect,
    /// Global index of every point of `overlap`, in local order.
    global: Vec<usize>,
    /// `(local position, global index)` of every owned point.
    owned_map: Vec<(usize, usize)>,
}

impl Subdomain {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn owned(&self) -> &Rect {
        &self.owned
    }

    pub fn overlap(&self) -> &Rect {
        &self.overlap
    }

    /// Number of grid points in `Ω_i`.
    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }

    pub fn global_indices(&self) -> &[usize] {
        &self.global
    }

    pub fn owned_map(&self) -> &[(usize, usize)] {
        &self.owned_map
    }

    /// `R_i` on a grid field.
    pub fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.global.iter().map(|&g| v[g]).collect()
    }

    /// `P_i` on a grid field: zero extension of a local field.
    pub fn prolong(&self, local: &[f64], n_total: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_total];
        for (l, &g) in self.global.iter().enumerate() {
            out[g] = local[l];
        }
        out
    }

    /// `R_i` on a `[y; p]` pair vector, giving `[y_i; p_i]`.
    pub fn restrict_pair(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len() / 2;
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend(self.global.iter().map(|&g| v[g]));
        out.extend(self.global.iter().map(|&g| v[n + g]));
        out
    }

    /// Writes the owned entries of a local pair into the global pair `out` (`P̃_i`).
    pub fn scatter_owned_pair(&self, local: &[f64], out: &mut [f64]) {
        let n = out.len() / 2;
        let m = self.len();
        for &(l, g) in &self.owned_map {
            out[g] = local[l];
            out[n + g] = local[m + l];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSummary {
    pub owned_rows: [usize; 2],
    pub owned_cols: [usize; 2],
    pub overlap_rows: [usize; 2],
    pub overlap_cols: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub rows: usize,
    pub cols: usize,
    pub overlap: usize,
    pub tiles: Vec<TileSummary>,
    /// Inner Newton iterations summed over all evaluations, per subdomain.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_iters_per_subdomain: Vec<usize>,
}

/// A rectangular `s1 × s2` tiling of the interior grid (s1 tiles along `x2`,
/// s2 along `x1`) with every tile dilated by `m` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    grid: Grid,
    s1: usize,
    s2: usize,
    overlap: usize,
    subdomains: Vec<Subdomain>,
}

/// Near-equal split of `0..n` into `s` ranges; the last range takes the remainder.
fn split(n: usize, s: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / s;
    (0..s)
        .map(|k| {
            let start = k * base;
            let end = if k + 1 == s { n } else { start + base };
            start..end
        })
        .collect()
}

pub fn decompose(grid: &Grid, s1: usize, s2: usize, m: usize) -> Result<Decomposition> {
    let n = grid.n();
    if s1 == 0 || s2 == 0 {
        return Err(OcpError::InvalidArgument(format!(
            "decomposition {s1}x{s2} has no subdomains"
        )));
    }
    if s1 > n || s2 > n {
        return Err(OcpError::InvalidArgument(format!(
            "decomposition {s1}x{s2} leaves empty tiles on a grid with {n} points per dimension"
        )));
    }
    let rows = split(n, s1);
    let cols = split(n, s2);
    let smallest = rows.iter().chain(&cols).map(|r| r.len()).min().unwrap_or(0);
    if (s1 > 1 || s2 > 1) && m > smallest {
        return Err(OcpError::InvalidArgument(format!(
            "overlap {m} exceeds the smallest tile size {smallest}"
        )));
    }
    let mut subdomains = Vec::with_capacity(s1 * s2);
    for r in &rows {
        for c in &cols {
            let owned = Rect {
                rows: r.clone(),
                cols: c.clone(),
            };
            let overlap = owned.dilate(m, grid);
            let global = overlap.global_indices(grid);
            let mut owned_map = Vec::with_capacity(owned.len());
            for row in owned.rows.clone() {
                for col in owned.cols.clone() {
                    owned_map.push((overlap.local_index(row, col), grid.index(row, col)));
                }
            }
            subdomains.push(Subdomain {
                id: subdomains.len(),
                owned,
                overlap,
                global,
                owned_map,
            });
        }
    }
    Ok(Decomposition {
        grid: *grid,
        s1,
        s2,
        overlap: m,
        subdomains,
    })
}

impl Decomposition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.s1, self.s2)
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    /// `Σ P̃_i R_i v` on a grid field.
    pub fn recombine(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for sub in &self.subdomains {
            let local = sub.restrict(v);
            for &(l, g) in &sub.owned_map {
                out[g] = local[l];
            }
        }
        out
    }

    pub fn summary(&self) -> DecompositionSummary {
        let span = |r: &std::ops::Range<usize>| [r.start, r.end];
        DecompositionSummary {
            rows: self.s1,
            cols: self.s2,
            overlap: self.overlap,
            tiles: self
                .subdomains
                .iter()
                .map(|s| TileSummary {
                    owned_rows: span(&s.owned.rows),
                    owned_cols: span(&s.owned.cols),
                    overlap_rows: span(&s.overlap.rows),
                    overlap_cols: span(&s.overlap.cols),
                })
                .collect(),
            inner_iters_per_subdomain: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_overlap_gives_ownership_blocks() {
        let g = Grid::new(8).unwrap();
        let d = decompose(&g, 2, 2, 0).unwrap();
        assert_eq!(d.len(), 4);
        for s in d.subdomains() {
            assert_eq!(s.owned(), s.overlap());
            assert_eq!(s.owned().height(), 4);
            assert_eq!(s.owned().width(), 4);
        }
    }

    #[test]
    fn overlap_two_on_eight_gives_six_by_six() {
        let g = Grid::new(8).unwrap();
        let d = decompose(&g, 2, 2, 2).unwrap();
        let s0 = &d.subdomains()[0];
        assert_eq!(
            s0.overlap(),
            &Rect {
                rows: 0..6,
                cols: 0..6
            }
        );
        let s3 = &d.subdomains()[3];
        assert_eq!(
            s3.overlap(),
            &Rect {
                rows: 2..8,
                cols: 2..8
            }
        );
        for s in d.subdomains() {
            assert_eq!(s.len(), 36);
        }
    }

    #[test]
    fn remainder_goes_to_last_tile() {
        let g = Grid::new(17).unwrap();
        let d = decompose(&g, 3, 3, 1).unwrap();
        let heights: Vec<usize> = d
            .subdomains()
            .iter()
            .step_by(3)
            .map(|s| s.owned().height())
            .collect();
        assert_eq!(heights, vec![5, 5, 7]);
    }

    #[test]
    fn ownership_partitions_grid() {
        for n in [8, 9, 17] {
            let g = Grid::new(n).unwrap();
            for (s1, s2) in [(1, 1), (2, 2), (2, 3), (3, 3)] {
                let d = decompose(&g, s1, s2, 2).unwrap();
                let mut hits = vec![0; g.len()];
                for s in d.subdomains() {
                    for &(l, gi) in s.owned_map() {
                        hits[gi] += 1;
                        assert_eq!(s.global_indices()[l], gi);
                    }
                }
                assert!(hits.iter().all(|&h| h == 1));
            }
        }
    }

    #[test]
    fn invalid_decompositions_rejected() {
        let g = Grid::new(8).unwrap();
        assert!(decompose(&g, 0, 2, 1).is_err());
        assert!(decompose(&g, 9, 1, 0).is_err());
        assert!(decompose(&g, 4, 4, 3).is_err());
        assert!(decompose(&g, 1, 1, 5).is_ok());
    }

    #[test]
    fn pair_restriction_round_trip() {
        let g = Grid::new(9).unwrap();
        let d = decompose(&g, 2, 3, 2).unwrap();
        let v: Vec<f64> = (0..2 * g.len()).map(|i| i as f64 * 0.5 - 3.0).collect();
        let mut out = vec![0.0; v.len()];
        for s in d.subdomains() {
            let local = s.restrict_pair(&v);
            assert_eq!(local.len(), 2 * s.len());
            s.scatter_owned_pair(&local, &mut out);
        }
        assert_eq!(out, v);
    }

    #[test]
    fn summary_lists_every_tile() {
        let g = Grid::new(12).unwrap();
        let d = decompose(&g, 2, 4, 2).unwrap();
        let s = d.summary();
        assert_eq!(s.tiles.len(), 8);
        assert_eq!(s.tiles[0].owned_cols, [0, 3]);
        assert_eq!(s.tiles[0].overlap_cols, [0, 5]);
    }
}
