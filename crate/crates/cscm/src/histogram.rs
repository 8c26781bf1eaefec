//! Equispaced grid over the observation space and the histogram-type
//! smoothed observation density built on it.
//!
//! The support `[0, M1] x [0, M2]` is cut into `k` half-open time cells
//! `(a_{i-1}, a_i]` of width `delta = M1 / k` and `l` mark cells
//! `(b_{j-1}, b_j]` of width `eps = M2 / l`. A sample is smoothed into cell
//! averages:
//!
//! ```text
//! h0[i]    = count(time cell i, z = 0)       / (delta * n)
//! h1[i][j] = count(time cell i, mark cell j) / (delta * eps * n)
//! ```
//!
//! Under the mixed dominating measure this normalizes exactly:
//! `delta * sum h0 + delta * eps * sum h1 = (total count) / n = 1`.
//!
//! Cell indices are 0-based throughout. Observations with `t = 0` land in
//! the first time cell; `z = 0` rows are line cells, never mark cells.

use serde::{Deserialize, Serialize};

use crate::error::{CscmError, Result};
use crate::model::Sample;

/// Tolerance for clamping observations marginally beyond the support.
const SUPPORT_CLAMP_TOL: f64 = 1e-12;

/// Constant in the default time-cell rule `k = round(c * n^(1/5))`, chosen
/// so the cell count runs from 4 at n = 500 up to 7 at n = 10000 (and is 5
/// at n = 1000, putting the benchmark evaluation times on the grid).
const DEFAULT_CELL_RULE_C: f64 = 1.15;

/// Default number of mark cells.
pub const DEFAULT_MARK_CELLS: usize = 5;

/// A histogram cell identifier (0-based), used when reporting empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    /// Segment `i` of the line z = 0.
    Line { i: usize },
    /// Rectangle `(i, j)` of the plane z > 0.
    Plane { i: usize, j: usize },
}

/// Bin-edge layout shared by histograms, mass matrices and grid CDFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    k: usize,
    l: usize,
    m1: f64,
    m2: f64,
    delta: f64,
    eps: f64,
}

impl Grid {
    /// Equispaced grid with `k >= 2` time cells and `l >= 1` mark cells.
    /// The EM boundary updates need at least two time cells.
    pub fn new(m1: f64, m2: f64, k: usize, l: usize) -> Result<Self> {
        if !(m1.is_finite() && m2.is_finite() && m1 > 0.0 && m2 > 0.0) {
            return Err(CscmError::InvalidArgument(format!(
                "support bounds must be positive and finite, got ({m1}, {m2})"
            )));
        }
        if k < 2 {
            return Err(CscmError::InvalidArgument(format!(
                "need at least 2 time cells, got {k}"
            )));
        }
        if l < 1 {
            return Err(CscmError::InvalidArgument(format!(
                "need at least 1 mark cell, got {l}"
            )));
        }
        Ok(Grid { k, l, m1, m2, delta: m1 / k as f64, eps: m2 / l as f64 })
    }

    /// Default cell counts for a sample of size `n`:
    /// `k = max(2, round(1.15 * n^(1/5)))` and `l = 5`.
    pub fn default_cells(n: usize) -> (usize, usize) {
        let k = (DEFAULT_CELL_RULE_C * (n as f64).powf(0.2)).round() as usize;
        (k.max(2), DEFAULT_MARK_CELLS)
    }

    /// Grid over `[0, m1] x [0, m2]` with the default cell counts for `n`.
    pub fn with_default_cells(m1: f64, m2: f64, n: usize) -> Result<Self> {
        let (k, l) = Self::default_cells(n);
        Self::new(m1, m2, k, l)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Time edge `a_i = i * delta`, for `i = 0..=k`.
    pub fn time_edge(&self, i: usize) -> f64 {
        debug_assert!(i <= self.k);
        i as f64 * self.delta
    }

    /// Mark edge `b_j = j * eps`, for `j = 0..=l`.
    pub fn mark_edge(&self, j: usize) -> f64 {
        debug_assert!(j <= self.l);
        j as f64 * self.eps
    }

    /// 0-based index of the half-open cell containing `v` on an axis with
    /// `cells` cells over `[0, bound]`. `v = 0` maps to cell 0; values within
    /// the clamping tolerance beyond `bound` map to the last cell.
    ///
    /// Computed as `ceil(v * cells / bound)` so that refining a grid by an
    /// integer factor assigns every value consistently (doubling a product
    /// is exact in floating point).
    fn cell_index(v: f64, bound: f64, cells: usize) -> Option<usize> {
        if v < 0.0 || v > bound + SUPPORT_CLAMP_TOL {
            return None;
        }
        let pos = (v * cells as f64 / bound).ceil() as usize;
        Some(pos.clamp(1, cells) - 1)
    }

    /// Time-cell index for `t`, or `None` if outside the support.
    pub fn time_cell_of(&self, t: f64) -> Option<usize> {
        Self::cell_index(t, self.m1, self.k)
    }

    /// Mark-cell index for `z > 0`, or `None` if outside the support.
    pub fn mark_cell_of(&self, z: f64) -> Option<usize> {
        if z <= 0.0 {
            return None;
        }
        Self::cell_index(z, self.m2, self.l)
    }
}

/// Cell counts and normalized heights for one sample on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    grid: Grid,
    /// Count of `z = 0` observations per time cell, length `k`.
    counts_line: Vec<u64>,
    /// Count of `z > 0` observations per cell, row-major `k x l`.
    counts_plane: Vec<u64>,
    n: usize,
    /// Heights `h0[i] = counts_line[i] / (delta n)`.
    h0: Vec<f64>,
    /// Heights `h1[i*l + j] = counts_plane[i*l + j] / (delta eps n)`.
    h1: Vec<f64>,
}

impl Histogram {
    /// Bins a sample into the grid. Observations more than 1e-12 outside the
    /// support are rejected with their index.
    pub fn build(sample: &Sample, grid: &Grid) -> Result<Self> {
        let (k, l) = (grid.k, grid.l);
        let mut counts_line = vec![0u64; k];
        let mut counts_plane = vec![0u64; k * l];
        for (index, o) in sample.iter().enumerate() {
            let out_of_support = || CscmError::OutOfSupport {
                index,
                t: o.t(),
                z: o.z(),
                m1: grid.m1,
                m2: grid.m2,
            };
            let i = grid.time_cell_of(o.t()).ok_or_else(out_of_support)?;
            if o.is_censored() {
                counts_line[i] += 1;
            } else {
                let j = grid.mark_cell_of(o.z()).ok_or_else(out_of_support)?;
                counts_plane[i * l + j] += 1;
            }
        }
        let n = sample.n();
        let h0 = counts_line.iter().map(|&c| c as f64 / (grid.delta * n as f64)).collect();
        let h1 = counts_plane
            .iter()
            .map(|&c| c as f64 / (grid.delta * grid.eps * n as f64))
            .collect();
        Ok(Histogram { grid: *grid, counts_line, counts_plane, n, h0, h1 })
    }

    /// Builds directly from cell counts (`n` = total count). Used by tests
    /// and synthetic instances.
    pub fn from_counts(grid: &Grid, counts_line: Vec<u64>, counts_plane: Vec<u64>) -> Result<Self> {
        if counts_line.len() != grid.k || counts_plane.len() != grid.k * grid.l {
            return Err(CscmError::GridMismatch(format!(
                "count vectors ({}, {}) do not match a {} x {} grid",
                counts_line.len(),
                counts_plane.len(),
                grid.k,
                grid.l
            )));
        }
        let total: u64 = counts_line.iter().sum::<u64>() + counts_plane.iter().sum::<u64>();
        if total == 0 {
            return Err(CscmError::InvalidArgument("histogram needs at least one count".into()));
        }
        let n = total as usize;
        let h0 = counts_line.iter().map(|&c| c as f64 / (grid.delta * n as f64)).collect();
        let h1 = counts_plane
            .iter()
            .map(|&c| c as f64 / (grid.delta * grid.eps * n as f64))
            .collect();
        Ok(Histogram { grid: *grid, counts_line, counts_plane, n, h0, h1 })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Height of line cell `i`.
    pub fn h0(&self, i: usize) -> f64 {
        self.h0[i]
    }

    /// Height of plane cell `(i, j)`.
    pub fn h1(&self, i: usize, j: usize) -> f64 {
        self.h1[i * self.grid.l + j]
    }

    pub fn counts_line(&self) -> &[u64] {
        &self.counts_line
    }

    pub fn counts_plane(&self) -> &[u64] {
        &self.counts_plane
    }

    /// Mixed-measure weight of line cell `i`: `delta * h0[i] = count / n`.
    pub fn weight_line(&self, i: usize) -> f64 {
        self.counts_line[i] as f64 / self.n as f64
    }

    /// Mixed-measure weight of plane cell `(i, j)`:
    /// `delta * eps * h1[i][j] = count / n`.
    pub fn weight_plane(&self, i: usize, j: usize) -> f64 {
        self.counts_plane[i * self.grid.l + j] as f64 / self.n as f64
    }

    /// Cells with zero count, line cells first.
    pub fn empty_cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (i, &c) in self.counts_line.iter().enumerate() {
            if c == 0 {
                cells.push(Cell::Line { i });
            }
        }
        for i in 0..self.grid.k {
            for j in 0..self.grid.l {
                if self.counts_plane[i * self.grid.l + j] == 0 {
                    cells.push(Cell::Plane { i, j });
                }
            }
        }
        cells
    }

    pub fn fully_occupied(&self) -> bool {
        self.counts_line.iter().all(|&c| c > 0) && self.counts_plane.iter().all(|&c| c > 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, Observation};
    use crate::sampler::draw_sample;
    use proptest::prelude::*;

    fn sample_of(points: &[(f64, f64)]) -> Sample {
        Sample::new(points.iter().map(|&(t, z)| Observation::new(t, z).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = Grid::new(1.0, 1.0, 5, 5).unwrap();
        assert_eq!(g.delta(), 0.2);
        assert_eq!(g.eps(), 0.2);
        let g = Grid::new(1.0, 1.0, 2, 1).unwrap();
        assert_eq!(g.delta(), 0.5);
        assert_eq!(g.eps(), 1.0);
        assert!(Grid::new(1.0, 1.0, 1, 5).is_err());
        assert!(Grid::new(0.0, 1.0, 2, 1).is_err());
        assert!(Grid::new(1.0, -1.0, 2, 1).is_err());
    }

    #[test]
    fn default_cell_rule_matches_reported_range() {
        assert_eq!(Grid::default_cells(500), (4, 5));
        assert_eq!(Grid::default_cells(1000), (5, 5));
        assert_eq!(Grid::default_cells(5000), (6, 5));
        assert_eq!(Grid::default_cells(10_000), (7, 5));
    }

    #[test]
    fn four_observation_example() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let sample = sample_of(&[(0.1, 0.0), (0.3, 0.4), (0.6, 0.2), (0.7, 0.9)]);
        let hist = Histogram::build(&sample, &grid).unwrap();
        assert_eq!(hist.h0(0), 0.5);
        assert_eq!(hist.h0(1), 0.0);
        assert_eq!(hist.h1(0, 0), 1.0);
        assert_eq!(hist.h1(0, 1), 0.0);
        assert_eq!(hist.h1(1, 0), 1.0);
        assert_eq!(hist.h1(1, 1), 1.0);
        // normalization under the mixed measure: 0.25 + 0.75 = 1
        let line: f64 = (0..2).map(|i| hist.weight_line(i)).sum();
        let plane: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| hist.weight_plane(i, j))
            .sum();
        assert_eq!(line, 0.25);
        assert_eq!(plane, 0.75);
    }

    #[test]
    fn single_observation_height() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let hist = Histogram::build(&sample_of(&[(0.1, 0.1)]), &grid).unwrap();
        assert_eq!(hist.h1(0, 0), 4.0);
        assert_eq!(hist.empty_cells().len(), 2 + 3);
    }

    #[test]
    fn all_censored_sample() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let hist = Histogram::build(&sample_of(&[(0.1, 0.0), (0.9, 0.0)]), &grid).unwrap();
        assert!(hist.h1.iter().all(|&h| h == 0.0));
        let line: f64 = (0..2).map(|i| hist.weight_line(i)).sum();
        assert_eq!(line, 1.0);
    }

    #[test]
    fn boundary_and_out_of_support() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        // t = 0 joins the first cell, values at edges stay half-open
        let hist = Histogram::build(&sample_of(&[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]), &grid)
            .unwrap();
        assert_eq!(hist.counts_line(), &[1, 0]);
        assert_eq!(hist.counts_plane(), &[1, 0, 0, 1]);
        // within clamping tolerance
        assert!(Histogram::build(&sample_of(&[(1.0 + 5e-13, 0.2)]), &grid).is_ok());
        // beyond it
        let err = Histogram::build(&sample_of(&[(1.1, 0.2)]), &grid).unwrap_err();
        assert!(matches!(err, CscmError::OutOfSupport { index: 0, .. }));
    }

    #[test]
    fn counts_sum_to_n() {
        let sample = draw_sample(&ModelSpec::polynomial(), 5000, 3).unwrap();
        let grid = Grid::new(1.0, 1.0, 7, 5).unwrap();
        let hist = Histogram::build(&sample, &grid).unwrap();
        let total: u64 =
            hist.counts_line().iter().sum::<u64>() + hist.counts_plane().iter().sum::<u64>();
        assert_eq!(total as usize, sample.n());
    }

    proptest! {
        /// Aggregating the counts of a 2k x 2l histogram back to k x l must
        /// reproduce the k x l histogram exactly, for any sample.
        #[test]
        fn refinement_consistency(
            points in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..200),
            k in 2usize..6,
            l in 1usize..5,
        ) {
            let sample = sample_of(&points);
            let coarse_grid = Grid::new(1.0, 1.0, k, l).unwrap();
            let fine_grid = Grid::new(1.0, 1.0, 2 * k, 2 * l).unwrap();
            let coarse = Histogram::build(&sample, &coarse_grid).unwrap();
            let fine = Histogram::build(&sample, &fine_grid).unwrap();

            for i in 0..k {
                let agg = fine.counts_line()[2 * i] + fine.counts_line()[2 * i + 1];
                prop_assert_eq!(agg, coarse.counts_line()[i]);
            }
            for i in 0..k {
                for j in 0..l {
                    let mut agg = 0;
                    for di in 0..2 {
                        for dj in 0..2 {
                            agg += fine.counts_plane()[(2 * i + di) * 2 * l + 2 * j + dj];
                        }
                    }
                    prop_assert_eq!(agg, coarse.counts_plane()[i * l + j]);
                }
            }
        }
    }
}
