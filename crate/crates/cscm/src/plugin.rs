//! The two plug-in competitors: a grid-window ratio estimator and an
//! Epanechnikov-kernel ratio estimator.
//!
//! Both estimate the joint CDF at a point directly as
//! (weighted count of uncensored observations with mark at most z) /
//! (weighted count of observations near t). Unlike the smoothed-likelihood
//! fit, neither is guaranteed to be a genuine distribution function: the
//! grid version can assign negative mass to rectangles.

use crate::error::{CscmError, Result};
use crate::histogram::Grid;
use crate::model::Sample;

/// Node values of the grid plug-in estimator.
///
/// The value at grid node `(a_i, b_j)` is the fraction of observations in
/// the two-cell time window `A_i ∪ A_{i+1}` (cells `i-1` and `i` 0-based,
/// clipped to the grid) whose mark lies in `(0, b_j]`. Nodes with an empty
/// window are undefined. Values are stored for `i = 0..=k`, `j = 0..=l`.
#[derive(Debug, Clone)]
pub struct GridCdf {
    grid: Grid,
    values: Vec<Option<f64>>,
}

/// Builds the grid plug-in estimator. Needs at least two time cells so the
/// last interval can be linearly extended.
pub fn plugin_grid_cdf(sample: &Sample, grid: &Grid) -> Result<GridCdf> {
    let (k, l) = (grid.k(), grid.l());
    // per-cell counts: all observations, and uncensored ones by mark cell
    let mut cell_total = vec![0u64; k];
    let mut cell_mark = vec![0u64; k * l];
    for (index, o) in sample.iter().enumerate() {
        let out_of_support = || CscmError::OutOfSupport {
            index,
            t: o.t(),
            z: o.z(),
            m1: grid.m1(),
            m2: grid.m2(),
        };
        let i = grid.time_cell_of(o.t()).ok_or_else(out_of_support)?;
        cell_total[i] += 1;
        if !o.is_censored() {
            let j = grid.mark_cell_of(o.z()).ok_or_else(out_of_support)?;
            cell_mark[i * l + j] += 1;
        }
    }

    let mut values = vec![None; (k + 1) * (l + 1)];
    for i in 0..=k {
        // window = cells i-1 and i, clipped to the grid
        let cells: Vec<usize> =
            [i.checked_sub(1), if i < k { Some(i) } else { None }].iter().flatten().copied().collect();
        let den: u64 = cells.iter().map(|&c| cell_total[c]).sum();
        if den == 0 {
            continue;
        }
        let mut cum = 0u64;
        for j in 0..=l {
            if j > 0 {
                cum += cells.iter().map(|&c| cell_mark[c * l + (j - 1)]).sum::<u64>();
            }
            values[i * (l + 1) + j] = Some(cum as f64 / den as f64);
        }
    }
    Ok(GridCdf { grid: *grid, values })
}

impl GridCdf {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Node value at `(a_i, b_j)`, `None` where undefined.
    pub fn node(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * (self.grid.l() + 1) + j]
    }

    fn node_or_err(&self, i: usize, j: usize) -> Result<f64> {
        self.node(i, j).ok_or(CscmError::UndefinedNode { i, j })
    }

    /// Value at a node column `i` for arbitrary `z` by linear interpolation
    /// between the bracketing mark nodes.
    fn column_value(&self, i: usize, z: f64) -> Result<f64> {
        let l = self.grid.l();
        let pos = (z.clamp(0.0, self.grid.m2()) / self.grid.m2()) * l as f64;
        let j = (pos.floor() as usize).min(l - 1);
        let frac = pos - j as f64;
        if frac == 0.0 {
            return self.node_or_err(i, j);
        }
        let lo = self.node_or_err(i, j)?;
        let hi = self.node_or_err(i, j + 1)?;
        Ok(lo + frac * (hi - lo))
    }

    /// Evaluates by bilinear interpolation between defined nodes; on the
    /// last time interval the value is extended linearly in `t` from the two
    /// preceding node columns. Results are clamped to `[0, 1]`.
    ///
    /// Errors with the offending node when a needed node is undefined.
    pub fn eval(&self, t: f64, z: f64) -> Result<f64> {
        let k = self.grid.k();
        let t = t.clamp(0.0, self.grid.m1());
        let pos = (t / self.grid.m1()) * k as f64;
        let raw = if pos > (k - 1) as f64 {
            // last interval: linear extension from columns k-2 and k-1
            let v_prev = self.column_value(k - 2, z)?;
            let v_last = self.column_value(k - 1, z)?;
            v_last + (v_last - v_prev) * (pos - (k - 1) as f64)
        } else {
            let i = (pos.floor() as usize).min(k - 2);
            let frac = pos - i as f64;
            if frac == 0.0 {
                self.column_value(i, z)?
            } else {
                let lo = self.column_value(i, z)?;
                let hi = self.column_value(i + 1, z)?;
                lo + frac * (hi - lo)
            }
        };
        Ok(raw.clamp(0.0, 1.0))
    }
}

/// The Epanechnikov kernel `k(u) = 3/4 (1 - u^2)` on `[-1, 1]`.
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.75 * (1.0 - u * u)
    }
}

/// Kernel plug-in estimate of the joint CDF at `(t0, z0)`:
/// kernel-weighted fraction of observations near `t0` whose mark lies in
/// `(0, z0]`.
pub fn kernel_plugin_cdf(sample: &Sample, t0: f64, z0: f64, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(CscmError::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for o in sample.iter() {
        let w = epanechnikov((t0 - o.t()) / bandwidth) / bandwidth;
        if w > 0.0 {
            den += w;
            if o.z() > 0.0 && o.z() <= z0 {
                num += w;
            }
        }
    }
    if den == 0.0 {
        return Err(CscmError::ZeroDenominator { t0, bandwidth });
    }
    Ok(num / den)
}
