//! The reduced objective of the smoothed likelihood and its gradient.
//!
//! With cell masses `m[i][j]` (summing to 1 over the grid) define
//!
//! ```text
//! alpha[i]   = total mass in rows >= i            (alpha[0] = 1, alpha[k] = 0)
//! beta[i][j] = (column-j mass through row i-1) / eps   (beta[0][j] = 0)
//! ```
//!
//! The objective in mass form, with `w0`/`w1` the mixed-measure cell weights
//! of the histogram (`count / n`), is
//!
//! ```text
//! psi(m) = sum_i w0[i]   * phi(alpha[i+1], alpha[i])
//!        + sum_ij w1[i][j] * phi(beta[i+1][j], beta[i][j])
//!        - sum_ij m[i][j] + 1.
//! ```
//!
//! Maximizing `psi` over the nonnegative orthant is equivalent to maximizing
//! the smoothed log-likelihood over piecewise-constant densities: the linear
//! term is the simplex constraint's multiplier folded into the objective, so
//! the free maximizer lands on the simplex by itself.

use crate::error::{CscmError, Result};
use crate::histogram::Histogram;

use super::phi::{logdiff_ratio, phi_dx, phi_dy, phi_raw};
use super::MassMatrix;

/// Cumulative row and column masses of a `MassMatrix`.
#[derive(Debug, Clone)]
pub struct Accumulators {
    k: usize,
    l: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Accumulators {
    /// `alpha[i]`: total mass in rows `i..k`; length `k + 1`, `alpha[k] = 0`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `beta[i][j]`: column-`j` mass in rows `0..i`, divided by the mark
    /// binwidth; `i` ranges over `0..=k` with `beta[0][j] = 0`.
    pub fn beta(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= self.k && j < self.l);
        self.beta[i * self.l + j]
    }
}

/// Computes the cumulative masses entering the objective.
pub fn accumulate(masses: &MassMatrix) -> Accumulators {
    let grid = masses.grid();
    let (k, l) = (grid.k(), grid.l());
    let inv_eps = 1.0 / grid.eps();
    let m = masses.masses();

    let mut alpha = vec![0.0; k + 1];
    for i in (0..k).rev() {
        let row: f64 = m[i * l..(i + 1) * l].iter().sum();
        alpha[i] = alpha[i + 1] + row;
    }

    let mut beta = vec![0.0; (k + 1) * l];
    for i in 0..k {
        for j in 0..l {
            beta[(i + 1) * l + j] = beta[i * l + j] + m[i * l + j] * inv_eps;
        }
    }

    Accumulators { k, l, alpha, beta }
}

fn check_grids(masses: &MassMatrix, hist: &Histogram) -> Result<()> {
    if masses.grid() != hist.grid() {
        return Err(CscmError::GridMismatch(
            "mass matrix and histogram were built on different grids".into(),
        ));
    }
    Ok(())
}

/// Weight-level objective evaluation; `w0`, `w1` are mixed-measure cell
/// weights, `m` the masses (not necessarily on the simplex — the gradient
/// checks probe off-simplex points).
pub(crate) fn psi_value_raw(masses: &MassMatrix, w0: &[f64], w1: &[f64]) -> f64 {
    let grid = masses.grid();
    let (k, l) = (grid.k(), grid.l());
    let acc = accumulate(masses);
    let m = masses.masses();

    let mut val = 1.0 - m.iter().sum::<f64>();
    for i in 0..k {
        if w0[i] > 0.0 {
            val += w0[i] * phi_raw(acc.alpha[i + 1], acc.alpha[i]);
        }
        for j in 0..l {
            let w = w1[i * l + j];
            if w > 0.0 {
                val += w * phi_raw(acc.beta[(i + 1) * l + j], acc.beta[i * l + j]);
            }
        }
    }
    val
}

/// The objective `psi` for a mass matrix against a histogram on the same
/// grid. `-inf` when positive histogram weight sits where the masses put
/// none.
pub fn psi_objective(masses: &MassMatrix, hist: &Histogram) -> Result<f64> {
    check_grids(masses, hist)?;
    let (k, l) = (hist.grid().k(), hist.grid().l());
    let w0: Vec<f64> = (0..k).map(|i| hist.weight_line(i)).collect();
    let w1: Vec<f64> =
        (0..k).flat_map(|i| (0..l).map(move |j| (i, j))).map(|(i, j)| hist.weight_plane(i, j)).collect();
    Ok(psi_value_raw(masses, &w0, &w1))
}

/// Weight-level gradient; components may be `+inf` at boundary points where
/// a partial of `phi` diverges.
pub(crate) fn psi_gradient_raw(masses: &MassMatrix, w0: &[f64], w1: &[f64]) -> Vec<f64> {
    let grid = masses.grid();
    let (k, l) = (grid.k(), grid.l());
    let acc = accumulate(masses);
    let inv_eps = 1.0 / grid.eps();

    // Row-driven pieces. A cell (r, c) sees phi(alpha[i+1], alpha[i])
    // through both arguments for i < r and through alpha[r] alone for i = r.
    let mut line_prefix = vec![0.0; k + 1];
    for i in 0..k {
        let term = if w0[i] > 0.0 {
            w0[i] * logdiff_ratio(acc.alpha[i + 1], acc.alpha[i])
        } else {
            0.0
        };
        line_prefix[i + 1] = line_prefix[i] + term;
    }

    // Column-driven pieces: phi(beta[i+1][c], beta[i][c]) depends on (r, c)
    // through both arguments for i > r and through beta[r+1][c] for i = r.
    let mut col_suffix = vec![0.0; (k + 1) * l];
    for c in 0..l {
        for i in (0..k).rev() {
            let w = w1[i * l + c];
            let term = if w > 0.0 {
                w * logdiff_ratio(acc.beta[(i + 1) * l + c], acc.beta[i * l + c]) * inv_eps
            } else {
                0.0
            };
            col_suffix[i * l + c] = col_suffix[(i + 1) * l + c] + term;
        }
    }

    let mut grad = vec![0.0; k * l];
    for r in 0..k {
        let own_line = if w0[r] > 0.0 {
            w0[r] * phi_dy(acc.alpha[r + 1], acc.alpha[r])
        } else {
            0.0
        };
        for c in 0..l {
            let w = w1[r * l + c];
            let own_col = if w > 0.0 {
                w * phi_dx(acc.beta[(r + 1) * l + c], acc.beta[r * l + c]) * inv_eps
            } else {
                0.0
            };
            grad[r * l + c] =
                line_prefix[r] + own_line + col_suffix[(r + 1) * l + c] + own_col - 1.0;
        }
    }
    grad
}

/// Analytic gradient of `psi` in the cell masses, row-major `k x l`.
pub fn psi_gradient(masses: &MassMatrix, hist: &Histogram) -> Result<Vec<f64>> {
    check_grids(masses, hist)?;
    let (k, l) = (hist.grid().k(), hist.grid().l());
    let w0: Vec<f64> = (0..k).map(|i| hist.weight_line(i)).collect();
    let w1: Vec<f64> =
        (0..k).flat_map(|i| (0..l).map(move |j| (i, j))).map(|(i, j)| hist.weight_plane(i, j)).collect();
    Ok(psi_gradient_raw(masses, &w0, &w1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::Grid;

    #[test]
    fn accumulators_on_uniform_2x2() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let m = MassMatrix::uniform(&grid);
        let acc = accumulate(&m);
        assert_eq!(acc.alpha(), &[1.0, 0.5, 0.0]);
        // eps = 0.5, column mass through row 0 is 0.25 -> beta = 0.5
        assert_eq!(acc.beta(0, 0), 0.0);
        assert_eq!(acc.beta(1, 0), 0.5);
        assert_eq!(acc.beta(2, 0), 1.0);
        assert_eq!(acc.beta(2, 1), 1.0);
    }

    #[test]
    fn accumulators_point_mass() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let m = MassMatrix::new(&grid, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let acc = accumulate(&m);
        assert_eq!(acc.alpha(), &[1.0, 0.0, 0.0]);
        assert_eq!(acc.beta(1, 0), 2.0); // 1 / eps
        assert_eq!(acc.beta(1, 1), 0.0);
    }

    #[test]
    fn total_mass_leads_accumulators() {
        let grid = Grid::new(1.0, 1.0, 3, 2).unwrap();
        let m = MassMatrix::new(&grid, vec![0.1, 0.2, 0.05, 0.15, 0.3, 0.2]).unwrap();
        let acc = accumulate(&m);
        assert!((acc.alpha()[0] - 1.0).abs() < 1e-15);
        // alpha nonincreasing, beta nondecreasing per column
        for i in 0..3 {
            assert!(acc.alpha()[i] >= acc.alpha()[i + 1]);
            for j in 0..2 {
                assert!(acc.beta(i + 1, j) >= acc.beta(i, j));
            }
        }
    }

    /// With zero histogram weights psi reduces to its linear part, whose
    /// gradient is identically -1.
    #[test]
    fn gradient_of_linear_part() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let m = MassMatrix::new(&grid, vec![0.4, 0.1, 0.3, 0.2]).unwrap();
        let w0 = vec![0.0; 2];
        let w1 = vec![0.0; 4];
        assert_eq!(psi_value_raw(&m, &w0, &w1), 0.0);
        let grad = psi_gradient_raw(&m, &w0, &w1);
        assert_eq!(grad, vec![-1.0; 4]);
    }
}
