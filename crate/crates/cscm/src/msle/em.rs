//! The self-consistency (EM) update for the smoothed-likelihood maximizer.
//!
//! Each step redistributes every histogram cell's weight over the mass
//! matrix according to the conditional event-cell distribution under the
//! current masses, integrated in closed form over the cell:
//!
//! - weight of plane cell `(i, j)` is shared among column-`j` cells in rows
//!   `0..=i` (the event happened by the inspection time, at the observed
//!   mark);
//! - weight of line cell `i` is shared among rows `i..k` in proportion to
//!   row masses (the event was still pending), then within a row in
//!   proportion to the row's cells.
//!
//! For cell `(r, c)` with `S = column mass above r`, `F = row masses`,
//! `R[i] = mass in rows >= i`, the update is
//!
//! ```text
//! new[r][c] = [r = 0] w1[0][c]
//!           + [r > 0] w1[r][c] * (x - ln(1+x)) / x            x = m/S
//!           + m[r][c] * sum_{i>r} w1[i][c] * ln(1+x_i) / m[i][c]
//!           + m[r][c] * sum_{i<r} w0[i] * ln(1+y_i) / F[i]     y_i = F[i]/R[i+1]
//!           + m[r][c] * w0[r] * (F[r] - R[r+1] ln(1+y_r)) / F[r]^2
//! ```
//!
//! which is the closed-form integral of the conditional allocation; the last
//! row's tail term degenerates to `m[r][c] * w0[k-1] / F[k-1]`. When a ratio
//! drops below 1e-8 the own-cell brackets switch to their small-ratio series
//! (`(x - ln(1+x))/x -> x/2 - x^2/3`, row analogues alike), which lets
//! individual masses shrink to zero without catastrophic cancellation; the
//! receiver coefficients are exact at every ratio through `ln_1p`.
//!
//! The step multiplies each mass by the corresponding partial derivative of
//! the log-likelihood part of `psi`, and total output mass equals total
//! histogram weight, so the simplex is preserved exactly. The returned
//! `gap` is the scalar product of the updated masses with the gradient of
//! `psi` at the input point; it is nonnegative up to rounding, vanishes
//! exactly at the fixed point, and is the stopping criterion for the fit.

use crate::error::{CscmError, Result};
use crate::histogram::Histogram;

use super::MassMatrix;

/// Ratio below which the small-ratio limit forms are used.
const SMALL_RATIO: f64 = 1e-8;

/// Masses whose optimum is on the simplex boundary shrink geometrically and
/// would decay into subnormal territory, where division quantization
/// corrupts the shared coefficients; below this floor they flush to exact
/// zero, which the update treats correctly.
const MASS_FLOOR: f64 = 1e-250;

#[derive(Debug, Clone)]
pub(crate) struct EmStep {
    pub masses: Vec<f64>,
    /// `<updated masses, grad psi(input)>`; `+inf` when the input put zero
    /// mass where the update creates some.
    pub gap: f64,
    /// Histogram cells whose weight could not be allocated because every
    /// candidate cell had zero mass. Mass is lost for the step; the fit
    /// records the event.
    pub degenerate_cells: usize,
}

/// Coefficient `ln(1 + a/s) / a` multiplying receiver masses below a plane
/// cell with mass `a` and column mass `s` above it. `ln_1p` keeps this
/// exact down to the `a = 0` limit `1/s`.
fn receiver_coef(a: f64, s: f64) -> f64 {
    if s == 0.0 {
        // nothing below to receive
        return 0.0;
    }
    if a == 0.0 {
        return 1.0 / s;
    }
    (a / s).ln_1p() / a
}

/// Own-cell allocation `w * (x - ln(1+x)) / x`, `x = a/s`, with its limits:
/// everything (`w`) when nothing lies below, roughly half the receiver
/// share when `a` is tiny. Small ratios take the series `x/2 - x^2/3 + ...`
/// (the direct form cancels catastrophically); the second-order term keeps
/// the own + receiver pair summing to `w` at full precision, which is what
/// preserves the simplex exactly.
fn own_plane_term(w: f64, a: f64, s: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if s == 0.0 {
        return w;
    }
    let x = a / s;
    if x < SMALL_RATIO {
        w * x * (0.5 - x / 3.0)
    } else if x < 1e-4 {
        w * x * (0.5 - x / 3.0 + x * x / 4.0 - x * x * x / 5.0)
    } else {
        w * (x - x.ln_1p()) / x
    }
}

pub(crate) fn em_step_core(masses: &MassMatrix, hist: &Histogram) -> EmStep {
    let grid = masses.grid();
    let (k, l) = (grid.k(), grid.l());
    let m = masses.masses();
    let w0: Vec<f64> = (0..k).map(|i| hist.weight_line(i)).collect();
    let w1: Vec<f64> = (0..k)
        .flat_map(|i| (0..l).map(move |j| (i, j)))
        .map(|(i, j)| hist.weight_plane(i, j))
        .collect();

    let mut degenerate_cells = 0usize;

    // Row masses and suffix totals R[i] = mass in rows >= i.
    let mut row = vec![0.0; k];
    for i in 0..k {
        row[i] = m[i * l..(i + 1) * l].iter().sum();
    }
    let mut suffix = vec![0.0; k + 1];
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] + row[i];
    }

    // Shared row-driven coefficient for cell (r, c):
    //   row_coef[r] = sum_{i<r} w0[i] ln(1+y_i)/F[i] + own-row bracket at r.
    let mut row_coef = vec![0.0; k];
    let mut prefix = 0.0;
    for i in 0..k {
        // line cell i needs some mass at or after row i
        if w0[i] > 0.0 && suffix[i] == 0.0 {
            degenerate_cells += 1;
        }
        // own-row share of line cell i, as a coefficient on that row's cells
        let own = if row[i] == 0.0 {
            0.0 // multiplies masses in an empty row
        } else if suffix[i + 1] == 0.0 {
            w0[i] / row[i]
        } else {
            let y = row[i] / suffix[i + 1];
            if y < SMALL_RATIO {
                w0[i] * (0.5 - y / 3.0) / suffix[i + 1]
            } else if y < 1e-4 {
                w0[i] * (0.5 - y / 3.0 + y * y / 4.0 - y * y * y / 5.0) / suffix[i + 1]
            } else {
                w0[i] * (y - y.ln_1p()) / (y * row[i])
            }
        };
        row_coef[i] = prefix + own;
        // receivers strictly after row i
        prefix += w0[i] * receiver_coef(row[i], suffix[i + 1]);
    }

    let mut new = vec![0.0; k * l];
    let mut col_above = vec![0.0; k]; // running column prefix S per row
    let mut coef = vec![0.0; k];
    for c in 0..l {
        let mut s = 0.0;
        for i in 0..k {
            col_above[i] = s;
            s += m[i * l + c];
            if i > 0 && w1[i * l + c] > 0.0 && s == 0.0 {
                degenerate_cells += 1;
            }
            coef[i] = if i == 0 { 0.0 } else { w1[i * l + c] * receiver_coef(m[i * l + c], col_above[i]) };
        }
        // col_suffix[r] = sum_{i>r} coef[i]
        let mut col_suffix = 0.0;
        for r in (0..k).rev() {
            let own = if r == 0 {
                // the first row is the only possible source for its own
                // plane weight, independent of the current masses
                w1[c]
            } else {
                own_plane_term(w1[r * l + c], m[r * l + c], col_above[r])
            };
            let updated = own + m[r * l + c] * (col_suffix + row_coef[r]);
            new[r * l + c] = if updated < MASS_FLOOR { 0.0 } else { updated };
            col_suffix += coef[r];
        }
    }

    // gap = <new, grad psi(m)> with grad = new/m - 1 on the support of m.
    let mut gap = 0.0;
    for idx in 0..k * l {
        if m[idx] > 0.0 {
            gap += new[idx] * (new[idx] / m[idx] - 1.0);
        } else if new[idx] > 0.0 {
            gap = f64::INFINITY;
            break;
        }
    }

    EmStep { masses: new, gap, degenerate_cells }
}

/// One self-consistency update. The output masses sum to the histogram's
/// total weight (1 for a histogram built from a sample).
pub fn em_step(masses: &MassMatrix, hist: &Histogram) -> Result<MassMatrix> {
    if masses.grid() != hist.grid() {
        return Err(CscmError::GridMismatch(
            "mass matrix and histogram were built on different grids".into(),
        ));
    }
    let step = em_step_core(masses, hist);
    MassMatrix::from_raw(*masses.grid(), step.masses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::Grid;

    /// Hand-checked 2 x 1 instance: delta = 0.5, eps = 1, uniform masses,
    /// equal counts everywhere.
    #[test]
    fn hand_checked_two_cell_update() {
        let grid = Grid::new(1.0, 1.0, 2, 1).unwrap();
        let hist = Histogram::from_counts(&grid, vec![1, 1], vec![1, 1]).unwrap();
        let m = MassMatrix::new(&grid, vec![0.9, 0.1]).unwrap();
        let step = em_step_core(&m, &hist);
        // w = 1/4 per cell; closed forms evaluated by hand:
        // new[0] = 0.25 + 0.9 ln(10/9) (0.25/0.1) + 0.9 (0.9 - 0.1 ln 10) (0.25/0.81)
        let expected0 = 0.25
            + 0.9 * (1.0f64 / 9.0).ln_1p() * (0.25 / 0.1)
            + 0.9 * (0.9 - 0.1 * 10.0f64.ln()) * (0.25 / 0.81);
        let expected1 = 0.1 * (0.1 - 0.9 * (1.0f64 / 9.0).ln_1p()) * (0.25 / 0.01)
            + 0.1 * 9.0f64.ln_1p() * (0.25 / 0.9)
            + 0.1 * (0.25 / 0.1);
        assert!((step.masses[0] - expected0).abs() < 1e-14);
        assert!((step.masses[1] - expected1).abs() < 1e-14);
        assert!((step.masses.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(step.degenerate_cells, 0);
    }

    #[test]
    fn zero_mass_cell_stays_zero_outside_first_row() {
        let grid = Grid::new(1.0, 1.0, 3, 1).unwrap();
        let hist = Histogram::from_counts(&grid, vec![1, 1, 1], vec![2, 1, 1]).unwrap();
        let m = MassMatrix::new(&grid, vec![0.6, 0.0, 0.4]).unwrap();
        let step = em_step_core(&m, &hist);
        assert_eq!(step.masses[1], 0.0);
        assert!((step.masses.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn first_row_recovers_mass_from_its_own_weight() {
        let grid = Grid::new(1.0, 1.0, 2, 1).unwrap();
        let hist = Histogram::from_counts(&grid, vec![1, 1], vec![1, 1]).unwrap();
        // zero mass in the first row: its plane weight must come back
        let m = MassMatrix::new(&grid, vec![0.0, 1.0]).unwrap();
        let step = em_step_core(&m, &hist);
        assert!(step.masses[0] >= 0.25);
        assert_eq!(step.gap, f64::INFINITY);
    }

    #[test]
    fn degenerate_column_is_flagged_and_loses_mass() {
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let hist = Histogram::from_counts(&grid, vec![1, 1], vec![1, 1, 1, 1]).unwrap();
        // column 1 empty: its row-1 plane weight (w = 1/6) has no candidate
        // cell below, so it cannot be allocated
        let m = MassMatrix::new(&grid, vec![0.7, 0.0, 0.3, 0.0]).unwrap();
        let step = em_step_core(&m, &hist);
        assert_eq!(step.degenerate_cells, 1);
        let total: f64 = step.masses.iter().sum();
        // lost exactly the unallocatable cell weight, except that the
        // first-row term re-seeds column 1
        assert!(total < 1.0);
        assert!(step.masses[1] > 0.0); // first-row re-seed
        assert_eq!(step.masses[3], 0.0);
    }
}
