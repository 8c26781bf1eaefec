//! Maximum smoothed likelihood estimator.
//!
//! The estimator maximizes the smoothed log-likelihood — the log-likelihood
//! of the current-status-with-mark model with the empirical observation
//! distribution replaced by its histogram smoother — over joint densities
//! that are constant on the grid cells. Equivalently it is the
//! Kullback–Leibler projection of the smoothed observation density onto the
//! model class. The canonical parametrization is by *cell masses* on the
//! probability simplex; densities are masses divided by the cell area.
//!
//! When every histogram cell holds at least one observation the maximizer
//! exists and is unique, and the self-consistency iteration of [`em_step`]
//! converges to it from any strictly positive start. The stopping rule is a
//! duality-gap certificate: the scalar product of the updated mass vector
//! with the gradient of the reduced objective [`psi_objective`], which is
//! zero exactly at the fixed point.

mod em;
mod objective;
mod phi;

pub use em::em_step;
pub use objective::{accumulate, psi_gradient, psi_objective, Accumulators};
pub use phi::phi;

use serde::{Deserialize, Serialize};

use crate::error::{CscmError, Result};
use crate::histogram::{Grid, Histogram};

/// Tolerance on the simplex constraint when constructing a `MassMatrix`.
const SIMPLEX_TOL: f64 = 1e-12;

/// Cell masses on the probability simplex over a grid, row-major `k x l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    grid: Grid,
    m: Vec<f64>,
}

impl MassMatrix {
    /// Validates nonnegativity and total mass 1 (within 1e-12).
    pub fn new(grid: &Grid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.k() * grid.l() {
            return Err(CscmError::GridMismatch(format!(
                "{} masses do not fill a {} x {} grid",
                masses.len(),
                grid.k(),
                grid.l()
            )));
        }
        if masses.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(CscmError::InvalidArgument(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(CscmError::InvalidArgument(format!(
                "masses must sum to 1 within {SIMPLEX_TOL:e}, got {total}"
            )));
        }
        Ok(MassMatrix { grid: *grid, m: masses })
    }

    /// Internal constructor for iterates that are on the simplex by
    /// construction (or deliberately off it after a degenerate step).
    pub(crate) fn from_raw(grid: Grid, m: Vec<f64>) -> Result<Self> {
        Ok(MassMatrix { grid, m })
    }

    /// Masses constrained only to the box `[0, 1]` per cell, without the
    /// simplex requirement — the natural domain of [`psi_objective`], and
    /// what finite-difference probes of the gradient need.
    pub fn in_box(grid: &Grid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.k() * grid.l() {
            return Err(CscmError::GridMismatch(format!(
                "{} masses do not fill a {} x {} grid",
                masses.len(),
                grid.k(),
                grid.l()
            )));
        }
        if masses.iter().any(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v)) {
            return Err(CscmError::InvalidArgument(
                "box masses must be finite and in [0, 1]".into(),
            ));
        }
        Ok(MassMatrix { grid: *grid, m: masses })
    }

    /// The uniform simplex point: every cell carries `1 / (k l)`.
    pub fn uniform(grid: &Grid) -> Self {
        let cells = grid.k() * grid.l();
        MassMatrix { grid: *grid, m: vec![1.0 / cells as f64; cells] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.m
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.grid.l() + j]
    }

    /// Density height on cell `(i, j)`: mass divided by the cell area.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.mass(i, j) / (self.grid.delta() * self.grid.eps())
    }

    pub fn total(&self) -> f64 {
        self.m.iter().sum()
    }

    /// Exact integral of the piecewise-constant density over
    /// `[0, t] x [0, z]`: full cells plus edge and corner fractions, which
    /// makes the CDF bilinear within each cell. Arguments clamp to the
    /// support.
    pub fn cdf(&self, t: f64, z: f64) -> f64 {
        let (k, l) = (self.grid.k(), self.grid.l());
        let pos_t = (t.clamp(0.0, self.grid.m1()) / self.grid.m1()) * k as f64;
        let pos_z = (z.clamp(0.0, self.grid.m2()) / self.grid.m2()) * l as f64;
        let it = (pos_t.floor() as usize).min(k);
        let jz = (pos_z.floor() as usize).min(l);
        let ft = if it < k { pos_t - it as f64 } else { 0.0 };
        let fz = if jz < l { pos_z - jz as f64 } else { 0.0 };

        let mut full = 0.0;
        for i in 0..it {
            for j in 0..jz {
                full += self.m[i * l + j];
            }
        }
        let mut col_edge = 0.0; // fraction of row `it` across complete columns
        if it < k {
            for j in 0..jz {
                col_edge += self.m[it * l + j];
            }
        }
        let mut row_edge = 0.0; // fraction of column `jz` across complete rows
        if jz < l {
            for i in 0..it {
                row_edge += self.m[i * l + jz];
            }
        }
        let corner = if it < k && jz < l { self.m[it * l + jz] } else { 0.0 };
        full + ft * col_edge + fz * row_edge + ft * fz * corner
    }

    /// Marginal CDF of the event time: the joint CDF at the upper mark
    /// bound.
    pub fn marginal_cdf_x(&self, t: f64) -> f64 {
        self.cdf(t, self.grid.m2())
    }

    /// Partial derivative of the fitted CDF in the mark coordinate: the sum
    /// of column densities through the time fraction. Zero beyond the mark
    /// support; `z = 0` uses the first mark cell.
    pub fn d2_cdf(&self, t: f64, z: f64) -> f64 {
        let (k, l) = (self.grid.k(), self.grid.l());
        if z > self.grid.m2() {
            return 0.0;
        }
        let j = if z <= 0.0 { 0 } else { self.grid.mark_cell_of(z).unwrap_or(l - 1) };
        let pos_t = (t.clamp(0.0, self.grid.m1()) / self.grid.m1()) * k as f64;
        let it = (pos_t.floor() as usize).min(k);
        let ft = if it < k { pos_t - it as f64 } else { 0.0 };
        let mut cum = 0.0;
        for i in 0..it {
            cum += self.m[i * l + j];
        }
        if it < k {
            cum += ft * self.m[it * l + j];
        }
        cum / self.grid.eps()
    }
}

/// What to do when the histogram has empty cells, where the maximizer is no
/// longer guaranteed unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyCellPolicy {
    /// Refuse to fit (the default): benchmarks must not silently average
    /// over non-unique maximizers.
    #[default]
    Reject,
    /// Run the iteration anyway; it converges to one maximizer
    /// deterministically from the uniform start. At realistic sample sizes
    /// sparse corner cells are routinely empty, so simulation studies need
    /// this mode.
    Proceed,
}

/// Options for [`fit_msle`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Stopping threshold on the duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting masses; strictly positive entries required. `None` means
    /// uniform, which is also the canonical choice — by uniqueness the start
    /// only affects the iteration count.
    pub init: Option<MassMatrix>,
    pub empty_cells: EmptyCellPolicy,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-10,
            max_iter: 1_000_000,
            init: None,
            empty_cells: EmptyCellPolicy::Reject,
        }
    }
}

/// A fitted maximum smoothed likelihood estimate.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub masses: MassMatrix,
    pub iterations: usize,
    /// Final duality gap `<updated masses, grad psi>`.
    pub fenchel_gap: f64,
    /// Objective value at the fitted masses.
    pub objective: f64,
    /// The duality gap fell below the tolerance.
    pub converged: bool,
    /// The iteration bottomed out at the floating-point fixed point before
    /// meeting the tolerance: a bitwise fixed point or cycle, detected as
    /// no gap improvement across 1000 consecutive iterations. The gap is
    /// then at its rounding floor and the best-gap iterate is returned.
    pub fixed_point: bool,
    /// Number of iterations in which some histogram weight had no candidate
    /// cell to flow to (possible only with empty-cell fits).
    pub degenerate_steps: usize,
}

impl FitResult {
    pub fn cdf(&self, t: f64, z: f64) -> f64 {
        self.masses.cdf(t, z)
    }

    pub fn marginal_cdf_x(&self, t: f64) -> f64 {
        self.masses.marginal_cdf_x(t)
    }

    pub fn d2_cdf(&self, t: f64, z: f64) -> f64 {
        self.masses.d2_cdf(t, z)
    }

    pub fn to_json(&self) -> Result<String> {
        let grid = self.masses.grid();
        let doc = FitResultJson {
            grid: *grid,
            masses: self.masses.masses().to_vec(),
            objective: self.objective,
            fenchel_gap: self.fenchel_gap,
            iterations: self.iterations,
            converged: self.converged,
            fixed_point: self.fixed_point,
            degenerate_steps: self.degenerate_steps,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: FitResultJson = serde_json::from_str(s)?;
        let masses = MassMatrix::from_raw(doc.grid, doc.masses)?;
        if masses.masses().len() != doc.grid.k() * doc.grid.l() {
            return Err(CscmError::GridMismatch("mass vector does not match grid".into()));
        }
        Ok(FitResult {
            masses,
            iterations: doc.iterations,
            fenchel_gap: doc.fenchel_gap,
            objective: doc.objective,
            converged: doc.converged,
            fixed_point: doc.fixed_point,
            degenerate_steps: doc.degenerate_steps,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct FitResultJson {
    grid: Grid,
    masses: Vec<f64>,
    objective: f64,
    fenchel_gap: f64,
    iterations: usize,
    converged: bool,
    #[serde(default)]
    fixed_point: bool,
    degenerate_steps: usize,
}

/// Evaluates the fitted CDF (paper-facing alias for [`FitResult::cdf`]).
pub fn msle_cdf(fit: &FitResult, t: f64, z: f64) -> f64 {
    fit.cdf(t, z)
}

/// Fits the maximum smoothed likelihood estimator by self-consistency
/// iteration.
///
/// Unless the histogram is fully occupied the fit is refused (see
/// [`EmptyCellPolicy`]). On hitting `max_iter` the best iterate is returned
/// with `converged = false` rather than an error.
pub fn fit_msle(hist: &Histogram, opts: &FitOptions) -> Result<FitResult> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(CscmError::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(CscmError::InvalidArgument("max_iter must be at least 1".into()));
    }
    if opts.empty_cells == EmptyCellPolicy::Reject && !hist.fully_occupied() {
        return Err(CscmError::EmptyCells { cells: hist.empty_cells() });
    }

    let mut masses = match &opts.init {
        Some(init) => {
            if init.grid() != hist.grid() {
                return Err(CscmError::GridMismatch(
                    "initial masses and histogram were built on different grids".into(),
                ));
            }
            if init.masses().iter().any(|&v| v <= 0.0) {
                return Err(CscmError::InvalidArgument(
                    "initial masses must be strictly positive".into(),
                ));
            }
            init.clone()
        }
        None => MassMatrix::uniform(hist.grid()),
    };

    const STALL_WINDOW: usize = 1000;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut fixed_point = false;
    let mut degenerate_steps = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_improvement = 0;
    while iterations < opts.max_iter {
        let step = em::em_step_core(&masses, hist);
        iterations += 1;
        if step.degenerate_cells > 0 {
            degenerate_steps += 1;
        }
        gap = step.gap;
        if gap.abs() < opts.tol {
            masses = MassMatrix::from_raw(*hist.grid(), step.masses)?;
            converged = true;
            break;
        }
        let bitwise_fixed = step.masses == *masses.masses();
        if best.as_ref().is_none_or(|(g, _)| gap.abs() < g.abs()) {
            best = Some((gap, step.masses.clone()));
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        masses = MassMatrix::from_raw(*hist.grid(), step.masses)?;
        // a bitwise fixed point, or a cycle that stopped improving the
        // gap: the iteration is at its floating-point floor
        if bitwise_fixed || since_improvement >= STALL_WINDOW {
            if !bitwise_fixed {
                let (best_gap, best_masses) = best.take().expect("at least one iterate");
                gap = best_gap;
                masses = MassMatrix::from_raw(*hist.grid(), best_masses)?;
            }
            fixed_point = true;
            break;
        }
    }

    let objective = psi_objective(&masses, hist)?;
    Ok(FitResult {
        masses,
        iterations,
        fenchel_gap: gap,
        objective,
        converged,
        fixed_point,
        degenerate_steps,
    })
}
