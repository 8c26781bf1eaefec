//! Shared helpers for the integration tests: random instances and an
//! independent quadrature evaluation of the smoothed log-likelihood.

#![allow(dead_code)]

use cscm::{Grid, Histogram, MassMatrix};
use rand::rngs::StdRng;
use rand::Rng;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    fn legendre(n: usize, x: f64) -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = pk;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Integrates `f` over `[0, len]` with Gauss–Legendre nodes.
fn integrate(gl: &[(f64, f64)], len: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * len;
    gl.iter().map(|&(x, w)| w * f(half * (x + 1.0))).sum::<f64>() * half
}

/// Independent evaluation of the smoothed log-likelihood of piecewise
/// constant masses: per-cell numerical integration of
/// `sum_i h0[i] int_{A_i} ln(1 - F_X)` plus
/// `sum_ij h1[i][j] eps int_{A_i} ln(d2F_j)`. Cells whose integrand has a
/// log endpoint singularity (zero mass beyond the last row, empty column
/// prefix in the first row) use the elementary closed form
/// `int_0^d ln(c u) du = d (ln(c d) - 1)`; everywhere else the integrand is
/// smooth and Gauss–Legendre is exact to machine precision.
///
/// This is the quadrature side of the Kullback–Leibler projection identity:
/// with a uniform reference inspection density the divergence of the
/// histogram from the induced observation density is (histogram entropy)
/// minus this value, so checking the objective against it checks the
/// divergence identity as well.
pub fn smoothed_loglik_quadrature(masses: &MassMatrix, hist: &Histogram) -> f64 {
    let grid = *masses.grid();
    let (k, l) = (grid.k(), grid.l());
    let (delta, eps) = (grid.delta(), grid.eps());
    let gl = gauss_legendre(64);
    let m = masses.masses();

    let mut row = vec![0.0; k];
    for i in 0..k {
        row[i] = m[i * l..(i + 1) * l].iter().sum();
    }
    let mut suffix = vec![0.0; k + 1];
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] + row[i];
    }

    let mut total = 0.0;
    // line cells: 1 - F_X(t) = suffix[i+1] + (a_{i+1} - t)/delta * row[i]
    for i in 0..k {
        let w = hist.weight_line(i);
        if w == 0.0 {
            continue;
        }
        let (tau, slope) = (suffix[i + 1], row[i]);
        let integral = if tau == 0.0 {
            if slope == 0.0 {
                return f64::NEG_INFINITY;
            }
            delta * (slope.ln() - 1.0)
        } else {
            integrate(&gl, delta, |u| (tau + slope * u / delta).ln())
        };
        total += w / delta * integral;
    }
    // plane cells: d2F_j(t) = (prefix + (t - a_i)/delta * m[i][j]) / eps
    for j in 0..l {
        let mut prefix = 0.0;
        for i in 0..k {
            let w = hist.weight_plane(i, j);
            let mass = m[i * l + j];
            if w > 0.0 {
                let integral = if prefix == 0.0 {
                    if mass == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    delta * ((mass / eps).ln() - 1.0)
                } else {
                    integrate(&gl, delta, |u| ((prefix + mass * u / delta) / eps).ln())
                };
                total += w / delta * integral;
            }
            prefix += mass;
        }
    }
    total
}

/// Histogram entropy under the mixed measure,
/// `int hhat ln hhat = sum w ln(height)`, skipping empty cells.
pub fn histogram_entropy(hist: &Histogram) -> f64 {
    let (k, l) = (hist.grid().k(), hist.grid().l());
    let mut total = 0.0;
    for i in 0..k {
        if hist.weight_line(i) > 0.0 {
            total += hist.weight_line(i) * hist.h0(i).ln();
        }
        for j in 0..l {
            if hist.weight_plane(i, j) > 0.0 {
                total += hist.weight_plane(i, j) * hist.h1(i, j).ln();
            }
        }
    }
    total
}

pub fn random_grid(rng: &mut StdRng) -> Grid {
    let k = rng.random_range(2..=7);
    let l = rng.random_range(1..=5);
    Grid::new(1.0, 1.0, k, l).unwrap()
}

/// Histogram with every cell occupied (counts 1..=30).
pub fn random_occupied_hist(rng: &mut StdRng, grid: &Grid) -> Histogram {
    let (k, l) = (grid.k(), grid.l());
    let line = (0..k).map(|_| rng.random_range(1..=30)).collect();
    let plane = (0..k * l).map(|_| rng.random_range(1..=30)).collect();
    Histogram::from_counts(grid, line, plane).unwrap()
}

/// Strictly interior simplex point: every mass at least `1/(3 k l)`.
pub fn random_interior_masses(rng: &mut StdRng, grid: &Grid) -> MassMatrix {
    let cells = grid.k() * grid.l();
    let mut m: Vec<f64> = (0..cells).map(|_| 0.5 + rng.random::<f64>()).collect();
    let total: f64 = m.iter().sum();
    for v in &mut m {
        *v /= total;
    }
    MassMatrix::new(grid, m).unwrap()
}
