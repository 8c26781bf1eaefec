//! Density distances under the mixed dominating measure, error metrics, and
//! the closed-form asymptotic bias/variance calculators.
//!
//! A density here has two components: a planar one on `(0, M1] x (0, M2]`
//! and a line one on `{z = 0}`; integrals add a 2-D and a 1-D part. When
//! both densities are histograms on the same grid the distances are exact
//! finite sums; otherwise midpoint quadrature with 2000 points per axis is
//! used (the integrands are bounded and continuous for the densities that
//! occur here, so the quadrature error is far below test tolerances).

use crate::error::{CscmError, Result};
use crate::histogram::{Grid, Histogram};
use crate::model::ModelSpec;
use crate::msle::FitResult;

/// Quadrature resolution per axis for analytic inputs.
const QUAD_POINTS: usize = 2000;

type LineFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type PlaneFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A density with respect to the mixed measure (planar part + line part).
pub enum LambdaDensity {
    /// Piecewise-constant heights on a grid: `line[i]`, `plane[i*l + j]`.
    Histogram { grid: Grid, line: Vec<f64>, plane: Vec<f64> },
    /// Arbitrary nonnegative component functions on `[0, m1] x [0, m2]`.
    Analytic { m1: f64, m2: f64, line: LineFn, plane: PlaneFn },
}

impl LambdaDensity {
    pub fn from_histogram(hist: &Histogram) -> Self {
        let grid = *hist.grid();
        let (k, l) = (grid.k(), grid.l());
        let line = (0..k).map(|i| hist.h0(i)).collect();
        let plane =
            (0..k).flat_map(|i| (0..l).map(move |j| (i, j))).map(|(i, j)| hist.h1(i, j)).collect();
        LambdaDensity::Histogram { grid, line, plane }
    }

    /// The true observation density of a built-in model.
    pub fn from_model(model: &ModelSpec) -> Self {
        let m = *model;
        let (m1, m2) = model.support();
        LambdaDensity::Analytic {
            m1,
            m2,
            line: Box::new(move |t| m.observation_density(t, 0.0)),
            plane: Box::new(move |t, z| m.observation_density(t, z)),
        }
    }

    /// The observation density induced by a fitted mass matrix under the
    /// model's inspection density: `g(t) d2F(t, z)` on the plane and
    /// `g(t) (1 - F_X(t))` on the line.
    pub fn from_fit(fit: &FitResult, model: &ModelSpec) -> Self {
        let masses = fit.masses.clone();
        let masses2 = fit.masses.clone();
        let g = *model;
        let g2 = *model;
        let (m1, m2) = model.support();
        LambdaDensity::Analytic {
            m1,
            m2,
            line: Box::new(move |t| {
                g.censoring_density(t) * (1.0 - masses.marginal_cdf_x(t))
            }),
            plane: Box::new(move |t, z| g2.censoring_density(t) * masses2.d2_cdf(t, z)),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            LambdaDensity::Histogram { grid, .. } => (grid.m1(), grid.m2()),
            LambdaDensity::Analytic { m1, m2, .. } => (*m1, *m2),
        }
    }

    pub fn line_at(&self, t: f64) -> f64 {
        match self {
            LambdaDensity::Histogram { grid, line, .. } => {
                grid.time_cell_of(t).map_or(0.0, |i| line[i])
            }
            LambdaDensity::Analytic { line, .. } => line(t),
        }
    }

    pub fn plane_at(&self, t: f64, z: f64) -> f64 {
        match self {
            LambdaDensity::Histogram { grid, plane, .. } => {
                match (grid.time_cell_of(t), grid.mark_cell_of(z)) {
                    (Some(i), Some(j)) => plane[i * grid.l() + j],
                    _ => 0.0,
                }
            }
            LambdaDensity::Analytic { plane, .. } => plane(t, z),
        }
    }
}

fn same_grid(p: &LambdaDensity, q: &LambdaDensity) -> Option<Grid> {
    match (p, q) {
        (
            LambdaDensity::Histogram { grid: gp, .. },
            LambdaDensity::Histogram { grid: gq, .. },
        ) if gp == gq => Some(*gp),
        _ => None,
    }
}

fn check_supports(p: &LambdaDensity, q: &LambdaDensity) -> Result<()> {
    let (p1, p2) = p.support();
    let (q1, q2) = q.support();
    if p1 != q1 || p2 != q2 {
        return Err(CscmError::GridMismatch(format!(
            "density supports differ: ({p1}, {p2}) vs ({q1}, {q2})"
        )));
    }
    Ok(())
}

fn check_nonneg(v: f64, t: f64, z: f64) -> Result<f64> {
    if v < 0.0 {
        return Err(CscmError::NegativeDensity { value: v, t, z });
    }
    Ok(v)
}

/// Integrates `f(p(x), q(x))` over the mixed measure: exactly by cell sums
/// when both densities live on one grid, by midpoint quadrature otherwise.
fn integrate_pointwise(
    p: &LambdaDensity,
    q: &LambdaDensity,
    f: &dyn Fn(f64, f64) -> f64,
) -> Result<f64> {
    check_supports(p, q)?;
    if let Some(grid) = same_grid(p, q) {
        let (k, l) = (grid.k(), grid.l());
        let (dp, dq) = match (p, q) {
            (
                LambdaDensity::Histogram { line: lp, plane: pp, .. },
                LambdaDensity::Histogram { line: lq, plane: pq, .. },
            ) => ((lp, pp), (lq, pq)),
            _ => unreachable!(),
        };
        let mut total = 0.0;
        for i in 0..k {
            let t = (i as f64 + 0.5) * grid.delta();
            total += f(check_nonneg(dp.0[i], t, 0.0)?, check_nonneg(dq.0[i], t, 0.0)?)
                * grid.delta();
            for j in 0..l {
                let z = (j as f64 + 0.5) * grid.eps();
                total += f(
                    check_nonneg(dp.1[i * l + j], t, z)?,
                    check_nonneg(dq.1[i * l + j], t, z)?,
                ) * grid.delta()
                    * grid.eps();
            }
        }
        return Ok(total);
    }

    let (m1, m2) = p.support();
    let (ht, hz) = (m1 / QUAD_POINTS as f64, m2 / QUAD_POINTS as f64);
    let mut total = 0.0;
    for i in 0..QUAD_POINTS {
        let t = (i as f64 + 0.5) * ht;
        total += f(
            check_nonneg(p.line_at(t), t, 0.0)?,
            check_nonneg(q.line_at(t), t, 0.0)?,
        ) * ht;
        let mut row = 0.0;
        for j in 0..QUAD_POINTS {
            let z = (j as f64 + 0.5) * hz;
            row += f(
                check_nonneg(p.plane_at(t, z), t, z)?,
                check_nonneg(q.plane_at(t, z), t, z)?,
            );
        }
        total += row * ht * hz;
    }
    Ok(total)
}

/// Hellinger distance `sqrt( 1/2 * integral (sqrt p - sqrt q)^2 )`.
pub fn hellinger(p: &LambdaDensity, q: &LambdaDensity) -> Result<f64> {
    let sq = integrate_pointwise(p, q, &|a, b| {
        let d = a.sqrt() - b.sqrt();
        d * d
    })?;
    Ok((0.5 * sq).max(0.0).sqrt())
}

/// Kullback-Leibler divergence `integral p ln(p/q)`; `+inf` when `p` has
/// mass where `q` has none.
pub fn kl(p: &LambdaDensity, q: &LambdaDensity) -> Result<f64> {
    integrate_pointwise(p, q, &|a, b| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    })
}

/// L1 distance `integral |p - q|` under the mixed measure.
pub fn l1_distance(p: &LambdaDensity, q: &LambdaDensity) -> Result<f64> {
    integrate_pointwise(p, q, &|a, b| (a - b).abs())
}

fn check_interior(model: &ModelSpec, t0: f64, z0: f64) -> Result<()> {
    let (m1, m2) = model.support();
    if !(t0 > 0.0 && t0 < m1 && z0 > 0.0 && z0 < m2) {
        return Err(CscmError::InvalidArgument(format!(
            "({t0}, {z0}) is not interior to the support (0, {m1}) x (0, {m2})"
        )));
    }
    Ok(())
}

pub(crate) fn msle_variance(f0: f64, g: f64, c1: f64) -> f64 {
    f0 * (1.0 - f0) * 3f64.sqrt() / (2.0 * c1 * g)
}

pub(crate) fn plugin_variance(f0: f64, g: f64, c1: f64) -> f64 {
    f0 * (1.0 - f0) / (2.0 * c1 * g)
}

/// Asymptotic bias and variance of the smoothed-likelihood CDF estimate at
/// an interior point, for a time binwidth scaling like `c1 * n^(-1/5)`:
///
/// ```text
/// beta   = d1F0 * g' * c1^2 / (6 g)
/// sigma2 = F0 (1 - F0) sqrt(3) / (2 c1 g)
/// ```
pub fn asymptotic_msle(model: &ModelSpec, t0: f64, z0: f64, c1: f64) -> Result<(f64, f64)> {
    check_interior(model, t0, z0)?;
    if !(c1 > 0.0) {
        return Err(CscmError::InvalidArgument(format!("c1 must be positive, got {c1}")));
    }
    let g = model.censoring_density(t0);
    if g <= 0.0 {
        return Err(CscmError::InvalidArgument(format!(
            "inspection density vanishes at t0 = {t0}"
        )));
    }
    let beta =
        model.d1_cdf(t0, z0) * model.censoring_density_slope(t0) * c1 * c1 / (6.0 * g);
    let sigma2 = msle_variance(model.true_cdf(t0, z0), g, c1);
    Ok((beta, sigma2))
}

/// Asymptotic bias and variance of the grid plug-in estimate at an interior
/// point:
///
/// ```text
/// beta2   = ( d1^2 F0 / 6 + d1F0 * g' / (3 g) ) c1^2
/// sigma2" = F0 (1 - F0) / (2 c1 g)
/// ```
///
/// The variance is smaller than the smoothed-likelihood one by exactly
/// sqrt(3); the bias is larger on the benchmark model.
pub fn asymptotic_plugin(model: &ModelSpec, t0: f64, z0: f64, c1: f64) -> Result<(f64, f64)> {
    check_interior(model, t0, z0)?;
    if !(c1 > 0.0) {
        return Err(CscmError::InvalidArgument(format!("c1 must be positive, got {c1}")));
    }
    let g = model.censoring_density(t0);
    if g <= 0.0 {
        return Err(CscmError::InvalidArgument(format!(
            "inspection density vanishes at t0 = {t0}"
        )));
    }
    let beta2 = (model.d1d1_cdf(t0, z0) / 6.0
        + model.d1_cdf(t0, z0) * model.censoring_density_slope(t0) / (3.0 * g))
        * c1
        * c1;
    let sigma2 = plugin_variance(model.true_cdf(t0, z0), g, c1);
    Ok((beta2, sigma2))
}

/// Mean squared deviation of a list of estimates from the truth.
pub fn mse_at_point(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(CscmError::InvalidArgument("mse of an empty list".into()));
    }
    Ok(estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>()
        / estimates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist_density(grid: &Grid, line: Vec<u64>, plane: Vec<u64>) -> LambdaDensity {
        let h = Histogram::from_counts(grid, line, plane).unwrap();
        LambdaDensity::from_histogram(&h)
    }

    #[test]
    fn identical_densities_have_zero_distance() {
        let grid = Grid::new(1.0, 1.0, 3, 2).unwrap();
        let p = hist_density(&grid, vec![1, 2, 3], vec![1, 1, 2, 0, 1, 2]);
        let q = hist_density(&grid, vec![1, 2, 3], vec![1, 1, 2, 0, 1, 2]);
        assert_eq!(hellinger(&p, &q).unwrap(), 0.0);
        assert_eq!(kl(&p, &q).unwrap(), 0.0);
        assert_eq!(l1_distance(&p, &q).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_unit_masses() {
        let grid = Grid::new(1.0, 1.0, 2, 1).unwrap();
        let p = hist_density(&grid, vec![0, 0], vec![2, 0]);
        let q = hist_density(&grid, vec![0, 0], vec![0, 2]);
        assert!((hellinger(&p, &q).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(kl(&p, &q).unwrap(), f64::INFINITY);
        assert!((l1_distance(&p, &q).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn kl_infinite_when_support_exceeds() {
        let grid = Grid::new(1.0, 1.0, 2, 1).unwrap();
        let p = hist_density(&grid, vec![1, 1], vec![1, 1]);
        let q = hist_density(&grid, vec![1, 1], vec![2, 0]);
        assert_eq!(kl(&p, &q).unwrap(), f64::INFINITY);
        assert!(kl(&q, &p).unwrap().is_finite());
    }

    /// Hand-computed two-cell L1 distance: heights differ by 1 on both line
    /// cells (width 1/2 each).
    #[test]
    fn l1_hand_example() {
        let grid = Grid::new(1.0, 1.0, 2, 1).unwrap();
        let p = hist_density(&grid, vec![2, 0], vec![0, 0]); // heights (2, 0)
        let q = hist_density(&grid, vec![1, 1], vec![0, 0]); // heights (1, 1)
        assert!((l1_distance(&p, &q).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_density_rejected() {
        let grid = Grid::new(1.0, 1.0, 2, 1).unwrap();
        let p = LambdaDensity::Histogram {
            grid,
            line: vec![-0.1, 0.2],
            plane: vec![0.5, 0.5],
        };
        let q = hist_density(&grid, vec![1, 1], vec![1, 1]);
        assert!(matches!(
            hellinger(&p, &q),
            Err(CscmError::NegativeDensity { .. })
        ));
    }

    /// Both distance inequalities: 2 H^2 <= K and H^2 <= L1/2 <= sqrt(2) H.
    #[test]
    fn distance_inequalities_on_random_pairs() {
        let grid = Grid::new(1.0, 1.0, 4, 3).unwrap();
        let mut state = 0x853c49e6748fea9bu64;
        let mut next_count = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) % 20
        };
        for _ in 0..200 {
            let p = hist_density(
                &grid,
                (0..4).map(|_| next_count() + 1).collect(),
                (0..12).map(|_| next_count()).collect(),
            );
            let q = hist_density(
                &grid,
                (0..4).map(|_| next_count() + 1).collect(),
                (0..12).map(|_| next_count()).collect(),
            );
            let h = hellinger(&p, &q).unwrap();
            let k = kl(&p, &q).unwrap();
            let l1 = l1_distance(&p, &q).unwrap();
            assert!(2.0 * h * h <= k + 1e-12);
            assert!(h * h <= 0.5 * l1 + 1e-12);
            assert!(0.5 * l1 <= 2f64.sqrt() * h + 1e-12);
        }
    }

    #[test]
    fn quadrature_path_matches_exact_path() {
        // the same pair of densities through the histogram route and the
        // closure route must agree to quadrature accuracy
        let grid = Grid::new(1.0, 1.0, 2, 2).unwrap();
        let p = hist_density(&grid, vec![1, 1], vec![1, 1, 1, 1]);
        let q = hist_density(&grid, vec![2, 1], vec![1, 0, 2, 1]);
        let exact = hellinger(&p, &q).unwrap();

        let q_analytic = match &q {
            LambdaDensity::Histogram { grid, line, plane } => {
                let (g, line, plane) = (*grid, line.clone(), plane.clone());
                LambdaDensity::Analytic {
                    m1: 1.0,
                    m2: 1.0,
                    line: Box::new(move |t| g.time_cell_of(t).map_or(0.0, |i| line[i])),
                    plane: Box::new(move |t, z| {
                        match (g.time_cell_of(t), g.mark_cell_of(z)) {
                            (Some(i), Some(j)) => plane[i * g.l() + j],
                            _ => 0.0,
                        }
                    }),
                }
            }
            _ => unreachable!(),
        };
        let quad = hellinger(&p, &q_analytic).unwrap();
        assert!((exact - quad).abs() < 1e-6, "{exact} vs {quad}");
    }

    #[test]
    fn asymptotic_values() {
        let poly = ModelSpec::polynomial();
        let unif = ModelSpec::uniform();

        let (beta, sigma2) = asymptotic_msle(&poly, 0.6, 0.6, 1.0).unwrap();
        assert!((beta - 0.15).abs() < 1e-15);
        let f0 = poly.true_cdf(0.6, 0.6);
        assert!((sigma2 - f0 * (1.0 - f0) * 3f64.sqrt() / 2.4).abs() < 1e-15);

        let (beta_u, _) = asymptotic_msle(&unif, 0.3, 0.8, 1.0).unwrap();
        assert_eq!(beta_u, 0.0);

        let (beta2, _) = asymptotic_plugin(&poly, 0.6, 0.6, 1.0).unwrap();
        // z/6 + (tz + z^2/2) * 2 / (3 * 2t) = 0.1 + 0.54 / 1.8
        assert!((beta2 - 0.4).abs() < 1e-15);
        let (beta2_u, _) = asymptotic_plugin(&unif, 0.3, 0.8, 1.0).unwrap();
        assert_eq!(beta2_u, 0.0);

        // boundary points are rejected
        assert!(asymptotic_msle(&poly, 0.0, 0.5, 1.0).is_err());
        assert!(asymptotic_plugin(&poly, 0.5, 1.0, 1.0).is_err());
    }

    /// The variance ratio is sqrt(3) for any model, point and constant.
    #[test]
    fn variance_ratio_is_sqrt3() {
        for model in [ModelSpec::uniform(), ModelSpec::polynomial()] {
            for (t0, z0, c1) in [(0.3, 0.4, 0.7), (0.6, 0.6, 1.0), (0.9, 0.2, 2.5)] {
                let (_, s2) = asymptotic_msle(&model, t0, z0, c1).unwrap();
                let (_, s2p) = asymptotic_plugin(&model, t0, z0, c1).unwrap();
                assert!((s2 / s2p - 3f64.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variance_vanishes_at_degenerate_cdf_values() {
        assert_eq!(msle_variance(0.0, 1.0, 1.0), 0.0);
        assert_eq!(msle_variance(1.0, 1.0, 1.0), 0.0);
        assert_eq!(plugin_variance(0.0, 2.0, 0.5), 0.0);
        assert_eq!(plugin_variance(1.0, 2.0, 0.5), 0.0);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_at_point(&[0.3, 0.3, 0.3], 0.3).unwrap(), 0.0);
        assert_eq!(mse_at_point(&[0.0, 2.0], 1.0).unwrap(), 1.0);
        // ((0.1)^2 + (0.2)^2 + (0.4)^2) / 3
        let got = mse_at_point(&[1.1, 0.8, 1.4], 1.0).unwrap();
        assert!((got - 0.07).abs() < 1e-15);
        assert!(mse_at_point(&[], 1.0).is_err());
    }
}
