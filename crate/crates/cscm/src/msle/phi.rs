//! The two-point mean `phi(x, y) = (x ln x - y ln y) / (x - y)` used by the
//! smoothed log-likelihood, with `0 ln 0 = 0`, the diagonal value
//! `phi(x, x) = 1 + ln x`, and its partial derivatives.
//!
//! The raw difference quotient cancels catastrophically near the diagonal,
//! so the implementation switches to forms in `u = (x - y) / (x + y)`:
//!
//! ```text
//! phi(x, y) = atanh(u)/u + ln((x + y)/2) + ln(1 - u^2)/2
//! ```
//!
//! where `atanh(u)/u` is evaluated from `ln_1p` differences (stable for all
//! |u| < 1) and by series for tiny `u`. Partials use the same decomposition.
//! Both are exact continuations of the closed form to any nonnegative
//! arguments, which the objective needs: the column accumulators scale like
//! (column mass) / (mark binwidth) and may exceed 1.

use crate::error::{CscmError, Result};

/// Below this |u| the series expansions are used.
const SERIES_U: f64 = 1e-4;
/// Above this |u| the raw difference quotient is exact enough.
const DIRECT_U: f64 = 0.9;

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `atanh(u) / u` for |u| < 1, equal to 1 at u = 0.
fn atanh_ratio(u: f64) -> f64 {
    if u.abs() < SERIES_U {
        let u2 = u * u;
        1.0 + u2 / 3.0 + u2 * u2 / 5.0
    } else {
        0.5 * ((u).ln_1p() - (-u).ln_1p()) / u
    }
}

/// `phi` continued to arbitrary nonnegative arguments. Returns `-inf` at
/// `(0, 0)` (the convention `1 + ln 0`).
pub(crate) fn phi_raw(x: f64, y: f64) -> f64 {
    debug_assert!(x >= 0.0 && y >= 0.0, "phi_raw needs nonnegative arguments");
    if x == 0.0 && y == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return y.ln();
    }
    if y == 0.0 {
        return x.ln();
    }
    let m = 0.5 * (x + y);
    let u = (x - y) / (x + y);
    if u.abs() < SERIES_U {
        let u2 = u * u;
        1.0 + m.ln() - u2 / 6.0 - u2 * u2 / 20.0
    } else if u.abs() <= DIRECT_U {
        atanh_ratio(u) + m.ln() + 0.5 * (-u * u).ln_1p()
    } else {
        (xlnx(x) - xlnx(y)) / (x - y)
    }
}

/// `d phi / dx`. Diverges to `+inf` as `x -> 0`.
pub(crate) fn phi_dx(x: f64, y: f64) -> f64 {
    debug_assert!(x >= 0.0 && y >= 0.0);
    if x == 0.0 {
        return f64::INFINITY;
    }
    if y == 0.0 {
        // phi(x, 0) = ln x
        return 1.0 / x;
    }
    if x == y {
        return 0.5 / x;
    }
    let m = 0.5 * (x + y);
    let u = (x - y) / (x + y);
    if u.abs() < SERIES_U {
        // (1 - u/3 + u^2/3 - u^3/5 + u^4/5) / (2m)
        (1.0 + u * (-1.0 / 3.0 + u * (1.0 / 3.0 + u * (-0.2 + u * 0.2)))) / (2.0 * m)
    } else if u.abs() <= DIRECT_U {
        // numerator = (1 + ln x) - phi = ln(1+u) - A(u),
        // A(u) = atanh(u)/u - 1 + ln(1 - u^2)/2
        let a = atanh_ratio(u) - 1.0 + 0.5 * (-u * u).ln_1p();
        (u.ln_1p() - a) / (x - y)
    } else {
        ((1.0 + x.ln()) - phi_raw(x, y)) / (x - y)
    }
}

/// `d phi / dy`; `phi` is symmetric, so this is `phi_dx` with swapped
/// arguments.
pub(crate) fn phi_dy(x: f64, y: f64) -> f64 {
    phi_dx(y, x)
}

/// `(ln x - ln y) / (x - y)`, the sum `phi_dx + phi_dy`. Diverges to `+inf`
/// when either argument is 0.
pub(crate) fn logdiff_ratio(x: f64, y: f64) -> f64 {
    debug_assert!(x >= 0.0 && y >= 0.0);
    if x == 0.0 || y == 0.0 {
        return f64::INFINITY;
    }
    if x == y {
        return 1.0 / x;
    }
    let d = x - y;
    (d / y).ln_1p() / d
}

/// The paper-facing `phi` on the unit square; arguments within 1e-12 of
/// `[0, 1]` are clamped, anything further out is rejected.
pub fn phi(x: f64, y: f64) -> Result<f64> {
    const TOL: f64 = 1e-12;
    let clamp = |v: f64, name: &str| -> Result<f64> {
        if !v.is_finite() || v < -TOL || v > 1.0 + TOL {
            return Err(CscmError::InvalidArgument(format!(
                "phi argument {name} = {v} outside [0, 1]"
            )));
        }
        Ok(v.clamp(0.0, 1.0))
    };
    Ok(phi_raw(clamp(x, "x")?, clamp(y, "y")?))
}
