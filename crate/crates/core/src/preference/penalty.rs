//! Inner minimization behind the composed penalty.
//!
//! For a nonnegative density `q` the penalty of `ρ ∘ u` is
//!
//! ```text
//! min over probability densities y of  α_ρ(y) + Σ_i w_i · y_i · u*(q_i / y_i)
//! ```
//!
//! with the perspective convention that a scenario with `y_i = 0` costs
//! nothing when `q_i = 0` and is infeasible otherwise. The problem is
//! separable apart from the mass constraint `Σ w_i y_i = 1`, so it is solved
//! through its Lagrange multiplier `ν`: each scenario's minimizer `y_i(ν)` is
//! nondecreasing in `ν`, and `ν` is bisected until the mass balances.

use super::Utility;
use crate::risk::{relative_entropy, RiskMeasure};

/// Tolerance on the mass constraint and on indicator-type feasibility.
const MASS_TOL: f64 = 1e-9;
const SLACK: f64 = 1e-10;

pub(super) fn composed_penalty(rho: RiskMeasure, u: Utility, q: &[f64], w: &[f64]) -> f64 {
    match rho {
        RiskMeasure::NegExpectation => w
            .iter()
            .zip(q)
            .map(|(&w, &q)| w * perspective(u, 1.0, q))
            .sum(),
        RiskMeasure::ExpectedShortfall { alpha } => {
            let cap = 1.0 / alpha;
            let y = match u {
                Utility::Affine { b, .. } => {
                    let y: Vec<f64> = q.iter().map(|q| q / b).collect();
                    if y.iter().any(|&y| y > cap + SLACK) {
                        return f64::INFINITY;
                    }
                    y
                }
                Utility::Shortfall => {
                    if q.iter().any(|&q| q > cap + SLACK) {
                        return f64::INFINITY;
                    }
                    match allocate(w, |i, nu| if nu > 0.0 { cap } else { q[i].min(cap) }) {
                        Some(y) => y,
                        None => return f64::INFINITY,
                    }
                }
                Utility::Exponential { a } => {
                    let response = |i: usize, nu: f64| {
                        let qi = q[i];
                        if nu >= 1.0 {
                            if qi > 0.0 || nu > 1.0 {
                                cap
                            } else {
                                0.0
                            }
                        } else if qi == 0.0 {
                            0.0
                        } else {
                            (qi / (a * (1.0 - nu))).min(cap)
                        }
                    };
                    match allocate(w, response) {
                        Some(y) => y,
                        None => return f64::INFINITY,
                    }
                }
            };
            total(w, &y, |yi, qi| perspective(u, yi, qi), q)
        }
        RiskMeasure::Entropic { a: aversion } => {
            let y = match u {
                Utility::Affine { b, .. } => q.iter().map(|q| q / b).collect(),
                Utility::Shortfall => {
                    let response =
                        |i: usize, nu: f64| q[i].max((aversion * nu - 1.0).exp());
                    match allocate(w, response) {
                        Some(y) => y,
                        None => return f64::INFINITY,
                    }
                }
                Utility::Exponential { a } => {
                    let response = |i: usize, nu: f64| entropic_exp_response(q[i], nu, aversion, a);
                    match allocate(w, response) {
                        Some(y) => y,
                        None => return f64::INFINITY,
                    }
                }
            };
            let base = total(w, &y, |yi, qi| perspective(u, yi, qi), q);
            if base == f64::INFINITY {
                return base;
            }
            base + relative_entropy(&y, w) / aversion
        }
        RiskMeasure::ValueAtRisk { .. } => f64::INFINITY,
    }
}

/// `Σ w_i term(y_i, q_i)` for a probability density `y`, `+∞` otherwise.
fn total(w: &[f64], y: &[f64], term: impl Fn(f64, f64) -> f64, q: &[f64]) -> f64 {
    let mass: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    if (mass - 1.0).abs() > MASS_TOL {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for ((&w, &y), &q) in w.iter().zip(y).zip(q) {
        let t = term(y, q);
        if t == f64::INFINITY {
            return f64::INFINITY;
        }
        sum += w * t;
    }
    sum
}

/// `y · u*(q / y)`, extended to `y = 0` by its recession limit.
fn perspective(u: Utility, y: f64, q: f64) -> f64 {
    match u {
        Utility::Affine { a, b } => {
            if (q - b * y).abs() <= MASS_TOL * q.abs().max(1.0) {
                a * y
            } else {
                f64::INFINITY
            }
        }
        Utility::Shortfall => {
            if q <= y + SLACK * y.max(1.0) {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Utility::Exponential { a } => {
            if q == 0.0 {
                y
            } else if y <= 0.0 {
                f64::INFINITY
            } else {
                y - q / a + (q / a) * (q / (a * y)).ln()
            }
        }
    }
}

/// Minimizer over `y > 0` of `(1/A) y ln y + y u*(q/y) - ν y` for the
/// exponential utility, i.e. the root of
/// `(ln y + 1)/A + 1 - q/(a y) = ν`, solved in `t = ln y`.
fn entropic_exp_response(q: f64, nu: f64, aversion: f64, a: f64) -> f64 {
    if nu == f64::NEG_INFINITY {
        return 0.0;
    }
    if nu == f64::INFINITY {
        return f64::INFINITY;
    }
    let t_free = aversion * (nu - 1.0) - 1.0;
    if q == 0.0 {
        return t_free.exp();
    }
    let c = q / a;
    let f = |t: f64| (t + 1.0) / aversion + 1.0 - nu - c * (-t).exp();
    let df = |t: f64| 1.0 / aversion + c * (-t).exp();
    // The exponential term is positive, so the root lies right of t_free.
    let lo = t_free;
    let mut step = 1.0;
    let mut hi = lo + step;
    while f(hi) <= 0.0 {
        step *= 2.0;
        hi = lo + step;
    }
    root_increasing(f, df, lo, hi).exp()
}

/// Root of an increasing function bracketed by `f(lo) <= 0 <= f(hi)`:
/// Newton steps, falling back to bisection when a step leaves the bracket or
/// converges too slowly.
pub(crate) fn root_increasing(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let mut t = 0.5 * (lo + hi);
    let mut last_step = hi - lo;
    for _ in 0..200 {
        let ft = f(t);
        if ft == 0.0 {
            return t;
        }
        if ft < 0.0 || ft.is_nan() {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - ft / df(t);
        // Newton must stay inside the bracket and at least halve the step
        // taken two iterations back, otherwise bisect.
        let next = if newton.is_finite() && newton > lo && newton < hi && 2.0 * (newton - t).abs() <= last_step {
            newton
        } else {
            0.5 * (lo + hi)
        };
        last_step = (next - t).abs().max(f64::MIN_POSITIVE);
        if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) || hi - lo <= 1e-15 * (1.0 + t.abs()) {
            return next;
        }
        t = next;
    }
    t
}

/// Finds `y` with `Σ w_i y_i = 1`, `y_i = response(i, ν)` for a multiplier
/// `ν`, mixing the two bracket endpoints when the mass jumps across one.
/// `response` must be nondecreasing in `ν` and accept `ν = ±∞` as limits.
fn allocate(w: &[f64], response: impl Fn(usize, f64) -> f64) -> Option<Vec<f64>> {
    let eval = |nu: f64| -> (Vec<f64>, f64) {
        let y: Vec<f64> = (0..w.len()).map(|i| response(i, nu)).collect();
        let mass = w.iter().zip(&y).map(|(w, y)| w * y).sum();
        (y, mass)
    };
    let (y_low, mass_low) = eval(f64::NEG_INFINITY);
    if mass_low > 1.0 + MASS_TOL {
        return None;
    }
    if mass_low >= 1.0 {
        return Some(y_low);
    }
    let (y_high, mass_high) = eval(f64::INFINITY);
    if mass_high < 1.0 - MASS_TOL {
        return None;
    }
    if mass_high <= 1.0 {
        return Some(y_high);
    }

    let mut lo = -1.0;
    let (mut y_lo, mut m_lo) = eval(lo);
    while m_lo > 1.0 {
        lo = 2.0 * lo;
        if !lo.is_finite() {
            (y_lo, m_lo) = (y_low.clone(), mass_low);
            break;
        }
        (y_lo, m_lo) = eval(lo);
    }
    let mut hi = 1.0;
    let (mut y_hi, mut m_hi) = eval(hi);
    while m_hi < 1.0 {
        hi = 2.0 * hi;
        if !hi.is_finite() {
            (y_hi, m_hi) = (y_high.clone(), mass_high);
            break;
        }
        (y_hi, m_hi) = eval(hi);
    }
    if m_lo == 1.0 {
        return Some(y_lo);
    }
    if m_hi == 1.0 {
        return Some(y_hi);
    }
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let (y_mid, m_mid) = eval(mid);
        if m_mid == 1.0 {
            return Some(y_mid);
        }
        if m_mid < 1.0 {
            (lo, y_lo, m_lo) = (mid, y_mid, m_mid);
        } else {
            (hi, y_hi, m_hi) = (mid, y_mid, m_mid);
        }
    }
    let theta = (m_hi - 1.0) / (m_hi - m_lo);
    Some(
        y_lo.iter()
            .zip(&y_hi)
            .map(|(l, h)| theta * l + (1.0 - theta) * h)
            .collect(),
    )
}
