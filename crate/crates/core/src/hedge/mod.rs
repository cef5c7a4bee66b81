//! The hedging problem `P(H) = inf_{h ∈ 𝒱} ρ_u(h'ΔS − ΔH)`.
//!
//! Three entry points:
//! - [`solve_gaussian_meanvar`] and [`solve_gaussian_es`] for Gaussian
//!   markets under the budget constraint;
//! - [`solve_numeric`] for scenario markets and any convex composition;
//! - [`verify_optimality`], which searches the subdifferential at `h` for a
//!   measure `Q` with `E_Q[ΔS] ∈ N_𝒱(h)`.

mod barrier;
mod gaussian;
mod subgradient;
mod verify;

pub use gaussian::{
    gaussian_es_exp_gradient, gaussian_es_exp_objective, solve_gaussian_es, solve_gaussian_meanvar,
    GaussianMarket, GaussianObjective,
};
pub use verify::{verify_optimality, verify_optimality_with};

use crate::error::{Error, Result};
use crate::market::{ConstraintSet, Market};
use crate::preference::{ComposedPreference, Utility};
use crate::risk::RiskMeasure;
use crate::scenario::Measure;

/// Numerical method behind [`solve_numeric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Primal log-barrier path following on an epigraph reformulation.
    Barrier,
    /// Projected subgradient descent with `c/√t` steps and multistarts.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub step_c: f64,
    pub tol_residual: f64,
    pub seed: u64,
    pub multistarts: usize,
    pub lower_guard: f64,
    pub method: Method,
    /// Width of the near-tie window used when searching for an optimality
    /// certificate, relative to the scale of the position.
    pub tie_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            step_c: 1.0,
            tol_residual: 1e-6,
            seed: 0,
            multistarts: 8,
            lower_guard: -1e12,
            method: Method::Barrier,
            tie_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeSolution {
    pub h: Vec<f64>,
    pub value: f64,
    /// Budget multiplier `λ`, when the constraint set has one.
    pub multiplier: Option<f64>,
    /// Supporting measure at the optimum; absent for parametric markets.
    pub witness: Option<Measure>,
    pub residual: f64,
}

/// Result of [`verify_optimality`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimality {
    /// Distance from `E_Q[ΔS]` to the normal cone at `h`.
    pub residual: f64,
    pub multiplier: Option<f64>,
    /// The certificate `Q`.
    pub witness: Measure,
    /// `E_Q[ΔS_i]` for each asset.
    pub moments: Vec<f64>,
}

/// `h ↦ ρ_u(h'ΔS − ΔH)`.
pub fn objective(pref: &ComposedPreference, market: &Market, h: &[f64]) -> Result<f64> {
    pref.evaluate(&market.hedged_position(h)?, market.space())
}

/// Minimizes `ρ_u(h'ΔS − ΔH)` over the constraint set.
pub fn solve_numeric(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<HedgeSolution> {
    pref.rho().require_convex()?;
    set.check_dim(market.num_assets())?;
    let h = match (pref.rho(), pref.utility()) {
        (RiskMeasure::NegExpectation, Utility::Affine { .. }) => solve_linear(market, set)?,
        _ => match opts.method {
            Method::Barrier => barrier::solve(pref, market, set, opts)?,
            Method::Subgradient => subgradient::solve(pref, market, set, opts)?,
        },
    };
    let value = objective(pref, market, &h)?;
    if value < opts.lower_guard {
        return Err(Error::Unbounded { value });
    }
    let check = verify_optimality_with(pref, market, set, &h, opts.tie_tol)?;
    Ok(HedgeSolution {
        h,
        value,
        multiplier: check.multiplier,
        witness: Some(check.witness),
        residual: check.residual,
    })
}

/// `α_{ρ_u}(Q) + sup_{h ∈ 𝒱} E_Q[V0 + h'ΔS]`.
pub fn problem_penalty(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    q: &Measure,
) -> Result<f64> {
    let support = set.support_function(market, q)?;
    if support == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let alpha = pref.penalty(q, market.space())?;
    Ok(alpha + support)
}

/// With `ρ = −E` and affine `u` the objective is `−a − b(E[h'ΔS] − E[ΔH])`,
/// so the problem reduces to maximizing `g'h` with `g = E[ΔS]`.
fn solve_linear(market: &Market, set: &ConstraintSet) -> Result<Vec<f64>> {
    let n = market.num_assets();
    let g = market.price_moments(&Measure::reference(market.num_scenarios()))?;
    let scale = 1.0 + g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = crate::market::SUPPORT_TOL * scale;
    let unbounded = Error::Unbounded { value: f64::NEG_INFINITY };
    match set {
        ConstraintSet::Unconstrained => {
            if g.iter().any(|x| x.abs() > tol) {
                return Err(unbounded);
            }
            Ok(vec![0.0; n])
        }
        ConstraintSet::BudgetHyperplane => {
            let mean = g.iter().sum::<f64>() / n as f64;
            if g.iter().any(|x| (x - mean).abs() > tol) {
                return Err(unbounded);
            }
            Ok(set.center(n))
        }
        ConstraintSet::LongOnlySimplex => {
            let best = (0..n).fold(0, |b, i| if g[i] > g[b] { i } else { b });
            let mut h = vec![0.0; n];
            h[best] = 1.0;
            Ok(h)
        }
        ConstraintSet::Box { lo, hi } => Ok((0..n)
            .map(|i| if g[i] > 0.0 { hi[i] } else if g[i] < 0.0 { lo[i] } else { 0.5 * (lo[i] + hi[i]) })
            .collect()),
    }
}
