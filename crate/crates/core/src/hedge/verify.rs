//! Optimality check: `h` solves the hedging problem iff some `Q ∈ ∂ρ_u(X)`
//! at `X = h'ΔS − ΔH` has `E_Q[ΔS] ∈ N_𝒱(h)`.
//!
//! Where `ρ_u` is differentiable the candidate `Q` is unique. At kinks (ES
//! boundary ties, the shortfall utility at zero) the subdifferential is a
//! polytope, searched with a small LP for the element whose moment vector
//! is closest to the normal cone in the L1 sense. Scenarios within
//! `tie_tol` of a kink are treated as sitting on it.

use super::Optimality;
use crate::error::Result;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::market::{ConstraintSet, Market, ACTIVITY_TOL};
use crate::preference::{ComposedPreference, Utility};
use crate::risk::RiskMeasure;
use crate::scenario::{Measure, Rv};

/// Residual at `h` with the default tie window.
pub fn verify_optimality(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    h: &[f64],
) -> Result<Optimality> {
    verify_optimality_with(pref, market, set, h, super::SolverOptions::default().tie_tol)
}

#[derive(Debug, Clone, Copy)]
enum Factor {
    Fixed(f64),
    /// Free in `[0, cap]`.
    Free(f64),
}

pub fn verify_optimality_with(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    h: &[f64],
    tie_tol: f64,
) -> Result<Optimality> {
    set.check_feasible(h)?;
    let space = market.space();
    let x = market.hedged_position(h)?;
    let selector = pref.subgradient(&x, space)?;
    let mut best = certificate(market, set, h, selector)?;
    if best.residual == 0.0 {
        return Ok(best);
    }
    if let Some(q) = face_search(pref, market, set, h, &x, tie_tol)? {
        let candidate = certificate(market, set, h, q)?;
        if candidate.residual < best.residual {
            best = candidate;
        }
    }
    Ok(best)
}

fn certificate(market: &Market, set: &ConstraintSet, h: &[f64], q: Measure) -> Result<Optimality> {
    let moments = market.price_moments(&q)?;
    let d = set.normal_cone_distance(h, &moments)?;
    Ok(Optimality { residual: d.residual, multiplier: d.multiplier, witness: q, moments })
}

/// Per-scenario factors `Q_i = Y_i · s_i` with `Y ∈ ∂ρ(u(X))` and
/// `s_i ∈ ∂u(X_i)`, relaxed to intervals near kinks.
fn factors(pref: &ComposedPreference, x: &Rv, market: &Market, tie_tol: f64) -> Result<(Vec<Factor>, Vec<Factor>)> {
    let space = market.space();
    let u = pref.utility();
    let ux = u.apply(x);
    let y = match pref.rho() {
        RiskMeasure::ExpectedShortfall { alpha } => {
            let level = space.quantile(&ux, alpha)?;
            let scale = 1.0 + ux.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tol = tie_tol * scale;
            ux.values()
                .iter()
                .map(|&v| {
                    if v < level - tol {
                        Factor::Fixed(1.0 / alpha)
                    } else if v > level + tol {
                        Factor::Fixed(0.0)
                    } else {
                        Factor::Free(1.0 / alpha)
                    }
                })
                .collect()
        }
        rho => rho.subgradient(&ux, space)?.into_density().into_iter().map(Factor::Fixed).collect(),
    };
    let scale = 1.0 + x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s = x
        .values()
        .iter()
        .map(|&xi| match u {
            Utility::Shortfall if xi.abs() <= tie_tol * scale => Factor::Free(1.0),
            _ => Factor::Fixed(u.slope(xi)),
        })
        .collect();
    Ok((y, s))
}

fn face_search(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    h: &[f64],
    x: &Rv,
    tie_tol: f64,
) -> Result<Option<Measure>> {
    let (y, s) = factors(pref, x, market, tie_tol)?;
    let k = market.num_scenarios();
    let n = market.num_assets();
    let w = market.space().weights();

    // Variable layout: free Y_i, free products z_i, slacks t_j, then λ.
    let mut y_var = vec![None; k];
    let mut z_var = vec![None; k];
    let mut count = 0;
    for i in 0..k {
        if let Factor::Free(_) = y[i] {
            y_var[i] = Some(count);
            count += 1;
        }
    }
    for i in 0..k {
        if let Factor::Free(_) = s[i] {
            z_var[i] = Some(count);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    let t0 = count;
    let has_lambda = matches!(set, ConstraintSet::BudgetHyperplane | ConstraintSet::LongOnlySimplex);
    let lambda = t0 + n;
    let nv = t0 + n + usize::from(has_lambda);

    // Q_i = constant + Σ coef·var.
    let q_expr: Vec<(f64, Option<(usize, f64)>)> = (0..k)
        .map(|i| match (y[i], s[i], z_var[i], y_var[i]) {
            (_, Factor::Free(_), Some(z), _) => (0.0, Some((z, 1.0))),
            (Factor::Fixed(yv), Factor::Fixed(sv), _, _) => (yv * sv, None),
            (Factor::Free(_), Factor::Fixed(sv), _, Some(yi)) => (0.0, Some((yi, sv))),
            _ => unreachable!("every free factor has a variable"),
        })
        .collect();

    let mut lp = LinearProgram::new(nv);
    let mut cost = vec![0.0; nv];
    for c in &mut cost[t0..t0 + n] {
        *c = 1.0;
    }
    lp.set_objective(cost);
    if has_lambda {
        lp.set_free(lambda);
    }

    for i in 0..k {
        if let (Factor::Free(cap), Some(yi)) = (y[i], y_var[i]) {
            let mut row = vec![0.0; nv];
            row[yi] = 1.0;
            lp.add_constraint(row, Relation::Le, cap);
        }
        if let Some(z) = z_var[i] {
            let mut row = vec![0.0; nv];
            row[z] = 1.0;
            match (y[i], y_var[i]) {
                (Factor::Fixed(yv), _) => lp.add_constraint(row, Relation::Le, yv),
                (_, Some(yi)) => {
                    row[yi] = -1.0;
                    lp.add_constraint(row, Relation::Le, 0.0);
                }
                _ => unreachable!(),
            }
        }
    }
    if let RiskMeasure::ExpectedShortfall { .. } = pref.rho() {
        let mut row = vec![0.0; nv];
        let mut fixed = 0.0;
        for i in 0..k {
            match (y[i], y_var[i]) {
                (Factor::Fixed(v), _) => fixed += w[i] * v,
                (_, Some(yi)) => row[yi] = w[i],
                _ => unreachable!(),
            }
        }
        lp.add_constraint(row, Relation::Eq, 1.0 - fixed);
    }

    // Moment rows g_j = Σ_i w_i ΔS_ij Q_i, split into constant and linear part.
    let ds = market.delta_s();
    for j in 0..n {
        let mut linear = vec![0.0; nv];
        let mut constant = 0.0;
        for i in 0..k {
            let coef = w[i] * ds[(i, j)];
            let (c, var) = q_expr[i];
            constant += coef * c;
            if let Some((v, a)) = var {
                linear[v] += coef * a;
            }
        }
        // upper: t_j ≥ g_j − λ ; lower: t_j ≥ λ − g_j
        let (upper, lower) = match set {
            ConstraintSet::Unconstrained | ConstraintSet::BudgetHyperplane => (true, true),
            ConstraintSet::LongOnlySimplex => (true, h[j] > ACTIVITY_TOL),
            ConstraintSet::Box { lo, hi } => {
                let at_lo = h[j] <= lo[j] + ACTIVITY_TOL;
                let at_hi = h[j] >= hi[j] - ACTIVITY_TOL;
                (!at_hi, !at_lo)
            }
        };
        if upper {
            let mut row: Vec<f64> = linear.iter().map(|a| -a).collect();
            row[t0 + j] = 1.0;
            if has_lambda {
                row[lambda] = 1.0;
            }
            lp.add_constraint(row, Relation::Ge, constant);
        }
        if lower {
            let mut row = linear.clone();
            row[t0 + j] = 1.0;
            if has_lambda {
                row[lambda] = -1.0;
            }
            lp.add_constraint(row, Relation::Ge, -constant);
        }
    }

    let solution = match lp.minimize() {
        Ok(LpOutcome::Optimal(sol)) => sol,
        _ => return Ok(None),
    };
    let density: Vec<f64> = q_expr
        .iter()
        .map(|&(c, var)| (c + var.map_or(0.0, |(v, a)| a * solution.x[v])).max(0.0))
        .collect();
    Ok(Some(Measure::new(density)?))
}
