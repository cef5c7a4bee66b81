//! Indifference prices, super/sub-hedging prices and martingale measures.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hedge::{solve_numeric, SolverOptions};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::market::{ConstraintSet, Market};
use crate::preference::ComposedPreference;
use crate::scenario::Rv;

/// Minimum density floor an equivalent martingale measure must clear.
pub const STRICT_POSITIVITY: f64 = 1e-9;
/// Relative singular-value cutoff for the completeness rank test.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport {
    pub sp: f64,
    pub bp: f64,
    pub superhedge: f64,
    pub subhedge: f64,
    pub arbitrage_free: bool,
    pub complete: bool,
    /// `P(H)`, `P(0)` and `P(−H)` behind the indifference prices.
    pub p_claim: f64,
    pub p_zero: f64,
    pub p_negated: f64,
}

fn hedge_value(
    pref: &ComposedPreference,
    market: &Market,
    claim: Rv,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<f64> {
    Ok(solve_numeric(pref, &market.with_claim(claim)?, set, opts)?.value)
}

/// `SP(H) = P(H) − P(0)`.
pub fn seller_price(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<f64> {
    let k = market.num_scenarios();
    let p_claim = hedge_value(pref, market, market.claim().clone(), set, opts)?;
    let p_zero = hedge_value(pref, market, Rv::constant(0.0, k), set, opts)?;
    Ok(p_claim - p_zero)
}

/// `BP(H) = −P(−H) + P(0)`.
pub fn buyer_price(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<f64> {
    let k = market.num_scenarios();
    let p_negated = hedge_value(pref, market, market.claim().scale(-1.0), set, opts)?;
    let p_zero = hedge_value(pref, market, Rv::constant(0.0, k), set, opts)?;
    Ok(p_zero - p_negated)
}

/// Indifference prices, hedging bounds and market checks in one pass.
pub fn price_report(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<PriceReport> {
    let k = market.num_scenarios();
    let p_claim = hedge_value(pref, market, market.claim().clone(), set, opts)?;
    let p_zero = hedge_value(pref, market, Rv::constant(0.0, k), set, opts)?;
    let p_negated = hedge_value(pref, market, market.claim().scale(-1.0), set, opts)?;
    let arbitrage_free = check_arbitrage(market)?;
    Ok(PriceReport {
        sp: p_claim - p_zero,
        bp: p_zero - p_negated,
        superhedge: superhedge_price(market, market.claim())?,
        subhedge: subhedge_price(market, market.claim())?,
        arbitrage_free,
        complete: arbitrage_free && spans_all_scenarios(market),
        p_claim,
        p_zero,
        p_negated,
    })
}

/// `inf { x : x + h'ΔS ≥ H scenariowise }`, `−∞` when the LP is unbounded.
pub fn superhedge_price(market: &Market, claim: &Rv) -> Result<f64> {
    hedging_lp(market, claim, true)
}

/// `sup { x : x + h'ΔS ≤ H scenariowise }`, `+∞` when the LP is unbounded.
pub fn subhedge_price(market: &Market, claim: &Rv) -> Result<f64> {
    hedging_lp(market, claim, false)
}

fn hedging_lp(market: &Market, claim: &Rv, superhedge: bool) -> Result<f64> {
    market.space().check_len(claim.len())?;
    let n = market.num_assets();
    let ds = market.delta_s();
    let mut lp = LinearProgram::new(n + 1);
    for j in 0..=n {
        lp.set_free(j);
    }
    let mut cost = vec![0.0; n + 1];
    cost[0] = 1.0;
    lp.set_objective(cost);
    let relation = if superhedge { Relation::Ge } else { Relation::Le };
    for (i, &h) in claim.values().iter().enumerate() {
        let mut row = vec![1.0];
        row.extend(ds.row(i).iter());
        lp.add_constraint(row, relation, h);
    }
    let outcome = if superhedge { lp.minimize()? } else { lp.maximize()? };
    match outcome {
        LpOutcome::Optimal(sol) => Ok(sol.value),
        LpOutcome::Unbounded => Ok(if superhedge { f64::NEG_INFINITY } else { f64::INFINITY }),
        LpOutcome::Infeasible => Err(Error::Numerical("hedging LP reported infeasible".into())),
    }
}

/// Martingale constraints on scenario probabilities `p_i = w_i q_i`.
fn martingale_lp(market: &Market, extra: usize) -> LinearProgram {
    let k = market.num_scenarios();
    let ds = market.delta_s();
    let mut lp = LinearProgram::new(k + extra);
    let mut mass = vec![1.0; k];
    mass.extend(std::iter::repeat_n(0.0, extra));
    lp.add_constraint(mass, Relation::Eq, 1.0);
    for j in 0..market.num_assets() {
        let mut row: Vec<f64> = ds.column(j).iter().copied().collect();
        row.extend(std::iter::repeat_n(0.0, extra));
        lp.add_constraint(row, Relation::Eq, 0.0);
    }
    lp
}

/// `(inf, sup)` of `E_Q[H]` over martingale measures `Q`.
pub fn emm_bounds(market: &Market, claim: &Rv) -> Result<(f64, f64)> {
    market.space().check_len(claim.len())?;
    if !check_arbitrage(market)? {
        return Err(Error::NoEmm);
    }
    let mut lp = martingale_lp(market, 0);
    lp.set_objective(claim.values().to_vec());
    let lo = lp.minimize()?.optimal().ok_or(Error::NoEmm)?.value;
    let hi = lp.maximize()?.optimal().ok_or(Error::NoEmm)?.value;
    Ok((lo, hi))
}

/// Whether a martingale measure with density at least
/// [`STRICT_POSITIVITY`] exists, found by maximizing the density floor.
pub fn check_arbitrage(market: &Market) -> Result<bool> {
    let k = market.num_scenarios();
    let w = market.space().weights();
    let mut lp = martingale_lp(market, 1);
    for i in 0..k {
        // p_i − ε w_i ≥ 0, i.e. density q_i ≥ ε.
        let mut row = vec![0.0; k + 1];
        row[i] = 1.0;
        row[k] = -w[i];
        lp.add_constraint(row, Relation::Ge, 0.0);
    }
    let mut cap = vec![0.0; k + 1];
    cap[k] = 1.0;
    lp.add_constraint(cap.clone(), Relation::Le, 1.0);
    lp.set_objective(cap);
    Ok(match lp.maximize()? {
        LpOutcome::Optimal(sol) => sol.value > STRICT_POSITIVITY,
        _ => false,
    })
}

/// Arbitrage-free with a unique martingale measure.
pub fn check_complete(market: &Market) -> Result<bool> {
    Ok(check_arbitrage(market)? && spans_all_scenarios(market))
}

/// Rank of `[1 | ΔS]` equals the number of scenarios, so the martingale
/// constraints pin down `Q`.
fn spans_all_scenarios(market: &Market) -> bool {
    let k = market.num_scenarios();
    let n = market.num_assets();
    if n + 1 < k {
        return false;
    }
    let a = DMatrix::from_fn(k, n + 1, |i, j| if j == 0 { 1.0 } else { market.delta_s()[(i, j - 1)] });
    let sv = a.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > RANK_TOL * top).count() == k
}
