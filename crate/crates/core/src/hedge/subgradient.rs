//! Projected subgradient descent with `c/√t` steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{objective, SolverOptions};
use crate::error::{Error, Result};
use crate::market::{ConstraintSet, Market};
use crate::preference::ComposedPreference;

pub(super) fn solve(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let n = market.num_assets();
    let center = set.center(n);
    let starts: Vec<Vec<f64>> = (0..opts.multistarts.max(1))
        .map(|s| {
            if s == 0 {
                return Ok(center.clone());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
            let raw: Vec<f64> = center.iter().map(|c| c + rng.random_range(-1.0..1.0)).collect();
            set.project(&raw)
        })
        .collect::<Result<_>>()?;

    let runs: Vec<Result<(f64, Vec<f64>)>> = starts
        .into_par_iter()
        .map(|h0| descend(pref, market, set, opts, h0))
        .collect();

    // Total order on (value, h) keeps the merge independent of scheduling.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for run in runs {
        let candidate = run?;
        let better = match &best {
            None => true,
            Some((v, h)) => candidate
                .0
                .total_cmp(v)
                .then_with(|| lexicographic(&candidate.1, h))
                .is_lt(),
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one start").1)
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn descend(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    opts: &SolverOptions,
    h0: Vec<f64>,
) -> Result<(f64, Vec<f64>)> {
    let mut h = h0;
    let mut best = (objective(pref, market, &h)?, h.clone());
    for t in 1..=opts.max_iter {
        let position = market.hedged_position(&h)?;
        let q = pref.subgradient(&position, market.space())?;
        // The objective's subgradient in h is −E_Q[ΔS].
        let moments = market.price_moments(&q)?;
        let norm = moments.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = opts.step_c / (t as f64).sqrt() / norm;
        let raw: Vec<f64> = h.iter().zip(&moments).map(|(h, g)| h + step * g).collect();
        h = set.project(&raw)?;
        let value = objective(pref, market, &h)?;
        if value < opts.lower_guard {
            return Err(Error::Unbounded { value });
        }
        if value < best.0 {
            best = (value, h.clone());
        }
    }
    Ok(best)
}
