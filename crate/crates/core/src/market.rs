//! Price variations, claims and the admissible sets of hedge weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{Measure, Rv, ScenarioSpace};

/// Feasibility tolerance for hedge weights.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Coordinates of a long-only or box hedge closer than this to a bound
/// count as active when building normal cones.
pub const ACTIVITY_TOL: f64 = 1e-8;
/// Relative tolerance used by the support function to decide whether the
/// linear part vanishes (or is constant) on the constraint set.
pub const SUPPORT_TOL: f64 = 1e-8;

/// A one-period market: `k` scenarios, `n` traded assets with discounted
/// price variations `ΔS` (row per scenario), a claim `H` and the initial
/// capital `V0` of the hedger.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    delta_s: DMatrix<f64>,
    claim: Rv,
    v0: f64,
    space: ScenarioSpace,
}

impl Market {
    pub fn new(space: ScenarioSpace, delta_s: DMatrix<f64>, claim: Rv, v0: f64) -> Result<Self> {
        space.check_len(delta_s.nrows())?;
        space.check_len(claim.len())?;
        if delta_s.ncols() == 0 {
            return Err(Error::InvalidParameter("market needs at least one asset".into()));
        }
        if delta_s.iter().chain(claim.values()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("price variations and claim must be finite".into()));
        }
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::InvalidParameter(format!("initial capital must be positive, got {v0}")));
        }
        Ok(Self { delta_s, claim, v0, space })
    }

    /// Builds the market from one row of price variations per scenario.
    pub fn from_rows(space: ScenarioSpace, rows: &[Vec<f64>], claim: Rv, v0: f64) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
        }
        let delta_s = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Self::new(space, delta_s, claim, v0)
    }

    pub fn delta_s(&self) -> &DMatrix<f64> {
        &self.delta_s
    }

    pub fn claim(&self) -> &Rv {
        &self.claim
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn space(&self) -> &ScenarioSpace {
        &self.space
    }

    pub fn num_scenarios(&self) -> usize {
        self.delta_s.nrows()
    }

    pub fn num_assets(&self) -> usize {
        self.delta_s.ncols()
    }

    /// Same market and capital, different claim.
    pub fn with_claim(&self, claim: Rv) -> Result<Market> {
        Market::new(self.space.clone(), self.delta_s.clone(), claim, self.v0)
    }

    /// `ΔH = H − V0`.
    pub fn claim_increment(&self) -> Rv {
        self.claim.add_scalar(-self.v0)
    }

    /// `h'ΔS − ΔH` per scenario, equal to `V − H` with `V = V0 + h'ΔS`.
    pub fn hedged_position(&self, h: &[f64]) -> Result<Rv> {
        if h.len() != self.num_assets() {
            return Err(Error::DimensionMismatch { expected: self.num_assets(), found: h.len() });
        }
        let gains = &self.delta_s * DVector::from_column_slice(h);
        Ok(Rv::new(
            gains
                .iter()
                .zip(self.claim.values())
                .map(|(g, c)| g - (c - self.v0))
                .collect(),
        ))
    }

    /// `E_Q[ΔS_i]` for every asset, with `Q` given as a density.
    pub fn price_moments(&self, q: &Measure) -> Result<Vec<f64>> {
        self.space.check_len(q.len())?;
        let w = self.space.weights();
        Ok((0..self.num_assets())
            .map(|j| {
                self.delta_s
                    .column(j)
                    .iter()
                    .zip(w)
                    .zip(q.density())
                    .map(|((s, w), q)| s * w * q)
                    .sum()
            })
            .collect())
    }
}

/// Convex set of admissible hedge weights.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Unconstrained,
    /// `Σ h_i = 1`.
    BudgetHyperplane,
    /// `Σ h_i = 1`, `h ≥ 0`.
    LongOnlySimplex,
    /// `lo_i ≤ h_i ≤ hi_i`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// Distance from a vector to a normal cone, plus the budget multiplier when
/// the cone contains the direction `1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeDistance {
    pub residual: f64,
    pub multiplier: Option<f64>,
}

impl ConstraintSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), found: hi.len() });
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::InvalidParameter(format!(
                    "box bounds at coordinate {i} must be finite with lo <= hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(ConstraintSet::Box { lo, hi })
    }

    /// Checks that the set lives in dimension `n`.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidParameter("hedge dimension must be positive".into()));
        }
        match self {
            ConstraintSet::Box { lo, .. } if lo.len() != n => {
                Err(Error::DimensionMismatch { expected: n, found: lo.len() })
            }
            _ => Ok(()),
        }
    }

    /// Largest violation of any defining constraint (0 when feasible).
    pub fn violation(&self, h: &[f64]) -> f64 {
        match self {
            ConstraintSet::Unconstrained => 0.0,
            ConstraintSet::BudgetHyperplane => (h.iter().sum::<f64>() - 1.0).abs(),
            ConstraintSet::LongOnlySimplex => h
                .iter()
                .map(|&x| (-x).max(0.0))
                .fold((h.iter().sum::<f64>() - 1.0).abs(), f64::max),
            ConstraintSet::Box { lo, hi } => h
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&x, (&l, &u))| (l - x).max(x - u).max(0.0))
                .fold(0.0, f64::max),
        }
    }

    pub fn check_feasible(&self, h: &[f64]) -> Result<()> {
        self.check_dim(h.len())?;
        let violation = self.violation(h);
        if violation > FEASIBILITY_TOL {
            return Err(Error::Infeasible { violation });
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(h.len())?;
        Ok(match self {
            ConstraintSet::Unconstrained => h.to_vec(),
            ConstraintSet::BudgetHyperplane => {
                let shift = (h.iter().sum::<f64>() - 1.0) / h.len() as f64;
                h.iter().map(|x| x - shift).collect()
            }
            ConstraintSet::LongOnlySimplex => project_simplex(h),
            ConstraintSet::Box { lo, hi } => h
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&x, (&l, &u))| x.clamp(l, u))
                .collect(),
        })
    }

    /// A canonical feasible point: the barycenter for the budget sets, the
    /// box midpoint, or the origin.
    pub fn center(&self, n: usize) -> Vec<f64> {
        match self {
            ConstraintSet::Unconstrained => vec![0.0; n],
            ConstraintSet::BudgetHyperplane | ConstraintSet::LongOnlySimplex => {
                vec![1.0 / n as f64; n]
            }
            ConstraintSet::Box { lo, hi } => lo.iter().zip(hi).map(|(l, u)| 0.5 * (l + u)).collect(),
        }
    }

    /// Euclidean distance from `g` to the normal cone of the set at `h`.
    pub fn normal_cone_residual(&self, h: &[f64], g: &[f64]) -> Result<f64> {
        Ok(self.normal_cone_distance(h, g)?.residual)
    }

    /// Distance to the normal cone together with the budget multiplier `λ`
    /// of the closest cone element (budget and long-only sets only).
    pub fn normal_cone_distance(&self, h: &[f64], g: &[f64]) -> Result<ConeDistance> {
        self.check_feasible(h)?;
        if g.len() != h.len() {
            return Err(Error::DimensionMismatch { expected: h.len(), found: g.len() });
        }
        Ok(match self {
            ConstraintSet::Unconstrained => ConeDistance { residual: norm(g), multiplier: None },
            ConstraintSet::BudgetHyperplane => {
                let lambda = g.iter().sum::<f64>() / g.len() as f64;
                let residual = norm(&g.iter().map(|x| x - lambda).collect::<Vec<_>>());
                ConeDistance { residual, multiplier: Some(lambda) }
            }
            ConstraintSet::LongOnlySimplex => {
                let active: Vec<bool> = h.iter().map(|&x| x <= ACTIVITY_TOL).collect();
                let lambda = simplex_cone_multiplier(g, &active);
                let sq: f64 = g
                    .iter()
                    .zip(&active)
                    .map(|(&gi, &zero)| {
                        let d = if zero { (gi - lambda).max(0.0) } else { gi - lambda };
                        d * d
                    })
                    .sum();
                ConeDistance { residual: sq.sqrt(), multiplier: Some(lambda) }
            }
            ConstraintSet::Box { lo, hi } => {
                let sq: f64 = h
                    .iter()
                    .zip(g)
                    .zip(lo.iter().zip(hi))
                    .map(|((&x, &gi), (&l, &u))| {
                        let at_lo = x <= l + ACTIVITY_TOL;
                        let at_hi = x >= u - ACTIVITY_TOL;
                        let d = match (at_lo, at_hi) {
                            (true, true) => 0.0,
                            (true, false) => gi.max(0.0),
                            (false, true) => (-gi).max(0.0),
                            (false, false) => gi.abs(),
                        };
                        d * d
                    })
                    .sum();
                ConeDistance { residual: sq.sqrt(), multiplier: None }
            }
        })
    }

    /// `sup { E_Q[V0 + h'ΔS] : h in the set }`, possibly `+∞`.
    pub fn support_function(&self, market: &Market, q: &Measure) -> Result<f64> {
        self.check_dim(market.num_assets())?;
        let mass = market.space().mass(q)?;
        let g = market.price_moments(q)?;
        let w = market.space().weights();
        // Scale of each moment, so the vanishing tests are relative.
        let scale: Vec<f64> = (0..market.num_assets())
            .map(|j| {
                1.0 + market
                    .delta_s()
                    .column(j)
                    .iter()
                    .zip(w)
                    .zip(q.density())
                    .map(|((s, w), q)| s.abs() * w * q)
                    .sum::<f64>()
            })
            .collect();
        let base = market.v0() * mass;
        Ok(match self {
            ConstraintSet::Unconstrained => {
                if g.iter().zip(&scale).all(|(g, s)| g.abs() <= SUPPORT_TOL * s) {
                    base
                } else {
                    f64::INFINITY
                }
            }
            ConstraintSet::BudgetHyperplane => {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                if g.iter().zip(&scale).all(|(g, s)| (g - mean).abs() <= SUPPORT_TOL * s) {
                    base + mean
                } else {
                    f64::INFINITY
                }
            }
            ConstraintSet::LongOnlySimplex => base + g.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ConstraintSet::Box { lo, hi } => {
                base + g
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&gi, (&l, &u))| (gi * l).max(gi * u))
                    .sum::<f64>()
            }
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sort-and-threshold projection onto the probability simplex.
fn project_simplex(h: &[f64]) -> Vec<f64> {
    let mut sorted = h.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    h.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimizer over `λ` of `Σ_free (g_i − λ)² + Σ_active (g_i − λ)_+²`, the
/// squared distance from `g` to `{λ1 − ν : ν ≥ 0, ν_i = 0 off the active set}`.
fn simplex_cone_multiplier(g: &[f64], active: &[bool]) -> f64 {
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    let mut tail: Vec<f64> = Vec::new();
    for (&gi, &zero) in g.iter().zip(active) {
        if zero {
            tail.push(gi);
        } else {
            free_sum += gi;
            free_count += 1;
        }
    }
    tail.sort_by(|a, b| b.total_cmp(a));
    let mut sum = free_sum;
    for m in 0..=tail.len() {
        if m > 0 {
            sum += tail[m - 1];
        }
        let count = free_count + m;
        if count == 0 {
            continue;
        }
        let lambda = sum / count as f64;
        let upper_ok = m == 0 || tail[m - 1] >= lambda;
        let lower_ok = m == tail.len() || tail[m] <= lambda;
        if upper_ok && lower_ok {
            return lambda;
        }
    }
    // Only reachable with no free coordinates and an empty tail.
    tail.first().copied().unwrap_or(0.0)
}
