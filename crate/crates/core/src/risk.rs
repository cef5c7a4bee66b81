//! Convex risk measures on finite scenario spaces.
//!
//! Each measure is evaluated through its primal closed form. The dual side
//! (penalty function, dual set, maximizing measure) is available for the
//! convex kinds; value at risk is provided as a plain quantile primitive and
//! rejected wherever convexity is required.

use crate::error::{Error, Result};
use crate::scenario::{sorted_order, Measure, Rv, ScenarioSpace};

/// Slack on the density cap of polytope-type dual sets.
pub const DUAL_FEASIBILITY_TOL: f64 = 1e-10;

/// A risk measure `ρ` acting on positions (gains are positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskMeasure {
    /// `ρ(X) = -E[X]`.
    NegExpectation,
    /// `ρ(X) = (1/a) log E[exp(-aX)]`.
    Entropic { a: f64 },
    /// Average of value at risk over levels in `(0, alpha]`.
    ExpectedShortfall { alpha: f64 },
    /// `ρ(X) = -F_X^{-1}(alpha)`; monotone and cash-additive but not convex.
    ValueAtRisk { alpha: f64 },
}

/// The set of probability measures over which the dual representation
/// maximizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualSet {
    /// Only the reference probability.
    Reference,
    /// Probability densities bounded above by `cap`.
    CappedDensity { cap: f64 },
    /// Every probability density (the penalty acts as a soft constraint).
    AllProbabilities,
}

impl DualSet {
    pub fn contains(&self, q: &Measure, space: &ScenarioSpace) -> bool {
        if !q.is_probability(space) {
            return false;
        }
        match *self {
            DualSet::Reference => q
                .density()
                .iter()
                .all(|d| (d - 1.0).abs() <= DUAL_FEASIBILITY_TOL),
            DualSet::CappedDensity { cap } => {
                q.density().iter().all(|&d| d <= cap + DUAL_FEASIBILITY_TOL)
            }
            DualSet::AllProbabilities => true,
        }
    }
}

impl RiskMeasure {
    pub fn entropic(a: f64) -> Result<Self> {
        let rho = RiskMeasure::Entropic { a };
        rho.validate()?;
        Ok(rho)
    }

    pub fn expected_shortfall(alpha: f64) -> Result<Self> {
        let rho = RiskMeasure::ExpectedShortfall { alpha };
        rho.validate()?;
        Ok(rho)
    }

    pub fn value_at_risk(alpha: f64) -> Result<Self> {
        let rho = RiskMeasure::ValueAtRisk { alpha };
        rho.validate()?;
        Ok(rho)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskMeasure::NegExpectation => Ok(()),
            RiskMeasure::Entropic { a } => {
                if a > 0.0 && a.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "entropic risk aversion must be positive, got {a}"
                    )))
                }
            }
            RiskMeasure::ExpectedShortfall { alpha } | RiskMeasure::ValueAtRisk { alpha } => {
                if alpha > 0.0 && alpha < 1.0 {
                    Ok(())
                } else {
                    Err(Error::LevelOutOfRange(alpha))
                }
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, RiskMeasure::ValueAtRisk { .. })
    }

    pub(crate) fn require_convex(&self) -> Result<()> {
        if self.is_convex() {
            Ok(())
        } else {
            Err(Error::NonConvexMeasure)
        }
    }

    pub fn dual_set(&self) -> Result<DualSet> {
        match *self {
            RiskMeasure::NegExpectation => Ok(DualSet::Reference),
            RiskMeasure::Entropic { .. } => Ok(DualSet::AllProbabilities),
            RiskMeasure::ExpectedShortfall { alpha } => {
                Ok(DualSet::CappedDensity { cap: 1.0 / alpha })
            }
            RiskMeasure::ValueAtRisk { .. } => Err(Error::NonConvexMeasure),
        }
    }

    /// Evaluates `ρ(X)`.
    pub fn evaluate(&self, x: &Rv, space: &ScenarioSpace) -> Result<f64> {
        self.validate()?;
        space.check_len(x.len())?;
        let w = space.weights();
        let v = x.values();
        Ok(match *self {
            RiskMeasure::NegExpectation => -space.expectation(x, None)?,
            RiskMeasure::Entropic { a } => {
                let shift = v.iter().map(|&x| -a * x).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = w
                    .iter()
                    .zip(v)
                    .map(|(w, &x)| w * (-a * x - shift).exp())
                    .sum();
                (shift + sum.ln()) / a
            }
            RiskMeasure::ExpectedShortfall { alpha } => {
                let density = tail_density(v, w, alpha);
                -w.iter()
                    .zip(v)
                    .zip(&density)
                    .map(|((w, x), d)| w * x * d)
                    .sum::<f64>()
            }
            RiskMeasure::ValueAtRisk { alpha } => -space.quantile(x, alpha)?,
        })
    }

    /// The minimal penalty `α_ρ(Q) = sup_X { E_Q[-X] - ρ(X) }` of a
    /// probability measure. Returns `f64::INFINITY` outside the effective
    /// domain.
    pub fn penalty(&self, q: &Measure, space: &ScenarioSpace) -> Result<f64> {
        self.validate()?;
        self.require_convex()?;
        space.check_len(q.len())?;
        q.require_probability(space)?;
        Ok(match *self {
            RiskMeasure::NegExpectation | RiskMeasure::ExpectedShortfall { .. } => {
                if self.dual_set()?.contains(q, space) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            RiskMeasure::Entropic { a } => relative_entropy(q.density(), space.weights()) / a,
            RiskMeasure::ValueAtRisk { .. } => unreachable!(),
        })
    }

    /// A maximizer of the dual representation at `X`, i.e. an element of the
    /// subdifferential `∂ρ(X)`.
    pub fn subgradient(&self, x: &Rv, space: &ScenarioSpace) -> Result<Measure> {
        self.validate()?;
        self.require_convex()?;
        space.check_len(x.len())?;
        let w = space.weights();
        let v = x.values();
        let density = match *self {
            RiskMeasure::NegExpectation => vec![1.0; v.len()],
            RiskMeasure::Entropic { a } => gibbs_density(v, w, a),
            RiskMeasure::ExpectedShortfall { alpha } => tail_density(v, w, alpha),
            RiskMeasure::ValueAtRisk { .. } => unreachable!(),
        };
        Ok(Measure::from_density_unchecked(density))
    }
}

/// `Σ w d ln d` with `0 ln 0 = 0`.
pub(crate) fn relative_entropy(density: &[f64], weights: &[f64]) -> f64 {
    density
        .iter()
        .zip(weights)
        .map(|(&d, &w)| if d > 0.0 { w * d * d.ln() } else { 0.0 })
        .sum()
}

/// Density `exp(-aX) / E[exp(-aX)]`, computed with a max shift.
pub(crate) fn gibbs_density(values: &[f64], weights: &[f64], a: f64) -> Vec<f64> {
    let shift = values
        .iter()
        .map(|&x| -a * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = values.iter().map(|&x| (-a * x - shift).exp()).collect();
    let norm: f64 = raw.iter().zip(weights).map(|(r, w)| r * w).sum();
    raw.into_iter().map(|r| r / norm).collect()
}

/// Expected-shortfall maximizer: density `1/alpha` on the lower tail, filled
/// in ascending order until mass `alpha` is reached. Atoms sharing the
/// boundary value split the remaining mass in proportion to their weights.
pub(crate) fn tail_density(values: &[f64], weights: &[f64], alpha: f64) -> Vec<f64> {
    let order = sorted_order(values);
    let mut density = vec![0.0; values.len()];
    let mut remaining = alpha;
    let mut start = 0;
    while start < order.len() && remaining > 0.0 {
        let value = values[order[start]];
        let mut end = start;
        let mut group_weight = 0.0;
        while end < order.len() && values[order[end]] == value {
            group_weight += weights[order[end]];
            end += 1;
        }
        let taken = group_weight.min(remaining);
        let d = taken / (alpha * group_weight);
        for &i in &order[start..end] {
            density[i] = d;
        }
        remaining -= taken;
        start = end;
    }
    density
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform4() -> (ScenarioSpace, Rv) {
        (
            ScenarioSpace::uniform(4).unwrap(),
            Rv::new(vec![-2.0, -1.0, 0.0, 1.0]),
        )
    }

    #[test]
    fn expected_shortfall_tail_average() {
        let (space, x) = uniform4();
        let es = RiskMeasure::expected_shortfall(0.5).unwrap();
        assert!((es.evaluate(&x, &space).unwrap() - 1.5).abs() < 1e-15);
        // Fractional boundary atom: worst 0.375 of mass = all of -2 and half of -1.
        let es = RiskMeasure::expected_shortfall(0.375).unwrap();
        let expected = -(0.25 * -2.0 + 0.125 * -1.0) / 0.375;
        assert!((es.evaluate(&x, &space).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn expected_shortfall_matches_quantile_integral() {
        // Oracle: midpoint quadrature of (1/alpha) ∫_0^alpha VaR^u du.
        let space = ScenarioSpace::new(vec![0.1, 0.3, 0.2, 0.4]).unwrap();
        let x = Rv::new(vec![0.5, -1.5, 2.0, -0.25]);
        for alpha in [0.05, 0.1, 0.25, 0.4, 0.75] {
            let n = 200_000;
            let integral: f64 = (0..n)
                .map(|j| {
                    let u = alpha * (j as f64 + 0.5) / n as f64;
                    -space.quantile(&x, u).unwrap()
                })
                .sum::<f64>()
                / n as f64;
            let es = RiskMeasure::expected_shortfall(alpha)
                .unwrap()
                .evaluate(&x, &space)
                .unwrap();
            assert!((es - integral).abs() < 1e-4, "alpha={alpha}: {es} vs {integral}");
        }
    }

    #[test]
    fn entropic_direct_formula() {
        let space = ScenarioSpace::new(vec![0.5, 0.5]).unwrap();
        let x = Rv::new(vec![0.0, -(3.0f64).ln()]);
        let ent = RiskMeasure::entropic(1.0).unwrap();
        assert!((ent.evaluate(&x, &space).unwrap() - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropic_survives_large_exponents() {
        let space = ScenarioSpace::new(vec![0.5, 0.5]).unwrap();
        let x = Rv::new(vec![-1000.0, 0.0]);
        let v = RiskMeasure::entropic(2.0).unwrap().evaluate(&x, &space).unwrap();
        assert!(v.is_finite());
        assert!((v - (1000.0 + 0.5f64.ln() / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn constants_map_to_negated_cash() {
        let space = ScenarioSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let c = Rv::constant(2.5, 3);
        for rho in [
            RiskMeasure::NegExpectation,
            RiskMeasure::Entropic { a: 3.0 },
            RiskMeasure::ExpectedShortfall { alpha: 0.1 },
            RiskMeasure::ValueAtRisk { alpha: 0.1 },
        ] {
            assert!((rho.evaluate(&c, &space).unwrap() + 2.5).abs() < 1e-12, "{rho:?}");
        }
    }

    #[test]
    fn penalty_examples() {
        let (space, _) = uniform4();
        let es = RiskMeasure::expected_shortfall(0.5).unwrap();
        assert_eq!(es.penalty(&Measure::reference(4), &space).unwrap(), 0.0);
        let spike = Measure::new(vec![4.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(es.penalty(&spike, &space).unwrap(), f64::INFINITY);

        let half = ScenarioSpace::uniform(2).unwrap();
        let ent = RiskMeasure::entropic(1.0).unwrap();
        let point = Measure::new(vec![2.0, 0.0]).unwrap();
        assert!((ent.penalty(&point, &half).unwrap() - 2.0f64.ln()).abs() < 1e-15);

        let neg = RiskMeasure::NegExpectation;
        assert_eq!(neg.penalty(&Measure::reference(2), &half).unwrap(), 0.0);
        let tilted = Measure::new(vec![1.5, 0.5]).unwrap();
        assert_eq!(neg.penalty(&tilted, &half).unwrap(), f64::INFINITY);

        let not_prob = Measure::new(vec![1.0, 0.5]).unwrap();
        assert!(matches!(
            ent.penalty(&not_prob, &half),
            Err(Error::NotProbability { .. })
        ));
    }

    #[test]
    fn subgradient_examples() {
        let (space, x) = uniform4();
        let es = RiskMeasure::expected_shortfall(0.5).unwrap();
        let q = es.subgradient(&x, &space).unwrap();
        assert_eq!(q.density(), &[2.0, 2.0, 0.0, 0.0]);
        let attained = space.expectation(&x.scale(-1.0), Some(&q)).unwrap();
        assert!((attained - 1.5).abs() < 1e-15);

        let ent = RiskMeasure::entropic(0.7).unwrap();
        let q = ent.subgradient(&Rv::constant(-3.0, 4), &space).unwrap();
        assert!(q.density().iter().all(|d| (d - 1.0).abs() < 1e-15));

        let q = RiskMeasure::NegExpectation.subgradient(&x, &space).unwrap();
        assert_eq!(q.density(), &[1.0; 4]);

        let var = RiskMeasure::value_at_risk(0.5).unwrap();
        assert!(matches!(
            var.subgradient(&x, &space),
            Err(Error::NonConvexMeasure)
        ));
        assert!(matches!(
            var.penalty(&Measure::reference(4), &space),
            Err(Error::NonConvexMeasure)
        ));
    }

    #[test]
    fn tied_boundary_atoms_share_mass() {
        let space = ScenarioSpace::new(vec![0.2, 0.3, 0.1, 0.4]).unwrap();
        let x = Rv::new(vec![1.0, 0.0, 0.0, 2.0]);
        let alpha = 0.2;
        let q = tail_density(x.values(), space.weights(), alpha);
        // Both zero-valued atoms carry density 0.2 / (0.2 * 0.4).
        assert!((q[1] - 2.5).abs() < 1e-15 && (q[2] - 2.5).abs() < 1e-15);
        assert_eq!(q[0], 0.0);
        assert_eq!(q[3], 0.0);
        let mass: f64 = q.iter().zip(space.weights()).map(|(d, w)| d * w).sum();
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn value_at_risk_is_negated_quantile() {
        let (space, x) = uniform4();
        let var = RiskMeasure::value_at_risk(0.26).unwrap();
        assert_eq!(var.evaluate(&x, &space).unwrap(), 1.0);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(RiskMeasure::entropic(0.0).is_err());
        assert!(RiskMeasure::expected_shortfall(1.0).is_err());
        assert!(RiskMeasure::value_at_risk(-0.1).is_err());
    }
}
