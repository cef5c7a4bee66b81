//! Utilities and the composed functional `ρ_u = ρ ∘ u`.
//!
//! The composition is convex, monotone and (when `u(0) = 0`) normalized. Its
//! penalty is obtained by an inner minimization over the dual set of `ρ`, and
//! its subgradients are products of a maximizing measure for `ρ` at `u(X)`
//! with a pointwise supergradient of `u`.

pub(crate) mod penalty;

use crate::error::{Error, Result};
use crate::risk::RiskMeasure;
use crate::scenario::{Measure, Rv, ScenarioSpace};

/// A concave, nondecreasing utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    /// `u(x) = a + b x`, `b > 0`.
    Affine { a: f64, b: f64 },
    /// `u(x) = 1 - exp(-a x)`, `a > 0`.
    Exponential { a: f64 },
    /// `u(x) = min(x, 0)`.
    Shortfall,
}

impl Utility {
    pub const IDENTITY: Utility = Utility::Affine { a: 0.0, b: 1.0 };

    pub fn affine(a: f64, b: f64) -> Result<Self> {
        let u = Utility::Affine { a, b };
        u.validate()?;
        Ok(u)
    }

    pub fn exponential(a: f64) -> Result<Self> {
        let u = Utility::Exponential { a };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Utility::Affine { a, b } => {
                if b > 0.0 && b.is_finite() && a.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "affine utility needs finite intercept and positive slope, got a={a}, b={b}"
                    )))
                }
            }
            Utility::Exponential { a } => {
                if a > 0.0 && a.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "exponential utility needs positive risk aversion, got {a}"
                    )))
                }
            }
            Utility::Shortfall => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Utility::Affine { a, b } => a + b * x,
            Utility::Exponential { a } => -(-a * x).exp_m1(),
            Utility::Shortfall => x.min(0.0),
        }
    }

    /// Selected supergradient of `u` at `x`. The shortfall kink at zero
    /// resolves to 1.
    pub fn slope(&self, x: f64) -> f64 {
        match *self {
            Utility::Affine { b, .. } => b,
            Utility::Exponential { a } => a * (-a * x).exp(),
            Utility::Shortfall => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Conjugate `u*(y) = sup_x { u(x) - x y }`, possibly `+∞`.
    pub fn conjugate(&self, y: f64) -> f64 {
        match *self {
            Utility::Affine { a, b } => {
                if y == b {
                    a
                } else {
                    f64::INFINITY
                }
            }
            Utility::Exponential { a } => {
                if y < 0.0 {
                    f64::INFINITY
                } else if y == 0.0 {
                    1.0
                } else {
                    let r = y / a;
                    1.0 - r + r * r.ln()
                }
            }
            Utility::Shortfall => {
                if (0.0..=1.0).contains(&y) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn apply(&self, x: &Rv) -> Rv {
        x.map(|v| self.eval(v))
    }
}

/// The composed preference functional `ρ ∘ u` for a convex `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComposedPreference {
    rho: RiskMeasure,
    u: Utility,
}

impl ComposedPreference {
    pub fn new(rho: RiskMeasure, u: Utility) -> Result<Self> {
        rho.validate()?;
        rho.require_convex()?;
        u.validate()?;
        Ok(Self { rho, u })
    }

    pub fn rho(&self) -> RiskMeasure {
        self.rho
    }

    pub fn utility(&self) -> Utility {
        self.u
    }

    /// `ρ(u(X))`.
    pub fn evaluate(&self, x: &Rv, space: &ScenarioSpace) -> Result<f64> {
        space.check_len(x.len())?;
        self.rho.evaluate(&self.u.apply(x), space)
    }

    /// Penalty `min_Y { α_ρ(Y) + E_Y[u*(dQ/dY)] }` of a nonnegative measure.
    pub fn penalty(&self, q: &Measure, space: &ScenarioSpace) -> Result<f64> {
        space.check_len(q.len())?;
        Ok(penalty::composed_penalty(
            self.rho,
            self.u,
            q.density(),
            space.weights(),
        ))
    }

    /// A subgradient `Q = Y · u'(X)` with `Y` the selected maximizer for `ρ`
    /// at `u(X)`. The result is nonnegative but generally not normalized.
    pub fn subgradient(&self, x: &Rv, space: &ScenarioSpace) -> Result<Measure> {
        space.check_len(x.len())?;
        let y = self.rho.subgradient(&self.u.apply(x), space)?;
        let density = y
            .density()
            .iter()
            .zip(x.values())
            .map(|(&y, &x)| y * self.u.slope(x))
            .collect();
        Ok(Measure::from_density_unchecked(density))
    }

    /// `ρ_u(X) - (E[-X·Q] - α_{ρ_u}(Q))`; nonnegative by weak duality and
    /// `+∞` when `Q` lies outside the penalty's domain.
    pub fn duality_gap(&self, x: &Rv, q: &Measure, space: &ScenarioSpace) -> Result<f64> {
        let value = self.evaluate(x, space)?;
        let alpha = self.penalty(q, space)?;
        if alpha == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let paired = -space.expectation(x, Some(q))?;
        Ok(value - (paired - alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pref(rho: RiskMeasure, u: Utility) -> ComposedPreference {
        ComposedPreference::new(rho, u).unwrap()
    }

    #[test]
    fn utility_values() {
        assert_eq!(Utility::Exponential { a: 2.3 }.eval(0.0), 0.0);
        assert_eq!(Utility::Shortfall.eval(-3.0), -3.0);
        assert_eq!(Utility::Shortfall.eval(2.0), 0.0);
        assert_eq!(Utility::affine(0.0, 2.0).unwrap().eval(1.5), 3.0);
        assert!(Utility::affine(0.0, 0.0).is_err());
        assert!(Utility::exponential(-1.0).is_err());
    }

    #[test]
    fn shortfall_conjugate_is_unit_interval_indicator() {
        let u = Utility::Shortfall;
        assert_eq!(u.conjugate(0.5), 0.0);
        assert_eq!(u.conjugate(1.2), f64::INFINITY);
        for (y, expected) in [
            (-0.5, f64::INFINITY),
            (0.0, 0.0),
            (0.25, 0.0),
            (1.0, 0.0),
            (1.5, f64::INFINITY),
        ] {
            assert_eq!(u.conjugate(y), expected);
        }
    }

    #[test]
    fn exponential_conjugate_matches_grid_supremum() {
        // Oracle: sup over a fine x-grid of u(x) - x y.
        let u = Utility::Exponential { a: 1.0 };
        for y in [0.3, 1.0, 2.5] {
            let sup = (-40_000..=40_000)
                .map(|j| {
                    let x = j as f64 * 2.5e-4;
                    u.eval(x) - x * y
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((u.conjugate(y) - sup).abs() < 1e-6, "y={y}");
        }
        // At y = 0 the supremum 1 is only approached as x grows.
        assert_eq!(u.conjugate(0.0), 1.0);
        assert!(u.conjugate(1.0).abs() < 1e-15);
        assert_eq!(u.conjugate(-0.1), f64::INFINITY);
    }

    #[test]
    fn affine_conjugate_reproduces_utility() {
        // -u(x) = sup_y { -x y - u*(y) } only holds with u*(b) = a.
        let u = Utility::Affine { a: 0.7, b: 1.3 };
        let x = 2.0;
        assert!((-u.eval(x) - (-x * 1.3 - u.conjugate(1.3))).abs() < 1e-15);
        assert_eq!(u.conjugate(1.0), f64::INFINITY);
    }

    #[test]
    fn composed_evaluation_examples() {
        let space4 = ScenarioSpace::uniform(4).unwrap();
        let x = Rv::new(vec![-2.0, -1.0, 0.0, 1.0]);
        let p = pref(RiskMeasure::NegExpectation, Utility::Exponential { a: 1.0 });
        assert_eq!(p.evaluate(&Rv::constant(0.0, 4), &space4).unwrap(), 0.0);
        let p = pref(RiskMeasure::ExpectedShortfall { alpha: 0.5 }, Utility::IDENTITY);
        assert!((p.evaluate(&x, &space4).unwrap() - 1.5).abs() < 1e-15);
        let space2 = ScenarioSpace::uniform(2).unwrap();
        let p = pref(RiskMeasure::NegExpectation, Utility::Shortfall);
        assert_eq!(p.evaluate(&Rv::new(vec![-2.0, 1.0]), &space2).unwrap(), 1.0);
    }

    #[test]
    fn rejects_value_at_risk() {
        assert!(matches!(
            ComposedPreference::new(RiskMeasure::ValueAtRisk { alpha: 0.1 }, Utility::Shortfall),
            Err(Error::NonConvexMeasure)
        ));
    }

    #[test]
    fn subgradient_examples() {
        let space2 = ScenarioSpace::uniform(2).unwrap();
        let p = pref(RiskMeasure::NegExpectation, Utility::IDENTITY);
        let q = p.subgradient(&Rv::new(vec![3.0, -7.0]), &space2).unwrap();
        assert_eq!(q.density(), &[1.0, 1.0]);

        let p = pref(RiskMeasure::NegExpectation, Utility::Shortfall);
        let q = p.subgradient(&Rv::new(vec![-2.0, 1.0]), &space2).unwrap();
        assert_eq!(q.density(), &[1.0, 0.0]);

        let space4 = ScenarioSpace::uniform(4).unwrap();
        let p = pref(
            RiskMeasure::ExpectedShortfall { alpha: 0.5 },
            Utility::Exponential { a: 1.0 },
        );
        let q = p
            .subgradient(&Rv::new(vec![-2.0, -1.0, 0.0, 1.0]), &space4)
            .unwrap();
        let e = std::f64::consts::E;
        let expected = [2.0 * e * e, 2.0 * e, 0.0, 0.0];
        for (a, b) in q.density().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_examples() {
        let space4 = ScenarioSpace::uniform(4).unwrap();
        let p = pref(RiskMeasure::NegExpectation, Utility::Shortfall);
        assert_eq!(p.penalty(&Measure::reference(4), &space4).unwrap(), 0.0);

        let p = pref(RiskMeasure::ExpectedShortfall { alpha: 0.5 }, Utility::Shortfall);
        let q = Measure::new(vec![0.5, 0.5, 1.5, 0.0]).unwrap();
        assert_eq!(p.penalty(&q, &space4).unwrap(), 0.0);
        // Density above the cap cannot be dominated by any admissible Y.
        let q = Measure::new(vec![2.5, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.penalty(&q, &space4).unwrap(), f64::INFINITY);
        // Mass above one cannot be dominated either.
        let q = Measure::new(vec![1.5, 1.5, 1.0, 0.5]).unwrap();
        assert_eq!(p.penalty(&q, &space4).unwrap(), f64::INFINITY);
    }

    #[test]
    fn duality_gap_closes_at_subgradient() {
        let space = ScenarioSpace::new(vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let x = Rv::new(vec![0.4, -1.2, 0.9, -0.3, 0.0]);
        let rhos = [
            RiskMeasure::NegExpectation,
            RiskMeasure::Entropic { a: 0.8 },
            RiskMeasure::ExpectedShortfall { alpha: 0.3 },
        ];
        let us = [
            Utility::Affine { a: 0.4, b: 1.7 },
            Utility::Exponential { a: 1.3 },
            Utility::Shortfall,
        ];
        for rho in rhos {
            for u in us {
                let p = pref(rho, u);
                let q = p.subgradient(&x, &space).unwrap();
                let gap = p.duality_gap(&x, &q, &space).unwrap();
                assert!(gap.abs() < 1e-9, "{rho:?} {u:?}: gap {gap}");
            }
        }
    }

    #[test]
    fn infeasible_measure_gives_infinite_gap() {
        let space = ScenarioSpace::uniform(2).unwrap();
        let p = pref(RiskMeasure::ExpectedShortfall { alpha: 0.5 }, Utility::IDENTITY);
        let q = Measure::new(vec![3.0, 0.0]).unwrap();
        let gap = p
            .duality_gap(&Rv::new(vec![1.0, -1.0]), &q, &space)
            .unwrap();
        assert_eq!(gap, f64::INFINITY);
    }
}
