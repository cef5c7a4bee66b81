//! Finite probability spaces and the random variables that live on them.
//!
//! Every risk computation in the crate runs on a [`ScenarioSpace`]: a finite
//! set of scenarios with strictly positive probabilities. Random variables
//! are plain value vectors ([`Rv`]) and measures absolutely continuous with
//! respect to the reference probability are stored through their density
//! ([`Measure`]).

use crate::error::{Error, Result};

/// Tolerance on the input weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Tolerance on the total mass of a probability measure.
pub const PROBABILITY_TOL: f64 = 1e-10;

// Guard against cumulative-sum rounding when scanning for quantiles.
const CUMULATIVE_SLACK: f64 = 1e-13;

/// A finite probability space with strictly positive scenario weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpace {
    weights: Vec<f64>,
}

impl ScenarioSpace {
    /// Validates the weights and renormalizes them so that they sum to
    /// exactly 1 in floating point. Already normalized weights are kept
    /// unchanged, which makes the normalization idempotent.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (index, &weight) in weights.iter().enumerate() {
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(Error::NonPositiveWeight { index, weight });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { weights: normalize(weights, sum) })
    }

    /// Equally weighted space with `k` scenarios.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptySpace);
        }
        Ok(Self {
            weights: vec![1.0 / k as f64; k],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }

    /// `E_Q[X]`, or `E[X]` under the reference probability when `q` is `None`.
    pub fn expectation(&self, x: &Rv, q: Option<&Measure>) -> Result<f64> {
        self.check_len(x.len())?;
        match q {
            None => Ok(dot3(&self.weights, x.values(), None)),
            Some(q) => {
                self.check_len(q.len())?;
                Ok(dot3(&self.weights, x.values(), Some(q.density())))
            }
        }
    }

    /// Left quantile `inf { x : F_X(x) >= u }`.
    pub fn quantile(&self, x: &Rv, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::LevelOutOfRange(u));
        }
        self.check_len(x.len())?;
        let order = sorted_order(x.values());
        let mut cumulative = 0.0;
        for &i in &order {
            cumulative += self.weights[i];
            if cumulative + CUMULATIVE_SLACK >= u {
                return Ok(x.values()[i]);
            }
        }
        // Only reachable through rounding; the largest atom carries F = 1.
        Ok(x.values()[*order.last().expect("non-empty space")])
    }

    /// Essential infimum, i.e. the smallest scenario value.
    pub fn ess_inf(&self, x: &Rv) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(x.values().iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Essential supremum, i.e. the largest scenario value.
    pub fn ess_sup(&self, x: &Rv) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(x.values().iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Total mass `E[dQ/dP]` of a measure.
    pub fn mass(&self, q: &Measure) -> Result<f64> {
        self.check_len(q.len())?;
        Ok(dot3(&self.weights, q.density(), None))
    }
}

fn dot3(w: &[f64], x: &[f64], d: Option<&[f64]>) -> f64 {
    match d {
        None => w.iter().zip(x).map(|(w, x)| w * x).sum(),
        Some(d) => w
            .iter()
            .zip(x)
            .zip(d)
            .map(|((w, x), d)| w * x * d)
            .sum(),
    }
}

/// Indices sorting `values` ascending; ties keep scenario order.
pub(crate) fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// A random variable on a finite space: one value per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Rv(Vec<f64>);

impl Rv {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(value: f64, k: usize) -> Self {
        Self(vec![value; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Rv {
        Rv(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn add_scalar(&self, c: f64) -> Rv {
        self.map(|x| x + c)
    }

    pub fn scale(&self, c: f64) -> Rv {
        self.map(|x| c * x)
    }

    /// `a·self + b·other`, scenariowise.
    pub fn combine(&self, a: f64, other: &Rv, b: f64) -> Rv {
        assert_eq!(self.len(), other.len(), "random variables on different spaces");
        Rv(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(x, y)| a * x + b * y)
            .collect())
    }
}

impl From<Vec<f64>> for Rv {
    fn from(values: Vec<f64>) -> Self {
        Rv(values)
    }
}

/// A nonnegative measure given by its density with respect to the reference
/// probability. Probability measures are those with unit total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    density: Vec<f64>,
}

impl Measure {
    pub fn new(density: Vec<f64>) -> Result<Self> {
        if let Some(index) = density.iter().position(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::NotNonnegative { index });
        }
        Ok(Self { density })
    }

    /// The reference probability itself (density one everywhere).
    pub fn reference(k: usize) -> Self {
        Self {
            density: vec![1.0; k],
        }
    }

    pub(crate) fn from_density_unchecked(density: Vec<f64>) -> Self {
        debug_assert!(density.iter().all(|d| *d >= 0.0));
        Self { density }
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn into_density(self) -> Vec<f64> {
        self.density
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn is_probability(&self, space: &ScenarioSpace) -> bool {
        space
            .mass(self)
            .map(|m| (m - 1.0).abs() <= PROBABILITY_TOL)
            .unwrap_or(false)
    }

    pub(crate) fn require_probability(&self, space: &ScenarioSpace) -> Result<()> {
        let mass = space.mass(self)?;
        if (mass - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::NotProbability { mass });
        }
        Ok(())
    }
}

/// Scales by `1/sum`, then sets the last weight to one minus the sum of
/// the others so that the left-to-right floating-point sum is exactly 1.
fn normalize(mut weights: Vec<f64>, sum: f64) -> Vec<f64> {
    if sum == 1.0 {
        return weights;
    }
    weights.iter_mut().for_each(|w| *w /= sum);
    let k = weights.len();
    let partial: f64 = weights[..k - 1].iter().sum();
    let last = 1.0 - partial;
    if last > 0.0 {
        weights[k - 1] = last;
    }
    weights
}
