//! Optimal hedging under variational preferences on finite scenario spaces.
//!
//! The crate minimizes a convex risk measure composed with a concave utility
//! over constrained hedge portfolios, exposes the dual machinery (penalty
//! functions and subgradients of the composition), verifies optimality via
//! normal cones, and computes indifference prices together with
//! super/sub-hedging bounds.
//!
//! Module map:
//! - [`scenario`]: finite probability spaces, random variables, measures
//! - [`risk`]: negative expectation, entropic, expected shortfall, value at risk
//! - [`preference`]: utilities and the composed functional `ρ ∘ u`
//! - [`market`]: price variations, claims, constraint sets
//! - [`hedge`]: Gaussian closed forms, numerical solver, optimality check
//! - [`pricing`]: indifference prices, hedging LPs, martingale measures
//! - [`lp`]: dense simplex used by pricing and certificate search

pub mod error;
pub mod hedge;
pub mod lp;
pub mod market;
pub mod preference;
pub mod pricing;
pub mod risk;
pub mod scenario;

pub use error::{Error, Result};
pub use hedge::{
    GaussianMarket, GaussianObjective, HedgeSolution, Method, Optimality, SolverOptions,
};
pub use market::{ConstraintSet, Market};
pub use preference::{ComposedPreference, Utility};
pub use pricing::PriceReport;
pub use risk::{DualSet, RiskMeasure};
pub use scenario::{Measure, Rv, ScenarioSpace};
