//! Command-line front end for `hedgekit`.
//!
//! `hedgekit <risk|hedge|price|check>` reads a scenario file (or a Gaussian
//! mean/covariance pair), runs the requested computation and prints a JSON
//! report. Exit codes: 0 on success, 2 for usage and domain errors, 3 for
//! malformed input files.

pub mod input;
pub mod report;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use hedgekit::hedge::{
    gaussian_es_exp_objective, solve_gaussian_es, solve_gaussian_meanvar, solve_numeric,
};
use hedgekit::pricing::{check_arbitrage, check_complete, price_report};
use hedgekit::{
    ComposedPreference, ConstraintSet, GaussianMarket, GaussianObjective, HedgeSolution, Market, Method,
    RiskMeasure, SolverOptions, Utility,
};
use serde_json::Value;

pub use input::{parse_gaussian, parse_scenarios, parse_scenarios_str, write_scenarios, ParseError};
use report::{number, numbers, Report};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Missing or inconsistent flags.
    Usage(String),
    Domain(hedgekit::Error),
    Io(String),
    Parse(ParseError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => write!(f, "{m}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::Parse(e) => write!(f, "parse error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hedgekit::Error> for CliError {
    fn from(e: hedgekit::Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Evaluate ρ(u(·)) of the hedged position for fixed weights.
    Risk,
    /// Solve the hedging problem.
    Hedge,
    /// Indifference prices and super/sub-hedging bounds.
    Price,
    /// Arbitrage and completeness checks.
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureKind {
    Negexp,
    Entropic,
    Es,
    Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UtilityKind {
    Affine,
    Exp,
    Shortfall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintKind {
    None,
    Budget,
    Longonly,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodKind {
    Barrier,
    Subgradient,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "hedgekit", version, about = "Optimal hedging and indifference pricing on scenario markets")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file with header prob,dS_1..dS_n,H.
    #[arg(long, value_name = "FILE")]
    pub scenarios: Option<PathBuf>,
    /// Gaussian market from a mean vector file and a covariance file.
    #[arg(long, num_args = 2, value_names = ["MU", "SIGMA"])]
    pub gaussian: Option<Vec<PathBuf>>,
    #[arg(long, value_enum)]
    pub measure: Option<MeasureKind>,
    /// Level for es and var.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Risk aversion of the entropic measure.
    #[arg(long = "a")]
    pub a: Option<f64>,
    #[arg(long, value_enum, default_value = "affine")]
    pub utility: UtilityKind,
    /// Utility parameter: risk aversion for exp (default 1), intercept for
    /// affine (default 0).
    #[arg(long, allow_hyphen_values = true)]
    pub ua: Option<f64>,
    /// Slope of the affine utility.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long, value_enum, default_value = "none")]
    pub constraint: ConstraintKind,
    /// Lower bounds for the box constraint, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lo: Option<Vec<f64>>,
    /// Upper bounds for the box constraint, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub hi: Option<Vec<f64>>,
    /// Initial capital V0.
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "barrier")]
    pub method: MethodKind,
    /// Hedge weights for the risk command, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub weights: Option<Vec<f64>>,
    /// Write the report here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Scenarios(PathBuf),
    Gaussian { mu: PathBuf, sigma: PathBuf },
}

/// Validated run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub source: Source,
    pub measure: Option<RiskMeasure>,
    pub utility: Utility,
    pub constraint: ConstraintSet,
    pub options: SolverOptions,
    pub v0: f64,
    pub weights: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

fn required(value: Option<f64>, flag: &str, context: &str) -> Result<f64, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("{flag} is required for {context}")))
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let source = match (cli.scenarios, cli.gaussian) {
            (Some(path), None) => Source::Scenarios(path),
            (None, Some(paths)) => {
                let [mu, sigma]: [PathBuf; 2] = paths
                    .try_into()
                    .map_err(|_| CliError::Usage("--gaussian takes two files: MU SIGMA".into()))?;
                Source::Gaussian { mu, sigma }
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("--scenarios and --gaussian are mutually exclusive".into()))
            }
            (None, None) => return Err(CliError::Usage("one of --scenarios or --gaussian is required".into())),
        };

        let measure = match cli.measure {
            None if cli.command == Command::Check => None,
            None => return Err(CliError::Usage("--measure is required for this command".into())),
            Some(MeasureKind::Negexp) => Some(RiskMeasure::NegExpectation),
            Some(MeasureKind::Entropic) => Some(RiskMeasure::entropic(required(cli.a, "--a", "--measure entropic")?)?),
            Some(MeasureKind::Es) => {
                Some(RiskMeasure::expected_shortfall(required(cli.alpha, "--alpha", "--measure es")?)?)
            }
            Some(MeasureKind::Var) => {
                Some(RiskMeasure::value_at_risk(required(cli.alpha, "--alpha", "--measure var")?)?)
            }
        };

        let utility = match cli.utility {
            UtilityKind::Affine => Utility::affine(cli.ua.unwrap_or(0.0), cli.b)?,
            UtilityKind::Exp => Utility::exponential(cli.ua.unwrap_or(1.0))?,
            UtilityKind::Shortfall => Utility::Shortfall,
        };

        let constraint = match cli.constraint {
            ConstraintKind::None => ConstraintSet::Unconstrained,
            ConstraintKind::Budget => ConstraintSet::BudgetHyperplane,
            ConstraintKind::Longonly => ConstraintSet::LongOnlySimplex,
            ConstraintKind::Box => {
                let lo = cli.lo.ok_or_else(|| CliError::Usage("--lo is required for --constraint box".into()))?;
                let hi = cli.hi.ok_or_else(|| CliError::Usage("--hi is required for --constraint box".into()))?;
                ConstraintSet::boxed(lo, hi)?
            }
        };

        let options = SolverOptions {
            seed: cli.seed,
            method: match cli.method {
                MethodKind::Barrier => Method::Barrier,
                MethodKind::Subgradient => Method::Subgradient,
            },
            ..SolverOptions::default()
        };

        Ok(Self {
            command: cli.command,
            source,
            measure,
            utility,
            constraint,
            options,
            v0: cli.v0,
            weights: cli.weights,
            out: cli.out,
        })
    }

    fn measure(&self) -> RiskMeasure {
        self.measure.expect("validated for every command but check")
    }

    fn preference(&self) -> Result<ComposedPreference, CliError> {
        Ok(ComposedPreference::new(self.measure(), self.utility)?)
    }
}

/// Runs a validated configuration and returns the JSON report.
pub fn run(config: &RunConfig) -> Result<String, CliError> {
    match &config.source {
        Source::Scenarios(path) => run_scenarios(config, &parse_scenarios(path, config.v0)?),
        Source::Gaussian { mu, sigma } => {
            let (mean, cov) = parse_gaussian(mu, sigma)?;
            run_gaussian(config, &GaussianMarket::from_rows(mean, &cov)?)
        }
    }
}

fn solution_report(sol: &HedgeSolution) -> Report {
    Report::new()
        .with("h", numbers(&sol.h))
        .with("value", number(sol.value))
        .with("lambda", sol.multiplier.map_or(Value::Null, number))
        .with("residual", number(sol.residual))
        .with("witness_density", sol.witness.as_ref().map_or(Value::Null, |q| numbers(q.density())))
}

fn run_scenarios(config: &RunConfig, market: &Market) -> Result<String, CliError> {
    let report = match config.command {
        Command::Risk => {
            let n = market.num_assets();
            let h = config.weights.clone().unwrap_or_else(|| vec![0.0; n]);
            // Value at risk has no composed dual, so evaluate it directly.
            let position = market.hedged_position(&h)?;
            let value = config.measure().evaluate(&config.utility.apply(&position), market.space())?;
            Report::new().with("value", number(value))
        }
        Command::Hedge => {
            let sol = solve_numeric(&config.preference()?, market, &config.constraint, &config.options)?;
            solution_report(&sol)
        }
        Command::Price => {
            let r = price_report(&config.preference()?, market, &config.constraint, &config.options)?;
            Report::new()
                .with("sp", number(r.sp))
                .with("bp", number(r.bp))
                .with("superhedge", number(r.superhedge))
                .with("subhedge", number(r.subhedge))
                .with("arbitrage_free", Value::Bool(r.arbitrage_free))
                .with("complete", Value::Bool(r.complete))
        }
        Command::Check => Report::new()
            .with("arbitrage_free", Value::Bool(check_arbitrage(market)?))
            .with("complete", Value::Bool(check_complete(market)?)),
    };
    Ok(report.render())
}

/// Closed-form pairs available for Gaussian markets.
enum GaussianPair {
    MeanVar { a: f64, objective: GaussianObjective },
    EsExp { a: f64, alpha: f64 },
}

fn gaussian_pair(config: &RunConfig) -> Result<GaussianPair, CliError> {
    let identity = Utility::Affine { a: 0.0, b: 1.0 };
    match (config.measure(), config.utility) {
        (RiskMeasure::NegExpectation, Utility::Exponential { a }) => {
            Ok(GaussianPair::MeanVar { a, objective: GaussianObjective::NegExpExponential })
        }
        (RiskMeasure::Entropic { a }, u) if u == identity => {
            Ok(GaussianPair::MeanVar { a, objective: GaussianObjective::EntropicIdentity })
        }
        (RiskMeasure::ExpectedShortfall { alpha }, Utility::Exponential { a }) => Ok(GaussianPair::EsExp { a, alpha }),
        _ => Err(CliError::Usage(
            "--gaussian supports --measure negexp --utility exp, --measure entropic --utility affine, \
             and --measure es --utility exp"
                .into(),
        )),
    }
}

fn run_gaussian(config: &RunConfig, g: &GaussianMarket) -> Result<String, CliError> {
    if matches!(config.command, Command::Price | Command::Check) {
        return Err(CliError::Usage("price and check need --scenarios".into()));
    }
    if config.constraint != ConstraintSet::BudgetHyperplane {
        return Err(CliError::Usage("--gaussian requires --constraint budget".into()));
    }
    let pair = gaussian_pair(config)?;
    let report = match config.command {
        Command::Risk => {
            let n = g.dim();
            let h = config.weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
            ConstraintSet::BudgetHyperplane.check_feasible(&h)?;
            let value = match pair {
                GaussianPair::MeanVar { a, objective } => {
                    let (m, s) = g.moments(&h)?;
                    let entropic = -m + 0.5 * a * s * s;
                    match objective {
                        GaussianObjective::NegExpExponential => (a * entropic).exp_m1(),
                        GaussianObjective::EntropicIdentity => entropic,
                    }
                }
                GaussianPair::EsExp { a, alpha } => gaussian_es_exp_objective(&h, g, a, alpha)?,
            };
            Report::new().with("value", number(value))
        }
        _ => {
            let sol = match pair {
                GaussianPair::MeanVar { a, objective } => solve_gaussian_meanvar(g, a, objective)?,
                GaussianPair::EsExp { a, alpha } => solve_gaussian_es(g, a, alpha)?,
            };
            solution_report(&sol)
        }
    };
    Ok(report.render())
}
