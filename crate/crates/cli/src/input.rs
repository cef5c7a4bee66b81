//! Scenario and Gaussian parameter files.
//!
//! A scenario file is a comma-separated table with header
//! `prob,dS_1,...,dS_n,H` and one row per scenario.

use std::fmt;
use std::fs;
use std::path::Path;

use hedgekit::{Market, Rv, ScenarioSpace};

use crate::CliError;

/// Malformed input, located by 1-based line and column name when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub file: String,
    pub line: Option<usize>,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(line) = self.line {
            write!(f, ", line {line}")?;
        }
        if let Some(column) = &self.column {
            write!(f, ", column {column}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Row-major numeric table read from a file.
pub type Table = Vec<Vec<f64>>;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn parse_number(text: &str, file: &str, line: usize, column: &str) -> Result<f64, ParseError> {
    let trimmed = text.trim();
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError {
            file: file.to_string(),
            line: Some(line),
            column: Some(column.to_string()),
            message: format!("expected a finite decimal number, found {trimmed:?}"),
        }),
    }
}

fn csv_error(file: &str, e: csv::Error) -> ParseError {
    let line = e.position().map(|p| p.line() as usize);
    ParseError { file: file.to_string(), line, column: None, message: e.to_string() }
}

/// Reads a scenario file into a market with initial capital `v0`.
pub fn parse_scenarios(path: &Path, v0: f64) -> Result<Market, CliError> {
    let text = read(path)?;
    parse_scenarios_str(&text, &path.display().to_string(), v0)
}

/// [`parse_scenarios`] on in-memory text; `name` labels diagnostics.
pub fn parse_scenarios_str(text: &str, name: &str, v0: f64) -> Result<Market, CliError> {
    let located = |line, column: Option<&str>, message: String| ParseError {
        file: name.to_string(),
        line,
        column: column.map(str::to_string),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(name, e))?
        .iter()
        .map(str::to_string)
        .collect();

    if header.first().map(String::as_str) != Some("prob") {
        return Err(located(Some(1), Some("prob"), "first column must be named prob".into()).into());
    }
    if header.last().map(String::as_str) != Some("H") || header.len() < 2 {
        return Err(located(Some(1), Some("H"), "missing claim column H (must be last)".into()).into());
    }
    let n = header.len() - 2;
    if n == 0 {
        return Err(located(Some(1), Some("dS_1"), "at least one price column dS_1 is required".into()).into());
    }
    for (j, name) in header[1..=n].iter().enumerate() {
        let expected = format!("dS_{}", j + 1);
        if *name != expected {
            return Err(located(Some(1), Some(&expected), format!("expected column {expected}, found {name:?}")).into());
        }
    }

    let mut weights = Vec::new();
    let mut rows = Vec::new();
    let mut claim = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(name, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(located(
                Some(line),
                None,
                format!("expected {} fields, found {}", header.len(), record.len()),
            )
            .into());
        }
        weights.push(parse_number(&record[0], name, line, "prob")?);
        rows.push(
            (1..=n)
                .map(|j| parse_number(&record[j], name, line, &header[j]))
                .collect::<Result<Vec<_>, _>>()?,
        );
        claim.push(parse_number(&record[n + 1], name, line, "H")?);
    }
    if rows.is_empty() {
        return Err(located(None, None, "no scenario rows".into()).into());
    }
    let space = ScenarioSpace::new(weights)?;
    Ok(Market::from_rows(space, &rows, Rv::new(claim), v0)?)
}

/// Serializes a market in the scenario file format. Values are written in
/// shortest round-trip form, so parsing the output reproduces them.
pub fn write_scenarios(market: &Market) -> String {
    let n = market.num_assets();
    let mut out = String::from("prob");
    for j in 1..=n {
        out.push_str(&format!(",dS_{j}"));
    }
    out.push_str(",H\n");
    for i in 0..market.num_scenarios() {
        out.push_str(&market.space().weights()[i].to_string());
        for j in 0..n {
            out.push(',');
            out.push_str(&market.delta_s()[(i, j)].to_string());
        }
        out.push(',');
        out.push_str(&market.claim().values()[i].to_string());
        out.push('\n');
    }
    out
}

/// Reads a headerless numeric table, one row per line.
pub fn parse_table_str(text: &str, name: &str) -> Result<Table, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(name, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(
            record
                .iter()
                .enumerate()
                .map(|(j, f)| parse_number(f, name, line, &(j + 1).to_string()))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(rows)
}

/// Mean vector and covariance matrix for a Gaussian market. The mean file
/// may hold the entries on one line or one per line.
pub fn parse_gaussian(mu: &Path, sigma: &Path) -> Result<(Vec<f64>, Table), CliError> {
    let mu_name = mu.display().to_string();
    let mean: Vec<f64> = parse_table_str(&read(mu)?, &mu_name)?.into_iter().flatten().collect();
    let sigma_name = sigma.display().to_string();
    let cov = parse_table_str(&read(sigma)?, &sigma_name)?;
    let n = mean.len();
    if n == 0 {
        return Err(ParseError { file: mu_name, line: None, column: None, message: "empty mean vector".into() }.into());
    }
    if cov.len() != n {
        return Err(ParseError {
            file: sigma_name,
            line: None,
            column: None,
            message: format!("expected {n} rows to match the mean vector, found {}", cov.len()),
        }
        .into());
    }
    if let Some(i) = cov.iter().position(|r| r.len() != n) {
        return Err(ParseError {
            file: sigma_name,
            line: Some(i + 1),
            column: None,
            message: format!("expected {n} entries, found {}", cov[i].len()),
        }
        .into());
    }
    Ok((mean, cov))
}
