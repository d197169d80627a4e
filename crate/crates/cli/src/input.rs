//! Readers for model, quote, grid, rate and config files.

use std::fs;
use std::path::Path;

use jumpexp_core::calibration::{CalibConfig, Quote};
use jumpexp_core::{ModelSpec, PiecewiseCurve};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::usage(path.display().to_string(), e))
}

fn parse_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::usage(format!("{}:{}", path.display(), e.path()), e.inner()))
}

pub fn model(path: &Path) -> CliResult<ModelSpec> {
    let text = read(path)?;
    ModelSpec::from_json_str(&text).map_err(|e| CliError::usage(format!("{}:{}", path.display(), e.path), e.message))
}

pub fn config(path: Option<&Path>) -> CliResult<CalibConfig> {
    match path {
        Some(p) => parse_json(p),
        None => Ok(CalibConfig::default()),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CurveOrFlat {
    Flat(f64),
    Curve(PiecewiseCurve),
}

impl CurveOrFlat {
    fn into_curve(self) -> PiecewiseCurve {
        match self {
            CurveOrFlat::Flat(v) => PiecewiseCurve::constant(v),
            CurveOrFlat::Curve(c) => c,
        }
    }
}

/// `{"rate": 0.01, "dividend": {"times": [...], "values": [...]}}`; either
/// entry may be a number or a curve, and a missing entry means zero.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateFile {
    #[serde(default)]
    rate: Option<CurveOrFlat>,
    #[serde(default)]
    dividend: Option<CurveOrFlat>,
}

pub fn rates(path: Option<&Path>) -> CliResult<(PiecewiseCurve, PiecewiseCurve)> {
    let file = match path {
        Some(p) => parse_json(p)?,
        None => RateFile {
            rate: None,
            dividend: None,
        },
    };
    let zero = || PiecewiseCurve::constant(0.0);
    Ok((
        file.rate.map_or_else(zero, CurveOrFlat::into_curve),
        file.dividend.map_or_else(zero, CurveOrFlat::into_curve),
    ))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                CliError::usage(format!("{}:line {line}", path.display()), e)
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct QuoteRow {
    maturity_years: f64,
    strike: f64,
    implied_vol: f64,
}

pub fn quotes(path: &Path) -> CliResult<Vec<Quote>> {
    Ok(read_csv::<QuoteRow>(path)?
        .into_iter()
        .map(|r| Quote {
            maturity: r.maturity_years,
            strike: r.strike,
            implied_vol: r.implied_vol,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct GridRow {
    pub maturity_years: f64,
    pub relative_strike: f64,
}

pub fn grid(path: &Path) -> CliResult<Vec<GridRow>> {
    let rows: Vec<GridRow> = read_csv(path)?;
    for (i, r) in rows.iter().enumerate() {
        if !(r.maturity_years > 0.0 && r.relative_strike > 0.0) {
            return Err(CliError::usage(
                format!("{}:row {}", path.display(), i + 1),
                "maturity_years and relative_strike must be > 0",
            ));
        }
    }
    Ok(rows)
}
