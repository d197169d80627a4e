use std::fs;
use std::path::{Path, PathBuf};

use jumpexp_core::analytic::{implied_vol, vol_vega, DealTerms};
use jumpexp_core::calibration::{bootstrap_calibrate, VolSurface};
use jumpexp_core::montecarlo::{mc_price_strip, path_steps};
use jumpexp_core::{
    approx_price, diagnostics as model_diagnostics, CalibrationResult, Error, MarketEnv, McConfig, ModelFile,
    ModelSpec, Payoff, PayoffKind,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::{input, PayoffArg};

fn write_output(path: Option<&Path>, contents: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| CliError::Output(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(contents)
                .map_err(|e| CliError::Output(format!("stdout: {e}")))
        }
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let out = (|| {
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok::<_, csv::Error>(())
    })();
    out.map_err(|e| CliError::Output(e.to_string()))?;
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Out-of-the-money vanilla at `strike`: a put below the forward, a call
/// otherwise.
pub fn otm_payoff(model: &ModelSpec, strike: f64, maturity: f64) -> Result<Payoff, Error> {
    if strike < model.env().forward(maturity) {
        Payoff::put(strike, maturity)
    } else {
        Payoff::call(strike, maturity)
    }
}

fn expansion_vol(model: &ModelSpec, payoff: &Payoff) -> Result<f64, Error> {
    let price = approx_price(model, payoff)?.total;
    implied_vol(
        price,
        &DealTerms::new(model, *payoff),
        model.env().forward(payoff.maturity()),
    )
}

#[derive(Serialize)]
struct PriceRecord {
    payoff: PayoffKind,
    strike: f64,
    maturity: f64,
    price: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    merton_term: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diffusion_correction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jump_correction: Option<f64>,
}

pub fn price(model: &Path, payoff: PayoffArg, strike: f64, maturity: f64, breakdown: bool) -> CliResult<()> {
    let model = input::model(model)?;
    let kind = match payoff {
        PayoffArg::Call => PayoffKind::Call,
        PayoffArg::Put => PayoffKind::Put,
        PayoffArg::Digital => PayoffKind::DigitalCall,
    };
    let p = approx_price(&model, &Payoff::new(kind, strike, maturity)?)?;
    let record = PriceRecord {
        payoff: kind,
        strike,
        maturity,
        price: p.total,
        merton_term: breakdown.then_some(p.merton_term),
        diffusion_correction: breakdown.then_some(p.diffusion_correction),
        jump_correction: breakdown.then_some(p.jump_correction),
    };
    println!(
        "{}",
        serde_json::to_string(&record).map_err(|e| CliError::Output(e.to_string()))?
    );
    Ok(())
}

pub fn smile(model: &Path, maturities: &[f64], strikes: &[f64], out: Option<&Path>) -> CliResult<()> {
    let model = input::model(model)?;
    if let Some(bad) = maturities.iter().chain(strikes).find(|v| !(**v > 0.0)) {
        return Err(CliError::usage(
            "--maturities/--strikes",
            format!("values must be > 0, got {bad}"),
        ));
    }
    let spot = model.env().spot();
    let header: Vec<String> = std::iter::once("maturity_years".to_string())
        .chain(strikes.iter().map(|k| k.to_string()))
        .collect();
    let mut rows = Vec::with_capacity(maturities.len());
    for &t in maturities {
        let mut row = vec![t.to_string()];
        for &k in strikes {
            let vol = otm_payoff(&model, spot * k, t).and_then(|p| expansion_vol(&model, &p));
            match vol {
                Ok(v) => row.push(v.to_string()),
                Err(e) => {
                    eprintln!("warning: maturity {t} relative strike {k}: {e}");
                    row.push(cell(None));
                }
            }
        }
        rows.push(row);
    }
    write_output(out, &csv_bytes(&header, &rows)?)
}

pub fn validate(
    model: &Path,
    grid: &Path,
    paths: u64,
    steps: u32,
    seed: u64,
    budget: u128,
    out: Option<&Path>,
) -> CliResult<()> {
    let model = input::model(model)?;
    let rows = input::grid(grid)?;
    if paths == 0 || steps == 0 {
        return Err(CliError::usage("--paths/--steps", "must be >= 1"));
    }
    let cfg = McConfig {
        n_paths: paths,
        n_steps_per_year: steps,
        seed,
        budget,
        ..Default::default()
    };
    let mut maturities: Vec<f64> = Vec::new();
    for r in &rows {
        if !maturities.contains(&r.maturity_years) {
            maturities.push(r.maturity_years);
        }
    }
    let requested: u128 = maturities.iter().map(|&t| path_steps(&model, t, &cfg)).sum();
    if requested > budget {
        return Err(Error::BudgetExceeded { requested, budget }.into());
    }

    let spot = model.env().spot();
    let mut cells = vec![Vec::new(); rows.len()];
    for &t in &maturities {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].maturity_years == t).collect();
        let payoffs = idx
            .iter()
            .map(|&i| otm_payoff(&model, spot * rows[i].relative_strike, t))
            .collect::<Result<Vec<_>, _>>()?;
        let mc = mc_price_strip(
            &model,
            &payoffs,
            &McConfig {
                budget: u128::MAX,
                ..cfg
            },
        )?;
        let forward = model.env().forward(t);
        for ((&i, p), est) in idx.iter().zip(&payoffs).zip(mc) {
            let deal = DealTerms::new(&model, *p);
            let iv_exp = expansion_vol(&model, p).ok();
            let iv_mc = implied_vol(est.price, &deal, forward).ok();
            let error_bp = iv_exp.zip(iv_mc).map(|(a, b)| (a - b) * 1e4);
            let stderr_bp = iv_mc.map(|v| est.stderr / vol_vega(&deal, forward, v) * 1e4);
            if iv_exp.is_none() || iv_mc.is_none() {
                eprintln!("warning: maturity {t} strike {}: no implied volatility", p.strike());
            }
            let instrument = if p.kind() == PayoffKind::Put { "put" } else { "call" };
            cells[i] = vec![
                t.to_string(),
                rows[i].relative_strike.to_string(),
                p.strike().to_string(),
                instrument.to_string(),
                cell(iv_exp),
                cell(iv_mc),
                cell(error_bp),
                cell(stderr_bp),
            ];
        }
    }
    let header = [
        "maturity_years",
        "relative_strike",
        "strike",
        "instrument",
        "iv_expansion",
        "iv_mc",
        "error_bp",
        "stderr_bp",
    ]
    .map(String::from);
    write_output(out, &csv_bytes(&header, &cells)?)
}

#[derive(Serialize)]
struct CalibrationSummary<'a> {
    objective: f64,
    max_abs_residual_bp: f64,
    trace: &'a [f64],
    outer_status: Option<jumpexp_core::calibration::LmStatus>,
    flags: &'a [String],
}

/// Calibrated model fields at the top level, so the file doubles as a model
/// input, plus a `calibration` section.
#[derive(Serialize)]
struct CalibrationOutput<'a> {
    #[serde(flatten)]
    model: ModelFile,
    calibration: CalibrationSummary<'a>,
}

fn residual_path(out: &Path) -> PathBuf {
    out.with_extension("residuals.csv")
}

pub fn calibrate(
    quotes: &Path,
    spot: f64,
    rate: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    residuals: Option<&Path>,
) -> CliResult<()> {
    let quotes = input::quotes(quotes)?;
    let (r, q) = input::rates(rate)?;
    let cfg = input::config(config)?;
    let surface = VolSurface::new(quotes, MarketEnv::new(spot, r, q)?)?;
    let res: CalibrationResult = bootstrap_calibrate(&surface, &cfg)?;
    for (i, obj) in res.trace.iter().enumerate() {
        eprintln!("objective[{i}] = {obj:e}");
    }
    for f in &res.flags {
        eprintln!("warning: {f}");
    }
    eprintln!(
        "calibrated {} quotes in {:.3} s, max |residual| {:.3} bp",
        surface.n_quotes(),
        res.wall_time_secs,
        res.max_abs_residual_bp()
    );
    let output = CalibrationOutput {
        model: ModelFile::from(&res.model()?),
        calibration: CalibrationSummary {
            objective: res.objective,
            max_abs_residual_bp: res.max_abs_residual_bp(),
            trace: &res.trace,
            outer_status: res.outer_status,
            flags: &res.flags,
        },
    };
    let mut json = serde_json::to_vec_pretty(&output).map_err(|e| CliError::Output(e.to_string()))?;
    json.push(b'\n');

    let header = ["maturity_years", "strike", "market_vol", "model_vol", "residual_bp"].map(String::from);
    let rows: Vec<Vec<String>> = res
        .residuals
        .iter()
        .map(|r| {
            vec![
                r.maturity.to_string(),
                r.strike.to_string(),
                r.market_vol.to_string(),
                r.model_vol.to_string(),
                r.residual_bp.to_string(),
            ]
        })
        .collect();
    let resid_path = residuals.map_or_else(|| residual_path(out), Path::to_path_buf);
    write_output(Some(out), &json)?;
    write_output(Some(&resid_path), &csv_bytes(&header, &rows)?)
}

pub fn diagnostics(model: &Path, maturity: f64) -> CliResult<()> {
    let model = input::model(model)?;
    let d = model_diagnostics(&model, maturity)?;
    println!(
        "{}",
        serde_json::to_string(&d).map_err(|e| CliError::Output(e.to_string()))?
    );
    Ok(())
}
