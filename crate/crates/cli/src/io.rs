//! CSV schemas shared by the pipeline stages.
//!
//! Scenario rows: `strike,price,iv,tag` with tag in {liquid, illiquid,
//! truth}. Density rows: `strike,density,raw_density`. Option chains:
//! `strike,price,kind,tau,spot,rate,dividend` with kind C or P.

use std::path::Path;

use deep_lse::pipeline::MarketScenario;
use deep_lse::pricing::{bs_price, IvCurve, IvPoint, OptionKind, OptionQuote};
use deep_lse::rnd::{RndEstimate, StrikeGrid};

use crate::CliError;

fn config_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

fn runtime_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

pub fn write_scenario(path: &Path, scenario: &MarketScenario) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| runtime_err("scenario csv", e))?;
    w.write_record(["strike", "price", "iv", "tag"])
        .map_err(|e| runtime_err("scenario csv", e))?;
    let mut write_curve = |curve: &IvCurve, tag: &str| -> Result<(), CliError> {
        for p in curve.points() {
            let strike = p.moneyness * curve.spot;
            let price = bs_price(
                curve.spot,
                strike,
                curve.rate,
                curve.dividend,
                p.sigma,
                curve.maturity,
                OptionKind::Call,
            )
            .map_err(|e| runtime_err("scenario csv", e))?;
            w.write_record([
                format!("{strike:.10}"),
                format!("{price:.10}"),
                format!("{:.10}", p.sigma),
                tag.to_string(),
            ])
            .map_err(|e| runtime_err("scenario csv", e))?;
        }
        Ok(())
    };
    write_curve(&scenario.liquid_curve, "liquid")?;
    write_curve(&scenario.target_curve, "truth")?;
    for q in &scenario.illiquid_quotes {
        let sigma = scenario
            .target_curve
            .interpolate(q.moneyness())
            .map_err(|e| runtime_err("scenario csv", e))?;
        w.write_record([
            format!("{:.10}", q.strike),
            format!("{:.10}", q.price),
            format!("{sigma:.10}"),
            "illiquid".to_string(),
        ])
        .map_err(|e| runtime_err("scenario csv", e))?;
    }
    w.flush().map_err(|e| runtime_err("scenario csv", e))
}

pub struct ScenarioRows {
    pub liquid: Vec<(f64, f64, f64)>,
    pub truth: Vec<(f64, f64, f64)>,
    pub illiquid: Vec<(f64, f64, f64)>,
}

pub fn read_scenario(path: &Path) -> Result<ScenarioRows, CliError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| config_err(&format!("{}", path.display()), e))?;
    let headers = reader
        .headers()
        .map_err(|e| config_err("scenario header", e))?
        .clone();
    for required in ["strike", "price", "iv", "tag"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CliError::Config(format!(
                "{}: missing column `{required}`",
                path.display()
            )));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ik, ip, iv, it) = (col("strike"), col("price"), col("iv"), col("tag"));

    let mut rows = ScenarioRows {
        liquid: Vec::new(),
        truth: Vec::new(),
        illiquid: Vec::new(),
    };
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| config_err("scenario row", e))?;
        let parse = |idx: usize, name: &str| -> Result<f64, CliError> {
            record[idx].parse().map_err(|_| {
                CliError::Config(format!(
                    "{} row {}: column `{name}` is not a number",
                    path.display(),
                    line + 2
                ))
            })
        };
        let row = (parse(ik, "strike")?, parse(ip, "price")?, parse(iv, "iv")?);
        match &record[it] {
            "liquid" => rows.liquid.push(row),
            "truth" => rows.truth.push(row),
            "illiquid" => rows.illiquid.push(row),
            other => {
                return Err(CliError::Config(format!(
                    "{} row {}: unknown tag `{other}`",
                    path.display(),
                    line + 2
                )))
            }
        }
    }
    Ok(rows)
}

pub fn curve_from_rows(
    rows: &[(f64, f64, f64)],
    spot: f64,
    maturity: f64,
    rate: f64,
    dividend: f64,
) -> Result<IvCurve, CliError> {
    let points = rows
        .iter()
        .map(|(strike, _, sigma)| IvPoint {
            moneyness: strike / spot,
            sigma: *sigma,
        })
        .collect();
    IvCurve::new(points, spot, maturity, rate, dividend).map_err(|e| config_err("curve", e))
}

pub fn quotes_from_rows(
    rows: &[(f64, f64, f64)],
    spot: f64,
    maturity: f64,
    rate: f64,
    dividend: f64,
) -> Vec<OptionQuote> {
    rows.iter()
        .map(|(strike, price, _)| OptionQuote {
            strike: *strike,
            price: *price,
            kind: OptionKind::Call,
            maturity,
            spot,
            rate,
            dividend,
        })
        .collect()
}

pub fn write_rnd(path: &Path, rnd: &RndEstimate) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| runtime_err("rnd csv", e))?;
    w.write_record(["strike", "density", "raw_density"])
        .map_err(|e| runtime_err("rnd csv", e))?;
    for (i, strike) in rnd.grid.strikes().iter().enumerate() {
        w.write_record([
            format!("{strike:.10}"),
            format!("{:.12e}", rnd.density[i]),
            format!("{:.12e}", rnd.raw_density[i]),
        ])
        .map_err(|e| runtime_err("rnd csv", e))?;
    }
    w.flush().map_err(|e| runtime_err("rnd csv", e))
}

/// Reads a density CSV back onto the grid it must have been produced on.
pub fn read_rnd(path: &Path, grid: &StrikeGrid) -> Result<RndEstimate, CliError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| config_err(&format!("{}", path.display()), e))?;
    let headers = reader
        .headers()
        .map_err(|e| config_err("rnd header", e))?
        .clone();
    for required in ["strike", "density", "raw_density"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CliError::Config(format!(
                "{}: missing column `{required}`",
                path.display()
            )));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ik, id, ir) = (col("strike"), col("density"), col("raw_density"));
    let mut strikes = Vec::new();
    let mut density = Vec::new();
    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| config_err("rnd row", e))?;
        strikes.push(
            record[ik]
                .parse::<f64>()
                .map_err(|e| config_err("rnd strike", e))?,
        );
        density.push(
            record[id]
                .parse::<f64>()
                .map_err(|e| config_err("rnd density", e))?,
        );
        raw.push(
            record[ir]
                .parse::<f64>()
                .map_err(|e| config_err("rnd raw_density", e))?,
        );
    }
    if strikes.len() != grid.len() {
        return Err(CliError::Config(format!(
            "{}: {} rows but the configured grid has {} strikes",
            path.display(),
            strikes.len(),
            grid.len()
        )));
    }
    for (a, b) in strikes.iter().zip(grid.strikes()) {
        if (a - b).abs() > 1e-6 * grid.spacing() {
            return Err(CliError::Config(format!(
                "{}: grid mismatch at strike {a}",
                path.display()
            )));
        }
    }
    let width = grid.spacing();
    let clipped: Vec<f64> = density.iter().map(|d| d.max(0.0)).collect();
    let interior: f64 = clipped[1..clipped.len() - 1].iter().sum();
    let mass = width * (0.5 * clipped[0] + interior + 0.5 * clipped[clipped.len() - 1]);
    Ok(RndEstimate {
        grid: grid.clone(),
        density,
        raw_density: raw,
        raw_mass: mass,
    })
}

/// Reads a user option-chain CSV (`strike,price,kind,tau,spot,rate,dividend`).
pub fn read_option_chain(path: &Path) -> Result<Vec<OptionQuote>, CliError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| config_err(&format!("{}", path.display()), e))?;
    let headers = reader
        .headers()
        .map_err(|e| config_err("chain header", e))?
        .clone();
    for required in ["strike", "price", "kind", "tau", "spot", "rate", "dividend"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CliError::Config(format!(
                "{}: missing column `{required}`",
                path.display()
            )));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut quotes = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| config_err("chain row", e))?;
        let num = |name: &str| -> Result<f64, CliError> {
            record[col(name)].parse().map_err(|_| {
                CliError::Config(format!(
                    "{} row {}: column `{name}` is not a number",
                    path.display(),
                    line + 2
                ))
            })
        };
        let kind = match &record[col("kind")] {
            "C" | "c" => OptionKind::Call,
            "P" | "p" => OptionKind::Put,
            other => {
                return Err(CliError::Config(format!(
                    "{} row {}: kind `{other}` is not C or P",
                    path.display(),
                    line + 2
                )))
            }
        };
        quotes.push(OptionQuote {
            strike: num("strike")?,
            price: num("price")?,
            kind,
            maturity: num("tau")?,
            spot: num("spot")?,
            rate: num("rate")?,
            dividend: num("dividend")?,
        });
    }
    if quotes.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no quote rows",
            path.display()
        )));
    }
    Ok(quotes)
}

pub fn write_trace(path: &Path, rows: &[(usize, f64, f64, f64, bool)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| runtime_err("trace csv", e))?;
    w.write_record(["epoch", "risk", "kl", "objective", "stopped"])
        .map_err(|e| runtime_err("trace csv", e))?;
    for (epoch, risk, kl, objective, stopped) in rows {
        w.write_record([
            epoch.to_string(),
            format!("{risk:.12e}"),
            format!("{kl:.12e}"),
            format!("{objective:.12e}"),
            if *stopped {
                "1".into()
            } else {
                "0".to_string()
            },
        ])
        .map_err(|e| runtime_err("trace csv", e))?;
    }
    w.flush().map_err(|e| runtime_err("trace csv", e))
}

/// One report row: method name, optional per-strike absolute errors,
/// optional MAE. `None` marks a reserved row.
pub type ReportRow = (String, Option<Vec<f64>>, Option<f64>);

/// Pricing-error report in the layout of the evaluation table: one row per
/// method, one column per strike, a trailing MAE column. Out-of-scope
/// methods keep reserved rows with empty cells so external numbers can be
/// merged.
pub fn write_report(path: &Path, strikes: &[f64], rows: &[ReportRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| runtime_err("report csv", e))?;
    let mut header = vec!["method".to_string()];
    header.extend(strikes.iter().map(|s| format!("{s}")));
    header.push("mae".into());
    w.write_record(&header)
        .map_err(|e| runtime_err("report csv", e))?;
    for (method, errors, mae) in rows {
        let mut record = vec![method.clone()];
        match errors {
            Some(errs) => record.extend(errs.iter().map(|e| format!("{e:.6}"))),
            None => record.extend(strikes.iter().map(|_| String::new())),
        }
        record.push(mae.map(|m| format!("{m:.6}")).unwrap_or_default());
        w.write_record(&record)
            .map_err(|e| runtime_err("report csv", e))?;
    }
    w.flush().map_err(|e| runtime_err("report csv", e))
}

pub fn write_l1(path: &Path, rows: &[(String, f64)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| runtime_err("l1 csv", e))?;
    w.write_record(["method", "l1_to_truth"])
        .map_err(|e| runtime_err("l1 csv", e))?;
    for (method, l1) in rows {
        w.write_record([method.clone(), format!("{l1:.8}")])
            .map_err(|e| runtime_err("l1 csv", e))?;
    }
    w.flush().map_err(|e| runtime_err("l1 csv", e))
}
