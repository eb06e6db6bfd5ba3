//! The pipeline stages. Every stage reads and writes files only, so each
//! is independently re-runnable.

use std::path::{Path, PathBuf};

use deep_lse::checkpoint;
use deep_lse::maxaffine::{check_sandwich, delta_bound};
use deep_lse::net::DeepLseNet;
use deep_lse::pipeline::{build_scenario, illiquid_points, rnd_from_net, SIGMA_FLOOR};
use deep_lse::pricing::OptionQuote;
use deep_lse::rnd::{
    extract_rnd, fit_parametric, l1_distance, price_from_rnd, quadratic_spline, ParametricFamily,
    RndEstimate,
};
use deep_lse::training::{fine_tune, fit_traced, PriorSpec};

use crate::config::ExperimentConfig;
use crate::io;
use crate::CliError;

pub struct Paths {
    pub out: PathBuf,
}

impl Paths {
    pub fn scenario(&self) -> PathBuf {
        self.out.join("scenario.csv")
    }
    pub fn truth_rnd(&self) -> PathBuf {
        self.out.join("truth_rnd.csv")
    }
    pub fn pretrained(&self) -> PathBuf {
        self.out.join("pretrained.ckpt")
    }
    pub fn pretrain_trace(&self) -> PathBuf {
        self.out.join("pretrain_trace.csv")
    }
    pub fn transferred(&self) -> PathBuf {
        self.out.join("transferred.ckpt")
    }
    pub fn transfer_trace(&self) -> PathBuf {
        self.out.join("transfer_trace.csv")
    }
    pub fn model_rnd(&self) -> PathBuf {
        self.out.join("model_rnd.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.out.join("report.csv")
    }
    pub fn l1(&self) -> PathBuf {
        self.out.join("l1.csv")
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn simulate(cfg: &ExperimentConfig, seed: Option<u64>, paths: &Paths) -> Result<(), CliError> {
    let model = cfg.model();
    let scenario = build_scenario(
        &model,
        &cfg.liquid_strikes(),
        cfg.maturity,
        &cfg.sim_config(seed)?,
        &cfg.target_market()?,
        &cfg.censor_rule()?,
        cfg.censoring.seed,
        &cfg.grid()?,
        &cfg.truth_fit()?,
    )
    .map_err(runtime)?;
    for strike in &scenario.dropped_strikes {
        eprintln!("warning: strike {strike} dropped (price violates no-arbitrage bounds)");
    }
    io::write_scenario(&paths.scenario(), &scenario)?;
    io::write_rnd(&paths.truth_rnd(), &scenario.truth_rnd)?;
    println!(
        "scenario: {} liquid points, {} illiquid quotes -> {}",
        scenario.liquid_curve.len(),
        scenario.illiquid_quotes.len(),
        paths.scenario().display()
    );
    Ok(())
}

pub fn pretrain(cfg: &ExperimentConfig, seed: Option<u64>, paths: &Paths) -> Result<(), CliError> {
    let model = cfg.model();
    let rows = io::read_scenario(&paths.scenario())?;
    let curve = io::curve_from_rows(
        &rows.liquid,
        model.spot(),
        cfg.maturity,
        model.rate(),
        model.dividend(),
    )?;
    let net = DeepLseNet::init(
        &cfg.architecture.widths,
        1,
        seed.unwrap_or(cfg.architecture.init_seed),
        cfg.architecture.init_scale,
    )
    .map_err(runtime)?;
    let inputs: Vec<Vec<f64>> = curve.points().iter().map(|p| vec![p.moneyness]).collect();
    let targets: Vec<f64> = curve.points().iter().map(|p| p.sigma).collect();
    let train_cfg = cfg.stage(&cfg.pretrain, seed);
    let (fitted, losses) = fit_traced(&net, &inputs, &targets, &train_cfg).map_err(runtime)?;
    checkpoint::save(&fitted, paths.pretrained()).map_err(runtime)?;
    let trace: Vec<(usize, f64, f64, f64, bool)> = losses
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, *l, 0.0, *l, false))
        .collect();
    io::write_trace(&paths.pretrain_trace(), &trace)?;
    println!(
        "pretrained on {} points, final loss {:.3e} -> {}",
        curve.len(),
        losses.last().unwrap_or(&f64::NAN),
        paths.pretrained().display()
    );
    Ok(())
}

pub fn transfer(cfg: &ExperimentConfig, seed: Option<u64>, paths: &Paths) -> Result<(), CliError> {
    let model = cfg.model();
    let rows = io::read_scenario(&paths.scenario())?;
    let quotes = io::quotes_from_rows(
        &rows.illiquid,
        model.spot(),
        cfg.maturity,
        model.rate(),
        model.dividend(),
    );
    let pretrained = checkpoint::load(paths.pretrained()).map_err(|e| match e {
        deep_lse::Error::CheckpointParse { .. } => CliError::Config(e.to_string()),
        other => runtime(other),
    })?;
    let points = illiquid_points(&quotes).map_err(runtime)?;
    let prior = PriorSpec {
        anchor: pretrained.flatten(),
        prior_std: cfg.prior.sigma,
        posterior_std: cfg.prior.tau,
        complexity_weight: cfg.prior.complexity_weight,
    };
    let train_cfg = cfg.stage(&cfg.finetune, seed);
    let (tuned, trace) = fine_tune(&pretrained, &points, &train_cfg, &prior).map_err(runtime)?;
    checkpoint::save(&tuned, paths.transferred()).map_err(runtime)?;
    let rows: Vec<(usize, f64, f64, f64, bool)> = trace
        .epochs
        .iter()
        .map(|r| {
            (
                r.epoch,
                r.risk,
                r.kl,
                r.objective,
                r.epoch == trace.stop_epoch,
            )
        })
        .collect();
    io::write_trace(&paths.transfer_trace(), &rows)?;
    println!(
        "transfer: stopped at epoch {} of {} ({}), B = {:.3e} -> {}",
        trace.stop_epoch,
        trace.epochs.len() - 1,
        if trace.stopped_early {
            "stationary"
        } else {
            "max-epochs"
        },
        trace.epochs[trace.stop_epoch].objective,
        paths.transferred().display()
    );
    Ok(())
}

pub fn rnd(
    cfg: &ExperimentConfig,
    checkpoint_path: Option<&Path>,
    output: Option<&Path>,
    paths: &Paths,
) -> Result<(), CliError> {
    let source = checkpoint_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| paths.transferred());
    let net = checkpoint::load(&source).map_err(|e| match e {
        deep_lse::Error::CheckpointParse { .. } => CliError::Config(e.to_string()),
        other => runtime(other),
    })?;
    if net.input_dim() != 1 {
        return Err(CliError::Config(format!(
            "checkpoint {} has input_dim {}, the moneyness pipeline needs 1",
            source.display(),
            net.input_dim()
        )));
    }
    let grid = cfg.grid()?;
    let estimate = rnd_from_net(&net, &grid).map_err(runtime)?;
    if estimate.mass_warning() {
        eprintln!(
            "warning: pre-normalization mass {:.4} outside [0.9, 1.1]; consider a wider grid",
            estimate.raw_mass
        );
    }
    let target = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| paths.model_rnd());
    io::write_rnd(&target, &estimate)?;
    println!("density on {} strikes -> {}", grid.len(), target.display());
    Ok(())
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    quotes_csv: Option<&Path>,
    truth_csv: Option<&Path>,
    paths: &Paths,
) -> Result<(), CliError> {
    let model = cfg.model();
    let grid = cfg.grid()?;

    let quotes: Vec<OptionQuote> = match quotes_csv {
        Some(path) => io::read_option_chain(path)?,
        None => {
            let rows = io::read_scenario(&paths.scenario())?;
            io::quotes_from_rows(
                &rows.illiquid,
                model.spot(),
                cfg.maturity,
                model.rate(),
                model.dividend(),
            )
        }
    };
    if quotes.is_empty() {
        return Err(CliError::Config("no quotes to evaluate against".into()));
    }

    let truth: RndEstimate = match truth_csv {
        Some(path) => io::read_rnd(path, &grid)?,
        None => io::read_rnd(&paths.truth_rnd(), &grid)?,
    };
    let deep = io::read_rnd(&paths.model_rnd(), &grid)?;

    // Baselines fitted to the same quotes on the same grid.
    let points = illiquid_points(&quotes).map_err(runtime)?;
    let spline = quadratic_spline(&points).map_err(runtime)?;
    let spline_rnd = extract_rnd(|m| spline.value(m).max(SIGMA_FLOOR), &grid).map_err(runtime)?;
    let lognormal = fit_parametric(&quotes, ParametricFamily::Lognormal, &grid).map_err(runtime)?;
    let normal = fit_parametric(&quotes, ParametricFamily::Normal, &grid).map_err(runtime)?;
    if lognormal.degenerate {
        eprintln!("warning: lognormal fit ended on the search boundary");
    }
    if normal.degenerate {
        eprintln!("warning: normal fit ended on the search boundary");
    }

    // Market prices at the evaluation strikes come from the truth density.
    let eval_strikes = &cfg.evaluate.strikes;
    let market: Vec<f64> = eval_strikes
        .iter()
        .map(|k| price_from_rnd(&truth, *k))
        .collect::<Result<_, _>>()
        .map_err(runtime)?;

    let errors_of = |estimate: &RndEstimate| -> Result<(Vec<f64>, f64), CliError> {
        let mut errs = Vec::with_capacity(eval_strikes.len());
        for (k, m) in eval_strikes.iter().zip(&market) {
            let model_price = price_from_rnd(estimate, *k).map_err(runtime)?;
            errs.push((m - model_price).abs());
        }
        let mae = errs.iter().sum::<f64>() / errs.len() as f64;
        Ok((errs, mae))
    };

    let (deep_errs, deep_mae) = errors_of(&deep)?;
    let (spline_errs, spline_mae) = errors_of(&spline_rnd)?;
    let (ln_errs, ln_mae) = errors_of(&lognormal.rnd)?;
    let (n_errs, n_mae) = errors_of(&normal.rnd)?;

    let report_rows = vec![
        ("Kernel-based nonparametric".to_string(), None, None),
        ("Deep-LSE".to_string(), Some(deep_errs), Some(deep_mae)),
        ("Lognormal-Weibull Mixture".to_string(), None, None),
        ("Maximum-Entropy".to_string(), None, None),
        (
            "Parametric Lognormal".to_string(),
            Some(ln_errs),
            Some(ln_mae),
        ),
        ("Parametric Normal".to_string(), Some(n_errs), Some(n_mae)),
        (
            "Quadratic Splines".to_string(),
            Some(spline_errs),
            Some(spline_mae),
        ),
    ];
    io::write_report(&paths.report(), eval_strikes, &report_rows)?;

    let l1_rows = vec![
        (
            "Deep-LSE".to_string(),
            l1_distance(&deep, &truth).map_err(runtime)?,
        ),
        (
            "Quadratic Splines".to_string(),
            l1_distance(&spline_rnd, &truth).map_err(runtime)?,
        ),
        (
            "Parametric Lognormal".to_string(),
            l1_distance(&lognormal.rnd, &truth).map_err(runtime)?,
        ),
        (
            "Parametric Normal".to_string(),
            l1_distance(&normal.rnd, &truth).map_err(runtime)?,
        ),
    ];
    io::write_l1(&paths.l1(), &l1_rows)?;

    println!(
        "report -> {} (Deep-LSE MAE {:.4}, spline MAE {:.4})",
        paths.report().display(),
        deep_mae,
        spline_mae
    );
    println!("l1 -> {}", paths.l1().display());
    Ok(())
}

pub fn bounds(
    cfg: &ExperimentConfig,
    checkpoint_path: Option<&Path>,
    paths: &Paths,
) -> Result<(), CliError> {
    let source = checkpoint_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| paths.transferred());
    let net = checkpoint::load(&source).map_err(|e| match e {
        deep_lse::Error::CheckpointParse { .. } => CliError::Config(e.to_string()),
        other => runtime(other),
    })?;

    let report = delta_bound(&net);
    println!("layer slack budget:");
    for (idx, (delta, alpha)) in report.per_layer.iter().zip(&report.skip_maxima).enumerate() {
        println!("  layer {idx}: delta {delta:.6}, max skip {alpha:.6}");
    }
    println!(
        "total slack {:.6} (closed form {:.6})",
        report.total, report.total_closed_form
    );
    if let Some(cap) = report.depth_uniform_cap {
        println!("depth-uniform cap {cap:.6}");
    }

    let (lo, hi) = (cfg.grid.moneyness_min, cfg.grid.moneyness_max);
    let points: Vec<Vec<f64>> = (0..200)
        .map(|i| vec![lo + (hi - lo) * i as f64 / 199.0])
        .collect();
    let slack = check_sandwich(&net, &points).map_err(runtime)?;
    println!(
        "sandwich over [{lo}, {hi}]: slack in [{:.3e}, {:.3e}], budget {:.3e}",
        slack.min_slack, slack.max_slack, slack.total_budget
    );

    if let Some(sieve) = cfg
        .stage(&cfg.finetune, None)
        .sieve
        .or(cfg.stage(&cfg.pretrain, None).sieve)
    {
        let growth = sieve.growth_check(net.input_dim(), cfg.market.strike_count);
        println!(
            "sieve envelope {:.4}; growth: W = {}, complexity/n = {:.4} ({})",
            sieve.envelope_bound(),
            growth.param_count,
            growth.ratio,
            growth.status
        );
    }
    Ok(())
}
