//! End-to-end experiment plumbing shared by the CLI and the acceptance
//! suite: scenario assembly (liquid proxy, translated illiquid target,
//! censored quotes, dense-truth density), the two-phase fit, and density
//! extraction from a fitted network.

use crate::error::{Error, Result};
use crate::market::{
    build_liquid_curve, censor_to_illiquid, translate_curve_with, CensorRule, SimConfig,
    SimModelParams,
};
use crate::net::DeepLseNet;
use crate::pricing::{IvCurve, IvPoint, OptionQuote};
use crate::rnd::{extract_rnd, RndEstimate, StrikeGrid};
use crate::training::{fine_tune, pretrain, FineTuneTrace, PriorSpec, TrainConfig};

/// Floor applied to network outputs before they are used as volatilities;
/// keeps Black-Scholes defined while a fit is still settling.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// How the implied-volatility shift of the translation protocol is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolShift {
    /// `sigma ← sigma · factor`.
    Multiplicative(f64),
    /// `sigma ← sigma + delta`.
    Additive(f64),
}

/// Translation from the liquid proxy to the illiquid target market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationRule {
    pub vol_shift: VolShift,
    pub strike_shift: f64,
}

impl TranslationRule {
    pub fn apply(&self, curve: &IvCurve) -> Result<IvCurve> {
        match self.vol_shift {
            VolShift::Multiplicative(factor) => {
                if !(factor > 0.0) {
                    return Err(Error::Domain {
                        name: "vol_factor",
                        value: factor,
                        constraint: "must be positive",
                    });
                }
                translate_curve_with(curve, |s| s * factor, self.strike_shift)
            }
            VolShift::Additive(delta) => {
                translate_curve_with(curve, |s| s + delta, self.strike_shift)
            }
        }
    }
}

/// Where the illiquid target market comes from: a translation of the proxy
/// curve, or a second data-generating process simulated on its own
/// (independent) random stream.
#[derive(Debug, Clone)]
pub enum TargetMarket {
    Translate(TranslationRule),
    SecondModel(SimModelParams),
}

impl TargetMarket {
    fn build(
        &self,
        liquid_curve: &IvCurve,
        liquid_strikes: &[f64],
        tau: f64,
        sim: &SimConfig,
    ) -> Result<(IvCurve, Vec<f64>)> {
        match self {
            TargetMarket::Translate(rule) => Ok((rule.apply(liquid_curve)?, Vec::new())),
            TargetMarket::SecondModel(model) => {
                let mut target_sim = *sim;
                // Decorrelate the two markets' draws.
                target_sim.seed = sim.seed ^ 0x9e37_79b9_7f4a_7c15;
                build_liquid_curve(model, liquid_strikes, tau, &target_sim)
            }
        }
    }
}

/// How the dense-truth density is produced from the target curve: a wide
/// network fit to the full curve (default), or the quadratic spline.
#[derive(Debug, Clone)]
pub enum TruthFit {
    DeepFit {
        widths: Vec<usize>,
        config: TrainConfig,
        init_seed: u64,
        init_scale: f64,
    },
    Spline,
}

impl TruthFit {
    pub fn default_deep() -> Self {
        TruthFit::DeepFit {
            widths: vec![6, 6],
            config: TrainConfig::new(0.02, 6000),
            init_seed: 2024,
            init_scale: 0.5,
        }
    }
}

/// One simulated market scenario: the liquid proxy curve, the dense
/// translated target, the censored illiquid quotes, and the ground-truth
/// density of the target market.
#[derive(Debug, Clone)]
pub struct MarketScenario {
    pub liquid_curve: IvCurve,
    pub target_curve: IvCurve,
    pub illiquid_quotes: Vec<OptionQuote>,
    pub truth_rnd: RndEstimate,
    /// Strikes dropped while inverting the Monte Carlo prices.
    pub dropped_strikes: Vec<f64>,
}

/// Builds the full scenario: simulate the proxy, derive the target market
/// (translation or second process), censor the target to the illiquid
/// quotes, and fit the dense truth density on `grid`.
#[allow(clippy::too_many_arguments)]
pub fn build_scenario(
    model: &SimModelParams,
    liquid_strikes: &[f64],
    tau: f64,
    sim: &SimConfig,
    target: &TargetMarket,
    censor: &CensorRule,
    censor_seed: u64,
    grid: &StrikeGrid,
    truth: &TruthFit,
) -> Result<MarketScenario> {
    let (liquid_curve, mut dropped_strikes) = build_liquid_curve(model, liquid_strikes, tau, sim)?;
    let (target_curve, dropped_target) = target.build(&liquid_curve, liquid_strikes, tau, sim)?;
    dropped_strikes.extend(dropped_target);
    let illiquid_quotes = censor_to_illiquid(&target_curve, censor, censor_seed)?;
    let truth_rnd = truth_rnd_from_curve(&target_curve, grid, truth)?;
    Ok(MarketScenario {
        liquid_curve,
        target_curve,
        illiquid_quotes,
        truth_rnd,
        dropped_strikes,
    })
}

/// Ground-truth density of a dense curve: fit an interpolator to the whole
/// curve and push it through the extraction pipeline.
pub fn truth_rnd_from_curve(
    curve: &IvCurve,
    grid: &StrikeGrid,
    truth: &TruthFit,
) -> Result<RndEstimate> {
    match truth {
        TruthFit::DeepFit {
            widths,
            config,
            init_seed,
            init_scale,
        } => {
            let net = DeepLseNet::init(widths, 1, *init_seed, *init_scale)?;
            let fitted = pretrain(&net, curve, config)?;
            rnd_from_net(&fitted, grid)
        }
        TruthFit::Spline => {
            let spline = crate::rnd::quadratic_spline(curve.points())?;
            extract_rnd(|m| spline.value(m).max(SIGMA_FLOOR), grid)
        }
    }
}

/// Breeden-Litzenberger extraction with the fitted network as the
/// volatility interpolator. The network must take scalar moneyness.
pub fn rnd_from_net(net: &DeepLseNet, grid: &StrikeGrid) -> Result<RndEstimate> {
    if net.input_dim() != 1 {
        return Err(Error::DimensionMismatch {
            what: "network input",
            expected: 1,
            got: net.input_dim(),
        });
    }
    extract_rnd(|m| net.eval1(m).max(SIGMA_FLOOR), grid)
}

/// Outcome of the two-phase fit.
#[derive(Debug, Clone)]
pub struct TwoPhaseFit {
    pub pretrained: DeepLseNet,
    pub transferred: DeepLseNet,
    pub trace: FineTuneTrace,
}

/// Pretrains on the liquid curve, then fine-tunes on the illiquid quotes'
/// implied volatilities with the stopping rule anchored at the pretrained
/// weights.
#[allow(clippy::too_many_arguments)]
pub fn two_phase_fit(
    initial: &DeepLseNet,
    liquid: &IvCurve,
    illiquid: &[OptionQuote],
    pretrain_cfg: &TrainConfig,
    finetune_cfg: &TrainConfig,
    prior_std: f64,
    posterior_std: f64,
    complexity_weight: f64,
) -> Result<TwoPhaseFit> {
    let pretrained = pretrain(initial, liquid, pretrain_cfg)?;
    let points = illiquid_points(illiquid)?;
    let prior = PriorSpec {
        anchor: pretrained.flatten(),
        prior_std,
        posterior_std,
        complexity_weight,
    };
    let (transferred, trace) = fine_tune(&pretrained, &points, finetune_cfg, &prior)?;
    Ok(TwoPhaseFit {
        pretrained,
        transferred,
        trace,
    })
}

/// Converts quotes to fine-tuning points, inverting prices where needed.
pub fn illiquid_points(quotes: &[OptionQuote]) -> Result<Vec<IvPoint>> {
    if quotes.is_empty() {
        return Err(Error::Empty {
            what: "illiquid quotes",
        });
    }
    quotes
        .iter()
        .map(|q| {
            let sigma = crate::pricing::implied_vol(q)?;
            Ok(IvPoint {
                moneyness: q.moneyness(),
                sigma,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{BatesParams, VarianceScheme};
    use crate::pricing::{IvCurve, IvPoint};

    fn smooth_curve() -> IvCurve {
        let points = (0..41)
            .map(|i| {
                let m = 0.6 + i as f64 * 0.02;
                IvPoint {
                    moneyness: m,
                    sigma: 0.22 + 0.25 * (m - 1.05) * (m - 1.05),
                }
            })
            .collect();
        IvCurve::new(points, 100.0, 1.0, 0.06, 0.0).unwrap()
    }

    #[test]
    fn translation_rule_modes() {
        let curve = smooth_curve();
        let mult = TranslationRule {
            vol_shift: VolShift::Multiplicative(0.9),
            strike_shift: 20.0,
        };
        let moved = mult.apply(&curve).unwrap();
        assert!((moved.points()[0].moneyness - 0.8).abs() < 1e-12);
        assert!((moved.points()[0].sigma - curve.points()[0].sigma * 0.9).abs() < 1e-12);

        let add = TranslationRule {
            vol_shift: VolShift::Additive(-0.02),
            strike_shift: 0.0,
        };
        let shifted = add.apply(&curve).unwrap();
        assert!((shifted.points()[0].sigma - (curve.points()[0].sigma - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn truth_density_from_spline_integrates_to_one() {
        let curve = smooth_curve();
        let grid = StrikeGrid::new(50.0, 160.0, 221, 100.0, 0.06, 0.0, 1.0).unwrap();
        let truth = truth_rnd_from_curve(&curve, &grid, &TruthFit::Spline).unwrap();
        let spacing = grid.spacing();
        let interior: f64 = truth.density[1..truth.density.len() - 1].iter().sum();
        let mass = spacing
            * (0.5 * truth.density[0] + interior + 0.5 * truth.density[truth.density.len() - 1]);
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scenario_assembly_produces_consistent_pieces() {
        let model = SimModelParams::Bates(BatesParams::study_defaults());
        let strikes: Vec<f64> = (0..25).map(|i| 62.0 + 3.5 * i as f64).collect();
        let sim = SimConfig {
            n_paths: 30_000,
            n_steps: 64,
            seed: 5,
            scheme: VarianceScheme::FullTruncation,
        };
        let target = TargetMarket::Translate(TranslationRule {
            vol_shift: VolShift::Multiplicative(0.9),
            strike_shift: 20.0,
        });
        let censor = CensorRule::Strikes(vec![82.0, 97.0, 98.0]);
        let grid = StrikeGrid::new(50.0, 200.0, 301, 100.0, 0.06, 0.0, 1.0).unwrap();
        let truth = TruthFit::DeepFit {
            widths: vec![4, 4],
            config: TrainConfig::new(0.02, 800),
            init_seed: 3,
            init_scale: 0.5,
        };
        let scenario = build_scenario(
            &model, &strikes, 1.0, &sim, &target, &censor, 0, &grid, &truth,
        )
        .unwrap();
        assert!(scenario.liquid_curve.len() >= 20);
        assert_eq!(scenario.illiquid_quotes.len(), 3);
        // Illiquid strikes sit inside the target curve's support.
        let (lo, hi) = scenario.target_curve.moneyness_range();
        for q in &scenario.illiquid_quotes {
            let m = q.moneyness();
            assert!(m >= lo && m <= hi);
        }
        assert!(!scenario.truth_rnd.mass_warning());
    }

    #[test]
    fn a_second_model_can_supply_the_target_market() {
        // Proxy and target from two parameter sets of the same process; the
        // target curve is its own simulation, not a translation.
        let proxy = SimModelParams::Bates(BatesParams::study_defaults());
        let target_params = BatesParams {
            v0: 0.05,
            theta: 0.05,
            ..BatesParams::study_defaults()
        };
        let strikes: Vec<f64> = (0..25).map(|i| 62.0 + 3.5 * i as f64).collect();
        let sim = SimConfig {
            n_paths: 30_000,
            n_steps: 64,
            seed: 11,
            scheme: VarianceScheme::FullTruncation,
        };
        let grid = StrikeGrid::new(50.0, 200.0, 301, 100.0, 0.06, 0.0, 1.0).unwrap();
        let scenario = build_scenario(
            &proxy,
            &strikes,
            1.0,
            &sim,
            &TargetMarket::SecondModel(SimModelParams::Bates(target_params)),
            &CensorRule::in_the_money(0.10, 0.25, 3),
            5,
            &grid,
            &TruthFit::Spline,
        )
        .unwrap();
        assert_eq!(scenario.illiquid_quotes.len(), 3);
        // The markets differ: lower variance must shift the target's
        // at-the-money volatility below the proxy's.
        let proxy_atm = scenario.liquid_curve.interpolate(1.0).unwrap();
        let target_atm = scenario.target_curve.interpolate(1.0).unwrap();
        assert!(
            target_atm < proxy_atm,
            "target atm {target_atm} vs proxy atm {proxy_atm}"
        );
    }

    #[test]
    fn illiquid_points_invert_prices() {
        let quotes = vec![OptionQuote {
            strike: 95.0,
            price: crate::pricing::bs_price(
                100.0,
                95.0,
                0.02,
                0.0,
                0.3,
                1.0,
                crate::pricing::OptionKind::Call,
            )
            .unwrap(),
            kind: crate::pricing::OptionKind::Call,
            maturity: 1.0,
            spot: 100.0,
            rate: 0.02,
            dividend: 0.0,
        }];
        let points = illiquid_points(&quotes).unwrap();
        assert!((points[0].sigma - 0.3).abs() < 1e-8);
        assert!((points[0].moneyness - 0.95).abs() < 1e-12);
    }
}
