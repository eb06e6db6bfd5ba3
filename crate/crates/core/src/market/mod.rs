//! Simulated option markets: pricing surfaces from Monte Carlo terminals,
//! the liquid/illiquid curve construction, and the censoring protocols that
//! emulate illiquidity.

pub mod models;

pub use models::{
    simulate_terminals, AblParams, BatesParams, KouHestonParams, SimConfig, SimModelParams,
    ThreeFdeParams, VarianceFactor, VarianceScheme,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::pricing::{bs_price, implied_vol, IvCurve, IvPoint, OptionKind, OptionQuote};

/// Discounted mean call payoff per strike:
/// `C(K) = e^{-rτ} · mean((S_T − K)^+)`.
pub fn mc_call_prices(terminals: &[f64], rate: f64, tau: f64, strikes: &[f64]) -> Result<Vec<f64>> {
    if terminals.is_empty() {
        return Err(Error::Empty { what: "terminals" });
    }
    let df = (-rate * tau).exp();
    let n = terminals.len() as f64;
    Ok(strikes
        .iter()
        .map(|k| df * terminals.iter().map(|s| (s - k).max(0.0)).sum::<f64>() / n)
        .collect())
}

/// Simulates the model once and inverts the Monte Carlo prices into an
/// implied-volatility curve. Strikes whose prices violate the no-arbitrage
/// bounds are dropped and reported in the second slot.
pub fn build_liquid_curve(
    model: &SimModelParams,
    strikes: &[f64],
    tau: f64,
    cfg: &SimConfig,
) -> Result<(IvCurve, Vec<f64>)> {
    let mut sorted = strikes.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let terminals = simulate_terminals(model, tau, cfg)?;
    let prices = mc_call_prices(&terminals, model.rate(), tau, &sorted)?;

    let spot = model.spot();
    let mut points = Vec::with_capacity(sorted.len());
    let mut dropped = Vec::new();
    for (strike, price) in sorted.iter().zip(&prices) {
        let quote = OptionQuote {
            strike: *strike,
            price: *price,
            kind: OptionKind::Call,
            maturity: tau,
            spot,
            rate: model.rate(),
            dividend: model.dividend(),
        };
        match implied_vol(&quote) {
            Ok(sigma) => points.push(IvPoint {
                moneyness: strike / spot,
                sigma,
            }),
            Err(Error::NoArbitrage { .. }) => dropped.push(*strike),
            Err(other) => return Err(other),
        }
    }
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            what: "surviving curve points",
            required: 3,
            got: points.len(),
        });
    }
    let curve = IvCurve::new(points, spot, tau, model.rate(), model.dividend())?;
    Ok((curve, dropped))
}

/// Produces a translated market: volatilities scaled by `vol_factor`,
/// strikes shifted by `strike_shift` and re-expressed in moneyness against
/// the unchanged spot.
pub fn translate_curve(curve: &IvCurve, vol_factor: f64, strike_shift: f64) -> Result<IvCurve> {
    if !(vol_factor > 0.0) {
        return Err(Error::Domain {
            name: "vol_factor",
            value: vol_factor,
            constraint: "must be positive",
        });
    }
    translate_curve_with(curve, |sigma| sigma * vol_factor, strike_shift)
}

/// Shared translation plumbing; `vol_map` must keep volatilities positive.
pub fn translate_curve_with(
    curve: &IvCurve,
    vol_map: impl Fn(f64) -> f64,
    strike_shift: f64,
) -> Result<IvCurve> {
    let spot = curve.spot;
    let points = curve
        .points()
        .iter()
        .map(|p| IvPoint {
            moneyness: (p.moneyness * spot + strike_shift) / spot,
            sigma: vol_map(p.sigma),
        })
        .collect();
    IvCurve::new(points, spot, curve.maturity, curve.rate, curve.dividend)
}

/// How illiquid quotes are carved out of a dense curve.
#[derive(Debug, Clone, PartialEq)]
pub enum CensorRule {
    /// Keep exactly these strikes, interpolating the curve linearly.
    Strikes(Vec<f64>),
    /// Sample `count` strikes uniformly from the moneyness band
    /// `[lo, hi]` (inclusive), intersected with the curve support.
    MoneynessBand { lo: f64, hi: f64, count: usize },
}

impl CensorRule {
    /// Band of call strikes `depth_lo`–`depth_hi` in the money
    /// (e.g. 0.10–0.25 gives moneyness 0.75–0.90).
    pub fn in_the_money(depth_lo: f64, depth_hi: f64, count: usize) -> Self {
        CensorRule::MoneynessBand {
            lo: 1.0 - depth_hi,
            hi: 1.0 - depth_lo,
            count,
        }
    }

    /// Band of call strikes `depth_lo`–`depth_hi` out of the money.
    pub fn out_of_the_money(depth_lo: f64, depth_hi: f64, count: usize) -> Self {
        CensorRule::MoneynessBand {
            lo: 1.0 + depth_lo,
            hi: 1.0 + depth_hi,
            count,
        }
    }
}

/// Selects the illiquid quotes from a dense curve: fixed picks or a seeded
/// uniform sample from a moneyness band. Quotes carry prices consistent
/// with the interpolated volatilities.
pub fn censor_to_illiquid(
    curve: &IvCurve,
    rule: &CensorRule,
    seed: u64,
) -> Result<Vec<OptionQuote>> {
    let spot = curve.spot;
    let strikes: Vec<f64> = match rule {
        CensorRule::Strikes(picks) => {
            if picks.is_empty() {
                return Err(Error::Empty {
                    what: "strike picks",
                });
            }
            picks.clone()
        }
        CensorRule::MoneynessBand { lo, hi, count } => {
            if *count == 0 {
                return Err(Error::Empty {
                    what: "sample count",
                });
            }
            let (support_lo, support_hi) = curve.moneyness_range();
            let band_lo = lo.max(support_lo);
            let band_hi = hi.min(support_hi);
            if band_lo >= band_hi {
                return Err(Error::Domain {
                    name: "moneyness band",
                    value: *lo,
                    constraint: "band does not intersect the curve support",
                });
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut picks: Vec<f64> = (0..*count)
                .map(|_| (band_lo + rng.random::<f64>() * (band_hi - band_lo)) * spot)
                .collect();
            picks.sort_by(f64::total_cmp);
            picks
        }
    };

    strikes
        .iter()
        .map(|&strike| {
            let sigma = curve.interpolate(strike / spot)?;
            let price = bs_price(
                spot,
                strike,
                curve.rate,
                curve.dividend,
                sigma,
                curve.maturity,
                OptionKind::Call,
            )?;
            Ok(OptionQuote {
                strike,
                price,
                kind: OptionKind::Call,
                maturity: curve.maturity,
                spot,
                rate: curve.rate,
                dividend: curve.dividend,
            })
        })
        .collect()
}
