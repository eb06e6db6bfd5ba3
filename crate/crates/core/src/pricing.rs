//! Black-Scholes pricing, vega, and robust implied-volatility inversion.
//!
//! The inversion brackets on `[1e-6, 5]` and bisects before switching to a
//! safeguarded Newton polish: the tiny deep-out-of-the-money prices this
//! crate has to digest defeat a Newton iteration started at an at-the-money
//! guess.

use crate::error::{Error, Result};

/// Volatility bracket for the implied-volatility search.
pub const VOL_BRACKET: (f64, f64) = (1e-6, 5.0);
const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

/// One observed European option price.
#[derive(Debug, Clone, Copy)]
pub struct OptionQuote {
    pub strike: f64,
    pub price: f64,
    pub kind: OptionKind,
    /// Time to expiry in years.
    pub maturity: f64,
    pub spot: f64,
    /// Continuously compounded risk-free rate.
    pub rate: f64,
    /// Continuously compounded dividend yield.
    pub dividend: f64,
}

impl OptionQuote {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("strike", self.strike),
            ("maturity", self.maturity),
            ("spot", self.spot),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    constraint: "must be positive",
                });
            }
        }
        if !(self.price >= 0.0) {
            return Err(Error::Domain {
                name: "price",
                value: self.price,
                constraint: "must be nonnegative",
            });
        }
        Ok(())
    }

    pub fn moneyness(&self) -> f64 {
        self.strike / self.spot
    }
}

/// One point of an implied-volatility curve, keyed by moneyness `K / spot`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvPoint {
    pub moneyness: f64,
    pub sigma: f64,
}

/// Implied-volatility points for one maturity, strictly increasing in
/// moneyness, with the market metadata needed to price them.
#[derive(Debug, Clone, PartialEq)]
pub struct IvCurve {
    points: Vec<IvPoint>,
    pub spot: f64,
    pub maturity: f64,
    pub rate: f64,
    pub dividend: f64,
}

impl IvCurve {
    pub fn new(
        mut points: Vec<IvPoint>,
        spot: f64,
        maturity: f64,
        rate: f64,
        dividend: f64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty {
                what: "curve points",
            });
        }
        points.sort_by(|a, b| a.moneyness.total_cmp(&b.moneyness));
        for pair in points.windows(2) {
            if pair[1].moneyness <= pair[0].moneyness {
                return Err(Error::Domain {
                    name: "moneyness",
                    value: pair[1].moneyness,
                    constraint: "must be strictly increasing within a curve",
                });
            }
        }
        for p in &points {
            if !(p.sigma > 0.0) {
                return Err(Error::Domain {
                    name: "sigma",
                    value: p.sigma,
                    constraint: "must be positive",
                });
            }
            if !(p.moneyness > 0.0) {
                return Err(Error::Domain {
                    name: "moneyness",
                    value: p.moneyness,
                    constraint: "must be positive",
                });
            }
        }
        Ok(Self {
            points,
            spot,
            maturity,
            rate,
            dividend,
        })
    }

    pub fn points(&self) -> &[IvPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn moneyness_range(&self) -> (f64, f64) {
        (
            self.points.first().unwrap().moneyness,
            self.points.last().unwrap().moneyness,
        )
    }

    /// Linear interpolation of the implied volatility at a moneyness inside
    /// the curve's support.
    pub fn interpolate(&self, moneyness: f64) -> Result<f64> {
        let (lo, hi) = self.moneyness_range();
        if moneyness < lo || moneyness > hi {
            return Err(Error::Domain {
                name: "moneyness",
                value: moneyness,
                constraint: "outside the curve support",
            });
        }
        let idx = self
            .points
            .partition_point(|p| p.moneyness <= moneyness)
            .min(self.points.len() - 1);
        if idx == 0 {
            return Ok(self.points[0].sigma);
        }
        let left = self.points[idx - 1];
        let right = self.points[idx];
        let w = (moneyness - left.moneyness) / (right.moneyness - left.moneyness);
        Ok(left.sigma + w * (right.sigma - left.sigma))
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn check_positive(pairs: &[(&'static str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v > 0.0) {
            return Err(Error::Domain {
                name,
                value: *v,
                constraint: "must be positive",
            });
        }
    }
    Ok(())
}

/// Standard Black-Scholes value. At `sigma = 0` the value degenerates to
/// the discounted intrinsic on the forward.
pub fn bs_price(
    spot: f64,
    strike: f64,
    rate: f64,
    dividend: f64,
    sigma: f64,
    tau: f64,
    kind: OptionKind,
) -> Result<f64> {
    check_positive(&[("spot", spot), ("strike", strike), ("tau", tau)])?;
    if !(sigma >= 0.0) {
        return Err(Error::Domain {
            name: "sigma",
            value: sigma,
            constraint: "must be nonnegative",
        });
    }
    let df_div = (-dividend * tau).exp();
    let df_rate = (-rate * tau).exp();
    if sigma == 0.0 {
        let intrinsic = match kind {
            OptionKind::Call => spot * df_div - strike * df_rate,
            OptionKind::Put => strike * df_rate - spot * df_div,
        };
        return Ok(intrinsic.max(0.0));
    }
    let vol_sqrt_tau = sigma * tau.sqrt();
    let d1 = ((spot / strike).ln() + (rate - dividend + 0.5 * sigma * sigma) * tau) / vol_sqrt_tau;
    let d2 = d1 - vol_sqrt_tau;
    Ok(match kind {
        OptionKind::Call => spot * df_div * norm_cdf(d1) - strike * df_rate * norm_cdf(d2),
        OptionKind::Put => strike * df_rate * norm_cdf(-d2) - spot * df_div * norm_cdf(-d1),
    })
}

/// Sensitivity of the Black-Scholes value to the volatility; identical for
/// calls and puts.
pub fn bs_vega(
    spot: f64,
    strike: f64,
    rate: f64,
    dividend: f64,
    sigma: f64,
    tau: f64,
) -> Result<f64> {
    check_positive(&[
        ("spot", spot),
        ("strike", strike),
        ("tau", tau),
        ("sigma", sigma),
    ])?;
    let vol_sqrt_tau = sigma * tau.sqrt();
    let d1 = ((spot / strike).ln() + (rate - dividend + 0.5 * sigma * sigma) * tau) / vol_sqrt_tau;
    Ok(spot * (-dividend * tau).exp() * norm_pdf(d1) * tau.sqrt())
}

/// Inverts Black-Scholes for the volatility reproducing the quoted price to
/// within `1e-8 · spot`.
pub fn implied_vol(quote: &OptionQuote) -> Result<f64> {
    quote.validate()?;
    let tau = quote.maturity;
    let df_div = (-quote.dividend * tau).exp();
    let df_rate = (-quote.rate * tau).exp();
    let (lower, upper) = match quote.kind {
        OptionKind::Call => (
            (quote.spot * df_div - quote.strike * df_rate).max(0.0),
            quote.spot * df_div,
        ),
        OptionKind::Put => (
            (quote.strike * df_rate - quote.spot * df_div).max(0.0),
            quote.strike * df_rate,
        ),
    };
    if quote.price <= lower {
        return Err(Error::NoArbitrage {
            price: quote.price,
            bound: lower,
            side: "intrinsic",
        });
    }
    if quote.price >= upper {
        return Err(Error::NoArbitrage {
            price: quote.price,
            bound: upper,
            side: "upper",
        });
    }

    let price_of = |sigma: f64| -> Result<f64> {
        bs_price(
            quote.spot,
            quote.strike,
            quote.rate,
            quote.dividend,
            sigma,
            tau,
            quote.kind,
        )
    };
    let tolerance = 1e-8 * quote.spot;
    let (mut lo, mut hi) = VOL_BRACKET;
    let f_lo = price_of(lo)? - quote.price;
    let f_hi = price_of(hi)? - quote.price;
    if f_lo > 0.0 {
        // Price below the vanishing-volatility value but above intrinsic:
        // the root sits under the bracket floor.
        return Ok(lo);
    }
    if f_hi < 0.0 {
        return Err(Error::NonConvergence {
            what: "implied volatility (price above the bracket ceiling)",
            iterations: 0,
        });
    }

    let mut sigma = 0.5 * (lo + hi);
    for iteration in 0..MAX_ITERATIONS {
        let diff = price_of(sigma)? - quote.price;
        if diff.abs() <= tolerance {
            return Ok(sigma);
        }
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        // Newton step once the bracket is meaningful; fall back to bisection
        // whenever the step leaves the bracket or vega degenerates.
        let mut next = f64::NAN;
        if iteration >= 8 {
            let vega = bs_vega(
                quote.spot,
                quote.strike,
                quote.rate,
                quote.dividend,
                sigma,
                tau,
            )?;
            if vega > 1e-12 {
                let candidate = sigma - diff / vega;
                if candidate > lo && candidate < hi {
                    next = candidate;
                }
            }
        }
        sigma = if next.is_finite() {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence {
        what: "implied volatility",
        iterations: MAX_ITERATIONS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_volatility_is_discounted_intrinsic() {
        let call = bs_price(100.0, 80.0, 0.05, 0.01, 0.0, 2.0, OptionKind::Call).unwrap();
        let expected = 100.0 * (-0.02_f64).exp() - 80.0 * (-0.1_f64).exp();
        assert!((call - expected).abs() < 1e-12);
        let put = bs_price(100.0, 80.0, 0.05, 0.01, 0.0, 2.0, OptionKind::Put).unwrap();
        assert_eq!(put, 0.0);
    }

    #[test]
    fn atm_one_year_value_matches_quadrature() {
        // Oracle: integrate the call payoff against the closed-form
        // lognormal terminal density by Simpson's rule.
        let (spot, strike, sigma, tau) = (100.0_f64, 100.0_f64, 0.2_f64, 1.0_f64);
        let mu = spot.ln() - 0.5 * sigma * sigma * tau;
        let sd = sigma * tau.sqrt();
        let n = 20_000;
        let (lo, hi) = (strike, 1000.0);
        let h = (hi - lo) / n as f64;
        let density = |s: f64| {
            (-(s.ln() - mu).powi(2) / (2.0 * sd * sd)).exp()
                / (s * sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut integral = 0.0;
        for i in 0..=n {
            let s = lo + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            integral += w * (s - strike) * density(s);
        }
        integral *= h / 3.0;
        let model = bs_price(spot, strike, 0.0, 0.0, sigma, tau, OptionKind::Call).unwrap();
        assert!((model - 7.9656).abs() < 1e-3);
        assert!((model - integral).abs() < 1e-3);
    }

    #[test]
    fn put_call_parity_on_random_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let spot = 50.0 + rng.random::<f64>() * 150.0;
            let strike = 50.0 + rng.random::<f64>() * 150.0;
            let rate = rng.random::<f64>() * 0.1;
            let dividend = rng.random::<f64>() * 0.05;
            let sigma = 0.05 + rng.random::<f64>() * 0.8;
            let tau = 0.05 + rng.random::<f64>() * 3.0;
            let call =
                bs_price(spot, strike, rate, dividend, sigma, tau, OptionKind::Call).unwrap();
            let put = bs_price(spot, strike, rate, dividend, sigma, tau, OptionKind::Put).unwrap();
            let forward_gap = spot * (-dividend * tau).exp() - strike * (-rate * tau).exp();
            assert!((call - put - forward_gap).abs() < 1e-10);
        }
    }

    #[test]
    fn vega_matches_central_differences_and_parity() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let spot = 50.0 + rng.random::<f64>() * 150.0;
            let strike = 50.0 + rng.random::<f64>() * 150.0;
            let rate = rng.random::<f64>() * 0.08;
            let sigma = 0.05 + rng.random::<f64>() * 0.8;
            let tau = 0.1 + rng.random::<f64>() * 2.0;
            let h = 1e-6;
            let up = bs_price(spot, strike, rate, 0.0, sigma + h, tau, OptionKind::Call).unwrap();
            let dn = bs_price(spot, strike, rate, 0.0, sigma - h, tau, OptionKind::Call).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let vega = bs_vega(spot, strike, rate, 0.0, sigma, tau).unwrap();
            assert!(vega > 0.0);
            assert!((vega - fd).abs() < 1e-6 * vega.max(1.0));
            let up_p = bs_price(spot, strike, rate, 0.0, sigma + h, tau, OptionKind::Put).unwrap();
            let dn_p = bs_price(spot, strike, rate, 0.0, sigma - h, tau, OptionKind::Put).unwrap();
            assert!(((up_p - dn_p) / (2.0 * h) - vega).abs() < 1e-6 * vega.max(1.0));
        }
    }

    #[test]
    fn deep_itm_vega_vanishes_at_small_volatility() {
        let vega = bs_vega(100.0, 20.0, 0.02, 0.0, 0.01, 0.5).unwrap();
        assert!(vega >= 0.0 && vega < 1e-12);
    }

    #[test]
    fn inversion_round_trip() {
        let sigma = 0.45;
        let price = bs_price(100.0, 110.0, 0.03, 0.0, sigma, 0.75, OptionKind::Call).unwrap();
        let quote = OptionQuote {
            strike: 110.0,
            price,
            kind: OptionKind::Call,
            maturity: 0.75,
            spot: 100.0,
            rate: 0.03,
            dividend: 0.0,
        };
        let recovered = implied_vol(&quote).unwrap();
        assert!((recovered - sigma).abs() < 1e-8);
    }

    #[test]
    fn price_below_intrinsic_is_rejected() {
        let quote = OptionQuote {
            strike: 80.0,
            price: 100.0 - 80.0 * (-0.05_f64).exp() - 1e-4,
            kind: OptionKind::Call,
            maturity: 1.0,
            spot: 100.0,
            rate: 0.05,
            dividend: 0.0,
        };
        assert!(matches!(
            implied_vol(&quote),
            Err(Error::NoArbitrage {
                side: "intrinsic",
                ..
            })
        ));
    }

    #[test]
    fn tiny_out_of_the_money_price_inverts() {
        // The hardest quoted shape: a 0.45 price on a far out-of-the-money
        // one-month call over a four-figure index level.
        let quote = OptionQuote {
            strike: 2180.0,
            price: 0.45,
            kind: OptionKind::Call,
            maturity: 1.0 / 12.0,
            spot: 2050.0,
            rate: 0.005,
            dividend: 0.0,
        };
        let sigma = implied_vol(&quote).unwrap();
        assert!(sigma > 0.0 && sigma < 1.0, "sigma = {sigma}");
        let back = bs_price(
            quote.spot,
            quote.strike,
            quote.rate,
            quote.dividend,
            sigma,
            quote.maturity,
            quote.kind,
        )
        .unwrap();
        assert!((back - quote.price).abs() <= 1e-8 * quote.spot);
    }

    #[test]
    fn call_price_is_increasing_in_volatility() {
        let mut last = 0.0;
        for i in 1..50 {
            let sigma = i as f64 * 0.05;
            let p = bs_price(100.0, 105.0, 0.02, 0.0, sigma, 0.5, OptionKind::Call).unwrap();
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn curve_sorts_points_and_interpolates() {
        let curve = IvCurve::new(
            vec![
                IvPoint {
                    moneyness: 1.2,
                    sigma: 0.25,
                },
                IvPoint {
                    moneyness: 0.8,
                    sigma: 0.35,
                },
                IvPoint {
                    moneyness: 1.0,
                    sigma: 0.20,
                },
            ],
            100.0,
            1.0,
            0.02,
            0.0,
        )
        .unwrap();
        assert_eq!(curve.points()[0].moneyness, 0.8);
        assert!((curve.interpolate(0.9).unwrap() - 0.275).abs() < 1e-12);
        assert_eq!(curve.interpolate(1.2).unwrap(), 0.25);
        assert!(curve.interpolate(1.3).is_err());
    }

    #[test]
    fn curve_rejects_duplicates_and_bad_sigmas() {
        let dup = IvCurve::new(
            vec![
                IvPoint {
                    moneyness: 1.0,
                    sigma: 0.2,
                },
                IvPoint {
                    moneyness: 1.0,
                    sigma: 0.3,
                },
            ],
            100.0,
            1.0,
            0.0,
            0.0,
        );
        assert!(dup.is_err());
        let neg = IvCurve::new(
            vec![IvPoint {
                moneyness: 1.0,
                sigma: -0.2,
            }],
            100.0,
            1.0,
            0.0,
            0.0,
        );
        assert!(neg.is_err());
    }
}
