//! Density extraction by twice differentiating the call-price curve,
//! pricing back out of a density, the interpolation/parametric baselines,
//! and the comparison metrics.

use crate::error::{Error, Result};
use crate::pricing::{bs_price, IvPoint, OptionKind, OptionQuote};

/// Uniformly spaced strikes carrying the market metadata needed to price on
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct StrikeGrid {
    strikes: Vec<f64>,
    spacing: f64,
    pub spot: f64,
    pub rate: f64,
    pub dividend: f64,
    pub maturity: f64,
}

impl StrikeGrid {
    pub fn new(
        min: f64,
        max: f64,
        count: usize,
        spot: f64,
        rate: f64,
        dividend: f64,
        maturity: f64,
    ) -> Result<Self> {
        if count < 5 {
            return Err(Error::InsufficientData {
                what: "grid points",
                required: 5,
                got: count,
            });
        }
        if !(min > 0.0 && max > min) {
            return Err(Error::Domain {
                name: "strike range",
                value: min,
                constraint: "needs 0 < min < max",
            });
        }
        let spacing = (max - min) / (count - 1) as f64;
        let strikes = (0..count).map(|i| min + i as f64 * spacing).collect();
        Ok(Self {
            strikes,
            spacing,
            spot,
            rate,
            dividend,
            maturity,
        })
    }

    /// Default evaluation grid: moneyness 0.5–1.5 of spot on 401 strikes,
    /// wide enough that the truncated tail mass is negligible for the
    /// volatility levels in play.
    pub fn default_for(spot: f64, rate: f64, dividend: f64, maturity: f64) -> Self {
        Self::new(0.5 * spot, 1.5 * spot, 401, spot, rate, dividend, maturity)
            .expect("default grid parameters are valid")
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }

    fn matches(&self, other: &StrikeGrid) -> bool {
        self.strikes.len() == other.strikes.len()
            && self
                .strikes
                .iter()
                .zip(&other.strikes)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * self.spacing)
    }
}

/// A discretized density on a strike grid. `raw_density` keeps the signed
/// second differences for diagnostics; `density` is clipped at zero and
/// renormalized to unit mass.
#[derive(Debug, Clone)]
pub struct RndEstimate {
    pub grid: StrikeGrid,
    pub density: Vec<f64>,
    pub raw_density: Vec<f64>,
    /// Trapezoid mass of the clipped density before renormalization.
    pub raw_mass: f64,
}

impl RndEstimate {
    /// True when the pre-normalization mass strays outside `[0.9, 1.1]`,
    /// usually a sign of a grid that is too narrow.
    pub fn mass_warning(&self) -> bool {
        !(0.9..=1.1).contains(&self.raw_mass)
    }
}

fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    spacing * (0.5 * values[0] + interior + 0.5 * values[values.len() - 1])
}

/// Breeden-Litzenberger extraction: volatilities from `iv_model`
/// (moneyness → sigma), call prices per strike, discrete second strike
/// derivative, scaled by `e^{rτ}`. Interior points use the central stencil;
/// endpoints reuse the one-sided stencil of their nearest interior
/// neighbor.
pub fn extract_rnd(iv_model: impl Fn(f64) -> f64, grid: &StrikeGrid) -> Result<RndEstimate> {
    let n = grid.len();
    let mut prices = Vec::with_capacity(n);
    for &strike in grid.strikes() {
        let sigma = iv_model(strike / grid.spot);
        if !sigma.is_finite() {
            return Err(Error::NonFinite {
                what: "implied volatility",
                context: format!("strike {strike}"),
            });
        }
        prices.push(bs_price(
            grid.spot,
            strike,
            grid.rate,
            grid.dividend,
            sigma,
            grid.maturity,
            OptionKind::Call,
        )?);
    }

    let h2 = grid.spacing * grid.spacing;
    let scale = (grid.rate * grid.maturity).exp();
    let mut raw = vec![0.0; n];
    for i in 1..n - 1 {
        raw[i] = scale * (prices[i - 1] - 2.0 * prices[i] + prices[i + 1]) / h2;
    }
    raw[0] = scale * (prices[0] - 2.0 * prices[1] + prices[2]) / h2;
    raw[n - 1] = scale * (prices[n - 3] - 2.0 * prices[n - 2] + prices[n - 1]) / h2;

    let clipped: Vec<f64> = raw.iter().map(|d| d.max(0.0)).collect();
    let raw_mass = trapezoid(&clipped, grid.spacing);
    if !(raw_mass > 0.0) {
        return Err(Error::NonFinite {
            what: "density mass",
            context: "clipped density integrates to zero".into(),
        });
    }
    let density = clipped.iter().map(|d| d / raw_mass).collect();
    Ok(RndEstimate {
        grid: grid.clone(),
        density,
        raw_density: raw,
        raw_mass,
    })
}

/// Prices a call off the density:
/// `Ĉ(K) = e^{-rτ} ∫_K^∞ (s − K) f(s) ds`, by trapezoid quadrature over the
/// grid with a linear sub-cell correction at `K`. Strikes at or above the
/// grid maximum price to zero; strikes below the grid minimum are a domain
/// error.
pub fn price_from_rnd(rnd: &RndEstimate, strike: f64) -> Result<f64> {
    let strikes = rnd.grid.strikes();
    let n = strikes.len();
    let h = rnd.grid.spacing();
    if strike < strikes[0] {
        return Err(Error::Domain {
            name: "strike",
            value: strike,
            constraint: "below the grid minimum",
        });
    }
    if strike >= strikes[n - 1] {
        return Ok(0.0);
    }
    let cell = ((strike - strikes[0]) / h) as usize;
    let cell = cell.min(n - 2);

    // Linear density within the cut cell.
    let f_left = rnd.density[cell];
    let f_right = rnd.density[cell + 1];
    let slope = (f_right - f_left) / h;
    let f_at_strike = f_left + slope * (strike - strikes[cell]);
    let width = strikes[cell + 1] - strike;
    let mut integral = f_at_strike * width * width / 2.0 + slope * width * width * width / 3.0;

    for i in cell + 1..n - 1 {
        integral += h
            * 0.5
            * ((strikes[i] - strike) * rnd.density[i]
                + (strikes[i + 1] - strike) * rnd.density[i + 1]);
    }
    Ok((-rnd.grid.rate * rnd.grid.maturity).exp() * integral)
}

/// Per-strike absolute pricing errors against the quotes, plus their mean.
#[derive(Debug, Clone)]
pub struct PricingReport {
    pub strikes: Vec<f64>,
    pub abs_errors: Vec<f64>,
    pub mae: f64,
}

pub fn pricing_report(rnd: &RndEstimate, quotes: &[OptionQuote]) -> Result<PricingReport> {
    if quotes.is_empty() {
        return Err(Error::Empty { what: "quotes" });
    }
    let mut strikes = Vec::with_capacity(quotes.len());
    let mut abs_errors = Vec::with_capacity(quotes.len());
    for q in quotes {
        let model = price_from_rnd(rnd, q.strike)?;
        strikes.push(q.strike);
        abs_errors.push((q.price - model).abs());
    }
    let mae = abs_errors.iter().sum::<f64>() / abs_errors.len() as f64;
    Ok(PricingReport {
        strikes,
        abs_errors,
        mae,
    })
}

/// C¹ piecewise-quadratic interpolant through the knots with a natural
/// start (zero leading curvature) and constant extrapolation of the
/// boundary values.
#[derive(Debug, Clone)]
pub struct QuadraticSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
}

impl QuadraticSpline {
    pub fn value(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x <= self.knots[0] {
            return self.values[0];
        }
        if x >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let idx = self.knots.partition_point(|k| *k <= x) - 1;
        let idx = idx.min(n - 2);
        let dx = x - self.knots[idx];
        self.values[idx] + self.slopes[idx] * dx + self.curvatures[idx] * dx * dx
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Per-interval coefficients `(value, slope, curvature)`.
    pub fn coefficients(&self) -> Vec<(f64, f64, f64)> {
        (0..self.knots.len() - 1)
            .map(|i| (self.values[i], self.slopes[i], self.curvatures[i]))
            .collect()
    }
}

/// Fits the quadratic spline through the points (sorted by moneyness).
pub fn quadratic_spline(points: &[IvPoint]) -> Result<QuadraticSpline> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            what: "spline knots",
            required: 2,
            got: points.len(),
        });
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.moneyness.total_cmp(&b.moneyness));
    for pair in sorted.windows(2) {
        if pair[1].moneyness <= pair[0].moneyness {
            return Err(Error::Domain {
                name: "knot",
                value: pair[1].moneyness,
                constraint: "knots must be distinct",
            });
        }
    }
    let knots: Vec<f64> = sorted.iter().map(|p| p.moneyness).collect();
    let values: Vec<f64> = sorted.iter().map(|p| p.sigma).collect();
    let intervals = knots.len() - 1;
    let mut slopes = vec![0.0; intervals];
    let mut curvatures = vec![0.0; intervals];

    // Natural start: the first piece is linear; thereafter C¹ continuity
    // forces each curvature from the secant and incoming slope.
    slopes[0] = (values[1] - values[0]) / (knots[1] - knots[0]);
    curvatures[0] = 0.0;
    for i in 1..intervals {
        let h_prev = knots[i] - knots[i - 1];
        slopes[i] = slopes[i - 1] + 2.0 * curvatures[i - 1] * h_prev;
        let h = knots[i + 1] - knots[i];
        let secant = (values[i + 1] - values[i]) / h;
        curvatures[i] = (secant - slopes[i]) / h;
    }
    Ok(QuadraticSpline {
        knots,
        values,
        slopes,
        curvatures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParametricFamily {
    Lognormal,
    Normal,
}

/// Result of a two-parameter density fit.
#[derive(Debug, Clone)]
pub struct ParametricFit {
    pub rnd: RndEstimate,
    /// Fitted `(location, scale)`: log-mean/log-sd for the lognormal
    /// family, mean/sd for the normal family.
    pub params: (f64, f64),
    /// Set when the optimum landed on the search boundary.
    pub degenerate: bool,
    pub objective: f64,
}

fn family_density_on(
    grid: &StrikeGrid,
    family: ParametricFamily,
    loc: f64,
    scale: f64,
) -> Vec<f64> {
    let norm = 1.0 / (scale * (2.0 * std::f64::consts::PI).sqrt());
    grid.strikes()
        .iter()
        .map(|&s| match family {
            ParametricFamily::Lognormal => {
                let z = (s.ln() - loc) / scale;
                norm / s * (-0.5 * z * z).exp()
            }
            ParametricFamily::Normal => {
                let z = (s - loc) / scale;
                norm * (-0.5 * z * z).exp()
            }
        })
        .collect()
}

fn estimate_from_density(grid: &StrikeGrid, raw: Vec<f64>) -> RndEstimate {
    let clipped: Vec<f64> = raw.iter().map(|d| d.max(0.0)).collect();
    let raw_mass = trapezoid(&clipped, grid.spacing()).max(f64::MIN_POSITIVE);
    let density = clipped.iter().map(|d| d / raw_mass).collect();
    RndEstimate {
        grid: grid.clone(),
        density,
        raw_density: raw,
        raw_mass,
    }
}

/// Least-squares fit of a two-parameter density family to quoted prices,
/// with prices implied by the candidate density through grid quadrature.
/// Zoomed grid search: deterministic, derivative-free.
pub fn fit_parametric(
    quotes: &[OptionQuote],
    family: ParametricFamily,
    grid: &StrikeGrid,
) -> Result<ParametricFit> {
    if quotes.len() < 2 {
        return Err(Error::InsufficientData {
            what: "quotes",
            required: 2,
            got: quotes.len(),
        });
    }
    let tau = grid.maturity;
    let forward = grid.spot * ((grid.rate - grid.dividend) * tau).exp();
    // Location/scale search boxes, initialized at the forward.
    let (loc_center, loc_half, scale_lo, scale_hi) = match family {
        ParametricFamily::Lognormal => (forward.ln() - 0.02, 0.6, 1e-3, 1.2),
        ParametricFamily::Normal => (forward, 0.6 * forward, 1e-3 * forward, 0.8 * forward),
    };

    let objective = |loc: f64, scale: f64| -> Result<f64> {
        let estimate = estimate_from_density(grid, family_density_on(grid, family, loc, scale));
        let mut sse = 0.0;
        for q in quotes {
            let model = price_from_rnd(&estimate, q.strike)?;
            sse += (model - q.price) * (model - q.price);
        }
        Ok(sse)
    };

    let mut best = (loc_center, 0.5 * (scale_lo + scale_hi), f64::INFINITY);
    let mut loc_lo = loc_center - loc_half;
    let mut loc_hi = loc_center + loc_half;
    let mut s_lo = scale_lo;
    let mut s_hi = scale_hi;
    const POINTS: usize = 17;
    const ROUNDS: usize = 8;
    for _ in 0..ROUNDS {
        let mut round_best = (f64::NAN, f64::NAN, f64::INFINITY);
        for i in 0..POINTS {
            let loc = loc_lo + (loc_hi - loc_lo) * i as f64 / (POINTS - 1) as f64;
            for j in 0..POINTS {
                let scale = s_lo + (s_hi - s_lo) * j as f64 / (POINTS - 1) as f64;
                let sse = objective(loc, scale)?;
                if sse < round_best.2 {
                    round_best = (loc, scale, sse);
                }
            }
        }
        if round_best.2 < best.2 {
            best = round_best;
        }
        // Shrink the box around the incumbent, never leaving the global one.
        let loc_span = (loc_hi - loc_lo) * 0.2;
        let scale_span = (s_hi - s_lo) * 0.2;
        loc_lo = (round_best.0 - loc_span * 0.5).max(loc_center - loc_half);
        loc_hi = (round_best.0 + loc_span * 0.5).min(loc_center + loc_half);
        s_lo = (round_best.1 - scale_span * 0.5).max(scale_lo);
        s_hi = (round_best.1 + scale_span * 0.5).min(scale_hi);
    }

    // Degenerate when the optimum sits on the global search boundary.
    let loc_tol = 1e-3 * loc_half;
    let scale_tol = 1e-3 * (scale_hi_global(family, forward) - scale_lo);
    let on_boundary = (best.0 - (loc_center - loc_half)).abs() <= loc_tol
        || ((loc_center + loc_half) - best.0).abs() <= loc_tol
        || (best.1 - scale_lo).abs() <= scale_tol
        || (scale_hi_global(family, forward) - best.1).abs() <= scale_tol;

    let rnd = estimate_from_density(grid, family_density_on(grid, family, best.0, best.1));
    Ok(ParametricFit {
        rnd,
        params: (best.0, best.1),
        degenerate: on_boundary,
        objective: best.2,
    })
}

fn scale_hi_global(family: ParametricFamily, forward: f64) -> f64 {
    match family {
        ParametricFamily::Lognormal => 1.2,
        ParametricFamily::Normal => 0.8 * forward,
    }
}

/// Trapezoid integral of `|a − b|`; in `[0, 2]` for normalized densities on
/// a common grid.
pub fn l1_distance(a: &RndEstimate, b: &RndEstimate) -> Result<f64> {
    if !a.grid.matches(&b.grid) {
        return Err(Error::GridMismatch {
            why: "densities live on different strike grids",
        });
    }
    let diff: Vec<f64> = a
        .density
        .iter()
        .zip(&b.density)
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(trapezoid(&diff, a.grid.spacing()))
}

/// Closed-form lognormal terminal density implied by flat Black-Scholes
/// volatility; the oracle for the extraction pipeline.
pub fn lognormal_terminal_density(
    spot: f64,
    rate: f64,
    dividend: f64,
    sigma: f64,
    tau: f64,
    s: f64,
) -> f64 {
    let mu = spot.ln() + (rate - dividend - 0.5 * sigma * sigma) * tau;
    let sd = sigma * tau.sqrt();
    let z = (s.ln() - mu) / sd;
    (-0.5 * z * z).exp() / (s * sd * (2.0 * std::f64::consts::PI).sqrt())
}
