//! Tempered log-sum-exp, its softmax gradient weights, and the softplus
//! reparameterization.
//!
//! `LSE_T(u) = T · log Σ exp(u_i / T)` is a smooth upper bound on the
//! maximum: `max(u) ≤ LSE_T(u) ≤ max(u) + T·log m`. All entry points use
//! the shifted form `max(u) + T·log Σ exp((u_i − max) / T)` so that small
//! temperatures never overflow.

use crate::error::{Error, Result};

/// A finite real vector paired with a positive temperature.
#[derive(Debug, Clone, Copy)]
pub struct TemperedVector<'a> {
    temperature: f64,
    entries: &'a [f64],
}

impl<'a> TemperedVector<'a> {
    /// Validates `temperature > 0`, non-empty entries, and finiteness.
    pub fn new(temperature: f64, entries: &'a [f64]) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Domain {
                name: "temperature",
                value: temperature,
                constraint: "must be a finite positive real",
            });
        }
        if entries.is_empty() {
            return Err(Error::Empty { what: "entries" });
        }
        if let Some(&bad) = entries.iter().find(|e| !e.is_finite()) {
            return Err(Error::Domain {
                name: "entry",
                value: bad,
                constraint: "all entries must be finite",
            });
        }
        Ok(Self {
            temperature,
            entries,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn entries(&self) -> &[f64] {
        self.entries
    }
}

/// `T · log Σ exp(u_i / T)`, evaluated in the overflow-safe shifted form.
pub fn lse(v: &TemperedVector) -> f64 {
    lse_raw(v.temperature, v.entries)
}

/// Gradient of [`lse`] with respect to the entries: the softmax weights
/// `p_i = exp(u_i/T) / Σ_j exp(u_j/T)`. Each `p_i ∈ (0, 1]` and the weights
/// sum to one; entries more than ~700 temperatures below the maximum flush
/// to zero in double precision.
pub fn lse_weights(v: &TemperedVector) -> Vec<f64> {
    let mut out = vec![0.0; v.entries.len()];
    lse_weights_into(v.temperature, v.entries, &mut out);
    out
}

/// `log(1 + exp(x))`, using the stable branch `max(x, 0) + log1p(exp(-|x|))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`]: `log(exp(y) − 1)` for `y > 0`.
pub fn softplus_inv(y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain {
            name: "y",
            value: y,
            constraint: "softplus_inv requires y > 0",
        });
    }
    // Split at ln 2 so neither exp_m1 nor ln_1p loses precision.
    if y > std::f64::consts::LN_2 {
        Ok(y + (-(-y).exp()).ln_1p())
    } else {
        Ok(y.exp_m1().ln())
    }
}

/// Derivative of softplus: the logistic sigmoid, stable on both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Unvalidated kernel shared with the network forward/backward passes.
pub(crate) fn lse_raw(temperature: f64, entries: &[f64]) -> f64 {
    debug_assert!(!entries.is_empty() && temperature > 0.0);
    let max = entries.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = entries
        .iter()
        .map(|u| ((u - max) / temperature).exp())
        .sum();
    max + temperature * sum.ln()
}

pub(crate) fn lse_weights_into(temperature: f64, entries: &[f64], out: &mut [f64]) {
    debug_assert_eq!(entries.len(), out.len());
    let max = entries.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, u) in out.iter_mut().zip(entries) {
        let e = ((u - max) / temperature).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
