//! Pretraining on the liquid proxy, transfer fine-tuning on illiquid
//! quotes, and the divergence-based early-stopping rule.
//!
//! Fine-tuning tracks the objective `B(t) = R̂(t) + c · √KL(w_t ‖ w_0)`
//! against the pretrained weights and halts at its first (smoothed)
//! stationary point: the epoch where the marginal loss reduction no longer
//! pays for the drift away from the prior.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::net::{DeepLseNet, SieveBox};
use crate::pricing::{IvCurve, IvPoint};

/// Adam moment-decay and stabilization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Batching {
    /// The datasets here are tiny; full-batch is the default.
    #[default]
    Full,
    Size(usize),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batching: Batching,
    pub seed: u64,
    pub adam: AdamParams,
    pub sieve: Option<SieveBox>,
    /// Project onto the sieve box every this many epochs (when a box is set).
    pub project_every: usize,
    /// Moving-average window for the stopping rule's derivative estimate.
    pub stationarity_window: usize,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, max_epochs: usize) -> Self {
        Self {
            learning_rate,
            max_epochs,
            batching: Batching::Full,
            seed: 0,
            adam: AdamParams::default(),
            sieve: None,
            project_every: 1,
            stationarity_window: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Domain {
                name: "learning_rate",
                value: self.learning_rate,
                constraint: "must be positive",
            });
        }
        if self.max_epochs == 0 {
            return Err(Error::Domain {
                name: "max_epochs",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        if self.project_every == 0 {
            return Err(Error::Domain {
                name: "project_every",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        if self.stationarity_window == 0 {
            return Err(Error::Domain {
                name: "stationarity_window",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        Ok(())
    }
}

/// Gaussian prior centered at the pretrained weights, with the posterior
/// width and complexity weight of the stopping objective.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    /// Flattened pretrained parameter vector.
    pub anchor: Vec<f64>,
    pub prior_std: f64,
    pub posterior_std: f64,
    /// Weight `c` multiplying `√KL` in the stopping objective.
    pub complexity_weight: f64,
}

impl PriorSpec {
    pub fn isotropic(anchor: Vec<f64>, complexity_weight: f64) -> Self {
        Self {
            anchor,
            prior_std: 1.0,
            posterior_std: 1.0,
            complexity_weight,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("prior_std", self.prior_std),
            ("posterior_std", self.posterior_std),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    constraint: "must be positive",
                });
            }
        }
        if !(self.complexity_weight >= 0.0) {
            return Err(Error::Domain {
                name: "complexity_weight",
                value: self.complexity_weight,
                constraint: "must be nonnegative",
            });
        }
        Ok(())
    }
}

/// KL divergence between isotropic Gaussians `N(w, τ²I)` and
/// `N(w₀, σ²I)`:
/// `½ (p τ²/σ² + ‖w − w₀‖²/σ² − p + p ln(σ²/τ²))`.
pub fn kl_isotropic(w: &[f64], prior: &PriorSpec) -> f64 {
    debug_assert_eq!(w.len(), prior.anchor.len());
    let p = w.len() as f64;
    let sigma_sq = prior.prior_std * prior.prior_std;
    let tau_sq = prior.posterior_std * prior.posterior_std;
    let drift: f64 = w
        .iter()
        .zip(&prior.anchor)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * (tau_sq / sigma_sq * p + drift / sigma_sq - p + p * (sigma_sq / tau_sq).ln())
}

/// One row of the fine-tuning trace.
#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Empirical risk `R̂` (mean squared error on the fine-tuning points).
    pub risk: f64,
    pub kl: f64,
    /// `B = R̂ + c √KL`.
    pub objective: f64,
    /// Order-independent hash of the parameter snapshot.
    pub snapshot_hash: u64,
}

/// Fine-tuning history plus the chosen stopping epoch.
#[derive(Debug, Clone)]
pub struct FineTuneTrace {
    pub epochs: Vec<EpochRecord>,
    pub stop_epoch: usize,
    pub stopped_early: bool,
}

fn hash_params(params: &[f64]) -> u64 {
    // FNV-1a over the raw bit patterns.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for byte in p.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}

struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: usize,
}

impl AdamState {
    fn new(dim: usize) -> Self {
        Self {
            first: vec![0.0; dim],
            second: vec![0.0; dim],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &AdamParams) {
        self.step += 1;
        let bias1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bias2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

fn mse(net: &DeepLseNet, inputs: &[Vec<f64>], targets: &[f64]) -> f64 {
    let n = inputs.len() as f64;
    inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| {
            let y = net.forward(x).expect("validated dimensions");
            (y - t) * (y - t)
        })
        .sum::<f64>()
        / n
}

/// One Adam epoch over the dataset, honoring the batching mode; returns the
/// full-batch loss before the step.
#[allow(clippy::too_many_arguments)]
fn run_epoch(
    shape: &DeepLseNet,
    params: &mut Vec<f64>,
    adam: &mut AdamState,
    inputs: &[Vec<f64>],
    targets: &[f64],
    cfg: &TrainConfig,
    epoch: usize,
    order: &mut [usize],
    rng: &mut ChaCha12Rng,
) -> Result<f64> {
    let net = shape.unflatten(params)?;
    let loss = match cfg.batching {
        Batching::Full => {
            let (loss, grads) = net.loss_and_gradient(inputs, targets)?;
            adam.update(params, &grads.flatten(), cfg.learning_rate, &cfg.adam);
            loss
        }
        Batching::Size(batch) => {
            let batch = batch.max(1).min(inputs.len());
            order.shuffle(rng);
            let mut epoch_loss = 0.0;
            let mut seen = 0usize;
            for chunk in order.chunks(batch) {
                let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
                let net = shape.unflatten(params)?;
                let (loss, grads) = net.loss_and_gradient(&xs, &ys)?;
                adam.update(params, &grads.flatten(), cfg.learning_rate, &cfg.adam);
                epoch_loss += loss * xs.len() as f64;
                seen += xs.len();
            }
            epoch_loss / seen as f64
        }
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: "training loss",
            context: format!("epoch {epoch}"),
        });
    }
    if let Some(sieve) = &cfg.sieve {
        if epoch % cfg.project_every == 0 {
            let projected = shape.unflatten(params)?.project_sieve(sieve);
            *params = projected.flatten();
        }
    }
    Ok(loss)
}

/// Adam minimization of the squared error between the network at each
/// curve point's moneyness and its implied volatility. Deterministic under
/// the config seed.
pub fn pretrain(net: &DeepLseNet, curve: &IvCurve, cfg: &TrainConfig) -> Result<DeepLseNet> {
    cfg.validate()?;
    if curve.len() < 3 {
        return Err(Error::InsufficientData {
            what: "curve points",
            required: 3,
            got: curve.len(),
        });
    }
    let inputs: Vec<Vec<f64>> = curve.points().iter().map(|p| vec![p.moneyness]).collect();
    let targets: Vec<f64> = curve.points().iter().map(|p| p.sigma).collect();
    fit(net, &inputs, &targets, cfg)
}

/// Plain Adam fit of the network to `(input, target)` pairs.
pub fn fit(
    net: &DeepLseNet,
    inputs: &[Vec<f64>],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<DeepLseNet> {
    Ok(fit_traced(net, inputs, targets, cfg)?.0)
}

/// [`fit`] that also returns the pre-step loss of every epoch.
pub fn fit_traced(
    net: &DeepLseNet,
    inputs: &[Vec<f64>],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(DeepLseNet, Vec<f64>)> {
    cfg.validate()?;
    let mut params = net.flatten();
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.max_epochs);
    for epoch in 1..=cfg.max_epochs {
        losses.push(run_epoch(
            net,
            &mut params,
            &mut adam,
            inputs,
            targets,
            cfg,
            epoch,
            &mut order,
            &mut rng,
        )?);
    }
    Ok((net.unflatten(&params)?, losses))
}

/// Transfer fine-tuning: starts from the pretrained weights and tracks
/// `B(t) = R̂ + c √KL` per epoch. Training halts once the smoothed
/// discrete derivative of `B` first turns nonnegative; the returned
/// snapshot is the objective's trough up to that epoch (the stationary
/// point), never the last iterate. Without a crossing it runs to
/// `max_epochs`; with `c = 0` the objective degenerates to the loss and
/// training always runs to `max_epochs`.
pub fn fine_tune(
    net0: &DeepLseNet,
    points: &[IvPoint],
    cfg: &TrainConfig,
    prior: &PriorSpec,
) -> Result<(DeepLseNet, FineTuneTrace)> {
    cfg.validate()?;
    prior.validate()?;
    if points.is_empty() {
        return Err(Error::Empty {
            what: "illiquid points",
        });
    }
    let w0 = net0.flatten();
    if w0.len() != prior.anchor.len() {
        return Err(Error::DimensionMismatch {
            what: "prior anchor",
            expected: w0.len(),
            got: prior.anchor.len(),
        });
    }
    if w0
        .iter()
        .zip(&prior.anchor)
        .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Domain {
            name: "prior anchor",
            value: f64::NAN,
            constraint: "must equal the flattened pretrained network",
        });
    }

    let inputs: Vec<Vec<f64>> = points.iter().map(|p| vec![p.moneyness]).collect();
    let targets: Vec<f64> = points.iter().map(|p| p.sigma).collect();

    let mut params = w0;
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    let record = |epoch: usize, params: &[f64], net: &DeepLseNet| -> EpochRecord {
        let risk = mse(net, &inputs, &targets);
        let kl = kl_isotropic(params, prior);
        EpochRecord {
            epoch,
            risk,
            kl,
            objective: risk + prior.complexity_weight * kl.max(0.0).sqrt(),
            snapshot_hash: hash_params(params),
        }
    };

    let mut snapshots: Vec<Vec<f64>> = vec![params.clone()];
    let mut trace = vec![record(0, &params, net0)];
    let mut objectives = vec![trace[0].objective];
    let mut stop: Option<usize> = None;

    for epoch in 1..=cfg.max_epochs {
        let loss = run_epoch(
            net0,
            &mut params,
            &mut adam,
            &inputs,
            &targets,
            cfg,
            epoch,
            &mut order,
            &mut rng,
        )?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "fine-tuning loss",
                context: format!("epoch {epoch}"),
            });
        }
        let net = net0.unflatten(&params)?;
        let rec = record(epoch, &params, &net);
        objectives.push(rec.objective);
        trace.push(rec);
        snapshots.push(params.clone());
        // With a zero complexity weight there is no divergence cost to
        // balance: B degenerates to the loss and training runs to
        // max_epochs like a plain fit.
        if prior.complexity_weight > 0.0
            && stationarity(&objectives, cfg.stationarity_window).is_some()
        {
            // The smoothed derivative crossed zero; the stationary point is
            // the objective's trough over the epochs seen so far.
            let trough = objectives
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            stop = Some(trough);
            break;
        }
    }

    let stopped_early = stop.is_some();
    let stop_epoch = stop.unwrap_or(trace.len() - 1);
    let mut chosen = net0.unflatten(&snapshots[stop_epoch])?;
    if let Some(sieve) = &cfg.sieve {
        chosen = chosen.project_sieve(sieve);
    }
    Ok((
        chosen,
        FineTuneTrace {
            epochs: trace,
            stop_epoch,
            stopped_early,
        },
    ))
}

/// Finds the first index where the moving average (over `window`) of the
/// forward differences of `series` turns nonnegative — the smoothed
/// stationary point. Early indices average over the differences available
/// so far, so a series that is flat from the start stops immediately.
/// `None` while the series keeps strictly decreasing.
pub fn stationarity(series: &[f64], window: usize) -> Option<usize> {
    let window = window.max(1);
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    for i in 0..diffs.len() {
        let start = (i + 1).saturating_sub(window);
        let avg: f64 = diffs[start..=i].iter().sum::<f64>() / (i - start + 1) as f64;
        if avg >= 0.0 {
            return Some(i);
        }
    }
    None
}
