//! The deep log-sum-exp network: an `L`-layer scalar-valued architecture
//! whose every layer applies a tempered LSE to affine scores plus a
//! nonnegative skip of the previous layer's output.
//!
//! With nonnegative skips the composed map is convex in its input, which is
//! what makes it a safe interpolator for implied-volatility curves.
//! Temperatures and skips are stored as pre-activations and realized through
//! softplus, so plain gradient steps can never leave the admissible region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::lse::{lse_raw, lse_weights_into, sigmoid, softplus, softplus_inv};

/// Floor added to the softplus of the temperature pre-activation, keeping
/// every layer strictly away from the non-smooth max during optimization.
pub const TEMP_FLOOR: f64 = 1e-3;

/// Initial realized skip weight used by [`DeepLseNet::init`].
pub const INIT_SKIP: f64 = 0.1;

/// Parameters of one layer: `K` affine pieces over the input, an optional
/// skip pre-activation per piece (absent for layer 1), and one temperature
/// pre-activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Affine slopes, `K × d`, row-major.
    pub slopes: Vec<f64>,
    /// Affine intercepts, length `K`.
    pub intercepts: Vec<f64>,
    /// Skip pre-activations (softplus gives the realized weights); `None`
    /// for the first layer.
    pub skip_raw: Option<Vec<f64>>,
    /// Temperature pre-activation; the realized temperature is
    /// `TEMP_FLOOR + softplus(temp_raw)`.
    pub temp_raw: f64,
}

impl LayerParams {
    pub fn width(&self) -> usize {
        self.intercepts.len()
    }

    pub fn temperature(&self) -> f64 {
        TEMP_FLOOR + softplus(self.temp_raw)
    }

    /// Realized nonnegative skip weights, or `None` for the first layer.
    pub fn skip_weights(&self) -> Option<Vec<f64>> {
        self.skip_raw
            .as_ref()
            .map(|raw| raw.iter().map(|&e| softplus(e)).collect())
    }

    fn slope_row(&self, k: usize, input_dim: usize) -> &[f64] {
        &self.slopes[k * input_dim..(k + 1) * input_dim]
    }
}

/// The full network: layers plus a global output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLseNet {
    input_dim: usize,
    layers: Vec<LayerParams>,
    output_bias: f64,
}

/// Mirror of [`DeepLseNet`] holding the partial derivative of a scalar loss
/// with respect to every raw parameter (skips and temperatures through their
/// softplus reparameterizations).
#[derive(Debug, Clone)]
pub struct NetGradients {
    pub layers: Vec<LayerParams>,
    pub output_bias: f64,
}

impl DeepLseNet {
    /// Builds a network with the given per-layer widths. Slopes and
    /// intercepts are drawn i.i.d. uniform on `[-scale, scale]` from a
    /// seeded generator; skips start at `INIT_SKIP` and temperatures at 1.
    /// Identical seeds give bit-identical networks.
    pub fn init(widths: &[usize], input_dim: usize, seed: u64, scale: f64) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::Empty { what: "widths" });
        }
        if let Some(&w) = widths.iter().find(|&&w| w == 0) {
            return Err(Error::Domain {
                name: "width",
                value: w as f64,
                constraint: "every layer width must be >= 1",
            });
        }
        if input_dim == 0 {
            return Err(Error::Domain {
                name: "input_dim",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut uniform = |scale: f64| (rng.random::<f64>() * 2.0 - 1.0) * scale;

        let skip_init = softplus_inv(INIT_SKIP).expect("INIT_SKIP > 0");
        let temp_init = softplus_inv(1.0 - TEMP_FLOOR).expect("temperature init > 0");

        let layers = widths
            .iter()
            .enumerate()
            .map(|(idx, &width)| LayerParams {
                slopes: (0..width * input_dim).map(|_| uniform(scale)).collect(),
                intercepts: (0..width).map(|_| uniform(scale)).collect(),
                skip_raw: (idx > 0).then(|| vec![skip_init; width]),
                temp_raw: temp_init,
            })
            .collect();

        Ok(Self {
            input_dim,
            layers,
            output_bias: 0.0,
        })
    }

    /// Assembles a network from explicit parts, validating the shape
    /// invariants (layer 1 skipless, consistent widths and input dimension).
    pub fn from_parts(
        input_dim: usize,
        layers: Vec<LayerParams>,
        output_bias: f64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty { what: "layers" });
        }
        for (idx, layer) in layers.iter().enumerate() {
            let width = layer.width();
            if width == 0 {
                return Err(Error::Domain {
                    name: "width",
                    value: 0.0,
                    constraint: "every layer width must be >= 1",
                });
            }
            if layer.slopes.len() != width * input_dim {
                return Err(Error::DimensionMismatch {
                    what: "layer slopes",
                    expected: width * input_dim,
                    got: layer.slopes.len(),
                });
            }
            match (&layer.skip_raw, idx) {
                (Some(_), 0) => {
                    return Err(Error::Domain {
                        name: "skip_raw",
                        value: f64::NAN,
                        constraint: "layer 1 carries no skip pre-activations",
                    })
                }
                (None, i) if i > 0 => {
                    return Err(Error::Domain {
                        name: "skip_raw",
                        value: f64::NAN,
                        constraint: "layers past the first need skip pre-activations",
                    })
                }
                (Some(raw), _) if raw.len() != width => {
                    return Err(Error::DimensionMismatch {
                        what: "skip pre-activations",
                        expected: width,
                        got: raw.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self {
            input_dim,
            layers,
            output_bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(LayerParams::width).collect()
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Mutable access for projection-style edits; the caller keeps the
    /// shape invariants intact.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn output_bias(&self) -> f64 {
        self.output_bias
    }

    pub fn set_output_bias(&mut self, value: f64) {
        self.output_bias = value;
    }

    /// Evaluates the recursion
    /// `z_1 = LSE_{T_1}(A x + b)`,
    /// `z_ℓ = LSE_{T_ℓ}(α z_{ℓ-1} + A x + b)`,
    /// `y = z_L + output_bias`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut scores = Vec::new();
        Ok(self.forward_inner(x, &mut scores, &mut Vec::new()))
    }

    /// One-dimensional convenience used by the implied-volatility pipeline.
    /// Panics if the network was built with `input_dim != 1`.
    pub fn eval1(&self, x: f64) -> f64 {
        assert_eq!(self.input_dim, 1, "eval1 requires an input_dim-1 network");
        self.forward_inner(&[x], &mut Vec::new(), &mut Vec::new())
    }

    /// Forward pass that also records per-layer scores and outputs; shared
    /// with the backward pass.
    fn forward_inner(&self, x: &[f64], scores: &mut Vec<Vec<f64>>, zs: &mut Vec<f64>) -> f64 {
        scores.clear();
        zs.clear();
        let mut prev = 0.0;
        for (idx, layer) in self.layers.iter().enumerate() {
            let width = layer.width();
            let mut s = vec![0.0; width];
            for k in 0..width {
                let row = layer.slope_row(k, self.input_dim);
                let mut acc = layer.intercepts[k];
                for (a, xi) in row.iter().zip(x) {
                    acc += a * xi;
                }
                if idx > 0 {
                    let skip = softplus(layer.skip_raw.as_ref().unwrap()[k]);
                    acc += skip * prev;
                }
                s[k] = acc;
            }
            let z = lse_raw(layer.temperature(), &s);
            scores.push(s);
            zs.push(z);
            prev = z;
        }
        prev + self.output_bias
    }

    /// Mean-squared-error loss over the batch together with exact
    /// reverse-mode gradients for every raw parameter.
    pub fn loss_and_gradient(
        &self,
        inputs: &[Vec<f64>],
        targets: &[f64],
    ) -> Result<(f64, NetGradients)> {
        if inputs.is_empty() {
            return Err(Error::Empty { what: "batch" });
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                what: "targets",
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        for x in inputs {
            if x.len() != self.input_dim {
                return Err(Error::DimensionMismatch {
                    what: "input",
                    expected: self.input_dim,
                    got: x.len(),
                });
            }
        }

        let n = inputs.len() as f64;
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        let mut scores = Vec::new();
        let mut zs = Vec::new();
        let mut weights_buf: Vec<f64> = Vec::new();

        for (x, &target) in inputs.iter().zip(targets) {
            let y = self.forward_inner(x, &mut scores, &mut zs);
            let residual = y - target;
            loss += residual * residual / n;

            // d loss / d y for this sample.
            let upstream = 2.0 * residual / n;
            grads.output_bias += upstream;

            let mut g_z = upstream;
            for idx in (0..self.layers.len()).rev() {
                let layer = &self.layers[idx];
                let glayer = &mut grads.layers[idx];
                let width = layer.width();
                let s = &scores[idx];
                let temp = layer.temperature();

                weights_buf.resize(width, 0.0);
                lse_weights_into(temp, s, &mut weights_buf);

                // dz/dT = (z − Σ p_k s_k) / T, then through softplus.
                let mean_score: f64 = weights_buf.iter().zip(s).map(|(p, sk)| p * sk).sum();
                let dz_dtemp = (zs[idx] - mean_score) / temp;
                glayer.temp_raw += g_z * dz_dtemp * sigmoid(layer.temp_raw);

                let prev_z = if idx > 0 { zs[idx - 1] } else { 0.0 };
                let mut g_prev = 0.0;
                for k in 0..width {
                    let ds = g_z * weights_buf[k];
                    glayer.intercepts[k] += ds;
                    let row = k * self.input_dim;
                    for (j, xi) in x.iter().enumerate() {
                        glayer.slopes[row + j] += ds * xi;
                    }
                    if idx > 0 {
                        let raw = layer.skip_raw.as_ref().unwrap()[k];
                        let skip = softplus(raw);
                        glayer.skip_raw.as_mut().unwrap()[k] += ds * prev_z * sigmoid(raw);
                        g_prev += ds * skip;
                    }
                }
                g_z = g_prev;
            }
        }
        Ok((loss, grads))
    }

    fn zeros_like(&self) -> NetGradients {
        NetGradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    slopes: vec![0.0; l.slopes.len()],
                    intercepts: vec![0.0; l.intercepts.len()],
                    skip_raw: l.skip_raw.as_ref().map(|s| vec![0.0; s.len()]),
                    temp_raw: 0.0,
                })
                .collect(),
            output_bias: 0.0,
        }
    }

    /// Number of raw trainable parameters.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.slopes.len() + l.intercepts.len() + l.skip_raw.as_ref().map_or(0, Vec::len) + 1
            })
            .sum::<usize>()
            + 1
    }

    /// Flattens all raw parameters in a stable order: per layer the slopes
    /// (row-major), intercepts, skip pre-activations, temperature
    /// pre-activation; then the output bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.slopes);
            out.extend_from_slice(&layer.intercepts);
            if let Some(skips) = &layer.skip_raw {
                out.extend_from_slice(skips);
            }
            out.push(layer.temp_raw);
        }
        out.push(self.output_bias);
        out
    }

    /// Rebuilds a network of this shape from a flat parameter vector in
    /// [`DeepLseNet::flatten`] order.
    pub fn unflatten(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                what: "flat parameters",
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut net = self.clone();
        let mut it = params.iter().copied();
        for layer in &mut net.layers {
            for slot in layer.slopes.iter_mut() {
                *slot = it.next().unwrap();
            }
            for slot in layer.intercepts.iter_mut() {
                *slot = it.next().unwrap();
            }
            if let Some(skips) = &mut layer.skip_raw {
                for slot in skips.iter_mut() {
                    *slot = it.next().unwrap();
                }
            }
            layer.temp_raw = it.next().unwrap();
        }
        net.output_bias = it.next().unwrap();
        Ok(net)
    }
}

impl NetGradients {
    /// Flat view in the same order as [`DeepLseNet::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let helper = DeepLseNet {
            input_dim: 1, // the flatten order does not consult input_dim
            layers: self.layers.clone(),
            output_bias: self.output_bias,
        };
        helper.flatten()
    }
}

/// Per-layer caps of the sieve box.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCaps {
    /// Cap on the Euclidean norm of each slope row.
    pub slope_cap: f64,
    /// Cap on the absolute value of each intercept.
    pub intercept_cap: f64,
    /// Cap on each realized skip weight; must lie in (0, 1). Ignored for
    /// layer 1, which carries no skips.
    pub skip_cap: f64,
    /// Cap on the realized temperature.
    pub temp_cap: f64,
    /// Width cap used by the envelope and growth diagnostics.
    pub width_cap: usize,
}

/// Box constraints defining one member of the sieve hierarchy, together
/// with the input radius the envelope is quoted for.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveBox {
    pub layers: Vec<LayerCaps>,
    /// Cap on the absolute output bias.
    pub output_cap: f64,
    /// Radius of the input ball `‖x‖ ≤ R`.
    pub input_radius: f64,
}

/// Diagnostic emitted by [`SieveBox::growth_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// Effective parameter count `W` including the input relay units.
    pub param_count: usize,
    /// Envelope bound of the box.
    pub envelope: f64,
    /// The complexity proxy `W · V² · log(V^L · W)`.
    pub complexity: f64,
    /// `complexity / n_samples`; below one means the sample size dominates.
    pub ratio: f64,
    pub status: GrowthStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthStatus {
    /// The complexity proxy is dominated by the sample size.
    ConsistentRegime,
    /// The box is large relative to the sample; a warning, never an error.
    Oversized,
}

impl std::fmt::Display for GrowthStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GrowthStatus::ConsistentRegime => write!(f, "consistent-regime"),
            GrowthStatus::Oversized => write!(f, "oversized"),
        }
    }
}

impl SieveBox {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty {
                what: "sieve box layers",
            });
        }
        for caps in &self.layers {
            for (name, v) in [
                ("slope_cap", caps.slope_cap),
                ("intercept_cap", caps.intercept_cap),
                ("temp_cap", caps.temp_cap),
            ] {
                if !(v > 0.0) {
                    return Err(Error::Domain {
                        name,
                        value: v,
                        constraint: "must be positive",
                    });
                }
            }
            if !(caps.skip_cap > 0.0 && caps.skip_cap < 1.0) {
                return Err(Error::Domain {
                    name: "skip_cap",
                    value: caps.skip_cap,
                    constraint: "must lie in (0, 1)",
                });
            }
            if caps.temp_cap <= TEMP_FLOOR {
                return Err(Error::Domain {
                    name: "temp_cap",
                    value: caps.temp_cap,
                    constraint: "must exceed the temperature floor",
                });
            }
            if caps.width_cap == 0 {
                return Err(Error::Domain {
                    name: "width_cap",
                    value: 0.0,
                    constraint: "must be >= 1",
                });
            }
        }
        if !(self.output_cap > 0.0) {
            return Err(Error::Domain {
                name: "output_cap",
                value: self.output_cap,
                constraint: "must be positive",
            });
        }
        if !(self.input_radius > 0.0) {
            return Err(Error::Domain {
                name: "input_radius",
                value: self.input_radius,
                constraint: "must be positive",
            });
        }
        Ok(())
    }

    /// Uniform sup-norm cap over every network inside the box on the input
    /// ball: `V = C + Σ_ℓ (R·S_ℓ + B_ℓ + Θ_ℓ log K_ℓ) Π_{r>ℓ} q_r`.
    pub fn envelope_bound(&self) -> f64 {
        let depth = self.layers.len();
        let mut total = self.output_cap;
        for (idx, caps) in self.layers.iter().enumerate() {
            let term = self.input_radius * caps.slope_cap
                + caps.intercept_cap
                + caps.temp_cap * (caps.width_cap as f64).ln();
            let tail: f64 = (idx + 1..depth).map(|r| self.layers[r].skip_cap).product();
            total += term * tail;
        }
        total
    }

    /// Compares the box's complexity proxy against the sample size. The
    /// count `W` includes the relay units that copy the input across layers:
    /// `W = K_1(d+1) + Σ_{ℓ≥2} K_ℓ(d+2) + 1 + d(L−1)`.
    pub fn growth_check(&self, input_dim: usize, n_samples: usize) -> GrowthReport {
        let depth = self.layers.len();
        let d = input_dim;
        let mut count = self.layers[0].width_cap * (d + 1);
        for caps in &self.layers[1..] {
            count += caps.width_cap * (d + 2);
        }
        count += 1 + d * (depth - 1);

        let envelope = self.envelope_bound();
        let w = count as f64;
        let complexity = w * envelope * envelope * (depth as f64 * envelope.ln() + w.ln());
        let ratio = complexity / n_samples.max(1) as f64;
        GrowthReport {
            param_count: count,
            envelope,
            complexity,
            ratio,
            status: if ratio < 1.0 {
                GrowthStatus::ConsistentRegime
            } else {
                GrowthStatus::Oversized
            },
        }
    }
}

impl DeepLseNet {
    /// Projects the network into the box: slope rows rescaled onto the cap
    /// (direction preserved), intercepts and output bias clamped, skips and
    /// temperatures clipped through their pre-activations. Parameters
    /// already inside the box are left untouched, so the projection is
    /// idempotent.
    pub fn project_sieve(&self, sieve: &SieveBox) -> DeepLseNet {
        assert_eq!(
            sieve.layers.len(),
            self.layers.len(),
            "sieve box must cap every layer"
        );
        let mut net = self.clone();
        for (layer, caps) in net.layers.iter_mut().zip(&sieve.layers) {
            let width = layer.width();
            let dim = self.input_dim;
            for k in 0..width {
                let row = &mut layer.slopes[k * dim..(k + 1) * dim];
                let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
                // Relative guard keeps re-projection from oscillating by an ulp.
                if norm > caps.slope_cap * (1.0 + 1e-12) {
                    let scale = caps.slope_cap / norm;
                    for a in row.iter_mut() {
                        *a *= scale;
                    }
                }
            }
            for b in layer.intercepts.iter_mut() {
                if b.abs() > caps.intercept_cap {
                    *b = b.signum() * caps.intercept_cap;
                }
            }
            if let Some(skips) = &mut layer.skip_raw {
                let cap_raw = softplus_inv(caps.skip_cap).expect("skip_cap in (0,1)");
                for raw in skips.iter_mut() {
                    if softplus(*raw) > caps.skip_cap {
                        *raw = cap_raw;
                    }
                }
            }
            if layer.temperature() > caps.temp_cap {
                layer.temp_raw =
                    softplus_inv(caps.temp_cap - TEMP_FLOOR).expect("temp_cap above floor");
            }
        }
        if net.output_bias.abs() > sieve.output_cap {
            net.output_bias = net.output_bias.signum() * sieve.output_cap;
        }
        net
    }
}
