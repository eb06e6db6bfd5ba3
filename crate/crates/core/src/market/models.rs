//! Monte Carlo data-generating processes.
//!
//! Four risk-neutral models share one discretization backbone: a log-Euler
//! asset step (exact given the variance frozen over the step), square-root
//! variance factors kept nonnegative by truncation or reflection, and
//! compound-Poisson jumps compensated in the drift so the discounted asset
//! stays a martingale. Every path is a pure function of `(seed, path index)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::error::{Error, Result};

/// How square-root factors are kept nonnegative: truncation replaces the
/// state by `max(v, 0)` after each step, reflection by `|v|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceScheme {
    #[default]
    FullTruncation,
    Reflection,
}

/// Monte Carlo controls. `n_steps` counts steps across the whole horizon.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: VarianceScheme,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Domain {
                name: "n_paths",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        if self.n_steps == 0 {
            return Err(Error::Domain {
                name: "n_steps",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        Ok(())
    }
}

/// Stochastic-volatility jump-diffusion:
/// `dS/S = (r − λk) dt + √v dW₁ + (J − 1) dN`,
/// `dv = κ(θ − v) dt + η √v dW₂`, `corr(dW₁, dW₂) = ρ`,
/// lognormal jumps `J = e^Y`, `Y ~ N(μ_j, σ_j²)`,
/// compensated with `k = e^{μ_j + σ_j²/2} − 1`.
#[derive(Debug, Clone, Copy)]
pub struct BatesParams {
    pub spot: f64,
    pub rate: f64,
    pub v0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub vol_of_vol: f64,
    pub rho: f64,
    pub jump_intensity: f64,
    pub jump_mean: f64,
    pub jump_std: f64,
}

impl BatesParams {
    /// Parameter set used throughout the simulation study.
    pub fn study_defaults() -> Self {
        Self {
            spot: 100.0,
            rate: 0.06,
            v0: 0.09,
            kappa: 3.0,
            theta: 0.07,
            vol_of_vol: 0.3,
            rho: -0.34,
            jump_intensity: 0.5,
            jump_mean: -0.09,
            jump_std: 0.45,
        }
    }

    /// Mean relative jump size `k = E[J − 1]`.
    pub fn jump_compensator(&self) -> f64 {
        (self.jump_mean + 0.5 * self.jump_std * self.jump_std).exp() - 1.0
    }

    fn validate(&self) -> Result<()> {
        nonnegative(&[
            ("spot", self.spot),
            ("v0", self.v0),
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("vol_of_vol", self.vol_of_vol),
            ("jump_intensity", self.jump_intensity),
            ("jump_std", self.jump_std),
        ])?;
        correlation("rho", self.rho)
    }
}

/// Heston variance with double-exponential jumps in the asset:
/// `dS/S = (r − q − λκ_J) dt + √V dW₁ + dJ`,
/// `dV = κ(θ − V) dt + σ_v √V dW₂`,
/// jump sizes `+Exp(1/η₁)` with probability `p_up`, else `−Exp(1/η₂)`,
/// compensated with `κ_J = p η₁/(η₁−1) + (1−p) η₂/(η₂+1) − 1`.
#[derive(Debug, Clone, Copy)]
pub struct KouHestonParams {
    pub spot: f64,
    pub rate: f64,
    pub dividend: f64,
    pub v0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub vol_of_vol: f64,
    pub rho: f64,
    pub jump_intensity: f64,
    pub p_up: f64,
    pub eta_up: f64,
    pub eta_down: f64,
}

impl KouHestonParams {
    pub fn study_defaults() -> Self {
        Self {
            spot: 100.0,
            rate: 0.05,
            dividend: 0.0,
            v0: 0.04,
            kappa: 2.0,
            theta: 0.04,
            vol_of_vol: 0.8,
            rho: -0.5,
            jump_intensity: 0.12,
            p_up: 0.35,
            eta_up: 8.0,
            eta_down: 10.0,
        }
    }

    /// `κ_J = E[e^Y − 1]` for the double-exponential jump law.
    pub fn jump_compensator(&self) -> f64 {
        self.p_up * self.eta_up / (self.eta_up - 1.0)
            + (1.0 - self.p_up) * self.eta_down / (self.eta_down + 1.0)
            - 1.0
    }

    fn validate(&self) -> Result<()> {
        nonnegative(&[
            ("spot", self.spot),
            ("v0", self.v0),
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("vol_of_vol", self.vol_of_vol),
            ("jump_intensity", self.jump_intensity),
        ])?;
        correlation("rho", self.rho)?;
        if !(0.0..=1.0).contains(&self.p_up) {
            return Err(Error::Domain {
                name: "p_up",
                value: self.p_up,
                constraint: "must lie in [0, 1]",
            });
        }
        if !(self.eta_up > 1.0) {
            return Err(Error::Domain {
                name: "eta_up",
                value: self.eta_up,
                constraint: "must exceed 1 for a finite compensator",
            });
        }
        if !(self.eta_down > 0.0) {
            return Err(Error::Domain {
                name: "eta_down",
                value: self.eta_down,
                constraint: "must be positive",
            });
        }
        Ok(())
    }
}

/// One square-root variance factor of the multifactor model.
#[derive(Debug, Clone, Copy)]
pub struct VarianceFactor {
    pub kappa: f64,
    pub theta: f64,
    pub vol_of_vol: f64,
    pub v0: f64,
    /// Correlation between this factor's Brownian driver and the asset.
    pub rho: f64,
}

/// Andersen-Benzoni-Lund multifactor stochastic volatility with lognormal
/// jumps. The asset loads on the summed factors,
/// `dZ = Σ ρ_i dW_i + √(1 − Σρ_i²) dW₀`, and the risk-neutral drift is
/// `μ = r − λ_j (e^{μ_j + σ_j²/2} − 1)`.
#[derive(Debug, Clone)]
pub struct AblParams {
    pub spot: f64,
    pub rate: f64,
    pub factors: Vec<VarianceFactor>,
    pub jump_intensity: f64,
    pub jump_mean: f64,
    pub jump_std: f64,
}

impl AblParams {
    /// Liquid-proxy parameter set of the simulation study.
    pub fn study_set_one() -> Self {
        Self {
            spot: 100.0,
            rate: 0.05,
            factors: vec![
                VarianceFactor {
                    kappa: 3.0,
                    theta: 0.02,
                    vol_of_vol: 0.2,
                    v0: 0.02,
                    rho: -0.3,
                },
                VarianceFactor {
                    kappa: 1.5,
                    theta: 0.04,
                    vol_of_vol: 0.3,
                    v0: 0.04,
                    rho: 0.0,
                },
                VarianceFactor {
                    kappa: 0.5,
                    theta: 0.06,
                    vol_of_vol: 0.4,
                    v0: 0.06,
                    rho: 0.3,
                },
            ],
            jump_intensity: 0.20,
            jump_mean: 0.00,
            jump_std: 0.55,
        }
    }

    /// Illiquid-target parameter set (jump block differs from set one).
    pub fn study_set_two() -> Self {
        Self {
            jump_intensity: 0.25,
            jump_mean: 0.18,
            jump_std: 0.60,
            ..Self::study_set_one()
        }
    }

    pub fn jump_compensator(&self) -> f64 {
        (self.jump_mean + 0.5 * self.jump_std * self.jump_std).exp() - 1.0
    }

    /// Loading of the asset's residual (idiosyncratic) Brownian driver.
    pub fn residual_weight(&self) -> f64 {
        (1.0 - self.factors.iter().map(|f| f.rho * f.rho).sum::<f64>()).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Empty {
                what: "variance factors",
            });
        }
        nonnegative(&[
            ("spot", self.spot),
            ("jump_intensity", self.jump_intensity),
            ("jump_std", self.jump_std),
        ])?;
        for f in &self.factors {
            nonnegative(&[
                ("factor kappa", f.kappa),
                ("factor theta", f.theta),
                ("factor vol_of_vol", f.vol_of_vol),
                ("factor v0", f.v0),
            ])?;
        }
        let rho_sq: f64 = self.factors.iter().map(|f| f.rho * f.rho).sum();
        if rho_sq > 1.0 {
            return Err(Error::Domain {
                name: "sum of squared factor correlations",
                value: rho_sq,
                constraint: "must not exceed 1",
            });
        }
        Ok(())
    }
}

/// Three-factor double-exponential stochastic volatility of the forward
/// price. Negative price jumps co-jump into the first variance factor and
/// the jump-driven factor `U`; independent negative shocks feed `U` alone.
/// Jump intensities are affine in the left-limit states.
#[derive(Debug, Clone, Copy)]
pub struct ThreeFdeParams {
    pub spot: f64,
    pub rate: f64,
    pub v1_0: f64,
    pub v2_0: f64,
    pub u_0: f64,
    pub kappa_1: f64,
    pub vbar_1: f64,
    pub sigma_1: f64,
    pub rho_1: f64,
    pub kappa_2: f64,
    pub vbar_2: f64,
    pub sigma_2: f64,
    pub rho_2: f64,
    pub kappa_u: f64,
    /// Loading of `U` on the forward diffusion.
    pub eta: f64,
    pub mu_v: f64,
    pub mu_u: f64,
    pub rho_u: f64,
    /// Negative-jump intensity coefficients `(c0, c1, c2, cu)`.
    pub c_minus: [f64; 4],
    /// Positive-jump intensity coefficients `(c0, c1, c2, cu)`.
    pub c_plus: [f64; 4],
    /// Tail decay of negative jumps.
    pub lambda_minus: f64,
    /// Tail decay of positive jumps; must exceed 1 for a finite compensator.
    pub lambda_plus: f64,
}

impl ThreeFdeParams {
    pub fn study_liquid_proxy() -> Self {
        Self {
            spot: 100.0,
            rate: 0.05,
            v1_0: 0.01,
            v2_0: 0.04,
            u_0: 0.0,
            kappa_1: 10.0,
            vbar_1: 0.01,
            sigma_1: 0.4,
            rho_1: -0.9,
            kappa_2: 0.2,
            vbar_2: 0.04,
            sigma_2: 0.12,
            rho_2: -0.8,
            kappa_u: 0.6,
            eta: 0.0,
            mu_v: 0.7,
            mu_u: 10.0,
            rho_u: 0.001,
            c_minus: [0.0, 6.0, 0.22, 10.0],
            c_plus: [0.3, 20.0, 18.0, 0.0],
            lambda_minus: 8.0,
            lambda_plus: 6.0,
        }
    }

    pub fn study_illiquid_target() -> Self {
        Self {
            vbar_2: 0.03,
            sigma_2: 0.06,
            rho_2: -0.6,
            c_minus: [0.0, 1.0, 0.1, 7.0],
            c_plus: [0.05, 15.0, 18.0, 0.0],
            lambda_minus: 10.0,
            lambda_plus: 5.7,
            ..Self::study_liquid_proxy()
        }
    }

    fn intensities(&self, v1: f64, v2: f64, u: f64) -> (f64, f64) {
        let c_minus =
            self.c_minus[0] + self.c_minus[1] * v1 + self.c_minus[2] * v2 + self.c_minus[3] * u;
        let c_plus =
            self.c_plus[0] + self.c_plus[1] * v1 + self.c_plus[2] * v2 + self.c_plus[3] * u;
        (c_minus.max(0.0), c_plus.max(0.0))
    }

    fn validate(&self) -> Result<()> {
        nonnegative(&[
            ("spot", self.spot),
            ("v1_0", self.v1_0),
            ("v2_0", self.v2_0),
            ("u_0", self.u_0),
            ("kappa_1", self.kappa_1),
            ("vbar_1", self.vbar_1),
            ("sigma_1", self.sigma_1),
            ("kappa_2", self.kappa_2),
            ("vbar_2", self.vbar_2),
            ("sigma_2", self.sigma_2),
            ("kappa_u", self.kappa_u),
            ("eta", self.eta),
            ("mu_v", self.mu_v),
            ("mu_u", self.mu_u),
        ])?;
        correlation("rho_1", self.rho_1)?;
        correlation("rho_2", self.rho_2)?;
        if !(0.0..=1.0).contains(&self.rho_u) {
            return Err(Error::Domain {
                name: "rho_u",
                value: self.rho_u,
                constraint: "must lie in [0, 1]",
            });
        }
        for c in self.c_minus.iter().chain(&self.c_plus) {
            if !(*c >= 0.0) {
                return Err(Error::Domain {
                    name: "intensity coefficient",
                    value: *c,
                    constraint: "must be nonnegative",
                });
            }
        }
        if !(self.lambda_minus > 0.0) {
            return Err(Error::Domain {
                name: "lambda_minus",
                value: self.lambda_minus,
                constraint: "must be positive",
            });
        }
        if !(self.lambda_plus > 1.0) {
            return Err(Error::Domain {
                name: "lambda_plus",
                value: self.lambda_plus,
                constraint: "must exceed 1 for a finite compensator",
            });
        }
        Ok(())
    }
}

/// Tagged union over the four supported data-generating processes.
#[derive(Debug, Clone)]
pub enum SimModelParams {
    Bates(BatesParams),
    KouHeston(KouHestonParams),
    Abl(AblParams),
    ThreeFde(ThreeFdeParams),
}

impl SimModelParams {
    pub fn spot(&self) -> f64 {
        match self {
            SimModelParams::Bates(p) => p.spot,
            SimModelParams::KouHeston(p) => p.spot,
            SimModelParams::Abl(p) => p.spot,
            SimModelParams::ThreeFde(p) => p.spot,
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            SimModelParams::Bates(p) => p.rate,
            SimModelParams::KouHeston(p) => p.rate,
            SimModelParams::Abl(p) => p.rate,
            SimModelParams::ThreeFde(p) => p.rate,
        }
    }

    pub fn dividend(&self) -> f64 {
        match self {
            SimModelParams::KouHeston(p) => p.dividend,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SimModelParams::Bates(p) => p.validate(),
            SimModelParams::KouHeston(p) => p.validate(),
            SimModelParams::Abl(p) => p.validate(),
            SimModelParams::ThreeFde(p) => p.validate(),
        }
    }
}

fn nonnegative(pairs: &[(&'static str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v >= 0.0) {
            return Err(Error::Domain {
                name,
                value: *v,
                constraint: "must be nonnegative",
            });
        }
    }
    Ok(())
}

fn correlation(name: &'static str, rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain {
            name,
            value: rho,
            constraint: "must lie in [-1, 1]",
        });
    }
    Ok(())
}

/// One square-root step; the returned state is nonnegative under both
/// schemes.
fn sqrt_factor_step(
    v: f64,
    kappa: f64,
    theta: f64,
    vol_of_vol: f64,
    dt: f64,
    shock: f64,
    scheme: VarianceScheme,
) -> f64 {
    match scheme {
        VarianceScheme::FullTruncation => {
            let vp = v.max(0.0);
            (v + kappa * (theta - vp) * dt + vol_of_vol * (vp * dt).sqrt() * shock).max(0.0)
        }
        VarianceScheme::Reflection => {
            let va = v.abs();
            (v + kappa * (theta - va) * dt + vol_of_vol * (va * dt).sqrt() * shock).abs()
        }
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&path.to_le_bytes());
    bytes[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15_u64.to_le_bytes());
    ChaCha12Rng::from_seed(bytes)
}

fn poisson_count(rng: &mut ChaCha12Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Simulates terminal prices at horizon `tau`. Deterministic in
/// `(cfg.seed, path index)` regardless of evaluation order.
pub fn simulate_terminals(model: &SimModelParams, tau: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    model.validate()?;
    cfg.validate()?;
    if !(tau > 0.0) {
        return Err(Error::Domain {
            name: "tau",
            value: tau,
            constraint: "must be positive",
        });
    }
    let dt = tau / cfg.n_steps as f64;
    let terminals = (0..cfg.n_paths)
        .map(|path| {
            let mut rng = path_rng(cfg.seed, path as u64);
            match model {
                SimModelParams::Bates(p) => bates_path(p, dt, cfg, &mut rng),
                SimModelParams::KouHeston(p) => kou_heston_path(p, dt, cfg, &mut rng),
                SimModelParams::Abl(p) => abl_path(p, dt, cfg, &mut rng),
                SimModelParams::ThreeFde(p) => three_fde_path(p, tau, dt, cfg, &mut rng),
            }
        })
        .collect();
    Ok(terminals)
}

fn bates_path(p: &BatesParams, dt: f64, cfg: &SimConfig, rng: &mut ChaCha12Rng) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let compensator = p.jump_intensity * p.jump_compensator();
    let rho_bar = (1.0 - p.rho * p.rho).sqrt();
    let mut log_s = p.spot.ln();
    let mut v = p.v0;
    for _ in 0..cfg.n_steps {
        let z_asset: f64 = normal.sample(rng);
        let z_perp: f64 = normal.sample(rng);
        let z_var = p.rho * z_asset + rho_bar * z_perp;
        let vp = v.max(0.0);
        log_s += (p.rate - compensator - 0.5 * vp) * dt + (vp * dt).sqrt() * z_asset;
        let jumps = poisson_count(rng, p.jump_intensity * dt);
        for _ in 0..jumps {
            log_s += p.jump_mean + p.jump_std * normal.sample(rng);
        }
        v = sqrt_factor_step(v, p.kappa, p.theta, p.vol_of_vol, dt, z_var, cfg.scheme);
    }
    log_s.exp()
}

fn kou_heston_path(p: &KouHestonParams, dt: f64, cfg: &SimConfig, rng: &mut ChaCha12Rng) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let compensator = p.jump_intensity * p.jump_compensator();
    let rho_bar = (1.0 - p.rho * p.rho).sqrt();
    let exp_up = Exp::new(p.eta_up).unwrap();
    let exp_down = Exp::new(p.eta_down).unwrap();
    let mut log_s = p.spot.ln();
    let mut v = p.v0;
    for _ in 0..cfg.n_steps {
        let z_asset: f64 = normal.sample(rng);
        let z_perp: f64 = normal.sample(rng);
        let z_var = p.rho * z_asset + rho_bar * z_perp;
        let vp = v.max(0.0);
        log_s += (p.rate - p.dividend - compensator - 0.5 * vp) * dt + (vp * dt).sqrt() * z_asset;
        let jumps = poisson_count(rng, p.jump_intensity * dt);
        for _ in 0..jumps {
            if rng.random::<f64>() < p.p_up {
                log_s += exp_up.sample(rng);
            } else {
                log_s -= exp_down.sample(rng);
            }
        }
        v = sqrt_factor_step(v, p.kappa, p.theta, p.vol_of_vol, dt, z_var, cfg.scheme);
    }
    log_s.exp()
}

fn abl_path(p: &AblParams, dt: f64, cfg: &SimConfig, rng: &mut ChaCha12Rng) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let drift_rn = p.rate - p.jump_intensity * p.jump_compensator();
    let residual = p.residual_weight();
    let mut log_s = p.spot.ln();
    let mut factors: Vec<f64> = p.factors.iter().map(|f| f.v0).collect();
    let mut shocks = vec![0.0; p.factors.len()];
    for _ in 0..cfg.n_steps {
        let mut z_mix = 0.0;
        for (shock, f) in shocks.iter_mut().zip(&p.factors) {
            *shock = normal.sample(rng);
            z_mix += f.rho * *shock;
        }
        z_mix += residual * normal.sample(rng);
        let total_v: f64 = factors.iter().map(|v| v.max(0.0)).sum();
        log_s += (drift_rn - 0.5 * total_v) * dt + (total_v * dt).sqrt() * z_mix;
        let jumps = poisson_count(rng, p.jump_intensity * dt);
        for _ in 0..jumps {
            log_s += p.jump_mean + p.jump_std * normal.sample(rng);
        }
        for ((v, f), shock) in factors.iter_mut().zip(&p.factors).zip(&shocks) {
            *v = sqrt_factor_step(*v, f.kappa, f.theta, f.vol_of_vol, dt, *shock, cfg.scheme);
        }
    }
    log_s.exp()
}

fn three_fde_path(
    p: &ThreeFdeParams,
    tau: f64,
    dt: f64,
    cfg: &SimConfig,
    rng: &mut ChaCha12Rng,
) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let exp_minus = Exp::new(p.lambda_minus).unwrap();
    let exp_plus = Exp::new(p.lambda_plus).unwrap();
    // Per-jump compensators: E[e^x − 1] over each exponential tail.
    let comp_minus = -1.0 / (p.lambda_minus + 1.0);
    let comp_plus = 1.0 / (p.lambda_plus - 1.0);
    let rho1_bar = (1.0 - p.rho_1 * p.rho_1).sqrt();
    let rho2_bar = (1.0 - p.rho_2 * p.rho_2).sqrt();

    // The forward is a martingale; the spot at expiry equals the forward.
    let mut log_f = (p.spot * (p.rate * tau).exp()).ln();
    let (mut v1, mut v2, mut u) = (p.v1_0, p.v2_0, p.u_0);
    for _ in 0..cfg.n_steps {
        // Intensities frozen at the start-of-step (left-limit) states.
        let (c_minus, c_plus) = p.intensities(v1, v2, u);
        let z_w1: f64 = normal.sample(rng);
        let z_w2: f64 = normal.sample(rng);
        let z_w3: f64 = normal.sample(rng);
        let z_b1 = p.rho_1 * z_w1 + rho1_bar * normal.sample(rng);
        let z_b2 = p.rho_2 * z_w2 + rho2_bar * normal.sample(rng);

        let diffusive_var = v1 + v2 + p.eta * p.eta * u;
        let compensator = c_minus * comp_minus + c_plus * comp_plus;
        log_f += (-0.5 * diffusive_var - compensator) * dt
            + (v1 * dt).sqrt() * z_w1
            + (v2 * dt).sqrt() * z_w2
            + p.eta * (u * dt).sqrt() * z_w3;

        let mut v1_jump = 0.0;
        let mut u_jump = 0.0;
        for _ in 0..poisson_count(rng, c_minus * dt) {
            let x = -exp_minus.sample(rng);
            log_f += x;
            v1_jump += p.mu_v * x * x;
            u_jump += p.mu_u * (1.0 - p.rho_u) * x * x;
        }
        for _ in 0..poisson_count(rng, c_plus * dt) {
            log_f += exp_plus.sample(rng);
        }
        // Independent shocks to U share the negative-jump law and intensity.
        for _ in 0..poisson_count(rng, c_minus * dt) {
            let y = -exp_minus.sample(rng);
            u_jump += p.mu_u * p.rho_u * y * y;
        }

        v1 = sqrt_factor_step(v1, p.kappa_1, p.vbar_1, p.sigma_1, dt, z_b1, cfg.scheme) + v1_jump;
        v2 = sqrt_factor_step(v2, p.kappa_2, p.vbar_2, p.sigma_2, dt, z_b2, cfg.scheme);
        u = (u - p.kappa_u * u * dt + u_jump).max(0.0);
    }
    log_f.exp()
}
