//! TOML experiment configuration and its mapping onto library types.

use serde::Deserialize;

use deep_lse::market::{
    AblParams, BatesParams, CensorRule, KouHestonParams, SimConfig, SimModelParams, ThreeFdeParams,
    VarianceFactor, VarianceScheme,
};
use deep_lse::net::{LayerCaps, SieveBox};
use deep_lse::pipeline::{TargetMarket, TranslationRule, TruthFit, VolShift};
use deep_lse::rnd::StrikeGrid;
use deep_lse::training::{Batching, TrainConfig};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Time to expiry in years, shared by the whole experiment.
    pub maturity: f64,
    pub model: ModelConfig,
    /// Second data-generating process for the illiquid target; when set the
    /// target market is simulated under it instead of translated.
    pub target_model: Option<ModelConfig>,
    pub simulation: SimulationConfig,
    pub market: MarketConfig,
    pub translation: Option<TranslationConfig>,
    pub censoring: CensoringConfig,
    pub architecture: ArchitectureConfig,
    pub pretrain: StageConfig,
    pub finetune: StageConfig,
    pub prior: PriorConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Bates {
        spot: f64,
        rate: f64,
        v0: f64,
        kappa: f64,
        theta: f64,
        vol_of_vol: f64,
        rho: f64,
        jump_intensity: f64,
        jump_mean: f64,
        jump_std: f64,
    },
    KouHeston {
        spot: f64,
        rate: f64,
        #[serde(default)]
        dividend: f64,
        v0: f64,
        kappa: f64,
        theta: f64,
        vol_of_vol: f64,
        rho: f64,
        jump_intensity: f64,
        p_up: f64,
        eta_up: f64,
        eta_down: f64,
    },
    Abl {
        spot: f64,
        rate: f64,
        factors: Vec<FactorConfig>,
        jump_intensity: f64,
        jump_mean: f64,
        jump_std: f64,
    },
    ThreeFde {
        spot: f64,
        rate: f64,
        v1_0: f64,
        v2_0: f64,
        u_0: f64,
        kappa_1: f64,
        vbar_1: f64,
        sigma_1: f64,
        rho_1: f64,
        kappa_2: f64,
        vbar_2: f64,
        sigma_2: f64,
        rho_2: f64,
        kappa_u: f64,
        eta: f64,
        mu_v: f64,
        mu_u: f64,
        rho_u: f64,
        c_minus: [f64; 4],
        c_plus: [f64; 4],
        lambda_minus: f64,
        lambda_plus: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub kappa: f64,
    pub theta: f64,
    pub vol_of_vol: f64,
    pub v0: f64,
    pub rho: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub variance_scheme: String,
}

fn default_scheme() -> String {
    "full-truncation".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub strike_min: f64,
    pub strike_max: f64,
    pub strike_count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationConfig {
    #[serde(default = "default_shift_mode")]
    pub vol_shift_mode: String,
    pub vol_shift: f64,
    pub strike_shift: f64,
}

fn default_shift_mode() -> String {
    "multiplicative".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensoringConfig {
    /// Fixed strike picks; mutually exclusive with `band`.
    pub strikes: Option<Vec<f64>>,
    /// "itm" or "otm" moneyness band sampling.
    pub band: Option<String>,
    #[serde(default = "default_band_lo")]
    pub depth_lo: f64,
    #[serde(default = "default_band_hi")]
    pub depth_hi: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_band_lo() -> f64 {
    0.10
}
fn default_band_hi() -> f64 {
    0.25
}
fn default_count() -> usize {
    3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "default_scale")]
    pub init_scale: f64,
}

fn default_scale() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    pub batch_size: Option<usize>,
    #[serde(default = "default_project_every")]
    pub project_every: usize,
    #[serde(default = "default_window")]
    pub stationarity_window: usize,
    pub sieve: Option<SieveConfig>,
}

fn default_project_every() -> usize {
    1
}
fn default_window() -> usize {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SieveConfig {
    pub slope_cap: f64,
    pub intercept_cap: f64,
    pub skip_cap: f64,
    pub temp_cap: f64,
    pub output_cap: f64,
    pub input_radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_std")]
    pub sigma: f64,
    #[serde(default = "default_std")]
    pub tau: f64,
    #[serde(default = "default_c")]
    pub complexity_weight: f64,
}

fn default_std() -> f64 {
    1.0
}
fn default_c() -> f64 {
    1e-3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_lo")]
    pub moneyness_min: f64,
    #[serde(default = "default_grid_hi")]
    pub moneyness_max: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
}

fn default_grid_lo() -> f64 {
    0.5
}
fn default_grid_hi() -> f64 {
    1.5
}
fn default_grid_points() -> usize {
    401
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default = "default_truth_method")]
    pub method: String,
    #[serde(default = "default_truth_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_truth_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_truth_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_truth_seed")]
    pub init_seed: u64,
    #[serde(default = "default_scale")]
    pub init_scale: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            method: default_truth_method(),
            widths: default_truth_widths(),
            learning_rate: default_truth_lr(),
            max_epochs: default_truth_epochs(),
            init_seed: default_truth_seed(),
            init_scale: default_scale(),
        }
    }
}

fn default_truth_method() -> String {
    "deep-lse".into()
}
fn default_truth_widths() -> Vec<usize> {
    vec![6, 6]
}
fn default_truth_lr() -> f64 {
    0.02
}
fn default_truth_epochs() -> usize {
    6000
}
fn default_truth_seed() -> u64 {
    2024
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Evaluation strikes of the pricing-error report.
    pub strikes: Vec<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model(&self) -> SimModelParams {
        model_params(&self.model)
    }
}

fn model_params(config: &ModelConfig) -> SimModelParams {
    match config {
        ModelConfig::Bates {
            spot,
            rate,
            v0,
            kappa,
            theta,
            vol_of_vol,
            rho,
            jump_intensity,
            jump_mean,
            jump_std,
        } => SimModelParams::Bates(BatesParams {
            spot: *spot,
            rate: *rate,
            v0: *v0,
            kappa: *kappa,
            theta: *theta,
            vol_of_vol: *vol_of_vol,
            rho: *rho,
            jump_intensity: *jump_intensity,
            jump_mean: *jump_mean,
            jump_std: *jump_std,
        }),
        ModelConfig::KouHeston {
            spot,
            rate,
            dividend,
            v0,
            kappa,
            theta,
            vol_of_vol,
            rho,
            jump_intensity,
            p_up,
            eta_up,
            eta_down,
        } => SimModelParams::KouHeston(KouHestonParams {
            spot: *spot,
            rate: *rate,
            dividend: *dividend,
            v0: *v0,
            kappa: *kappa,
            theta: *theta,
            vol_of_vol: *vol_of_vol,
            rho: *rho,
            jump_intensity: *jump_intensity,
            p_up: *p_up,
            eta_up: *eta_up,
            eta_down: *eta_down,
        }),
        ModelConfig::Abl {
            spot,
            rate,
            factors,
            jump_intensity,
            jump_mean,
            jump_std,
        } => SimModelParams::Abl(AblParams {
            spot: *spot,
            rate: *rate,
            factors: factors
                .iter()
                .map(|f| VarianceFactor {
                    kappa: f.kappa,
                    theta: f.theta,
                    vol_of_vol: f.vol_of_vol,
                    v0: f.v0,
                    rho: f.rho,
                })
                .collect(),
            jump_intensity: *jump_intensity,
            jump_mean: *jump_mean,
            jump_std: *jump_std,
        }),
        ModelConfig::ThreeFde {
            spot,
            rate,
            v1_0,
            v2_0,
            u_0,
            kappa_1,
            vbar_1,
            sigma_1,
            rho_1,
            kappa_2,
            vbar_2,
            sigma_2,
            rho_2,
            kappa_u,
            eta,
            mu_v,
            mu_u,
            rho_u,
            c_minus,
            c_plus,
            lambda_minus,
            lambda_plus,
        } => SimModelParams::ThreeFde(ThreeFdeParams {
            spot: *spot,
            rate: *rate,
            v1_0: *v1_0,
            v2_0: *v2_0,
            u_0: *u_0,
            kappa_1: *kappa_1,
            vbar_1: *vbar_1,
            sigma_1: *sigma_1,
            rho_1: *rho_1,
            kappa_2: *kappa_2,
            vbar_2: *vbar_2,
            sigma_2: *sigma_2,
            rho_2: *rho_2,
            kappa_u: *kappa_u,
            eta: *eta,
            mu_v: *mu_v,
            mu_u: *mu_u,
            rho_u: *rho_u,
            c_minus: *c_minus,
            c_plus: *c_plus,
            lambda_minus: *lambda_minus,
            lambda_plus: *lambda_plus,
        }),
    }
}

impl ExperimentConfig {
    pub fn sim_config(&self, seed_override: Option<u64>) -> Result<SimConfig, CliError> {
        let scheme = match self.simulation.variance_scheme.as_str() {
            "full-truncation" => VarianceScheme::FullTruncation,
            "reflection" => VarianceScheme::Reflection,
            other => {
                return Err(CliError::Config(format!(
                "variance_scheme: unknown value `{other}` (expected full-truncation or reflection)"
            )))
            }
        };
        Ok(SimConfig {
            n_paths: self.simulation.paths,
            n_steps: self.simulation.steps,
            seed: seed_override.unwrap_or(self.simulation.seed),
            scheme,
        })
    }

    pub fn liquid_strikes(&self) -> Vec<f64> {
        let m = &self.market;
        let step = (m.strike_max - m.strike_min) / (m.strike_count.max(2) - 1) as f64;
        (0..m.strike_count)
            .map(|i| m.strike_min + i as f64 * step)
            .collect()
    }

    pub fn target_market(&self) -> Result<TargetMarket, CliError> {
        if let Some(second) = &self.target_model {
            return Ok(TargetMarket::SecondModel(model_params(second)));
        }
        let translation = self.translation.as_ref().ok_or_else(|| {
            CliError::Config("either [translation] or [target_model] must be configured".into())
        })?;
        let vol_shift = match translation.vol_shift_mode.as_str() {
            "multiplicative" => VolShift::Multiplicative(translation.vol_shift),
            "additive" => VolShift::Additive(translation.vol_shift),
            other => {
                return Err(CliError::Config(format!(
                    "vol_shift_mode: unknown value `{other}` (expected multiplicative or additive)"
                )))
            }
        };
        Ok(TargetMarket::Translate(TranslationRule {
            vol_shift,
            strike_shift: translation.strike_shift,
        }))
    }

    pub fn censor_rule(&self) -> Result<CensorRule, CliError> {
        match (&self.censoring.strikes, &self.censoring.band) {
            (Some(strikes), None) => Ok(CensorRule::Strikes(strikes.clone())),
            (None, Some(band)) => match band.as_str() {
                "itm" => Ok(CensorRule::in_the_money(
                    self.censoring.depth_lo,
                    self.censoring.depth_hi,
                    self.censoring.count,
                )),
                "otm" => Ok(CensorRule::out_of_the_money(
                    self.censoring.depth_lo,
                    self.censoring.depth_hi,
                    self.censoring.count,
                )),
                other => Err(CliError::Config(format!(
                    "censoring.band: unknown value `{other}` (expected itm or otm)"
                ))),
            },
            _ => Err(CliError::Config(
                "censoring: exactly one of `strikes` or `band` must be set".into(),
            )),
        }
    }

    pub fn stage(&self, stage: &StageConfig, seed_override: Option<u64>) -> TrainConfig {
        TrainConfig {
            learning_rate: stage.learning_rate,
            max_epochs: stage.max_epochs,
            batching: stage
                .batch_size
                .map(Batching::Size)
                .unwrap_or(Batching::Full),
            seed: seed_override.unwrap_or(stage.seed),
            adam: Default::default(),
            sieve: stage
                .sieve
                .as_ref()
                .map(|s| sieve_box(s, self.architecture.widths.len())),
            project_every: stage.project_every,
            stationarity_window: stage.stationarity_window,
        }
    }

    pub fn grid(&self) -> Result<StrikeGrid, CliError> {
        let spot = self.model().spot();
        StrikeGrid::new(
            self.grid.moneyness_min * spot,
            self.grid.moneyness_max * spot,
            self.grid.points,
            spot,
            self.model().rate(),
            self.model().dividend(),
            self.maturity,
        )
        .map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn truth_fit(&self) -> Result<TruthFit, CliError> {
        match self.truth.method.as_str() {
            "deep-lse" => Ok(TruthFit::DeepFit {
                widths: self.truth.widths.clone(),
                config: TrainConfig::new(self.truth.learning_rate, self.truth.max_epochs),
                init_seed: self.truth.init_seed,
                init_scale: self.truth.init_scale,
            }),
            "spline" => Ok(TruthFit::Spline),
            other => Err(CliError::Config(format!(
                "truth.method: unknown value `{other}` (expected deep-lse or spline)"
            ))),
        }
    }
}

fn sieve_box(cfg: &SieveConfig, depth: usize) -> SieveBox {
    SieveBox {
        layers: (0..depth)
            .map(|_| LayerCaps {
                slope_cap: cfg.slope_cap,
                intercept_cap: cfg.intercept_cap,
                skip_cap: cfg.skip_cap,
                temp_cap: cfg.temp_cap,
                width_cap: 64,
            })
            .collect(),
        output_cap: cfg.output_cap,
        input_radius: cfg.input_radius,
    }
}
