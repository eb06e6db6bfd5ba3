//! Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see them on success).

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use deep_lse::lse::{lse, softplus_inv, TemperedVector};
use deep_lse::market::{
    simulate_terminals, AblParams, BatesParams, CensorRule, KouHestonParams, SimConfig,
    SimModelParams, ThreeFdeParams, VarianceScheme,
};
use deep_lse::maxaffine::{check_sandwich, delta_bound, expand_paths, surrogate_eval};
use deep_lse::net::{DeepLseNet, LayerCaps, SieveBox, TEMP_FLOOR};
use deep_lse::pipeline::{
    build_scenario, illiquid_points, rnd_from_net, two_phase_fit, TargetMarket, TranslationRule,
    TruthFit, VolShift, SIGMA_FLOOR,
};
use deep_lse::rnd::{
    extract_rnd, l1_distance, lognormal_terminal_density, price_from_rnd, quadratic_spline,
    RndEstimate, StrikeGrid,
};
use deep_lse::training::{fit, TrainConfig};

fn random_net(rng: &mut ChaCha12Rng, max_depth: usize, max_width: usize, dim: usize) -> DeepLseNet {
    let depth = 1 + (rng.random::<u64>() as usize) % max_depth;
    let widths: Vec<usize> = (0..depth)
        .map(|_| 1 + (rng.random::<u64>() as usize) % max_width)
        .collect();
    let mut net = DeepLseNet::init(&widths, dim, rng.random(), 1.0).unwrap();
    // Spread temperatures and skips away from their init values.
    for layer in net.layers_mut() {
        layer.temp_raw += rng.random::<f64>() * 2.0 - 1.0;
        if let Some(skips) = &mut layer.skip_raw {
            for s in skips.iter_mut() {
                *s += rng.random::<f64>() * 2.0 - 1.0;
            }
        }
    }
    net.set_output_bias(rng.random::<f64>() - 0.5);
    net
}

fn random_point(rng: &mut ChaCha12Rng, dim: usize, radius: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * radius)
        .collect()
}

#[test]
fn convexity_suite() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let mut checked = 0u64;
    for net_idx in 0..100 {
        let dim = 1 + net_idx % 3;
        let net = random_net(&mut rng, 3, 4, dim);
        for _ in 0..10_000 {
            let a = random_point(&mut rng, dim, 3.0);
            let b = random_point(&mut rng, dim, 3.0);
            let lambda: f64 = rng.random();
            let mid: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, z)| lambda * x + (1.0 - lambda) * z)
                .collect();
            let f_mid = net.forward(&mid).unwrap();
            let bound =
                lambda * net.forward(&a).unwrap() + (1.0 - lambda) * net.forward(&b).unwrap();
            assert!(
                f_mid <= bound + 1e-9 * (1.0 + f_mid.abs()),
                "FAIL convexity: net {net_idx} violates at lambda {lambda}"
            );
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "FAIL convexity: runtime {elapsed:?} over 30 s"
    );
    println!(
        "PASS convexity: {checked} segment tests on 100 nets, zero violations, {:.1} s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn sandwich_bound_suite() {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let mut worst_gap: f64 = 0.0;
    for net_idx in 0..100 {
        let dim = 1 + net_idx % 3;
        let net = random_net(&mut rng, 3, 4, dim);
        let report = delta_bound(&net);
        let disagreement = (report.total - report.total_closed_form).abs();
        assert!(
            disagreement <= 1e-12,
            "FAIL sandwich: recursion vs closed form differ by {disagreement}"
        );
        worst_gap = worst_gap.max(disagreement);
        let points: Vec<Vec<f64>> = (0..1_000)
            .map(|_| random_point(&mut rng, dim, 3.0))
            .collect();
        check_sandwich(&net, &points).expect("FAIL sandwich: bound violated");
    }
    println!(
        "PASS sandwich: 100 nets x 1000 points, slack within budget, recursion/closed-form gap <= {worst_gap:.2e}"
    );
}

#[test]
fn path_expansion_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let mut nets_checked = 0;
    while nets_checked < 50 {
        let net = random_net(&mut rng, 4, 4, 1 + nets_checked % 2);
        let count: usize = net.widths().iter().product();
        if count > 256 {
            continue;
        }
        let paths = expand_paths(&net).unwrap();
        assert_eq!(paths.len(), count);
        let dim = net.input_dim();
        for _ in 0..1_000 {
            let x = random_point(&mut rng, dim, 3.0);
            let flat = paths
                .iter()
                .map(|p| p.eval(&x))
                .fold(f64::NEG_INFINITY, f64::max)
                + net.output_bias();
            let recursive = surrogate_eval(&net, &x).unwrap();
            assert!(
                (flat - recursive).abs() <= 1e-10,
                "FAIL path expansion: flat {flat} vs recursive {recursive}"
            );
        }
        nets_checked += 1;
    }
    println!("PASS path expansion: 50 nets (<=256 paths) x 1000 points agree to 1e-10");
}

/// Empirical refinement proxy: fit the kinked convex target with widths
/// [K, K] under one fixed protocol and compare sup errors across K.
#[test]
fn max_affine_refinement() {
    let inputs: Vec<Vec<f64>> = (0..101).map(|i| vec![0.5 + i as f64 * 0.01]).collect();
    let targets: Vec<f64> = inputs.iter().map(|x| (x[0] - 1.0_f64).abs()).collect();
    let dense: Vec<f64> = (0..501).map(|i| 0.5 + i as f64 * 0.002).collect();
    let mut sups = Vec::new();
    for k in [2usize, 4, 8] {
        let net = DeepLseNet::init(&[k, k], 1, 0, 0.5).unwrap();
        let cfg = TrainConfig::new(0.05, 30_000);
        let fitted = fit(&net, &inputs, &targets, &cfg).unwrap();
        let sup = dense
            .iter()
            .map(|m| (fitted.eval1(*m) - (m - 1.0_f64).abs()).abs())
            .fold(0.0, f64::max);
        sups.push(sup);
    }
    let fine_enough = sups[2] < 0.02;
    let monotone = sups[0] > sups[1] && sups[1] > sups[2];
    if fine_enough && monotone {
        println!(
            "PASS refinement: sup errors {:?} decrease monotonically, K=8 under 0.02",
            sups
        );
    } else {
        println!(
            "FAIL refinement: sup errors (K=2,4,8) = {sups:?}; monotone={monotone}, K=8 under 0.02: {fine_enough}"
        );
    }
    assert!(
        fine_enough,
        "FAIL refinement: K=8 sup error {} not under 0.02",
        sups[2]
    );
    // The kinked target is exactly representable at K=2, so wider nets can
    // only tie the optimum; this ordering assertion documents the intended
    // refinement direction and is expected to be the suite's red mark.
    assert!(
        monotone,
        "FAIL refinement: sup errors {sups:?} are not strictly decreasing in K"
    );
}

#[test]
fn gradient_finite_difference_suite() {
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    for pair in 0..1_000 {
        let dim = 1 + pair % 2;
        let net = random_net(&mut rng, 3, 3, dim);
        let batch = 1 + (rng.random::<u64>() as usize) % 5;
        let inputs: Vec<Vec<f64>> = (0..batch)
            .map(|_| random_point(&mut rng, dim, 2.0))
            .collect();
        let targets: Vec<f64> = (0..batch)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let (_, grads) = net.loss_and_gradient(&inputs, &targets).unwrap();
        let analytic = grads.flatten();
        let params = net.flatten();
        let h = 1e-5;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[i] += h;
            dn[i] -= h;
            let lu = net
                .unflatten(&up)
                .unwrap()
                .loss_and_gradient(&inputs, &targets)
                .unwrap()
                .0;
            let ld = net
                .unflatten(&dn)
                .unwrap()
                .loss_and_gradient(&inputs, &targets)
                .unwrap()
                .0;
            let fd = (lu - ld) / (2.0 * h);
            let scale = analytic[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (fd - analytic[i]).abs() <= 1e-5 * scale,
                "FAIL gradients: pair {pair} coordinate {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }
    println!("PASS gradients: 1000 (net, batch) pairs match central differences at 1e-5");
}

#[test]
fn envelope_suite() {
    let mut rng = ChaCha12Rng::seed_from_u64(505);
    for trial in 0..100 {
        let dim = 1 + trial % 3;
        let net = random_net(&mut rng, 3, 4, dim);
        let radius = 0.5 + rng.random::<f64>() * 2.5;
        let sieve = SieveBox {
            layers: net
                .widths()
                .iter()
                .map(|&w| LayerCaps {
                    slope_cap: 0.5 + rng.random::<f64>() * 2.5,
                    intercept_cap: 0.5 + rng.random::<f64>() * 2.5,
                    skip_cap: 0.3 + rng.random::<f64>() * 0.65,
                    temp_cap: TEMP_FLOOR + 0.05 + rng.random::<f64>() * 2.0,
                    width_cap: w,
                })
                .collect(),
            output_cap: 0.25 + rng.random::<f64>() * 2.0,
            input_radius: radius,
        };
        sieve.validate().unwrap();
        let projected = net.project_sieve(&sieve);
        let envelope = sieve.envelope_bound();
        for _ in 0..1_000 {
            // Uniform direction scaled to stay inside the input ball.
            let mut x = random_point(&mut rng, dim, 1.0);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            for v in x.iter_mut() {
                *v *= r / norm;
            }
            let value = projected.forward(&x).unwrap();
            assert!(
                value.abs() <= envelope,
                "FAIL envelope: |f| = {} exceeds V = {envelope}",
                value.abs()
            );
        }
    }
    println!("PASS envelope: 100 boxes x 1000 points, projected nets stay under the bound");
}

#[test]
fn lse_lipschitz_suite() {
    let mut rng = ChaCha12Rng::seed_from_u64(606);
    for _ in 0..100_000 {
        let m = 1 + (rng.random::<u64>() as usize) % 8;
        let t = 10f64.powf(rng.random::<f64>() * 4.0 - 3.0);
        let u: Vec<f64> = (0..m)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 10.0)
            .collect();
        let v: Vec<f64> = (0..m)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 10.0)
            .collect();
        let sup_diff = u
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let lhs = (lse(&TemperedVector::new(t, &u).unwrap())
            - lse(&TemperedVector::new(t, &v).unwrap()))
        .abs();
        assert!(
            lhs <= sup_diff,
            "FAIL lipschitz: |lse(u) - lse(v)| = {lhs} over sup |u - v| = {sup_diff}"
        );
    }
    println!("PASS lipschitz: 100000 random pairs within the sup-norm bound");
}

#[test]
fn breeden_litzenberger_oracle() {
    let grid = StrikeGrid::new(40.0, 220.0, 361, 100.0, 0.0, 0.0, 1.0).unwrap();
    let rnd = extract_rnd(|_| 0.2, &grid).unwrap();
    let spacing = grid.spacing();
    let interior_sum: f64 = rnd.density[1..rnd.density.len() - 1].iter().sum();
    let mass =
        spacing * (0.5 * rnd.density[0] + interior_sum + 0.5 * rnd.density[rnd.density.len() - 1]);
    assert!(
        (mass - 1.0).abs() <= 1e-9,
        "FAIL density oracle: renormalized mass {mass}"
    );
    let mut worst: f64 = 0.0;
    for (i, &strike) in grid.strikes().iter().enumerate() {
        if i < 2 || i >= grid.len() - 2 {
            continue; // one-sided endpoint stencils are excluded
        }
        let oracle = lognormal_terminal_density(100.0, 0.0, 0.0, 0.2, 1.0, strike);
        let err = (rnd.density[i] - oracle).abs();
        worst = worst.max(err);
        assert!(
            err <= 1e-4,
            "FAIL density oracle: strike {strike} error {err}"
        );
    }
    println!(
        "PASS density oracle: lognormal recovered pointwise (worst {worst:.2e}), mass within 1e-9"
    );
}

#[test]
fn martingale_suite() {
    let tau = 1.0;
    let models: [(&str, SimModelParams); 4] = [
        (
            "bates",
            SimModelParams::Bates(BatesParams::study_defaults()),
        ),
        (
            "kou-heston",
            SimModelParams::KouHeston(KouHestonParams::study_defaults()),
        ),
        ("abl", SimModelParams::Abl(AblParams::study_set_one())),
        (
            "three-fde",
            SimModelParams::ThreeFde(ThreeFdeParams::study_liquid_proxy()),
        ),
    ];
    for (name, model) in &models {
        let start = Instant::now();
        let cfg = SimConfig {
            n_paths: 100_000,
            n_steps: 252,
            seed: 20_240_101,
            scheme: VarianceScheme::FullTruncation,
        };
        let terminals = simulate_terminals(model, tau, &cfg).unwrap();
        let df = (-model.rate() * tau).exp();
        let n = terminals.len() as f64;
        let mean = terminals.iter().map(|s| s * df).sum::<f64>() / n;
        let var = terminals
            .iter()
            .map(|s| {
                let d = s * df - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0);
        let se = (var / n).sqrt();
        let target = model.spot() * (-model.dividend() * tau).exp();
        let elapsed = start.elapsed().as_secs_f64();
        assert!(
            (mean - target).abs() < 3.0 * se,
            "FAIL martingale [{name}]: mean {mean}, target {target}, se {se}"
        );
        assert!(
            elapsed < 60.0,
            "FAIL martingale [{name}]: runtime {elapsed:.1} s over 60 s"
        );
        println!("PASS martingale [{name}]: |{mean:.4} - {target}| < 3 x {se:.4}, {elapsed:.1} s");
    }
}

struct SeedOutcome {
    seed: u64,
    l1_deep: f64,
    l1_spline: f64,
    mae_deep: f64,
    mae_spline: f64,
    stopped_early: bool,
    stop_epoch: usize,
    epochs_run: usize,
    objective_at_stop: f64,
    objective_final: f64,
}

fn pipeline_outcomes() -> &'static Vec<SeedOutcome> {
    static OUTCOMES: OnceLock<Vec<SeedOutcome>> = OnceLock::new();
    OUTCOMES.get_or_init(|| {
        let model = SimModelParams::Bates(BatesParams::study_defaults());
        let strikes: Vec<f64> = (0..37).map(|i| 60.0 + 2.5 * i as f64).collect();
        let grid = StrikeGrid::new(40.0, 220.0, 601, 100.0, 0.06, 0.0, 1.0).unwrap();
        let target = TargetMarket::Translate(TranslationRule {
            vol_shift: VolShift::Multiplicative(0.9),
            strike_shift: 20.0,
        });
        let censor = CensorRule::Strikes(vec![82.0, 97.0, 98.0]);
        let eval_strikes: Vec<f64> = (0..6).map(|i| 85.0 + 5.0 * i as f64).collect();

        [1u64, 2, 3, 4, 5]
            .iter()
            .map(|&seed| {
                let sim = SimConfig {
                    n_paths: 100_000,
                    n_steps: 252,
                    seed,
                    scheme: VarianceScheme::FullTruncation,
                };
                let scenario = build_scenario(
                    &model,
                    &strikes,
                    1.0,
                    &sim,
                    &target,
                    &censor,
                    seed,
                    &grid,
                    &TruthFit::default_deep(),
                )
                .unwrap();
                let net = DeepLseNet::init(&[3, 3], 1, seed, 0.5).unwrap();
                let pre_cfg = TrainConfig::new(0.02, 5_000);
                let mut ft_cfg = TrainConfig::new(0.005, 2_000);
                ft_cfg.stationarity_window = 10;
                let fit = two_phase_fit(
                    &net,
                    &scenario.liquid_curve,
                    &scenario.illiquid_quotes,
                    &pre_cfg,
                    &ft_cfg,
                    1.0,
                    1.0,
                    1e-3,
                )
                .unwrap();
                let deep_rnd = rnd_from_net(&fit.transferred, &grid).unwrap();
                let points = illiquid_points(&scenario.illiquid_quotes).unwrap();
                let spline = quadratic_spline(&points).unwrap();
                let spline_rnd = extract_rnd(|m| spline.value(m).max(SIGMA_FLOOR), &grid).unwrap();

                let mae = |estimate: &RndEstimate| -> f64 {
                    eval_strikes
                        .iter()
                        .map(|k| {
                            let market = price_from_rnd(&scenario.truth_rnd, *k).unwrap();
                            (price_from_rnd(estimate, *k).unwrap() - market).abs()
                        })
                        .sum::<f64>()
                        / eval_strikes.len() as f64
                };

                SeedOutcome {
                    seed,
                    l1_deep: l1_distance(&deep_rnd, &scenario.truth_rnd).unwrap(),
                    l1_spline: l1_distance(&spline_rnd, &scenario.truth_rnd).unwrap(),
                    mae_deep: mae(&deep_rnd),
                    mae_spline: mae(&spline_rnd),
                    stopped_early: fit.trace.stopped_early,
                    stop_epoch: fit.trace.stop_epoch,
                    epochs_run: fit.trace.epochs.len() - 1,
                    objective_at_stop: fit.trace.epochs[fit.trace.stop_epoch].objective,
                    objective_final: fit.trace.epochs.last().unwrap().objective,
                }
            })
            .collect()
    })
}

#[test]
fn transfer_dominates_spline_in_l1() {
    let outcomes = pipeline_outcomes();
    for o in outcomes {
        assert!(
            o.l1_deep < o.l1_spline,
            "FAIL transfer-l1: seed {} deep {} vs spline {}",
            o.seed,
            o.l1_deep,
            o.l1_spline
        );
    }
    let detail: Vec<String> = outcomes
        .iter()
        .map(|o| format!("seed {}: {:.3} < {:.3}", o.seed, o.l1_deep, o.l1_spline))
        .collect();
    println!(
        "PASS transfer-l1: density closer than the spline on 5 of 5 seeds ({})",
        detail.join("; ")
    );
}

#[test]
fn transfer_dominates_spline_in_pricing_mae() {
    let outcomes = pipeline_outcomes();
    for o in outcomes {
        assert!(
            o.mae_deep < o.mae_spline,
            "FAIL transfer-mae: seed {} deep {} vs spline {}",
            o.seed,
            o.mae_deep,
            o.mae_spline
        );
    }
    let detail: Vec<String> = outcomes
        .iter()
        .map(|o| format!("seed {}: {:.3} < {:.3}", o.seed, o.mae_deep, o.mae_spline))
        .collect();
    println!(
        "PASS transfer-mae: six-strike pricing MAE below the spline on 5 of 5 seeds ({})",
        detail.join("; ")
    );
}

#[test]
fn stopping_rule_halts_early_at_a_minimum() {
    let outcomes = pipeline_outcomes();
    for o in outcomes {
        assert!(
            o.stopped_early && o.stop_epoch < o.epochs_run,
            "FAIL stopping: seed {} ran to the epoch cap",
            o.seed
        );
        assert!(
            o.objective_at_stop <= o.objective_final,
            "FAIL stopping: seed {} snapshot objective {} above final {}",
            o.seed,
            o.objective_at_stop,
            o.objective_final
        );
    }
    let detail: Vec<String> = outcomes
        .iter()
        .map(|o| format!("seed {}: epoch {}", o.seed, o.stop_epoch))
        .collect();
    println!(
        "PASS stopping: fine-tune halts before the cap with the snapshot at the objective minimum ({})",
        detail.join("; ")
    );
}
