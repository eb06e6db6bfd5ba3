//! Zero-temperature surrogate of a deep LSE network and its bound
//! machinery.
//!
//! Replacing every LSE by a hard max yields a deep max-affine function that
//! sandwiches the network: `surrogate ≤ network ≤ surrogate + Δ_L`, where
//! the slack accumulates as `Δ_1 = T_1 log K_1`,
//! `Δ_ℓ = T_ℓ log K_ℓ + α_max Δ_{ℓ-1}`. The surrogate itself flattens into a
//! plain max over one affine piece per path through the layers.

use crate::error::{Error, Result};
use crate::lse::softplus;
use crate::net::DeepLseNet;

/// Cap on the number of enumerated paths; enumeration is a verification
/// tool, not a runtime dependency.
pub const PATH_GUARD: u128 = 1_000_000;

/// One affine piece of the flattened surrogate, indexed by the per-layer
/// piece choices that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAffine {
    pub path: Vec<usize>,
    pub slope: Vec<f64>,
    pub intercept: f64,
}

impl PathAffine {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + self.slope.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>()
    }
}

/// Slack budget between the network and its max-affine surrogate.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// Per-layer accumulated slack, computed by the recursion.
    pub per_layer: Vec<f64>,
    /// Total slack at the output layer (recursion).
    pub total: f64,
    /// The same total from the closed form
    /// `Σ_j T_j log K_j Π_{r>j} α_max`; agrees with `total` to 1e-12.
    pub total_closed_form: f64,
    /// Largest realized skip weight per layer (1 for the first layer by
    /// convention).
    pub skip_maxima: Vec<f64>,
    /// `M / (1 − q)` with `M = max_j T_j log K_j` and `q = max skip`, valid
    /// whenever every skip maximum past layer 1 stays below one; bounds the
    /// slack uniformly in depth.
    pub depth_uniform_cap: Option<f64>,
}

/// Min/max observed `forward − surrogate` over a point set.
#[derive(Debug, Clone, Copy)]
pub struct SlackReport {
    pub min_slack: f64,
    pub max_slack: f64,
    pub total_budget: f64,
}

/// Evaluates the deep max-affine surrogate: the network recursion with
/// every LSE replaced by a hard max, using the realized skip weights.
pub fn surrogate_eval(net: &DeepLseNet, x: &[f64]) -> Result<f64> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    let dim = net.input_dim();
    let mut prev = 0.0;
    for (idx, layer) in net.layers().iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for k in 0..layer.width() {
            let mut score = layer.intercepts[k];
            for (a, xi) in layer.slopes[k * dim..(k + 1) * dim].iter().zip(x) {
                score += a * xi;
            }
            if idx > 0 {
                score += softplus(layer.skip_raw.as_ref().unwrap()[k]) * prev;
            }
            best = best.max(score);
        }
        prev = best;
    }
    Ok(prev + net.output_bias())
}

/// Expands the surrogate into its flat max-affine form, one piece per path
/// `(k_1, …, k_L)`:
/// `A_{(p,k)} = α_k A_p + A_k`, `b_{(p,k)} = α_k b_p + b_k`.
pub fn expand_paths(net: &DeepLseNet) -> Result<Vec<PathAffine>> {
    let count: u128 = net.layers().iter().map(|l| l.width() as u128).product();
    if count > PATH_GUARD {
        return Err(Error::PathBudget {
            paths: count,
            guard: PATH_GUARD,
        });
    }

    let dim = net.input_dim();
    let first = &net.layers()[0];
    let mut paths: Vec<PathAffine> = (0..first.width())
        .map(|k| PathAffine {
            path: vec![k],
            slope: first.slopes[k * dim..(k + 1) * dim].to_vec(),
            intercept: first.intercepts[k],
        })
        .collect();

    for layer in &net.layers()[1..] {
        let skips = layer.skip_weights().unwrap();
        let mut grown = Vec::with_capacity(paths.len() * layer.width());
        for p in &paths {
            for k in 0..layer.width() {
                let alpha = skips[k];
                let mut slope = vec![0.0; dim];
                for (j, s) in slope.iter_mut().enumerate() {
                    *s = alpha * p.slope[j] + layer.slopes[k * dim + j];
                }
                let mut path = p.path.clone();
                path.push(k);
                grown.push(PathAffine {
                    path,
                    slope,
                    intercept: alpha * p.intercept + layer.intercepts[k],
                });
            }
        }
        paths = grown;
    }
    Ok(paths)
}

/// Closed form for a single path's affine piece,
/// `A_p = Σ_j (Π_{r>j} α_{k_r}) A_{k_j}`, computed without the recursion.
/// Used as an independent oracle for [`expand_paths`].
pub fn path_affine_closed_form(net: &DeepLseNet, path: &[usize]) -> PathAffine {
    assert_eq!(path.len(), net.depth());
    let dim = net.input_dim();
    let mut slope = vec![0.0; dim];
    let mut intercept = 0.0;
    for (j, (&k, layer)) in path.iter().zip(net.layers()).enumerate() {
        let mut tail = 1.0;
        for (r, layer_r) in net.layers().iter().enumerate().skip(j + 1) {
            tail *= softplus(layer_r.skip_raw.as_ref().unwrap()[path[r]]);
        }
        for (s, a) in slope.iter_mut().zip(&layer.slopes[k * dim..(k + 1) * dim]) {
            *s += tail * a;
        }
        intercept += tail * layer.intercepts[k];
    }
    PathAffine {
        path: path.to_vec(),
        slope,
        intercept,
    }
}

/// Computes the per-layer slack budget by both the recursion and the
/// closed form.
pub fn delta_bound(net: &DeepLseNet) -> BoundReport {
    let mut skip_maxima = Vec::with_capacity(net.depth());
    let mut temps_log_widths = Vec::with_capacity(net.depth());
    for (idx, layer) in net.layers().iter().enumerate() {
        let alpha_max = if idx == 0 {
            1.0
        } else {
            layer
                .skip_weights()
                .unwrap()
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        skip_maxima.push(alpha_max);
        temps_log_widths.push(layer.temperature() * (layer.width() as f64).ln());
    }

    let mut per_layer = Vec::with_capacity(net.depth());
    let mut delta = 0.0;
    for (idx, &tlk) in temps_log_widths.iter().enumerate() {
        delta = if idx == 0 {
            tlk
        } else {
            tlk + skip_maxima[idx] * delta
        };
        per_layer.push(delta);
    }

    let depth = net.depth();
    let mut closed = 0.0;
    for (j, &tlk) in temps_log_widths.iter().enumerate() {
        let tail: f64 = skip_maxima[j + 1..depth].iter().product();
        closed += tlk * tail;
    }

    let m = temps_log_widths
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let q = skip_maxima[1..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let depth_uniform_cap = if depth == 1 {
        Some(m)
    } else if q < 1.0 {
        Some(m / (1.0 - q))
    } else {
        None
    };

    BoundReport {
        per_layer,
        total: delta,
        total_closed_form: closed,
        skip_maxima,
        depth_uniform_cap,
    }
}

/// Verifies `surrogate(x) ≤ forward(x) ≤ surrogate(x) + Δ_L + 1e-9` at
/// every point, returning the min/max observed slack. A violation is an
/// error naming the offending point.
pub fn check_sandwich(net: &DeepLseNet, points: &[Vec<f64>]) -> Result<SlackReport> {
    if points.is_empty() {
        return Err(Error::Empty { what: "points" });
    }
    let budget = delta_bound(net).total;
    let mut min_slack = f64::INFINITY;
    let mut max_slack = f64::NEG_INFINITY;
    for x in points {
        let lower = surrogate_eval(net, x)?;
        let upper = net.forward(x)?;
        let slack = upper - lower;
        if slack < 0.0 || slack > budget + 1e-9 {
            return Err(Error::BoundViolation {
                x: x.clone(),
                surrogate: lower,
                forward: upper,
                cap: budget,
            });
        }
        min_slack = min_slack.min(slack);
        max_slack = max_slack.max(slack);
    }
    Ok(SlackReport {
        min_slack,
        max_slack,
        total_budget: budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lse::softplus_inv;
    use crate::net::{LayerParams, TEMP_FLOOR};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_points(rng: &mut ChaCha12Rng, n: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * radius)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn singleton_widths_make_surrogate_equal_forward() {
        let net = DeepLseNet::init(&[1, 1, 1], 1, 9, 0.8).unwrap();
        for x in [-2.0, -0.5, 0.0, 1.5, 3.0] {
            let s = surrogate_eval(&net, &[x]).unwrap();
            let f = net.forward(&[x]).unwrap();
            assert_eq!(s, f);
        }
    }

    #[test]
    fn surrogate_never_exceeds_forward() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let net = DeepLseNet::init(&[3, 4], 2, rng.random(), 1.0).unwrap();
            for x in random_points(&mut rng, 50, 2, 3.0) {
                let s = surrogate_eval(&net, &x).unwrap();
                let f = net.forward(&x).unwrap();
                assert!(s <= f, "surrogate {s} above forward {f}");
            }
        }
    }

    #[test]
    fn surrogate_matches_flat_max_over_paths() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let net = DeepLseNet::init(&[3, 2, 2], 1, rng.random(), 1.2).unwrap();
            let paths = expand_paths(&net).unwrap();
            assert_eq!(paths.len(), 12);
            for x in random_points(&mut rng, 100, 1, 4.0) {
                let flat = paths
                    .iter()
                    .map(|p| p.eval(&x))
                    .fold(f64::NEG_INFINITY, f64::max)
                    + net.output_bias();
                let rec = surrogate_eval(&net, &x).unwrap();
                assert!((flat - rec).abs() < 1e-10, "flat {flat} vs recursive {rec}");
            }
        }
    }

    #[test]
    fn single_layer_paths_are_the_affine_pieces() {
        let net = DeepLseNet::init(&[4], 2, 5, 0.9).unwrap();
        let paths = expand_paths(&net).unwrap();
        assert_eq!(paths.len(), 4);
        for (k, p) in paths.iter().enumerate() {
            assert_eq!(p.path, vec![k]);
            assert_eq!(p.slope, net.layers()[0].slopes[k * 2..(k + 1) * 2].to_vec());
            assert_eq!(p.intercept, net.layers()[0].intercepts[k]);
        }
    }

    #[test]
    fn unit_skips_add_layer_pieces() {
        // With α ≡ 1, the path affine is the plain sum of the chosen pieces.
        let unit = softplus_inv(1.0).unwrap();
        let net = DeepLseNet::from_parts(
            1,
            vec![
                LayerParams {
                    slopes: vec![1.0, -2.0],
                    intercepts: vec![0.5, -0.25],
                    skip_raw: None,
                    temp_raw: 0.0,
                },
                LayerParams {
                    slopes: vec![3.0, 0.5],
                    intercepts: vec![1.0, 2.0],
                    skip_raw: Some(vec![unit; 2]),
                    temp_raw: 0.0,
                },
            ],
            0.0,
        )
        .unwrap();
        let paths = expand_paths(&net).unwrap();
        for p in &paths {
            let (i, k) = (p.path[0], p.path[1]);
            let expected_slope = net.layers()[0].slopes[i] + net.layers()[1].slopes[k];
            let expected_intercept = net.layers()[0].intercepts[i] + net.layers()[1].intercepts[k];
            assert!((p.slope[0] - expected_slope).abs() < 1e-12);
            assert!((p.intercept - expected_intercept).abs() < 1e-12);
        }
    }

    #[test]
    fn recursion_matches_closed_form_per_path() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..10 {
            let net = DeepLseNet::init(&[2, 3, 2], 2, rng.random(), 1.5).unwrap();
            for p in expand_paths(&net).unwrap() {
                let closed = path_affine_closed_form(&net, &p.path);
                for (a, b) in p.slope.iter().zip(&closed.slope) {
                    assert!((a - b).abs() < 1e-12);
                }
                assert!((p.intercept - closed.intercept).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn path_guard_rejects_excessive_widths() {
        let net = DeepLseNet::init(&[101, 101, 101], 1, 1, 0.1).unwrap();
        assert!(matches!(expand_paths(&net), Err(Error::PathBudget { .. })));
    }

    #[test]
    fn delta_bound_closed_cases() {
        let temp_one = softplus_inv(1.0 - TEMP_FLOOR).unwrap();
        let single = DeepLseNet::from_parts(
            1,
            vec![LayerParams {
                slopes: vec![0.0; 3],
                intercepts: vec![0.0; 3],
                skip_raw: None,
                temp_raw: temp_one,
            }],
            0.0,
        )
        .unwrap();
        let report = delta_bound(&single);
        assert!((report.total - 3.0_f64.ln()).abs() < 1e-12);

        let half_skip = softplus_inv(0.5).unwrap();
        let two = DeepLseNet::from_parts(
            1,
            vec![
                LayerParams {
                    slopes: vec![0.0; 3],
                    intercepts: vec![0.0; 3],
                    skip_raw: None,
                    temp_raw: temp_one,
                },
                LayerParams {
                    slopes: vec![0.0; 3],
                    intercepts: vec![0.0; 3],
                    skip_raw: Some(vec![half_skip; 3]),
                    temp_raw: temp_one,
                },
            ],
            0.0,
        )
        .unwrap();
        let report = delta_bound(&two);
        let expected = 1.5 * 3.0_f64.ln();
        assert!((report.total - expected).abs() < 1e-9);
        assert!((report.total - report.total_closed_form).abs() < 1e-12);
    }

    #[test]
    fn width_one_layers_have_zero_slack() {
        let net = DeepLseNet::init(&[1, 1], 1, 2, 1.0).unwrap();
        let report = delta_bound(&net);
        assert_eq!(report.total, 0.0);
        let points: Vec<Vec<f64>> = (-5..=5).map(|i| vec![i as f64 * 0.3]).collect();
        let slack = check_sandwich(&net, &points).unwrap();
        assert_eq!(slack.min_slack, 0.0);
        assert_eq!(slack.max_slack, 0.0);
    }

    #[test]
    fn sandwich_holds_on_random_nets() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for _ in 0..20 {
            let net = DeepLseNet::init(&[4, 3], 1, rng.random(), 1.0).unwrap();
            let points = random_points(&mut rng, 200, 1, 3.0);
            check_sandwich(&net, &points).expect("sandwich must hold");
        }
    }

    #[test]
    fn coincident_scores_make_the_upper_bound_tight() {
        // A one-layer network whose pieces all agree: the slack equals
        // T log K everywhere.
        let temp_one = softplus_inv(1.0 - TEMP_FLOOR).unwrap();
        let net = DeepLseNet::from_parts(
            1,
            vec![LayerParams {
                slopes: vec![0.7; 4],
                intercepts: vec![-0.2; 4],
                skip_raw: None,
                temp_raw: temp_one,
            }],
            0.4,
        )
        .unwrap();
        let report = check_sandwich(&net, &[vec![0.9]]).unwrap();
        let budget = delta_bound(&net).total;
        assert!((report.max_slack - budget).abs() < 1e-9);
    }

    #[test]
    fn shrinking_temperatures_shrink_the_gap() {
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let base = DeepLseNet::init(&[3, 3], 1, 1234, 1.0).unwrap();
        let points = random_points(&mut rng, 100, 1, 2.0);
        let temps: Vec<f64> = base.layers().iter().map(|l| l.temperature()).collect();

        let mut last_gap = f64::INFINITY;
        for scale in [1.0, 0.5, 0.25, 0.125, 0.0625] {
            let mut scaled = base.clone();
            for (layer, t) in scaled.layers_mut().iter_mut().zip(&temps) {
                layer.temp_raw = softplus_inv(scale * t - TEMP_FLOOR).unwrap();
            }
            let report = check_sandwich(&scaled, &points).unwrap();
            assert!(report.max_slack <= delta_bound(&scaled).total + 1e-9);
            assert!(
                report.max_slack <= last_gap + 1e-12,
                "gap must shrink with the temperature scale"
            );
            last_gap = report.max_slack;
        }
    }

    #[test]
    fn capped_skips_bound_slack_uniformly_in_depth() {
        let q = 0.8;
        let q_raw = softplus_inv(q).unwrap();
        let temp_one = softplus_inv(1.0 - TEMP_FLOOR).unwrap();
        let width = 3;
        let m = 1.0 * (width as f64).ln();
        for depth in 1..=20 {
            let layers: Vec<LayerParams> = (0..depth)
                .map(|idx| LayerParams {
                    slopes: vec![0.1; width],
                    intercepts: vec![0.0; width],
                    skip_raw: (idx > 0).then(|| vec![q_raw; width]),
                    temp_raw: temp_one,
                })
                .collect();
            let net = DeepLseNet::from_parts(1, layers, 0.0).unwrap();
            let report = delta_bound(&net);
            assert!(report.total <= m / (1.0 - q) + 1e-9);
            if depth > 1 {
                let cap = report.depth_uniform_cap.unwrap();
                assert!((cap - m / (1.0 - q)).abs() < 1e-6);
            }
        }
    }
}
