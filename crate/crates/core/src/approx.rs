//! Constructive approximation of a target distribution by stacking
//! deepening layers: a deterministic rule for picking the configuration to
//! boost, a single divergence-reducing step, the greedy loop, and the
//! one-layer-per-supported-configuration ladder with its closed-form
//! limiting distribution.
//!
//! Each added layer multiplies the unnormalized visible mass by
//! `1 + exp(<w_eff, v> + b_eff)`. With `w_eff = alpha (target - 1/2)` the
//! factor concentrates on the boosted configuration: every disagreeing
//! unit costs `alpha / 2` in the exponent, so for large `alpha` all other
//! configurations keep a factor of one.

use crate::error::{Error, Result};
use crate::inference::{kl_divergence, Distribution, EnumerationCaps};
use crate::model::{dot_config, DbnModel, DeepLayer, FieldConfig};
use crate::tree::TreeGroup;

/// Search knobs for the divergence-reducing step.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Starting coupling strength, doubled until the boost inequality holds.
    pub alpha_init: f64,
    /// Budget of doublings before giving up.
    pub max_alpha_doublings: u32,
    /// Bias line search below the on-target activation: offsets
    /// `-start - step * t` for `t = 0..count`.
    pub descent_start: f64,
    pub descent_step: f64,
    pub descent_count: u32,
    /// Refinement offsets at and above the on-target activation, tried
    /// after the descent; the best exact divergence wins.
    pub refine_offsets: Vec<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha_init: DEFAULT_ALPHA,
            max_alpha_doublings: 60,
            descent_start: 8.0,
            descent_step: 4.0,
            descent_count: 6,
            refine_offsets: vec![0.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0],
        }
    }
}

/// Default coupling strength: off-target factors are within 1e-17 of one.
pub const DEFAULT_ALPHA: f64 = 80.0;

/// Default first-layer bias offset for the ladder construction.
pub const DEFAULT_LAMBDA1: f64 = 14.0;

/// The boosted configuration and its coupling vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostSelection {
    pub target: FieldConfig,
    pub coupling: Vec<f64>,
}

/// Picks the configuration where the target mass most exceeds the model
/// mass (ties to the smallest bit-mask) and the coupling
/// `alpha (target - 1/2)` that singles it out.
pub fn select_boost_target(
    q: &Distribution,
    p_model: &Distribution,
    alpha: f64,
) -> Result<BoostSelection> {
    if q.width() != p_model.width() {
        return Err(Error::WidthMismatch {
            expected: q.width(),
            got: p_model.width(),
        });
    }
    let mut best: Option<(u64, f64)> = None;
    for bits in 0..q.probs().len() as u64 {
        let gap = q.prob(bits) - p_model.prob(bits);
        if gap > 0.0 && best.map_or(true, |(_, g)| gap > g) {
            best = Some((bits, gap));
        }
    }
    let (bits, _) = best.ok_or(Error::AlreadyMatched)?;
    let target = FieldConfig::new(bits, q.width())?;
    Ok(BoostSelection {
        coupling: boost_coupling(target, alpha),
        target,
    })
}

/// `alpha (target - 1/2)` componentwise: `+alpha/2` on set units,
/// `-alpha/2` on clear ones.
pub fn boost_coupling(target: FieldConfig, alpha: f64) -> Vec<f64> {
    (0..target.width())
        .map(|i| alpha * ((target.bit(i) as u8 as f64) - 0.5))
        .collect()
}

/// The boost inequality: the coupling-weighted mass deficit
/// `sum_v exp(<w, v>) (P(v) - Q(v))` is strictly negative. Evaluated with
/// the exponents shifted by their maximum so large couplings cannot
/// overflow.
pub fn boost_inequality_holds(
    q: &Distribution,
    p_model: &Distribution,
    coupling: &[f64],
) -> Result<bool> {
    Ok(weighted_mass_deficit_shifted(q, p_model, coupling)? < 0.0)
}

fn weighted_mass_deficit_shifted(
    q: &Distribution,
    p_model: &Distribution,
    coupling: &[f64],
) -> Result<f64> {
    if q.width() != p_model.width() {
        return Err(Error::WidthMismatch {
            expected: q.width(),
            got: p_model.width(),
        });
    }
    let activations: Vec<f64> = FieldConfig::all(q.width())
        .map(|v| dot_config(coupling, v))
        .collect();
    let max = activations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    for (bits, act) in activations.iter().enumerate() {
        acc += (act - max).exp() * (p_model.prob(bits as u64) - q.prob(bits as u64));
    }
    Ok(acc)
}

/// First-order estimate of the divergence change from one added layer
/// with coupling `w` and bias `b`:
/// `sum_v exp(<w, v> + b) (P(v) - Q(v))`, valid as the bias drops.
pub fn kl_gap_estimate(
    q: &Distribution,
    p_model: &Distribution,
    coupling: &[f64],
    bias: f64,
) -> Result<f64> {
    if q.width() != p_model.width() {
        return Err(Error::WidthMismatch {
            expected: q.width(),
            got: p_model.width(),
        });
    }
    let mut acc = 0.0;
    for v in FieldConfig::all(q.width()) {
        let act = dot_config(coupling, v) + bias;
        acc += act.exp() * (p_model.prob(v.bits()) - q.prob(v.bits()));
    }
    Ok(acc)
}

/// One constructive step: adds a single layer that strictly reduces the
/// exact divergence to the target.
///
/// The coupling strength doubles from its initial value until the boost
/// inequality holds; the bias then line-searches downward from the
/// on-target activation, with a refinement pass around it, keeping the
/// best exactly recomputed divergence. Fails with the best value found if
/// no candidate improves.
pub fn improvement_step(
    model: &DbnModel,
    q: &Distribution,
    caps: &EnumerationCaps,
    search: &SearchConfig,
) -> Result<(DeepLayer, f64)> {
    let current = crate::deepening::extended_marginal(model, caps)?;
    let kl_before = kl_divergence(q, &current)?;
    if !(kl_before > 0.0) {
        return Err(Error::AlreadyMatched);
    }

    let mut alpha = search.alpha_init;
    let mut selection = select_boost_target(q, &current, alpha)?;
    let mut doublings = 0;
    while !boost_inequality_holds(q, &current, &selection.coupling)? {
        if doublings >= search.max_alpha_doublings {
            return Err(Error::SearchBudgetExhausted { best_kl: kl_before });
        }
        alpha *= 2.0;
        doublings += 1;
        selection.coupling = boost_coupling(selection.target, alpha);
    }

    let on_target = dot_config(&selection.coupling, selection.target);
    let mut offsets: Vec<f64> = (0..search.descent_count)
        .map(|t| -search.descent_start - search.descent_step * t as f64)
        .collect();
    offsets.extend_from_slice(&search.refine_offsets);

    let mut best: Option<(DeepLayer, f64)> = None;
    for offset in offsets {
        let layer = DeepLayer::new(selection.coupling.clone(), -on_target + offset, 1, 1);
        let candidate = model.clone().with_layer(layer.clone())?;
        let kl = kl_divergence(q, &crate::deepening::extended_marginal(&candidate, caps)?)?;
        if best.as_ref().map_or(true, |(_, b)| kl < *b) {
            best = Some((layer, kl));
        }
    }
    let (layer, kl_after) = best.expect("candidate grid is nonempty");
    if kl_after < kl_before {
        Ok((layer, kl_after))
    } else {
        Err(Error::SearchBudgetExhausted { best_kl: kl_after })
    }
}

/// One row of a construction trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: u32,
    pub target_bitmask: u64,
    pub alpha: f64,
    /// Ladder steps record the bias offset `lambda`; greedy steps record
    /// the absolute bias of the added layer.
    pub lambda_or_beff: f64,
    /// Exact divergence to the target after this step.
    pub kl: f64,
}

/// Record of a construction run: one row per added layer and the final
/// exact divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxTrace {
    pub steps: Vec<TraceStep>,
    pub final_kl: f64,
    /// Whether the requested divergence bound was reached within budget.
    pub reached: bool,
}

fn fmt_trace_float(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

impl ApproxTrace {
    /// CSV form: `step,target_bitmask,alpha,lambda_or_beff,kl`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("step,target_bitmask,alpha,lambda_or_beff,kl\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.step,
                s.target_bitmask,
                fmt_trace_float(s.alpha),
                fmt_trace_float(s.lambda_or_beff),
                fmt_trace_float(s.kl)
            ));
        }
        out
    }
}

/// Greedy construction: repeats the improvement step until the divergence
/// drops below `eps` or the layer budget runs out. The divergence column
/// of the trace decreases strictly.
pub fn greedy_construct(
    q: &Distribution,
    base: &DbnModel,
    eps: f64,
    max_layers: u32,
    caps: &EnumerationCaps,
    search: &SearchConfig,
) -> Result<(DbnModel, ApproxTrace)> {
    let mut model = base.clone();
    let mut steps = vec![];
    let mut kl = kl_divergence(q, &crate::deepening::extended_marginal(&model, caps)?)?;
    while kl >= eps && (steps.len() as u32) < max_layers {
        match improvement_step(&model, q, caps, search) {
            Ok((layer, kl_after)) => {
                let row = TraceStep {
                    step: steps.len() as u32 + 1,
                    target_bitmask: best_target_bits(&layer),
                    alpha: layer_alpha(&layer),
                    lambda_or_beff: layer.b_eff,
                    kl: kl_after,
                };
                model.push_layer(layer)?;
                steps.push(row);
                kl = kl_after;
            }
            Err(Error::SearchBudgetExhausted { .. }) | Err(Error::AlreadyMatched) => break,
            Err(e) => return Err(e),
        }
    }
    Ok((
        model,
        ApproxTrace {
            steps,
            final_kl: kl,
            reached: kl < eps,
        },
    ))
}

/// Reads the boosted configuration back off a coupling of the
/// `alpha (target - 1/2)` form: the units with positive coupling.
fn best_target_bits(layer: &DeepLayer) -> u64 {
    let mut bits = 0u64;
    for (i, w) in layer.w_eff.iter().enumerate() {
        if *w > 0.0 {
            bits |= 1 << i;
        }
    }
    bits
}

fn layer_alpha(layer: &DeepLayer) -> f64 {
    2.0 * layer.w_eff.iter().cloned().fold(0.0f64, |m, w| m.max(w.abs()))
}

/// Bias offset realizing a mass multiplier `r = 1 + exp(lambda)`;
/// a multiplier of one freezes the layer.
pub fn bias_offset_for_multiplier(r: f64) -> Result<f64> {
    if r < 1.0 {
        return Err(Error::SearchBudgetExhausted { best_kl: r });
    }
    if r == 1.0 {
        Ok(f64::NEG_INFINITY)
    } else {
        Ok((r - 1.0).ln())
    }
}

/// Supported configurations sorted by ascending mass (ties to the smaller
/// bit-mask), the order in which the ladder boosts them.
pub fn sorted_support(q: &Distribution) -> Vec<u64> {
    let mut support = q.support();
    support.sort_by(|a, b| {
        q.prob(*a)
            .partial_cmp(&q.prob(*b))
            .expect("probabilities are not NaN")
            .then(a.cmp(b))
    });
    support
}

/// Ladder construction: starting from the uniform zero-parameter model on
/// the given group, adds one layer per supported configuration of the
/// target, in ascending-mass order.
///
/// The first layer boosts the lightest configuration by `1 + exp(lambda1)`;
/// layer `i` chooses its offset so that the boosted masses satisfy the
/// pairwise ratio condition `P(u_i) / P(u_{i-1}) = Q(u_i) / Q(u_{i-1})` in
/// the strong-coupling limit. A required multiplier of one freezes the
/// layer. Targets narrower than the group are zero-padded.
pub fn support_ladder_construct(
    q: &Distribution,
    group: &TreeGroup,
    lambda1: f64,
    alpha: f64,
    caps: &EnumerationCaps,
) -> Result<(DbnModel, ApproxTrace)> {
    let n = group.order() as u32;
    caps.check_units(n)?;
    if q.width() > n {
        return Err(Error::WidthMismatch {
            expected: n,
            got: q.width(),
        });
    }
    let q = q.zero_pad(n)?;
    let support = sorted_support(&q);
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }

    let mut model = DbnModel::zero_conv(*group);
    let mut steps = vec![];
    let mut multiplier = 1.0 + lambda1.exp();
    let mut lambda = lambda1;
    for (i, &bits) in support.iter().enumerate() {
        if i > 0 {
            multiplier *= q.prob(bits) / q.prob(support[i - 1]);
            lambda = bias_offset_for_multiplier(multiplier)?;
        }
        let target = FieldConfig::new(bits, n)?;
        let coupling = boost_coupling(target, alpha);
        let bias = if lambda == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            -dot_config(&coupling, target) + lambda
        };
        model.push_layer(DeepLayer::new(coupling, bias, 1, 1))?;
        let kl = kl_divergence(&q, &crate::deepening::extended_marginal(&model, caps)?)?;
        steps.push(TraceStep {
            step: i as u32 + 1,
            target_bitmask: bits,
            alpha,
            lambda_or_beff: lambda,
            kl,
        });
    }
    let final_kl = steps.last().map(|s| s.kl).unwrap_or(f64::INFINITY);
    Ok((
        model,
        ApproxTrace {
            steps,
            final_kl,
            reached: true,
        },
    ))
}

/// The limiting distribution of the ladder as the coupling strength grows:
/// with `k` supported configurations out of `2^m`, lightest mass `Q(u_1)`,
/// and `D = 1 + exp(lambda1) + (2^m - k) Q(u_1)`, each supported
/// configuration carries `Q(u_i) (1 + exp(lambda1)) / D` and every other
/// one `Q(u_1) / D`. The entries sum to one exactly, and the table tends
/// to the target as `lambda1` grows.
pub fn support_ladder_closed_form(q: &Distribution, lambda1: f64) -> Result<Distribution> {
    let support = sorted_support(q);
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let total = q.probs().len() as f64;
    let k = support.len() as f64;
    let q1 = q.prob(support[0]);
    let boost = 1.0 + lambda1.exp();
    let denom = boost + (total - k) * q1;
    let probs = (0..q.probs().len() as u64)
        .map(|bits| {
            if q.prob(bits) > 0.0 {
                q.prob(bits) * boost / denom
            } else {
                q1 / denom
            }
        })
        .collect();
    Distribution::new(q.width(), probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{entropy, marginal_factorized};
    use crate::model::ModelKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(p: u64, l: u32) -> TreeGroup {
        TreeGroup::new(p, l).unwrap()
    }

    fn random_distribution(width: u32, rng: &mut ChaCha8Rng) -> Distribution {
        let raw: Vec<f64> = (0..1usize << width).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        Distribution::new(width, raw.into_iter().map(|x| x / sum).collect()).unwrap()
    }

    #[test]
    fn coupling_formula() {
        // target (1,0,1,0) with alpha = 2 gives (1,-1,1,-1).
        let target = FieldConfig::new(0b0101, 4).unwrap();
        assert_eq!(boost_coupling(target, 2.0), vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn target_selection_is_the_largest_gap() {
        let q = Distribution::uniform(2);
        // Model mass shifted off configuration 3 onto configuration 0.
        let p = Distribution::new(2, vec![0.4, 0.25, 0.25, 0.1]).unwrap();
        let sel = select_boost_target(&q, &p, 1.0).unwrap();
        assert_eq!(sel.target.bits(), 3);

        assert!(matches!(
            select_boost_target(&q, &q, 1.0).unwrap_err(),
            Error::AlreadyMatched
        ));
    }

    #[test]
    fn doubling_makes_the_boost_inequality_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = random_distribution(4, &mut rng);
            let p = random_distribution(4, &mut rng);
            if kl_divergence(&q, &p).unwrap() == 0.0 {
                continue;
            }
            let sel = select_boost_target(&q, &p, 1.0).unwrap();
            let mut alpha = 1.0;
            let mut coupling = sel.coupling.clone();
            let mut held = false;
            for _ in 0..60 {
                if boost_inequality_holds(&q, &p, &coupling).unwrap() {
                    held = true;
                    break;
                }
                alpha *= 2.0;
                coupling = boost_coupling(sel.target, alpha);
            }
            assert!(held, "doubling must eventually satisfy the inequality");
        }
    }

    #[test]
    fn improvement_step_refuses_matched_targets() {
        let caps = EnumerationCaps::default();
        let model = DbnModel::zero_conv(g(2, 1));
        let q = Distribution::uniform(2);
        assert!(matches!(
            improvement_step(&model, &q, &caps, &SearchConfig::default()).unwrap_err(),
            Error::AlreadyMatched
        ));
    }

    #[test]
    fn improvement_step_strictly_reduces_divergence() {
        let caps = EnumerationCaps::default();
        let search = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let model = DbnModel::random(g(2, 2), ModelKind::Conv, 1.0, &mut rng);
            let q = random_distribution(4, &mut rng);
            let before =
                kl_divergence(&q, &marginal_factorized(&model, &caps).unwrap()).unwrap();
            let (layer, after) = improvement_step(&model, &q, &caps, &search).unwrap();
            assert!(after < before);
            let deep = model.with_layer(layer).unwrap();
            let replay =
                kl_divergence(&q, &marginal_factorized(&deep, &caps).unwrap()).unwrap();
            assert!((replay - after).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_estimate_matches_actual_change_for_deep_biases() {
        let caps = EnumerationCaps::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..20 {
            let model = DbnModel::random(g(2, 2), ModelKind::Conv, 0.5, &mut rng);
            let q = random_distribution(4, &mut rng);
            let current = marginal_factorized(&model, &caps).unwrap();
            let kl_before = kl_divergence(&q, &current).unwrap();
            let sel = select_boost_target(&q, &current, 1.0).unwrap();
            let mut alpha = 1.0;
            let mut coupling = sel.coupling.clone();
            while !boost_inequality_holds(&q, &current, &coupling).unwrap() {
                alpha *= 2.0;
                coupling = boost_coupling(sel.target, alpha);
            }
            let on_target = dot_config(&coupling, sel.target);
            // Skip marginal cases where the deficit is too small for the
            // asymptotic regime to be meaningful at this offset.
            let deficit = kl_gap_estimate(&q, &current, &coupling, -on_target).unwrap();
            if deficit > -0.02 {
                continue;
            }
            for offset in [-8.0, -10.0, -12.0] {
                let bias = -on_target + offset;
                let estimate = kl_gap_estimate(&q, &current, &coupling, bias).unwrap();
                let deep = model
                    .clone()
                    .with_layer(DeepLayer::new(coupling.clone(), bias, 1, 1))
                    .unwrap();
                let kl_after =
                    kl_divergence(&q, &marginal_factorized(&deep, &caps).unwrap()).unwrap();
                let actual = kl_after - kl_before;
                assert!(
                    (estimate - actual).abs() <= 0.1 * actual.abs(),
                    "estimate {estimate} vs actual {actual} at offset {offset}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 30, "only {checked} asymptotic cases checked");
    }

    #[test]
    fn greedy_with_loose_eps_adds_no_layers() {
        let caps = EnumerationCaps::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = DbnModel::random(g(2, 2), ModelKind::Conv, 1.0, &mut rng);
        let q = random_distribution(4, &mut rng);
        let initial = kl_divergence(&q, &marginal_factorized(&model, &caps).unwrap()).unwrap();
        let (out, trace) =
            greedy_construct(&q, &model, initial + 1.0, 8, &caps, &SearchConfig::default())
                .unwrap();
        assert!(trace.steps.is_empty());
        assert!(trace.reached);
        assert_eq!(out.deepening().len(), 0);
    }

    #[test]
    fn greedy_reaches_a_point_mass_within_eight_layers() {
        let caps = EnumerationCaps::default();
        let q = Distribution::point_mass(4, 0b1010).unwrap();
        let base = DbnModel::zero_conv(g(2, 2));
        let (model, trace) =
            greedy_construct(&q, &base, 1e-2, 8, &caps, &SearchConfig::default()).unwrap();
        assert!(trace.reached, "final divergence {}", trace.final_kl);
        assert!(trace.final_kl < 1e-2);
        assert!(model.deepening().len() <= 8);
        // The divergence column decreases strictly.
        let mut prev = f64::INFINITY;
        for step in &trace.steps {
            assert!(step.kl < prev);
            prev = step.kl;
        }
    }

    #[test]
    fn multiplier_to_offset() {
        assert!((bias_offset_for_multiplier(3.0).unwrap() - 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(bias_offset_for_multiplier(1.0).unwrap(), f64::NEG_INFINITY);
        assert!(bias_offset_for_multiplier(0.5).is_err());
    }

    #[test]
    fn closed_form_point_mass() {
        // Point mass on two units: boosted mass (1+e^l)/(4+e^l), others 1/(4+e^l).
        let q = Distribution::point_mass(2, 1).unwrap();
        for lambda in [0.0, 3.0, 14.0] {
            let p = support_ladder_closed_form(&q, lambda).unwrap();
            let e = lambda.exp();
            assert!((p.prob(1) - (1.0 + e) / (4.0 + e)).abs() < 1e-12);
            for bits in [0u64, 2, 3] {
                assert!((p.prob(bits) - 1.0 / (4.0 + e)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_sums_to_one_and_tends_to_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut q = vec![0.0; 16];
            for _ in 0..3 {
                q[rng.gen_range(0..16)] += rng.gen_range(0.1..1.0);
            }
            let sum: f64 = q.iter().sum();
            let q = Distribution::new(4, q.into_iter().map(|x| x / sum).collect()).unwrap();
            for lambda in [2.0, 8.0, 20.0] {
                let p = support_ladder_closed_form(&q, lambda).unwrap();
                assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let far = support_ladder_closed_form(&q, 30.0).unwrap();
            for bits in q.support() {
                assert!((far.prob(bits) - q.prob(bits)).abs() < 1e-9);
            }
            assert!(kl_divergence(&q, &far).unwrap() < 1e-9);
        }
    }

    #[test]
    fn closed_form_with_full_support_is_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let q = random_distribution(3, &mut rng);
        let p = support_ladder_closed_form(&q, 5.0).unwrap();
        assert!(q.max_norm_distance(&p).unwrap() < 1e-15);
    }

    #[test]
    fn ladder_on_a_uniform_target_keeps_it_uniform() {
        let caps = EnumerationCaps::default();
        let q = Distribution::uniform(4);
        let (model, trace) =
            support_ladder_construct(&q, &g(2, 2), f64::NEG_INFINITY, 80.0, &caps).unwrap();
        assert_eq!(model.deepening().len(), 16);
        assert!(model.deepening().iter().all(|d| d.is_frozen()));
        assert!(trace.final_kl < 1e-15);
        let out = marginal_factorized(&model, &caps).unwrap();
        assert!(out.max_norm_distance(&q).unwrap() < 1e-15);
    }

    #[test]
    fn ladder_marginal_matches_the_closed_form() {
        let caps = EnumerationCaps::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let mut raw = vec![0.0; 16];
            let picks: Vec<usize> = {
                let mut s = std::collections::BTreeSet::new();
                while s.len() < 3 {
                    s.insert(rng.gen_range(0..16usize));
                }
                s.into_iter().collect()
            };
            for &i in &picks {
                raw[i] = rng.gen_range(0.1..1.0);
            }
            let sum: f64 = raw.iter().sum();
            let q = Distribution::new(4, raw.into_iter().map(|x| x / sum).collect()).unwrap();

            let (model, _) = support_ladder_construct(&q, &g(2, 2), 14.0, 80.0, &caps).unwrap();
            let exact = marginal_factorized(&model, &caps).unwrap();
            let ideal = support_ladder_closed_form(&q, 14.0).unwrap();
            assert!(exact.max_norm_distance(&ideal).unwrap() < 1e-6);
            assert!(kl_divergence(&q, &exact).unwrap() < 1e-3);
        }
    }

    #[test]
    fn ladder_divergence_is_monotone_in_the_first_offset() {
        let caps = EnumerationCaps::default();
        let mut raw = vec![0.0; 16];
        raw[3] = 0.2;
        raw[7] = 0.3;
        raw[12] = 0.5;
        let q = Distribution::new(4, raw).unwrap();
        let mut prev = f64::INFINITY;
        for lambda1 in [8.0, 11.0, 14.0] {
            let (_, trace) = support_ladder_construct(&q, &g(2, 2), lambda1, 80.0, &caps).unwrap();
            assert!(trace.final_kl < prev);
            prev = trace.final_kl;
        }
    }

    #[test]
    fn off_target_factors_stay_at_one() {
        // With alpha = 80 and the bias pinned to the on-target activation,
        // every other configuration's factor is within 1e-12 of one.
        let alpha = 80.0;
        for bits in 0..16u64 {
            let target = FieldConfig::new(bits, 4).unwrap();
            let coupling = boost_coupling(target, alpha);
            let bias = -dot_config(&coupling, target);
            for v in FieldConfig::all(4) {
                let factor = 1.0 + (dot_config(&coupling, v) + bias).exp();
                if v == target {
                    assert_eq!(factor, 2.0);
                } else {
                    assert!(factor <= 1.0 + 1e-12);
                    assert!(factor >= 1.0);
                }
            }
        }
    }

    #[test]
    fn trace_csv_shape() {
        let trace = ApproxTrace {
            steps: vec![TraceStep {
                step: 1,
                target_bitmask: 5,
                alpha: 80.0,
                lambda_or_beff: f64::NEG_INFINITY,
                kl: 0.25,
            }],
            final_kl: 0.25,
            reached: false,
        };
        let csv = trace.to_csv_string();
        assert!(csv.starts_with("step,target_bitmask,alpha,lambda_or_beff,kl\n"));
        assert!(csv.contains("1,5,"));
        assert!(csv.contains("-inf"));
        let _ = entropy(&Distribution::uniform(2));
    }
}
