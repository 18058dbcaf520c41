//! Self-contained verification suites runnable from the command line.
//! Each suite replays one of the library's defining identities against an
//! independent computation and reports one line per property.

use num::{BigRational, FromPrimitive, Zero};
use padic_dbn::{
    boost_coupling, collapse_copy_weights, discretize_conv_kernel, dot_config,
    extended_energy_compressed, extended_marginal, free_energy_factorized, full_energy,
    inv_power, key_construct_full, kl_divergence, marginal_factorized,
    support_ladder_closed_form, support_ladder_construct, to_deep_layer, ConvParams, DbnModel,
    DeepLayer, Distribution, EnumerationCaps, FieldConfig, GroupElement, ModelKind, TestFunction,
    TreeGroup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Report {
    pub lines: Vec<String>,
    pub checks: u32,
    pub failures: u32,
}

impl Report {
    fn new() -> Self {
        Report {
            lines: vec![],
            checks: 0,
            failures: 0,
        }
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks += 1;
        if ok {
            self.lines.push(format!("ok   {name}"));
        } else {
            self.failures += 1;
            self.lines.push(format!("FAIL {name}"));
        }
    }
}

/// Ultrametric and group laws: exhaustive on every group with at most 64
/// elements, randomized beyond that.
pub fn ultrametric(seed: u64) -> Report {
    let mut report = Report::new();
    for (p, l) in [(2u64, 6u32), (3, 3), (5, 2), (7, 2)] {
        let g = TreeGroup::new(p, l).unwrap();
        let n = g.order();
        let mut ok = true;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    ok &= ultrametric_triple(&g, a, b, c);
                }
                let t = (a + b) % n;
                let (ea, eb, et) = (GroupElement(a), GroupElement(b), GroupElement(t));
                let at = g.add(ea, et).unwrap();
                let bt = g.add(eb, et).unwrap();
                ok &= g.ord(g.sub(at, bt).unwrap()).unwrap()
                    == g.ord(g.sub(ea, eb).unwrap()).unwrap();
            }
            let e = GroupElement(a);
            ok &= g.add(e, g.neg(e).unwrap()).unwrap() == GroupElement(0);
            ok &= g.from_digits(&g.digits(e).unwrap()).unwrap() == e;
        }
        report.check(&format!("exhaustive laws on p={p} l={l} ({n} elements)"), ok);

        let (torsion, cosets) = g.torsion_and_cosets();
        let hi_order = n * p;
        let mut seen = vec![false; hi_order as usize];
        let mut partition_ok = torsion.len() == p as usize;
        for coset in &cosets {
            partition_ok &= coset.len() == n as usize;
            for e in coset {
                partition_ok &= !std::mem::replace(&mut seen[e.0 as usize], true);
            }
        }
        partition_ok &= seen.iter().all(|&s| s);
        report.check(&format!("torsion cosets tile the refinement of p={p} l={l}"), partition_ok);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (p, l) in [(2u64, 16u32), (3, 10)] {
        let g = TreeGroup::with_cap(p, l, 1 << 40).unwrap();
        let n = g.order();
        let mut ok = true;
        for _ in 0..10_000 {
            ok &= ultrametric_triple(
                &g,
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                rng.gen_range(0..n),
            );
        }
        report.check(
            &format!("randomized ultrametric on p={p} l={l} (10000 triples)"),
            ok,
        );
    }
    report
}

fn ultrametric_triple(g: &TreeGroup, a: u64, b: u64, c: u64) -> bool {
    let (a, b, c) = (GroupElement(a), GroupElement(b), GroupElement(c));
    let oab = g.ord(g.sub(a, b).unwrap()).unwrap();
    let oac = g.ord(g.sub(a, c).unwrap()).unwrap();
    let ocb = g.ord(g.sub(c, b).unwrap()).unwrap();
    let min = match (oac, ocb) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(x.min(y)),
    };
    match (oab, min) {
        (_, None) => oab.is_none(),
        (None, Some(_)) => true,
        (Some(x), Some(m)) => x >= m,
    }
}

/// Discretization exactness: discrete bilinear sums equal continuous Haar
/// integrals computed by exact rational summation over refined cells.
pub fn discretize(seed: u64) -> Report {
    let mut report = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in [2u64, 3] {
        for r in [1u32, 2] {
            for l in [r, r + 1] {
                let group = TreeGroup::new(p, l).unwrap();
                let n = group.order();
                let coeffs: Vec<BigRational> = (0..p.pow(r))
                    .map(|_| BigRational::new(rng.gen_range(-8i64..=8).into(), rng.gen_range(1i64..=4).into()))
                    .collect();
                let w = TestFunction::new(p, r, coeffs).unwrap();
                let weights = discretize_conv_kernel(&w, &group).unwrap();

                let mut ok = true;
                for _ in 0..4 {
                    let v = FieldConfig::new(rng.gen_range(0..1 << n), n as u32).unwrap();
                    let h = FieldConfig::new(rng.gen_range(0..1 << n), n as u32).unwrap();
                    let mut discrete = BigRational::zero();
                    for i in 0..n {
                        for j in 0..n {
                            if v.bit(i as u32) && h.bit(j as u32) {
                                discrete += &weights[((i + n - j) % n) as usize];
                            }
                        }
                    }
                    // Continuous double integral over cells one level finer.
                    let fine = l + 1;
                    let n_fine = p.pow(fine);
                    let cell2 = inv_power(p, 2 * fine);
                    let mut continuous = BigRational::zero();
                    for x in 0..n_fine {
                        for y in 0..n_fine {
                            if v.bit((x % n) as u32) && h.bit((y % n) as u32) {
                                continuous += w.value_at((x + n_fine - y) % n_fine) * &cell2;
                            }
                        }
                    }
                    ok &= discrete == continuous;
                }
                report.check(&format!("conv kernel exactness p={p} r={r} l={l}"), ok);
            }
        }
    }

    // Refinement stability: one level finer with replicated fields agrees.
    let p = 2u64;
    let group = TreeGroup::new(p, 2).unwrap();
    let fine_group = TreeGroup::new(p, 3).unwrap();
    let coeffs: Vec<BigRational> = (0..2)
        .map(|_| BigRational::new(rng.gen_range(-8i64..=8).into(), 2.into()))
        .collect();
    let w = TestFunction::new(p, 1, coeffs).unwrap();
    let coarse = discretize_conv_kernel(&w, &group).unwrap();
    let refined = discretize_conv_kernel(&w, &fine_group).unwrap();
    let (n, nf) = (group.order(), fine_group.order());
    let mut ok = true;
    for _ in 0..8 {
        let v = FieldConfig::new(rng.gen_range(0..1 << n), n as u32).unwrap();
        let h = FieldConfig::new(rng.gen_range(0..1 << n), n as u32).unwrap();
        let mut at_l = BigRational::zero();
        let mut at_l1 = BigRational::zero();
        for i in 0..n {
            for j in 0..n {
                if v.bit(i as u32) && h.bit(j as u32) {
                    at_l += &coarse[((i + n - j) % n) as usize];
                }
            }
        }
        for i in 0..nf {
            for j in 0..nf {
                if v.bit((i % n) as u32) && h.bit((j % n) as u32) {
                    at_l1 += &refined[((i + nf - j) % nf) as usize];
                }
            }
        }
        ok &= at_l == at_l1;
    }
    report.check("refinement stability at l=2 vs l=3", ok);
    report
}

/// Extension identity: the full-lattice energy of the key construction
/// equals the compressed energy on every configuration of free units,
/// exactly in rational arithmetic and within 1e-12 in floats.
pub fn extension(seed: u64) -> Report {
    let mut report = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (p, l) in [(2u64, 1u32), (3, 1)] {
        let group = TreeGroup::new(p, l).unwrap();
        let n = group.order() as usize;
        let mut float_ok = true;
        let mut rational_ok = true;
        for _ in 0..20 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let base = ConvParams::new(&group, draw(&mut rng), draw(&mut rng), draw(&mut rng))
                .unwrap();
            let w_new = draw(&mut rng);
            let b_new: f64 = rng.gen_range(-2.0..2.0);
            let alpha = rng.gen_range(1..p);
            let beta = rng.gen_range(1..p);
            let ext = key_construct_full(&group, &base, &w_new, b_new, alpha, beta).unwrap();

            let model = DbnModel::conv(
                group,
                base.weights.clone(),
                base.visible_bias.clone(),
                base.hidden_bias.clone(),
            )
            .unwrap()
            .with_layer(to_deep_layer(&ext))
            .unwrap();

            let rat = |v: &[f64]| -> Vec<BigRational> {
                v.iter().map(|&x| BigRational::from_f64(x).unwrap()).collect()
            };
            let rbase = ConvParams::new(
                &group,
                rat(&base.weights),
                rat(&base.visible_bias),
                rat(&base.hidden_bias),
            )
            .unwrap();
            let rext = key_construct_full(
                &group,
                &rbase,
                &rat(&w_new),
                BigRational::from_f64(b_new).unwrap(),
                alpha,
                beta,
            )
            .unwrap();
            let p_rat = BigRational::from_integer(p.into());

            for v in FieldConfig::all(n as u32) {
                for h_full in FieldConfig::all(n as u32 + 1) {
                    let h_base =
                        FieldConfig::new(h_full.bits() & ((1 << n) - 1), n as u32).unwrap();
                    let h_extra = h_full.bits() >> n;
                    let full = full_energy(&ext, v, h_full).unwrap();
                    let compressed =
                        extended_energy_compressed(&model, v, h_base, h_extra).unwrap();
                    float_ok &= (full - compressed).abs() <= 1e-12;

                    let rfull = full_energy(&rext, v, h_full).unwrap();
                    let rbase_e = padic_dbn::conv_energy_generic(
                        &group,
                        &rbase.weights,
                        &rbase.visible_bias,
                        &rbase.hidden_bias,
                        v,
                        h_base,
                    );
                    let mut coupling = BigRational::zero();
                    for (j, wj) in rat(&w_new).into_iter().enumerate() {
                        if v.bit(j as u32) {
                            coupling += wj;
                        }
                    }
                    let extra = if h_extra == 1 {
                        &p_rat * coupling + BigRational::from_f64(b_new).unwrap()
                    } else {
                        BigRational::zero()
                    };
                    rational_ok &= rfull == rbase_e - extra;
                }
            }
        }
        report.check(
            &format!("float extension identity p={p} l={l} (20 draws, all configs)"),
            float_ok,
        );
        report.check(
            &format!("rational extension identity p={p} l={l} (20 draws, all configs)"),
            rational_ok,
        );
    }

    // Two construction steps collapse to a two-layer compressed model.
    let group = TreeGroup::new(2, 1).unwrap();
    let n = group.order() as usize;
    let draw = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let base = ConvParams::new(
        &group,
        draw(&mut rng, n),
        draw(&mut rng, n),
        draw(&mut rng, n),
    )
    .unwrap();
    let w1 = draw(&mut rng, n);
    let b1: f64 = rng.gen_range(-1.0..1.0);
    let w2 = draw(&mut rng, 2 * n);
    let b2: f64 = rng.gen_range(-1.0..1.0);
    let ext1 = key_construct_full(&group, &base, &w1, b1, 1, 1).unwrap();
    let model = DbnModel::conv(
        group,
        base.weights.clone(),
        base.visible_bias.clone(),
        base.hidden_bias.clone(),
    )
    .unwrap()
    .with_layer(to_deep_layer(&ext1))
    .unwrap()
    .with_layer(DeepLayer::new(collapse_copy_weights(&group, &w2), b2, 1, 1))
    .unwrap();
    let mut recursive_ok = true;
    for v in FieldConfig::all(n as u32) {
        for h_base in FieldConfig::all(n as u32) {
            for extras in 0u64..4 {
                let h_full = FieldConfig::new(h_base.bits() | (extras & 1) << n, n as u32 + 1)
                    .unwrap();
                let step1 = full_energy(&ext1, v, h_full).unwrap();
                let step2 = if extras >> 1 & 1 == 1 {
                    let coupling: f64 = w2
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| v.bit((*j % n) as u32))
                        .map(|(_, w)| w)
                        .sum();
                    2.0 * coupling + b2
                } else {
                    0.0
                };
                let compressed = extended_energy_compressed(&model, v, h_base, extras).unwrap();
                recursive_ok &= (step1 - step2 - compressed).abs() < 1e-12;
            }
        }
    }
    report.check("recursive construction collapses to layers (p=2 l=1)", recursive_ok);
    report
}

/// Dropping the extra unit's bias recovers the base marginal.
pub fn marginal_limit(seed: u64) -> Report {
    let mut report = Report::new();
    let caps = EnumerationCaps::from_env();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group = TreeGroup::new(2, 2).unwrap();
    for trial in 0..5 {
        let base = DbnModel::random(group, ModelKind::Conv, 1.0, &mut rng);
        let w_eff: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base_marginal = extended_marginal(&base, &caps).unwrap();
        let mut dists = vec![];
        for b_eff in [-10.0, -20.0, -40.0] {
            let deep = base
                .clone()
                .with_layer(DeepLayer::new(w_eff.clone(), b_eff, 1, 1))
                .unwrap();
            dists.push(
                extended_marginal(&deep, &caps)
                    .unwrap()
                    .max_norm_distance(&base_marginal)
                    .unwrap(),
            );
        }
        report.check(
            &format!(
                "trial {trial}: distance monotone {:.3e} > {:.3e} > {:.3e}, limit below 1e-12",
                dists[0], dists[1], dists[2]
            ),
            dists[0] > dists[1] && dists[1] > dists[2] && dists[2] < 1e-12,
        );
    }
    report
}

/// Factorized hidden sums match direct enumeration, deepened models
/// included.
pub fn factorization(seed: u64) -> Report {
    let mut report = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group = TreeGroup::new(2, 2).unwrap();
    let mut flat_ok = true;
    let mut deep_ok = true;
    for trial in 0..20 {
        let kind = match trial % 3 {
            0 => ModelKind::Conv,
            1 => ModelKind::Rbm,
            _ => ModelKind::Radial,
        };
        let m = DbnModel::random(group, kind, 1.5, &mut rng);
        for v in FieldConfig::all(4) {
            let direct: f64 = FieldConfig::all(4)
                .map(|h| (-m.energy(v, h).unwrap()).exp())
                .sum();
            flat_ok &= (direct - free_energy_factorized(&m, v)).abs() <= 1e-10 * direct.max(1.0);
        }

        let deep = m
            .with_layer(DeepLayer::new(
                (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                rng.gen_range(-3.0..0.0),
                1,
                1,
            ))
            .unwrap();
        for v in FieldConfig::all(4) {
            let mut direct = 0.0;
            for h in FieldConfig::all(4) {
                for extra in 0..2u64 {
                    direct += (-extended_energy_compressed(&deep, v, h, extra).unwrap()).exp();
                }
            }
            deep_ok &= (direct - free_energy_factorized(&deep, v)).abs()
                <= 1e-10 * direct.max(1.0);
        }
    }
    report.check("factorized sum equals enumeration on 20 flat models", flat_ok);
    report.check("factorized sum equals enumeration on 20 deepened models", deep_ok);
    report
}

/// Ladder construction end-to-end: closed form normalizes, the exact
/// marginal approaches it, and the divergence target is met.
pub fn ladder(seed: u64) -> Report {
    let mut report = Report::new();
    let caps = EnumerationCaps::from_env();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group = TreeGroup::new(2, 2).unwrap();
    for trial in 0..5 {
        let mut raw = vec![0.0; 16];
        let mut picked = std::collections::BTreeSet::new();
        while picked.len() < 3 {
            picked.insert(rng.gen_range(0..16usize));
        }
        for &i in &picked {
            raw[i] = rng.gen_range(0.1..1.0);
        }
        let total: f64 = raw.iter().sum();
        let q = Distribution::new(4, raw.into_iter().map(|x| x / total).collect()).unwrap();

        let (model, _) = support_ladder_construct(&q, &group, 14.0, 80.0, &caps).unwrap();
        let exact = marginal_factorized(&model, &caps).unwrap();
        let ideal = support_ladder_closed_form(&q, 14.0).unwrap();
        let sum_gap = (ideal.probs().iter().sum::<f64>() - 1.0).abs();
        let shape_gap = exact.max_norm_distance(&ideal).unwrap();
        let kl = kl_divergence(&q, &exact).unwrap();
        report.check(
            &format!(
                "trial {trial}: closed form sums to 1 ({sum_gap:.1e}), marginal gap {shape_gap:.1e}, kl {kl:.1e}"
            ),
            sum_gap < 1e-12 && shape_gap < 1e-6 && kl < 1e-3,
        );
    }

    // Off-target suppression at the default coupling strength.
    let mut suppression_ok = true;
    for bits in 0..16u64 {
        let target = FieldConfig::new(bits, 4).unwrap();
        let coupling = boost_coupling(target, 80.0);
        let bias = -dot_config(&coupling, target);
        for v in FieldConfig::all(4) {
            if v != target {
                let factor = 1.0 + (dot_config(&coupling, v) + bias).exp();
                suppression_ok &= factor <= 1.0 + 1e-12;
            }
        }
    }
    report.check("off-target factors stay within 1e-12 of one at alpha=80", suppression_ok);
    report
}
