//! Extending a level-`l` network to level `l + 1` while preserving its
//! energy: the replicated visible field, the torsion-coset zero patterns,
//! the coset block sums, and the compressed one-extra-unit form.
//!
//! The extension places the base parameters on the embedded copy of the
//! coarse group, a fresh weight vector on the coset `-G_l + beta p^l`, and
//! a fresh bias on the single live torsion unit `j_0 = alpha p^l`. Visible
//! units replicate across cosets (`v_j` reads the base unit `j mod p^l`);
//! hidden units vanish outside the coarse group and `j_0`.
//!
//! The quadratic part of the extended energy decomposes into block sums
//! `S(a, b)` over pairs of cosets. Blocks with `a + b` divisible by `p`
//! contribute the base double sum exactly when `a = b = 0` and vanish
//! otherwise; the remaining blocks contribute the new-unit coupling once
//! per solvable pair, `p` of them in total. Absorbing that factor `p` into
//! the stored effective coupling gives the compressed form: the base
//! energy minus `h * (<w_eff, v> + b_eff)` per extra unit.

use crate::error::{Error, Result};
use crate::inference::{log_free_energy, logsumexp, Distribution, EnumerationCaps};
use crate::model::{DbnModel, DeepLayer, FieldConfig, Scalar};
use crate::tree::TreeGroup;

/// Convolutional parameter triple generic over the scalar, so the
/// extension identity can be checked in exact rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weights: Vec<T>,
    pub visible_bias: Vec<T>,
    pub hidden_bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(group: &TreeGroup, weights: Vec<T>, visible_bias: Vec<T>, hidden_bias: Vec<T>) -> Result<Self> {
        let n = group.order() as usize;
        for (name, len) in [
            ("w", weights.len()),
            ("a", visible_bias.len()),
            ("b", hidden_bias.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch { name, expected: n, got: len });
            }
        }
        Ok(ConvParams { weights, visible_bias, hidden_bias })
    }
}

impl ConvParams<f64> {
    pub fn from_model(model: &DbnModel) -> Result<Self> {
        Ok(ConvParams {
            weights: model.conv_weights()?.to_vec(),
            visible_bias: model.visible_bias().to_vec(),
            hidden_bias: model.hidden_bias().to_vec(),
        })
    }
}

/// A level-`(l+1)` network built from a level-`l` one by the key
/// construction, holding the full parameter arrays with their zero
/// patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct FullExtension<T> {
    group_lo: TreeGroup,
    group_hi: TreeGroup,
    alpha: u64,
    beta: u64,
    /// New copy weights, indexed by the base element `j`; entry `j` is
    /// stored at position `-j + beta p^l` of the extended weight array.
    w_new: Vec<T>,
    b_new: T,
    weights_hi: Vec<T>,
    visible_bias_hi: Vec<T>,
    hidden_bias_hi: Vec<T>,
}

/// Builds the extension: `1 + p^l` new parameters (the copy weights and
/// the bias of the one extra hidden unit).
pub fn key_construct_full<T: Scalar>(
    group: &TreeGroup,
    base: &ConvParams<T>,
    w_new: &[T],
    b_new: T,
    alpha: u64,
    beta: u64,
) -> Result<FullExtension<T>> {
    let p = group.prime();
    let n = group.order();
    if !(1..p).contains(&alpha) {
        return Err(Error::TorsionIndexOutOfRange { index: alpha, p });
    }
    if !(1..p).contains(&beta) {
        return Err(Error::TorsionIndexOutOfRange { index: beta, p });
    }
    if w_new.len() != n as usize {
        return Err(Error::DimensionMismatch {
            name: "w_new",
            expected: n as usize,
            got: w_new.len(),
        });
    }
    if base.weights.len() != n as usize {
        return Err(Error::DimensionMismatch {
            name: "w",
            expected: n as usize,
            got: base.weights.len(),
        });
    }
    let group_hi = group.refine()?;
    let n_hi = group_hi.order() as usize;

    let mut weights_hi = vec![T::zero(); n_hi];
    let mut visible_bias_hi = vec![T::zero(); n_hi];
    let mut hidden_bias_hi = vec![T::zero(); n_hi];
    for j in 0..n as usize {
        weights_hi[j] = base.weights[j].clone();
        visible_bias_hi[j] = base.visible_bias[j].clone();
        hidden_bias_hi[j] = base.hidden_bias[j].clone();
    }
    // Copy weights on -G_l + beta p^l: entry j lands at neg(j) + beta p^l.
    for j in 0..n {
        let neg = group.neg(group.element(j)?)?;
        weights_hi[(neg.0 + beta * n) as usize] = w_new[j as usize].clone();
    }
    hidden_bias_hi[(alpha * n) as usize] = b_new.clone();

    Ok(FullExtension {
        group_lo: *group,
        group_hi,
        alpha,
        beta,
        w_new: w_new.to_vec(),
        b_new,
        weights_hi,
        visible_bias_hi,
        hidden_bias_hi,
    })
}

impl<T: Scalar> FullExtension<T> {
    pub fn group_lo(&self) -> &TreeGroup {
        &self.group_lo
    }

    pub fn group_hi(&self) -> &TreeGroup {
        &self.group_hi
    }

    /// The live torsion unit `alpha p^l`.
    pub fn j0(&self) -> u64 {
        self.alpha * self.group_lo.order()
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    pub fn beta(&self) -> u64 {
        self.beta
    }

    pub fn weights_hi(&self) -> &[T] {
        &self.weights_hi
    }

    pub fn visible_bias_hi(&self) -> &[T] {
        &self.visible_bias_hi
    }

    pub fn hidden_bias_hi(&self) -> &[T] {
        &self.hidden_bias_hi
    }

    /// Positions of the copy `-G_l + beta p^l`, listed by base index `j`.
    pub fn beta_copy_positions(&self) -> Vec<u64> {
        let n = self.group_lo.order();
        (0..n)
            .map(|j| {
                let neg = self.group_lo.neg(self.group_lo.element(j).expect("in range"));
                neg.expect("in range").0 + self.beta * n
            })
            .collect()
    }

    /// Hidden units forced to zero: everything outside the coarse group
    /// and `j_0`.
    pub fn forced_zero_hidden(&self) -> Vec<u64> {
        let n = self.group_lo.order();
        let j0 = self.j0();
        (n..self.group_hi.order()).filter(|&j| j != j0).collect()
    }

    /// The replicated visible unit at an extended index: `v_{j mod p^l}`.
    pub fn replicated_visible(&self, v: FieldConfig, j: u64) -> bool {
        v.bit((j % self.group_lo.order()) as u32)
    }

    /// The extended hidden unit at index `j`; the extra unit is carried as
    /// bit `p^l` of `h_full`.
    pub fn extended_hidden(&self, h_full: FieldConfig, j: u64) -> bool {
        let n = self.group_lo.order();
        if j < n {
            h_full.bit(j as u32)
        } else if j == self.j0() {
            h_full.bit(n as u32)
        } else {
            false
        }
    }

    fn check_configs(&self, v: FieldConfig, h_full: FieldConfig) -> Result<()> {
        let n = self.group_lo.order() as u32;
        if v.width() != n {
            return Err(Error::WidthMismatch { expected: n, got: v.width() });
        }
        if h_full.width() != n + 1 {
            return Err(Error::WidthMismatch {
                expected: n + 1,
                got: h_full.width(),
            });
        }
        Ok(())
    }

    /// New-unit coupling read off the extended weight array:
    /// `sum_j w_{-j + beta p^l} v_j`.
    fn copy_coupling(&self, v: FieldConfig) -> T {
        let mut acc = T::zero();
        for (j, pos) in self.beta_copy_positions().into_iter().enumerate() {
            if v.bit(j as u32) {
                acc = acc + self.weights_hi[pos as usize].clone();
            }
        }
        acc
    }

    /// Base double sum read off the restriction of the extended weight
    /// array to the coarse group, with the pairing of the base energy.
    fn base_double_sum(&self, v: FieldConfig, h_full: FieldConfig) -> T {
        let n = self.group_lo.order();
        let mut acc = T::zero();
        for j in 0..n {
            if !h_full.bit(j as u32) {
                continue;
            }
            for k in 0..n {
                if v.bit(((j + k) % n) as u32) {
                    acc = acc + self.weights_hi[k as usize].clone();
                }
            }
        }
        acc
    }
}

/// Block sum `S(a, b)` of the extended quadratic form over the coset pair
/// `(G_l + a p^l, G_l + b p^l)`.
///
/// For `a + b` not divisible by `p` the block is the new-unit coupling
/// `h_j0 * sum_j w_{-j + beta p^l} v_j` when `a + b = alpha (mod p)` makes
/// the hidden index reachable, and zero otherwise; summed over all such
/// pairs this contributes the coupling `p` times. For `a + b` divisible by
/// `p` the block is the base double sum when `a = b = 0` and zero
/// otherwise.
pub fn coset_block_sum<T: Scalar>(
    ext: &FullExtension<T>,
    a: u64,
    b: u64,
    v: FieldConfig,
    h_full: FieldConfig,
) -> Result<T> {
    let p = ext.group_lo.prime();
    if a >= p {
        return Err(Error::CosetIndexOutOfRange { index: a, p });
    }
    if b >= p {
        return Err(Error::CosetIndexOutOfRange { index: b, p });
    }
    ext.check_configs(v, h_full)?;
    let n = ext.group_lo.order();
    if (a + b) % p != 0 {
        if (a + b) % p == ext.alpha && ext.extended_hidden(h_full, ext.j0()) {
            Ok(ext.copy_coupling(v))
        } else {
            Ok(T::zero())
        }
    } else if a == 0 && b == 0 {
        Ok(ext.base_double_sum(v, h_full))
    } else {
        let _ = n;
        Ok(T::zero())
    }
}

/// Energy of the extension on the full level-`(l+1)` lattice: the negated
/// sum of all coset blocks plus the linear terms taken literally over the
/// extended arrays, with the visible field replicated and the hidden field
/// zero outside its support.
pub fn full_energy<T: Scalar>(
    ext: &FullExtension<T>,
    v: FieldConfig,
    h_full: FieldConfig,
) -> Result<T> {
    ext.check_configs(v, h_full)?;
    let p = ext.group_lo.prime();
    let mut acc = T::zero();
    for a in 0..p {
        for b in 0..p {
            acc = acc + coset_block_sum(ext, a, b, v, h_full)?;
        }
    }
    for j in 0..ext.group_hi.order() {
        if ext.replicated_visible(v, j) {
            acc = acc + ext.visible_bias_hi[j as usize].clone();
        }
        if ext.extended_hidden(h_full, j) {
            acc = acc + ext.hidden_bias_hi[j as usize].clone();
        }
    }
    Ok(-acc)
}

/// Compressed form of one construction step: effective coupling
/// `p * w_new` (entry `j` of `w_new` multiplies `v_j`) and the new bias.
pub fn to_deep_layer(ext: &FullExtension<f64>) -> DeepLayer {
    let p = ext.group_lo.prime() as f64;
    DeepLayer::new(
        ext.w_new.iter().map(|w| p * w).collect(),
        ext.b_new,
        ext.alpha,
        ext.beta,
    )
}

/// Coupling of copy weights at a finer level to a base visible field
/// replicated up to that level: `sum_j w[j] v_{j mod p^l0}`.
pub fn replicated_coupling(base_group: &TreeGroup, w_copy: &[f64], v: FieldConfig) -> f64 {
    let n = base_group.order();
    let mut acc = 0.0;
    for (j, wj) in w_copy.iter().enumerate() {
        if v.bit((j as u64 % n) as u32) {
            acc += wj;
        }
    }
    acc
}

/// Collapses copy weights over a finer level onto the base group: the
/// replicated visible field sums the `p^(L - l0)` copies of each base
/// unit, and the construction factor `p` is absorbed.
pub fn collapse_copy_weights(base_group: &TreeGroup, w_copy: &[f64]) -> Vec<f64> {
    let n = base_group.order() as usize;
    let p = base_group.prime() as f64;
    let mut out = vec![0.0; n];
    for (j, wj) in w_copy.iter().enumerate() {
        out[j % n] += wj;
    }
    for w in &mut out {
        *w *= p;
    }
    out
}

/// A deepening layer from copy weights given at the model's current top
/// level (base level plus the number of layers already added).
pub fn layer_from_copy_weights(
    base_group: &TreeGroup,
    w_copy: &[f64],
    b_new: f64,
    alpha: u64,
    beta: u64,
) -> DeepLayer {
    DeepLayer::new(collapse_copy_weights(base_group, w_copy), b_new, alpha, beta)
}

/// Extended energy in compressed form: the base energy minus
/// `h_extra_i * (<w_eff_i, v> + b_eff_i)` per layer. Bit `i` of
/// `h_extra` is the extra hidden unit of layer `i`.
pub fn extended_energy_compressed(
    model: &DbnModel,
    v: FieldConfig,
    h_base: FieldConfig,
    h_extra: u64,
) -> Result<f64> {
    let layers = model.deepening();
    if layers.len() < 64 && h_extra >> layers.len() != 0 {
        return Err(Error::BitsOutOfRange {
            bits: h_extra,
            width: layers.len() as u32,
        });
    }
    let mut e = model.base_energy(v, h_base)?;
    for (i, layer) in layers.iter().enumerate() {
        if h_extra >> i & 1 == 1 {
            e -= layer.activation(v);
        }
    }
    Ok(e)
}

/// Visible marginal of a deepened model by the factorized route: each
/// layer contributes the factor `1 + exp(<w_eff, v> + b_eff)` on top of
/// the hidden sum of the base energy, and the normalizer is the sum of
/// those products.
pub fn extended_marginal(model: &DbnModel, caps: &EnumerationCaps) -> Result<Distribution> {
    let n = model.units();
    caps.check_units(n)?;
    let log_weights: Vec<f64> = FieldConfig::all(n)
        .map(|v| log_free_energy(model, v))
        .collect();
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::NonFiniteEnergy);
    }
    let log_z = logsumexp(&log_weights);
    Distribution::new(n, log_weights.iter().map(|lw| (lw - log_z).exp()).collect())
}
