//! Discrete energy functionals over a tree group: the generic bilinear
//! machine, its translation-invariant (convolutional) specialization whose
//! weights depend only on the group difference, and the radial
//! specialization whose couplings depend only on the p-adic distance.
//!
//! Visible and hidden fields are binary assignments to the group elements,
//! packed as bit-masks with bit `i` holding the unit at representative `i`.

use crate::error::{Error, Result};
use crate::tree::TreeGroup;
use num::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::{Neg, Sub};

/// A binary field configuration packed into a bit-mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldConfig {
    bits: u64,
    width: u32,
}

impl FieldConfig {
    pub fn new(bits: u64, width: u32) -> Result<Self> {
        if width > 63 {
            return Err(Error::CapExceeded { bits: width, cap: 63 });
        }
        if width < 64 && bits >> width != 0 {
            return Err(Error::BitsOutOfRange { bits, width });
        }
        Ok(FieldConfig { bits, width })
    }

    pub fn zero(width: u32) -> Self {
        FieldConfig { bits: 0, width }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// The unit at canonical representative `i`.
    pub fn bit(&self, i: u32) -> bool {
        debug_assert!(i < self.width);
        self.bits >> i & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Every configuration of the given width in ascending bit-mask order.
    pub fn all(width: u32) -> impl Iterator<Item = FieldConfig> {
        (0..1u64 << width).map(move |bits| FieldConfig { bits, width })
    }

    /// Cyclic shift of the field: unit `i` of the result reads unit
    /// `i + t` of the input, indices added in the group.
    pub fn shifted(&self, group: &TreeGroup, t: u64) -> Self {
        let n = group.order();
        debug_assert_eq!(n as u32, self.width);
        let mut bits = 0u64;
        for i in 0..n {
            if self.bits >> ((i + t) % n) & 1 == 1 {
                bits |= 1 << i;
            }
        }
        FieldConfig {
            bits,
            width: self.width,
        }
    }

    pub fn as_units(&self) -> Vec<u8> {
        (0..self.width).map(|i| self.bit(i) as u8).collect()
    }
}

/// Scalar abstraction so energies evaluate identically over floats and
/// exact rationals.
pub trait Scalar:
    Clone + PartialEq + Zero + One + Neg<Output = Self> + Sub<Output = Self>
{
}
impl<T> Scalar for T where
    T: Clone + PartialEq + Zero + One + Neg<Output = Self> + Sub<Output = Self>
{
}

/// One deepening layer in compressed form: a single extra hidden unit with
/// an effective coupling to the visible field. The factor `p` that the
/// layer-extension identity attaches to the copy weights is pre-absorbed
/// into `w_eff`, so the unit itself stays binary.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLayer {
    pub w_eff: Vec<f64>,
    pub b_eff: f64,
    pub alpha_idx: u64,
    pub beta_idx: u64,
}

impl DeepLayer {
    pub fn new(w_eff: Vec<f64>, b_eff: f64, alpha_idx: u64, beta_idx: u64) -> Self {
        DeepLayer {
            w_eff,
            b_eff,
            alpha_idx,
            beta_idx,
        }
    }

    /// Linear form of the extra unit on a visible configuration.
    pub fn activation(&self, v: FieldConfig) -> f64 {
        dot_config(&self.w_eff, v) + self.b_eff
    }

    /// A bias of negative infinity freezes the unit: its marginal factor
    /// is identically one.
    pub fn is_frozen(&self) -> bool {
        self.b_eff == f64::NEG_INFINITY
    }
}

pub fn dot_config(w: &[f64], v: FieldConfig) -> f64 {
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        if v.bit(i as u32) {
            acc += wi;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rbm,
    Conv,
    Radial,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Rbm => "rbm",
            ModelKind::Conv => "conv",
            ModelKind::Radial => "radial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum WeightData {
    /// Full matrix, row `i` = visible unit, column `j` = hidden unit.
    Rbm(Vec<Vec<f64>>),
    /// One weight per group difference `k = i - j`.
    Conv(Vec<f64>),
    /// Raw kernel value per ancestor scale plus the pre-integrated
    /// diagonal coefficient.
    Radial { profile: Vec<f64>, diag: f64 },
}

/// Parameter set of one discrete network: weights, visible bias `a`,
/// hidden bias `b`, and an optional stack of deepening layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    group: TreeGroup,
    weights: WeightData,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    deepening: Vec<DeepLayer>,
}

fn check_len(name: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            name,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

impl DbnModel {
    pub fn conv(group: TreeGroup, w: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = group.order() as usize;
        check_len("w", &w, n)?;
        check_len("a", &a, n)?;
        check_len("b", &b, n)?;
        Ok(DbnModel {
            group,
            weights: WeightData::Conv(w),
            visible_bias: a,
            hidden_bias: b,
            deepening: vec![],
        })
    }

    pub fn rbm(group: TreeGroup, w: Vec<Vec<f64>>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = group.order() as usize;
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                name: "w",
                expected: n,
                got: w.len(),
            });
        }
        for row in &w {
            check_len("w row", row, n)?;
        }
        check_len("a", &a, n)?;
        check_len("b", &b, n)?;
        Ok(DbnModel {
            group,
            weights: WeightData::Rbm(w),
            visible_bias: a,
            hidden_bias: b,
            deepening: vec![],
        })
    }

    pub fn radial(
        group: TreeGroup,
        profile: Vec<f64>,
        diag: f64,
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let n = group.order() as usize;
        check_len("profile", &profile, group.level() as usize)?;
        check_len("a", &a, n)?;
        check_len("b", &b, n)?;
        Ok(DbnModel {
            group,
            weights: WeightData::Radial { profile, diag },
            visible_bias: a,
            hidden_bias: b,
            deepening: vec![],
        })
    }

    /// All-zero convolutional model; its Boltzmann distribution is uniform.
    pub fn zero_conv(group: TreeGroup) -> Self {
        let n = group.order() as usize;
        DbnModel {
            group,
            weights: WeightData::Conv(vec![0.0; n]),
            visible_bias: vec![0.0; n],
            hidden_bias: vec![0.0; n],
            deepening: vec![],
        }
    }

    /// Uniform random parameters in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(
        group: TreeGroup,
        kind: ModelKind,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let n = group.order() as usize;
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-scale..=scale)).collect()
        };
        let weights = match kind {
            ModelKind::Conv => WeightData::Conv(draw(n)),
            ModelKind::Rbm => WeightData::Rbm((0..n).map(|_| draw(n)).collect()),
            ModelKind::Radial => WeightData::Radial {
                profile: draw(group.level() as usize),
                diag: draw(1)[0],
            },
        };
        let visible_bias = draw(n);
        let hidden_bias = draw(n);
        DbnModel {
            group,
            weights,
            visible_bias,
            hidden_bias,
            deepening: vec![],
        }
    }

    pub fn group(&self) -> &TreeGroup {
        &self.group
    }

    pub fn units(&self) -> u32 {
        self.group.order() as u32
    }

    pub fn kind(&self) -> ModelKind {
        match self.weights {
            WeightData::Rbm(_) => ModelKind::Rbm,
            WeightData::Conv(_) => ModelKind::Conv,
            WeightData::Radial { .. } => ModelKind::Radial,
        }
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn conv_weights(&self) -> Result<&[f64]> {
        match &self.weights {
            WeightData::Conv(w) => Ok(w),
            _ => Err(Error::NotConvolutional),
        }
    }

    pub fn deepening(&self) -> &[DeepLayer] {
        &self.deepening
    }

    /// Adds one deepening layer; the effective coupling must span the
    /// visible field.
    pub fn push_layer(&mut self, layer: DeepLayer) -> Result<()> {
        check_len("w_eff", &layer.w_eff, self.group.order() as usize)?;
        let p = self.group.prime();
        if !(1..p).contains(&layer.alpha_idx) {
            return Err(Error::TorsionIndexOutOfRange {
                index: layer.alpha_idx,
                p,
            });
        }
        if !(1..p).contains(&layer.beta_idx) {
            return Err(Error::TorsionIndexOutOfRange {
                index: layer.beta_idx,
                p,
            });
        }
        self.deepening.push(layer);
        Ok(())
    }

    pub fn with_layer(mut self, layer: DeepLayer) -> Result<Self> {
        self.push_layer(layer)?;
        Ok(self)
    }

    /// Number of free parameters: quadratic in the units for a full
    /// matrix, linear for the convolutional form, and `l + 1` plus the
    /// biases for the radial form.
    pub fn param_count(&self) -> usize {
        let n = self.group.order() as usize;
        let weight_params = match &self.weights {
            WeightData::Rbm(_) => n * n,
            WeightData::Conv(_) => n,
            WeightData::Radial { .. } => self.group.level() as usize + 1,
        };
        weight_params + 2 * n + self.deepening.iter().map(|d| d.w_eff.len() + 1).sum::<usize>()
    }

    fn check_widths(&self, v: FieldConfig, h: FieldConfig) -> Result<()> {
        let n = self.group.order() as u32;
        if v.width() != n {
            return Err(Error::WidthMismatch {
                expected: n,
                got: v.width(),
            });
        }
        if h.width() != n {
            return Err(Error::WidthMismatch {
                expected: n,
                got: h.width(),
            });
        }
        Ok(())
    }

    /// Linear coefficient of hidden unit `j` in the negated energy; the
    /// per-unit factor of the factorized free energy is
    /// `1 + exp(c_j(v) + b_j)`.
    pub fn hidden_coefficient(&self, v: FieldConfig, j: u32) -> f64 {
        let n = self.group.order();
        match &self.weights {
            WeightData::Conv(w) => {
                let mut acc = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    if v.bit(((j as u64 + k as u64) % n) as u32) {
                        acc += wk;
                    }
                }
                acc
            }
            WeightData::Rbm(w) => {
                let mut acc = 0.0;
                for i in 0..n as usize {
                    if v.bit(i as u32) {
                        acc += w[i][j as usize];
                    }
                }
                acc
            }
            WeightData::Radial { profile, diag } => {
                let p = self.group.prime() as f64;
                let scale = p.powi(-2 * self.group.level() as i32);
                let mut acc = 0.0;
                for i in 0..n {
                    if !v.bit(i as u32) {
                        continue;
                    }
                    if i == j as u64 {
                        acc += diag;
                    } else {
                        let d = self
                            .group
                            .sub(
                                self.group.element(i).expect("in range"),
                                self.group.element(j as u64).expect("in range"),
                            )
                            .expect("in range");
                        let ord = self.group.ord(d).expect("in range").expect("nonzero");
                        acc += scale * profile[ord as usize];
                    }
                }
                acc
            }
        }
    }

    /// Energy of a flat model (no deepening layers); the extended energy of
    /// a deepened model lives in the deepening module.
    pub fn energy(&self, v: FieldConfig, h: FieldConfig) -> Result<f64> {
        if !self.deepening.is_empty() {
            return Err(Error::DeepeningNotSupported);
        }
        self.base_energy(v, h)
    }

    /// Energy of the flat part alone, with any deepening layers ignored.
    pub fn base_energy(&self, v: FieldConfig, h: FieldConfig) -> Result<f64> {
        self.check_widths(v, h)?;
        let n = self.group.order();
        let mut acc = 0.0;
        for j in 0..n as u32 {
            if h.bit(j) {
                acc += self.hidden_coefficient(v, j) + self.hidden_bias[j as usize];
            }
        }
        acc += dot_config(&self.visible_bias, v);
        Ok(-acc)
    }

    /// The equivalent full-matrix model of a convolutional one:
    /// `w[i][j] = w_conv[i - j]` with the difference taken in the group.
    pub fn conv_to_rbm(&self) -> Result<DbnModel> {
        let w = self.conv_weights()?;
        let n = self.group.order();
        let matrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| w[((i + n - j) % n) as usize])
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut out = DbnModel::rbm(
            self.group,
            matrix,
            self.visible_bias.clone(),
            self.hidden_bias.clone(),
        )?;
        out.deepening = self.deepening.clone();
        Ok(out)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelJson::from(self)).expect("model serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let wire: ModelJson =
            serde_json::from_str(s).map_err(|e| Error::MalformedModel(e.to_string()))?;
        wire.try_into()
    }
}

/// Translation-invariant energy of a binary pair under a convolutional
/// weight vector, generic over the scalar so exact-rational evaluation is
/// available to the oracles:
/// `E = -sum_j sum_k w_k v_{j+k} h_j - <a, v> - <b, h>`.
pub fn conv_energy_generic<T: Scalar>(
    group: &TreeGroup,
    w: &[T],
    a: &[T],
    b: &[T],
    v: FieldConfig,
    h: FieldConfig,
) -> T {
    let n = group.order();
    let mut acc = T::zero();
    for j in 0..n {
        if h.bit(j as u32) {
            for (k, wk) in w.iter().enumerate() {
                if v.bit(((j + k as u64) % n) as u32) {
                    acc = acc + wk.clone();
                }
            }
            acc = acc + b[j as usize].clone();
        }
    }
    for (i, ai) in a.iter().enumerate() {
        if v.bit(i as u32) {
            acc = acc + ai.clone();
        }
    }
    -acc
}

/// Realizes an arbitrary standard machine with `n` visible and `m` hidden
/// units on the smallest group with `p^l >= max(n, m)`, zero-padding the
/// extra units. Energies agree exactly with the source whenever the padded
/// units are clamped to zero.
pub fn embed_standard_rbm(
    n_visible: usize,
    m_hidden: usize,
    w: &[Vec<f64>],
    a: &[f64],
    b: &[f64],
    p: u64,
) -> Result<DbnModel> {
    if w.len() != n_visible {
        return Err(Error::DimensionMismatch {
            name: "w",
            expected: n_visible,
            got: w.len(),
        });
    }
    for row in w {
        check_len("w row", row, m_hidden)?;
    }
    check_len("a", a, n_visible)?;
    check_len("b", b, m_hidden)?;
    let needed = n_visible.max(m_hidden).max(1) as u64;
    let mut l = 1;
    loop {
        let group = TreeGroup::new(p, l)?;
        if group.order() >= needed {
            let n = group.order() as usize;
            let mut matrix = vec![vec![0.0; n]; n];
            for (i, row) in w.iter().enumerate() {
                matrix[i][..m_hidden].copy_from_slice(row);
            }
            let mut pa = vec![0.0; n];
            pa[..n_visible].copy_from_slice(a);
            let mut pb = vec![0.0; n];
            pb[..m_hidden].copy_from_slice(b);
            return DbnModel::rbm(group, matrix, pa, pb);
        }
        l += 1;
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    p: u64,
    l: u32,
    kind: String,
    w: WireWeights,
    a: Vec<f64>,
    b: Vec<f64>,
    deepening: Vec<WireLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireWeights {
    Rbm(Vec<Vec<f64>>),
    Conv(Vec<f64>),
    Radial { profile: Vec<f64>, diag: f64 },
}

#[derive(Serialize, Deserialize)]
struct WireLayer {
    w_eff: Vec<f64>,
    b_eff: WireBias,
    alpha: u64,
    beta: u64,
}

/// Bias wire form; negative infinity is spelled "-inf" since JSON has no
/// infinity literal.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireBias {
    Num(f64),
    Text(String),
}

impl WireBias {
    fn encode(x: f64) -> WireBias {
        if x == f64::NEG_INFINITY {
            WireBias::Text("-inf".to_string())
        } else {
            WireBias::Num(x)
        }
    }

    fn decode(&self) -> Result<f64> {
        match self {
            WireBias::Num(x) if x.is_finite() => Ok(*x),
            WireBias::Num(x) => Err(Error::MalformedModel(format!(
                "bias {x} must be finite or \"-inf\""
            ))),
            WireBias::Text(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            WireBias::Text(s) => Err(Error::MalformedModel(format!("unknown bias `{s}`"))),
        }
    }
}

impl From<&DbnModel> for ModelJson {
    fn from(m: &DbnModel) -> Self {
        let w = match &m.weights {
            WeightData::Rbm(w) => WireWeights::Rbm(w.clone()),
            WeightData::Conv(w) => WireWeights::Conv(w.clone()),
            WeightData::Radial { profile, diag } => WireWeights::Radial {
                profile: profile.clone(),
                diag: *diag,
            },
        };
        ModelJson {
            p: m.group.prime(),
            l: m.group.level(),
            kind: m.kind().as_str().to_string(),
            w,
            a: m.visible_bias.clone(),
            b: m.hidden_bias.clone(),
            deepening: m
                .deepening
                .iter()
                .map(|d| WireLayer {
                    w_eff: d.w_eff.clone(),
                    b_eff: WireBias::encode(d.b_eff),
                    alpha: d.alpha_idx,
                    beta: d.beta_idx,
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelJson> for DbnModel {
    type Error = Error;

    fn try_from(wire: ModelJson) -> Result<Self> {
        let group = TreeGroup::new(wire.p, wire.l)?;
        let mut model = match (wire.kind.as_str(), wire.w) {
            ("rbm", WireWeights::Rbm(w)) => DbnModel::rbm(group, w, wire.a, wire.b)?,
            ("conv", WireWeights::Conv(w)) => DbnModel::conv(group, w, wire.a, wire.b)?,
            ("radial", WireWeights::Radial { profile, diag }) => {
                DbnModel::radial(group, profile, diag, wire.a, wire.b)?
            }
            (kind, _) => {
                return Err(Error::MalformedModel(format!(
                    "kind `{kind}` does not match the weight shape"
                )))
            }
        };
        for layer in wire.deepening {
            model.push_layer(DeepLayer::new(
                layer.w_eff,
                layer.b_eff.decode()?,
                layer.alpha,
                layer.beta,
            ))?;
        }
        Ok(model)
    }
}
