//! Exact Boltzmann quantities at desk scale: partition function, joint and
//! marginal probabilities, the factorized hidden sum, entropy and the
//! Kullback-Leibler divergence.
//!
//! Everything is computed by exhaustive enumeration in a fixed ascending
//! bit-mask order with log-space accumulation, so repeated runs are
//! bit-identical and large biases cannot overflow. The factorized route
//! computes visible marginals in `O(2^n n^2)` instead of `O(2^(2n))` by
//! collapsing the hidden sum into a product of per-unit factors.

use crate::deepening::extended_energy_compressed;
use crate::error::{Error, Result};
use crate::model::{DbnModel, FieldConfig};

/// Enumeration limits: a width cap for probability tables (`2^max_units`
/// entries) and a bit cap for joint enumeration over all free units.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationCaps {
    pub max_units: u32,
    pub max_joint_bits: u32,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps {
            max_units: 20,
            max_joint_bits: 24,
        }
    }
}

impl EnumerationCaps {
    /// Reads the width cap from `PADIC_DBN_CAP` when set; the joint cap
    /// follows four bits above it.
    pub fn from_env() -> Self {
        match std::env::var("PADIC_DBN_CAP").ok().and_then(|s| s.parse::<u32>().ok()) {
            Some(max_units) => EnumerationCaps {
                max_units,
                max_joint_bits: max_units.saturating_add(4),
            },
            None => EnumerationCaps::default(),
        }
    }

    pub fn check_units(&self, units: u32) -> Result<()> {
        if units > self.max_units || units > 63 {
            return Err(Error::CapExceeded {
                bits: units,
                cap: self.max_units.min(63),
            });
        }
        Ok(())
    }

    pub fn check_joint_bits(&self, bits: u32) -> Result<()> {
        if bits > self.max_joint_bits || bits > 63 {
            return Err(Error::CapExceeded {
                bits,
                cap: self.max_joint_bits.min(63),
            });
        }
        Ok(())
    }
}

/// Numerically stable `log(1 + exp(x))`; a negatively infinite argument
/// contributes a factor of exactly one, hence zero.
pub fn softplus(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(sum exp(xs))` with a max shift; empty or all-negative-infinite
/// input yields negative infinity.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// An explicit probability table over all configurations of a fixed width,
/// indexed by bit-mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    width: u32,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(width: u32, probs: Vec<f64>) -> Result<Self> {
        let expected = 1usize << width;
        if probs.len() != expected {
            return Err(Error::TableLength {
                expected,
                got: probs.len(),
            });
        }
        let mut sum = 0.0;
        for (bitmask, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) {
                return Err(Error::NegativeProbability {
                    bitmask: bitmask as u64,
                    value: p,
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Distribution { width, probs })
    }

    /// Normalizes a nonnegative table; the sum must already be within the
    /// given tolerance of one.
    pub fn normalized(width: u32, probs: Vec<f64>, tolerance: f64) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::NotNormalized { sum });
        }
        let probs = probs.into_iter().map(|p| p / sum).collect();
        Distribution::new(width, probs)
    }

    pub fn uniform(width: u32) -> Self {
        let n = 1usize << width;
        Distribution {
            width,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(width: u32, bitmask: u64) -> Result<Self> {
        let n = 1usize << width;
        if bitmask as usize >= n {
            return Err(Error::BitsOutOfRange {
                bits: bitmask,
                width,
            });
        }
        let mut probs = vec![0.0; n];
        probs[bitmask as usize] = 1.0;
        Ok(Distribution { width, probs })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, bitmask: u64) -> f64 {
        self.probs[bitmask as usize]
    }

    /// Configurations carrying nonzero mass, in ascending bit-mask order.
    pub fn support(&self) -> Vec<u64> {
        (0..self.probs.len() as u64)
            .filter(|&b| self.probs[b as usize] > 0.0)
            .collect()
    }

    pub fn max_norm_distance(&self, other: &Distribution) -> Result<f64> {
        if self.width != other.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                got: other.width,
            });
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Zero-pads to a wider table: mass stays on the configurations whose
    /// added high units are all zero.
    pub fn zero_pad(&self, width: u32) -> Result<Distribution> {
        if width < self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                got: width,
            });
        }
        let mut probs = vec![0.0; 1 << width];
        probs[..self.probs.len()].copy_from_slice(&self.probs);
        Ok(Distribution { width, probs })
    }

    /// CSV table: header `bitmask,probability`, rows in ascending decimal
    /// bit-mask order, probabilities with 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("bitmask,probability\n");
        for (bitmask, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{bitmask},{p:.16e}\n"));
        }
        out
    }

    /// Parses the CSV table form; the probabilities are renormalized and
    /// must sum to one within the given tolerance.
    pub fn from_csv_str(s: &str, tolerance: f64) -> Result<Distribution> {
        let mut lines = s.lines();
        match lines.next() {
            Some("bitmask,probability") => {}
            other => {
                return Err(Error::MalformedDistribution(format!(
                    "expected header `bitmask,probability`, got {other:?}"
                )))
            }
        }
        let mut probs = vec![];
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (mask, prob) = line.split_once(',').ok_or_else(|| {
                Error::MalformedDistribution(format!("row {i} has no comma"))
            })?;
            let mask: u64 = mask
                .parse()
                .map_err(|_| Error::MalformedDistribution(format!("bad bitmask `{mask}`")))?;
            if mask != i as u64 {
                return Err(Error::MalformedDistribution(format!(
                    "row {i} lists bitmask {mask}; rows must ascend from 0"
                )));
            }
            let prob: f64 = prob
                .parse()
                .map_err(|_| Error::MalformedDistribution(format!("bad probability `{prob}`")))?;
            probs.push(prob);
        }
        if probs.is_empty() || !probs.len().is_power_of_two() {
            return Err(Error::MalformedDistribution(format!(
                "{} rows do not form a full table over binary configurations",
                probs.len()
            )));
        }
        let width = probs.len().trailing_zeros();
        Distribution::normalized(width, probs, tolerance)
    }
}

/// Number of free binary units of a model: visible plus hidden plus one
/// per deepening layer.
pub fn free_bits(model: &DbnModel) -> u32 {
    2 * model.units() + model.deepening().len() as u32
}

fn joint_energy(model: &DbnModel, v: FieldConfig, h: FieldConfig, extras: u64) -> Result<f64> {
    let e = extended_energy_compressed(model, v, h, extras)?;
    if e.is_nan() || e == f64::NEG_INFINITY {
        return Err(Error::NonFiniteEnergy);
    }
    Ok(e)
}

/// Iterates all joint configurations in ascending order of the combined
/// bit-mask (visible low bits, hidden next, layer units high).
fn for_each_joint(
    model: &DbnModel,
    mut f: impl FnMut(FieldConfig, FieldConfig, u64, f64),
) -> Result<()> {
    let n = model.units();
    let layers = model.deepening().len() as u32;
    for extras in 0..1u64 << layers {
        for h in FieldConfig::all(n) {
            for v in FieldConfig::all(n) {
                let e = joint_energy(model, v, h, extras)?;
                f(v, h, extras, e);
            }
        }
    }
    Ok(())
}

/// Log partition function by deterministic enumeration: two passes over
/// the joint configurations, a max shift then the exponential sum in
/// ascending order.
pub fn log_partition_function(model: &DbnModel, caps: &EnumerationCaps) -> Result<f64> {
    caps.check_joint_bits(free_bits(model))?;
    let mut max = f64::NEG_INFINITY;
    for_each_joint(model, |_, _, _, e| max = max.max(-e))?;
    if max == f64::NEG_INFINITY {
        return Err(Error::NonFiniteEnergy);
    }
    let mut sum = 0.0;
    for_each_joint(model, |_, _, _, e| sum += (-e - max).exp())?;
    Ok(max + sum.ln())
}

/// Partition function `Z = sum exp(-E)` over all joint configurations.
pub fn partition_function(model: &DbnModel, caps: &EnumerationCaps) -> Result<f64> {
    Ok(log_partition_function(model, caps)?.exp())
}

/// Joint Boltzmann probability `exp(-E) / Z`. For a deepened model the
/// hidden argument carries the layer units in its high bits.
pub fn joint_prob(
    model: &DbnModel,
    v: FieldConfig,
    h_full: FieldConfig,
    caps: &EnumerationCaps,
) -> Result<f64> {
    let n = model.units();
    let layers = model.deepening().len() as u32;
    if h_full.width() != n + layers {
        return Err(Error::WidthMismatch {
            expected: n + layers,
            got: h_full.width(),
        });
    }
    let h = FieldConfig::new(h_full.bits() & ((1 << n) - 1), n)?;
    let extras = h_full.bits() >> n;
    let log_z = log_partition_function(model, caps)?;
    let e = joint_energy(model, v, h, extras)?;
    Ok((-e - log_z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Visible,
    Hidden,
}

/// Marginal distribution by full joint enumeration. The visible table has
/// one entry per visible configuration; the hidden table spans the hidden
/// units plus one high bit per deepening layer.
pub fn marginal(model: &DbnModel, side: Side, caps: &EnumerationCaps) -> Result<Distribution> {
    caps.check_joint_bits(free_bits(model))?;
    let n = model.units();
    let layers = model.deepening().len() as u32;
    let width = match side {
        Side::Visible => n,
        Side::Hidden => n + layers,
    };
    caps.check_units(width)?;
    let log_z = log_partition_function(model, caps)?;
    let mut probs = vec![0.0; 1 << width];
    for_each_joint(model, |v, h, extras, e| {
        let idx = match side {
            Side::Visible => v.bits(),
            Side::Hidden => h.bits() | extras << n,
        };
        probs[idx as usize] += (-e - log_z).exp();
    })?;
    Distribution::normalized(width, probs, 1e-9)
}

/// Log of the factorized hidden sum `sum_h exp(-E(v, h))`: the visible
/// linear term plus one softplus factor per hidden unit and per layer.
pub fn log_free_energy(model: &DbnModel, v: FieldConfig) -> f64 {
    let mut acc = crate::model::dot_config(model.visible_bias(), v);
    for j in 0..model.units() {
        acc += softplus(model.hidden_coefficient(v, j) + model.hidden_bias()[j as usize]);
    }
    for layer in model.deepening() {
        acc += softplus(layer.activation(v));
    }
    acc
}

/// Factorized hidden sum
/// `exp(<a, v>) * prod_j (1 + exp(c_j(v) + b_j)) * prod_i (1 + exp(<w_eff_i, v> + b_eff_i))`.
pub fn free_energy_factorized(model: &DbnModel, v: FieldConfig) -> f64 {
    log_free_energy(model, v).exp()
}

/// Visible marginal through the factorized route, `O(2^n n^2)`.
pub fn marginal_factorized(model: &DbnModel, caps: &EnumerationCaps) -> Result<Distribution> {
    crate::deepening::extended_marginal(model, caps)
}

/// Log partition function through the factorized route.
pub fn log_partition_factorized(model: &DbnModel, caps: &EnumerationCaps) -> Result<f64> {
    caps.check_units(model.units())?;
    let logs: Vec<f64> = FieldConfig::all(model.units())
        .map(|v| log_free_energy(model, v))
        .collect();
    Ok(logsumexp(&logs))
}

/// Kullback-Leibler divergence `sum q ln(q / p)` with `0 ln 0 = 0`.
/// Returns positive infinity when `q` puts mass where `p` has none, so
/// results stay orderable.
pub fn kl_divergence(q: &Distribution, p: &Distribution) -> Result<f64> {
    if q.width() != p.width() {
        return Err(Error::WidthMismatch {
            expected: q.width(),
            got: p.width(),
        });
    }
    let mut acc = 0.0;
    for (qi, pi) in q.probs().iter().zip(p.probs()) {
        if *qi == 0.0 {
            continue;
        }
        if *pi == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += qi * (qi / pi).ln();
    }
    Ok(acc)
}

/// Shannon entropy `-sum q ln q` in nats.
pub fn entropy(q: &Distribution) -> f64 {
    -q.probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}
