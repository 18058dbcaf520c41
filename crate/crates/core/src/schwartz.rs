//! Locally constant test functions on the p-adic unit ball, Haar
//! integration, and the discretization rules that turn continuous kernels
//! and biases into network parameters.
//!
//! A function that is constant on every ball of radius `p^-r` is stored as
//! its `p^r` values, one per ball `i + p^r Z_p` indexed by the group at
//! level `r`. All measures and coefficients are exact rationals; callers
//! convert to floats only at the model boundary, so the discretization
//! identities hold as equalities rather than up to rounding.

use crate::error::{Error, Result};
use crate::tree::TreeGroup;
use num::{BigInt, BigRational, FromPrimitive, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// `p^-k` as an exact rational.
pub fn inv_power(p: u64, k: u32) -> BigRational {
    BigRational::new(1.into(), BigInt::from(p).pow(k))
}

/// Haar measure of the sphere of radius `p^-m`: `p^-m - p^-(m+1)`.
pub fn sphere_measure(p: u64, m: u32) -> BigRational {
    inv_power(p, m) - inv_power(p, m + 1)
}

fn pow_usize(p: u64, r: u32) -> usize {
    let mut n = 1usize;
    for _ in 0..r {
        n = n.checked_mul(p as usize).expect("constancy level too large");
    }
    n
}

/// Converts a float exactly into a (dyadic) rational.
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_f64(x)
}

/// A locally constant function supported on the unit ball, constant on
/// balls of radius `p^-level`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    p: u64,
    level: u32,
    coeffs: Vec<BigRational>,
}

impl TestFunction {
    pub fn new(p: u64, level: u32, coeffs: Vec<BigRational>) -> Result<Self> {
        if !(2..).contains(&p) {
            return Err(Error::NotPrime(p));
        }
        let expected = pow_usize(p, level);
        if coeffs.len() != expected {
            return Err(Error::CoefficientCount {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(TestFunction { p, level, coeffs })
    }

    pub fn from_f64_coeffs(p: u64, level: u32, coeffs: &[f64]) -> Result<Self> {
        let coeffs = coeffs
            .iter()
            .map(|&c| rational_from_f64(c).ok_or(Error::NonFiniteEnergy))
            .collect::<Result<Vec<_>>>()?;
        Self::new(p, level, coeffs)
    }

    /// The constant function 1 on the unit ball.
    pub fn unit_ball_indicator(p: u64) -> Self {
        TestFunction {
            p,
            level: 0,
            coeffs: vec![BigRational::from_integer(1.into())],
        }
    }

    /// The indicator of the ball `center + p^level Z_p`.
    pub fn ball_indicator(p: u64, level: u32, center: u64) -> Result<Self> {
        let n = pow_usize(p, level);
        if center as usize >= n {
            return Err(Error::ElementOutOfRange {
                value: center,
                n: n as u64,
            });
        }
        let mut coeffs = vec![BigRational::zero(); n];
        coeffs[center as usize] = BigRational::from_integer(1.into());
        Ok(TestFunction { p, level, coeffs })
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    /// Value on the ball containing the point with the given leading
    /// digits; at least `level` digits are required.
    pub fn evaluate(&self, digits: &[u64]) -> Result<&BigRational> {
        if digits.len() < self.level as usize {
            return Err(Error::TooFewDigits {
                expected: self.level,
                got: digits.len(),
            });
        }
        let mut idx = 0u64;
        for i in (0..self.level as usize).rev() {
            let d = digits[i];
            if d >= self.p {
                return Err(Error::DigitOutOfRange { digit: d, p: self.p });
            }
            idx = idx * self.p + d;
        }
        Ok(&self.coeffs[idx as usize])
    }

    /// Value indexed by a representative mod `p^level`.
    pub fn value_at(&self, i: u64) -> &BigRational {
        &self.coeffs[(i % self.coeffs.len() as u64) as usize]
    }

    /// Re-expresses the function at a finer constancy level by replicating
    /// coefficients across sub-balls.
    pub fn refine_to(&self, level: u32) -> Result<Self> {
        if level < self.level {
            return Err(Error::LevelBelowConstancy {
                l: level,
                r: self.level,
            });
        }
        let n = pow_usize(self.p, level);
        let base = self.coeffs.len();
        let coeffs = (0..n).map(|i| self.coeffs[i % base].clone()).collect();
        Ok(TestFunction {
            p: self.p,
            level,
            coeffs,
        })
    }

    /// Haar integral over the unit ball: `p^-level` times the coefficient sum.
    pub fn haar_integral(&self) -> BigRational {
        let sum: BigRational = self.coeffs.iter().cloned().sum();
        sum * inv_power(self.p, self.level)
    }

    pub fn to_json_string(&self) -> String {
        let wire = TestFunctionJson {
            p: self.p,
            level: self.level,
            coeffs: self.coeffs.iter().map(|c| c.to_f64().unwrap_or(0.0)).collect(),
        };
        serde_json::to_string_pretty(&wire).expect("test function serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let wire: TestFunctionJson =
            serde_json::from_str(s).map_err(|e| Error::MalformedModel(e.to_string()))?;
        Self::from_f64_coeffs(wire.p, wire.level, &wire.coeffs)
    }
}

#[derive(Serialize, Deserialize)]
struct TestFunctionJson {
    p: u64,
    level: u32,
    coeffs: Vec<f64>,
}

/// A locally constant function of two variables on the product of two unit
/// balls, constant on products of balls of radius `p^-level`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction2 {
    p: u64,
    level: u32,
    /// Row-major `p^level x p^level` table, rows indexed by the first variable.
    coeffs: Vec<Vec<BigRational>>,
}

impl TestFunction2 {
    pub fn new(p: u64, level: u32, coeffs: Vec<Vec<BigRational>>) -> Result<Self> {
        let expected = pow_usize(p, level);
        if coeffs.len() != expected || coeffs.iter().any(|row| row.len() != expected) {
            return Err(Error::CoefficientCount {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(TestFunction2 { p, level, coeffs })
    }

    /// The separable kernel `u(x) v(y)`.
    pub fn separable(u: &TestFunction, v: &TestFunction) -> Result<Self> {
        if u.prime() != v.prime() {
            return Err(Error::NotPrime(v.prime()));
        }
        let level = u.level().max(v.level());
        let (u, v) = (u.refine_to(level)?, v.refine_to(level)?);
        let coeffs = u
            .coeffs()
            .iter()
            .map(|a| v.coeffs().iter().map(|b| a * b).collect())
            .collect();
        Self::new(u.prime(), level, coeffs)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn value_at(&self, i: u64, j: u64) -> &BigRational {
        let n = self.coeffs.len() as u64;
        &self.coeffs[(i % n) as usize][(j % n) as usize]
    }
}

/// A radial kernel, a function of the p-adic norm alone: one value per
/// scale `p^0, p^-1, ..., p^-level` and a constant tail for all smaller
/// norms. Local constancy forces the value at the origin to equal the tail
/// constant, so no separate origin value is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    p: u64,
    values: Vec<BigRational>,
    tail: BigRational,
}

impl RadialProfile {
    /// `values[m]` is the kernel value on the sphere of radius `p^-m`;
    /// `tail` is the value on every smaller sphere.
    pub fn new(p: u64, values: Vec<BigRational>, tail: BigRational) -> Result<Self> {
        if !(2..).contains(&p) {
            return Err(Error::NotPrime(p));
        }
        Ok(RadialProfile { p, values, tail })
    }

    pub fn constant(p: u64, value: BigRational) -> Self {
        RadialProfile {
            p,
            values: vec![],
            tail: value,
        }
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    /// Kernel value at norm `p^-m`.
    pub fn value_at_scale(&self, m: u32) -> &BigRational {
        self.values.get(m as usize).unwrap_or(&self.tail)
    }

    /// Kernel value at the origin (the tail constant, by local constancy).
    pub fn value_at_zero(&self) -> &BigRational {
        &self.tail
    }

    /// Exact integral of `w(|z|_p)` over the ball `p^l Z_p`, summed shell
    /// by shell with the constant tail folded in closed form.
    pub fn tail_integral(&self, l: u32) -> BigRational {
        let r = self.values.len() as u32; // tail applies from scale r on
        let mut total = BigRational::zero();
        let mut m = l;
        while m < r {
            total += self.value_at_scale(m) * sphere_measure(self.p, m);
            m += 1;
        }
        total + &self.tail * inv_power(self.p, l.max(r))
    }

    /// The radial kernel as a locally constant function of one variable,
    /// exact for any constancy level at or beyond the profile data.
    pub fn to_test_function(&self, level: u32) -> Result<TestFunction> {
        if (level as usize) < self.values.len() {
            return Err(Error::LevelBelowConstancy {
                l: level,
                r: self.values.len() as u32,
            });
        }
        let group = TreeGroup::new(self.p, level.max(1))?;
        let n = pow_usize(self.p, level);
        let coeffs = (0..n as u64)
            .map(|i| {
                if i == 0 {
                    Ok(self.tail.clone())
                } else {
                    let ord = group.ord(group.element(i)?)?.expect("nonzero element");
                    Ok(self.value_at_scale(ord).clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        TestFunction::new(self.p, level, coeffs)
    }
}

/// Discretizes a translation-invariant kernel at level `l`: the double
/// integral over a pair of level-`l` balls collapses to `p^-2l w(i - j)`,
/// returned as one weight per group difference `k = i - j`.
///
/// Refuses levels below the kernel's constancy level, where the collapsed
/// value would no longer equal the continuous integral.
pub fn discretize_conv_kernel(w: &TestFunction, group: &TreeGroup) -> Result<Vec<BigRational>> {
    if w.prime() != group.prime() {
        return Err(Error::NotPrime(group.prime()));
    }
    if group.level() < w.level() {
        return Err(Error::LevelBelowConstancy {
            l: group.level(),
            r: w.level(),
        });
    }
    let scale = inv_power(group.prime(), 2 * group.level());
    Ok((0..group.order()).map(|k| w.value_at(k) * &scale).collect())
}

/// Discretizes a two-variable kernel at level `l`: `p^-2l w(i, j)` as a
/// full matrix over pairs of group representatives.
pub fn discretize_kernel2(w: &TestFunction2, group: &TreeGroup) -> Result<Vec<Vec<BigRational>>> {
    if group.level() < w.level() {
        return Err(Error::LevelBelowConstancy {
            l: group.level(),
            r: w.level(),
        });
    }
    let scale = inv_power(group.prime(), 2 * group.level());
    Ok((0..group.order())
        .map(|i| {
            (0..group.order())
                .map(|j| w.value_at(i, j) * &scale)
                .collect()
        })
        .collect())
}

/// Discretizes a one-variable bias at level `l`: `p^-l a(i)`.
pub fn discretize_bias(a: &TestFunction, group: &TreeGroup) -> Result<Vec<BigRational>> {
    if group.level() < a.level() {
        return Err(Error::LevelBelowConstancy {
            l: group.level(),
            r: a.level(),
        });
    }
    let scale = inv_power(group.prime(), group.level());
    Ok((0..group.order()).map(|i| a.value_at(i) * &scale).collect())
}

/// Discretizes a radial kernel at level `l`: off-diagonal couplings
/// `p^-2l w(p^-m)` for each ancestor scale `m = 0..l`, and the diagonal
/// coefficient `p^-l` times the exact tail integral over `p^l Z_p`.
pub fn radial_coefficients(
    w: &RadialProfile,
    group: &TreeGroup,
) -> Result<(Vec<BigRational>, BigRational)> {
    if w.prime() != group.prime() {
        return Err(Error::NotPrime(group.prime()));
    }
    let p = group.prime();
    let l = group.level();
    let scale = inv_power(p, 2 * l);
    let offdiag = (0..l).map(|m| w.value_at_scale(m) * &scale).collect();
    let diag = inv_power(p, l) * w.tail_integral(l);
    Ok((offdiag, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::One;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn evaluate_ball_membership() {
        let one = TestFunction::unit_ball_indicator(2);
        assert_eq!(*one.evaluate(&[]).unwrap(), rat(1, 1));
        assert_eq!(*one.evaluate(&[1, 0, 1]).unwrap(), rat(1, 1));

        // Indicator of 1 + 2 Z_2.
        let f = TestFunction::ball_indicator(2, 1, 1).unwrap();
        assert_eq!(*f.evaluate(&[1]).unwrap(), rat(1, 1));
        assert_eq!(*f.evaluate(&[0]).unwrap(), rat(0, 1));
        assert!(f.evaluate(&[]).is_err());
    }

    #[test]
    fn refinement_preserves_values() {
        let f = TestFunction::new(3, 1, vec![rat(1, 2), rat(-1, 3), rat(5, 1)]).unwrap();
        let g = f.refine_to(2).unwrap();
        for digits in [[0, 0], [1, 0], [2, 2], [0, 1], [2, 0]] {
            assert_eq!(f.evaluate(&digits).unwrap(), g.evaluate(&digits).unwrap());
        }
        assert_eq!(g.haar_integral(), f.haar_integral());
    }

    #[test]
    fn haar_integral_examples() {
        assert!(TestFunction::unit_ball_indicator(5).haar_integral().is_one());
        // A ball of radius p^-l has measure p^-l.
        for (p, l, c) in [(2u64, 3u32, 5u64), (3, 2, 7)] {
            let f = TestFunction::ball_indicator(p, l, c).unwrap();
            assert_eq!(f.haar_integral(), inv_power(p, l));
        }
        // The unit sphere for p = 2 is the complement of 2 Z_2.
        let sphere = TestFunction::new(2, 1, vec![rat(0, 1), rat(1, 1)]).unwrap();
        assert_eq!(sphere.haar_integral(), rat(1, 2));
    }

    #[test]
    fn conv_kernel_discretization() {
        // Constant kernel: every entry is p^-2l times the constant.
        let c = TestFunction::new(2, 0, vec![rat(3, 1)]).unwrap();
        let g = TreeGroup::new(2, 2).unwrap();
        let w = discretize_conv_kernel(&c, &g).unwrap();
        assert!(w.iter().all(|x| *x == rat(3, 16)));

        // Indicator of 2 Z_2 at l = 2: nonzero exactly at even differences.
        let ball = TestFunction::ball_indicator(2, 1, 0).unwrap();
        let w = discretize_conv_kernel(&ball, &g).unwrap();
        assert_eq!(w, vec![rat(1, 16), rat(0, 1), rat(1, 16), rat(0, 1)]);

        // Scaling is linear.
        let scaled = TestFunction::new(2, 1, vec![rat(7, 2), rat(0, 1)]).unwrap();
        let w2 = discretize_conv_kernel(&scaled, &g).unwrap();
        for (a, b) in w2.iter().zip(&w) {
            assert_eq!(*a, b * rat(7, 2));
        }

        // Too coarse a level is refused.
        let g1 = TreeGroup::new(2, 1).unwrap();
        let fine = TestFunction::ball_indicator(2, 2, 1).unwrap();
        assert!(matches!(
            discretize_conv_kernel(&fine, &g1).unwrap_err(),
            Error::LevelBelowConstancy { .. }
        ));
    }

    #[test]
    fn kernel2_discretization() {
        let g = TreeGroup::new(2, 2).unwrap();
        // Constant kernel 1: all entries p^-2l.
        let one = TestFunction::unit_ball_indicator(2);
        let w2 = TestFunction2::separable(&one, &one).unwrap();
        let m = discretize_kernel2(&w2, &g).unwrap();
        assert!(m.iter().flatten().all(|x| *x == rat(1, 16)));

        // Separable kernel: outer product of scaled samples.
        let u = TestFunction::new(2, 1, vec![rat(1, 2), rat(3, 1)]).unwrap();
        let v = TestFunction::new(2, 1, vec![rat(-1, 1), rat(2, 5)]).unwrap();
        let w2 = TestFunction2::separable(&u, &v).unwrap();
        let m = discretize_kernel2(&w2, &g).unwrap();
        let du = discretize_bias(&u, &g).unwrap();
        let dv = discretize_bias(&v, &g).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[i][j], &du[i] * &dv[j]);
            }
        }

        // Zero kernel gives the zero matrix.
        let z = TestFunction::new(2, 0, vec![rat(0, 1)]).unwrap();
        let w2 = TestFunction2::separable(&z, &one).unwrap();
        assert!(discretize_kernel2(&w2, &g)
            .unwrap()
            .iter()
            .flatten()
            .all(|x| x.is_zero()));
    }

    #[test]
    fn radial_diagonal_coefficient() {
        // Constant 1: the tail integral over p^l Z_p is the ball measure.
        let g = TreeGroup::new(2, 2).unwrap();
        let w = RadialProfile::constant(2, rat(1, 1));
        assert_eq!(w.tail_integral(2), rat(1, 4));
        let (off, diag) = radial_coefficients(&w, &g).unwrap();
        assert_eq!(diag, rat(1, 16));
        assert_eq!(off, vec![rat(1, 16), rat(1, 16)]);

        // Kernel vanishing below the group level: zero diagonal.
        let w = RadialProfile::new(2, vec![rat(1, 1), rat(2, 1)], rat(0, 1)).unwrap();
        let (_, diag) = radial_coefficients(&w, &g).unwrap();
        assert!(diag.is_zero());

        // Mass on a single shell: measure p^-m (1 - 1/p).
        let g1 = TreeGroup::new(2, 1).unwrap();
        let w = RadialProfile::new(2, vec![rat(0, 1), rat(0, 1), rat(1, 1)], rat(0, 1)).unwrap();
        assert_eq!(w.tail_integral(1), sphere_measure(2, 2));
        assert_eq!(w.tail_integral(1), rat(1, 8));
        let (_, diag) = radial_coefficients(&w, &g1).unwrap();
        assert_eq!(diag, rat(1, 16));
    }

    #[test]
    fn json_round_trip() {
        let f = TestFunction::from_f64_coeffs(2, 1, &[0.25, -1.5]).unwrap();
        let s = f.to_json_string();
        let g = TestFunction::from_json_str(&s).unwrap();
        assert_eq!(f, g);
        assert_eq!(s, g.to_json_string());
    }
}
