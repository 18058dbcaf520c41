//! Exact arithmetic on the finite quotient group of p-adic integers modulo
//! p^l, together with its ultrametric tree structure.
//!
//! Elements are canonical integer representatives `0..p^l`, identified with
//! base-p digit strings `i_0 + i_1 p + ... + i_{l-1} p^{l-1}`. The group is
//! the leaf set of a rooted tree with `l + 1` levels and branching factor
//! `p`; two leaves share their first common ancestor at the level given by
//! the p-adic order of their difference.

use crate::error::{Error, Result};
use num::BigRational;
use serde::{Deserialize, Serialize};

/// Default cap on the number of group elements (not configurations).
pub const DEFAULT_GROUP_CAP: u64 = 1 << 20;

/// The additive group of integers modulo p^l with p-adic metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeGroup {
    p: u64,
    l: u32,
    n: u64,
}

/// A canonical representative in `[0, p^l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(pub u64);

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p % 2 == 0 {
        return p == 2;
    }
    let mut d = 3;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

impl TreeGroup {
    /// Builds the group for prime `p` and level `l >= 1`, capped at
    /// [`DEFAULT_GROUP_CAP`] elements.
    pub fn new(p: u64, l: u32) -> Result<Self> {
        Self::with_cap(p, l, DEFAULT_GROUP_CAP)
    }

    /// Same as [`TreeGroup::new`] with an explicit element cap.
    pub fn with_cap(p: u64, l: u32, cap: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if l < 1 {
            return Err(Error::LevelTooSmall);
        }
        let mut n: u64 = 1;
        for _ in 0..l {
            n = n
                .checked_mul(p)
                .filter(|&m| m <= cap)
                .ok_or(Error::GroupTooLarge { p, l, n: u64::MAX, cap })?;
        }
        Ok(TreeGroup { p, l, n })
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.l
    }

    /// Cardinality p^l.
    pub fn order(&self) -> u64 {
        self.n
    }

    /// Checked constructor for an element of this group.
    pub fn element(&self, value: u64) -> Result<GroupElement> {
        if value < self.n {
            Ok(GroupElement(value))
        } else {
            Err(Error::ElementOutOfRange { value, n: self.n })
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = GroupElement> {
        (0..self.n).map(GroupElement)
    }

    fn check(&self, a: GroupElement) -> Result<u64> {
        if a.0 < self.n {
            Ok(a.0)
        } else {
            Err(Error::ElementOutOfRange { value: a.0, n: self.n })
        }
    }

    /// Sum of integers mod p^l.
    pub fn add(&self, a: GroupElement, b: GroupElement) -> Result<GroupElement> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        Ok(GroupElement((a + b) % self.n))
    }

    /// Additive inverse mod p^l.
    pub fn neg(&self, a: GroupElement) -> Result<GroupElement> {
        let a = self.check(a)?;
        Ok(GroupElement(if a == 0 { 0 } else { self.n - a }))
    }

    pub fn sub(&self, a: GroupElement, b: GroupElement) -> Result<GroupElement> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    /// p-adic order of `a`: the largest `s` with `p^s | a`. Zero has
    /// infinite order, reported as `None`.
    pub fn ord(&self, a: GroupElement) -> Result<Option<u32>> {
        let mut v = self.check(a)?;
        if v == 0 {
            return Ok(None);
        }
        let mut ord = 0;
        while v % self.p == 0 {
            v /= self.p;
            ord += 1;
        }
        Ok(Some(ord))
    }

    /// p-adic norm p^(-ord) as an exact rational; the norm of zero is 0.
    pub fn norm(&self, a: GroupElement) -> Result<BigRational> {
        match self.ord(a)? {
            None => Ok(BigRational::from_integer(0.into())),
            Some(ord) => {
                let scale = num::BigInt::from(self.p).pow(ord);
                Ok(BigRational::new(1.into(), scale))
            }
        }
    }

    /// p-adic norm as a float, for reporting.
    pub fn norm_f64(&self, a: GroupElement) -> Result<f64> {
        match self.ord(a)? {
            None => Ok(0.0),
            Some(ord) => Ok((self.p as f64).powi(-(ord as i32))),
        }
    }

    /// Order and norm together; zero reports no finite order and norm 0.
    pub fn ord_and_norm(&self, a: GroupElement) -> Result<(Option<u32>, BigRational)> {
        Ok((self.ord(a)?, self.norm(a)?))
    }

    /// Level of the first common ancestor of two leaves in the rooted tree:
    /// `ord_p(a - b)` clamped to `[0, l]`, with `l` for equal leaves.
    pub fn ancestor_level(&self, a: GroupElement, b: GroupElement) -> Result<u32> {
        let d = self.sub(a, b)?;
        Ok(match self.ord(d)? {
            None => self.l,
            Some(ord) => ord.min(self.l),
        })
    }

    /// Base-p digits `(i_0, ..., i_{l-1})` of the representative.
    pub fn digits(&self, a: GroupElement) -> Result<Vec<u64>> {
        let mut v = self.check(a)?;
        let mut out = Vec::with_capacity(self.l as usize);
        for _ in 0..self.l {
            out.push(v % self.p);
            v /= self.p;
        }
        Ok(out)
    }

    /// Reassembles an element from exactly `l` base-p digits.
    pub fn from_digits(&self, digits: &[u64]) -> Result<GroupElement> {
        if digits.len() != self.l as usize {
            return Err(Error::TooFewDigits {
                expected: self.l,
                got: digits.len(),
            });
        }
        let mut v = 0u64;
        for &d in digits.iter().rev() {
            if d >= self.p {
                return Err(Error::DigitOutOfRange { digit: d, p: self.p });
            }
            v = v * self.p + d;
        }
        Ok(GroupElement(v))
    }

    /// The group one level up, with the same prime.
    pub fn refine(&self) -> Result<TreeGroup> {
        TreeGroup::with_cap(self.p, self.l + 1, DEFAULT_GROUP_CAP.max(self.n * self.p))
    }

    /// Natural homomorphism down one level: `a mod p^(l-1)`.
    ///
    /// `self` is the finer group; the result lives in the group at level
    /// `l - 1`.
    pub fn project(&self, a: GroupElement) -> Result<GroupElement> {
        if self.l < 2 {
            return Err(Error::LevelTooSmall);
        }
        let a = self.check(a)?;
        Ok(GroupElement(a % (self.n / self.p)))
    }

    /// Identifies `a` with the same integer one level up. This is a section
    /// of [`TreeGroup::project`] but not a group homomorphism.
    pub fn lift(&self, a: GroupElement) -> Result<GroupElement> {
        let a = self.check(a)?;
        Ok(GroupElement(a))
    }

    /// The torsion subgroup `T = {0} ∪ {a p^l : a in 1..p-1}` of the group
    /// one level up, and the decomposition of that group into the cosets
    /// `G_l + k`, one member list per `k` in `T`.
    pub fn torsion_and_cosets(&self) -> (Vec<GroupElement>, Vec<Vec<GroupElement>>) {
        let torsion: Vec<GroupElement> = (0..self.p).map(|a| GroupElement(a * self.n)).collect();
        let cosets = torsion
            .iter()
            .map(|&k| {
                (0..self.n)
                    .map(|j| GroupElement((j + k.0) % (self.n * self.p)))
                    .collect()
            })
            .collect();
        (torsion, cosets)
    }

    /// The proper torsion elements `{a p^l : a in 1..p-1}`.
    pub fn torsion_star(&self) -> Vec<GroupElement> {
        (1..self.p).map(|a| GroupElement(a * self.n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(p: u64, l: u32) -> TreeGroup {
        TreeGroup::new(p, l).unwrap()
    }

    #[test]
    fn construction_rejects_composites_and_level_zero() {
        assert_eq!(TreeGroup::new(4, 1).unwrap_err(), Error::NotPrime(4));
        assert_eq!(TreeGroup::new(1, 1).unwrap_err(), Error::NotPrime(1));
        assert_eq!(TreeGroup::new(2, 0).unwrap_err(), Error::LevelTooSmall);
        assert!(matches!(
            TreeGroup::new(2, 21).unwrap_err(),
            Error::GroupTooLarge { .. }
        ));
        assert!(TreeGroup::with_cap(2, 21, 1 << 21).is_ok());
    }

    #[test]
    fn add_is_sum_mod_p_to_l() {
        let g8 = g(2, 3);
        assert_eq!(g8.add(GroupElement(5), GroupElement(7)).unwrap().0, 4);
        for a in g8.elements() {
            assert_eq!(g8.add(a, GroupElement(0)).unwrap(), a);
        }
        let g9 = g(3, 2);
        assert_eq!(g9.add(GroupElement(8), GroupElement(1)).unwrap().0, 0);
        assert!(g8.add(GroupElement(8), GroupElement(0)).is_err());
    }

    #[test]
    fn neg_is_additive_inverse() {
        let g8 = g(2, 3);
        assert_eq!(g8.neg(GroupElement(3)).unwrap().0, 5);
        assert_eq!(g8.neg(GroupElement(0)).unwrap().0, 0);
        assert_eq!(g(3, 1).neg(GroupElement(1)).unwrap().0, 2);
        for a in g8.elements() {
            let n = g8.neg(a).unwrap();
            assert_eq!(g8.add(a, n).unwrap().0, 0);
        }
    }

    #[test]
    fn ord_and_norm_examples() {
        let g8 = g(2, 3);
        assert_eq!(g8.ord(GroupElement(6)).unwrap(), Some(1));
        assert_eq!(g8.norm_f64(GroupElement(6)).unwrap(), 0.5);
        assert_eq!(g8.ord(GroupElement(0)).unwrap(), None);
        assert_eq!(g8.norm_f64(GroupElement(0)).unwrap(), 0.0);
        let g9 = g(3, 2);
        assert_eq!(g9.ord(GroupElement(3)).unwrap(), Some(1));
        assert_eq!(
            g9.norm(GroupElement(3)).unwrap(),
            BigRational::new(1.into(), 3.into())
        );
        let (ord, norm) = g9.ord_and_norm(GroupElement(3)).unwrap();
        assert_eq!(ord, Some(1));
        assert_eq!(norm, BigRational::new(1.into(), 3.into()));
    }

    #[test]
    fn ancestor_level_matches_tree_paths() {
        let g8 = g(2, 3);
        // Leaves 1 and 5 differ by 4 = 2^2: common ancestor at level 2.
        assert_eq!(g8.ancestor_level(GroupElement(1), GroupElement(5)).unwrap(), 2);
        assert_eq!(g8.ancestor_level(GroupElement(6), GroupElement(6)).unwrap(), 3);
        assert_eq!(g8.ancestor_level(GroupElement(0), GroupElement(1)).unwrap(), 0);

        // Brute force: the ancestor level is the longest shared digit prefix.
        for a in g8.elements() {
            for b in g8.elements() {
                let da = g8.digits(a).unwrap();
                let db = g8.digits(b).unwrap();
                let shared = da.iter().zip(&db).take_while(|(x, y)| x == y).count() as u32;
                assert_eq!(g8.ancestor_level(a, b).unwrap(), shared);
            }
        }
    }

    #[test]
    fn digits_round_trip() {
        for (p, l) in [(2, 3), (3, 2), (5, 2)] {
            let grp = g(p, l);
            for a in grp.elements() {
                let d = grp.digits(a).unwrap();
                assert_eq!(grp.from_digits(&d).unwrap(), a);
            }
        }
        assert!(g(2, 3).from_digits(&[1, 0]).is_err());
        assert!(g(2, 3).from_digits(&[2, 0, 0]).is_err());
    }

    #[test]
    fn project_examples() {
        let g16 = g(2, 4);
        assert_eq!(g16.project(GroupElement(13)).unwrap().0, 5);
        assert_eq!(g16.project(GroupElement(0)).unwrap().0, 0);
        let g9 = g(3, 2);
        assert_eq!(g9.project(GroupElement(7)).unwrap().0, 1);
    }

    #[test]
    fn project_is_homomorphism_and_lift_is_not() {
        let lo = g(2, 3);
        let hi = lo.refine().unwrap();
        for a in hi.elements() {
            for b in hi.elements() {
                let lhs = hi.project(hi.add(a, b).unwrap()).unwrap();
                let rhs = lo
                    .add(hi.project(a).unwrap(), hi.project(b).unwrap())
                    .unwrap();
                assert_eq!(lhs, rhs);
            }
        }
        // lift(4) + lift(4) = 8 in the finer group, outside the embedded image.
        let a = lo.lift(GroupElement(4)).unwrap();
        let sum = hi.add(a, a).unwrap();
        assert_eq!(sum.0, 8);
        assert!(sum.0 >= lo.order());
        // project . lift = identity
        for a in lo.elements() {
            assert_eq!(hi.project(lo.lift(a).unwrap()).unwrap(), a);
        }
        assert_eq!(g(2, 2).lift(GroupElement(3)).unwrap().0, 3);
        assert_eq!(g(2, 2).lift(GroupElement(0)).unwrap().0, 0);
    }

    #[test]
    fn torsion_and_cosets_tile_the_refined_group() {
        let g3 = g(3, 1);
        let (t, _) = g3.torsion_and_cosets();
        assert_eq!(t.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert_eq!(
            g3.torsion_star().iter().map(|e| e.0).collect::<Vec<_>>(),
            vec![3, 6]
        );

        let g2 = g(2, 1);
        let (_, cosets) = g2.torsion_and_cosets();
        assert_eq!(
            cosets
                .iter()
                .map(|c| c.iter().map(|e| e.0).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            vec![vec![0, 1], vec![2, 3]]
        );

        for (p, l) in [(2, 2), (3, 1), (5, 1)] {
            let grp = g(p, l);
            let hi = grp.refine().unwrap();
            let (t, cosets) = grp.torsion_and_cosets();
            assert_eq!(t.len(), p as usize);
            let mut seen = vec![false; hi.order() as usize];
            for coset in &cosets {
                assert_eq!(coset.len(), grp.order() as usize);
                for e in coset {
                    assert!(!seen[e.0 as usize], "cosets overlap");
                    seen[e.0 as usize] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "cosets must cover the group");
        }
    }

    #[test]
    fn ultrametric_inequality_exhaustive() {
        for (p, l) in [(2, 6), (3, 3), (5, 2), (7, 2)] {
            let grp = g(p, l);
            assert!(grp.order() <= 64 || (p, l) == (2, 6));
            for a in grp.elements() {
                for b in grp.elements() {
                    for c in grp.elements() {
                        let oab = grp.ord(grp.sub(a, b).unwrap()).unwrap();
                        let oac = grp.ord(grp.sub(a, c).unwrap()).unwrap();
                        let ocb = grp.ord(grp.sub(c, b).unwrap()).unwrap();
                        // |a-b| <= max(|a-c|, |c-b|), i.e. ord(a-b) >= min of the others.
                        let min = match (oac, ocb) {
                            (None, x) | (x, None) => x,
                            (Some(x), Some(y)) => Some(x.min(y)),
                        };
                        match (oab, min) {
                            (_, None) => assert_eq!(oab, None),
                            (None, Some(_)) => {}
                            (Some(x), Some(m)) => assert!(x >= m),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn distance_is_translation_invariant() {
        let grp = g(3, 2);
        for a in grp.elements() {
            for b in grp.elements() {
                for t in grp.elements() {
                    let at = grp.add(a, t).unwrap();
                    let bt = grp.add(b, t).unwrap();
                    assert_eq!(
                        grp.ord(grp.sub(at, bt).unwrap()).unwrap(),
                        grp.ord(grp.sub(a, b).unwrap()).unwrap()
                    );
                }
            }
        }
    }
}
