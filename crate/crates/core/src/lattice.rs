//! Subset lattice over `n` variables and the signed zeta/Möbius transforms on it.
//!
//! A subset of `N = {0, .., n-1}` is a bitmask; bit `i` set means variable `i`
//! is present (unmasked). Every function of subsets is stored as a flat vector
//! of `2^n` reals in ascending bitmask order.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Largest supported variable count (16M entries per vector).
pub const MAX_VARS: usize = 24;

pub(crate) fn check_capacity(n: usize) -> Result<()> {
    if n == 0 || n > MAX_VARS {
        return Err(Error::Capacity { n, max: MAX_VARS });
    }
    Ok(())
}

/// A subset of the variable set, encoded as a bitmask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetIndex(pub u32);

impl SubsetIndex {
    pub const EMPTY: SubsetIndex = SubsetIndex(0);

    pub fn full(n: usize) -> Self {
        SubsetIndex(((1u64 << n) - 1) as u32)
    }

    pub fn from_vars(vars: &[usize]) -> Self {
        SubsetIndex(vars.iter().fold(0u32, |acc, &v| acc | (1 << v)))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Number of variables in the subset.
    pub fn order(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, var: usize) -> bool {
        self.0 >> var & 1 == 1
    }

    pub fn is_subset_of(self, other: SubsetIndex) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersects(self, other: SubsetIndex) -> bool {
        self.0 & other.0 != 0
    }

    pub fn complement(self, n: usize) -> SubsetIndex {
        SubsetIndex(self.0 ^ Self::full(n).0)
    }

    pub fn vars(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |i| bits >> i & 1 == 1)
    }

    pub fn in_range(self, n: usize) -> bool {
        (self.0 as u64) < (1u64 << n)
    }
}

impl fmt::Display for SubsetIndex {
    /// 1-based variable listing, e.g. `{1,2,3}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.vars().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, "}}")
    }
}

/// A real-valued function on all `2^n` subsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeVector {
    n: usize,
    values: Vec<f64>,
}

impl LatticeVector {
    pub fn zeros(n: usize) -> Result<Self> {
        check_capacity(n)?;
        Ok(LatticeVector {
            n,
            values: vec![0.0; 1 << n],
        })
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        check_capacity(n)?;
        if values.len() != 1 << n {
            return Err(Error::Length {
                expected: 1 << n,
                found: values.len(),
            });
        }
        Ok(LatticeVector { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(SubsetIndex) -> f64) -> Result<Self> {
        check_capacity(n)?;
        let values = (0..1u32 << n).map(|b| f(SubsetIndex(b))).collect();
        Ok(LatticeVector { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, s: SubsetIndex) -> f64 {
        self.values[s.index()]
    }

    pub fn set(&mut self, s: SubsetIndex, value: f64) {
        self.values[s.index()] = value;
    }

    pub fn full_mask(&self) -> SubsetIndex {
        SubsetIndex::full(self.n)
    }

    /// Position of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn dot(&self, other: &LatticeVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, factor: f64, other: &LatticeVector) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubsetIndex, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(k, &v)| (SubsetIndex(k as u32), v))
    }

    pub(crate) fn same_shape(&self, other: &LatticeVector) -> Result<()> {
        if self.n != other.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }
}

fn butterfly(values: &mut [f64], op: impl Fn(&mut f64, &mut f64)) {
    let len = values.len();
    let mut half = 1;
    while half < len {
        for block in values.chunks_exact_mut(half * 2) {
            let (lo, hi) = block.split_at_mut(half);
            for (without, with) in lo.iter_mut().zip(hi) {
                op(without, with);
            }
        }
        half <<= 1;
    }
}

/// In place: `g(S) = Σ_{T⊆S} (-1)^{|S|-|T|} f(T)`.
pub fn mobius_in_place(f: &mut LatticeVector) {
    butterfly(&mut f.values, |without, with| *with -= *without);
}

/// In place: `f(T) = Σ_{S⊆T} g(S)`, the inverse of [`mobius_in_place`].
pub fn zeta_in_place(g: &mut LatticeVector) {
    butterfly(&mut g.values, |without, with| *with += *without);
}

/// In place: `d(T) = Σ_{S⊇T} (-1)^{|S|-|T|} c(S)`, the transpose of the Möbius map.
pub fn adjoint_mobius_in_place(c: &mut LatticeVector) {
    butterfly(&mut c.values, |without, with| *without -= *with);
}

/// In place: `d(T) = Σ_{S⊇T} c(S)`, the transpose of the zeta map.
pub fn adjoint_zeta_in_place(c: &mut LatticeVector) {
    butterfly(&mut c.values, |without, with| *without += *with);
}

pub fn mobius_transform(f: &LatticeVector) -> Result<LatticeVector> {
    check_capacity(f.n)?;
    let mut g = f.clone();
    mobius_in_place(&mut g);
    Ok(g)
}

pub fn zeta_transform(g: &LatticeVector) -> Result<LatticeVector> {
    check_capacity(g.n)?;
    let mut f = g.clone();
    zeta_in_place(&mut f);
    Ok(f)
}

pub fn adjoint_mobius(c: &LatticeVector) -> Result<LatticeVector> {
    check_capacity(c.n)?;
    let mut d = c.clone();
    adjoint_mobius_in_place(&mut d);
    Ok(d)
}

pub fn adjoint_zeta(c: &LatticeVector) -> Result<LatticeVector> {
    check_capacity(c.n)?;
    let mut d = c.clone();
    adjoint_zeta_in_place(&mut d);
    Ok(d)
}

/// `u(T) = f(N \ T)`. Involutive.
pub fn complement_reindex(f: &LatticeVector) -> LatticeVector {
    let mut u = f.clone();
    complement_in_place(&mut u);
    u
}

pub(crate) fn complement_in_place(f: &mut LatticeVector) {
    // XOR with the full mask reverses ascending bitmask order.
    f.values.reverse();
}
