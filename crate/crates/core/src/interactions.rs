//! AND/OR interaction spectra, output reconstruction and Shapley allocation.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{
    adjoint_mobius_in_place, complement_in_place, mobius_in_place, zeta_in_place, LatticeVector,
    SubsetIndex,
};

/// Outputs of one model on all `2^n` masked variants of one input sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub model_id: String,
    pub values: LatticeVector,
    pub baseline_note: String,
}

impl ValueTable {
    pub fn new(model_id: impl Into<String>, values: LatticeVector) -> Result<Self> {
        if let Some(mask) = values.first_non_finite() {
            return Err(Error::Config(format!("non-finite table value at mask {mask}")));
        }
        Ok(ValueTable {
            model_id: model_id.into(),
            values,
            baseline_note: String::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.n()
    }

    /// `v(x_∅)`, the output with every variable masked.
    pub fn empty_output(&self) -> f64 {
        self.values.get(SubsetIndex::EMPTY)
    }

    /// `v(x)`, the output on the unmasked sample.
    pub fn full_output(&self) -> f64 {
        self.values.get(self.values.full_mask())
    }

    /// `v(x) - v(x_∅)`
    pub fn output_gap(&self) -> f64 {
        self.full_output() - self.empty_output()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    And,
    Or,
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectKind::And => f.write_str("and"),
            EffectKind::Or => f.write_str("or"),
        }
    }
}

/// One non-empty interaction with its effect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub kind: EffectKind,
    pub subset: SubsetIndex,
    pub value: f64,
}

/// Descending `|value|`, then AND before OR, then ascending bitmask.
pub fn salience_order(a: &Effect, b: &Effect) -> Ordering {
    b.value
        .abs()
        .total_cmp(&a.value.abs())
        .then(a.kind.cmp(&b.kind))
        .then(a.subset.cmp(&b.subset))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpectrum {
    pub model_id: String,
    pub and_effects: LatticeVector,
    pub or_effects: LatticeVector,
}

impl InteractionSpectrum {
    /// Spectrum of the split `v = v_and + v_or`.
    pub fn from_parts(
        model_id: impl Into<String>,
        v_and: &LatticeVector,
        v_or: &LatticeVector,
    ) -> Result<Self> {
        v_and.same_shape(v_or)?;
        Ok(InteractionSpectrum {
            model_id: model_id.into(),
            and_effects: and_interactions(v_and)?,
            or_effects: or_interactions(v_or)?,
        })
    }

    /// Plain Harsanyi dividends: `v_and = v`, `v_or = 0`.
    pub fn harsanyi(table: &ValueTable) -> Result<Self> {
        let zero = LatticeVector::zeros(table.n())?;
        Self::from_parts(table.model_id.clone(), &table.values, &zero)
    }

    pub fn n(&self) -> usize {
        self.and_effects.n()
    }

    pub fn effects(&self, kind: EffectKind) -> &LatticeVector {
        match kind {
            EffectKind::And => &self.and_effects,
            EffectKind::Or => &self.or_effects,
        }
    }

    /// `v_and(x_∅) + v_or(x_∅)`
    pub fn offset(&self) -> f64 {
        self.and_effects.get(SubsetIndex::EMPTY) + self.or_effects.get(SubsetIndex::EMPTY)
    }

    /// All non-empty AND and OR effects, most salient first.
    pub fn ranked_effects(&self) -> Vec<Effect> {
        let mut pool: Vec<Effect> = [EffectKind::And, EffectKind::Or]
            .into_iter()
            .flat_map(|kind| {
                self.effects(kind)
                    .iter()
                    .skip(1)
                    .map(move |(subset, value)| Effect { kind, subset, value })
            })
            .collect();
        pool.sort_by(salience_order);
        pool
    }

    /// Largest `|I|` over the non-empty AND and OR effects.
    pub fn max_salience(&self) -> f64 {
        let and = self.and_effects.values()[1..].iter();
        let or = self.or_effects.values()[1..].iter();
        and.chain(or).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy keeping the offsets and only the listed non-empty effects.
    pub fn truncated(&self, omega_and: &[SubsetIndex], omega_or: &[SubsetIndex]) -> Result<Self> {
        let n = self.n();
        let keep = |src: &LatticeVector, omega: &[SubsetIndex]| -> Result<LatticeVector> {
            let mut out = LatticeVector::zeros(n)?;
            out.set(SubsetIndex::EMPTY, src.get(SubsetIndex::EMPTY));
            for &s in omega {
                validate_primitive(s, n)?;
                out.set(s, src.get(s));
            }
            Ok(out)
        };
        Ok(InteractionSpectrum {
            model_id: self.model_id.clone(),
            and_effects: keep(&self.and_effects, omega_and)?,
            or_effects: keep(&self.or_effects, omega_or)?,
        })
    }

    /// Model output on every mask implied by the spectrum.
    pub fn reconstruct(&self) -> LatticeVector {
        let mut out = self.and_effects.clone();
        zeta_in_place(&mut out);

        // Σ_{S∩T≠∅} I_or(S) = Σ_{S≠∅} I_or(S) − Σ_{∅≠S⊆N\T} I_or(S)
        let mut or_part = self.or_effects.clone();
        let offset = or_part.get(SubsetIndex::EMPTY);
        or_part.set(SubsetIndex::EMPTY, 0.0);
        let total: f64 = or_part.values().iter().sum();
        zeta_in_place(&mut or_part);
        complement_in_place(&mut or_part);

        for (o, r) in out.values_mut().iter_mut().zip(or_part.values()) {
            *o += offset + total - r;
        }
        out
    }
}

fn validate_primitive(s: SubsetIndex, n: usize) -> Result<()> {
    if !s.in_range(n) {
        return Err(Error::SubsetOutOfRange { bits: s.bits(), n });
    }
    if s.is_empty() {
        return Err(Error::EmptyPrimitive);
    }
    Ok(())
}

/// Harsanyi dividends `I_and(S) = Σ_{T⊆S} (-1)^{|S|-|T|} v_and(x_T)`.
pub fn and_interactions(v_and: &LatticeVector) -> Result<LatticeVector> {
    crate::lattice::mobius_transform(v_and)
}

/// `I_or(S) = -Σ_{T⊆S} (-1)^{|S|-|T|} v_or(x_{N\T})` for `S ≠ ∅`, and
/// `I_or(∅) = v_or(x_∅)`.
pub fn or_interactions(v_or: &LatticeVector) -> Result<LatticeVector> {
    let mut out = crate::lattice::complement_reindex(v_or);
    mobius_in_place(&mut out);
    out.scale(-1.0);
    out.set(SubsetIndex::EMPTY, v_or.get(SubsetIndex::EMPTY));
    Ok(out)
}

/// Transpose of the linear map `v_or ↦ I_or` implemented by [`or_interactions`].
pub fn adjoint_or_interactions(c: &LatticeVector) -> LatticeVector {
    let mut d = c.clone();
    let at_empty = d.get(SubsetIndex::EMPTY);
    d.set(SubsetIndex::EMPTY, 0.0);
    adjoint_mobius_in_place(&mut d);
    complement_in_place(&mut d);
    d.scale(-1.0);
    let e = d.get(SubsetIndex::EMPTY);
    d.set(SubsetIndex::EMPTY, e + at_empty);
    d
}

/// `Σ_{S⊆T} I_and(S) + Σ_{S∩T≠∅ or S=∅} I_or(S)`, evaluated term by term.
pub fn universal_match(spectrum: &InteractionSpectrum, t: SubsetIndex) -> Result<f64> {
    let n = spectrum.n();
    if !t.in_range(n) {
        return Err(Error::SubsetOutOfRange { bits: t.bits(), n });
    }
    let and: f64 = spectrum
        .and_effects
        .iter()
        .filter(|(s, _)| s.is_subset_of(t))
        .map(|(_, v)| v)
        .sum();
    let or: f64 = spectrum
        .or_effects
        .iter()
        .filter(|(s, _)| s.is_empty() || s.intersects(t))
        .map(|(_, v)| v)
        .sum();
    Ok(and + or)
}

/// Approximation of `v(x_T)` from the offsets and the primitives in the two sets.
pub fn truncated_match(
    spectrum: &InteractionSpectrum,
    t: SubsetIndex,
    omega_and: &[SubsetIndex],
    omega_or: &[SubsetIndex],
) -> Result<f64> {
    let n = spectrum.n();
    if !t.in_range(n) {
        return Err(Error::SubsetOutOfRange { bits: t.bits(), n });
    }
    let mut total = spectrum.offset();
    for &s in omega_and {
        validate_primitive(s, n)?;
        if s.is_subset_of(t) {
            total += spectrum.and_effects.get(s);
        }
    }
    for &s in omega_or {
        validate_primitive(s, n)?;
        if s.intersects(t) {
            total += spectrum.or_effects.get(s);
        }
    }
    Ok(total)
}

/// Per-mask `|v(x_T) − v_approx(x_T)|`.
pub fn matching_error(
    table: &ValueTable,
    spectrum: &InteractionSpectrum,
    omega_and: &[SubsetIndex],
    omega_or: &[SubsetIndex],
) -> Result<LatticeVector> {
    table.values.same_shape(&spectrum.and_effects)?;
    let approx = spectrum.truncated(omega_and, omega_or)?.reconstruct();
    let mut err = table.values.clone();
    for (e, a) in err.values_mut().iter_mut().zip(approx.values()) {
        *e = (*e - a).abs();
    }
    Ok(err)
}

/// Share of `v(N) − v(∅)` explained by the `k` most salient effects.
pub fn matching_precision(
    table: &ValueTable,
    spectrum: &InteractionSpectrum,
    k: usize,
) -> Result<f64> {
    table.values.same_shape(&spectrum.and_effects)?;
    let pool = spectrum.ranked_effects();
    if k == 0 || k > pool.len() {
        return Err(Error::KOutOfRange { k, max: pool.len() });
    }
    let top = &pool[..k];
    let mass: f64 = top.iter().map(|e| e.value.abs()).sum();
    let signed: f64 = top.iter().map(|e| e.value).sum();
    let residual = (table.output_gap() - signed).abs();
    let denom = mass + residual;
    Ok(if denom == 0.0 { 1.0 } else { mass / denom })
}

/// Shapley values as the uniform split of each Harsanyi dividend among its members.
pub fn shapley_values(table: &ValueTable) -> Result<Vec<f64>> {
    let n = table.n();
    let dividends = and_interactions(&table.values)?;
    let mut phi = vec![0.0; n];
    for (s, value) in dividends.iter().skip(1) {
        let share = value / s.order() as f64;
        for i in s.vars() {
            phi[i] += share;
        }
    }
    Ok(phi)
}
