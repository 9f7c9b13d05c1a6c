//! Synthetic value tables with known interaction structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::interactions::{or_interactions, EffectKind, InteractionSpectrum, ValueTable};
use crate::lattice::{check_capacity, mobius_in_place, LatticeVector, SubsetIndex};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub kind: EffectKind,
    pub subset: SubsetIndex,
    pub coefficient: f64,
}

/// Weighted sum of AND / OR clauses over binary variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BooleanFormula {
    pub terms: Vec<Term>,
}

impl BooleanFormula {
    pub fn and(mut self, vars: &[usize], coefficient: f64) -> Self {
        self.terms.push(Term {
            kind: EffectKind::And,
            subset: SubsetIndex::from_vars(vars),
            coefficient,
        });
        self
    }

    pub fn or(mut self, vars: &[usize], coefficient: f64) -> Self {
        self.terms.push(Term {
            kind: EffectKind::Or,
            subset: SubsetIndex::from_vars(vars),
            coefficient,
        });
        self
    }

    /// The terms of one kind only.
    pub fn only(&self, kind: EffectKind) -> BooleanFormula {
        BooleanFormula {
            terms: self.terms.iter().filter(|t| t.kind == kind).copied().collect(),
        }
    }

    pub fn evaluate(&self, mask: SubsetIndex) -> f64 {
        self.terms
            .iter()
            .filter(|t| match t.kind {
                EffectKind::And => t.subset.is_subset_of(mask),
                EffectKind::Or => t.subset.intersects(mask),
            })
            .map(|t| t.coefficient)
            .sum()
    }
}

/// `x1∧x2∧x3 + x2∧x3 + x3∧x4 + x4∨x5` over five variables (0-based bits 0..4).
pub fn toy_formula() -> BooleanFormula {
    BooleanFormula::default()
        .and(&[0, 1, 2], 1.0)
        .and(&[1, 2], 1.0)
        .and(&[2, 3], 1.0)
        .or(&[3, 4], 1.0)
}

/// Table of the formula on every mask; variable `i` is 1 iff `i ∈ T`.
pub fn eval_formula(formula: &BooleanFormula, n: usize) -> Result<ValueTable> {
    check_capacity(n)?;
    for t in &formula.terms {
        if !t.subset.in_range(n) {
            return Err(Error::SubsetOutOfRange { bits: t.subset.bits(), n });
        }
        if t.subset.is_empty() {
            return Err(Error::EmptyPrimitive);
        }
    }
    let values = LatticeVector::from_fn(n, |mask| formula.evaluate(mask))?;
    let mut table = ValueTable::new("formula", values)?;
    table.baseline_note = "boolean formula; masked variable = 0".into();
    Ok(table)
}

/// `γ_T = ½ (v_and(x_T) − v_or(x_T))`, the decomposition reproducing a known split.
pub fn gamma_for_split(v_and: &LatticeVector, v_or: &LatticeVector) -> LatticeVector {
    let mut g = v_and.clone();
    g.add_scaled(-1.0, v_or);
    g.scale(0.5);
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantingParams {
    pub n: usize,
    pub models: usize,
    pub shared_and: usize,
    pub shared_or: usize,
    /// Per model.
    pub distinct_and: usize,
    /// Per model.
    pub distinct_or: usize,
    pub magnitude_low: f64,
    pub magnitude_high: f64,
    pub min_order: usize,
    pub max_order: usize,
    /// Shared effects placed on single variables, alternating AND and OR,
    /// drawn before the order range applies.
    pub shared_singletons: usize,
    /// Each model scales every shared effect by a factor drawn from `1 ± shared_jitter`.
    pub shared_jitter: f64,
}

impl Default for PlantingParams {
    fn default() -> Self {
        PlantingParams {
            n: 8,
            models: 2,
            shared_and: 4,
            shared_or: 4,
            distinct_and: 1,
            distinct_or: 1,
            magnitude_low: 0.5,
            magnitude_high: 2.0,
            min_order: 2,
            max_order: 4,
            shared_singletons: 0,
            shared_jitter: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub kind: EffectKind,
    pub subset: SubsetIndex,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedInstance {
    pub params: PlantingParams,
    pub seed: u64,
    pub shared_effects: Vec<PlantedEffect>,
    pub distinct_effects: Vec<Vec<PlantedEffect>>,
    /// Per model, the factor applied to each shared effect.
    pub shared_scales: Vec<Vec<f64>>,
    /// Per model, the γ that recovers the planted spectrum exactly.
    pub planting_gamma: Vec<LatticeVector>,
    #[serde(skip)]
    pub tables: Vec<ValueTable>,
}

impl PlantedInstance {
    /// Shared effects at this model's scale, then its distinct effects.
    pub fn model_effects(&self, model: usize) -> Vec<PlantedEffect> {
        let scales = &self.shared_scales[model];
        self.shared_effects
            .iter()
            .zip(scales)
            .map(|(e, f)| PlantedEffect { value: e.value * f, ..*e })
            .chain(self.distinct_effects[model].iter().copied())
            .collect()
    }

    /// Planted spectrum of one model.
    pub fn planted_spectrum(&self, model: usize) -> Result<InteractionSpectrum> {
        let n = self.params.n;
        let mut and = LatticeVector::zeros(n)?;
        let mut or = LatticeVector::zeros(n)?;
        for e in self.model_effects(model) {
            let target = match e.kind {
                EffectKind::And => &mut and,
                EffectKind::Or => &mut or,
            };
            target.set(e.subset, target.get(e.subset) + e.value);
        }
        Ok(InteractionSpectrum {
            model_id: model_id(model),
            and_effects: and,
            or_effects: or,
        })
    }
}

fn model_id(model: usize) -> String {
    format!("model{}", model + 1)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Tables for `models` functions sharing some AND/OR effects and holding a few
/// private ones, all on distinct subsets.
pub fn plant_instance(params: &PlantingParams, seed: u64) -> Result<PlantedInstance> {
    let n = params.n;
    check_capacity(n)?;
    if params.models == 0 {
        return Err(Error::TooFewInputs { needed: 1, got: 0 });
    }
    if params.min_order == 0 || params.min_order > params.max_order || params.max_order > n {
        return Err(Error::Config(format!(
            "planting orders {}..={} invalid for n={n}",
            params.min_order, params.max_order
        )));
    }
    if !(params.magnitude_low > 0.0 && params.magnitude_low <= params.magnitude_high) {
        return Err(Error::Config("planting magnitudes must satisfy 0 < low <= high".into()));
    }
    if !(0.0..1.0).contains(&params.shared_jitter) {
        return Err(Error::Config(format!(
            "shared jitter {} outside [0, 1)",
            params.shared_jitter
        )));
    }
    let singleton_and = params.shared_singletons.div_ceil(2);
    let singleton_or = params.shared_singletons / 2;
    if params.shared_singletons > n
        || singleton_and > params.shared_and
        || singleton_or > params.shared_or
    {
        return Err(Error::Config(format!(
            "{} shared singletons do not fit {} AND / {} OR shared effects at n={n}",
            params.shared_singletons, params.shared_and, params.shared_or
        )));
    }
    let wanted = params.shared_and + params.shared_or - params.shared_singletons
        + params.models * (params.distinct_and + params.distinct_or);
    let mut pool_size: usize = (params.min_order..=params.max_order)
        .map(|o| binomial(n, o))
        .sum();
    if params.min_order == 1 {
        pool_size -= params.shared_singletons;
    }
    if wanted > pool_size {
        return Err(Error::Config(format!(
            "{wanted} planted effects exceed the {pool_size} free subsets of order {}..={}",
            params.min_order, params.max_order
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut singles: Vec<SubsetIndex> = (0..n).map(|v| SubsetIndex(1 << v)).collect();
    singles.shuffle(&mut rng);
    singles.truncate(params.shared_singletons);
    let mut pool: Vec<SubsetIndex> = (1u32..1 << n)
        .map(SubsetIndex)
        .filter(|s| (params.min_order..=params.max_order).contains(&s.order()))
        .filter(|s| !singles.contains(s))
        .collect();
    pool.shuffle(&mut rng);
    let mut singles = singles.into_iter();
    let mut subsets = pool.into_iter();
    let mut draw = |kind: EffectKind, single: bool, rng: &mut ChaCha8Rng| {
        let magnitude = rng.random_range(params.magnitude_low..=params.magnitude_high);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let source = if single { &mut singles } else { &mut subsets };
        PlantedEffect {
            kind,
            subset: source.next().expect("capacity checked"),
            value: sign * magnitude,
        }
    };

    let mut shared_effects = Vec::new();
    for i in 0..params.shared_and {
        shared_effects.push(draw(EffectKind::And, i < singleton_and, &mut rng));
    }
    for i in 0..params.shared_or {
        shared_effects.push(draw(EffectKind::Or, i < singleton_or, &mut rng));
    }
    let mut distinct_effects = Vec::new();
    for _ in 0..params.models {
        let mut own = Vec::new();
        for _ in 0..params.distinct_and {
            own.push(draw(EffectKind::And, false, &mut rng));
        }
        for _ in 0..params.distinct_or {
            own.push(draw(EffectKind::Or, false, &mut rng));
        }
        distinct_effects.push(own);
    }
    let shared_scales = (0..params.models)
        .map(|_| {
            (0..shared_effects.len())
                .map(|_| {
                    if params.shared_jitter > 0.0 {
                        1.0 + rng.random_range(-params.shared_jitter..=params.shared_jitter)
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect();

    let mut instance = PlantedInstance {
        params: params.clone(),
        seed,
        shared_effects,
        distinct_effects,
        shared_scales,
        planting_gamma: Vec::new(),
        tables: Vec::new(),
    };
    for model in 0..params.models {
        let planted = instance.planted_spectrum(model)?;
        let and_only = InteractionSpectrum {
            or_effects: LatticeVector::zeros(n)?,
            ..planted.clone()
        };
        let or_only = InteractionSpectrum {
            and_effects: LatticeVector::zeros(n)?,
            ..planted.clone()
        };
        let v_and = and_only.reconstruct();
        let v_or = or_only.reconstruct();
        let mut v = v_and.clone();
        v.add_scaled(1.0, &v_or);

        let gamma = gamma_for_split(&v_and, &v_or);
        check_round_trip(&v, &gamma, &planted)?;

        let mut table = ValueTable::new(model_id(model), v)?;
        table.baseline_note = format!("planted instance, seed {seed}");
        instance.tables.push(table);
        instance.planting_gamma.push(gamma);
    }
    Ok(instance)
}

fn check_round_trip(
    v: &LatticeVector,
    gamma: &LatticeVector,
    planted: &InteractionSpectrum,
) -> Result<()> {
    let mut v_and = v.clone();
    v_and.scale(0.5);
    let mut v_or = v_and.clone();
    v_and.add_scaled(1.0, gamma);
    v_or.add_scaled(-1.0, gamma);
    mobius_in_place(&mut v_and);
    let or = or_interactions(&v_or)?;
    let err = v_and
        .values()
        .iter()
        .zip(planted.and_effects.values())
        .chain(or.values().iter().zip(planted.or_effects.values()))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if err > 1e-10 {
        return Err(Error::Config(format!("planted round trip off by {err:e}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub order: usize,
    pub subsets: usize,
    pub expected: f64,
    pub and_variance: f64,
    pub or_variance: f64,
    pub and_ratio: f64,
    pub or_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub n: usize,
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<VarianceRow>,
}

pub const MIN_VARIANCE_TRIALS: usize = 1000;

const TRIAL_BLOCK: usize = 256;

#[derive(Clone)]
struct Moments {
    sum_and: Vec<f64>,
    sq_and: Vec<f64>,
    sum_or: Vec<f64>,
    sq_or: Vec<f64>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Moments {
            sum_and: vec![0.0; len],
            sq_and: vec![0.0; len],
            sum_or: vec![0.0; len],
            sq_or: vec![0.0; len],
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        for (a, b) in [
            (&mut self.sum_and, &other.sum_and),
            (&mut self.sq_and, &other.sq_and),
            (&mut self.sum_or, &other.sum_or),
            (&mut self.sq_or, &other.sq_or),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

/// Empirical variance of the AND/OR effects caused by i.i.d. `N(0, σ²)` noise on
/// every masked output, averaged by order, against the predicted `2^|T| σ²`.
pub fn noise_variance_experiment(
    n: usize,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<VarianceReport> {
    check_capacity(n)?;
    if trials < MIN_VARIANCE_TRIALS {
        return Err(Error::Config(format!(
            "variance experiment needs at least {MIN_VARIANCE_TRIALS} trials, got {trials}"
        )));
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| Error::Config(format!("noise sigma {sigma}: {e}")))?;
    let len = 1usize << n;
    let blocks = trials.div_ceil(TRIAL_BLOCK);

    let partials: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut m = Moments::zeros(len);
            let count = TRIAL_BLOCK.min(trials - b * TRIAL_BLOCK);
            let mut eps = LatticeVector::zeros(n).expect("capacity checked");
            for _ in 0..count {
                eps.values_mut().iter_mut().for_each(|x| *x = noise.sample(&mut rng));
                let or = or_interactions(&eps).expect("capacity checked");
                let mut and = eps.clone();
                mobius_in_place(&mut and);
                for k in 0..len {
                    let a = and.values()[k];
                    let o = or.values()[k];
                    m.sum_and[k] += a;
                    m.sq_and[k] += a * a;
                    m.sum_or[k] += o;
                    m.sq_or[k] += o * o;
                }
            }
            m
        })
        .collect();
    let total = partials
        .iter()
        .fold(Moments::zeros(len), |acc, p| acc.merge(p));

    let t = trials as f64;
    let variance = |sum: f64, sq: f64| (sq - sum * sum / t) / (t - 1.0);
    let ratio = |empirical: f64, expected: f64| {
        if expected == 0.0 {
            if empirical == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            empirical / expected
        }
    };

    let mut rows = Vec::new();
    for order in 0..=n {
        let members: Vec<usize> = (0..len).filter(|k| k.count_ones() as usize == order).collect();
        let mean_var = |sum: &[f64], sq: &[f64]| {
            members.iter().map(|&k| variance(sum[k], sq[k])).sum::<f64>() / members.len() as f64
        };
        let and_variance = mean_var(&total.sum_and, &total.sq_and);
        let or_variance = mean_var(&total.sum_or, &total.sq_or);
        let expected = (1u64 << order) as f64 * sigma * sigma;
        rows.push(VarianceRow {
            order,
            subsets: members.len(),
            expected,
            and_variance,
            or_variance,
            and_ratio: ratio(and_variance, expected),
            or_ratio: ratio(or_variance, expected),
        });
    }
    Ok(VarianceReport {
        n,
        sigma,
        trials,
        seed,
        rows,
    })
}

/// Additive table `v(S) = Σ_{i∈S} w_i` with weights drawn from `[1, 2]`.
///
/// Each singleton effect may be carried by AND or OR in any proportion at the
/// same sparse loss, so the minimizer is a whole face rather than a point.
pub fn degenerate_table(n: usize, seed: u64) -> Result<ValueTable> {
    check_capacity(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=2.0)).collect();
    let values = LatticeVector::from_fn(n, |s| s.vars().map(|i| weights[i]).sum())?;
    ValueTable::new("degenerate", values)
}

/// Subsets used by a planted instance for one kind, across all models.
pub fn planted_subsets(instance: &PlantedInstance, kind: EffectKind) -> BTreeSet<SubsetIndex> {
    (0..instance.params.models)
        .flat_map(|m| instance.model_effects(m))
        .filter(|e| e.kind == kind)
        .map(|e| e.subset)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_formula_values() {
        let t = eval_formula(&toy_formula(), 5).unwrap();
        assert_eq!(t.values.get(SubsetIndex::from_vars(&[2, 3])), 2.0);
        assert_eq!(t.values.get(SubsetIndex::full(5)), 4.0);
        assert_eq!(t.values.get(SubsetIndex::from_vars(&[2, 3, 4])), 2.0);
        assert_eq!(t.values.get(SubsetIndex::EMPTY), 0.0);
    }

    #[test]
    fn empty_formula_is_zero() {
        let t = eval_formula(&BooleanFormula::default(), 3).unwrap();
        assert!(t.values.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn formula_range_checked() {
        let f = BooleanFormula::default().and(&[5], 1.0);
        assert!(matches!(eval_formula(&f, 4), Err(Error::SubsetOutOfRange { .. })));
    }

    #[test]
    fn single_planted_primitives() {
        let and = BooleanFormula::default().and(&[0, 1], 1.0);
        let t = eval_formula(&and, 3).unwrap();
        for (s, v) in t.values.iter() {
            assert_eq!(v, if s.contains(0) && s.contains(1) { 1.0 } else { 0.0 });
        }
        let or = BooleanFormula::default().or(&[0, 1], 1.0);
        let t = eval_formula(&or, 3).unwrap();
        for (s, v) in t.values.iter() {
            assert_eq!(v, if s.contains(0) || s.contains(1) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn planted_instance_layout() {
        let inst = plant_instance(&PlantingParams::default(), 3).unwrap();
        assert_eq!(inst.tables.len(), 2);
        assert_eq!(inst.shared_effects.len(), 8);
        let mut seen = BTreeSet::new();
        for m in 0..2 {
            assert_eq!(inst.distinct_effects[m].len(), 2);
            for e in &inst.distinct_effects[m] {
                assert!(seen.insert(e.subset));
            }
        }
        for e in &inst.shared_effects {
            assert!(seen.insert(e.subset));
            assert!((0.5..=2.0).contains(&e.value.abs()));
        }
    }

    #[test]
    fn planting_capacity() {
        let p = PlantingParams {
            n: 3,
            min_order: 1,
            max_order: 1,
            ..PlantingParams::default()
        };
        assert!(plant_instance(&p, 0).is_err());
    }

    #[test]
    fn variance_needs_trials() {
        assert!(noise_variance_experiment(3, 1.0, 10, 0).is_err());
    }

    #[test]
    fn zero_noise_zero_variance() {
        let r = noise_variance_experiment(3, 0.0, 1000, 0).unwrap();
        for row in r.rows {
            assert_eq!(row.and_variance, 0.0);
            assert_eq!(row.or_variance, 0.0);
        }
    }
}
