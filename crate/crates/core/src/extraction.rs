//! Salient-primitive selection and cross-model generalization metrics.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interactions::{EffectKind, InteractionSpectrum};
use crate::lattice::SubsetIndex;

/// Relative threshold `τ = 0.05 · max_S |I(S)|`.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Selection {
    /// Keep effects with `|I| > relative · max |I|` over the merged pool.
    Threshold { relative: f64 },
    /// Keep the `k` most salient effects, either from the merged pool or `k` of each kind.
    TopK { k: usize, per_kind: bool },
}

impl Default for Selection {
    fn default() -> Self {
        Selection::Threshold {
            relative: DEFAULT_RELATIVE_THRESHOLD,
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Selection::Threshold { relative } => write!(f, "threshold:{relative}"),
            Selection::TopK { k, per_kind: false } => write!(f, "topk:{k}"),
            Selection::TopK { k, per_kind: true } => write!(f, "topk-per-kind:{k}"),
        }
    }
}

impl FromStr for Selection {
    type Err = Error;

    /// `threshold`, `threshold:<fraction>`, `topk:<k>` or `topk-per-kind:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad selection rule {s:?}"));
        let (rule, arg) = match s.split_once(':') {
            Some((r, a)) => (r, Some(a)),
            None => (s, None),
        };
        match (rule, arg) {
            ("threshold", None) => Ok(Selection::default()),
            ("threshold", Some(a)) => {
                let relative: f64 = a.parse().map_err(|_| bad())?;
                if !(relative >= 0.0) {
                    return Err(bad());
                }
                Ok(Selection::Threshold { relative })
            }
            ("topk", Some(a)) | ("topk-per-kind", Some(a)) => {
                let k: usize = a.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(Selection::TopK {
                    k,
                    per_kind: rule == "topk-per-kind",
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Salient AND and OR primitives of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSet {
    pub model_id: String,
    pub n: usize,
    pub selection: Selection,
    /// Absolute threshold actually applied (threshold mode only).
    pub tau: Option<f64>,
    pub and_primitives: BTreeMap<SubsetIndex, f64>,
    pub or_primitives: BTreeMap<SubsetIndex, f64>,
}

impl PrimitiveSet {
    pub fn primitives(&self, kind: EffectKind) -> &BTreeMap<SubsetIndex, f64> {
        match kind {
            EffectKind::And => &self.and_primitives,
            EffectKind::Or => &self.or_primitives,
        }
    }

    pub fn subsets(&self, kind: EffectKind) -> BTreeSet<SubsetIndex> {
        self.primitives(kind).keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.and_primitives.len() + self.or_primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn and_subsets(&self) -> Vec<SubsetIndex> {
        self.and_primitives.keys().copied().collect()
    }

    pub fn or_subsets(&self) -> Vec<SubsetIndex> {
        self.or_primitives.keys().copied().collect()
    }
}

pub fn select_salient(spectrum: &InteractionSpectrum, rule: Selection) -> Result<PrimitiveSet> {
    let pool = spectrum.ranked_effects();
    let mut set = PrimitiveSet {
        model_id: spectrum.model_id.clone(),
        n: spectrum.n(),
        selection: rule,
        tau: None,
        and_primitives: BTreeMap::new(),
        or_primitives: BTreeMap::new(),
    };
    let mut insert = |kind: EffectKind, subset: SubsetIndex, value: f64| {
        match kind {
            EffectKind::And => set.and_primitives.insert(subset, value),
            EffectKind::Or => set.or_primitives.insert(subset, value),
        };
    };
    let tau = match rule {
        Selection::Threshold { relative } => {
            let tau = relative * spectrum.max_salience();
            for e in pool.iter().filter(|e| e.value.abs() > tau) {
                insert(e.kind, e.subset, e.value);
            }
            Some(tau)
        }
        Selection::TopK { k, per_kind: false } => {
            if k > pool.len() {
                return Err(Error::KOutOfRange { k, max: pool.len() });
            }
            for e in &pool[..k] {
                insert(e.kind, e.subset, e.value);
            }
            None
        }
        Selection::TopK { k, per_kind: true } => {
            let per_kind = pool.len() / 2;
            if k > per_kind {
                return Err(Error::KOutOfRange { k, max: per_kind });
            }
            for kind in [EffectKind::And, EffectKind::Or] {
                for e in pool.iter().filter(|e| e.kind == kind).take(k) {
                    insert(e.kind, e.subset, e.value);
                }
            }
            None
        }
    };
    set.tau = tau;
    Ok(set)
}

/// Signed strength sums of one model at one interaction order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderProfile {
    pub model_id: String,
    pub order: usize,
    pub shared_pos: f64,
    pub shared_neg: f64,
    pub all_pos: f64,
    pub all_neg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub model_ids: Vec<String>,
    pub shared_and: Vec<SubsetIndex>,
    pub shared_or: Vec<SubsetIndex>,
    pub s_and: Vec<f64>,
    pub s_or: Vec<f64>,
    pub order_profiles: Vec<OrderProfile>,
}

fn share_ratio(shared: usize, own: usize) -> f64 {
    if own == 0 {
        if shared == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        shared as f64 / own as f64
    }
}

/// Primitives common to every model, per kind, and each model's shared fraction.
pub fn generalization_metrics(sets: &[PrimitiveSet]) -> Result<GeneralizationReport> {
    if sets.is_empty() {
        return Err(Error::TooFewInputs { needed: 1, got: 0 });
    }
    let n = sets[0].n;
    if let Some(s) = sets.iter().find(|s| s.n != n) {
        return Err(Error::ShapeMismatch { expected: n, found: s.n });
    }
    let shared = |kind: EffectKind| -> BTreeSet<SubsetIndex> {
        let mut it = sets.iter().map(|s| s.subsets(kind));
        let first = it.next().unwrap_or_default();
        it.fold(first, |acc, s| acc.intersection(&s).copied().collect())
    };
    let shared_and = shared(EffectKind::And);
    let shared_or = shared(EffectKind::Or);
    Ok(GeneralizationReport {
        model_ids: sets.iter().map(|s| s.model_id.clone()).collect(),
        s_and: sets
            .iter()
            .map(|s| share_ratio(shared_and.len(), s.and_primitives.len()))
            .collect(),
        s_or: sets
            .iter()
            .map(|s| share_ratio(shared_or.len(), s.or_primitives.len()))
            .collect(),
        shared_and: shared_and.into_iter().collect(),
        shared_or: shared_or.into_iter().collect(),
        order_profiles: Vec::new(),
    })
}

/// Per model and order `o = 1..=n`: positive and negative strength of the shared
/// primitives and of all the model's salient primitives.
pub fn order_profile(
    spectra: &[InteractionSpectrum],
    sets: &[PrimitiveSet],
    shared: &GeneralizationReport,
) -> Vec<OrderProfile> {
    let mut rows = Vec::new();
    for (spectrum, set) in spectra.iter().zip(sets) {
        let n = spectrum.n();
        let mut sums = vec![[0.0f64; 4]; n + 1];
        for kind in [EffectKind::And, EffectKind::Or] {
            let effects = spectrum.effects(kind);
            for &s in set.primitives(kind).keys() {
                let v = effects.get(s);
                sums[s.order()][2] += v.max(0.0);
                sums[s.order()][3] += v.min(0.0);
            }
            let shared_set = match kind {
                EffectKind::And => &shared.shared_and,
                EffectKind::Or => &shared.shared_or,
            };
            for &s in shared_set {
                let v = effects.get(s);
                sums[s.order()][0] += v.max(0.0);
                sums[s.order()][1] += v.min(0.0);
            }
        }
        for (order, [sp, sn, ap, an]) in sums.into_iter().enumerate().skip(1) {
            rows.push(OrderProfile {
                model_id: spectrum.model_id.clone(),
                order,
                shared_pos: sp,
                shared_neg: sn,
                all_pos: ap,
                all_neg: an,
            });
        }
    }
    rows
}

/// [`generalization_metrics`] with the order profiles filled in.
pub fn generalization_report(
    spectra: &[InteractionSpectrum],
    sets: &[PrimitiveSet],
) -> Result<GeneralizationReport> {
    let mut report = generalization_metrics(sets)?;
    report.order_profiles = order_profile(spectra, sets, &report);
    Ok(report)
}
