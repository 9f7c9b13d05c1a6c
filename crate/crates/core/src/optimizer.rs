//! Projected subgradient descent over the decomposition parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::decomposition::{common_n, Coupling, Decomposition, InitScheme};
use crate::error::{Error, Result};
use crate::extraction::{select_salient, Selection};
use crate::interactions::{EffectKind, InteractionSpectrum, ValueTable};
use crate::lattice::{LatticeVector, SubsetIndex};
use crate::objective::{loss_joint, loss_subgradient, Gradients, LossConfig, LossMode, LossValue};
use crate::primal_dual::PrimalDual;

pub const DEFAULT_ITERATIONS: usize = 5000;
pub const DEFAULT_LR_FACTOR: f64 = 0.01;
pub const DEFAULT_LR_DECAY: f64 = 0.999;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
/// Primal scale per unit of `mean_i max_T |v_i(x_T)|`.
pub const DEFAULT_PRIMAL_DUAL_FACTOR: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Preconditioned primal-dual iteration; `learning_rate` sets the primal scale.
    #[default]
    PrimalDual,
    /// Heavy-ball subgradient steps with geometric decay.
    Subgradient,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::PrimalDual => "primal_dual",
            Method::Subgradient => "subgradient",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "primal_dual" => Ok(Method::PrimalDual),
            "subgradient" => Ok(Method::Subgradient),
            other => Err(Error::Config(format!("unknown optimizer method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Steps between comparisons.
    pub window: usize,
    /// Stop when the best loss improved by less than this fraction over one window.
    pub rel_tol: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            window: 100,
            rel_tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub iterations: usize,
    /// Subgradient step length; `None` means `0.01 · mean_i |v_i(x) − v_i(x_∅)|`.
    /// For the primal-dual method this is the primal scale instead, and `None`
    /// means `0.2 · mean_i max_T |v_i(x_T)|`.
    pub learning_rate: Option<f64>,
    pub lr_decay: f64,
    pub seed: u64,
    pub init: InitScheme,
    pub momentum: f64,
    pub log_every: usize,
    pub early_stop: Option<EarlyStop>,
    /// Scale every subgradient to unit Euclidean norm before the momentum update.
    pub normalize_gradient: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::default(),
            iterations: DEFAULT_ITERATIONS,
            learning_rate: None,
            lr_decay: DEFAULT_LR_DECAY,
            seed: 0,
            init: InitScheme::Zeros,
            momentum: DEFAULT_MOMENTUM,
            log_every: 100,
            early_stop: None,
            normalize_gradient: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate {lr} must be positive")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr decay {} outside (0, 1]", self.lr_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 {
                return Err(Error::Config("early-stop window must be >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: LossValue,
    pub max_gamma_hat: Vec<f64>,
    pub max_epsilon: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub records: Vec<TraceRecord>,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub decomposition: Decomposition,
    pub spectra: Vec<InteractionSpectrum>,
    pub trace: OptimizerTrace,
    pub initial_loss: LossValue,
    pub final_loss: LossValue,
}

fn default_learning_rate(tables: &[ValueTable], factor: f64) -> f64 {
    let mean_gap =
        tables.iter().map(|t| t.output_gap().abs()).sum::<f64>() / tables.len() as f64;
    if mean_gap > 0.0 {
        return factor * mean_gap;
    }
    let scale = tables.iter().map(|t| t.values.max_abs()).fold(0.0, f64::max);
    factor * if scale > 0.0 { scale } else { 1.0 }
}

fn default_primal_scale(tables: &[ValueTable]) -> f64 {
    let mean = tables.iter().map(|t| t.values.max_abs()).sum::<f64>() / tables.len() as f64;
    DEFAULT_PRIMAL_DUAL_FACTOR * if mean > 0.0 { mean } else { 1.0 }
}

/// Minimize the configured loss for the given tables (one input sample, `m` models).
///
/// Single-sparse mode decomposes every model on its own; joint modes share `γ̄`.
/// The returned parameters are the best iterate seen, so the final loss never
/// exceeds the initial one.
pub fn optimize(
    tables: &[ValueTable],
    loss_config: &LossConfig,
    opt_config: &OptimizerConfig,
) -> Result<Extraction> {
    common_n(tables)?;
    loss_config.validate()?;
    opt_config.validate()?;
    if loss_config.mode == LossMode::SingleSparse && tables.len() > 1 {
        return optimize_independent(tables, loss_config, opt_config);
    }
    run(tables, loss_config, opt_config, Coupling::Shared, opt_config.seed)
}

fn stream_seed(seed: u64, model: usize) -> u64 {
    seed.wrapping_add((model as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn optimize_independent(
    tables: &[ValueTable],
    loss_config: &LossConfig,
    opt_config: &OptimizerConfig,
) -> Result<Extraction> {
    let runs = tables
        .iter()
        .enumerate()
        .map(|(i, t)| {
            run(
                std::slice::from_ref(t),
                loss_config,
                opt_config,
                Coupling::Shared,
                stream_seed(opt_config.seed, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let n = tables[0].n();
    let mut decomposition = Decomposition::zeros(n, tables.len(), Coupling::Independent)?;
    for (i, r) in runs.iter().enumerate() {
        let d = &r.decomposition;
        decomposition.gamma_shared[i] = d.gamma_shared[0].clone();
        decomposition.gamma_hat[i] = d.gamma_hat[0].clone();
        decomposition.epsilon[i] = d.epsilon[0].clone();
        decomposition.tau_gamma[i] = d.tau_gamma[0];
        decomposition.tau_epsilon[i] = d.tau_epsilon[0];
    }

    let sum = |values: &mut dyn Iterator<Item = LossValue>| {
        values.fold(LossValue::default(), |a, b| LossValue {
            total: a.total + b.total,
            rowmax_and: a.rowmax_and + b.rowmax_and,
            rowmax_or: a.rowmax_or + b.rowmax_or,
            l1_and: a.l1_and + b.l1_and,
            l1_or: a.l1_or + b.l1_or,
        })
    };
    let mut trace = OptimizerTrace::default();
    for (k, rec) in runs[0].trace.records.iter().enumerate() {
        let at_step: Vec<&TraceRecord> = runs
            .iter()
            .filter_map(|r| r.trace.records.get(k))
            .filter(|r| r.step == rec.step)
            .collect();
        if at_step.len() != runs.len() {
            break;
        }
        trace.records.push(TraceRecord {
            step: rec.step,
            loss: sum(&mut at_step.iter().map(|r| r.loss)),
            max_gamma_hat: at_step.iter().map(|r| r.max_gamma_hat[0]).collect(),
            max_epsilon: at_step.iter().map(|r| r.max_epsilon[0]).collect(),
        });
    }

    Ok(Extraction {
        spectra: runs.iter().map(|r| r.spectra[0].clone()).collect(),
        initial_loss: sum(&mut runs.iter().map(|r| r.initial_loss)),
        final_loss: sum(&mut runs.iter().map(|r| r.final_loss)),
        decomposition,
        trace,
    })
}

struct Velocity {
    gamma_shared: Vec<LatticeVector>,
    gamma_hat: Vec<LatticeVector>,
    epsilon: Vec<LatticeVector>,
}

impl Velocity {
    fn update(&mut self, momentum: f64, g: &Gradients, scale: f64) {
        let pairs = self
            .gamma_shared
            .iter_mut()
            .zip(&g.gamma_shared)
            .chain(self.gamma_hat.iter_mut().zip(&g.gamma_hat))
            .chain(self.epsilon.iter_mut().zip(&g.epsilon));
        for (v, g) in pairs {
            v.scale(momentum);
            v.add_scaled(scale, g);
        }
    }

    fn apply(&self, decomp: &mut Decomposition, lr: f64) {
        let pairs = decomp
            .gamma_shared
            .iter_mut()
            .zip(&self.gamma_shared)
            .chain(decomp.gamma_hat.iter_mut().zip(&self.gamma_hat))
            .chain(decomp.epsilon.iter_mut().zip(&self.epsilon));
        for (p, v) in pairs {
            p.add_scaled(-lr, v);
        }
    }
}

fn record(step: usize, loss: LossValue, d: &Decomposition) -> TraceRecord {
    let m = d.model_count();
    TraceRecord {
        step,
        loss,
        max_gamma_hat: (0..m).map(|i| d.max_abs_gamma_hat(i)).collect(),
        max_epsilon: (0..m).map(|i| d.max_abs_epsilon(i)).collect(),
    }
}

enum Stepper {
    Subgradient { velocity: Velocity, lr: f64 },
    PrimalDual(PrimalDual),
}

fn run(
    tables: &[ValueTable],
    loss_config: &LossConfig,
    opt_config: &OptimizerConfig,
    coupling: Coupling,
    seed: u64,
) -> Result<Extraction> {
    let mut decomp = Decomposition::for_tables(tables, coupling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    decomp.initialize(opt_config.init, &mut rng)?;
    decomp.clamp();

    let mut stepper = match opt_config.method {
        Method::Subgradient => {
            let zero = LatticeVector::zeros(decomp.n)?;
            Stepper::Subgradient {
                velocity: Velocity {
                    gamma_shared: vec![zero.clone(); decomp.gamma_shared.len()],
                    gamma_hat: vec![zero.clone(); tables.len()],
                    epsilon: vec![zero; tables.len()],
                },
                lr: opt_config
                    .learning_rate
                    .unwrap_or_else(|| default_learning_rate(tables, DEFAULT_LR_FACTOR)),
            }
        }
        Method::PrimalDual => {
            let scale = opt_config
                .learning_rate
                .unwrap_or_else(|| default_primal_scale(tables));
            Stepper::PrimalDual(PrimalDual::new(&decomp, loss_config, scale)?)
        }
    };

    let mut trace = OptimizerTrace::default();
    let mut initial_loss = None;
    let mut best: Option<(f64, Decomposition, LossValue)> = None;
    let mut window_start_best = f64::INFINITY;
    let log_every = opt_config.log_every.max(1);

    let mut step = 0;
    loop {
        let (loss, grads) = match stepper {
            Stepper::Subgradient { .. } => {
                let (loss, grads) = loss_subgradient(tables, &decomp, loss_config)?;
                (loss, Some(grads))
            }
            Stepper::PrimalDual(_) => (loss_joint(&decomp.spectra(tables)?, loss_config)?, None),
        };
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        initial_loss.get_or_insert(loss);
        if best.as_ref().map_or(true, |(b, _, _)| loss.total < *b) {
            best = Some((loss.total, decomp.clone(), loss));
        }
        let done = step == opt_config.iterations;
        if step % log_every == 0 || done {
            trace.records.push(record(step, loss, &decomp));
        }
        if done {
            break;
        }
        if let Some(es) = opt_config.early_stop {
            if step % es.window == 0 {
                let b = best.as_ref().map_or(f64::INFINITY, |(b, _, _)| *b);
                if step > 0 && window_start_best - b <= es.rel_tol * window_start_best.abs() {
                    if trace.records.last().map(|r| r.step) != Some(step) {
                        trace.records.push(record(step, loss, &decomp));
                    }
                    break;
                }
                window_start_best = b;
            }
        }

        match (&mut stepper, grads) {
            (Stepper::Subgradient { velocity, lr }, Some(grads)) => {
                let scale = if opt_config.normalize_gradient {
                    let norm = grads.norm();
                    if norm > 0.0 {
                        1.0 / norm
                    } else {
                        0.0
                    }
                } else {
                    1.0
                };
                velocity.update(opt_config.momentum, &grads, scale);
                velocity.apply(&mut decomp, *lr);
                decomp.clamp();
                *lr *= opt_config.lr_decay;
            }
            (Stepper::PrimalDual(pd), _) => pd.step(&mut decomp, tables)?,
            (Stepper::Subgradient { .. }, None) => unreachable!("subgradient computed above"),
        }
        step += 1;
    }

    let (_, decomposition, final_loss) = best.expect("at least one evaluation");
    let spectra = decomposition.spectra(tables)?;
    Ok(Extraction {
        decomposition,
        spectra,
        trace,
        initial_loss: initial_loss.expect("at least one evaluation"),
        final_loss,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub trial_a: usize,
    pub trial_b: usize,
    pub model_id: String,
    pub s_and: f64,
    pub s_or: f64,
    pub merged: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub k: usize,
    pub trials: usize,
    pub pairs: Vec<PairOverlap>,
    pub mean_s_and: f64,
    pub mean_s_or: f64,
    pub mean_merged: f64,
}

fn overlap_ratio(a: &BTreeSet<SubsetIndex>, b: &BTreeSet<SubsetIndex>) -> f64 {
    if a.is_empty() {
        return if b.is_empty() { 1.0 } else { 0.0 };
    }
    a.intersection(b).count() as f64 / a.len() as f64
}

/// Re-run the extraction from `trials` seeds and measure how much the top-`k`
/// primitives agree between every pair of runs.
pub fn reinit_stability_experiment(
    tables: &[ValueTable],
    loss_config: &LossConfig,
    opt_config: &OptimizerConfig,
    trials: usize,
    k: usize,
) -> Result<StabilityReport> {
    if trials < 2 {
        return Err(Error::TooFewInputs { needed: 2, got: trials });
    }
    let runs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let cfg = OptimizerConfig {
                seed: opt_config.seed.wrapping_add(t as u64),
                ..opt_config.clone()
            };
            let ex = optimize(tables, loss_config, &cfg)?;
            ex.spectra
                .iter()
                .map(|s| select_salient(s, Selection::TopK { k, per_kind: false }))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    for a in 0..trials {
        for b in a + 1..trials {
            for (pa, pb) in runs[a].iter().zip(&runs[b]) {
                let (aa, ao) = (pa.subsets(EffectKind::And), pa.subsets(EffectKind::Or));
                let (ba, bo) = (pb.subsets(EffectKind::And), pb.subsets(EffectKind::Or));
                let shared = aa.intersection(&ba).count() + ao.intersection(&bo).count();
                let total = aa.len() + ao.len();
                pairs.push(PairOverlap {
                    trial_a: a,
                    trial_b: b,
                    model_id: pa.model_id.clone(),
                    s_and: overlap_ratio(&aa, &ba),
                    s_or: overlap_ratio(&ao, &bo),
                    merged: if total == 0 { 1.0 } else { shared as f64 / total as f64 },
                });
            }
        }
    }
    let mean = |f: fn(&PairOverlap) -> f64| pairs.iter().map(f).sum::<f64>() / pairs.len() as f64;
    Ok(StabilityReport {
        k,
        trials,
        mean_s_and: mean(|p| p.s_and),
        mean_s_or: mean(|p| p.s_or),
        mean_merged: mean(|p| p.merged),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            OptimizerConfig { iterations: 0, ..ok.clone() },
            OptimizerConfig { learning_rate: Some(0.0), ..ok.clone() },
            OptimizerConfig { lr_decay: 1.5, ..ok.clone() },
            OptimizerConfig { momentum: 1.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn zero_tables_stay_at_zero() {
        let t = ValueTable::new("z", LatticeVector::zeros(4).unwrap()).unwrap();
        let cfg = OptimizerConfig { iterations: 50, ..Default::default() };
        let ex = optimize(&[t.clone(), t], &LossConfig::default(), &cfg).unwrap();
        assert_eq!(ex.final_loss.total, 0.0);
        assert_eq!(ex.decomposition.gamma(0).unwrap().max_abs(), 0.0);
        assert_eq!(ex.decomposition.epsilon[1].max_abs(), 0.0);
    }

    #[test]
    fn stability_needs_two_trials() {
        let t = ValueTable::new("z", LatticeVector::zeros(2).unwrap()).unwrap();
        let r = reinit_stability_experiment(
            &[t],
            &LossConfig::default(),
            &OptimizerConfig::default(),
            1,
            2,
        );
        assert!(r.is_err());
    }
}
