//! Sparsity losses over interaction spectra and their subgradients.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::interactions::{adjoint_or_interactions, InteractionSpectrum, ValueTable};
use crate::lattice::{adjoint_mobius_in_place, LatticeVector};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `‖I_and‖₁ + ‖I_or‖₁` per model, models decomposed independently.
    SingleSparse,
    /// `Σ_T max_i |I^(i)(T)|` over both kinds.
    JointRowmax,
    /// Rowmax plus `α` times the plain ℓ1 of every model.
    JointFull,
}

impl LossMode {
    pub fn is_joint(self) -> bool {
        !matches!(self, LossMode::SingleSparse)
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::SingleSparse => "single_sparse",
            LossMode::JointRowmax => "joint_rowmax",
            LossMode::JointFull => "joint_full",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "single_sparse" => Ok(LossMode::SingleSparse),
            "joint_rowmax" => Ok(LossMode::JointRowmax),
            "joint_full" => Ok(LossMode::JointFull),
            other => Err(Error::Config(format!("unknown loss mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub mode: LossMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: DEFAULT_ALPHA,
            mode: LossMode::JointFull,
        }
    }
}

impl LossConfig {
    pub fn new(mode: LossMode, alpha: f64) -> Result<Self> {
        let c = LossConfig { alpha, mode };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub rowmax_and: f64,
    pub rowmax_or: f64,
    pub l1_and: f64,
    pub l1_or: f64,
}

/// `‖I_and‖₁ + ‖I_or‖₁` over all `2·2^n` effects.
pub fn loss_single(spectrum: &InteractionSpectrum) -> f64 {
    spectrum.and_effects.l1_norm() + spectrum.or_effects.l1_norm()
}

fn rowmax_l1<'a>(columns: impl Iterator<Item = &'a LatticeVector> + Clone, len: usize) -> f64 {
    (0..len)
        .map(|t| columns.clone().fold(0.0f64, |m, c| m.max(c.values()[t].abs())))
        .sum()
}

fn check_spectra(spectra: &[InteractionSpectrum]) -> Result<usize> {
    let first = spectra
        .first()
        .ok_or(Error::TooFewInputs { needed: 1, got: 0 })?;
    let n = first.n();
    for s in spectra {
        if s.n() != n {
            return Err(Error::ShapeMismatch { expected: n, found: s.n() });
        }
    }
    Ok(n)
}

pub fn loss_joint(spectra: &[InteractionSpectrum], config: &LossConfig) -> Result<LossValue> {
    let n = check_spectra(spectra)?;
    let len = 1usize << n;
    let rowmax_and = rowmax_l1(spectra.iter().map(|s| &s.and_effects), len);
    let rowmax_or = rowmax_l1(spectra.iter().map(|s| &s.or_effects), len);
    let l1_and: f64 = spectra.iter().map(|s| s.and_effects.l1_norm()).sum();
    let l1_or: f64 = spectra.iter().map(|s| s.or_effects.l1_norm()).sum();
    let total = match config.mode {
        LossMode::SingleSparse => l1_and + l1_or,
        LossMode::JointRowmax => rowmax_and + rowmax_or,
        LossMode::JointFull => rowmax_and + rowmax_or + config.alpha * (l1_and + l1_or),
    };
    Ok(LossValue {
        total,
        rowmax_and,
        rowmax_or,
        l1_and,
        l1_or,
    })
}

/// Subgradient of the loss with respect to every decomposition parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub gamma_shared: Vec<LatticeVector>,
    pub gamma_hat: Vec<LatticeVector>,
    pub epsilon: Vec<LatticeVector>,
}

impl Gradients {
    /// Euclidean norm over every parameter block.
    pub fn norm(&self) -> f64 {
        self.gamma_shared
            .iter()
            .chain(&self.gamma_hat)
            .chain(&self.epsilon)
            .map(|g| g.dot(g))
            .sum::<f64>()
            .sqrt()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `∂L/∂I` for one kind of effect across all models.
fn effect_weights(columns: &[&LatticeVector], config: &LossConfig) -> Vec<LatticeVector> {
    let mut weights: Vec<LatticeVector> = columns.iter().map(|c| (*c).clone()).collect();
    let len = weights[0].len();
    match config.mode {
        LossMode::SingleSparse => {
            for w in &mut weights {
                w.values_mut().iter_mut().for_each(|x| *x = sign(*x));
            }
        }
        LossMode::JointRowmax | LossMode::JointFull => {
            let alpha = if config.mode == LossMode::JointFull {
                config.alpha
            } else {
                0.0
            };
            for t in 0..len {
                let max = columns.iter().fold(0.0f64, |m, c| m.max(c.values()[t].abs()));
                let tied = columns
                    .iter()
                    .filter(|c| max > 0.0 && c.values()[t].abs() == max)
                    .count();
                for (w, c) in weights.iter_mut().zip(columns) {
                    let v = c.values()[t];
                    let s = sign(v);
                    let share = if tied > 0 && v.abs() == max {
                        s / tied as f64
                    } else {
                        0.0
                    };
                    w.values_mut()[t] = share + alpha * s;
                }
            }
        }
    }
    weights
}

/// Loss value and one valid subgradient at the current parameters.
pub fn loss_subgradient(
    tables: &[ValueTable],
    decomp: &Decomposition,
    config: &LossConfig,
) -> Result<(LossValue, Gradients)> {
    if tables.len() != decomp.model_count() {
        return Err(Error::Config(format!(
            "{} tables for a decomposition of {} models",
            tables.len(),
            decomp.model_count()
        )));
    }
    let spectra = decomp.spectra(tables)?;
    let loss = loss_joint(&spectra, config)?;

    let and_cols: Vec<&LatticeVector> = spectra.iter().map(|s| &s.and_effects).collect();
    let or_cols: Vec<&LatticeVector> = spectra.iter().map(|s| &s.or_effects).collect();
    let w_and = effect_weights(&and_cols, config);
    let w_or = effect_weights(&or_cols, config);

    let n = decomp.n;
    let mut gamma_shared = vec![LatticeVector::zeros(n)?; decomp.gamma_shared.len()];
    let mut gamma_hat = Vec::with_capacity(tables.len());
    let mut epsilon = Vec::with_capacity(tables.len());
    for (i, (wa, wo)) in w_and.into_iter().zip(w_or).enumerate() {
        let mut g_and = wa;
        adjoint_mobius_in_place(&mut g_and);
        let g_or = adjoint_or_interactions(&wo);

        // v_and = ½(v − ε) + γ,  v_or = ½(v − ε) − γ
        let mut g_gamma = g_and.clone();
        g_gamma.add_scaled(-1.0, &g_or);
        let mut g_eps = g_and;
        g_eps.add_scaled(1.0, &g_or);
        g_eps.scale(-0.5);

        gamma_shared[decomp.base_index(i)].add_scaled(1.0, &g_gamma);
        gamma_hat.push(g_gamma);
        epsilon.push(g_eps);
    }
    Ok((
        loss,
        Gradients {
            gamma_shared,
            gamma_hat,
            epsilon,
        },
    ))
}
