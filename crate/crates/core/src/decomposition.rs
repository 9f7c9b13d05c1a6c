//! Learnable split of each model's outputs into AND and OR parts plus a bounded error.
//!
//! For model `i` and mask `T`:
//!
//! ```text
//! γ_T        = γ̄_T + γ̂_T        (γ̄ shared across models, γ̂ clamped to ±τ_γ)
//! v_and(x_T) = ½ (v(x_T) − ε_T) + γ_T
//! v_or(x_T)  = ½ (v(x_T) − ε_T) − γ_T
//! ```
//!
//! with `|ε_T| ≤ τ_ε`, so that `v_and + v_or + ε = v` on every mask.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interactions::{InteractionSpectrum, ValueTable};
use crate::lattice::LatticeVector;

/// Fraction of the mean output gap allowed for the model-specific decomposition.
pub const GAMMA_BOUND_FACTOR: f64 = 0.5;
/// Fraction of the output gap allowed for the per-mask error term.
pub const EPSILON_BOUND_FACTOR: f64 = 0.02;

/// Whether the base decomposition `γ̄` is one vector shared by all models or one per model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Shared,
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    Zeros,
    Gaussian { sigma: f64 },
    Uniform { low: f64, high: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Zeros
    }
}

impl InitScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitScheme::Zeros => Ok(()),
            InitScheme::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            InitScheme::Uniform { low, high } if low < high && low.is_finite() && high.is_finite() => {
                Ok(())
            }
            other => Err(Error::Config(format!("invalid init scheme {other:?}"))),
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Zeros => f.write_str("zeros"),
            InitScheme::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            InitScheme::Uniform { low, high } => write!(f, "uniform:{low},{high}"),
        }
    }
}

/// `zeros`, `gaussian:<sigma>` or `uniform:<low>,<high>`.
impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown init scheme {s:?}"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let scheme = match name.trim() {
            "zeros" | "zero" if arg.is_empty() => InitScheme::Zeros,
            "gaussian" | "normal" => InitScheme::Gaussian { sigma: num(arg)? },
            "uniform" => {
                let (lo, hi) = arg.split_once(',').ok_or_else(bad)?;
                InitScheme::Uniform { low: num(lo)?, high: num(hi)? }
            }
            _ => return Err(bad()),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n: usize,
    pub coupling: Coupling,
    pub gamma_shared: Vec<LatticeVector>,
    pub gamma_hat: Vec<LatticeVector>,
    pub epsilon: Vec<LatticeVector>,
    pub tau_gamma: Vec<f64>,
    pub tau_epsilon: Vec<f64>,
}

impl Decomposition {
    pub fn zeros(n: usize, models: usize, coupling: Coupling) -> Result<Self> {
        if models == 0 {
            return Err(Error::TooFewInputs { needed: 1, got: 0 });
        }
        let zero = LatticeVector::zeros(n)?;
        let bases = match coupling {
            Coupling::Shared => 1,
            Coupling::Independent => models,
        };
        Ok(Decomposition {
            n,
            coupling,
            gamma_shared: vec![zero.clone(); bases],
            gamma_hat: vec![zero.clone(); models],
            epsilon: vec![zero; models],
            tau_gamma: vec![0.0; models],
            tau_epsilon: vec![0.0; models],
        })
    }

    /// Zero decomposition with bounds derived from the tables.
    pub fn for_tables(tables: &[ValueTable], coupling: Coupling) -> Result<Self> {
        let n = common_n(tables)?;
        let mut d = Self::zeros(n, tables.len(), coupling)?;
        let samples: Vec<Vec<&ValueTable>> = tables.iter().map(|t| vec![t]).collect();
        let (tau_gamma, tau_epsilon) = compute_bounds(&samples)?;
        d.tau_gamma = tau_gamma;
        d.tau_epsilon = tau_epsilon;
        Ok(d)
    }

    pub fn model_count(&self) -> usize {
        self.gamma_hat.len()
    }

    pub(crate) fn base_index(&self, model: usize) -> usize {
        match self.coupling {
            Coupling::Shared => 0,
            Coupling::Independent => model,
        }
    }

    /// Effective `γ^(i) = γ̄ + γ̂^(i)`.
    pub fn gamma(&self, model: usize) -> Result<LatticeVector> {
        self.check_model(model)?;
        let mut g = self.gamma_shared[self.base_index(model)].clone();
        g.add_scaled(1.0, &self.gamma_hat[model]);
        Ok(g)
    }

    fn check_model(&self, model: usize) -> Result<()> {
        if model >= self.model_count() {
            return Err(Error::ModelIndex {
                index: model,
                count: self.model_count(),
            });
        }
        Ok(())
    }

    /// Set `γ̄` (or model `i`'s base) so that the model's effective γ equals `gamma`, zeroing `γ̂`.
    pub fn set_gamma(&mut self, model: usize, gamma: LatticeVector) -> Result<()> {
        self.check_model(model)?;
        if gamma.n() != self.n {
            return Err(Error::ShapeMismatch { expected: self.n, found: gamma.n() });
        }
        let base = self.base_index(model);
        self.gamma_shared[base] = gamma;
        self.gamma_hat[model] = LatticeVector::zeros(self.n)?;
        Ok(())
    }

    pub fn split_outputs(
        &self,
        table: &ValueTable,
        model: usize,
    ) -> Result<(LatticeVector, LatticeVector)> {
        self.check_model(model)?;
        if table.n() != self.n {
            return Err(Error::ShapeMismatch { expected: self.n, found: table.n() });
        }
        let gamma = self.gamma(model)?;
        let eps = &self.epsilon[model];
        let mut v_and = table.values.clone();
        let mut v_or = table.values.clone();
        for (k, (a, o)) in v_and
            .values_mut()
            .iter_mut()
            .zip(v_or.values_mut())
            .enumerate()
        {
            let half = 0.5 * (*a - eps.values()[k]);
            *a = half + gamma.values()[k];
            *o = half - gamma.values()[k];
        }
        Ok((v_and, v_or))
    }

    pub fn spectrum(&self, table: &ValueTable, model: usize) -> Result<InteractionSpectrum> {
        let (v_and, v_or) = self.split_outputs(table, model)?;
        InteractionSpectrum::from_parts(table.model_id.clone(), &v_and, &v_or)
    }

    pub fn spectra(&self, tables: &[ValueTable]) -> Result<Vec<InteractionSpectrum>> {
        tables
            .iter()
            .enumerate()
            .map(|(i, t)| self.spectrum(t, i))
            .collect()
    }

    /// Project `γ̂` and `ε` onto their boxes.
    pub fn clamp(&mut self) {
        for i in 0..self.model_count() {
            clamp_box(&mut self.gamma_hat[i], self.tau_gamma[i]);
            clamp_box(&mut self.epsilon[i], self.tau_epsilon[i]);
        }
    }

    /// Randomize the base decomposition `γ̄`; `γ̂` and `ε` stay at zero.
    pub fn initialize<R: Rng + ?Sized>(&mut self, scheme: InitScheme, rng: &mut R) -> Result<()> {
        match scheme {
            InitScheme::Zeros => {}
            InitScheme::Gaussian { sigma } => {
                let dist = Normal::new(0.0, sigma)
                    .map_err(|e| Error::Config(format!("gaussian init: {e}")))?;
                for g in &mut self.gamma_shared {
                    g.values_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
                }
            }
            InitScheme::Uniform { low, high } => {
                let dist = Uniform::new(low, high)
                    .map_err(|e| Error::Config(format!("uniform init: {e}")))?;
                for g in &mut self.gamma_shared {
                    g.values_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
                }
            }
        }
        Ok(())
    }

    pub fn max_abs_gamma_hat(&self, model: usize) -> f64 {
        self.gamma_hat[model].max_abs()
    }

    pub fn max_abs_epsilon(&self, model: usize) -> f64 {
        self.epsilon[model].max_abs()
    }
}

/// Functional form of [`Decomposition::clamp`].
pub fn clamp_parameters(decomp: &Decomposition) -> Decomposition {
    let mut d = decomp.clone();
    d.clamp();
    d
}

fn clamp_box(v: &mut LatticeVector, bound: f64) {
    for x in v.values_mut() {
        if x.abs() > bound {
            *x = bound * x.signum();
        }
    }
}

pub(crate) fn common_n(tables: &[ValueTable]) -> Result<usize> {
    let first = tables
        .first()
        .ok_or(Error::TooFewInputs { needed: 1, got: 0 })?;
    let n = first.n();
    for t in tables {
        if t.n() != n {
            return Err(Error::ShapeMismatch { expected: n, found: t.n() });
        }
    }
    Ok(n)
}

/// Per-model `(τ_γ, τ_ε)`.
///
/// `samples[i]` lists model `i`'s tables over input samples; the first entry is
/// the sample being decomposed. `τ_γ` averages the output gap over all of them,
/// `τ_ε` uses the current sample only.
pub fn compute_bounds(samples: &[Vec<&ValueTable>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::TooFewInputs { needed: 1, got: 0 });
    }
    let mut tau_gamma = Vec::with_capacity(samples.len());
    let mut tau_epsilon = Vec::with_capacity(samples.len());
    for model_samples in samples {
        let current = model_samples
            .first()
            .ok_or(Error::TooFewInputs { needed: 1, got: 0 })?;
        let mean_gap = model_samples
            .iter()
            .map(|t| t.output_gap().abs())
            .sum::<f64>()
            / model_samples.len() as f64;
        tau_gamma.push(GAMMA_BOUND_FACTOR * mean_gap);
        tau_epsilon.push(EPSILON_BOUND_FACTOR * current.output_gap().abs());
    }
    Ok((tau_gamma, tau_epsilon))
}
