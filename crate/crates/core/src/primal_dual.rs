//! Diagonally preconditioned primal-dual iteration for the sparsity losses.
//!
//! The loss is a sum of polyhedral norms of linear images of the parameters,
//! so each dual block is a projection and the primal update is a clamp.

use crate::decomposition::Decomposition;
use crate::error::Result;
use crate::interactions::{adjoint_or_interactions, ValueTable};
use crate::lattice::{
    adjoint_mobius_in_place, adjoint_zeta_in_place, complement_in_place, zeta_in_place,
    LatticeVector, SubsetIndex,
};
use crate::objective::{LossConfig, LossMode};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Block {
    /// `Σ_T max_i |I_i(T)|`: dual rows live in the unit ℓ1 ball across models.
    Rowmax,
    /// `radius · Σ |I|`: dual entries live in `[-radius, radius]`.
    Entrywise { radius: f64 },
}

#[derive(Clone, Debug)]
struct DualBlock {
    block: Block,
    and: Vec<LatticeVector>,
    or: Vec<LatticeVector>,
}

#[derive(Clone, Debug)]
pub(crate) struct PrimalDual {
    step_base: Vec<LatticeVector>,
    step_hat: Vec<LatticeVector>,
    step_eps: Vec<LatticeVector>,
    sigma_and: LatticeVector,
    sigma_or: LatticeVector,
    duals: Vec<DualBlock>,
}

/// Row sums of `|OR map|` applied to `u`: `u(∅)` at `∅`, `Σ_{R⊆S} u(N\R)` elsewhere.
fn abs_or_map(u: &LatticeVector) -> LatticeVector {
    let mut out = u.clone();
    complement_in_place(&mut out);
    zeta_in_place(&mut out);
    out.set(SubsetIndex::EMPTY, u.get(SubsetIndex::EMPTY));
    out
}

fn abs_or_adjoint(c: &LatticeVector) -> LatticeVector {
    let mut d = c.clone();
    let at_empty = d.get(SubsetIndex::EMPTY);
    d.set(SubsetIndex::EMPTY, 0.0);
    adjoint_zeta_in_place(&mut d);
    complement_in_place(&mut d);
    let e = d.get(SubsetIndex::EMPTY);
    d.set(SubsetIndex::EMPTY, e + at_empty);
    d
}

fn reciprocal(v: &LatticeVector, factor: f64) -> LatticeVector {
    let mut out = v.clone();
    out.values_mut()
        .iter_mut()
        .for_each(|x| *x = if *x > 0.0 { factor / *x } else { 0.0 });
    out
}

/// Euclidean projection of `z` onto `{x : Σ|x| ≤ radius}`.
pub(crate) fn project_l1_ball(z: &mut [f64], radius: f64) {
    let total: f64 = z.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return;
    }
    let mut mags: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - radius) / (j + 1) as f64;
        if m > candidate {
            shift = candidate;
        } else {
            break;
        }
    }
    for x in z.iter_mut() {
        *x = x.signum() * (x.abs() - shift).max(0.0);
    }
}

impl PrimalDual {
    /// `scale` trades primal against dual step length; their product is fixed.
    pub(crate) fn new(decomp: &Decomposition, config: &LossConfig, scale: f64) -> Result<Self> {
        let n = decomp.n;
        let m = decomp.model_count();
        let blocks = match config.mode {
            LossMode::SingleSparse => vec![Block::Entrywise { radius: 1.0 }],
            LossMode::JointRowmax => vec![Block::Rowmax],
            LossMode::JointFull if config.alpha > 0.0 => vec![
                Block::Rowmax,
                Block::Entrywise {
                    radius: config.alpha,
                },
            ],
            LossMode::JointFull => vec![Block::Rowmax],
        };
        let copies = blocks.len() as f64;

        let ones = LatticeVector::from_fn(n, |_| 1.0)?;
        let mut col = ones.clone();
        adjoint_zeta_in_place(&mut col);
        col.add_scaled(1.0, &abs_or_adjoint(&ones));
        col.scale(copies);

        let mut per_base = vec![0usize; decomp.gamma_shared.len()];
        for i in 0..m {
            per_base[decomp.base_index(i)] += 1;
        }
        let step_base = per_base
            .iter()
            .map(|&k| reciprocal(&col, scale / k.max(1) as f64))
            .collect();
        let step_hat = vec![reciprocal(&col, scale); m];
        let step_eps = vec![reciprocal(&col, 2.0 * scale); m];

        // each row touches γ̄, γ̂ and ½ε
        let mut row_and = ones.clone();
        zeta_in_place(&mut row_and);
        row_and.scale(2.5);
        let mut row_or = abs_or_map(&ones);
        row_or.scale(2.5);

        let zero = LatticeVector::zeros(n)?;
        let duals: Vec<DualBlock> = blocks
            .into_iter()
            .map(|block| DualBlock {
                block,
                and: vec![zero.clone(); m],
                or: vec![zero.clone(); m],
            })
            .collect();
        Ok(PrimalDual {
            step_base,
            step_hat,
            step_eps,
            sigma_and: reciprocal(&row_and, 1.0 / scale),
            sigma_or: reciprocal(&row_or, 1.0 / scale),
            duals,
        })
    }

    /// One primal step, extrapolation, and dual step. Leaves `decomp` feasible.
    pub(crate) fn step(&mut self, decomp: &mut Decomposition, tables: &[ValueTable]) -> Result<()> {
        let previous = decomp.clone();
        for i in 0..decomp.model_count() {
            let mut w_and = self.duals[0].and[i].clone();
            let mut w_or = self.duals[0].or[i].clone();
            for d in &self.duals[1..] {
                w_and.add_scaled(1.0, &d.and[i]);
                w_or.add_scaled(1.0, &d.or[i]);
            }
            adjoint_mobius_in_place(&mut w_and);
            let g_or = adjoint_or_interactions(&w_or);
            let mut g_gamma = w_and.clone();
            g_gamma.add_scaled(-1.0, &g_or);
            let mut g_eps = w_and;
            g_eps.add_scaled(1.0, &g_or);
            g_eps.scale(-0.5);

            let base = decomp.base_index(i);
            descend(&mut decomp.gamma_shared[base], &self.step_base[base], &g_gamma);
            descend(&mut decomp.gamma_hat[i], &self.step_hat[i], &g_gamma);
            descend(&mut decomp.epsilon[i], &self.step_eps[i], &g_eps);
        }
        decomp.clamp();

        let mut extrapolated = decomp.clone();
        let pairs = extrapolated
            .gamma_shared
            .iter_mut()
            .zip(&previous.gamma_shared)
            .chain(extrapolated.gamma_hat.iter_mut().zip(&previous.gamma_hat))
            .chain(extrapolated.epsilon.iter_mut().zip(&previous.epsilon));
        for (x, old) in pairs {
            x.scale(2.0);
            x.add_scaled(-1.0, old);
        }
        let spectra = extrapolated.spectra(tables)?;

        for d in &mut self.duals {
            let and: Vec<&LatticeVector> = spectra.iter().map(|s| &s.and_effects).collect();
            let or: Vec<&LatticeVector> = spectra.iter().map(|s| &s.or_effects).collect();
            ascend(&mut d.and, &self.sigma_and, &and, d.block);
            ascend(&mut d.or, &self.sigma_or, &or, d.block);
        }
        Ok(())
    }
}

fn descend(x: &mut LatticeVector, step: &LatticeVector, g: &LatticeVector) {
    for ((x, s), g) in x.values_mut().iter_mut().zip(step.values()).zip(g.values()) {
        *x -= s * g;
    }
}

fn ascend(y: &mut [LatticeVector], sigma: &LatticeVector, effects: &[&LatticeVector], block: Block) {
    let m = y.len();
    let mut row = vec![0.0; m];
    for t in 0..sigma.len() {
        let s = sigma.values()[t];
        for i in 0..m {
            row[i] = y[i].values()[t] + s * effects[i].values()[t];
        }
        match block {
            Block::Rowmax => project_l1_ball(&mut row, 1.0),
            Block::Entrywise { radius } => {
                row.iter_mut().for_each(|x| *x = x.clamp(-radius, radius));
            }
        }
        for i in 0..m {
            y[i].values_mut()[t] = row[i];
        }
    }
}
