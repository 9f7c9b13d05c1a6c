//! Definitional oracles shared by the integration tests. Everything here is
//! written from the formulas directly and never calls the fast kernels.

#![allow(dead_code)]

use interprim::decomposition::{Coupling, Decomposition};
use interprim::interactions::ValueTable;
use interprim::lattice::LatticeVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_values<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..1usize << n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_table<R: Rng>(rng: &mut R, id: &str, n: usize) -> ValueTable {
    let v = LatticeVector::from_values(n, random_values(rng, n, 3.0)).unwrap();
    ValueTable::new(id, v).unwrap()
}

fn sign_of_gap(s: usize, t: usize) -> f64 {
    if (s.count_ones() - t.count_ones()) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `g(S) = Σ_{T⊆S} (−1)^{|S|−|T|} f(T)` by double loop over all pairs.
pub fn mobius_oracle(f: &[f64]) -> Vec<f64> {
    let len = f.len();
    (0..len)
        .map(|s| {
            (0..len)
                .filter(|&t| t & s == t)
                .map(|t| sign_of_gap(s, t) * f[t])
                .sum()
        })
        .collect()
}

/// `f(T) = Σ_{S⊆T} g(S)`.
pub fn zeta_oracle(g: &[f64]) -> Vec<f64> {
    let len = g.len();
    (0..len)
        .map(|t| (0..len).filter(|&s| s & t == s).map(|s| g[s]).sum())
        .collect()
}

/// OR effect of `v_or`: `−Σ_{T⊆S} (−1)^{|S|−|T|} v_or(N∖T)` for `S ≠ ∅`, `v_or(∅)` at `∅`.
pub fn or_oracle(v: &[f64]) -> Vec<f64> {
    let len = v.len();
    let full = len - 1;
    (0..len)
        .map(|s| {
            if s == 0 {
                return v[0];
            }
            -(0..len)
                .filter(|&t| t & s == t)
                .map(|t| sign_of_gap(s, t) * v[full ^ t])
                .sum::<f64>()
        })
        .collect()
}

/// Output rebuilt on mask `t` by summing every triggered AND and OR effect.
pub fn match_oracle(and: &[f64], or: &[f64], t: usize) -> f64 {
    let mut total = 0.0;
    for s in 0..and.len() {
        if s & t == s {
            total += and[s];
        }
        if s == 0 || s & t != 0 {
            total += or[s];
        }
    }
    total
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Shapley values as the average marginal contribution over all `n!` orderings.
pub fn shapley_oracle(v: &[f64], n: usize) -> Vec<f64> {
    let mut orders = Vec::new();
    permutations(&mut (0..n).collect(), 0, &mut orders);
    let mut phi = vec![0.0; n];
    for order in &orders {
        let mut mask = 0usize;
        for &i in order {
            let before = v[mask];
            mask |= 1 << i;
            phi[i] += v[mask] - before;
        }
    }
    phi.iter().map(|p| p / orders.len() as f64).collect()
}

/// Decomposition with every γ̄, γ̂, ε entry random, then clamped to its box.
pub fn random_decomposition<R: Rng>(rng: &mut R, tables: &[ValueTable]) -> Decomposition {
    let mut d = Decomposition::for_tables(tables, Coupling::Shared).unwrap();
    let n = d.n;
    for g in &mut d.gamma_shared {
        *g = LatticeVector::from_values(n, random_values(rng, n, 2.0)).unwrap();
    }
    for i in 0..tables.len() {
        let tg = d.tau_gamma[i].max(1e-3) * 2.0;
        let te = d.tau_epsilon[i].max(1e-3) * 2.0;
        d.gamma_hat[i] = LatticeVector::from_values(n, random_values(rng, n, tg)).unwrap();
        d.epsilon[i] = LatticeVector::from_values(n, random_values(rng, n, te)).unwrap();
    }
    d.clamp();
    d
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
