mod common;

use common::*;
use interprim::decomposition::Decomposition;
use interprim::interactions::{InteractionSpectrum, ValueTable};
use interprim::lattice::LatticeVector;
use interprim::objective::{loss_joint, loss_subgradient, Gradients, LossConfig, LossMode};
use rand::Rng;

const H: f64 = 1e-5;

fn blocks(d: &mut Decomposition) -> Vec<&mut LatticeVector> {
    d.gamma_shared
        .iter_mut()
        .chain(d.gamma_hat.iter_mut())
        .chain(d.epsilon.iter_mut())
        .collect()
}

fn grad_blocks(g: &Gradients) -> Vec<&LatticeVector> {
    g.gamma_shared.iter().chain(&g.gamma_hat).chain(&g.epsilon).collect()
}

fn shifted(d: &Decomposition, dir: &[Vec<f64>], step: f64) -> Decomposition {
    let mut out = d.clone();
    for (b, delta) in blocks(&mut out).into_iter().zip(dir) {
        b.values_mut().iter_mut().zip(delta).for_each(|(x, dx)| *x += step * dx);
    }
    out
}

fn far_from_kinks(spectra: &[InteractionSpectrum], mode: LossMode) -> bool {
    let margin = 1e-3;
    let columns = |pick: fn(&InteractionSpectrum) -> &LatticeVector| -> Vec<&LatticeVector> {
        spectra.iter().map(pick).collect()
    };
    for cols in [columns(|s| &s.and_effects), columns(|s| &s.or_effects)] {
        for t in 0..cols[0].len() {
            let mut mags: Vec<f64> = cols.iter().map(|c| c.values()[t].abs()).collect();
            if mags.iter().any(|&x| x < margin) {
                return false;
            }
            if mode.is_joint() && mags.len() > 1 {
                mags.sort_by(|a, b| b.total_cmp(a));
                if mags[0] - mags[1] < margin {
                    return false;
                }
            }
        }
    }
    true
}

fn directional_check(mode: LossMode, alpha: f64, m: usize, seed: u64) -> usize {
    let n = 5;
    let cfg = LossConfig::new(mode, alpha).unwrap();
    let mut r = rng(seed);
    let mut checked = 0;
    for _ in 0..100 {
        let tables: Vec<ValueTable> = (0..m).map(|i| random_table(&mut r, &format!("m{i}"), n)).collect();
        let d = random_decomposition(&mut r, &tables);
        if !far_from_kinks(&d.spectra(&tables).unwrap(), mode) {
            continue;
        }
        let (_, grad) = loss_subgradient(&tables, &d, &cfg).unwrap();
        let mut probe = d.clone();
        let dir: Vec<Vec<f64>> = blocks(&mut probe)
            .iter()
            .map(|b| (0..b.len()).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let predicted: f64 = grad_blocks(&grad)
            .iter()
            .zip(&dir)
            .map(|(g, delta)| g.values().iter().zip(delta).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let loss_at = |step: f64| {
            let p = shifted(&d, &dir, step);
            loss_joint(&p.spectra(&tables).unwrap(), &cfg).unwrap().total
        };
        let numeric = (loss_at(H) - loss_at(-H)) / (2.0 * H);
        assert!(
            (numeric - predicted).abs() <= 1e-4 * (1.0 + predicted.abs()),
            "{mode} m={m}: finite difference {numeric} vs subgradient {predicted}"
        );
        checked += 1;
    }
    checked
}

#[test]
fn single_sparse_matches_finite_differences() {
    assert!(directional_check(LossMode::SingleSparse, 0.0, 2, 1) >= 50);
}

#[test]
fn joint_rowmax_matches_finite_differences() {
    assert!(directional_check(LossMode::JointRowmax, 0.0, 2, 2) >= 50);
}

#[test]
fn joint_full_matches_finite_differences() {
    assert!(directional_check(LossMode::JointFull, 0.1, 2, 3) >= 50);
}

#[test]
fn one_model_rowmax_gradient_is_the_single_gradient() {
    let mut r = rng(4);
    for _ in 0..20 {
        let tables = vec![random_table(&mut r, "m", 4)];
        let d = random_decomposition(&mut r, &tables);
        let single = LossConfig::new(LossMode::SingleSparse, 0.0).unwrap();
        let rowmax = LossConfig::new(LossMode::JointRowmax, 0.0).unwrap();
        let (ls, gs) = loss_subgradient(&tables, &d, &single).unwrap();
        let (lr, gr) = loss_subgradient(&tables, &d, &rowmax).unwrap();
        assert_eq!(ls.total, lr.total);
        assert_eq!(gs, gr);
    }
}
