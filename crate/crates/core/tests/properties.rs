mod common;

use common::*;
use interprim::decomposition::clamp_parameters;
use interprim::extraction::{generalization_metrics, select_salient, Selection};
use interprim::interactions::{
    and_interactions, or_interactions, shapley_values, universal_match, InteractionSpectrum,
    ValueTable,
};
use interprim::lattice::{
    adjoint_mobius, adjoint_zeta, complement_reindex, mobius_transform, zeta_transform,
    LatticeVector, SubsetIndex,
};
use interprim::objective::{loss_joint, loss_single, LossConfig, LossMode};
use proptest::prelude::*;

fn vector(max_n: usize) -> impl Strategy<Value = LatticeVector> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-5.0..5.0f64, 1usize << n)
            .prop_map(move |v| LatticeVector::from_values(n, v).unwrap())
    })
}

fn vector_pair(max_n: usize) -> impl Strategy<Value = (LatticeVector, LatticeVector)> {
    (1..=max_n).prop_flat_map(|n| {
        let v = prop::collection::vec(-5.0..5.0f64, 1usize << n);
        (v.clone(), v).prop_map(move |(a, b)| {
            (
                LatticeVector::from_values(n, a).unwrap(),
                LatticeVector::from_values(n, b).unwrap(),
            )
        })
    })
}

fn spectrum_from(v: &LatticeVector, seed: u64) -> InteractionSpectrum {
    let mut r = rng(seed);
    let n = v.n();
    let gamma = LatticeVector::from_values(n, random_values(&mut r, n, 1.0)).unwrap();
    let mut v_and = v.clone();
    v_and.scale(0.5);
    let mut v_or = v_and.clone();
    v_and.add_scaled(1.0, &gamma);
    v_or.add_scaled(-1.0, &gamma);
    InteractionSpectrum::from_parts("m", &v_and, &v_or).unwrap()
}

fn close(a: &LatticeVector, b: &LatticeVector, tol: f64) -> bool {
    max_abs_diff(a.values(), b.values()) <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zeta_inverts_mobius(f in vector(12)) {
        let back = zeta_transform(&mobius_transform(&f).unwrap()).unwrap();
        prop_assert!(close(&back, &f, 1e-10));
    }

    #[test]
    fn mobius_is_linear((f, g) in vector_pair(8), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut mix = f.clone();
        mix.scale(a);
        mix.add_scaled(b, &g);
        let mut want = mobius_transform(&f).unwrap();
        want.scale(a);
        want.add_scaled(b, &mobius_transform(&g).unwrap());
        prop_assert!(close(&mobius_transform(&mix).unwrap(), &want, 1e-9));
    }

    #[test]
    fn adjoint_identities((f, c) in vector_pair(10)) {
        let lhs = mobius_transform(&f).unwrap().dot(&c);
        let rhs = f.dot(&adjoint_mobius(&c).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        let lhs = zeta_transform(&f).unwrap().dot(&c);
        let rhs = f.dot(&adjoint_zeta(&c).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn fast_transforms_match_double_loops(f in vector(7)) {
        prop_assert!(max_abs_diff(mobius_transform(&f).unwrap().values(), &mobius_oracle(f.values())) <= 1e-10);
        prop_assert!(max_abs_diff(zeta_transform(&f).unwrap().values(), &zeta_oracle(f.values())) <= 1e-10);
        prop_assert!(max_abs_diff(or_interactions(&f).unwrap().values(), &or_oracle(f.values())) <= 1e-10);
    }

    #[test]
    fn complement_is_an_involution(f in vector(10)) {
        let once = complement_reindex(&f);
        let full = f.len() - 1;
        for k in 0..f.len() {
            prop_assert_eq!(once.values()[k], f.values()[full ^ k]);
        }
        prop_assert_eq!(complement_reindex(&once), f);
    }

    #[test]
    fn or_effects_are_negated_and_effects_of_the_complement(f in vector(9)) {
        let or = or_interactions(&f).unwrap();
        let and = and_interactions(&complement_reindex(&f)).unwrap();
        for k in 1..f.len() {
            prop_assert!((or.values()[k] + and.values()[k]).abs() <= 1e-10);
        }
        prop_assert_eq!(or.values()[0], f.values()[0]);
    }

    #[test]
    fn universal_matching_with_noise(n in 1usize..=8, m in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let tables: Vec<ValueTable> = (0..m).map(|i| random_table(&mut r, &format!("m{i}"), n)).collect();
        let d = random_decomposition(&mut r, &tables);
        for (i, t) in tables.iter().enumerate() {
            let s = d.spectrum(t, i).unwrap();
            for (mask, v) in t.values.iter() {
                let rebuilt = universal_match(&s, mask).unwrap() + d.epsilon[i].get(mask);
                prop_assert!((rebuilt - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn split_reconstructs_table(n in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let tables = vec![random_table(&mut r, "a", n), random_table(&mut r, "b", n)];
        let d = random_decomposition(&mut r, &tables);
        for (i, t) in tables.iter().enumerate() {
            let (a, o) = d.split_outputs(t, i).unwrap();
            for k in 0..t.values.len() {
                let sum = a.values()[k] + o.values()[k] + d.epsilon[i].values()[k];
                prop_assert!((sum - t.values.values()[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn clamp_is_idempotent_and_bounded(n in 1usize..=6, seed in any::<u64>(), blowup in 1.0..50.0f64) {
        let mut r = rng(seed);
        let tables = vec![random_table(&mut r, "a", n), random_table(&mut r, "b", n)];
        let mut d = random_decomposition(&mut r, &tables);
        for v in d.gamma_hat.iter_mut().chain(d.epsilon.iter_mut()) {
            v.scale(blowup);
        }
        let once = clamp_parameters(&d);
        prop_assert_eq!(&clamp_parameters(&once), &once);
        for i in 0..2 {
            prop_assert!(once.gamma_hat[i].max_abs() <= once.tau_gamma[i]);
            prop_assert!(once.epsilon[i].max_abs() <= once.tau_epsilon[i]);
        }
    }

    #[test]
    fn single_model_joint_equals_single(f in vector(7), seed in any::<u64>()) {
        let s = spectrum_from(&f, seed);
        let rowmax = loss_joint(std::slice::from_ref(&s), &LossConfig::new(LossMode::JointRowmax, 0.0).unwrap()).unwrap();
        prop_assert_eq!(rowmax.total, loss_single(&s));
        let full = loss_joint(std::slice::from_ref(&s), &LossConfig::new(LossMode::JointFull, 0.0).unwrap()).unwrap();
        prop_assert_eq!(full.total, loss_single(&s));
    }

    #[test]
    fn model_order_does_not_change_loss(n in 1usize..=6, seed in any::<u64>(), alpha in 0.0..=1.0f64) {
        let mut r = rng(seed);
        let spectra: Vec<InteractionSpectrum> = (0..3)
            .map(|i| spectrum_from(&random_table(&mut r, "t", n).values, seed.wrapping_add(i)))
            .collect();
        let cfg = LossConfig::new(LossMode::JointFull, alpha).unwrap();
        let forward = loss_joint(&spectra, &cfg).unwrap();
        let reversed: Vec<_> = spectra.iter().rev().cloned().collect();
        let backward = loss_joint(&reversed, &cfg).unwrap();
        prop_assert!((forward.total - backward.total).abs() <= 1e-12 * (1.0 + forward.total));
        let fewer = loss_joint(&spectra[..2], &cfg).unwrap();
        prop_assert!(fewer.rowmax_and <= forward.rowmax_and && fewer.rowmax_or <= forward.rowmax_or);
    }

    #[test]
    fn selection_ignores_positive_scale(f in vector(6), seed in any::<u64>(), c in 0.01..100.0f64, k in 1usize..8) {
        let s = spectrum_from(&f, seed);
        let mut scaled = s.clone();
        scaled.and_effects.scale(c);
        scaled.or_effects.scale(c);
        let pool = 2 * (f.len() - 1);
        for rule in [
            Selection::Threshold { relative: 0.05 },
            Selection::TopK { k: k.min(pool), per_kind: false },
        ] {
            let a = select_salient(&s, rule).unwrap();
            let b = select_salient(&scaled, rule).unwrap();
            prop_assert_eq!(a.and_subsets(), b.and_subsets());
            prop_assert_eq!(a.or_subsets(), b.or_subsets());
        }
    }

    #[test]
    fn shared_metrics_follow_model_order(n in 2usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let sets: Vec<_> = (0..3)
            .map(|i| {
                let s = spectrum_from(&random_table(&mut r, "t", n).values, seed ^ i);
                select_salient(&s, Selection::TopK { k: 4, per_kind: false }).unwrap()
            })
            .collect();
        let fwd = generalization_metrics(&sets).unwrap();
        let rev: Vec<_> = sets.iter().rev().cloned().collect();
        let bwd = generalization_metrics(&rev).unwrap();
        let mut s_and = bwd.s_and.clone();
        s_and.reverse();
        prop_assert_eq!(fwd.s_and, s_and);
        prop_assert_eq!(&fwd.shared_and, &bwd.shared_and);
        for set in &sets {
            for s in &fwd.shared_or {
                prop_assert!(set.or_primitives.contains_key(s));
            }
        }
    }

    #[test]
    fn shapley_is_efficient(n in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = random_table(&mut r, "t", n);
        let phi = shapley_values(&t).unwrap();
        let total: f64 = phi.iter().sum();
        prop_assert!((total - t.output_gap()).abs() <= 1e-9);
    }
}

#[test]
fn mask_index_convention_is_shared() {
    // bit i set means variable i present, in every module
    let n = 3;
    let t = ValueTable::new(
        "t",
        LatticeVector::from_fn(n, |s| if s.contains(1) { 1.0 } else { 0.0 }).unwrap(),
    )
    .unwrap();
    let and = and_interactions(&t.values).unwrap();
    assert_eq!(and.get(SubsetIndex::from_vars(&[1])), 1.0);
    assert_eq!(and.get(SubsetIndex(0b010)), 1.0);
    assert_eq!(shapley_values(&t).unwrap(), vec![0.0, 1.0, 0.0]);
    let spec = interprim::io::write_mask_spec(n, &[]).unwrap();
    assert_eq!(spec.masks[0b010].unmasked, vec![false, true, false]);
}
