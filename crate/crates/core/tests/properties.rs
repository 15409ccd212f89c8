use std::collections::BTreeSet;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spin_tomography::dynamics::{evolve_state, gen_initial_states, hamiltonian_series, propagators, TimeGrid};
use spin_tomography::harness::{run_sweep, ExperimentConfig};
use spin_tomography::linalg::unitarity_error;
use spin_tomography::models::{gen_long_range, gen_two_body, partition_subspaces, NetworkTopology};
use spin_tomography::pauli::{
    decode, decompose, encode, pauli_matrix, reconstruct, CMatrix, HermitianOperator, PauliCoefficients,
    PauliString,
};
use spin_tomography::seed::split_seed;

mod common;
use common::{cyclic, picture_round_trip_error};
use spin_tomography::tomography::{
    classify_links, fidelity_local, fidelity_t, fidelity_tprime, profile_from_coefficients,
};

fn random_hermitian(n: usize, seed: u64) -> HermitianOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 1 << n;
    let m = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rand::Rng::random_range(&mut rng, -2.0..2.0), rand::Rng::random_range(&mut rng, -2.0..2.0))
    });
    HermitianOperator::symmetrized(m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pauli_coefficients_round_trip(n in 1usize..=4, values in prop::collection::vec(-3.0f64..3.0, 256)) {
        let c = PauliCoefficients::new(n, values[..1 << (2 * n)].to_vec()).unwrap();
        let back = decompose(&reconstruct(&c)).unwrap();
        for (a, b) in back.values().iter().zip(c.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hermitian_round_trips(n in 1usize..=4, seed in any::<u64>()) {
        let h = random_hermitian(n, seed);
        prop_assert!(reconstruct(&decompose(&h).unwrap()).max_abs_diff(&h) < 1e-12);
        prop_assert!(decode(&encode(&h)).max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn pauli_strings_are_orthogonal(n in 1usize..=3, i in 0usize..64, j in 0usize..64) {
        let d = 1usize << n;
        let (i, j) = (i % (d * d), j % (d * d));
        let a = pauli_matrix(&PauliString::from_index(n, i));
        let b = pauli_matrix(&PauliString::from_index(n, j));
        let tr = (a.matrix() * b.matrix()).trace();
        let want = if i == j { d as f64 } else { 0.0 };
        prop_assert!((tr.re - want).abs() < 1e-12 && tr.im.abs() < 1e-12);
        prop_assert_eq!(PauliString::from_label(&PauliString::from_index(n, i).label()).unwrap().index(), i);
    }

    #[test]
    fn fidelities_are_bounded(
        n in 2usize..=4,
        pred in prop::collection::btree_set(1usize..256, 0..40),
        truth in prop::collection::btree_set(1usize..256, 0..40),
    ) {
        let limit = 1usize << (2 * n);
        let pred: BTreeSet<usize> = pred.into_iter().filter(|&i| i < limit).collect();
        let truth: BTreeSet<usize> = truth.into_iter().filter(|&i| i < limit).collect();
        let ft = fidelity_t(&pred, &truth, n);
        prop_assert!((0.0..=1.0).contains(&ft));
        prop_assert_eq!(fidelity_t(&truth, &truth, n), 1.0);
        let part = partition_subspaces(n, &[1]).unwrap();
        let ftp = fidelity_tprime(&pred, &truth, &part).unwrap();
        prop_assert!((0.0..=1.0).contains(&ftp));
    }

    #[test]
    fn thresholds_are_monotone(seed in any::<u64>(), lo in 0.01f64..0.5, gap in 0.0f64..0.4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = Array2::from_shape_fn((5, 64), |_| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let times: Vec<f64> = (0..5).map(|j| j as f64 * 0.25).collect();
        let profile = profile_from_coefficients(3, &times, &coeffs).unwrap();
        let loose = classify_links(&profile, lo);
        let strict = classify_links(&profile, lo + gap);
        prop_assert!(strict.is_subset(&loose));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trajectories_preserve_norm(n in 1usize..=4, seed in any::<u64>(), long_range in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = if long_range || n == 1 {
            gen_long_range(n, &mut rng).unwrap()
        } else {
            gen_two_body(&NetworkTopology::cyclic(n).unwrap(), &mut rng).unwrap()
        };
        let grid = TimeGrid::new(0.0, 5.0, 100, 10).unwrap().with_adequate_substeps(spec.compile().norm_bound());
        let psi0 = gen_initial_states(n, 1, &mut rng).unwrap().states.remove(0);
        for psi in evolve_state(&spec, &psi0, &grid).unwrap() {
            prop_assert!((psi.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn propagators_are_unitary(n in 1usize..=4, seed in any::<u64>()) {
        let spec = gen_long_range(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let ham = spec.compile();
        let grid = TimeGrid::new(0.0, 5.0, 100, 10).unwrap().with_adequate_substeps(ham.norm_bound());
        for u in propagators(&ham, &grid).unwrap() {
            prop_assert!(unitarity_error(&u) < 1e-9);
        }
    }
}

#[test]
fn picture_conversion_round_trip_cyclic() {
    let grid = TimeGrid::new(0.0, 5.0, 100, 10).unwrap();
    for seed in [1, 2, 3] {
        let spec = cyclic(3, seed);
        let err = picture_round_trip_error(&spec, &grid, 400);
        assert!(err < 1e-5, "seed {seed}: round-trip error {err:.3e}");
    }
}

#[test]
fn picture_conversion_converges_at_second_order() {
    let spec = cyclic(3, 4);
    let grid = TimeGrid::new(0.0, 1.0, 11, 10).unwrap();
    let coarse = picture_round_trip_error(&spec, &grid, 10);
    let fine = picture_round_trip_error(&spec, &grid, 20);
    assert!(coarse / fine > 3.5, "{coarse:.3e} -> {fine:.3e}");
}

#[test]
fn local_fidelity_is_bounded() {
    let grid = TimeGrid::new(0.0, 5.0, 30, 10).unwrap();
    let a = hamiltonian_series(&cyclic(3, 1), &grid);
    let b = hamiltonian_series(&cyclic(3, 2), &grid);
    let part = partition_subspaces(3, &[1]).unwrap();
    assert_eq!(fidelity_local(&a, &a, &part).unwrap(), 1.0);
    let f = fidelity_local(&b, &a, &part).unwrap();
    assert!((0.0..=1.0).contains(&f));
}

#[test]
fn seeds_determine_everything() {
    let mut rng_a = ChaCha8Rng::seed_from_u64(split_seed(42, 2));
    let mut rng_b = ChaCha8Rng::seed_from_u64(split_seed(42, 2));
    let a = gen_initial_states(3, 64, &mut rng_a).unwrap();
    let b = gen_initial_states(3, 64, &mut rng_b).unwrap();
    assert_eq!(a.as_matrix(), b.as_matrix());
    assert_eq!(cyclic(4, 9), cyclic(4, 9));
    assert_ne!(cyclic(4, 9), cyclic(4, 10));

    let mut cfg = ExperimentConfig::default();
    cfg.training.epochs = 40;
    cfg.training.hidden = vec![6, 6];
    cfg.grid.n_samples = 15;
    cfg.realizations = 2;
    cfg.seed = 17;
    let first = serde_json::to_string(&run_sweep(&cfg).unwrap().records).unwrap();
    let second = run_sweep(&cfg).unwrap().records;
    let strip = |s: &str| -> Vec<serde_json::Value> {
        serde_json::from_str::<Vec<serde_json::Value>>(s)
            .unwrap()
            .into_iter()
            .map(|mut v| {
                v.as_object_mut().unwrap().remove("seconds");
                v
            })
            .collect()
    };
    assert_eq!(strip(&first), strip(&serde_json::to_string(&second).unwrap()));
}

