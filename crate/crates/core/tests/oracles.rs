//! Frozen oracle values and property tests pinning the enumeration
//! conventions. The partition engines and the pairing oracles are separate
//! code paths; these tests are what make their agreement a theorem of the
//! codebase rather than an accident of one fixture.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use isokit_core::combinat;
use isokit_core::kernels::{potential, Kernel, KernelKind};
use isokit_core::model::ChainModel;
use isokit_core::moments::{self, oracle};

fn k2_u() -> Kernel {
    let model = ChainModel::load(format!(
        "{}/../../fixtures/k2.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    potential(&model).unwrap()
}

fn kernel_from(m: DMatrix<f64>) -> Kernel {
    let names = (0..m.nrows()).map(|i| format!("s{i}")).collect();
    Kernel::from_matrix(KernelKind::AlphaPotential { alpha: 0.0 }, names, m)
}

/// Arbitrary symmetric 3x3 kernels; the oracle identities are polynomial in
/// the entries, so signed values are fair game.
fn symmetric3() -> impl Strategy<Value = Kernel> {
    proptest::array::uniform6(-1.0f64..1.0).prop_map(|v| {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]],
        );
        kernel_from(m)
    })
}

fn points(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..3, 0..=max_len)
}

fn close(a: f64, b: f64) {
    let scale = a.abs().max(b.abs()).max(1.0);
    assert!((a - b).abs() <= 1e-9 * scale, "lhs {a} rhs {b}");
}

// Frozen calibration values. These pin the index-level convention for
// repeated points: repeats are distinct enumeration slots, and a 2-element
// block has a single cyclic class.

#[test]
fn frozen_square_moment_with_repeated_point() {
    // E[(G_a^2/2)^2] = E[G_a^4]/4 = 3 u(a,a)^2 / 4 = 1/3 on the two-state
    // fixture; the partition engine must reproduce the pairing count 3.
    let u = k2_u();
    let v = moments::gauss_square_moment(&u, &[0, 0]).unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1e-12, "got {v}");
    let o = oracle::square_moment(&u, &[0, 0]).unwrap();
    assert!((o - 1.0 / 3.0).abs() < 1e-12, "oracle {o}");
}

#[test]
fn frozen_wick_pair_value() {
    // Centered pair of Wick squares against uniform measure on {a,b}:
    // Cov(:G_a^2/2: + :G_b^2/2: terms) assembles to 1/18 on the fixture.
    let u = k2_u();
    let nu = DVector::from_vec(vec![1.0, 0.0]);
    let mu = DVector::from_vec(vec![0.0, 1.0]);
    let v = moments::wick_square_moment(&u, &[&nu, &mu]).unwrap();
    assert!((v - 1.0 / 18.0).abs() < 1e-12, "got {v}");
    let o = oracle::wick_square_moment(&u, &[&nu, &mu]).unwrap();
    assert!((o - 1.0 / 18.0).abs() < 1e-12, "oracle {o}");
}

#[test]
fn frozen_fourth_moment_count() {
    // E[G_a^4] = 3 u(a,a)^2: the pairing engine must count exactly 3.
    let u = k2_u();
    let v = moments::gauss_moment(&u, &[0, 0, 0, 0]).unwrap();
    assert!((v - 3.0 * (2.0 / 3.0f64).powi(2)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn square_engine_matches_pairing_oracle(u in symmetric3(), pts in points(4)) {
        let engine = moments::gauss_square_moment(&u, &pts).unwrap();
        let expected = oracle::square_moment(&u, &pts).unwrap();
        close(engine, expected);
    }

    #[test]
    fn pair_square_engine_matches_pairing_oracle(
        u in symmetric3(),
        a in 0usize..3,
        b in 0usize..3,
        pts in points(3),
    ) {
        let engine = moments::gauss_pair_square_moment(&u, a, b, &pts).unwrap();
        let expected = oracle::pair_square_moment(&u, a, b, &pts).unwrap();
        close(engine, expected);
    }

    #[test]
    fn shifted_engine_matches_expansion_oracle(
        u in symmetric3(),
        s in 0.25f64..2.0,
        pts in points(3),
    ) {
        let engine = moments::shifted_square_moment(&u, s, &pts).unwrap();
        let expected = oracle::shifted_square_moment(&u, s, &pts).unwrap();
        close(engine, expected);
    }

    #[test]
    fn wick_engine_matches_subset_oracle(u in symmetric3(), k in 0usize..4) {
        // Random-ish measures built deterministically from the kernel size.
        let measures: Vec<DVector<f64>> = (0..k)
            .map(|i| DVector::from_fn(3, |r, _| 0.2 + ((i + 2) * (r + 1)) as f64 * 0.1))
            .collect();
        let refs: Vec<&DVector<f64>> = measures.iter().collect();
        let engine = moments::wick_square_moment(&u, &refs).unwrap();
        let expected = oracle::wick_square_moment(&u, &refs).unwrap();
        close(engine, expected);
    }

    #[test]
    fn soup_partition_route_equals_permanent_route(
        u in symmetric3(),
        alpha in 0.25f64..3.0,
        pts in points(4),
    ) {
        let partition = moments::soup_field_moment(&u, alpha, &pts).unwrap();
        let permanent = combinat::alpha_permanent(u.matrix(), &pts, alpha).unwrap();
        close(partition, permanent);
    }

    #[test]
    fn gauss_moment_vanishes_at_odd_order(u in symmetric3(), pts in points(3)) {
        if pts.len() % 2 == 1 {
            let v = moments::gauss_moment(&u, &pts).unwrap();
            prop_assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn engines_are_permutation_invariant(u in symmetric3(), mut pts in points(4)) {
        let before = moments::gauss_square_moment(&u, &pts).unwrap();
        pts.reverse();
        let after = moments::gauss_square_moment(&u, &pts).unwrap();
        close(before, after);
    }
}
