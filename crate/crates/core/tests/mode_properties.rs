use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use oamnet::mode_algebra::{
    admissible_ells, apply_rotation, derivative_terms, lg_coefficients, lg_mode, rotation_matrix, ModeIndices,
    UnitaryMatrix,
};
use proptest::prelude::*;

/// Independent route to the polynomial factor: the coefficient of `t^k` in
/// `(1 - t)^n (1 + t)^m` is `sum_j (-1)^j C(n, j) C(m, k - j)`.
fn binomial(n: u32, k: u32) -> i128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128)
}

fn binomial_expansion(n: u32, m: u32, k: u32) -> i128 {
    (0..=k)
        .map(|j| {
            let sign = if j % 2 == 0 { 1 } else { -1 };
            sign * binomial(n, j) * binomial(m, k - j)
        })
        .sum()
}

#[test]
fn derivative_terms_match_binomial_expansion() {
    for order in 0..=10u32 {
        for n in 0..=order {
            let m = order - n;
            let conv = derivative_terms(n, m);
            assert_eq!(conv.len() as u32, order + 1);
            for (k, c) in conv.iter().enumerate() {
                assert_eq!(*c as i128, binomial_expansion(n, m, k as u32), "n={n} m={m} k={k}");
            }
        }
    }
}

#[test]
fn lg_vectors_are_orthonormal_per_order() {
    for order in 0..=6u32 {
        let modes: Vec<_> = (0..=order).map(|n| lg_coefficients(n, order - n).unwrap()).collect();
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = a.inner(b);
                assert!((got - Complex64::new(want, 0.0)).norm() < 1e-12, "order {order} ({i},{j}) = {got}");
            }
        }
    }
}

#[test]
fn full_rotation_is_identity() {
    for order in 0..=6u32 {
        let r = rotation_matrix(order, TAU).unwrap();
        assert!(r.max_abs_diff(&UnitaryMatrix::identity(order as usize + 1)) < 1e-10);
    }
}

#[test]
fn eigenphase_law_for_every_admissible_ell() {
    let alphas: Vec<f64> = (0..20).map(|i| -PI + 0.37 * i as f64).collect();
    for order in 0..=6u32 {
        for ell in admissible_ells(order) {
            let p = (order - ell.unsigned_abs() as u32) / 2;
            let mode = lg_mode(ell, p).unwrap();
            assert_eq!(ModeIndices::from_lp(ell, p).order(), order);
            for &alpha in &alphas {
                let out = apply_rotation(&mode, alpha).unwrap();
                let want = mode.scaled(Complex64::from_polar(1.0, -(ell as f64) * alpha));
                assert!(out.max_abs_diff(&want).unwrap() < 1e-10, "order {order} ell {ell} alpha {alpha}");
            }
        }
    }
}

proptest! {
    #[test]
    fn rotation_is_unitary(order in 0u32..=6, alpha in -10.0f64..10.0) {
        let r = rotation_matrix(order, alpha).unwrap();
        prop_assert!(r.unitarity_residual() < 1e-10);
    }

    #[test]
    fn rotations_compose(order in 0u32..=6, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let ab = rotation_matrix(order, a).unwrap().matmul(&rotation_matrix(order, b).unwrap());
        prop_assert!(ab.max_abs_diff(&rotation_matrix(order, a + b).unwrap()) < 1e-10);
    }

    #[test]
    fn lg_vectors_have_unit_norm(n in 0u32..=15, m in 0u32..=15) {
        let v = lg_coefficients(n, m).unwrap();
        prop_assert_eq!(v.amplitudes().len() as u32, n + m + 1);
        prop_assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
