//! Built-in self-checks run by `oamnet verify`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use crate::mode_algebra::{
    admissible_ells, apply_rotation, lg_coefficients, lg_mode, rotation_matrix, UnitaryMatrix,
};
use crate::polarization::{canonical_state, decode_bb84, qwp_power, state_equivalent_up_to_phase, Bb84State};
use crate::runner::sort_histogram;
use crate::sorter::build_sorter_tree;
use crate::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Column states of the quarter-wave-plate table and the expected image
/// under `P`, `P·P` and `P·P·P`.
pub const QWP_TABLE: [(Bb84State, [Bb84State; 3]); 4] = [
    (Bb84State::D45, [Bb84State::L, Bb84State::D135, Bb84State::R]),
    (Bb84State::D135, [Bb84State::R, Bb84State::D45, Bb84State::L]),
    (Bb84State::L, [Bb84State::D135, Bb84State::R, Bb84State::D45]),
    (Bb84State::R, [Bb84State::D45, Bb84State::L, Bb84State::D135]),
];

/// Closed form of the order-2 rotator.
pub fn closed_form_rotation_n2(alpha: f64) -> UnitaryMatrix {
    let r = |x: f64| Complex64::new(x, 0.0);
    let (c2, s2) = (alpha.cos().powi(2), alpha.sin().powi(2));
    let k = (2.0 * alpha).sin() * FRAC_1_SQRT_2;
    let c = (2.0 * alpha).cos();
    UnitaryMatrix::from_rows(vec![
        vec![r(c2), r(k), r(s2)],
        vec![r(-k), r(c), r(k)],
        vec![r(s2), r(-k), r(c2)],
    ])
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

pub fn run_checks() -> Vec<CheckOutcome> {
    let mut rng = SimRng::seed_from_u64(0x5eed);
    let mut out = Vec::new();

    let lg = lg_coefficients(2, 0).expect("order 2");
    let want = [Complex64::new(0.5, 0.0), Complex64::new(0.0, -FRAC_1_SQRT_2), Complex64::new(-0.5, 0.0)];
    let err = lg.amplitudes().iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    out.push(check("lg-coefficients-n2-m0", err < 1e-12, format!("max error {err:.3e}")));

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let alpha = rng.random_range(-10.0..10.0);
        let m = rotation_matrix(2, alpha).expect("order 2");
        worst = worst.max(m.max_abs_diff(&closed_form_rotation_n2(alpha)));
    }
    out.push(check("rot-N2-closed-form", worst < 1e-12, format!("100 angles, max error {worst:.3e}")));

    let mut worst = 0.0f64;
    let mut cases = 0;
    for order in 0..=6u32 {
        for ell in admissible_ells(order) {
            let p = (order - ell.unsigned_abs() as u32) / 2;
            let mode = lg_mode(ell, p).expect("small order");
            for _ in 0..20 {
                let alpha = rng.random_range(-10.0..10.0);
                let rotated = apply_rotation(&mode, alpha).expect("small order");
                let expected = mode.scaled(Complex64::from_polar(1.0, -(ell as f64) * alpha));
                worst = worst.max(rotated.max_abs_diff(&expected).unwrap());
                cases += 1;
            }
        }
    }
    out.push(check("eigenphase-N<=6", worst < 1e-10, format!("{cases} cases, max error {worst:.3e}")));

    let mut worst = 0.0f64;
    for order in 0..=6u32 {
        for _ in 0..5 {
            let alpha = rng.random_range(-10.0..10.0);
            worst = worst.max(rotation_matrix(order, alpha).expect("small order").unitarity_residual());
        }
    }
    out.push(check("rotation-unitarity-N<=6", worst < 1e-10, format!("max residual {worst:.3e}")));

    let mut matched = 0;
    for (column, images) in QWP_TABLE {
        for (row, image) in images.iter().enumerate() {
            let got = qwp_power(&canonical_state(column), row as u32 + 1);
            matched += state_equivalent_up_to_phase(&got, &canonical_state(*image)) as usize;
        }
    }
    out.push(check("qwp-permutations", matched == 12, format!("{matched}/12 cases")));

    let mut ok = true;
    for depth in 0..=8u32 {
        for s in Bb84State::ALL {
            let image = qwp_power(&canonical_state(s), depth);
            ok &= decode_bb84(&image, depth) == Ok(s);
            ok &= decode_bb84(&image, 0).map(|p| p.basis) == Ok(s.basis.after_depth(depth));
        }
    }
    out.push(check("decode-inverse-d0..8", ok, "36 cases".to_string()));

    let passed = match build_sorter_tree(&[1, 2, 3, 4], true) {
        Ok(tree) => {
            let hist = sort_histogram(&tree, &[1, 2, 3, 4], 10_000, 1);
            let routed = hist.iter().all(|h| {
                let leaf = tree.leaf_for(h.ell).map(|l| l.id);
                leaf.is_some_and(|id| h.counts[id] == 10_000)
            });
            let exact = [1, 2, 3, 4].iter().all(|&ell| {
                let id = tree.leaf_for(ell).unwrap().id;
                (tree.leaf_distribution(ell)[id] - 1.0).abs() < 1e-12
            });
            (routed && exact, format!("{} leaves, 10^4 photons per address", tree.leaves().len()))
        }
        Err(e) => (false, e.to_string()),
    };
    out.push(check("sorter-determinism-1234", passed.0, passed.1));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let checks = run_checks();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        let names: Vec<_> = checks.iter().map(|c| c.name).collect();
        assert!(names.contains(&"qwp-permutations"));
        assert!(names.contains(&"rot-N2-closed-form"));
    }
}
