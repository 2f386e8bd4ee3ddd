use llab_core::angles::{build_fields, AngleModel};
use llab_core::cocycle::{
    conjugated_matrix, matrix_product, schrodinger_matrix, CocycleParams, Conjugated, GrowthTracker, Mat2, ScaledVec,
    Schrodinger,
};
use llab_core::herman::{complex_norm, laurent_transfer, LaurentMat};
use llab_core::lyapunov::{birkhoff_average, le_birkhoff, reduced_bracket};
use llab_core::phase::{DyadicGrid, DyadicPhase};
use llab_core::polar::{a_value, g, polar_decompose, theta0, ReducedCocycle};
use llab_core::potential::{level_crossings, Potential, PotentialSpec};
use llab_core::cocycle::CocycleMap;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

fn sl2(alpha: f64, log_s: f64, beta: f64) -> Mat2<f64> {
    let s = log_s.exp();
    Mat2::rotation(alpha) * Mat2::diag(s, 1.0 / s) * Mat2::rotation(beta)
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn monotone() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![Just(PotentialSpec::affine()), (-0.5f64..=0.5).prop_map(|a| PotentialSpec::smooth_monotone(a).unwrap())]
}

proptest! {
    #[test]
    fn iterate_is_exact(bits in prop::collection::vec(any::<bool>(), 60..200), k_frac in 0.0f64..1.0) {
        let x = DyadicPhase::from_bits(bits.iter().copied());
        let k = (k_frac * (bits.len() - 53) as f64) as usize;
        let shifted = x.iterate(k).unwrap().to_real();
        prop_assert_eq!(shifted, x.orbit_real(k));
        let manual: f64 = bits[k..k + 53].iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| (-(i as f64) - 1.0).exp2()).sum();
        prop_assert!((shifted - manual).abs() <= 2f64.powi(-53));
    }

    #[test]
    fn grid_avoids_discontinuities(level in 1u32..=12) {
        let grid = DyadicGrid::new(level).unwrap();
        for x in grid.points() {
            for n in 0..=level {
                prop_assert!((x * (n as f64).exp2()).fract() != 0.0);
            }
        }
    }

    #[test]
    fn doubling_is_two_to_one(level in 1u32..=10) {
        let mut images: BTreeMap<DyadicPhase, usize> = BTreeMap::new();
        for j in 0..1u64 << (level + 1) {
            let x = DyadicPhase::from_dyadic(j, level + 1).unwrap();
            *images.entry(x.double().unwrap()).or_default() += 1;
        }
        prop_assert_eq!(images.len(), 1usize << level);
        prop_assert!(images.values().all(|&c| c == 2));
    }

    #[test]
    fn monotone_level_sets_have_at_most_one_point(v in monotone(), t in -1.0f64..=2.0) {
        prop_assert!(level_crossings(&v, t, 512).len() <= 1);
    }

    #[test]
    fn derivative_matches_central_difference(v in monotone(), x in 0.01f64..0.99) {
        let h = (-20f64).exp2();
        let fd = (v.eval(x + h).unwrap() - v.eval(x - h).unwrap()) / (2.0 * h);
        let d = v.eval_deriv(x).unwrap();
        prop_assert!(((fd - d) / d).abs() < 1e-6);
    }

    #[test]
    fn generated_matrices_are_unimodular(lambda in 0.1f64..1e4, t in -1.0f64..=2.0, v in -5.0f64..5.0) {
        let p = CocycleParams::new(lambda, t).unwrap();
        let s = schrodinger_matrix(&p, v);
        let c = conjugated_matrix(&p, v);
        prop_assert!((s.det() - 1.0).abs() < 1e-12);
        prop_assert!((c.det() - 1.0).abs() < 1e-12 * c.frobenius().powi(2).max(1.0));
    }

    #[test]
    fn apply_composes(
        a in prop::array::uniform3(0.0f64..TAU),
        b in prop::array::uniform3(0.0f64..TAU),
        s1 in 0.0f64..4.0,
        s2 in 0.0f64..4.0,
        angle in 0.0f64..TAU,
        log_norm in -50.0f64..50.0,
    ) {
        let m1 = sl2(a[0], s1, a[1]);
        let m2 = sl2(b[0], s2, b[1]);
        let w = ScaledVec::new(angle, log_norm);
        let stepwise = w.apply(&m2).unwrap().apply(&m1).unwrap();
        let direct = w.apply(&(m1 * m2)).unwrap();
        prop_assert!(circular_gap(stepwise.angle, direct.angle) < 1e-10);
        prop_assert!((stepwise.log_norm - direct.log_norm).abs() < 1e-10);
    }

    #[test]
    fn polar_reconstructs(alpha in 0.0f64..TAU, beta in 0.0f64..TAU, log_s in 0.0954f64..8.0) {
        let b = sl2(alpha, log_s, beta);
        let p = polar_decompose(&b).unwrap();
        prop_assert!(p.reconstruction_error(&b) < 1e-10);
        prop_assert!(((p.norm() - b.norm()) / b.norm()).abs() < 1e-12);
    }

    #[test]
    fn norm_identity(v in monotone(), x in 0.0f64..1.0, t in -1.0f64..=2.0, lambda in 2.0f64..1e3) {
        let p = CocycleParams::new(lambda, t).unwrap();
        let norm = conjugated_matrix(&p, v.value(x)).norm();
        let predicted = lambda * (a_value(&v, x, t, lambda).unwrap() / 2.0).sqrt();
        prop_assert!(((norm - predicted) / predicted).abs() < 1e-10);
    }

    #[test]
    fn theta0_branch(v in monotone(), x in 0.0f64..1.0, t in -1.0f64..=2.0) {
        let th = theta0(&v, x, t).unwrap();
        prop_assert!(th > 0.0 && th < PI);
        prop_assert!((th.sin() - 1.0 / g(&v, x, t).unwrap().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reduced_matrix_is_unimodular(v in monotone(), x in 0.0f64..1.0, t in -1.0f64..=2.0, lambda in 1.0f64..1e3) {
        let p = CocycleParams::new(lambda, t).unwrap();
        let m = ReducedCocycle::new(p, &v).matrix_at(x).unwrap();
        prop_assert!((m.det() - 1.0).abs() < 1e-12 * m.frobenius().powi(2).max(1.0));
    }

    #[test]
    fn laurent_matches_cocycle_on_circle(
        m in 0u64..(1 << 30),
        n in 1usize..=10,
        energy in -4.0f64..4.0,
        lambda in 0.5f64..3.0,
    ) {
        let (laurent, direct, _) = circle_pair(m, n, energy, lambda);
        prop_assert!((laurent - direct).abs() < 1e-8);
    }

    #[test]
    fn laurent_circle_error_tracks_cancellation(
        m in 0u64..(1 << 30),
        n in 1usize..=10,
        energy in -8.0f64..8.0,
        lambda in 0.5f64..10.0,
    ) {
        let (laurent, direct, l1) = circle_pair(m, n, energy, lambda);
        let cond = l1 / direct.exp();
        prop_assert!((laurent - direct).abs() < 1e-8f64.max(1e-14 * cond), "cond {cond:e}");
    }
}

/// `(log |P_n(z)|, log ||A_n(x)||, sum of |coefficients|)` at `x = m / 2^30`.
fn circle_pair(m: u64, n: usize, energy: f64, lambda: f64) -> (f64, f64, f64) {
    let v = PotentialSpec::two_cos();
    let lm: LaurentMat<f64> = laurent_transfer(energy, lambda, &v, n).unwrap();
    let z = lm.eval_on_circle(m, 30);
    let x = DyadicPhase::from_dyadic(m, 30).unwrap();
    let p = CocycleParams::from_energy(energy, lambda).unwrap();
    let direct = matrix_product(&Schrodinger::new(p, &v), &x, n).unwrap().log_norm();
    let l1 = lm.entries().iter().flat_map(|e| e.terms().map(|(_, c)| c.abs())).sum();
    (complex_norm(&z).ln(), direct, l1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conjugation_preserves_birkhoff(v in monotone(), t in -1.0f64..=2.0, lambda in 2.0f64..50.0, seed in any::<u64>()) {
        let p = CocycleParams::new(lambda, t).unwrap();
        let (a, sa) = birkhoff_average(&Schrodinger::new(p, &v), 400, 24, seed).unwrap();
        let (b, sb) = birkhoff_average(&Conjugated::new(p, &v), 400, 24, seed).unwrap();
        prop_assert!((a - b).abs() <= 3.0 * sa.hypot(sb) + 1e-12);
    }

    #[test]
    fn birkhoff_is_seed_deterministic(t in -1.0f64..=2.0, lambda in 1.0f64..50.0, seed in any::<u64>()) {
        let v = PotentialSpec::affine();
        let p = CocycleParams::new(lambda, t).unwrap();
        let a = le_birkhoff(p, &v, 300, 8, seed).unwrap();
        let b = le_birkhoff(p, &v, 300, 8, seed).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn lift_is_monotone_on_segments(v in monotone(), t in -1.0f64..=2.0, big in any::<bool>()) {
        let lambda = if big { 100.0 } else { 10.0 };
        let model = AngleModel::new(&v, t, lambda).unwrap();
        for f in build_fields(&model, 8, DyadicGrid::new(14).unwrap()).unwrap() {
            prop_assert_eq!(f.inversions(), 0);
            prop_assert!(f.min_dtheta().1 > 0.0);
        }
    }

    #[test]
    fn angle_bound_sits_below_upper_bound(v in monotone(), t in -1.0f64..=2.0, lambda in 5.0f64..200.0) {
        let p = CocycleParams::new(lambda, t).unwrap();
        let b = reduced_bracket(p, &v, 6, DyadicGrid::new(12).unwrap()).unwrap();
        prop_assert!(b.lower.value <= b.upper.value + 1e-2);
    }
}

#[test]
fn growth_tracker_survives_long_orbits() {
    let m = Mat2::new(100.0 * 0.3, -1.0, 1.0, 0.0);
    let mut w = GrowthTracker::e1();
    for _ in 0..100_000 {
        w.apply(&m).unwrap();
    }
    let per_step = w.log_norm() / 1e5;
    assert!(per_step.is_finite() && (per_step - 30f64.ln()).abs() < 0.01);
}
