use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;

use gapcount::birman_schwinger::bs_operator;
use gapcount::compute_bands;
use gapcount::inertia::{count_tridiagonal, eigs_tridiagonal};
use gapcount::linalg::{SymMatrix, Tridiagonal};
use gapcount::ltsums::{check_sum_identity, gap_power_sum, SumFunction};
use gapcount::operators::{
    make_perturbation, JacobiOperator, PeriodicBackground, Perturbation, PerturbationSpec, Profile, SiteShift, Window,
};
use gapcount::splitting::split;

fn tridiag() -> impl Strategy<Value = Tridiagonal<f64>> {
    (2usize..80).prop_flat_map(|n| {
        (prop::collection::vec(-3.0..3.0f64, n), prop::collection::vec(0.05..2.0f64, n - 1))
            .prop_map(|(d, o)| Tridiagonal::new(d, o).unwrap())
    })
}

fn background() -> impl Strategy<Value = PeriodicBackground<f64>> {
    (1usize..5).prop_flat_map(|p| {
        (prop::collection::vec(0.3..1.5f64, p), prop::collection::vec(-2.0..2.0f64, p))
            .prop_map(|(a, b)| PeriodicBackground::new(a, b).unwrap())
    })
}

/// Sites in `-5..=5` with `|δb| <= db_max` and `|δa| <= da_max`.
fn explicit(da_max: f64, db_max: f64) -> impl Strategy<Value = Perturbation<f64>> {
    prop::collection::btree_map(-5i64..=5, (-da_max..=da_max, -db_max..=db_max), 1..8).prop_map(|m| {
        let map: BTreeMap<i64, SiteShift<f64>> = m.into_iter().map(|(n, (da, db))| (n, SiteShift { da, db })).collect();
        Perturbation::explicit(map).unwrap()
    })
}

fn dense_eigs(t: &Tridiagonal<f64>) -> Vec<f64> {
    let d = t.to_dense();
    let m = DMatrix::from_fn(d.rows(), d.cols(), |i, j| d[(i, j)]);
    let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn with_diag_shift(t: &Tridiagonal<f64>, shift: &[f64]) -> Tridiagonal<f64> {
    let d = t.diag().iter().zip(shift).map(|(x, s)| x + s).collect();
    Tridiagonal::new(d, t.off().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn count_matches_dense(t in tridiag(), a in -4.0..4.0f64, w in 0.01..4.0f64) {
        let ev = dense_eigs(&t);
        let b = a + w;
        // stay clear of eigenvalues so rounding cannot decide the answer
        prop_assume!(ev.iter().all(|&l| (l - a).abs() > 1e-8 && (l - b).abs() > 1e-8));
        let want = ev.iter().filter(|&&l| l > a && l < b).count();
        prop_assert_eq!(count_tridiagonal(&t, (a, b), 1e-12).unwrap().count, want);
    }

    #[test]
    fn bisection_brackets_eigenvalues(t in tridiag(), a in -4.0..0.0f64, b in 0.1..4.0f64) {
        let ev = dense_eigs(&t);
        prop_assume!(ev.iter().all(|&l| (l - a).abs() > 1e-8 && (l - b).abs() > 1e-8));
        let got = eigs_tridiagonal(&t, (a, b), 1e-12).unwrap();
        let want: Vec<f64> = ev.into_iter().filter(|&l| l > a && l < b).collect();
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!(*g > a && *g < b);
            prop_assert!((g - w).abs() < 1e-9, "{} vs {}", g, w);
        }
    }

    #[test]
    fn truncation_interlaces(bg in background(), pert in explicit(0.2, 1.5), n in 5u64..40, s in -4.0..4.0f64) {
        let j = JacobiOperator::new(bg, pert).unwrap();
        let small = j.truncate(Window::symmetric(n)).unwrap();
        let large = j.truncate(Window::symmetric(n + 3)).unwrap();
        prop_assert!(large.tridiagonal().count_below(s) >= small.tridiagonal().count_below(s));
    }

    #[test]
    fn psd_shift_lowers_counts(t in tridiag(), seed in 0.0..1.0f64, s in -4.0..4.0f64) {
        let shift: Vec<f64> = (0..t.dim()).map(|i| ((i as f64 + 1.0) * seed * 7.3).sin().abs()).collect();
        let up = with_diag_shift(&t, &shift);
        prop_assert!(up.count_below(s) <= t.count_below(s));
    }

    #[test]
    fn split_reconstructs_and_is_psd(pert in explicit(0.8, 3.0), half in 0u64..12) {
        let sp = split(&pert, Window::symmetric(half));
        let c = sp.checks(&pert).unwrap();
        prop_assert!(c.reconstruction_ulps <= 1.0, "{}", c.reconstruction_ulps);
        prop_assert!(c.psd);
        prop_assert!(c.trace_bound);
    }

    #[test]
    fn kernel_is_symmetric_and_decreasing(pert in explicit(0.0, 2.0), e in -0.9..0.8f64, de in 0.01..0.1f64) {
        let bg = PeriodicBackground::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap();
        let w = Window::centered(41).unwrap();
        let a = SymMatrix::Tridiagonal(bg.truncate(w).tridiagonal().clone());
        let plus = split(&pert, w).plus_matrix();
        let lo = bs_operator(&a, &plus, e, 1e-10).unwrap();
        let hi = bs_operator(&a, &plus, e + de, 1e-10).unwrap();
        prop_assert!(lo.kernel.asymmetry() <= 1e-12 * lo.kernel.max_abs().max(1.0));
        // (e - A)^{-1} decreases in e, so the count of K >= 1 cannot grow
        prop_assert!(hi.count_ge(1.0).unwrap() <= lo.count_ge(1.0).unwrap());
    }

    #[test]
    fn power_sums_decrease_in_alpha(pert in explicit(0.1, 0.3)) {
        let bg = PeriodicBackground::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap();
        let bands = compute_bands(&bg, 1e-13).unwrap();
        let j = JacobiOperator::new(bg, pert).unwrap();
        // every distance is at most ‖δJ‖ <= 0.5, so d^α falls as α grows
        let r = gap_power_sum(&j, &bands, &[0.5, 1.0, 2.0], Window::centered(61).unwrap(), 1e-11).unwrap();
        prop_assert!(r.power_sums[0] >= r.power_sums[1] && r.power_sums[1] >= r.power_sums[2]);
    }

    #[test]
    fn norms_grow_with_radius(scale in -2.0..2.0f64, power in 1.1..3.0f64, r in 1u64..500) {
        let pert = make_perturbation(
            PerturbationSpec::PowerLaw { da: Profile::zero(), db: Profile::power_law(scale, power) },
            false,
        ).unwrap();
        let a = pert.norms(r, 0.5);
        let b = pert.norms(2 * r, 0.5);
        prop_assert!(b.tc_norm >= a.tc_norm);
        prop_assert!(b.log_weighted_norm >= a.log_weighted_norm);
    }

    #[test]
    fn identity_sides_agree(pert in explicit(0.2, 2.0), alpha in 0.3..2.0f64) {
        let bg = PeriodicBackground::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap();
        let j = JacobiOperator::new(bg, pert).unwrap();
        let r = check_sum_identity(&j, -1.0, 1.0, &SumFunction::Power(alpha), Window::centered(61).unwrap(), 1e-12).unwrap();
        prop_assert!(r.exact_discrepancy <= 1e-12 * (1.0 + r.lhs.abs()));
        prop_assert!(r.quadrature_discrepancy <= 1e-9 * (1.0 + r.lhs.abs()));
    }
}

#[test]
fn single_precision_pipeline() {
    let bg = PeriodicBackground::<f32>::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap();
    let bands = compute_bands(&bg, 1e-5f32).unwrap();
    let edges: Vec<f32> = bands.edges().iter().map(|e| e.lambda).collect();
    let s5 = 5f32.sqrt();
    for (g, w) in edges.iter().zip([-s5, -1.0, 1.0, s5]) {
        assert!((g - w).abs() < 1e-4, "{g} vs {w}");
    }
    let j = JacobiOperator::new(bg, Perturbation::<f32>::impurity(0, 1.5)).unwrap();
    let t = j.truncate(Window::centered(201).unwrap()).unwrap();
    let c = count_tridiagonal(t.tridiagonal(), (-0.99f32, 0.99), 1e-5).unwrap();
    assert!(c.count <= 1);
}
