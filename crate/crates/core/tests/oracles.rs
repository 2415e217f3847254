//! Cross-checks against independent oracles: nalgebra's dense symmetric
//! eigensolver and closed-form values for the free chain and the period-2
//! background.

use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gapcount::birman_schwinger::{bs_decompose, bs_operator, gap_bound, BoundVariant};
use gapcount::green::{free_green, GreenSolver};
use gapcount::inertia::{count_in_interval, dense_count_ge, eigs_in_interval};
use gapcount::instances::{bound_instance, engineered_gap, random_psd, rng_for};
use gapcount::linalg::{Matrix, SymMatrix, Tridiagonal};
use gapcount::ltsums::gap_power_sum;
use gapcount::operators::{
    make_perturbation, JacobiOperator, PeriodicBackground, Perturbation, PerturbationSpec, Profile, SiteShift, Window,
};
use gapcount::splitting::split;
use gapcount::{compute_bands, discriminant};

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn na_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn p2() -> PeriodicBackground<f64> {
    PeriodicBackground::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap()
}

fn mixed_sign() -> Perturbation<f64> {
    make_perturbation(
        PerturbationSpec::PowerLaw {
            da: Profile::power_law(0.3, 2.0).alternating(),
            db: Profile::power_law(-1.2, 1.5),
        },
        false,
    )
    .unwrap()
}

#[test]
fn p2_band_edges_are_discriminant_roots() {
    let bands = compute_bands(&p2(), 1e-12).unwrap();
    let s5 = 5f64.sqrt();
    let edges: Vec<f64> = bands.edges().iter().map(|e| e.lambda).collect();
    for (got, want) in edges.iter().zip([-s5, -1.0, 1.0, s5]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
        // Δ(λ) = λ² - 3 reaches ±2 at every edge
        assert_abs_diff_eq!(discriminant(&p2(), *got).abs(), 2.0, epsilon = 1e-9);
    }
}

#[test]
fn impurity_eigenvalue_and_mirror() {
    for (s, interval, want) in [(1.5, (2.1, 3.0), 2.5), (-1.5, (-3.0, -2.1), -2.5)] {
        let j = JacobiOperator::new(PeriodicBackground::free(), Perturbation::impurity(0, s)).unwrap();
        let t = j.truncate(Window::centered(2001).unwrap()).unwrap();
        let ev = eigs_in_interval(&t, interval, 1e-12).unwrap();
        assert_eq!(ev.len(), 1);
        assert_abs_diff_eq!(ev[0], want, epsilon = 1e-6);
    }
}

#[test]
fn p2_impurity_gap_count_matches_dense() {
    let j = JacobiOperator::new(p2(), Perturbation::impurity(0, 1.5)).unwrap();
    let t = j.truncate(Window::centered(401).unwrap()).unwrap();
    let dense = na_eigs(&to_na(&t.tridiagonal().to_dense()));
    let want = dense.iter().filter(|&&l| l > -1.0 && l < 1.0).count();
    let got = count_in_interval(&t, (-1.0, 1.0), 1e-12).unwrap().count;
    assert_eq!(got, want);
    assert!(got <= 1);
}

#[test]
fn random_tridiagonal_counts_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let n = rng.random_range(1..=200);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let o: Vec<f64> = (1..n).map(|_| rng.random_range(0.01..2.0)).collect();
        let t = Tridiagonal::new(d, o).unwrap();
        let dense = na_eigs(&to_na(&t.to_dense()));
        for _ in 0..5 {
            let s: f64 = rng.random_range(-6.0..6.0);
            assert_eq!(t.count_below(s), dense.iter().filter(|&&l| l < s).count());
        }
    }
}

#[test]
fn dense_count_matches_nalgebra() {
    let mut rng = rng_for(50);
    let g = Matrix::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0));
    let s = g.add(&g.transpose()).scale(0.5);
    let want = na_eigs(&to_na(&s)).iter().filter(|&&l| l >= 0.5).count();
    assert_eq!(dense_count_ge(&s, 0.5).unwrap(), want);
}

#[test]
fn free_green_matches_truncated_solve() {
    let solver = GreenSolver::new(PeriodicBackground::free()).unwrap();
    for &(l, n, m) in &[(2.5, 0, 0), (2.5, 1, 0), (-3.0, 2, -4), (2.05, 7, 3)] {
        let want = free_green(1.0, 0.0, l, n, m).unwrap();
        let got = solver.green_function(n, m, l, None, 1e-13).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-11);
    }
    assert_abs_diff_eq!(free_green(1.0, 0.0, 2.5, 0, 0).unwrap(), -2.0 / 3.0, epsilon = 1e-15);
}

#[test]
fn kernel_matches_explicit_sandwich() {
    for seed in 0..10 {
        let inst = engineered_gap::<f64>(25, &mut rng_for(seed), seed);
        let b = random_psd(25, 3, 1.0, &mut rng_for(seed + 100));
        let (x, y) = inst.gap;
        let e = 0.5 * (x + y);
        let k = bs_operator(&inst.a_sym(), &SymMatrix::Dense(b.clone()), e, 1e-8).unwrap();
        // σ(B^{1/2} R B^{1/2}) \ {0} = σ(R B) \ {0}, with R = (e - A)^{-1} from nalgebra
        let a = to_na(&inst.a);
        let r = (DMatrix::identity(25, 25) * e - a).try_inverse().unwrap();
        let rb = &r * to_na(&b);
        let mut want: Vec<f64> = rb.complex_eigenvalues().iter().map(|z| z.re).filter(|v| v.abs() > 1e-9).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut got: Vec<f64> = k.eigenvalues().unwrap().into_iter().filter(|v| v.abs() > 1e-9).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got.len(), want.len(), "seed {seed}");
        for (g, w) in got.iter().zip(&want) {
            assert_abs_diff_eq!(*g, *w, epsilon = 1e-8 * w.abs().max(1.0));
        }
    }
}

#[test]
fn impurity_kernel_is_one() {
    let a = SymMatrix::Tridiagonal(
        PeriodicBackground::free().truncate(Window::centered(2001).unwrap()).tridiagonal().clone(),
    );
    let mut b = vec![0.0; 2001];
    b[1000] = 1.5;
    let k = bs_operator(&a, &SymMatrix::Diagonal(b), 2.5, 1e-10).unwrap();
    assert_eq!(k.dim(), 1);
    assert_abs_diff_eq!(k.kernel[(0, 0)], 1.0, epsilon = 1e-4);
}

#[test]
fn bound_lhs_matches_dense_oracle() {
    for seed in 0..30 {
        let inst = bound_instance::<f64>(seed, (10, 60));
        let (x, y) = inst.base.gap;
        let e1 = 0.5 * (x + y);
        let e0 = x + 0.5 * (e1 - x);
        let r = gap_bound(
            BoundVariant::Bounded,
            &inst.base.a_sym(),
            &SymMatrix::Dense(inst.b_plus.clone()),
            &SymMatrix::Dense(inst.b_minus.clone()),
            (x, y),
            e0,
            1e-6 * (y - x),
        )
        .unwrap();
        let c = to_na(&inst.base.a) + to_na(&inst.b_plus) - to_na(&inst.b_minus);
        let lhs = na_eigs(&c).iter().filter(|&&l| l > e0 && l < e1).count();
        assert_eq!(r.lhs, lhs, "seed {seed}");
        assert!(r.satisfied);
    }
}

#[test]
fn operator_bounds_on_p2_section() {
    let w = Window::centered(401).unwrap();
    let a = PeriodicBackground::truncate(&p2(), w).tridiagonal().clone();
    let sp = split(&mixed_sign(), w);
    let dense = na_eigs(&to_na(&a.to_dense()));
    let x = dense.iter().copied().filter(|&l| l < 0.0).fold(f64::NEG_INFINITY, f64::max);
    let y = dense.iter().copied().filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    let am = SymMatrix::Tridiagonal(a.clone());
    for v in [BoundVariant::Bounded, BoundVariant::LowerSemibounded] {
        let r = gap_bound(v, &am, &sp.plus_matrix(), &sp.minus_matrix(), (x, y), -0.5, 1e-6 * (y - x)).unwrap();
        let c = to_na(&a.to_dense()) + to_na(&sp.plus_matrix().to_dense()) - to_na(&sp.minus_matrix().to_dense());
        let lhs = na_eigs(&c).iter().filter(|&&l| l > -0.5 && l < 0.5 * (x + y)).count();
        assert_eq!(r.lhs, lhs);
        assert!(r.satisfied, "{v}: {} > {}", r.lhs, r.rhs);
    }
}

#[test]
fn decomposition_on_seeded_instance() {
    let inst = bound_instance::<f64>(30, (30, 30));
    let (x, y) = inst.base.gap;
    let c_plus = inst.base.a.add(&inst.b_plus);
    let d = bs_decompose(
        &SymMatrix::Dense(inst.b_minus.clone()),
        &SymMatrix::Dense(c_plus),
        0.5 * (x + y),
        y,
        Some(x),
        1e-9,
    )
    .unwrap();
    assert!(d.checks.all_pass(), "{:?}", d.checks);
    assert!(d.checks.completeness < 1e-10);
}

#[test]
fn power_sums_match_dense_eigensolve() {
    let j = JacobiOperator::new(p2(), mixed_sign()).unwrap();
    let bands = compute_bands(&p2(), 1e-14).unwrap();
    for n in [101usize, 201, 401] {
        let w = Window::centered(n).unwrap();
        let r = gap_power_sum(&j, &bands, &[0.6], w, 1e-11).unwrap();
        let dense = na_eigs(&to_na(&j.truncate(w).unwrap().tridiagonal().to_dense()));
        let want: f64 = dense
            .iter()
            .filter(|&&l| !bands.contains(l))
            .map(|&l| bands.distance(l))
            .filter(|&d| d > 1e-9)
            .map(|d| d.powf(0.6))
            .sum();
        assert_abs_diff_eq!(r.power_sums[0], want, epsilon = 1e-8);
    }
}

#[test]
fn alternating_power_law_sums_match_dense_oracle() {
    let pert = make_perturbation(
        PerturbationSpec::PowerLaw { da: Profile::zero(), db: Profile::power_law(1.0, 2.0).alternating() },
        false,
    )
    .unwrap();
    let j = JacobiOperator::new(p2(), pert).unwrap();
    let bands = compute_bands(&p2(), 1e-14).unwrap();
    for n in [100usize, 200] {
        let w = Window::centered(n).unwrap();
        let r = gap_power_sum(&j, &bands, &[0.6], w, 1e-10).unwrap();
        let dense = na_eigs(&to_na(&j.truncate(w).unwrap().tridiagonal().to_dense()));
        let want: f64 = dense.iter().map(|&l| bands.distance(l)).filter(|&d| d > 1e-9).map(|d| d.powf(0.6)).sum();
        assert_abs_diff_eq!(r.power_sums[0], want, epsilon = 1e-8);
    }
}

#[test]
fn power_law_norm_limit() {
    let pert =
        make_perturbation(PerturbationSpec::PowerLaw { da: Profile::zero(), db: Profile::power_law(1.0, 2.0) }, false)
            .unwrap();
    let want = 1.0 + 2.0 * (std::f64::consts::PI.powi(2) / 6.0 - 1.0);
    // the tail beyond 10⁶ is about 2·10⁻⁶
    assert_abs_diff_eq!(pert.norms(1_000_000, 0.5).tc_norm, want, epsilon = 1e-5);
}

#[test]
fn explicit_split_reconstructs() {
    let mut rng = rng_for(9);
    let mut map = BTreeMap::new();
    for n in -10..=10 {
        map.insert(n, SiteShift { da: rng.random_range(-0.5..0.5), db: rng.random_range(-2.0..2.0) });
    }
    let pert = Perturbation::explicit(map).unwrap();
    let sp = split(&pert, Window::symmetric(15));
    let c = sp.checks(&pert).unwrap();
    assert!(c.reconstruction_ulps <= 1.0);
    assert!(c.psd);
    let plus = to_na(&sp.plus_matrix().to_dense());
    let minus = to_na(&sp.minus_matrix().to_dense());
    assert!(na_eigs(&plus)[0] >= -1e-12);
    assert!(na_eigs(&minus)[0] >= -1e-12 * minus.norm());
}
