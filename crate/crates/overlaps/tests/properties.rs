use num_complex::Complex;
use overlaps::angles::{eigenvector_angle, phi_inverse, phi_map};
use overlaps::dynamics::{simulate_brackets, FlowConfig};
use overlaps::estimators::{ks_distance, pseudospectrum_volume, DiagAccumulator, DiskWindow, MomentAccumulator};
use overlaps::formulas::{
    exp_partial_sum, g_closed_form, g_sequence, mean_diag_exact, recurrence_m1, recurrence_m2, u_coefficient, Upper,
};
use overlaps::rand_ensembles::{sample_matrix, sample_schur_t, sample_standard_complex_gaussian};
use overlaps::schur_chain::{ChainState, PairGeometry};
use overlaps::spectral::{condition_numbers, eigendecompose, overlaps as overlap_matrix};
use overlaps::{ComplexMatrix, EnsembleKind, EnsembleSpec, RngStream, Spectrum};
use proptest::prelude::*;

type C = Complex<f64>;

fn ginibre(seed: u64, n: usize) -> ComplexMatrix<f64> {
    sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexGaussian, n), &mut RngStream::new(seed, 0))
}

fn householder(v: &[C]) -> ComplexMatrix<f64> {
    let nv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    ComplexMatrix::from_fn(v.len(), |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C::new(id, 0.0) - v[i] * v[j].conj() * (2.0 / nv)
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn overlap_rows_sum_to_one(seed in any::<u64>(), n in 2usize..25) {
        let g = ginibre(seed, n);
        let (_, sys) = eigendecompose(&g, 1e-8).unwrap();
        let o = overlap_matrix(&sys.x, &sys.y);
        for i in 0..n {
            prop_assert!((o.row_sum(i) - C::new(1.0, 0.0)).norm() <= 1e-8 * o.row_max(i));
        }
        prop_assert!(condition_numbers(&o).iter().all(|&k| k >= 1.0 - 1e-12));
    }

    #[test]
    fn overlaps_invariant_under_eigenvector_rescaling(seed in any::<u64>(), n in 2usize..15, re in 0.1f64..10.0, im in -5.0f64..5.0) {
        let g = ginibre(seed, n);
        let (_, sys) = eigendecompose(&g, 1e-8).unwrap();
        let o = overlap_matrix(&sys.x, &sys.y);
        let c = C::new(re, im);
        let i = (seed % n as u64) as usize;
        let mut x = sys.x.clone();
        let mut y = sys.y.clone();
        for v in x.column_mut(i) {
            *v *= c;
        }
        for j in 0..n {
            y[(i, j)] /= c;
        }
        let o2 = overlap_matrix(&x, &y);
        for a in 0..n {
            for b in 0..n {
                prop_assert!((o.get(a, b) - o2.get(a, b)).norm() <= 1e-12 * o.get(a, b).norm().max(o.row_max(a)));
            }
        }
    }

    #[test]
    fn overlaps_invariant_under_unitary_conjugation(seed in any::<u64>(), n in 2usize..15) {
        let g = ginibre(seed, n);
        let mut rng = RngStream::new(seed, 1);
        let v1: Vec<C> = (0..n).map(|_| sample_standard_complex_gaussian(&mut rng)).collect();
        let v2: Vec<C> = (0..n).map(|_| sample_standard_complex_gaussian(&mut rng)).collect();
        let u = householder(&v1).matmul(&householder(&v2));
        let h = u.adjoint().matmul(&g).matmul(&u);
        let (s1, e1) = eigendecompose(&g, 1e-8).unwrap();
        let (s2, e2) = eigendecompose(&h, 1e-8).unwrap();
        let o1 = overlap_matrix(&e1.x, &e1.y);
        let o2 = overlap_matrix(&e2.x, &e2.y);
        let m: Vec<usize> = s1.eigenvalues().iter().map(|&l| s2.nearest(l)).collect();
        for a in 0..n {
            for b in 0..n {
                let (x, y) = (o1.get(a, b), o2.get(m[a], m[b]));
                prop_assert!((x - y).norm() <= 1e-6 * x.norm().max(1e-8 * o1.row_max(a)), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn chain_matches_eigendecomposition(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = RngStream::new(seed, 0);
        let g = ginibre(seed, n);
        let spectrum = Spectrum::new(overlaps::spectral::eigenvalues(&g).unwrap().eigenvalues().to_vec());
        let t = sample_schur_t(&spectrum, &mut rng);
        let mut chain = ChainState::start(&spectrum, t[(0, 1)]).unwrap();
        let mut prev = chain.o11();
        for j in 2..n {
            let col: Vec<C> = (0..j).map(|i| t[(i, j)]).collect();
            chain.advance_with(&col);
            prop_assert!(chain.o11() >= prev * (1.0 - 1e-14));
            prev = chain.o11();
        }
        let (s, sys) = eigendecompose(&t, 1e-8).unwrap();
        let o = overlap_matrix(&sys.x, &sys.y);
        let i1 = s.nearest(spectrum.eigenvalues()[0]);
        let i2 = s.nearest(spectrum.eigenvalues()[1]);
        prop_assert!(rel(chain.o11(), o.get(i1, i1).re) < 1e-8);
        prop_assert!(rel(chain.o22(), o.get(i2, i2).re) < 1e-8);
        prop_assert!((chain.o12() - o.get(i1, i2)).norm() < 1e-8 * o.get(i1, i2).norm().max(1e-8 * chain.o11()));
    }

    #[test]
    fn pair_geometry_identities(log_delta in -6.0f64..6.0) {
        let geom = PairGeometry::new(10f64.powf(log_delta));
        prop_assert!(geom.a >= 1.0);
        prop_assert!((geom.a * -geom.b - 1.0).abs() < 1e-12);
        prop_assert!(rel(geom.delta_from_a(), geom.delta) < 1e-12);
    }

    #[test]
    fn partial_exponential_sums_are_additive(l in 1u64..200, kf in 0.0f64..1.0, x in 0.0f64..100.0) {
        let k = 1 + ((l - 1) as f64 * kf) as u64;
        let whole = exp_partial_sum(0, Upper::Finite(l), x).unwrap();
        let head = exp_partial_sum(0, Upper::Finite(k - 1), x).unwrap();
        let tail = exp_partial_sum(k, Upper::Finite(l), x).unwrap();
        prop_assert!(rel(head + tail, whole) < 1e-12);
        let inf = exp_partial_sum(k, Upper::Infinite, x).unwrap();
        prop_assert!(rel(head + inf, x.exp()) < 1e-12);
    }

    #[test]
    fn u_recurrence_holds(a in 1.0001f64..50.0, k in 2u64..100) {
        let lhs = u_coefficient(k, a);
        let rhs = recurrence_m1(k, a) * u_coefficient(k - 1, a) - recurrence_m2(k, a) * u_coefficient(k - 2, a);
        prop_assert!(rel(rhs, lhs) < 1e-10, "{lhs} {rhs}");
    }

    #[test]
    fn g_closed_form_matches_recurrence(a in 1.01f64..20.0) {
        let g = g_sequence(60, a);
        for k in 2..=60u64 {
            prop_assert!(rel(g_closed_form(k, a), g[k as usize]) < 1e-8, "k={k}");
        }
    }

    #[test]
    fn mean_diag_approaches_bulk_value(r in 0.0f64..0.7, n in 20usize..400) {
        let z = C::new(r, 0.0);
        let base = n as f64 * (1.0 - r * r);
        let m = mean_diag_exact(n, z);
        prop_assert!(m >= base - 1e-9 * base);
        prop_assert!(m - base < 1e-6 * base + n as f64 * (-(n as f64) * (1.0 - r * r).powi(2) / 4.0).exp());
    }

    #[test]
    fn ks_distance_is_a_probability(mut xs in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_distance(&xs, |t: f64| 1.0 / (1.0 + (-t).exp()));
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn accumulator_merge_equals_concatenation(xs in prop::collection::vec(0.0f64..1e3, 2..300), cut in 0.0f64..1.0) {
        let k = ((xs.len() as f64) * cut) as usize;
        let mut a = MomentAccumulator::new();
        let mut b = MomentAccumulator::new();
        let mut all = MomentAccumulator::new();
        xs[..k].iter().for_each(|&x| a.push(x));
        xs[k..].iter().for_each(|&x| b.push(x));
        xs.iter().for_each(|&x| all.push(x));
        let mut ba = b.clone();
        a.merge(&b);
        ba.merge(&{ let mut h = MomentAccumulator::new(); xs[..k].iter().for_each(|&x| h.push(x)); h });
        prop_assert_eq!(a.count(), all.count());
        prop_assert!(rel(a.sum(), all.sum()) < 1e-12);
        prop_assert!(rel(ba.sum(), all.sum()) < 1e-12);
    }

    #[test]
    fn diag_accumulator_merge(seed in any::<u64>()) {
        let n = 40;
        let window = DiskWindow::new(C::new(0.0, 0.0), 0.6).unwrap();
        let mut whole = DiagAccumulator::new(n, window);
        let mut a = DiagAccumulator::new(n, window);
        let mut b = DiagAccumulator::new(n, window);
        for t in 0..4 {
            let g = ginibre(seed.wrapping_add(t), n);
            let (s, sys) = eigendecompose(&g, 1e-8).unwrap();
            let d = overlaps::spectral::diagonal_overlaps(&sys.x, &sys.y);
            whole.push_matrix(s.eigenvalues(), &d);
            if t % 2 == 0 { a.push_matrix(s.eigenvalues(), &d) } else { b.push_matrix(s.eigenvalues(), &d) }
        }
        a.merge(&b);
        let (x, y) = (a.finish().unwrap(), whole.finish().unwrap());
        prop_assert_eq!(x.estimate.count, y.estimate.count);
        prop_assert!(rel(x.estimate.mean, y.estimate.mean) < 1e-12);
    }

    #[test]
    fn pseudospectrum_is_a_plain_sum(seed in any::<u64>(), eps in 1e-6f64..1e-2) {
        let n = 30;
        let (s, sys) = eigendecompose(&ginibre(seed, n), 1e-8).unwrap();
        let d = overlaps::spectral::diagonal_overlaps(&sys.x, &sys.y);
        let ball = DiskWindow::new(C::new(0.1, -0.1), 0.5).unwrap();
        let (emp, _) = pseudospectrum_volume(s.eigenvalues(), &d, &ball, eps);
        let mut direct = 0.0;
        for (l, o) in s.eigenvalues().iter().zip(&d) {
            if ball.contains(*l) {
                direct += std::f64::consts::PI * o * eps * eps;
            }
        }
        prop_assert!(rel(emp, direct) < 1e-12 || (emp == 0.0 && direct == 0.0));
    }

    #[test]
    fn angles_are_bounded(seed in any::<u64>(), n in 2usize..20) {
        let (_, sys) = eigendecompose(&ginibre(seed, n), 1e-8).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!(eigenvector_angle(&sys.x, i, j).norm() <= 1.0);
            }
        }
    }

    #[test]
    fn phi_round_trip(r in 0.0f64..0.999, th in 0.0f64..6.3) {
        let w = C::from_polar(r, th);
        prop_assert!((phi_map(phi_inverse(w)) - w).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn realized_brackets_are_hermitian(seed in any::<u64>()) {
        let n = 5;
        let cfg = FlowConfig::new(n, 1e-5, 110).unwrap();
        let (est, _) = simulate_brackets(&ginibre(seed, n), &cfg, &mut RngStream::new(seed, 9)).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(est.realized[(i, j)], est.realized[(j, i)].conj());
                prop_assert_eq!(est.nonconjugate[(i, j)], est.nonconjugate[(j, i)]);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), stream in any::<u64>()) {
        let spec = EnsembleSpec::new(EnsembleKind::ComplexBernoulli, 12);
        let a: ComplexMatrix<f64> = sample_matrix(&spec, &mut RngStream::new(seed, stream));
        let b: ComplexMatrix<f64> = sample_matrix(&spec, &mut RngStream::new(seed, stream));
        prop_assert_eq!(a, b);
    }
}
