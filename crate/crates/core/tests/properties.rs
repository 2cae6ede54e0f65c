use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ssmr_core::ftle::{cauchy_green, flow_map_gradient, ftle_from_cauchy_green, FtleOptions};
use ssmr_core::linalg::random_orthogonal;
use ssmr_core::model::{fd_jacobian, PolynomialSystem, RnnModel};
use ssmr_core::simulate::{integrate, sample_bounded_gaussian, InputSchedule, IntegrateOptions, NoiseSpec};
use ssmr_core::ssm::SsmChart;
use ssmr_core::steady::{find_fixed_points, select_slow_subspace, NewtonOptions, SpectralDecomposition};
use ssmr_core::{MonomialBasis, VectorField};

fn random_rnn(n: usize, m: usize, seed: u64, gain: f64, tau: f64) -> RnnModel {
    let w = random_orthogonal(n, seed) * gain;
    let b = random_orthogonal(n.max(m), seed + 1).view((0, 0), (n, m)).into_owned();
    let y = random_orthogonal(n, seed + 2).rows(0, 1).into_owned();
    let bias = random_orthogonal(n, seed + 3).column(0) * 0.3;
    RnnModel::vanilla(tau, w, b, y).unwrap().with_bias(bias).unwrap()
}

fn unit_vector(n: usize, seed: u64, scale: f64) -> DVector<f64> {
    random_orthogonal(n, seed).column(0) * scale
}

fn bistable() -> PolynomialSystem {
    PolynomialSystem::builder(3, 0)
        .term(0, 1.0, &[1, 0, 0])
        .term(0, -1.0, &[3, 0, 0])
        .term(1, -2.0, &[0, 1, 0])
        .term(1, 1.0, &[2, 0, 0])
        .term(2, -3.0, &[0, 0, 1])
        .term(2, 0.5, &[1, 1, 0])
        .build()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rnn_jacobian_matches_differences(n in 1usize..=10, seed in 0u64..10_000, gain in 0.1f64..2.0, scale in 0.0f64..2.0) {
        let m = random_rnn(n, 2, seed, gain, 0.5 + gain);
        let x = unit_vector(n, seed + 7, scale);
        let u = DVector::from_vec(vec![0.3, -0.2]);
        let j = m.eval_jacobian(&x, &u);
        let fd = fd_jacobian(&m, &x, &u);
        let rel = (&j - fd).norm() / j.norm().max(1e-12);
        prop_assert!(rel < 1e-6, "relative error {rel:e}");
    }

    #[test]
    fn rnn_rhs_is_affine_in_input(n in 1usize..=10, seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let tau = 0.7;
        let m = random_rnn(n, 1, seed, 0.9, tau);
        let x = unit_vector(n, seed + 11, 1.0);
        let du = m.eval(&x, &DVector::from_element(1, a)) - m.eval(&x, &DVector::from_element(1, b));
        let expected = m.b.column(0) * ((a - b) / tau);
        prop_assert!((du - expected).amax() < 1e-13);
    }

    #[test]
    fn rnn_readout_is_bounded(n in 1usize..=10, seed in 0u64..10_000, scale in 0.0f64..50.0) {
        let m = random_rnn(n, 1, seed, 1.2, 1.0);
        let z = m.readout(&unit_vector(n, seed + 5, scale)).unwrap();
        for k in 0..z.len() {
            let bound: f64 = m.y.row(k).iter().map(|v| v.abs()).sum();
            prop_assert!(z[k].abs() <= bound + 1e-15);
        }
    }

    #[test]
    fn rnn_second_derivative_is_symmetric(n in 1usize..=8, seed in 0u64..10_000) {
        let m = random_rnn(n, 1, seed, 1.0, 1.0);
        let x = unit_vector(n, seed + 3, 0.8);
        let u = DVector::zeros(1);
        let a = unit_vector(n, seed + 4, 1.0);
        let b = unit_vector(n, seed + 6, 1.0);
        let ab = m.second_derivative(&x, &u, &a, &b).unwrap();
        let ba = m.second_derivative(&x, &u, &b, &a).unwrap();
        prop_assert!((ab - ba).amax() < 1e-13);
    }

    #[test]
    fn bounded_noise_never_exceeds_bound(amp in 1e-4f64..5.0, bound in 0.5f64..4.0, seed in any::<u64>()) {
        let spec = NoiseSpec { amplitude: amp, bound, seed };
        for s in sample_bounded_gaussian(&spec, 500, 3) {
            prop_assert!(s.amax() <= amp * bound);
        }
    }

    #[test]
    fn integration_is_deterministic_and_translation_invariant(seed in 0u64..1000, split in 1usize..150) {
        let m = random_rnn(5, 1, seed, 1.5, 1.0);
        let x0 = unit_vector(5, seed + 1, 1.0);
        let schedule = InputSchedule::constant(0.0, DVector::from_element(1, 0.2));
        let opts = IntegrateOptions::new(0.01, 2.0);
        let a = integrate(&m, &x0, &schedule, &opts).unwrap();
        let b = integrate(&m, &x0, &schedule, &opts).unwrap();
        prop_assert_eq!(&a.states, &b.states);
        let t1 = a.times[split];
        let tail = integrate(
            &m,
            &a.states[split],
            &InputSchedule::constant(t1, DVector::from_element(1, 0.2)),
            &IntegrateOptions::new(0.01, 2.0),
        )
        .unwrap();
        prop_assert!((tail.states[a.len() - 1 - split].clone() - a.last()).amax() < 1e-9);
    }

    #[test]
    fn noisy_runs_repeat_bit_for_bit(seed in any::<u64>()) {
        let m = random_rnn(4, 1, 3, 0.8, 1.0);
        let opts = IntegrateOptions::new(0.01, 1.0).with_noise(NoiseSpec::new(0.05, seed));
        let x0 = DVector::zeros(4);
        let a = integrate(&m, &x0, &InputSchedule::zero(1), &opts).unwrap();
        let b = integrate(&m, &x0, &InputSchedule::zero(1), &opts).unwrap();
        prop_assert_eq!(a.states, b.states);
    }

    #[test]
    fn monomial_table_length_and_order(d in 1usize..=4, lo in 0u32..=3, extra in 0u32..=3) {
        let hi = lo + extra;
        let basis = MonomialBasis::new(d, lo, hi);
        prop_assert_eq!(basis.len(), MonomialBasis::expected_len(d, lo, hi));
        for w in basis.exponents().windows(2) {
            let (da, db) = (w[0].iter().sum::<u32>(), w[1].iter().sum::<u32>());
            prop_assert!(da < db || (da == db && w[0] > w[1]));
        }
    }

    #[test]
    fn chart_lift_and_project_are_inverse(n in 3usize..=12, d in 1usize..=2, seed in 0u64..10_000, order in 2u32..=4) {
        prop_assume!(d < n);
        let q = random_orthogonal(n, seed);
        let v = q.columns(0, d).into_owned();
        let complement = q.columns(d, n - d).into_owned();
        let basis = MonomialBasis::new(d, 2, order);
        let raw = random_orthogonal(n.max(basis.len()), seed + 1).view((0, 0), (n - d, basis.len())).into_owned();
        let anchor = unit_vector(n, seed + 2, 1.0);
        let chart = SsmChart::new(anchor.clone(), v.clone(), basis, complement * raw).unwrap();
        let eta = unit_vector(d, seed + 3, 1.5);
        prop_assert!((chart.project(&chart.lift(&eta)) - &eta).amax() < 1e-12);
        prop_assert!((chart.lift(&DVector::zeros(d)) - anchor).amax() == 0.0);
        prop_assert!((chart.tangent(&DVector::zeros(d)) - v).amax() < 1e-14);
    }

    #[test]
    fn cauchy_green_is_symmetric_psd(rows in 1usize..=8, cols in 1usize..=4, seed in 0u64..10_000, scale in 1e-3f64..1e3) {
        let k = rows.max(cols);
        let df = random_orthogonal(k, seed).view((0, 0), (rows, cols)).into_owned() * scale
            + DMatrix::from_fn(rows, cols, |i, j| ((i * 7 + j * 3) as f64).sin());
        let c = cauchy_green(&df);
        prop_assert!((&c - c.transpose()).amax() <= 1e-12 * c.amax().max(1.0));
        let eig = c.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-10 * c.amax().max(1.0));
    }

    #[test]
    fn ftle_invariant_under_plane_rebasing(theta in 0.0f64..6.28, flip in any::<bool>(), x in -1.0f64..1.0, y in -0.5f64..0.5) {
        let f = bistable();
        let u = DVector::zeros(0);
        let q = random_orthogonal(3, 17);
        let (e1, e2) = (q.column(0).into_owned(), q.column(1).into_owned());
        let s = if flip { -1.0 } else { 1.0 };
        let r1 = &e1 * theta.cos() + &e2 * theta.sin();
        let r2 = (&e2 * theta.cos() - &e1 * theta.sin()) * s;
        let p = DVector::from_vec(vec![x, y, 0.1]);
        let opts = FtleOptions::new(0.01, 1.5);
        let a = flow_map_gradient(&f, &u, &p, &[e1, e2], 1e-5, &opts).unwrap();
        let b = flow_map_gradient(&f, &u, &p, &[r1, r2], 1e-5, &opts).unwrap();
        let fa = ftle_from_cauchy_green(&cauchy_green(&a), 1.5).unwrap();
        let fb = ftle_from_cauchy_green(&cauchy_green(&b), 1.5).unwrap();
        prop_assert!((fa - fb).abs() < 1e-8, "{fa} vs {fb}");
    }

    #[test]
    fn spectral_pairs_and_slow_basis(n in 2usize..=10, seed in 0u64..10_000) {
        let m = random_rnn(n, 1, seed, 1.3, 1.0);
        let x = unit_vector(n, seed + 9, 0.5);
        let a = m.eval_jacobian(&x, &DVector::zeros(1));
        let spec = SpectralDecomposition::new(&a).unwrap();
        let scale = a.norm();
        for (l, v) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
            let av = a.map(|r| nalgebra::Complex::new(r, 0.0)) * v;
            prop_assert!((av - v * *l).norm() <= 1e-8 * scale * v.norm());
        }
        let mut j = 0;
        while j < n {
            if spec.eigenvalues[j].im != 0.0 {
                prop_assert!(spec.pair_starts_at(j));
                prop_assert!((spec.eigenvalues[j + 1] - spec.eigenvalues[j].conj()).norm() < 1e-12);
                j += 2;
            } else {
                j += 1;
            }
        }
        let Ok(sel) = select_slow_subspace(&spec, Some(1), false) else {
            prop_assert!(n == 2 && spec.eigenvalues[0].im != 0.0);
            return Ok(());
        };
        let gram = sel.v_e.transpose() * &sel.v_e;
        prop_assert!((gram - DMatrix::identity(sel.d(), sel.d())).amax() < 1e-10);
        let proj = &sel.v_e * sel.v_e.transpose();
        prop_assert!((&proj * &proj - &proj).amax() < 1e-10);
    }

    #[test]
    fn fixed_points_satisfy_tolerance(seed in 0u64..10_000, gain in 0.5f64..3.0) {
        let m = random_rnn(6, 1, seed, gain, 1.0);
        let u = DVector::zeros(1);
        let seeds: Vec<DVector<f64>> = (0..10).map(|k| unit_vector(6, seed + 20 + k, 2.0)).collect();
        let opts = NewtonOptions::default();
        for p in find_fixed_points(&m, &u, &seeds, &opts).unwrap().points {
            prop_assert!(p.residual_norm <= opts.tol);
            prop_assert!(m.eval(&p.x0, &u).norm() <= opts.tol);
        }
    }
}
