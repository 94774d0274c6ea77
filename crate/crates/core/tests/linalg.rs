use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qestim::linalg::*;
use qestim::testkit::random_hermitian;

fn rv(xs: &[f64]) -> RVector {
    DVector::from_row_slice(xs)
}

fn sym(rows: usize, xs: &[f64]) -> RealSymmetricMatrix {
    RealSymmetricMatrix::new(DMatrix::from_row_slice(rows, rows, xs)).unwrap()
}

fn pauli_x() -> HermitianOperator {
    HermitianOperator::new(CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ],
    ))
    .unwrap()
}

/// `V diag(s) V^T` with Haar-like `V` and `rank` eigenvalues in [0.05, 5].
/// Gram matrices of square Gaussian factors are too ill-conditioned for
/// absolute Penrose checks at dimension 16.
fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> RealSymmetricMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let v = g.qr().q();
    let s = DVector::from_fn(n, |i, _| {
        if i < rank {
            rng.random_range(0.05..5.0)
        } else {
            0.0
        }
    });
    RealSymmetricMatrix::symmetrized(&v * DMatrix::from_diagonal(&s) * v.transpose())
}

#[test]
fn eigenvalues_come_out_ascending() {
    let h = HermitianOperator::from_real(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]))
        .unwrap();
    let e = eig_hermitian(&h).unwrap();
    assert_eq!(e.values.as_slice(), &[1.0, 3.0]);
}

#[test]
fn pauli_x_eigenvectors_are_minus_and_plus() {
    let e = eig_hermitian(&pauli_x()).unwrap();
    assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // up to a global phase
    let minus = e.vectors.column(0);
    let plus = e.vectors.column(1);
    assert!(((minus[0] * minus[1].conj()).re + 0.5).abs() < 1e-14);
    assert!(((plus[0] * plus[1].conj()).re - 0.5).abs() < 1e-14);
    assert!((minus[0].norm() - s).abs() < 1e-14);
}

#[test]
fn random_hermitian_reconstructs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_hermitian(8, &mut rng);
    let e = eig_hermitian(&h).unwrap();
    let lam = CMatrix::from_diagonal(&e.values.map(|x| C64::new(x, 0.0)));
    assert!((&e.vectors * lam * e.vectors.adjoint() - h.matrix()).norm() < 1e-10);
    assert!((e.vectors.adjoint() * &e.vectors - CMatrix::identity(8, 8)).norm() < 1e-10);
}

#[test]
fn non_finite_input_is_rejected() {
    let m = CMatrix::from_element(2, 2, C64::new(f64::NAN, 0.0));
    assert!(HermitianOperator::new(m.clone()).is_err());
    assert!(matches!(
        eig_hermitian(&HermitianOperator::symmetrized(m)),
        Err(qestim::Error::InvalidInput(_))
    ));
}

#[test]
fn asymmetric_matrix_is_rejected() {
    assert!(
        RealSymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err()
    );
}

#[test]
fn pseudo_inverse_small_cases() {
    let p = pseudo_inverse(&sym(2, &[2.0, 0.0, 0.0, 0.0]), None).unwrap();
    assert_eq!(p.rank, 1);
    assert!((p.pinv.clone() - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).norm() < 1e-15);
    assert_eq!(p.null_space().ncols(), 1);

    let p = pseudo_inverse(
        &RealSymmetricMatrix::symmetrized(DMatrix::identity(3, 3)),
        None,
    )
    .unwrap();
    assert_eq!(p.rank, 3);
    assert!((p.pinv - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);

    let p = pseudo_inverse(
        &RealSymmetricMatrix::symmetrized(DMatrix::zeros(3, 3)),
        None,
    )
    .unwrap();
    assert_eq!(p.rank, 0);
    assert!(pseudo_inverse(&sym(1, &[1.0]), Some(0.0)).is_err());
}

#[test]
fn penrose_conditions_for_rank_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_psd(&mut rng, 4, 2);
    let p = pseudo_inverse(&a, None).unwrap();
    assert_eq!(p.rank, 2);
    let a = a.matrix();
    assert!((a * &p.pinv * a - a).norm() < 1e-8);
}

#[test]
fn support_projector_cases() {
    let p = support_projector(&sym(2, &[2.0, 0.0, 0.0, 0.0]), None).unwrap();
    assert!((p - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = support_projector(&random_psd(&mut rng, 3, 3), None).unwrap();
    assert!((p - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);

    let v = rv(&[1.0, 2.0, 2.0]) / 3.0;
    let vvt = &v * v.transpose();
    let p = support_projector(&RealSymmetricMatrix::symmetrized(vvt.clone()), None).unwrap();
    assert!((p - vvt).norm() < 1e-12);
}

#[test]
fn vectorize_paulis() {
    let z = HermitianOperator::from_real(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]))
        .unwrap();
    assert_eq!(vectorize_hermitian(&z).as_slice(), &[1.0, -1.0, 0.0, 0.0]);
    assert_eq!(
        vectorize_hermitian(&pauli_x()).as_slice(),
        &[0.0, 0.0, std::f64::consts::SQRT_2, 0.0]
    );
}

#[test]
fn span_small_cases() {
    let v = residual_in_span(&rv(&[1.0, 0.0]), &[rv(&[0.0, 1.0])], 1e-7).unwrap();
    assert!(!v.in_span);
    assert!((v.residual_norm - 1.0).abs() < 1e-15);

    let v = residual_in_span(&rv(&[2.0, 2.0]), &[rv(&[1.0, 1.0])], 1e-7).unwrap();
    assert!(v.in_span);
    assert!((v.coefficients[0] - 2.0).abs() < 1e-14);

    let v = residual_in_span(&rv(&[0.0, 0.0]), &[rv(&[1.0, 1.0])], 1e-7).unwrap();
    assert!(v.in_span && v.coefficients == vec![0.0]);

    let v = residual_in_span(&rv(&[3.0, 4.0]), &[], 1e-7).unwrap();
    assert!(!v.in_span && v.coefficients.is_empty());
    assert!((v.residual_norm - 5.0).abs() < 1e-15);

    assert!(residual_in_span(&rv(&[1.0]), &[rv(&[1.0, 0.0])], 1e-7).is_err());
}

#[test]
fn span_with_duplicated_columns_gives_minimum_norm() {
    let b = rv(&[1.0, 1.0, 0.0]);
    let v = residual_in_span(&rv(&[2.0, 2.0, 0.0]), &[b.clone(), b], 1e-7).unwrap();
    assert!(v.in_span);
    assert!((v.coefficients[0] - 1.0).abs() < 1e-12 && (v.coefficients[1] - 1.0).abs() < 1e-12);
}

#[test]
fn cubic_roots_match_eigenvalues() {
    // characteristic polynomial of a real symmetric 3x3 via the trigonometric formula
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let a = random_psd(&mut rng, 3, 3).into_matrix() - DMatrix::identity(3, 3) * 0.5;
        let q = a.trace() / 3.0;
        let b = &a - DMatrix::identity(3, 3) * q;
        let p = ((&b * &b).trace() / 6.0).sqrt();
        let r = (b / p).determinant() / 2.0;
        let phi = r.clamp(-1.0, 1.0).acos() / 3.0;
        let tau = 2.0 * std::f64::consts::PI / 3.0;
        let mut roots = [
            q + 2.0 * p * phi.cos(),
            q + 2.0 * p * (phi + tau).cos(),
            q + 2.0 * p * (phi + 2.0 * tau).cos(),
        ];
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let e = eig_symmetric(&RealSymmetricMatrix::symmetrized(a)).unwrap();
        for k in 0..3 {
            assert!((e.values[k] - roots[k]).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn penrose_conditions(seed in any::<u64>(), n in 2usize..=16, r in 0usize..=16) {
        let rank = r.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_psd(&mut rng, n, rank);
        let p = pseudo_inverse(&a, None).unwrap();
        let (a, x) = (a.matrix(), &p.pinv);
        prop_assert!((a * x * a - a).norm() <= 1e-8);
        prop_assert!((x * a * x - x).norm() <= 1e-8);
        prop_assert!(((a * x).transpose() - a * x).norm() <= 1e-8);
        prop_assert!(((x * a).transpose() - x * a).norm() <= 1e-8);
        prop_assert_eq!(p.rank, rank);

        let proj = support_projector(&RealSymmetricMatrix::symmetrized(a.clone()), None).unwrap();
        prop_assert!((&proj * &proj - &proj).norm() <= 1e-8);
        prop_assert!((proj.transpose() - &proj).norm() <= 1e-8);
    }

    #[test]
    fn vectorize_is_linear_isometry(seed in any::<u64>(), d in 1usize..=6, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h1 = random_hermitian(d, &mut rng);
        let h2 = random_hermitian(d, &mut rng);
        prop_assert!((vectorize_hermitian(&h1).norm() - h1.frobenius_norm()).abs() <= 1e-12 * h1.frobenius_norm().max(1.0));
        let lhs = vectorize_hermitian(&h1.scale(a).add(&h2.scale(b)));
        let rhs = vectorize_hermitian(&h1) * a + vectorize_hermitian(&h2) * b;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * 10.0);
    }

    #[test]
    fn eig_reconstructs(seed in any::<u64>(), d in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(d, &mut rng);
        let e = eig_hermitian(&h).unwrap();
        let lam = CMatrix::from_diagonal(&e.values.map(|x| C64::new(x, 0.0)));
        prop_assert!((&e.vectors * lam * e.vectors.adjoint() - h.matrix()).norm() <= 1e-10);
        prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn span_of_combination_is_detected(seed in any::<u64>(), k in 1usize..=5, len in 6usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis: Vec<RVector> = (0..k).map(|_| RVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))).collect();
        let c: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut t = RVector::zeros(len);
        for (b, x) in basis.iter().zip(&c) {
            t += b * *x;
        }
        let v = residual_in_span(&t, &basis, 1e-7).unwrap();
        prop_assert!(v.in_span);
        // a generic extra direction leaves the span
        let off = RVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0));
        prop_assert!(!residual_in_span(&(t + off), &basis, 1e-7).unwrap().in_span);
    }
}
