use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qestim::linalg::{eig_hermitian, CMatrix, C64};
use qestim::pauli::all_paulis;
use qestim::state::*;
use qestim::PauliIndex;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn ghz_theta(phi: f64, p: &[f64], lam: &[f64], free: bool) -> Vec<f64> {
    let mut t = vec![phi];
    t.extend(if free { p } else { &p[1..] });
    t.extend(lam);
    t
}

#[test]
fn ghz_analytic_derivatives_match_finite_differences() {
    let n = 2;
    let m = ghz_ancilla_probe(n).unwrap();
    let t = ghz_theta(
        0.41,
        &[0.7, 0.12, 0.1, 0.08],
        &[0.92, 0.75, 0.6, 0.83],
        false,
    );
    let a = m.evaluate(&t).unwrap();
    let f = m.evaluate_finite_difference(&t).unwrap();
    for (x, y) in a.derivs.iter().zip(&f.derivs) {
        assert!(x.sub(y).frobenius_norm() <= 1e-8);
    }
}

#[test]
fn naive_and_twirled_derivatives_match_finite_differences() {
    let m = naive_phase_probe(2, &plus_state(2)).unwrap();
    let mut t = vec![0.7];
    t.extend((1..16).map(|k| 0.95 - 0.02 * k as f64));
    let (a, f) = (
        m.evaluate(&t).unwrap(),
        m.evaluate_finite_difference(&t).unwrap(),
    );
    for (x, y) in a.derivs.iter().zip(&f.derivs) {
        assert!(x.sub(y).frobenius_norm() <= 1e-8);
    }
    let m = twirled_qubit_probe();
    let t = [1.1, 0.8, -0.2];
    let (a, f) = (
        m.evaluate(&t).unwrap(),
        m.evaluate_finite_difference(&t).unwrap(),
    );
    for (x, y) in a.derivs.iter().zip(&f.derivs) {
        assert!(x.sub(y).frobenius_norm() <= 1e-8);
    }
}

/// Ideal probe `(|0..0>|0> + e^{i n phi}|1..1>|1>) / sqrt 2`.
fn ideal_ghz(n: usize, phi: f64) -> CMatrix {
    let d = 1usize << (n + 1);
    let mut psi = CMatrix::zeros(d, 1);
    psi[(0, 0)] = c(std::f64::consts::FRAC_1_SQRT_2);
    psi[(d - 1, 0)] = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, n as f64 * phi);
    &psi * psi.adjoint()
}

#[test]
fn ghz_model_equals_pauli_noise_on_the_ideal_probe() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in 1..=3usize {
        let phi = 0.53;
        let strings: Vec<String> = all_paulis(n).map(|p| p.to_string()).collect();
        let raw: Vec<f64> = strings.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum::<f64>() * 1.5;
        let mut rates: Vec<f64> = raw.iter().map(|r| r / s).collect();
        rates[0] += 1.0 - rates.iter().sum::<f64>();

        // Kraus application with the ancilla untouched
        let ideal = ideal_ghz(n, phi);
        let mut noisy = CMatrix::zeros(ideal.nrows(), ideal.ncols());
        let nx = 1usize << n;
        let (mut p, mut lam) = (vec![0.0; nx], vec![0.0; nx]);
        for (label, &r) in strings.iter().zip(&rates) {
            let e = PauliIndex::parse(&format!("{label}I")).unwrap().matrix();
            noisy += &e * &ideal * e.adjoint() * c(r);
            let x = label.chars().fold(0usize, |acc, ch| {
                (acc << 1) | matches!(ch, 'X' | 'Y') as usize
            });
            let sign = if label.chars().filter(|ch| matches!(ch, 'Z' | 'Y')).count() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            p[x] += r;
            lam[x] += r * sign;
        }
        for x in 0..nx {
            lam[x] /= p[x];
        }
        let m = ghz_ancilla_probe_with(n, GhzWeights::Free).unwrap();
        let rho = m.state_at(&ghz_theta(phi, &p, &lam, true)).unwrap();
        assert!((rho.matrix() - &noisy).norm() < 1e-13, "n = {n}");

        // each syndrome block carries weight p_x
        for x in 0..nx {
            let pi = ghz_syndrome_projector(n, x).unwrap();
            assert!(((pi.matrix() * rho.matrix()).trace().re - p[x]).abs() < 1e-13);
        }
    }
}

#[test]
fn twirled_probe_spectrum_follows_bloch_length() {
    let m = twirled_qubit_probe();
    let (l, a) = (0.6, 0.35);
    let e = eig_hermitian(&m.state_at(&[0.9, l, a]).unwrap()).unwrap();
    let r = (l * l + a * a).sqrt();
    assert!((e.values[0] - (1.0 - r) / 2.0).abs() < 1e-14);
    assert!((e.values[1] - (1.0 + r) / 2.0).abs() < 1e-14);
}

#[test]
fn domain_violations_are_reported() {
    let m = twirled_qubit_probe();
    assert!(matches!(
        m.state_at(&[0.0, 0.9, 0.5]),
        Err(qestim::Error::DomainError(_))
    ));
    let g = ghz_ancilla_probe(1).unwrap();
    // implied p_0 would be negative
    assert!(g.state_at(&[0.0, 1.2, 0.9, 0.9]).is_err());
    assert!(naive_phase_probe(4, &plus_state(4)).is_err());
}

#[test]
fn states_are_valid_across_the_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let m = ghz_ancilla_probe(2).unwrap();
    for _ in 0..50 {
        let mut p: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        let lam: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = m
            .state_at(&ghz_theta(rng.random_range(-3.0..3.0), &p, &lam, false))
            .unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-9);
        assert!(eig_hermitian(&rho).unwrap().values[0] >= -1e-9);
    }
}

#[test]
fn parameter_lookup() {
    let m = ghz_ancilla_probe(2).unwrap();
    assert_eq!(
        m.param_names()[..2],
        ["phi".to_string(), "p_01".to_string()]
    );
    assert_eq!(m.param_index("lambda_11").unwrap(), 7);
    assert!(m.param_index("nope").is_err());
}
