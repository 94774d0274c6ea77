use criterion::{criterion_group, criterion_main, Criterion};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use qestim::estimability::{optimal_measurement, qfim};
use qestim::learnability::{cnot_cycle_model, learnability_report, rz_cycle_model, RzAngles};
use qestim::pauli::{brute_force_twirl, symmetric_clifford_twirl};
use qestim::sensing::{sample, Scenario};
use qestim::state::ghz_ancilla_probe;
use qestim::testkit::random_channel;
use qestim::Tolerances;

fn estimability(c: &mut Criterion) {
    let m = ghz_ancilla_probe(3).unwrap();
    let mut t = vec![0.3];
    t.extend([0.04; 7]);
    t.extend((0..8).map(|x| 0.9 - 0.05 * x as f64));
    let em = m.evaluate(&t).unwrap();
    c.bench_function("qfim ghz n=3", |b| {
        b.iter(|| qfim(black_box(&em), None).unwrap())
    });
    c.bench_function("optimal measurement ghz n=3", |b| {
        b.iter(|| optimal_measurement(black_box(&em), 0, Tolerances::default()).unwrap())
    });
}

fn twirl(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_channel(2, 3, &mut rng);
    c.bench_function("twirl closed form n=2", |b| {
        b.iter(|| symmetric_clifford_twirl(black_box(&a)))
    });
    c.bench_function("twirl group average n=2", |b| {
        b.iter(|| brute_force_twirl(black_box(&a)).unwrap())
    });
}

fn learnability(c: &mut Criterion) {
    let rz = rz_cycle_model(0.3, RzAngles::Combined).unwrap();
    let cnot = cnot_cycle_model().unwrap();
    let tol = Tolerances::default();
    c.bench_function("learnability rz", |b| {
        b.iter(|| learnability_report(&rz, black_box(&rz.default_point), tol).unwrap())
    });
    c.bench_function("learnability cnot", |b| {
        b.iter(|| learnability_report(&cnot, black_box(&cnot.default_point), tol).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let sc = Scenario::twirled(vec![0.6, 0.85, 0.2], None).unwrap();
    c.bench_function("sample 1e5 shots", |b| {
        b.iter(|| sample(&sc, 100_000, black_box(7)).unwrap())
    });
}

criterion_group!(benches, estimability, twirl, learnability, sampling);
criterion_main!(benches);
