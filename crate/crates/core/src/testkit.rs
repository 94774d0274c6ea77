//! Random states, channels and models for tests and benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{eig_hermitian, CMatrix, HermitianOperator, C64};
use crate::pauli::PauliTransferMatrix;
use crate::state::EvaluatedModel;

/// Matrix with independent standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    let g = ginibre(d, d, rng);
    HermitianOperator::symmetrized((&g + g.adjoint()) * C64::new(0.5, 0.0))
}

pub fn random_traceless_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    let h = random_hermitian(d, rng);
    let t = h.trace() / d as f64;
    h.sub(&HermitianOperator::identity(d).scale(t))
}

/// Density matrix of rank `rank` (full rank almost surely when `rank == d`).
pub fn random_density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> HermitianOperator {
    let g = ginibre(d, rank, rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    HermitianOperator::symmetrized(m * C64::new(1.0 / tr, 0.0))
}

pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    random_isometry(d, d, rng)
}

/// `rows x cols` matrix with orthonormal columns, Haar distributed.
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(rows, cols, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..cols {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..rows {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Kraus operators of a random channel with `k` Kraus terms, from a Haar
/// random Stinespring isometry.
pub fn random_kraus<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<CMatrix> {
    let d = 1usize << n;
    let v = random_isometry(d * k, d, rng);
    (0..k).map(|i| v.rows(i * d, d).into_owned()).collect()
}

pub fn random_channel<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> PauliTransferMatrix {
    PauliTransferMatrix::from_kraus(&random_kraus(n, k, rng))
        .expect("Stinespring Kraus set is complete")
}

/// Tangent vector at `rho` that a smooth family of states can realize:
/// a unitary part plus an arbitrary traceless change on the support.
pub fn random_tangent<R: Rng + ?Sized>(rho: &HermitianOperator, rng: &mut R) -> HermitianOperator {
    let d = rho.dim();
    let h = random_hermitian(d, rng);
    let comm = (h.matrix() * rho.matrix() - rho.matrix() * h.matrix()) * C64::new(0.0, -1.0);
    let e = eig_hermitian(rho).expect("finite state");
    let top = e.values.max();
    let mut p = CMatrix::zeros(d, d);
    for k in (0..d).filter(|&k| e.values[k] > 1e-12 * top) {
        let v = e.vectors.column(k);
        p += v * v.adjoint();
    }
    let x = random_hermitian(d, rng);
    let on_support = &p * x.matrix() * &p;
    let t = on_support.trace().re / p.trace().re;
    let on_support = on_support - &p * C64::new(t, 0.0);
    HermitianOperator::symmetrized(comm + on_support)
}

/// Random model with `m` parameters at a state of rank `rank`. The last
/// `dependent` derivatives are random combinations of the earlier ones.
pub fn random_model<R: Rng + ?Sized>(
    d: usize,
    rank: usize,
    m: usize,
    dependent: usize,
    rng: &mut R,
) -> EvaluatedModel {
    assert!(dependent < m);
    let rho = random_density(d, rank, rng);
    let free = m - dependent;
    let mut derivs: Vec<HermitianOperator> = (0..free).map(|_| random_tangent(&rho, rng)).collect();
    for _ in 0..dependent {
        let mut acc = HermitianOperator::zeros(d);
        for k in 0..free {
            let c: f64 = rng.sample(StandardNormal);
            acc = acc.add(&derivs[k].scale(c));
        }
        derivs.push(acc);
    }
    let names = (0..m).map(|k| format!("t{k}")).collect();
    EvaluatedModel::from_parts(names, vec![0.0; m], rho, derivs).expect("valid random model")
}
