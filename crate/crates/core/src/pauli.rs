//! n-qubit Pauli operators, Pauli transfer matrices, Choi states and the
//! symmetric-Clifford twirl.
//!
//! Pauli `P_(x,z) = prod_q i^(x_q z_q) X_q^(x_q) Z_q^(z_q)`. Qubit 1 is the
//! leftmost tensor factor and the most significant bit of `x` and `z`.
//! Transfer-matrix rows and columns use the linear index `x * 2^n + z`, so a
//! single qubit is ordered I, Z, X, Y.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, CMatrix, HermitianOperator, RMatrix, C64};

pub const MAX_QUBITS: usize = 3;
const TP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliIndex {
    pub n: usize,
    pub x: u32,
    pub z: u32,
}

impl PauliIndex {
    pub fn new(n: usize, x: u32, z: u32) -> Result<Self> {
        if n == 0 || n > 16 || x >> n != 0 || z >> n != 0 {
            return Err(Error::InvalidInput(format!(
                "bad Pauli index n={n} x={x:#b} z={z:#b}"
            )));
        }
        Ok(Self { n, x, z })
    }

    pub fn from_linear(n: usize, k: usize) -> Self {
        Self {
            n,
            x: (k >> n) as u32,
            z: (k & ((1 << n) - 1)) as u32,
        }
    }

    pub fn linear(&self) -> usize {
        ((self.x as usize) << self.n) | self.z as usize
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// Symplectic form `x.z' + z.x' mod 2`; zero when the two Paulis commute.
    pub fn symplectic(&self, other: &Self) -> u32 {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) & 1
    }

    /// Number of Y factors.
    pub fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// `+1` when `P^T = P`, `-1` when `P^T = -P`.
    pub fn transpose_sign(&self) -> f64 {
        if self.y_count().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        let n = label.len();
        if n == 0 || n > 16 {
            return Err(Error::InvalidInput(format!("bad Pauli label {label:?}")));
        }
        let (mut x, mut z) = (0u32, 0u32);
        for (q, ch) in label.chars().enumerate() {
            let bit = 1u32 << (n - 1 - q);
            match ch {
                'I' => {}
                'X' => x |= bit,
                'Z' => z |= bit,
                'Y' => {
                    x |= bit;
                    z |= bit
                }
                _ => return Err(Error::InvalidInput(format!("bad Pauli label {label:?}"))),
            }
        }
        Ok(Self { n, x, z })
    }

    /// Sign and column index of the single nonzero entry of `P` in column `k`:
    /// `P |k> = phase * |k ^ x>`.
    fn column_phase(&self, k: usize) -> C64 {
        let sign = if (k as u32 & self.z).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        i_pow(self.y_count()) * sign
    }

    pub fn matrix(&self) -> CMatrix {
        let d = 1usize << self.n;
        let mut m = CMatrix::zeros(d, d);
        for k in 0..d {
            m[(k ^ self.x as usize, k)] = self.column_phase(k);
        }
        m
    }

    /// `Tr[P m]` in `O(dim)`.
    pub fn trace_with(&self, m: &CMatrix) -> C64 {
        let d = 1usize << self.n;
        let mut s = C64::new(0.0, 0.0);
        for k in 0..d {
            // (P m)_{kk} = P[k, k^x] m[k^x, k]
            let j = k ^ self.x as usize;
            s += self.column_phase(j) * m[(j, k)];
        }
        s
    }
}

impl fmt::Display for PauliIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            let bit = 1u32 << (self.n - 1 - q);
            let c = match (self.x & bit != 0, self.z & bit != 0) {
                (false, false) => 'I',
                (false, true) => 'Z',
                (true, false) => 'X',
                (true, true) => 'Y',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

fn i_pow(k: u32) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

pub fn num_paulis(n: usize) -> usize {
    1 << (2 * n)
}

pub fn all_paulis(n: usize) -> impl Iterator<Item = PauliIndex> {
    (0..num_paulis(n)).map(move |k| PauliIndex::from_linear(n, k))
}

pub fn pauli_matrix(p: &PauliIndex) -> CMatrix {
    p.matrix()
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidInput(format!(
            "qubit count must be in 1..={MAX_QUBITS}, got {n}"
        )));
    }
    Ok(())
}

fn qubits_for_dim(d: usize) -> Result<usize> {
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "dimension {d} is not a power of two"
        )));
    }
    let n = d.trailing_zeros() as usize;
    check_qubits(n)?;
    Ok(n)
}

/// Real Pauli coefficients `Tr[P_a h] / 2^n` of a Hermitian operator.
pub fn pauli_coefficients(h: &CMatrix, n: usize) -> Vec<f64> {
    let d = (1usize << n) as f64;
    all_paulis(n).map(|p| p.trace_with(h).re / d).collect()
}

/// Diagonal Pauli channel. `rates[0]` is the probability of no error and
/// `eigenvalues[0] = 1`; both vectors have length `4^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliChannel {
    pub n: usize,
    rates: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl PauliChannel {
    /// From the `4^n - 1` error rates of the non-identity Paulis.
    pub fn from_rates(n: usize, rates: &[f64]) -> Result<Self> {
        check_qubits(n)?;
        let m = num_paulis(n);
        if rates.len() != m - 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} rates, got {}",
                m - 1,
                rates.len()
            )));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < -1e-12) {
            return Err(Error::InvalidChannel(
                "rates must be finite and non-negative".into(),
            ));
        }
        let total: f64 = rates.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidChannel(format!("rates sum to {total} > 1")));
        }
        let mut full = Vec::with_capacity(m);
        full.push(1.0 - total);
        full.extend_from_slice(rates);
        let eigenvalues = rates_to_eigenvalues(n, &full);
        Ok(Self {
            n,
            rates: full,
            eigenvalues,
        })
    }

    /// From the `4^n - 1` eigenvalues of the non-identity Paulis. Fails when
    /// the implied rates are negative (not completely positive).
    pub fn from_eigenvalues(n: usize, eigenvalues: &[f64]) -> Result<Self> {
        let ch = Self::from_eigenvalues_unchecked(n, eigenvalues)?;
        if let Some((k, r)) = ch.rates.iter().enumerate().find(|(_, r)| **r < -1e-12) {
            return Err(Error::InvalidChannel(format!(
                "eigenvalues imply negative rate {r:.3e} for {}",
                PauliIndex::from_linear(n, k)
            )));
        }
        Ok(ch)
    }

    /// As [`Self::from_eigenvalues`] without the positivity check; useful for
    /// derivatives and perturbed points.
    pub fn from_eigenvalues_unchecked(n: usize, eigenvalues: &[f64]) -> Result<Self> {
        check_qubits(n)?;
        let m = num_paulis(n);
        if eigenvalues.len() != m - 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} eigenvalues, got {}",
                m - 1,
                eigenvalues.len()
            )));
        }
        if eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidChannel("eigenvalues must be finite".into()));
        }
        let mut full = Vec::with_capacity(m);
        full.push(1.0);
        full.extend_from_slice(eigenvalues);
        let rates = eigenvalues_to_rates(n, &full);
        Ok(Self {
            n,
            rates,
            eigenvalues: full,
        })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn ptm(&self) -> PauliTransferMatrix {
        let m = num_paulis(self.n);
        PauliTransferMatrix {
            n: self.n,
            data: RMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
                &self.eigenvalues[..m],
            )),
        }
    }
}

/// `lambda_b = sum_a (-1)^<a,b> p_a` over all `4^n` Paulis.
pub fn rates_to_eigenvalues(n: usize, rates: &[f64]) -> Vec<f64> {
    all_paulis(n)
        .map(|b| {
            all_paulis(n)
                .zip(rates)
                .map(|(a, p)| if a.symplectic(&b) == 0 { *p } else { -*p })
                .sum()
        })
        .collect()
}

/// Inverse of [`rates_to_eigenvalues`].
pub fn eigenvalues_to_rates(n: usize, eigenvalues: &[f64]) -> Vec<f64> {
    let m = num_paulis(n) as f64;
    all_paulis(n)
        .map(|a| {
            all_paulis(n)
                .zip(eigenvalues)
                .map(|(b, l)| if a.symplectic(&b) == 0 { *l } else { -*l })
                .sum::<f64>()
                / m
        })
        .collect()
}

/// `A[a, b] = Tr[P_a N(P_b)] / 2^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTransferMatrix {
    pub n: usize,
    pub data: RMatrix,
}

impl PauliTransferMatrix {
    pub fn new(n: usize, data: RMatrix) -> Result<Self> {
        check_qubits(n)?;
        let m = num_paulis(n);
        if data.nrows() != m || data.ncols() != m {
            return Err(Error::InvalidInput(format!(
                "transfer matrix for {n} qubits must be {m}x{m}, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "transfer matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { n, data })
    }

    /// Like [`Self::new`] but also requires trace preservation.
    pub fn new_channel(n: usize, data: RMatrix) -> Result<Self> {
        let p = Self::new(n, data)?;
        p.check_trace_preserving()?;
        Ok(p)
    }

    pub fn identity(n: usize) -> Self {
        let m = num_paulis(n);
        Self {
            n,
            data: RMatrix::identity(m, m),
        }
    }

    pub fn check_trace_preserving(&self) -> Result<()> {
        let row = self.data.row(0);
        let dev = row.iter().enumerate().fold(0.0_f64, |a, (k, v)| {
            a.max((v - if k == 0 { 1.0 } else { 0.0 }).abs())
        });
        if dev > TP_TOL {
            return Err(Error::InvalidChannel(format!(
                "map is not trace preserving (deviation {dev:.3e})"
            )));
        }
        Ok(())
    }

    pub fn entry(&self, a: &PauliIndex, b: &PauliIndex) -> f64 {
        self.data[(a.linear(), b.linear())]
    }

    pub fn set_entry(&mut self, a: &PauliIndex, b: &PauliIndex, v: f64) {
        self.data[(a.linear(), b.linear())] = v;
    }

    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        Self::from_kraus(std::slice::from_ref(u))
    }

    pub fn from_kraus(kraus: &[CMatrix]) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidInput("empty Kraus list".into()))?;
        let d = first.nrows();
        let n = qubits_for_dim(d)?;
        let mut sum = CMatrix::zeros(d, d);
        for k in kraus {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::InvalidInput(
                    "Kraus operators must share one square shape".into(),
                ));
            }
            if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput(
                    "Kraus operator has non-finite entries".into(),
                ));
            }
            sum += k.adjoint() * k;
        }
        let dev = (sum - CMatrix::identity(d, d))
            .iter()
            .fold(0.0_f64, |a, z| a.max(z.norm()));
        if dev > TP_TOL {
            return Err(Error::InvalidChannel(format!(
                "Kraus operators are not trace preserving (deviation {dev:.3e})"
            )));
        }
        let m = num_paulis(n);
        let mut data = RMatrix::zeros(m, m);
        for b in all_paulis(n) {
            let pb = b.matrix();
            let mut out = CMatrix::zeros(d, d);
            for k in kraus {
                out += k * &pb * k.adjoint();
            }
            for a in all_paulis(n) {
                data[(a.linear(), b.linear())] = a.trace_with(&out).re / d as f64;
            }
        }
        Ok(Self { n, data })
    }

    /// Applies the map to an arbitrary (not necessarily Hermitian) operator.
    pub fn apply_matrix(&self, m: &CMatrix) -> Result<CMatrix> {
        let d = 1usize << self.n;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::InvalidInput(format!("operator must be {d}x{d}")));
        }
        let coeffs: Vec<C64> = all_paulis(self.n)
            .map(|p| p.trace_with(m) / d as f64)
            .collect();
        let mut out = CMatrix::zeros(d, d);
        for a in all_paulis(self.n) {
            let row = self.data.row(a.linear());
            let c: C64 = row.iter().zip(&coeffs).map(|(x, y)| y * *x).sum();
            if c.norm() == 0.0 {
                continue;
            }
            for k in 0..d {
                out[(k ^ a.x as usize, k)] += c * a.column_phase(k);
            }
        }
        Ok(out)
    }
}

/// A channel given in any of the supported representations.
#[derive(Debug, Clone)]
pub enum ChannelSpec {
    Kraus(Vec<CMatrix>),
    Unitary(CMatrix),
    Pauli(PauliChannel),
    Ptm(PauliTransferMatrix),
}

pub fn ptm_of(spec: &ChannelSpec) -> Result<PauliTransferMatrix> {
    match spec {
        ChannelSpec::Kraus(k) => PauliTransferMatrix::from_kraus(k),
        ChannelSpec::Unitary(u) => PauliTransferMatrix::from_unitary(u),
        ChannelSpec::Pauli(p) => Ok(p.ptm()),
        ChannelSpec::Ptm(p) => {
            p.check_trace_preserving()?;
            Ok(p.clone())
        }
    }
}

/// `outer` after `inner`.
pub fn compose(
    outer: &PauliTransferMatrix,
    inner: &PauliTransferMatrix,
) -> Result<PauliTransferMatrix> {
    if outer.n != inner.n {
        return Err(Error::InvalidInput(format!(
            "cannot compose {}- and {}-qubit maps",
            outer.n, inner.n
        )));
    }
    Ok(PauliTransferMatrix {
        n: outer.n,
        data: &outer.data * &inner.data,
    })
}

/// `a` on the leading qubits, `b` on the trailing ones.
pub fn tensor(a: &PauliTransferMatrix, b: &PauliTransferMatrix) -> Result<PauliTransferMatrix> {
    let n = a.n + b.n;
    check_qubits(n)?;
    let m = num_paulis(n);
    let mut data = RMatrix::zeros(m, m);
    let join = |pa: PauliIndex, pb: PauliIndex| PauliIndex {
        n,
        x: (pa.x << b.n) | pb.x,
        z: (pa.z << b.n) | pb.z,
    };
    for ra in all_paulis(a.n) {
        for ca in all_paulis(a.n) {
            let va = a.entry(&ra, &ca);
            if va == 0.0 {
                continue;
            }
            for rb in all_paulis(b.n) {
                for cb in all_paulis(b.n) {
                    let r = join(ra, rb).linear();
                    let c = join(ca, cb).linear();
                    data[(r, c)] = va * b.entry(&rb, &cb);
                }
            }
        }
    }
    Ok(PauliTransferMatrix { n, data })
}

pub fn apply(ptm: &PauliTransferMatrix, rho: &HermitianOperator) -> Result<HermitianOperator> {
    Ok(HermitianOperator::symmetrized(
        ptm.apply_matrix(rho.matrix())?,
    ))
}

/// Trace-one Choi state `(N (x) id)(|Phi><Phi|)` on output (first) and
/// reference (second) registers.
#[derive(Debug, Clone)]
pub struct ChoiBlock {
    pub n: usize,
    pub state: HermitianOperator,
}

impl ChoiBlock {
    /// Validates trace one and that the reference marginal is maximally mixed.
    pub fn new(n: usize, state: HermitianOperator) -> Result<Self> {
        check_qubits(n)?;
        let d = 1usize << n;
        if state.dim() != d * d {
            return Err(Error::InvalidInput(format!(
                "Choi state for {n} qubits must be {0}x{0}",
                d * d
            )));
        }
        let m = state.matrix();
        for r1 in 0..d {
            for r2 in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for o in 0..d {
                    s += m[(o * d + r1, o * d + r2)];
                }
                let want = if r1 == r2 { 1.0 / d as f64 } else { 0.0 };
                if (s - want).norm() > TP_TOL {
                    return Err(Error::InvalidChannel(
                        "Choi state reference marginal is not maximally mixed".into(),
                    ));
                }
            }
        }
        Ok(Self { n, state })
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eig_hermitian(&self.state)?.values[0])
    }

    pub fn is_completely_positive(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }
}

/// Linear map from transfer-matrix data to the trace-one Choi matrix,
/// `(1/4^n) sum_ij c_j A_ij P_i (x) P_j`. Valid for derivatives too.
pub fn choi_matrix(n: usize, a: &RMatrix) -> HermitianOperator {
    let d = 1usize << n;
    let dd = d * d;
    let norm = 1.0 / num_paulis(n) as f64;
    let mut out = CMatrix::zeros(dd, dd);
    for i in all_paulis(n) {
        for j in all_paulis(n) {
            let v = a[(i.linear(), j.linear())];
            if v == 0.0 {
                continue;
            }
            let c = v * j.transpose_sign() * norm;
            for ki in 0..d {
                let pi = i.column_phase(ki) * c;
                let ri = ki ^ i.x as usize;
                for kj in 0..d {
                    let rj = kj ^ j.x as usize;
                    out[(ri * d + rj, ki * d + kj)] += pi * j.column_phase(kj);
                }
            }
        }
    }
    HermitianOperator::symmetrized(out)
}

pub fn choi_of(ptm: &PauliTransferMatrix) -> Result<ChoiBlock> {
    ptm.check_trace_preserving()?;
    ChoiBlock::new(ptm.n, choi_matrix(ptm.n, &ptm.data))
}

/// Inverse of [`choi_matrix`]: `A_ij = c_j Tr[(P_i (x) P_j) rho]`.
pub fn ptm_from_choi(choi: &ChoiBlock) -> Result<PauliTransferMatrix> {
    let n = choi.n;
    let d = 1usize << n;
    let m = choi.state.matrix();
    let np = num_paulis(n);
    let mut data = RMatrix::zeros(np, np);
    for i in all_paulis(n) {
        for j in all_paulis(n) {
            let mut s = C64::new(0.0, 0.0);
            for ki in 0..d {
                let ri = ki ^ i.x as usize;
                let pi = i.column_phase(ki);
                for kj in 0..d {
                    let rj = kj ^ j.x as usize;
                    // (P (x) Q)[row, col] * rho[col, row]
                    s += pi * j.column_phase(kj) * m[(ki * d + kj, ri * d + rj)];
                }
            }
            data[(i.linear(), j.linear())] = j.transpose_sign() * s.re;
        }
    }
    PauliTransferMatrix::new(n, data)
}

/// Closed-form average of `C^dagger N C` over the symmetric Clifford group
/// generated by CZ, S^dagger and Z.
///
/// Entries with `x = x' = 0` survive unchanged, entries with `x != x'`
/// vanish, and for `x = x' != 0`
/// `(-1)^(z.s) E_v[(-1)^(v.s) A_(x,v),(x,v^dz)]` with `dz = z ^ z'` and
/// `s = x & dz`.
pub fn symmetric_clifford_twirl(a: &PauliTransferMatrix) -> PauliTransferMatrix {
    let n = a.n;
    let m = num_paulis(n);
    let nz = 1u32 << n;
    let mut data = RMatrix::zeros(m, m);
    for r in all_paulis(n) {
        for c in all_paulis(n) {
            if r.x != c.x {
                continue;
            }
            let v = if r.x == 0 {
                a.entry(&r, &c)
            } else {
                let dz = r.z ^ c.z;
                let s = r.x & dz;
                let mut acc = 0.0;
                for v in 0..nz {
                    let sign = if (v & s).count_ones() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    let row = PauliIndex { n, x: r.x, z: v };
                    let col = PauliIndex {
                        n,
                        x: r.x,
                        z: v ^ dz,
                    };
                    acc += sign * a.entry(&row, &col);
                }
                let outer = if (r.z & s).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                outer * acc / nz as f64
            };
            data[(r.linear(), c.linear())] = v;
        }
    }
    PauliTransferMatrix { n, data }
}

fn single_qubit_on(n: usize, q: usize, g: &CMatrix) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for k in 0..n {
        let f = if k == q {
            g.clone()
        } else {
            CMatrix::identity(2, 2)
        };
        out = out.kronecker(&f);
    }
    out
}

fn cz_on(n: usize, q1: usize, q2: usize) -> CMatrix {
    let d = 1usize << n;
    let (b1, b2) = (1usize << (n - 1 - q1), 1usize << (n - 1 - q2));
    CMatrix::from_fn(d, d, |r, c| {
        if r != c {
            C64::new(0.0, 0.0)
        } else if r & b1 != 0 && r & b2 != 0 {
            C64::new(-1.0, 0.0)
        } else {
            C64::new(1.0, 0.0)
        }
    })
}

/// Unitaries `prod CZ^nu prod (S^dagger)^mu prod Z^xi` of the symmetric
/// Clifford group in a fixed order (`nu`, then `mu`, then `xi` as bit masks).
pub fn symmetric_clifford_elements(n: usize) -> Result<Vec<CMatrix>> {
    if n == 0 || n > 2 {
        return Err(Error::Unsupported(format!(
            "group enumeration is limited to n <= 2, got {n}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let sdg = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(1.0, 0.0),
        C64::new(0.0, -1.0),
    ]));
    let z = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(1.0, 0.0),
        C64::new(-1.0, 0.0),
    ]));
    let d = 1usize << n;
    let mut out = Vec::new();
    for nu in 0..(1usize << pairs.len()) {
        for mu in 0..(1usize << n) {
            for xi in 0..(1usize << n) {
                let mut u = CMatrix::identity(d, d);
                for (k, &(a, b)) in pairs.iter().enumerate() {
                    if nu >> k & 1 == 1 {
                        u *= cz_on(n, a, b);
                    }
                }
                for q in 0..n {
                    if mu >> q & 1 == 1 {
                        u *= single_qubit_on(n, q, &sdg);
                    }
                }
                for q in 0..n {
                    if xi >> q & 1 == 1 {
                        u *= single_qubit_on(n, q, &z);
                    }
                }
                out.push(u);
            }
        }
    }
    Ok(out)
}

/// Explicit group average of `C^dagger o N o C`; reference for
/// [`symmetric_clifford_twirl`] on one and two qubits.
pub fn brute_force_twirl(a: &PauliTransferMatrix) -> Result<PauliTransferMatrix> {
    let elements = symmetric_clifford_elements(a.n)?;
    let m = num_paulis(a.n);
    let mut acc = RMatrix::zeros(m, m);
    for u in &elements {
        let c = PauliTransferMatrix::from_unitary(u)?.data;
        // PTM of the adjoint action is the transpose for unitaries.
        acc += c.transpose() * &a.data * &c;
    }
    Ok(PauliTransferMatrix {
        n: a.n,
        data: acc / elements.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_qubit_order_and_labels() {
        let labels: Vec<String> = all_paulis(1).map(|p| p.to_string()).collect();
        assert_eq!(labels, ["I", "Z", "X", "Y"]);
        let y = PauliIndex::parse("Y").unwrap().matrix();
        assert_eq!(y[(0, 1)], C64::new(0.0, -1.0));
        assert_eq!(y[(1, 0)], C64::new(0.0, 1.0));
        assert_eq!(PauliIndex::parse("XZ").unwrap().linear(), 0b10 << 2 | 0b01);
    }

    #[test]
    fn trace_with_matches_dense_product() {
        let m = CMatrix::from_fn(4, 4, |r, c| {
            C64::new((r * 4 + c) as f64, (r as f64) - (c as f64) * 0.5)
        });
        for p in all_paulis(2) {
            let dense = (p.matrix() * &m).trace();
            assert!((dense - p.trace_with(&m)).norm() < 1e-12);
        }
    }

    #[test]
    fn depolarizing_eigenvalues() {
        let p = 0.1;
        let ch = PauliChannel::from_rates(1, &[p / 3.0; 3]).unwrap();
        for l in &ch.eigenvalues()[1..] {
            assert!((l - (1.0 - 4.0 * p / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_tp_kraus_rejected() {
        let k = CMatrix::identity(2, 2) * C64::new(0.9, 0.0);
        assert!(matches!(
            ptm_of(&ChannelSpec::Kraus(vec![k])),
            Err(Error::InvalidChannel(_))
        ));
    }

    #[test]
    fn group_sizes() {
        assert_eq!(symmetric_clifford_elements(1).unwrap().len(), 4);
        assert_eq!(symmetric_clifford_elements(2).unwrap().len(), 32);
        assert!(matches!(
            symmetric_clifford_elements(3),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn identity_choi_is_bell_state() {
        let c = choi_of(&PauliTransferMatrix::identity(1)).unwrap();
        let m = c.state.matrix();
        for (r, cc) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert!((m[(r, cc)].re - 0.5).abs() < 1e-15);
        }
        assert!((m[(1, 1)].norm()) < 1e-15);
    }
}
