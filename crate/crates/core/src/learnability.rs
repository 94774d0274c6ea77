//! Learnability of noisy-channel parameters from repeated gate cycles.
//!
//! A parameter is learnable when the derivative of the Choi matrices of every
//! experiment with respect to it is not a combination of the derivatives with
//! respect to the other parameters. The cycle experiments here are
//! `A_d = M (N U)^d S` for depths `d` in a fixed list, where `N` is the noise
//! after gate `U` and `S`, `M` are preparation and measurement errors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimability::{
    fisher_support_test, qfim_from_matrix, unit_vector, EstimabilityVerdict, Tolerances,
};
use crate::linalg::{
    eig_hermitian, residual_in_span, vectorize_hermitian, HermitianOperator, RMatrix, RVector,
};
use crate::pauli::{
    all_paulis, choi_matrix, num_paulis, ChoiBlock, PauliChannel, PauliIndex, PauliTransferMatrix,
};
use crate::state::EvaluatedModel;

pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Most negative Choi eigenvalue still accepted as completely positive.
pub const CP_TOL: f64 = 1e-9;

pub type ChannelFn = dyn Fn(&[f64]) -> Result<RMatrix> + Send + Sync;
pub type ChannelDerivFn = dyn Fn(&[f64]) -> Result<Vec<RMatrix>> + Send + Sync;

/// A smooth family of `n`-qubit channels given by their transfer matrices.
#[derive(Clone)]
pub struct ParameterizedChannel {
    name: String,
    n: usize,
    param_names: Vec<String>,
    domain: Vec<(f64, f64)>,
    eval: Arc<ChannelFn>,
    derivs: Option<Arc<ChannelDerivFn>>,
    fd_step: f64,
}

impl std::fmt::Debug for ParameterizedChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParameterizedChannel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("param_names", &self.param_names)
            .finish()
    }
}

impl ParameterizedChannel {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        param_names: Vec<String>,
        domain: Vec<(f64, f64)>,
        eval: Arc<ChannelFn>,
    ) -> Result<Self> {
        if domain.len() != param_names.len() {
            return Err(Error::InvalidInput(
                "domain and parameter list differ in length".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            n,
            param_names,
            domain,
            eval,
            derivs: None,
            fd_step: DEFAULT_FD_STEP,
        })
    }

    pub fn with_derivatives(mut self, derivs: Arc<ChannelDerivFn>) -> Self {
        self.derivs = Some(derivs);
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        self.fd_step = h;
        Ok(self)
    }

    /// A channel with no parameters.
    pub fn fixed(name: impl Into<String>, ptm: PauliTransferMatrix) -> Self {
        let n = ptm.n;
        let data = ptm.data;
        Self::new(
            name,
            n,
            Vec::new(),
            Vec::new(),
            Arc::new(move |_| Ok(data.clone())),
        )
        .expect("empty parameter list")
        .with_derivatives(Arc::new(|_| Ok(Vec::new())))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::InvalidInput(format!(
                "{} expects {} parameters, got {}",
                self.name,
                self.num_params(),
                theta.len()
            )));
        }
        for ((t, (lo, hi)), name) in theta.iter().zip(&self.domain).zip(&self.param_names) {
            if !t.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "parameter {name} is not finite"
                )));
            }
            if t < lo || t > hi {
                return Err(Error::DomainError(format!(
                    "{name} = {t} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn raw(&self, theta: &[f64]) -> Result<RMatrix> {
        self.check_domain(theta)?;
        let m = (self.eval)(theta)?;
        let np = num_paulis(self.n);
        if m.nrows() != np || m.ncols() != np {
            return Err(Error::InvalidModel(format!(
                "{} returned a {}x{} matrix",
                self.name,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    pub fn ptm_at(&self, theta: &[f64]) -> Result<PauliTransferMatrix> {
        PauliTransferMatrix::new_channel(self.n, self.raw(theta)?)
            .map_err(|e| Error::InvalidModel(e.to_string()))
    }

    /// Transfer matrix plus its derivatives at `theta`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<(PauliTransferMatrix, Vec<RMatrix>)> {
        let a = self.ptm_at(theta)?;
        let d = match &self.derivs {
            Some(f) => f(theta)?,
            None => {
                let h = self.fd_step;
                let mut out = Vec::with_capacity(theta.len());
                for i in 0..theta.len() {
                    let (lo, hi) = self.domain[i];
                    let mut tp = theta.to_vec();
                    let mut tm = theta.to_vec();
                    tp[i] += h;
                    tm[i] -= h;
                    if tp[i] > hi || tm[i] < lo {
                        return Err(Error::DomainError(format!(
                            "finite-difference stencil for {} leaves [{lo}, {hi}]",
                            self.param_names[i]
                        )));
                    }
                    out.push((self.raw(&tp)? - self.raw(&tm)?) / (2.0 * h));
                }
                out
            }
        };
        if d.len() != theta.len() {
            return Err(Error::InvalidModel(format!(
                "{} returned {} derivatives",
                self.name,
                d.len()
            )));
        }
        Ok((a, d))
    }

    pub fn check_completely_positive(&self, theta: &[f64]) -> Result<()> {
        let a = self.ptm_at(theta)?;
        let choi = HermitianOperator::symmetrized(choi_matrix(self.n, &a.data).into_matrix());
        let min = eig_hermitian(&choi)?.values[0];
        if min < -CP_TOL {
            return Err(Error::InvalidModel(format!(
                "{} is not completely positive at this point (Choi eigenvalue {min:.3e})",
                self.name
            )));
        }
        Ok(())
    }
}

/// The Choi state of a channel and its derivatives as a state model.
pub fn channel_as_state(ch: &ParameterizedChannel, theta: &[f64]) -> Result<EvaluatedModel> {
    let (a, d) = ch.evaluate(theta)?;
    let rho = choi_matrix(ch.n, &a.data);
    let derivs = d.iter().map(|m| choi_matrix(ch.n, m)).collect();
    EvaluatedModel::from_parts(ch.param_names.clone(), theta.to_vec(), rho, derivs)
}

/// Learnable iff the Choi derivative for `index` leaves the span of the others.
pub fn choi_span_test(
    ch: &ParameterizedChannel,
    theta: &[f64],
    index: usize,
    tol: f64,
) -> Result<EstimabilityVerdict> {
    let em = channel_as_state(ch, theta)?;
    crate::estimability::derivative_span_test(&em, index, tol)
}

/// Gate, noise and SPAM channels of a cycle-benchmarking experiment. The
/// parameter vector is the noise parameters, then preparation, then
/// measurement.
#[derive(Debug, Clone)]
pub struct CycleModel {
    pub name: String,
    pub gate: PauliTransferMatrix,
    pub noise: ParameterizedChannel,
    pub spam_prep: ParameterizedChannel,
    pub spam_meas: ParameterizedChannel,
    pub depths: Vec<usize>,
    /// A representative completely positive parameter point.
    pub default_point: Vec<f64>,
}

pub fn default_depths() -> Vec<usize> {
    (0..=8).collect()
}

impl CycleModel {
    pub fn n(&self) -> usize {
        self.gate.n
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = self.noise.param_names().to_vec();
        v.extend_from_slice(self.spam_prep.param_names());
        v.extend_from_slice(self.spam_meas.param_names());
        v
    }

    pub fn num_params(&self) -> usize {
        self.noise.num_params() + self.spam_prep.num_params() + self.spam_meas.num_params()
    }

    pub fn with_depths(mut self, depths: Vec<usize>) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::InvalidInput("depth list is empty".into()));
        }
        self.depths = depths;
        Ok(self)
    }

    fn split<'a>(&self, theta: &'a [f64]) -> Result<(&'a [f64], &'a [f64], &'a [f64])> {
        if theta.len() != self.num_params() {
            return Err(Error::InvalidInput(format!(
                "cycle model expects {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        let a = self.noise.num_params();
        let b = a + self.spam_prep.num_params();
        Ok((&theta[..a], &theta[a..b], &theta[b..]))
    }

    pub fn check_completely_positive(&self, theta: &[f64]) -> Result<()> {
        let (tn, ts, tm) = self.split(theta)?;
        self.noise.check_completely_positive(tn)?;
        self.spam_prep.check_completely_positive(ts)?;
        self.spam_meas.check_completely_positive(tm)
    }

    /// `A_d = M (N U)^d S` by direct composition.
    pub fn depth_ptm(&self, theta: &[f64], d: usize) -> Result<PauliTransferMatrix> {
        let (tn, ts, tm) = self.split(theta)?;
        let nu = &self.noise.ptm_at(tn)?.data * &self.gate.data;
        let mut a = self.spam_prep.ptm_at(ts)?.data;
        for _ in 0..d {
            a = &nu * a;
        }
        PauliTransferMatrix::new(self.n(), &self.spam_meas.ptm_at(tm)?.data * a)
    }
}

/// Choi matrices of every depth and their parameter derivatives.
#[derive(Debug, Clone)]
pub struct CycleStack {
    pub depths: Vec<usize>,
    /// Each depth enters the stacked state with weight `1/|depths|`.
    pub weight: f64,
    pub blocks: Vec<ChoiBlock>,
    /// `derivatives[k][i]` is `d Choi(A_{depths[k]}) / d theta_i` (unweighted).
    pub derivatives: Vec<Vec<HermitianOperator>>,
    pub param_names: Vec<String>,
}

impl CycleStack {
    /// Weighted, vectorized derivative of the whole stack for parameter `i`.
    pub fn stacked_derivative(&self, i: usize) -> RVector {
        let parts: Vec<RVector> = self
            .derivatives
            .iter()
            .map(|d| vectorize_hermitian(&d[i]) * self.weight)
            .collect();
        let len = parts.iter().map(|p| p.len()).sum();
        let mut out = RVector::zeros(len);
        let mut off = 0;
        for p in parts {
            out.rows_mut(off, p.len()).copy_from(&p);
            off += p.len();
        }
        out
    }

    /// The block-diagonal state `sum_d weight * Choi_d` with its derivatives.
    pub fn as_evaluated_model(&self, theta: &[f64]) -> Result<EvaluatedModel> {
        let db = self.blocks[0].state.dim();
        let nb = self.blocks.len();
        let big = |mats: Vec<&HermitianOperator>| {
            let mut m = crate::linalg::CMatrix::zeros(db * nb, db * nb);
            for (k, b) in mats.iter().enumerate() {
                m.view_mut((k * db, k * db), (db, db))
                    .copy_from(&(b.matrix() * crate::linalg::C64::new(self.weight, 0.0)));
            }
            HermitianOperator::symmetrized(m)
        };
        let rho = big(self.blocks.iter().map(|b| &b.state).collect());
        let derivs = (0..self.param_names.len())
            .map(|i| big(self.derivatives.iter().map(|d| &d[i]).collect()))
            .collect();
        EvaluatedModel::from_parts(self.param_names.clone(), theta.to_vec(), rho, derivs)
    }
}

pub fn build_cycle_stack(m: &CycleModel, theta: &[f64]) -> Result<CycleStack> {
    if m.depths.is_empty() {
        return Err(Error::InvalidInput("depth list is empty".into()));
    }
    m.check_completely_positive(theta)?;
    let (tn, ts, tm) = m.split(theta)?;
    let (nptm, dn) = m.noise.evaluate(tn)?;
    let (sptm, ds) = m.spam_prep.evaluate(ts)?;
    let (mptm, dm) = m.spam_meas.evaluate(tm)?;
    let n = m.n();
    let u = &m.gate.data;
    let nu = &nptm.data * u;
    let dmax = *m.depths.iter().max().unwrap();
    // powers[k] = (N U)^k S
    let mut powers_s = vec![sptm.data.clone()];
    // pure powers (N U)^k for the product rule
    let np = num_paulis(n);
    let mut powers = vec![RMatrix::identity(np, np)];
    for k in 1..=dmax {
        powers_s.push(&nu * &powers_s[k - 1]);
        powers.push(&nu * &powers[k - 1]);
    }
    let dnu: Vec<RMatrix> = dn.iter().map(|d| d * u).collect();
    let mut blocks = Vec::with_capacity(m.depths.len());
    let mut derivatives = Vec::with_capacity(m.depths.len());
    for &d in &m.depths {
        let a = &mptm.data * &powers_s[d];
        blocks.push(ChoiBlock::new(n, choi_matrix(n, &a))?);
        let mut ders = Vec::with_capacity(m.num_params());
        for dk in &dnu {
            let mut acc = RMatrix::zeros(np, np);
            for k in 0..d {
                acc += &powers[d - 1 - k] * dk * &powers_s[k];
            }
            ders.push(choi_matrix(n, &(&mptm.data * acc)));
        }
        for dk in &ds {
            ders.push(choi_matrix(n, &(&mptm.data * &powers[d] * dk)));
        }
        for dk in &dm {
            ders.push(choi_matrix(n, &(dk * &powers_s[d])));
        }
        derivatives.push(ders);
    }
    Ok(CycleStack {
        weight: 1.0 / m.depths.len() as f64,
        depths: m.depths.clone(),
        blocks,
        derivatives,
        param_names: m.param_names(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityVerdict {
    pub parameter: String,
    pub learnable: bool,
    /// Norm of the null-space component of the unit vector for this parameter.
    pub support_residual: f64,
    /// Relative residual of the span test on the stacked derivatives.
    pub span_residual: f64,
    /// False when the parameter is zero and its raw derivative was used.
    pub log_scaled: bool,
}

/// A linear dependency `sum_i c_i theta_i d_i = 0` among the (log-scaled)
/// derivatives, listing only nonzero coefficients. Serializes as a map from
/// parameter name to coefficient, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub terms: Vec<(String, f64)>,
}

impl Serialize for Relation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.terms.len()))?;
        for (k, v) in &self.terms {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> serde::de::Visitor<'de> for V {
            type Value = Relation;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from parameter name to coefficient")
            }
            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut a: A,
            ) -> std::result::Result<Relation, A::Error> {
                let mut terms = Vec::new();
                while let Some(e) = a.next_entry::<String, f64>()? {
                    terms.push(e);
                }
                Ok(Relation { terms })
            }
        }
        d.deserialize_map(V)
    }
}

impl Relation {
    pub fn coefficient(&self, name: &str) -> f64 {
        self.terms
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| *c)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnabilityReport {
    pub param_names: Vec<String>,
    pub theta: Vec<f64>,
    pub depths: Vec<usize>,
    pub gram: Vec<Vec<f64>>,
    pub gram_eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Orthonormal null-space basis, one vector per entry.
    pub null_space: Vec<Vec<f64>>,
    /// Null space in reduced row-echelon form.
    pub relations: Vec<Relation>,
    pub verdicts: Vec<LearnabilityVerdict>,
    pub tolerances: Tolerances,
}

impl LearnabilityReport {
    pub fn verdict(&self, name: &str) -> Option<&LearnabilityVerdict> {
        self.verdicts.iter().find(|v| v.parameter == name)
    }

    pub fn learnable(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|v| v.learnable)
            .map(|v| v.parameter.as_str())
            .collect()
    }

    pub fn unlearnable(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|v| !v.learnable)
            .map(|v| v.parameter.as_str())
            .collect()
    }

    /// Distance of a coefficient vector (by name) from the detected null space,
    /// relative to its norm.
    pub fn relation_residual(&self, coefficients: &[(&str, f64)]) -> Result<f64> {
        let m = self.param_names.len();
        let mut v = RVector::zeros(m);
        for (name, c) in coefficients {
            let i = self
                .param_names
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name:?}")))?;
            v[i] = *c;
        }
        let vn = v.norm();
        if vn == 0.0 {
            return Err(Error::InvalidInput(
                "relation has no nonzero coefficient".into(),
            ));
        }
        let mut proj = RVector::zeros(m);
        for b in &self.null_space {
            let b = RVector::from_column_slice(b);
            proj += &b * b.dot(&v);
        }
        Ok((v - proj).norm() / vn)
    }
}

/// Reduced row-echelon form of the rows of `basis` with partial pivoting.
fn canonical_relations(basis: &RMatrix, names: &[String]) -> Vec<Relation> {
    // basis: m x k, columns span the null space
    let mut r = basis.transpose();
    let (k, m) = r.shape();
    let mut row = 0;
    for col in 0..m {
        if row == k {
            break;
        }
        let (piv, val) = (row..k)
            .map(|i| (i, r[(i, col)].abs()))
            .fold((row, -1.0_f64), |a, b| if b.1 > a.1 { b } else { a });
        if val < 1e-8 {
            continue;
        }
        r.swap_rows(row, piv);
        let p = r[(row, col)];
        for j in 0..m {
            r[(row, j)] /= p;
        }
        for i in 0..k {
            if i != row {
                let f = r[(i, col)];
                if f != 0.0 {
                    for j in 0..m {
                        r[(i, j)] -= f * r[(row, j)];
                    }
                }
            }
        }
        row += 1;
    }
    (0..row)
        .map(|i| Relation {
            terms: (0..m)
                .filter(|&j| r[(i, j)].abs() > 1e-9)
                .map(|j| (names[j].clone(), r[(i, j)]))
                .collect(),
        })
        .collect()
}

pub fn learnability_report(
    m: &CycleModel,
    theta: &[f64],
    tol: Tolerances,
) -> Result<LearnabilityReport> {
    let stack = build_cycle_stack(m, theta)?;
    let names = stack.param_names.clone();
    let np = names.len();
    let mut log_scaled = vec![true; np];
    let cols: Vec<RVector> = (0..np)
        .map(|i| {
            let g = stack.stacked_derivative(i);
            if theta[i] != 0.0 {
                g * theta[i]
            } else {
                log_scaled[i] = false;
                g
            }
        })
        .collect();
    let g = RMatrix::from_columns(&cols);
    let gram = g.transpose() * &g;
    let q = qfim_from_matrix(names.clone(), gram, tol.rank)?;
    let null = {
        let idx: Vec<usize> = (0..np)
            .filter(|&k| q.eigenvalues[k].abs() <= q.cutoff)
            .collect();
        if idx.is_empty() {
            RMatrix::zeros(np, 0)
        } else {
            RMatrix::from_columns(
                &idx.iter()
                    .map(|&k| q.eigenvectors.column(k).into_owned())
                    .collect::<Vec<_>>(),
            )
        }
    };
    // C = Q R with orthonormal Q, so span tests on the columns of R are exact
    // replicas of the tests on the long stacked columns
    let reduced: Vec<RVector> = if g.nrows() > np {
        let r = g.clone().qr().r();
        (0..np).map(|k| r.column(k).into_owned()).collect()
    } else {
        cols.clone()
    };
    let mut verdicts = Vec::with_capacity(np);
    for i in 0..np {
        let support = fisher_support_test(&q, &unit_vector(np, i)?, tol.span)?;
        let others: Vec<RVector> = (0..np)
            .filter(|&k| k != i)
            .map(|k| reduced[k].clone())
            .collect();
        let span = residual_in_span(&reduced[i], &others, tol.span)?;
        verdicts.push(LearnabilityVerdict {
            parameter: names[i].clone(),
            learnable: support.estimable,
            support_residual: support.residual,
            span_residual: span.relative_residual(),
            log_scaled: log_scaled[i],
        });
    }
    Ok(LearnabilityReport {
        relations: canonical_relations(&null, &names),
        null_space: (0..null.ncols())
            .map(|c| null.column(c).iter().copied().collect())
            .collect(),
        gram: (0..np)
            .map(|r| q.matrix().row(r).iter().copied().collect())
            .collect(),
        gram_eigenvalues: q.eigenvalues.iter().copied().collect(),
        rank: q.rank,
        param_names: names,
        theta: theta.to_vec(),
        depths: m.depths.clone(),
        verdicts,
        tolerances: tol,
    })
}

fn rz_ptm(phi: f64) -> PauliTransferMatrix {
    let mut a = PauliTransferMatrix::identity(1);
    let (x, y) = (
        PauliIndex::parse("X").unwrap(),
        PauliIndex::parse("Y").unwrap(),
    );
    // exp(-i phi Z/2): X -> cos X + sin Y, Y -> cos Y - sin X
    a.set_entry(&x, &x, phi.cos());
    a.set_entry(&y, &x, phi.sin());
    a.set_entry(&x, &y, -phi.sin());
    a.set_entry(&y, &y, phi.cos());
    a
}

/// Single-qubit transfer matrix from a 4x4 array in I, X, Y, Z order.
pub fn ptm_from_ixyz(rows: [[f64; 4]; 4]) -> PauliTransferMatrix {
    let labels = ["I", "X", "Y", "Z"].map(|l| PauliIndex::parse(l).unwrap());
    let mut a = PauliTransferMatrix {
        n: 1,
        data: RMatrix::zeros(4, 4),
    };
    for (r, lr) in labels.iter().enumerate() {
        for (c, lc) in labels.iter().enumerate() {
            a.set_entry(lr, lc, rows[r][c]);
        }
    }
    a
}

/// The transfer matrix as a 4x4 array in I, X, Y, Z order.
pub fn ptm_to_ixyz(a: &PauliTransferMatrix) -> [[f64; 4]; 4] {
    let labels = ["I", "X", "Y", "Z"].map(|l| PauliIndex::parse(l).unwrap());
    let mut out = [[0.0; 4]; 4];
    for (r, lr) in labels.iter().enumerate() {
        for (c, lc) in labels.iter().enumerate() {
            out[r][c] = a.entry(lr, lc);
        }
    }
    out
}

/// Twirled Rz noise: contraction `lambda_1`, rotation by `-theta` in the XY
/// plane, `Z` contraction `lambda_2` and shift `alpha` along `Z`.
fn rz_noise_rows(l1: f64, l2: f64, alpha: f64, theta: f64) -> [[f64; 4]; 4] {
    let (c, s) = (theta.cos(), theta.sin());
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, l1 * c, l1 * s, 0.0],
        [0.0, -l1 * s, l1 * c, 0.0],
        [alpha, 0.0, 0.0, l2],
    ]
}

fn rz_noise_derivs(l1: f64, theta: f64) -> [[[f64; 4]; 4]; 4] {
    let (c, s) = (theta.cos(), theta.sin());
    let z = [[0.0; 4]; 4];
    let mut d = [z; 4];
    d[0][1][1] = c;
    d[0][1][2] = s;
    d[0][2][1] = -s;
    d[0][2][2] = c;
    d[1][3][3] = 1.0;
    d[2][3][0] = 1.0;
    d[3][1][1] = -l1 * s;
    d[3][1][2] = l1 * c;
    d[3][2][1] = -l1 * c;
    d[3][2][2] = -l1 * s;
    d
}

/// Single-qubit diagonal SPAM channel `diag(1, l_X, l_Y, l_Z)`.
fn diagonal_spam(name: &str, suffix: &str) -> ParameterizedChannel {
    let names = ["1", "2", "3"]
        .iter()
        .map(|k| format!("lambda_{k}{suffix}"))
        .collect();
    let eval = Arc::new(|t: &[f64]| {
        Ok(ptm_from_ixyz([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, t[0], 0.0, 0.0],
            [0.0, 0.0, t[1], 0.0],
            [0.0, 0.0, 0.0, t[2]],
        ])
        .data)
    });
    let derivs = Arc::new(|_: &[f64]| {
        Ok((0..3)
            .map(|k| {
                let mut r = [[0.0; 4]; 4];
                r[k + 1][k + 1] = 1.0;
                ptm_from_ixyz(r).data
            })
            .collect())
    });
    ParameterizedChannel::new(name, 1, names, vec![(-1.0, 1.0); 3], eval)
        .expect("static model definition")
        .with_derivatives(derivs)
}

/// The twirled Rz noise channel alone, parameters
/// `lambda_1, lambda_2, alpha, theta`.
pub fn rz_noise_channel() -> ParameterizedChannel {
    let names = ["lambda_1", "lambda_2", "alpha", "theta"]
        .map(String::from)
        .to_vec();
    let unit = (-1.0, 1.0);
    let eval = Arc::new(|t: &[f64]| Ok(ptm_from_ixyz(rz_noise_rows(t[0], t[1], t[2], t[3])).data));
    let derivs = Arc::new(|t: &[f64]| {
        Ok(rz_noise_derivs(t[0], t[3])
            .iter()
            .map(|r| ptm_from_ixyz(*r).data)
            .collect())
    });
    ParameterizedChannel::new(
        "rz_noise",
        1,
        names,
        vec![unit, unit, unit, (f64::NEG_INFINITY, f64::INFINITY)],
        eval,
    )
    .expect("static model definition")
    .with_derivatives(derivs)
}

/// How the rotation angles of the Rz cycle are exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RzAngles {
    /// One parameter `theta_prime`, the net rotation angle of noise after
    /// gate, with the gate angle held fixed.
    Combined,
    /// Gate angle `phi` and noise angle `theta` as separate parameters; the
    /// gate is then folded into the noise channel.
    Separate,
}

/// Rz(`phi`) gate followed by twirled noise, with diagonal SPAM.
///
/// Parameters: `lambda_1, lambda_2, alpha, theta_prime` (or `theta, phi`),
/// then `lambda_{1,2,3}S` and `lambda_{1,2,3}M`. In the combined mode the net
/// cycle acts on the XY plane as `lambda_1` times a rotation by
/// `-theta_prime`, i.e. `theta_prime = theta - phi` for noise angle `theta`.
pub fn rz_cycle_model(phi: f64, angles: RzAngles) -> Result<CycleModel> {
    if !phi.is_finite() {
        return Err(Error::InvalidInput("gate angle must be finite".into()));
    }
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let unit = (-1.0, 1.0);
    let (gate, noise, point) = match angles {
        RzAngles::Combined => {
            let names = ["lambda_1", "lambda_2", "alpha", "theta_prime"]
                .map(String::from)
                .to_vec();
            let eval = Arc::new(move |t: &[f64]| {
                Ok(ptm_from_ixyz(rz_noise_rows(t[0], t[1], t[2], t[3] + phi)).data)
            });
            let derivs = Arc::new(move |t: &[f64]| {
                Ok(rz_noise_derivs(t[0], t[3] + phi)
                    .iter()
                    .map(|r| ptm_from_ixyz(*r).data)
                    .collect())
            });
            let ch = ParameterizedChannel::new(
                "rz_noise",
                1,
                names,
                vec![unit, unit, unit, free],
                eval,
            )?
            .with_derivatives(derivs);
            (rz_ptm(phi), ch, vec![0.9, 0.85, 0.05, 0.05 - phi])
        }
        RzAngles::Separate => {
            let names = ["lambda_1", "lambda_2", "alpha", "theta", "phi"]
                .map(String::from)
                .to_vec();
            let eval = Arc::new(|t: &[f64]| {
                Ok(ptm_from_ixyz(rz_noise_rows(t[0], t[1], t[2], t[3])).data * rz_ptm(t[4]).data)
            });
            let derivs = Arc::new(|t: &[f64]| {
                let u = rz_ptm(t[4]).data;
                let mut v: Vec<RMatrix> = rz_noise_derivs(t[0], t[3])
                    .iter()
                    .map(|r| ptm_from_ixyz(*r).data * &u)
                    .collect();
                let (c, s) = (t[4].cos(), t[4].sin());
                let mut du = RMatrix::zeros(4, 4);
                let (x, y) = (
                    PauliIndex::parse("X").unwrap().linear(),
                    PauliIndex::parse("Y").unwrap().linear(),
                );
                du[(x, x)] = -s;
                du[(y, x)] = c;
                du[(x, y)] = -c;
                du[(y, y)] = -s;
                v.push(ptm_from_ixyz(rz_noise_rows(t[0], t[1], t[2], t[3])).data * du);
                Ok(v)
            });
            let ch = ParameterizedChannel::new(
                "rz_cycle",
                1,
                names,
                vec![unit, unit, unit, free, free],
                eval,
            )?
            .with_derivatives(derivs);
            (
                PauliTransferMatrix::identity(1),
                ch,
                vec![0.9, 0.85, 0.05, 0.05, phi],
            )
        }
    };
    let mut default_point = point;
    default_point.extend([0.95, 0.93, 0.9, 0.97, 0.96, 0.94]);
    Ok(CycleModel {
        name: "rz".into(),
        gate,
        noise,
        spam_prep: diagonal_spam("prep", "S"),
        spam_meas: diagonal_spam("meas", "M"),
        depths: default_depths(),
        default_point,
    })
}

/// Closed form of `A_d` for the combined-angle Rz cycle, in I, X, Y, Z order.
/// The `(Z, I)` entry sums the geometric series in `lambda_2`.
pub fn rz_depth_closed_form(theta: &[f64], d: usize) -> [[f64; 4]; 4] {
    let (l1, l2, alpha, tp) = (theta[0], theta[1], theta[2], theta[3]);
    let (l1s, l2s, l3s, l1m, l2m, l3m) =
        (theta[4], theta[5], theta[6], theta[7], theta[8], theta[9]);
    let df = d as f64;
    let decay = l1.powi(d as i32);
    let (c, s) = ((df * tp).cos(), (df * tp).sin());
    let geom: f64 = (0..d).map(|k| l2.powi(k as i32)).sum();
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, l1m * l1s * decay * c, l1m * l2s * decay * s, 0.0],
        [0.0, -l2m * l1s * decay * s, l2m * l2s * decay * c, 0.0],
        [l3m * alpha * geom, 0.0, 0.0, l3m * l3s * l2.powi(d as i32)],
    ]
}

/// Pauli channel parametrized by its non-identity eigenvalues `lambda_P<suffix>`.
pub fn pauli_diag_channel(name: &str, n: usize, suffix: &str) -> ParameterizedChannel {
    let paulis: Vec<PauliIndex> = all_paulis(n).skip(1).collect();
    let names = paulis
        .iter()
        .map(|p| format!("lambda_{p}{suffix}"))
        .collect();
    let m = num_paulis(n);
    let eval =
        Arc::new(move |t: &[f64]| Ok(PauliChannel::from_eigenvalues_unchecked(n, t)?.ptm().data));
    let derivs = Arc::new(move |_: &[f64]| {
        Ok((1..m)
            .map(|k| {
                let mut d = RMatrix::zeros(m, m);
                d[(k, k)] = 1.0;
                d
            })
            .collect())
    });
    ParameterizedChannel::new(name, n, names, vec![(-1.0, 1.0); m - 1], eval)
        .expect("static model definition")
        .with_derivatives(derivs)
}

/// Pauli noise after an arbitrary gate with Pauli SPAM channels. Parameters
/// are the non-identity eigenvalues `lambda_P`, then `lambda_P_S`, then
/// `lambda_P_M`.
pub fn pauli_cycle_model(name: &str, gate: PauliTransferMatrix) -> Result<CycleModel> {
    gate.check_trace_preserving()?;
    let n = gate.n;
    let m = num_paulis(n);
    let noise_rates: Vec<f64> = (1..m).map(|k| 0.002 * (1.0 + 0.1 * k as f64)).collect();
    let spam_rates: Vec<f64> = (1..m).map(|k| 0.004 * (1.0 + 0.05 * k as f64)).collect();
    let meas_rates: Vec<f64> = (1..m).map(|k| 0.003 * (1.0 + 0.07 * k as f64)).collect();
    let mut default_point = PauliChannel::from_rates(n, &noise_rates)?.eigenvalues()[1..].to_vec();
    default_point.extend_from_slice(&PauliChannel::from_rates(n, &spam_rates)?.eigenvalues()[1..]);
    default_point.extend_from_slice(&PauliChannel::from_rates(n, &meas_rates)?.eigenvalues()[1..]);
    Ok(CycleModel {
        name: name.into(),
        gate,
        noise: pauli_diag_channel("noise", n, ""),
        spam_prep: pauli_diag_channel("prep", n, "_S"),
        spam_meas: pauli_diag_channel("meas", n, "_M"),
        depths: default_depths(),
        default_point,
    })
}

/// CNOT with control on qubit 1 and target on qubit 2.
pub fn cnot_ptm() -> PauliTransferMatrix {
    use crate::linalg::{CMatrix, C64};
    let one = C64::new(1.0, 0.0);
    let mut u = CMatrix::zeros(4, 4);
    u[(0, 0)] = one;
    u[(1, 1)] = one;
    u[(3, 2)] = one;
    u[(2, 3)] = one;
    PauliTransferMatrix::from_unitary(&u).expect("CNOT is unitary")
}

pub fn cnot_cycle_model() -> Result<CycleModel> {
    pauli_cycle_model("cnot", cnot_ptm())
}

/// Non-identity two-qubit Paulis split by their behaviour under CNOT
/// conjugation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnotCommutant {
    pub fixed: Vec<PauliIndex>,
    /// Pairs `(P, CNOT P CNOT)` with `P` before its image in index order.
    pub swapped: Vec<(PauliIndex, PauliIndex)>,
}

/// Image of each Pauli under a Clifford transfer matrix, with its sign.
pub fn clifford_image(gate: &PauliTransferMatrix, p: &PauliIndex) -> (PauliIndex, f64) {
    let col = gate.data.column(p.linear());
    let (k, v) =
        col.iter().enumerate().fold(
            (0, 0.0_f64),
            |a, (k, v)| if v.abs() > a.1.abs() { (k, *v) } else { a },
        );
    (PauliIndex::from_linear(gate.n, k), v.signum())
}

pub fn cnot_commutant() -> CnotCommutant {
    let g = cnot_ptm();
    let mut fixed = Vec::new();
    let mut swapped = Vec::new();
    for p in all_paulis(2).skip(1) {
        let (img, sign) = clifford_image(&g, &p);
        if img == p && sign > 0.0 {
            fixed.push(p);
        } else if p.linear() < img.linear() {
            swapped.push((p, img));
        }
    }
    CnotCommutant { fixed, swapped }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnot_conjugation_table() {
        let g = cnot_ptm();
        for (from, to) in [("IX", "IX"), ("ZI", "ZI"), ("XI", "XX"), ("IZ", "ZZ")] {
            let (img, sign) = clifford_image(&g, &PauliIndex::parse(from).unwrap());
            assert_eq!(img.to_string(), to);
            assert_eq!(sign, 1.0);
        }
        let c = cnot_commutant();
        let fixed: Vec<String> = c.fixed.iter().map(|p| p.to_string()).collect();
        assert_eq!(fixed, ["ZI", "IX", "ZX"]);
        assert_eq!(c.swapped.len(), 6);
    }

    #[test]
    fn rz_layout_round_trip() {
        let rows = rz_noise_rows(0.9, 0.8, 0.05, 0.2);
        assert_eq!(ptm_to_ixyz(&ptm_from_ixyz(rows)), rows);
    }

    #[test]
    fn rz_defaults_are_completely_positive() {
        for mode in [RzAngles::Combined, RzAngles::Separate] {
            let m = rz_cycle_model(0.3, mode).unwrap();
            m.check_completely_positive(&m.default_point).unwrap();
        }
        let m = cnot_cycle_model().unwrap();
        m.check_completely_positive(&m.default_point).unwrap();
    }

    #[test]
    fn non_cp_noise_rejected() {
        let m = rz_cycle_model(0.3, RzAngles::Combined).unwrap();
        let mut t = m.default_point.clone();
        t[2] = 0.6; // alpha too large for these contractions
        assert!(matches!(
            build_cycle_stack(&m, &t),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn combined_angle_matches_composition() {
        let m = rz_cycle_model(0.3, RzAngles::Combined).unwrap();
        let a1 = ptm_to_ixyz(&m.depth_ptm(&m.default_point, 1).unwrap());
        let cf = rz_depth_closed_form(&m.default_point, 1);
        for r in 0..4 {
            for c in 0..4 {
                assert!((a1[r][c] - cf[r][c]).abs() < 1e-14, "({r},{c})");
            }
        }
    }
}
