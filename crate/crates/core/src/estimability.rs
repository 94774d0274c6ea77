//! Quantum Fisher information, estimability verdicts and the locally
//! unbiased measurement that attains the bound for one parameter in the
//! presence of nuisance parameters.
//!
//! Two verdicts are available and agree on well-conditioned inputs:
//! a support test on the Fisher matrix ([`fisher_support_test`]) and a span test on
//! the derivatives of the state ([`derivative_span_test`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    eig_hermitian, pseudo_inverse, pseudo_inverse_with_cutoff, rank_cutoff, residual_in_span,
    vectorize_hermitian, CMatrix, HermitianOperator, RMatrix, RVector, RealSymmetricMatrix,
    SpanVerdict, C64,
};
use crate::state::EvaluatedModel;

/// Relative eigenvalue cutoff for the state spectrum and the Fisher matrix.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Relative residual below which a vector counts as lying in a span.
pub const DEFAULT_SPAN_TOL: f64 = 1e-7;
/// Outcomes at or below this probability get the prior value as estimate.
pub const ZERO_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rank: f64,
    pub span: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: DEFAULT_RANK_TOL,
            span: DEFAULT_SPAN_TOL,
        }
    }
}

fn eigenbasis(em: &EvaluatedModel) -> Result<(RVector, CMatrix, Vec<CMatrix>)> {
    let e = eig_hermitian(&em.rho)?;
    let vh = e.vectors.adjoint();
    let d = em
        .derivs
        .iter()
        .map(|dr| &vh * dr.matrix() * &e.vectors)
        .collect();
    Ok((e.values, e.vectors, d))
}

fn state_cutoff(values: &RVector, rank_tol: f64) -> f64 {
    rank_cutoff(values, rank_tol)
}

/// Symmetric logarithmic derivatives `L_i` with `d_i rho = (L_i rho + rho L_i) / 2`
/// on the support; pairs whose eigenvalue sum is below the cutoff give zero.
pub fn sld_operators(em: &EvaluatedModel, rank_tol: Option<f64>) -> Result<Vec<HermitianOperator>> {
    let rank_tol = rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let (w, v, dd) = eigenbasis(em)?;
    let cut = state_cutoff(&w, rank_tol);
    let n = w.len();
    Ok(dd
        .iter()
        .map(|d| {
            let l = CMatrix::from_fn(n, n, |a, b| {
                let s = w[a] + w[b];
                if s > cut {
                    d[(a, b)] * C64::new(2.0 / s, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            HermitianOperator::symmetrized(&v * l * v.adjoint())
        })
        .collect())
}

/// Fisher matrix `J_ij = Re Tr[rho L_i L_j]` with its spectral data.
#[derive(Debug, Clone)]
pub struct QfimResult {
    pub param_names: Vec<String>,
    pub j: RealSymmetricMatrix,
    pub eigenvalues: RVector,
    pub eigenvectors: RMatrix,
    pub rank: usize,
    pub pinv: RMatrix,
    pub cutoff: f64,
    pub rank_tol_used: f64,
}

impl QfimResult {
    pub fn matrix(&self) -> &RMatrix {
        self.j.matrix()
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }
}

pub fn qfim(em: &EvaluatedModel, rank_tol: Option<f64>) -> Result<QfimResult> {
    let rank_tol = rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let (w, _, dd) = eigenbasis(em)?;
    let cut = state_cutoff(&w, rank_tol);
    let m = dd.len();
    let n = w.len();
    let mut j = RMatrix::zeros(m, m);
    for p in 0..m {
        for q in p..m {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let den = w[a] + w[b];
                    if den > cut {
                        s += 2.0 * (dd[p][(a, b)] * dd[q][(b, a)]).re / den;
                    }
                }
            }
            j[(p, q)] = s;
            j[(q, p)] = s;
        }
    }
    qfim_from_matrix(em.param_names.clone(), j, rank_tol)
}

/// Spectral data for an externally supplied Fisher (or Gram) matrix.
pub fn qfim_from_matrix(param_names: Vec<String>, j: RMatrix, rank_tol: f64) -> Result<QfimResult> {
    if param_names.len() != j.nrows() {
        return Err(Error::InvalidInput(
            "parameter names do not match matrix size".into(),
        ));
    }
    let j = RealSymmetricMatrix::new(j)?;
    let p = pseudo_inverse(&j, Some(rank_tol))?;
    Ok(QfimResult {
        param_names,
        eigenvalues: p.eigen.values.clone(),
        eigenvectors: p.eigen.vectors.clone(),
        rank: p.rank,
        pinv: p.pinv,
        cutoff: p.cutoff,
        rank_tol_used: rank_tol,
        j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictMethod {
    /// Support test on the Fisher matrix.
    FisherSupport,
    /// Span test on the state derivatives.
    DerivativeSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimabilityVerdict {
    pub parameter: String,
    pub estimable: bool,
    /// `w^T J^+ w` when estimable, infinite otherwise.
    pub bound: f64,
    /// Relative residual of the underlying support or span test.
    pub residual: f64,
    pub tol: f64,
    pub method: VerdictMethod,
    /// Least-squares expansion of the target derivative in the others
    /// (span test only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation: Option<SpanVerdict>,
}

fn describe(w: &RVector, names: &[String]) -> String {
    let nz: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
    if nz.len() == 1 && w[nz[0]] == 1.0 {
        names[nz[0]].clone()
    } else {
        let terms: Vec<String> = nz
            .iter()
            .map(|&i| format!("{}*{}", w[i], names[i]))
            .collect();
        terms.join(" + ")
    }
}

/// Estimable iff `|J^+ J w - w| <= tol |w|`.
pub fn fisher_support_test(q: &QfimResult, w: &RVector, tol: f64) -> Result<EstimabilityVerdict> {
    if w.len() != q.num_params() {
        return Err(Error::InvalidInput(format!(
            "weight vector has length {}, expected {}",
            w.len(),
            q.num_params()
        )));
    }
    let wn = w.norm();
    if wn == 0.0 || !wn.is_finite() {
        return Err(Error::InvalidInput(
            "weight vector must be nonzero and finite".into(),
        ));
    }
    let proj = &q.pinv * (q.matrix() * w);
    let residual = (proj - w).norm() / wn;
    let estimable = residual <= tol;
    let bound = if estimable {
        w.dot(&(&q.pinv * w))
    } else {
        f64::INFINITY
    };
    Ok(EstimabilityVerdict {
        parameter: describe(w, &q.param_names),
        estimable,
        bound,
        residual,
        tol,
        method: VerdictMethod::FisherSupport,
        relation: None,
    })
}

pub fn unit_vector(m: usize, index: usize) -> Result<RVector> {
    if index >= m {
        return Err(Error::InvalidInput(format!(
            "parameter index {index} out of range (have {m})"
        )));
    }
    let mut w = RVector::zeros(m);
    w[index] = 1.0;
    Ok(w)
}

/// Estimable iff `d_index rho` is not a linear combination of the other
/// derivatives.
pub fn derivative_span_test(
    em: &EvaluatedModel,
    index: usize,
    tol: f64,
) -> Result<EstimabilityVerdict> {
    let m = em.num_params();
    unit_vector(m, index)?;
    let vecs: Vec<RVector> = em.derivs.iter().map(vectorize_hermitian).collect();
    let others: Vec<RVector> = (0..m)
        .filter(|&k| k != index)
        .map(|k| vecs[k].clone())
        .collect();
    let span = residual_in_span(&vecs[index], &others, tol)?;
    let estimable = !span.in_span;
    let bound = if estimable {
        let q = qfim(em, None)?;
        q.pinv[(index, index)]
    } else {
        f64::INFINITY
    };
    Ok(EstimabilityVerdict {
        parameter: em.param_names[index].clone(),
        estimable,
        bound,
        residual: span.relative_residual(),
        tol,
        method: VerdictMethod::DerivativeSpan,
        relation: Some(span),
    })
}

/// `w^T J^+ w`, or infinity when `w` leaves the support of `J`.
pub fn generalized_qcrb(q: &QfimResult, w: &RVector) -> Result<f64> {
    Ok(fisher_support_test(q, w, DEFAULT_SPAN_TOL)?.bound)
}

/// Matrix bound `H^T J^+ H + B` for functions with gradient matrix `H`
/// (parameters by functions) and bias term `B`.
pub fn fgqcrb_bound(q: &QfimResult, h: &RMatrix, b: &RMatrix) -> Result<RMatrix> {
    let m = q.num_params();
    if h.nrows() != m {
        return Err(Error::InvalidInput(format!(
            "H has {} rows, expected {m}",
            h.nrows()
        )));
    }
    if b.nrows() != h.ncols() || b.ncols() != h.ncols() {
        return Err(Error::InvalidInput(format!("B must be {0}x{0}", h.ncols())));
    }
    Ok(h.transpose() * &q.pinv * h + b)
}

/// Coordinates `xi` that decouple one parameter from the nuisance block.
///
/// `t[(i, j)] = d theta_j / d xi_i`. Row `index` is `(1, -(J_nn)^+ J_n,index)`
/// placed on the nuisance columns; every other row is the identity, so column
/// `index` is the unit vector and `J_xi = T J T^T` is block diagonal.
#[derive(Debug, Clone)]
pub struct Reparametrization {
    pub index: usize,
    pub t: RMatrix,
    pub j_xi: RMatrix,
    /// `d theta / d xi_index`, the direction of the decoupled parameter.
    pub direction: RVector,
}

pub fn block_diagonal_reparam(q: &QfimResult, index: usize) -> Result<Reparametrization> {
    let m = q.num_params();
    unit_vector(m, index)?;
    let j = q.matrix();
    let nuis: Vec<usize> = (0..m).filter(|&k| k != index).collect();
    let mut direction = RVector::zeros(m);
    direction[index] = 1.0;
    if !nuis.is_empty() {
        let jnn = RMatrix::from_fn(nuis.len(), nuis.len(), |a, b| j[(nuis[a], nuis[b])]);
        let jn1 = RVector::from_iterator(nuis.len(), nuis.iter().map(|&a| j[(a, index)]));
        let p = pseudo_inverse_with_cutoff(&RealSymmetricMatrix::symmetrized(jnn), q.cutoff)?;
        let k = &p.pinv * jn1;
        for (a, &i) in nuis.iter().enumerate() {
            direction[i] = -k[a];
        }
    }
    let mut t = RMatrix::identity(m, m);
    t.set_row(index, &direction.transpose());
    let j_xi = &t * j * t.transpose();
    Ok(Reparametrization {
        index,
        t,
        j_xi,
        direction,
    })
}

/// Projective measurement with a locally unbiased estimator for one parameter.
#[derive(Debug, Clone)]
pub struct OptimalMeasurement {
    pub index: usize,
    pub parameter: String,
    /// Value of the target parameter at the evaluation point.
    pub theta: f64,
    pub povm: Vec<HermitianOperator>,
    pub estimator_values: Vec<f64>,
    pub outcome_probs: Vec<f64>,
    /// Derivative of each outcome probability along [`Reparametrization::direction`].
    pub outcome_slopes: Vec<f64>,
    /// Eigenvalue of the decoupled SLD on each outcome, when known.
    pub sld_eigenvalues: Option<Vec<f64>>,
    pub direction: RVector,
    /// `[J^+]_ii`, the attainable variance.
    pub bound: f64,
}

impl OptimalMeasurement {
    pub fn num_outcomes(&self) -> usize {
        self.povm.len()
    }

    /// Classical Fisher information along the decoupled direction.
    pub fn fisher_information(&self) -> f64 {
        self.outcome_probs
            .iter()
            .zip(&self.outcome_slopes)
            .filter(|(p, _)| **p > ZERO_PROBABILITY)
            .map(|(p, s)| s * s / p)
            .sum()
    }

    /// Splits every outcome along a set of orthogonal projectors that commute
    /// with it, dropping empty products.
    pub fn refine(
        &self,
        em: &EvaluatedModel,
        blocks: &[HermitianOperator],
    ) -> Result<OptimalMeasurement> {
        let mut povm = Vec::new();
        let mut ell = Vec::new();
        for (k, e) in self.povm.iter().enumerate() {
            for b in blocks {
                let prod = b.matrix() * e.matrix();
                let comm = (&prod - e.matrix() * b.matrix())
                    .iter()
                    .fold(0.0_f64, |a, z| a.max(z.norm()));
                if comm > 1e-9 {
                    return Err(Error::InvalidInput(
                        "refining projector does not commute with the measurement".into(),
                    ));
                }
                let p = HermitianOperator::symmetrized(prod);
                if p.trace() > 0.5 {
                    if let Some(l) = &self.sld_eigenvalues {
                        ell.push(l[k]);
                    }
                    povm.push(p);
                }
            }
        }
        let ell = self.sld_eigenvalues.as_ref().map(|_| ell);
        measurement_from_povm(em, self.index, &self.direction, self.bound, povm, ell)
    }
}

fn measurement_from_povm(
    em: &EvaluatedModel,
    index: usize,
    direction: &RVector,
    bound: f64,
    povm: Vec<HermitianOperator>,
    sld_eigenvalues: Option<Vec<f64>>,
) -> Result<OptimalMeasurement> {
    let mut dxi = HermitianOperator::zeros(em.dim());
    for (c, d) in direction.iter().zip(&em.derivs) {
        if *c != 0.0 {
            dxi = dxi.add(&d.scale(*c));
        }
    }
    let theta = em.theta0[index];
    let mut probs = Vec::with_capacity(povm.len());
    let mut slopes = Vec::with_capacity(povm.len());
    let mut values = Vec::with_capacity(povm.len());
    for e in &povm {
        let p = e.trace_product(&em.rho).max(0.0);
        let s = e.trace_product(&dxi);
        values.push(if p > ZERO_PROBABILITY {
            theta + bound * s / p
        } else {
            theta
        });
        probs.push(p);
        slopes.push(s);
    }
    Ok(OptimalMeasurement {
        index,
        parameter: em.param_names[index].clone(),
        theta,
        povm,
        estimator_values: values,
        outcome_probs: probs,
        outcome_slopes: slopes,
        sld_eigenvalues,
        direction: direction.clone(),
        bound,
    })
}

/// Eigenprojectors of the decoupled SLD `L_xi = sum_i (d theta_i / d xi) L_i`,
/// with the estimator `theta + [J^+]_ii (d_xi p) / p` on each outcome.
pub fn optimal_measurement(
    em: &EvaluatedModel,
    index: usize,
    tol: Tolerances,
) -> Result<OptimalMeasurement> {
    let q = qfim(em, Some(tol.rank))?;
    let w = unit_vector(em.num_params(), index)?;
    let verdict = fisher_support_test(&q, &w, tol.span)?;
    if !verdict.estimable {
        return Err(Error::NotEstimable(format!(
            "{} (support residual {:.3e})",
            em.param_names[index], verdict.residual
        )));
    }
    let rep = block_diagonal_reparam(&q, index)?;
    let slds = sld_operators(em, Some(tol.rank))?;
    let d = em.dim();
    let mut l = CMatrix::zeros(d, d);
    for (c, li) in rep.direction.iter().zip(&slds) {
        if *c != 0.0 {
            l += li.matrix() * C64::new(*c, 0.0);
        }
    }
    let eig = eig_hermitian(&HermitianOperator::symmetrized(l))?;
    let scale = eig.values.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    let mut povm = Vec::new();
    let mut ell = Vec::new();
    let mut k = 0;
    while k < d {
        let mut end = k + 1;
        while end < d && eig.values[end] - eig.values[k] <= 1e-9 * scale {
            end += 1;
        }
        let mut p = CMatrix::zeros(d, d);
        for c in k..end {
            let v = eig.vectors.column(c);
            p += v * v.adjoint();
        }
        povm.push(HermitianOperator::symmetrized(p));
        ell.push(eig.values.rows(k, end - k).mean());
        k = end;
    }
    measurement_from_povm(
        em,
        index,
        &rep.direction,
        q.pinv[(index, index)],
        povm,
        Some(ell),
    )
}

/// `sum_x p_x (v_x - theta)` and `sum_x (v_x - theta) d_i p_x` for every
/// parameter; local unbiasedness makes these `0` and the unit vector.
pub fn local_unbiasedness(m: &OptimalMeasurement, em: &EvaluatedModel) -> (f64, Vec<f64>) {
    let bias: f64 = m
        .outcome_probs
        .iter()
        .zip(&m.estimator_values)
        .map(|(p, v)| p * (v - m.theta))
        .sum();
    let grads = em
        .derivs
        .iter()
        .map(|d| {
            m.povm
                .iter()
                .zip(&m.estimator_values)
                .map(|(e, v)| (v - m.theta) * e.trace_product(d))
                .sum()
        })
        .collect();
    (bias, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{plus_state, twirled_qubit_probe, ParameterizedState};
    use std::sync::Arc;

    fn pure_phase() -> ParameterizedState {
        // |psi> = (|0> + e^{i phi}|1>)/sqrt 2, Fisher information 1
        let eval = Arc::new(|t: &[f64]| -> Result<CMatrix> {
            let e = C64::from_polar(1.0, t[0]);
            Ok(CMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new(0.5, 0.0),
                    e.conj() * 0.5,
                    e * 0.5,
                    C64::new(0.5, 0.0),
                ],
            ))
        });
        ParameterizedState::new("pure", 2, vec!["phi".into()], vec![(-10.0, 10.0)], eval).unwrap()
    }

    #[test]
    fn pure_state_fisher_information() {
        let em = pure_phase().evaluate(&[0.3]).unwrap();
        let q = qfim(&em, None).unwrap();
        assert!((q.matrix()[(0, 0)] - 1.0).abs() < 1e-9);
        let v = fisher_support_test(&q, &unit_vector(1, 0).unwrap(), DEFAULT_SPAN_TOL).unwrap();
        assert!(v.estimable && (v.bound - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_weight_rejected() {
        let em = pure_phase().evaluate(&[0.3]).unwrap();
        let q = qfim(&em, None).unwrap();
        assert!(matches!(
            fisher_support_test(&q, &RVector::zeros(1), 1e-7),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn twirled_probe_measurement_is_efficient() {
        let em = twirled_qubit_probe().evaluate(&[0.4, 0.9, 0.1]).unwrap();
        let m = optimal_measurement(&em, 0, Tolerances::default()).unwrap();
        assert_eq!(m.num_outcomes(), 2);
        assert!((m.bound - 1.0 / 0.81).abs() < 1e-12);
        assert!((m.fisher_information() - 0.81).abs() < 1e-12);
        let (bias, grads) = local_unbiasedness(&m, &em);
        assert!(bias.abs() < 1e-12);
        assert!((grads[0] - 1.0).abs() < 1e-12 && grads[1].abs() < 1e-12 && grads[2].abs() < 1e-12);
    }

    #[test]
    fn naive_probe_measurement_refused() {
        let em = crate::state::naive_phase_probe(1, &plus_state(1))
            .unwrap()
            .evaluate(&[0.3, 0.9, 0.8, 0.7])
            .unwrap();
        assert!(matches!(
            optimal_measurement(&em, 0, Tolerances::default()),
            Err(Error::NotEstimable(_))
        ));
    }

    #[test]
    fn fgqcrb_shapes() {
        let em = twirled_qubit_probe().evaluate(&[0.4, 0.9, 0.1]).unwrap();
        let q = qfim(&em, None).unwrap();
        let h = RMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = RMatrix::zeros(1, 1);
        let c = fgqcrb_bound(&q, &h, &b).unwrap();
        assert!((c[(0, 0)] - 1.0 / 0.81).abs() < 1e-12);
        assert!(matches!(
            fgqcrb_bound(&q, &h, &RMatrix::zeros(2, 2)),
            Err(Error::InvalidInput(_))
        ));
    }
}
