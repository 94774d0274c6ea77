//! JSON schemas for models, channels, cycle experiments, transfer matrices
//! and simulation scenarios, and the report shapes built from them.
//!
//! Complex entries are `[re, im]` pairs. Transfer matrices are row-major in
//! the crate's Pauli order (linear index `x * 2^n + z`, qubit 1 most
//! significant), and always carry their row labels. Every input schema
//! rejects unknown fields.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimability::{
    derivative_span_test, fisher_support_test, qfim, unit_vector, Tolerances,
};
use crate::learnability::{
    cnot_ptm, pauli_cycle_model, pauli_diag_channel, rz_cycle_model, rz_noise_channel, CycleModel,
    LearnabilityReport, ParameterizedChannel, Relation, RzAngles,
};
use crate::linalg::{CMatrix, HermitianOperator, RMatrix, C64};
use crate::pauli::{all_paulis, num_paulis, PauliChannel, PauliTransferMatrix};
use crate::sensing::{
    miscalibrated_truth, BiasVarianceReport, Miscalibration, Scenario, ShotRecord,
};
use crate::state::{
    ghz_ancilla_probe_with, naive_phase_probe, plus_state, twirled_qubit_probe, unitary_family,
    EvaluatedModel, GhzWeights, ParameterizedState,
};

pub type ComplexRows = Vec<Vec<[f64; 2]>>;
pub type ParamMap = BTreeMap<String, f64>;

pub fn complex_matrix(rows: &ComplexRows) -> Result<CMatrix> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput(
            "matrix must be square and nonempty".into(),
        ));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

pub fn complex_rows(m: &CMatrix) -> ComplexRows {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

pub fn real_matrix(rows: &[Vec<f64>]) -> Result<RMatrix> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput(
            "matrix must be square and nonempty".into(),
        ));
    }
    Ok(RMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub fn real_rows(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// `defaults` overridden by name; unknown names are an error.
pub fn resolve_point(names: &[String], defaults: &[f64], overrides: &ParamMap) -> Result<Vec<f64>> {
    let mut t = defaults.to_vec();
    for (k, v) in overrides {
        let i = names.iter().position(|n| n == k).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown parameter {k:?}; expected one of {names:?}"
            ))
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "parameter {k:?} must be finite"
            )));
        }
        t[i] = *v;
    }
    Ok(t)
}

/// Records who produced an artifact and from what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub input_hash: String,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinState {
    Naive,
    GhzAncilla,
    Twirled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFile {
    Builtin {
        name: BuiltinState,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        weights: Option<GhzWeights>,
        #[serde(default)]
        theta0: ParamMap,
    },
    /// With `derivatives`, `rho` is the state at `theta0`. With `generators`
    /// it is the reference state of `exp(-i sum theta_k H_k)`.
    Explicit {
        dim: usize,
        parameters: Vec<String>,
        rho: ComplexRows,
        #[serde(default)]
        derivatives: Option<Vec<ComplexRows>>,
        #[serde(default)]
        generators: Option<Vec<ComplexRows>>,
        #[serde(default)]
        theta0: ParamMap,
        #[serde(default)]
        fd_step: Option<f64>,
    },
}

/// A builtin probe and its default fiducial point.
pub fn builtin_state(
    name: BuiltinState,
    n: Option<usize>,
    weights: Option<GhzWeights>,
) -> Result<(ParameterizedState, Vec<f64>)> {
    match name {
        BuiltinState::Naive => {
            let n = n.unwrap_or(1);
            let m = naive_phase_probe(n, &plus_state(n))?;
            let mut t = vec![0.3];
            t.extend((1..m.num_params()).map(|k| 0.9 - 0.01 * k as f64));
            Ok((m, t))
        }
        BuiltinState::GhzAncilla => {
            let n = n.unwrap_or(2);
            let w = weights.unwrap_or(GhzWeights::Eliminated);
            let m = ghz_ancilla_probe_with(n, w)?;
            let nx = 1usize << n;
            let mut t = vec![0.2];
            if w == GhzWeights::Free {
                t.push(1.0 - 0.04 * (nx - 1) as f64);
            }
            t.extend((1..nx).map(|_| 0.04));
            t.extend((0..nx).map(|x| 0.9 - 0.05 * x as f64));
            Ok((m, t))
        }
        BuiltinState::Twirled => {
            if n.is_some_and(|n| n != 1) {
                return Err(Error::InvalidInput(
                    "the twirled probe is a single qubit".into(),
                ));
            }
            Ok((twirled_qubit_probe(), vec![0.4, 0.9, 0.1]))
        }
    }
}

impl ModelFile {
    /// Resolves the file to the state and derivatives at its fiducial point.
    pub fn evaluate(&self) -> Result<EvaluatedModel> {
        match self {
            ModelFile::Builtin {
                name,
                n,
                weights,
                theta0,
            } => {
                if weights.is_some() && *name != BuiltinState::GhzAncilla {
                    return Err(Error::InvalidInput(
                        "weights apply only to ghz_ancilla".into(),
                    ));
                }
                let (m, defaults) = builtin_state(*name, *n, *weights)?;
                let t = resolve_point(m.param_names(), &defaults, theta0)?;
                m.evaluate(&t)
            }
            ModelFile::Explicit {
                dim,
                parameters,
                rho,
                derivatives,
                generators,
                theta0,
                fd_step,
            } => {
                let rho = complex_matrix(rho)?;
                if rho.nrows() != *dim {
                    return Err(Error::InvalidInput(format!(
                        "rho is {0}x{0}, dim is {dim}",
                        rho.nrows()
                    )));
                }
                let t = resolve_point(parameters, &vec![0.0; parameters.len()], theta0)?;
                match (derivatives, generators) {
                    (Some(ds), None) => {
                        if fd_step.is_some() {
                            return Err(Error::InvalidInput("fd_step needs generators".into()));
                        }
                        let ds = ds.iter().map(complex_matrix).collect::<Result<Vec<_>>>()?;
                        let ds = ds.into_iter().map(hermitian).collect::<Result<Vec<_>>>()?;
                        EvaluatedModel::from_parts(parameters.clone(), t, hermitian(rho)?, ds)
                    }
                    (None, Some(gs)) => {
                        let gs = gs.iter().map(complex_matrix).collect::<Result<Vec<_>>>()?;
                        let gs = gs.into_iter().map(hermitian).collect::<Result<Vec<_>>>()?;
                        let mut m = unitary_family(hermitian(rho)?, gs, parameters.clone())?;
                        if let Some(h) = fd_step {
                            m = m.with_fd_step(*h)?;
                        }
                        m.evaluate(&t)
                    }
                    _ => Err(Error::InvalidModel(
                        "explicit models need exactly one of derivatives or generators".into(),
                    )),
                }
            }
        }
    }
}

fn hermitian(m: CMatrix) -> Result<HermitianOperator> {
    HermitianOperator::new(m).map_err(|e| Error::InvalidModel(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinChannel {
    /// Twirled Rz noise, `lambda_1, lambda_2, alpha, theta`.
    RzNoise,
    /// Pauli channel on `n` qubits by its eigenvalues.
    Pauli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelFile {
    Builtin {
        name: BuiltinChannel,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        theta0: ParamMap,
    },
    /// First-order model `A(theta) = ptm + sum_k (theta - theta0)_k D_k`.
    Explicit {
        n: usize,
        parameters: Vec<String>,
        ptm: Vec<Vec<f64>>,
        derivatives: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        theta0: ParamMap,
    },
}

fn small_pauli_point(n: usize) -> Result<Vec<f64>> {
    let rates: Vec<f64> = (1..num_paulis(n))
        .map(|k| 0.01 * (1.0 + 0.1 * k as f64))
        .collect();
    Ok(PauliChannel::from_rates(n, &rates)?.eigenvalues()[1..].to_vec())
}

impl ChannelFile {
    pub fn resolve(&self) -> Result<(ParameterizedChannel, Vec<f64>)> {
        match self {
            ChannelFile::Builtin { name, n, theta0 } => {
                let (ch, defaults) = match name {
                    BuiltinChannel::RzNoise => {
                        if n.is_some_and(|n| n != 1) {
                            return Err(Error::InvalidInput(
                                "rz_noise is a single-qubit channel".into(),
                            ));
                        }
                        (rz_noise_channel(), vec![0.9, 0.85, 0.05, 0.3])
                    }
                    BuiltinChannel::Pauli => {
                        let n = n.unwrap_or(1);
                        if n == 0 || n > crate::pauli::MAX_QUBITS {
                            return Err(Error::InvalidInput(format!(
                                "qubit count {n} unsupported"
                            )));
                        }
                        (pauli_diag_channel("pauli", n, ""), small_pauli_point(n)?)
                    }
                };
                let t = resolve_point(ch.param_names(), &defaults, theta0)?;
                Ok((ch, t))
            }
            ChannelFile::Explicit {
                n,
                parameters,
                ptm,
                derivatives,
                theta0,
            } => {
                let a0 = PauliTransferMatrix::new(*n, real_matrix(ptm)?)?;
                if derivatives.len() != parameters.len() {
                    return Err(Error::InvalidModel(
                        "one derivative per parameter is required".into(),
                    ));
                }
                let ds = derivatives
                    .iter()
                    .map(|d| PauliTransferMatrix::new(*n, real_matrix(d)?).map(|p| p.data))
                    .collect::<Result<Vec<_>>>()?;
                let t0 = resolve_point(parameters, &vec![0.0; parameters.len()], theta0)?;
                let base = a0.data;
                let (dsc, t0c) = (ds.clone(), t0.clone());
                let eval = Arc::new(move |t: &[f64]| {
                    let mut a = base.clone();
                    for (k, d) in dsc.iter().enumerate() {
                        a += d * (t[k] - t0c[k]);
                    }
                    Ok(a)
                });
                let free = vec![(f64::NEG_INFINITY, f64::INFINITY); parameters.len()];
                let ch = ParameterizedChannel::new("explicit", *n, parameters.clone(), free, eval)?
                    .with_derivatives(Arc::new(move |_| Ok(ds.clone())));
                Ok((ch, t0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateName {
    Rz,
    Cnot,
    /// Any Clifford gate given as `ptm`, with Pauli noise and SPAM.
    Ptm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleFile {
    pub gate: GateName,
    /// Rz gate angle.
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub angles: Option<RzAngles>,
    #[serde(default)]
    pub ptm: Option<PtmFile>,
    /// Fiducial point overrides by parameter name.
    #[serde(default)]
    pub parameters: ParamMap,
    #[serde(default)]
    pub depths: Option<Vec<usize>>,
}

impl CycleFile {
    pub fn resolve(&self) -> Result<(CycleModel, Vec<f64>)> {
        let rz_only = self.phi.is_some() || self.angles.is_some();
        let mut m = match self.gate {
            GateName::Rz => {
                if self.ptm.is_some() {
                    return Err(Error::InvalidInput(
                        "ptm is only used with gate \"ptm\"".into(),
                    ));
                }
                rz_cycle_model(
                    self.phi.unwrap_or(0.3),
                    self.angles.unwrap_or(RzAngles::Combined),
                )?
            }
            GateName::Cnot | GateName::Ptm if rz_only => {
                return Err(Error::InvalidInput(
                    "phi and angles apply only to gate \"rz\"".into(),
                ));
            }
            GateName::Cnot => {
                if self.ptm.is_some() {
                    return Err(Error::InvalidInput(
                        "ptm is only used with gate \"ptm\"".into(),
                    ));
                }
                pauli_cycle_model("cnot", cnot_ptm())?
            }
            GateName::Ptm => {
                let p = self
                    .ptm
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("gate \"ptm\" needs a ptm field".into()))?;
                pauli_cycle_model("ptm", p.to_ptm()?)?
            }
        };
        if let Some(d) = &self.depths {
            m = m.with_depths(d.clone())?;
        }
        let t = resolve_point(&m.param_names(), &m.default_point, &self.parameters)?;
        Ok((m, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtmFile {
    pub n: usize,
    /// Row and column labels; checked against the crate's order when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub fn pauli_labels(n: usize) -> Vec<String> {
    all_paulis(n).map(|p| p.to_string()).collect()
}

impl PtmFile {
    pub fn from_ptm(a: &PauliTransferMatrix) -> Self {
        Self {
            n: a.n,
            labels: Some(pauli_labels(a.n)),
            matrix: real_rows(&a.data),
            provenance: None,
        }
    }

    pub fn to_ptm(&self) -> Result<PauliTransferMatrix> {
        if let Some(l) = &self.labels {
            if *l != pauli_labels(self.n) {
                return Err(Error::InvalidInput(format!(
                    "labels must be {:?}",
                    pauli_labels(self.n)
                )));
            }
        }
        PauliTransferMatrix::new(self.n, real_matrix(&self.matrix)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioFile {
    /// Optimal measurement on the GHZ-with-ancilla probe.
    GhzAncilla {
        n: usize,
        #[serde(default)]
        true_theta: ParamMap,
        #[serde(default)]
        fiducial: Option<ParamMap>,
    },
    /// Optimal measurement on the twirled single-qubit probe.
    Twirled {
        #[serde(default)]
        true_theta: ParamMap,
        #[serde(default)]
        fiducial: Option<ParamMap>,
    },
    /// Calibrated phase readout on `|+>` probes; the data come from the
    /// assumed point rescaled by `miscalibration` (default `{"X": 0.9}`).
    Naive {
        n: usize,
        #[serde(default)]
        assumed: ParamMap,
        #[serde(default)]
        miscalibration: Option<ParamMap>,
    },
    /// Calibration-free `X_L`/`Y_L` phase readout on the GHZ probe.
    GhzReadout {
        n: usize,
        #[serde(default)]
        true_theta: ParamMap,
    },
}

impl ScenarioFile {
    pub fn scenario(&self) -> Result<Scenario> {
        match self {
            ScenarioFile::GhzAncilla {
                n,
                true_theta,
                fiducial,
            } => {
                let (m, d) = builtin_state(BuiltinState::GhzAncilla, Some(*n), None)?;
                let t = resolve_point(m.param_names(), &d, true_theta)?;
                let f = fiducial
                    .as_ref()
                    .map(|f| resolve_point(m.param_names(), &t, f))
                    .transpose()?;
                Scenario::ghz_ancilla(*n, t, f)
            }
            ScenarioFile::Twirled {
                true_theta,
                fiducial,
            } => {
                let (m, d) = builtin_state(BuiltinState::Twirled, None, None)?;
                let t = resolve_point(m.param_names(), &d, true_theta)?;
                let f = fiducial
                    .as_ref()
                    .map(|f| resolve_point(m.param_names(), &t, f))
                    .transpose()?;
                Scenario::twirled(t, f)
            }
            ScenarioFile::Naive {
                n,
                assumed,
                miscalibration,
            } => {
                let (m, d) = builtin_state(BuiltinState::Naive, Some(*n), None)?;
                let a = resolve_point(m.param_names(), &d, assumed)?;
                let mis = match miscalibration {
                    Some(map) => Miscalibration {
                        factors: map.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                    },
                    None => Miscalibration::default(),
                };
                let truth = miscalibrated_truth(*n, &a, &mis)?;
                Scenario::naive_phase_readout(*n, truth, &a)
            }
            ScenarioFile::GhzReadout { n, true_theta } => {
                let (m, d) = builtin_state(BuiltinState::GhzAncilla, Some(*n), None)?;
                let t = resolve_point(m.param_names(), &d, true_theta)?;
                Scenario::ghz_phase_readout(*n, t)
            }
        }
    }
}

/// Verdict on one parameter of a state or channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub parameter: String,
    pub estimable: bool,
    pub verdict: String,
    /// `[J^+]_ii`; absent when not estimable.
    pub bound: Option<f64>,
    pub support_residual: f64,
    pub span_residual: f64,
    /// Whether the Fisher-support and derivative-span tests agree.
    pub tests_agree: bool,
    /// For non-estimable parameters, `d_i rho = sum_j c_j d_j rho`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative_expansion: Option<Relation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub param_names: Vec<String>,
    pub theta0: Vec<f64>,
    pub qfim: Vec<Vec<f64>>,
    pub qfim_eigenvalues: Vec<f64>,
    pub rank: usize,
    pub rank_cutoff: f64,
    pub parameters: Vec<ParameterReport>,
}

impl ModelReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterReport> {
        self.parameters.iter().find(|p| p.parameter == name)
    }
}

/// Fisher matrix and per-parameter verdicts. `only` restricts the verdicts
/// to one parameter.
pub fn analyze_model(
    em: &EvaluatedModel,
    tol: Tolerances,
    only: Option<&str>,
) -> Result<ModelReport> {
    let q = qfim(em, Some(tol.rank))?;
    let indices: Vec<usize> = match only {
        Some(name) => vec![em.param_index(name)?],
        None => (0..em.num_params()).collect(),
    };
    let mut parameters = Vec::with_capacity(indices.len());
    for i in indices {
        let support = fisher_support_test(&q, &unit_vector(em.num_params(), i)?, tol.span)?;
        let span = derivative_span_test(em, i, tol.span)?;
        let expansion = (!span.estimable).then(|| {
            let others = (0..em.num_params()).filter(|&k| k != i);
            let coeffs = span
                .relation
                .as_ref()
                .map(|r| r.coefficients.clone())
                .unwrap_or_default();
            Relation {
                terms: others
                    .zip(coeffs)
                    .filter(|(_, c)| c.abs() > 1e-12)
                    .map(|(k, c)| (em.param_names[k].clone(), c))
                    .collect(),
            }
        });
        parameters.push(ParameterReport {
            parameter: em.param_names[i].clone(),
            estimable: support.estimable,
            verdict: if support.estimable {
                "estimable"
            } else {
                "unbiased estimation impossible"
            }
            .into(),
            bound: support.estimable.then_some(support.bound),
            support_residual: support.residual,
            span_residual: span.residual,
            tests_agree: support.estimable == span.estimable,
            derivative_expansion: expansion,
        });
    }
    Ok(ModelReport {
        param_names: em.param_names.clone(),
        theta0: em.theta0.clone(),
        qfim: real_rows(q.matrix()),
        qfim_eigenvalues: q.eigenvalues.iter().copied().collect(),
        rank: q.rank,
        rank_cutoff: q.cutoff,
        parameters,
    })
}

/// Per-parameter learnability of a single channel from its Choi state.
pub fn analyze_channel(
    ch: &ParameterizedChannel,
    theta: &[f64],
    tol: Tolerances,
    only: Option<&str>,
) -> Result<ModelReport> {
    ch.check_completely_positive(theta)?;
    let em = crate::learnability::channel_as_state(ch, theta)?;
    let mut r = analyze_model(&em, tol, only)?;
    for p in &mut r.parameters {
        p.verdict = if p.estimable {
            "learnable"
        } else {
            "not learnable"
        }
        .into();
    }
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct Output<'a, T: Serialize> {
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: &'a T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    #[serde(flatten)]
    pub stats: BiasVarianceReport,
    pub variance_ratio: f64,
    pub asymptotic_mean: f64,
    pub outcome_labels: Vec<String>,
    pub outcome_probs: Vec<f64>,
}

impl SimulationReport {
    pub fn new(sc: &Scenario, stats: BiasVarianceReport) -> Self {
        Self {
            variance_ratio: stats.variance_ratio(),
            asymptotic_mean: sc.asymptotic_mean(),
            outcome_labels: sc.outcome_labels.clone(),
            outcome_probs: sc.outcome_probs.clone(),
            stats,
        }
    }
}

/// Histogram as CSV with a header row.
pub fn histogram_csv(sc: &Scenario, rec: &ShotRecord) -> String {
    let mut s = String::from("outcome,label,probability,count\n");
    for (k, c) in rec.counts.iter().enumerate() {
        s.push_str(&format!(
            "{k},{},{:.17e},{c}\n",
            sc.outcome_labels[k], sc.outcome_probs[k]
        ));
    }
    s
}

/// Learnability report for the CLI; same content as the library type.
pub type CycleReport = LearnabilityReport;
