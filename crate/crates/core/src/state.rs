//! Parameterized density matrices and the built-in probe families.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, CMatrix, HermitianOperator, C64};
use crate::pauli::{all_paulis, PauliIndex};

/// Central finite-difference step used when no analytic derivative is given.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Tolerance on `|Tr rho - 1|`, on negative eigenvalues and on `|Tr d rho|`.
pub const STATE_TOL: f64 = 1e-9;

pub type StateFn = dyn Fn(&[f64]) -> Result<CMatrix> + Send + Sync;
pub type DerivFn = dyn Fn(&[f64]) -> Result<Vec<CMatrix>> + Send + Sync;

/// A smooth family `theta -> rho(theta)` on a box-shaped domain.
#[derive(Clone)]
pub struct ParameterizedState {
    name: String,
    dim: usize,
    param_names: Vec<String>,
    domain: Vec<(f64, f64)>,
    eval: Arc<StateFn>,
    derivs: Option<Arc<DerivFn>>,
    fd_step: f64,
    traceless_tangents: bool,
}

impl std::fmt::Debug for ParameterizedState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParameterizedState")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("param_names", &self.param_names)
            .field("analytic_derivatives", &self.derivs.is_some())
            .finish()
    }
}

impl ParameterizedState {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        param_names: Vec<String>,
        domain: Vec<(f64, f64)>,
        eval: Arc<StateFn>,
    ) -> Result<Self> {
        if param_names.is_empty() {
            return Err(Error::InvalidInput(
                "model needs at least one parameter".into(),
            ));
        }
        if domain.len() != param_names.len() {
            return Err(Error::InvalidInput(
                "domain and parameter list differ in length".into(),
            ));
        }
        if domain
            .iter()
            .any(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo > hi)
        {
            return Err(Error::InvalidInput(
                "domain bounds must satisfy lo <= hi".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            dim,
            param_names,
            domain,
            eval,
            derivs: None,
            fd_step: DEFAULT_FD_STEP,
            traceless_tangents: true,
        })
    }

    pub fn with_derivatives(mut self, derivs: Arc<DerivFn>) -> Self {
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

    /// Allows derivatives with nonzero trace, for families whose mixture
    /// weights are treated as independent coordinates.
    pub fn allow_unnormalized_tangents(mut self) -> Self {
        self.traceless_tangents = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivs.is_some()
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.param_names
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name:?}")))
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameter values, got {}",
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

    fn raw(&self, theta: &[f64]) -> Result<CMatrix> {
        self.check_domain(theta)?;
        let m = (self.eval)(theta)?;
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::InvalidModel(format!(
                "model returned a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    /// The density matrix at `theta`, validated as a state.
    pub fn state_at(&self, theta: &[f64]) -> Result<HermitianOperator> {
        let rho = HermitianOperator::new(self.raw(theta)?)
            .map_err(|e| Error::InvalidModel(e.to_string()))?;
        validate_state(&rho)?;
        Ok(rho)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<EvaluatedModel> {
        match &self.derivs {
            Some(d) => {
                let rho = self.state_at(theta)?;
                let raw = d(theta)?;
                let derivs = raw
                    .into_iter()
                    .map(|m| {
                        HermitianOperator::new(m)
                            .map_err(|e| Error::InvalidModel(format!("derivative: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.finish(theta, rho, derivs)
            }
            None => self.evaluate_finite_difference(theta),
        }
    }

    /// Central differences with Hermitian symmetrization, ignoring any
    /// analytic derivative.
    pub fn evaluate_finite_difference(&self, theta: &[f64]) -> Result<EvaluatedModel> {
        let rho = self.state_at(theta)?;
        let h = self.fd_step;
        let mut derivs = Vec::with_capacity(theta.len());
        for i in 0..theta.len() {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[i] += h;
            tm[i] -= h;
            let (lo, hi) = self.domain[i];
            if tp[i] > hi || tm[i] < lo {
                return Err(Error::DomainError(format!(
                    "finite-difference stencil for {} leaves [{lo}, {hi}]",
                    self.param_names[i]
                )));
            }
            let d = (self.raw(&tp)? - self.raw(&tm)?) / C64::new(2.0 * h, 0.0);
            derivs.push(HermitianOperator::symmetrized(d));
        }
        self.finish(theta, rho, derivs)
    }

    fn finish(
        &self,
        theta: &[f64],
        rho: HermitianOperator,
        derivs: Vec<HermitianOperator>,
    ) -> Result<EvaluatedModel> {
        let em = EvaluatedModel {
            param_names: self.param_names.clone(),
            theta0: theta.to_vec(),
            rho,
            derivs,
        };
        em.validate(self.traceless_tangents)?;
        Ok(em)
    }
}

fn validate_state(rho: &HermitianOperator) -> Result<()> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > STATE_TOL {
        return Err(Error::InvalidModel(format!("trace is {tr}, expected 1")));
    }
    let min = eig_hermitian(rho)?.values[0];
    if min < -STATE_TOL {
        return Err(Error::InvalidModel(format!(
            "state has negative eigenvalue {min:.3e}"
        )));
    }
    Ok(())
}

/// A state and its first derivatives at one parameter point.
#[derive(Debug, Clone)]
pub struct EvaluatedModel {
    pub param_names: Vec<String>,
    pub theta0: Vec<f64>,
    pub rho: HermitianOperator,
    pub derivs: Vec<HermitianOperator>,
}

impl EvaluatedModel {
    /// Builds a model from explicit data, with the same checks as
    /// [`ParameterizedState::evaluate`].
    pub fn from_parts(
        param_names: Vec<String>,
        theta0: Vec<f64>,
        rho: HermitianOperator,
        derivs: Vec<HermitianOperator>,
    ) -> Result<Self> {
        validate_state(&rho)?;
        let em = Self {
            param_names,
            theta0,
            rho,
            derivs,
        };
        em.validate(true)?;
        Ok(em)
    }

    fn validate(&self, traceless: bool) -> Result<()> {
        let m = self.param_names.len();
        if self.derivs.len() != m || self.theta0.len() != m {
            return Err(Error::InvalidModel(format!(
                "{} parameters but {} derivatives and {} values",
                m,
                self.derivs.len(),
                self.theta0.len()
            )));
        }
        let d = self.rho.dim();
        for (k, dr) in self.derivs.iter().enumerate() {
            if dr.dim() != d {
                return Err(Error::InvalidModel(format!(
                    "derivative {k} has wrong dimension"
                )));
            }
            let tr = dr.trace();
            if traceless && tr.abs() > STATE_TOL * dr.frobenius_norm().max(1.0) * 10.0 {
                return Err(Error::InvalidModel(format!(
                    "derivative with respect to {} has trace {tr:.3e}",
                    self.param_names[k]
                )));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.param_names
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name:?}")))
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `|+><+|` on each of `n` qubits.
pub fn plus_state(n: usize) -> HermitianOperator {
    let d = 1usize << n;
    HermitianOperator::symmetrized(CMatrix::from_element(d, d, real(1.0 / d as f64)))
}

fn check_probe_qubits(n: usize, max: usize) -> Result<()> {
    if n == 0 || n > max {
        return Err(Error::InvalidInput(format!(
            "qubit count must be in 1..={max}, got {n}"
        )));
    }
    Ok(())
}

/// `exp(-i phi/2 sum Z) probe exp(+i phi/2 sum Z)` and its phase derivative.
fn rotate_collective(probe: &CMatrix, n: usize, phi: f64) -> (CMatrix, CMatrix) {
    let d = 1usize << n;
    // eigenvalue of sum Z on |k> is n - 2 popcount(k)
    let s: Vec<f64> = (0..d)
        .map(|k| n as f64 - 2.0 * (k as u32).count_ones() as f64)
        .collect();
    let mut r = CMatrix::zeros(d, d);
    let mut dr = CMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            let w = -(s[j] - s[k]) / 2.0;
            let ph = C64::from_polar(1.0, w * phi);
            r[(j, k)] = probe[(j, k)] * ph;
            dr[(j, k)] = probe[(j, k)] * ph * C64::new(0.0, w);
        }
    }
    (r, dr)
}

/// Product-probe phase sensing under local Pauli-diagonal noise: one phase
/// `phi` followed by one damping factor `lambda_a` per non-identity Pauli,
/// `rho = I/2^n + sum_a lambda_a u_a(phi) P_a` with
/// `u_a = Tr[P_a rho_ideal(phi)] / 2^n`.
pub fn naive_phase_probe(n: usize, probe: &HermitianOperator) -> Result<ParameterizedState> {
    check_probe_qubits(n, 3)?;
    let d = 1usize << n;
    if probe.dim() != d {
        return Err(Error::InvalidInput(format!("probe must be {d}x{d}")));
    }
    validate_state(probe).map_err(|e| Error::InvalidInput(format!("probe: {e}")))?;
    let paulis: Vec<PauliIndex> = all_paulis(n).skip(1).collect();
    let mats: Arc<Vec<CMatrix>> = Arc::new(paulis.iter().map(|p| p.matrix()).collect());
    let mut names = vec!["phi".to_string()];
    names.extend(paulis.iter().map(|p| format!("lambda_{p}")));
    let mut domain = vec![(f64::NEG_INFINITY, f64::INFINITY)];
    domain.extend(std::iter::repeat_n((-1.0, 1.0), paulis.len()));

    let probe_m = Arc::new(probe.matrix().clone());
    let coeffs = {
        let paulis = paulis.clone();
        let probe_m = probe_m.clone();
        Arc::new(move |phi: f64| -> (Vec<f64>, Vec<f64>) {
            let (r, dr) = rotate_collective(&probe_m, n, phi);
            let u = paulis
                .iter()
                .map(|p| p.trace_with(&r).re / d as f64)
                .collect();
            let du = paulis
                .iter()
                .map(|p| p.trace_with(&dr).re / d as f64)
                .collect();
            (u, du)
        })
    };
    let eval = {
        let mats = mats.clone();
        let coeffs = coeffs.clone();
        Arc::new(move |t: &[f64]| -> Result<CMatrix> {
            let (u, _) = coeffs(t[0]);
            let mut rho = CMatrix::identity(d, d) * real(1.0 / d as f64);
            for (k, m) in mats.iter().enumerate() {
                rho += m * real(t[k + 1] * u[k]);
            }
            Ok(rho)
        })
    };
    let derivs = Arc::new(move |t: &[f64]| -> Result<Vec<CMatrix>> {
        let (u, du) = coeffs(t[0]);
        let mut dphi = CMatrix::zeros(d, d);
        let mut out = Vec::with_capacity(mats.len() + 1);
        for (k, m) in mats.iter().enumerate() {
            dphi += m * real(t[k + 1] * du[k]);
        }
        out.push(dphi);
        for (k, m) in mats.iter().enumerate() {
            out.push(m * real(u[k]));
        }
        Ok(out)
    });
    Ok(
        ParameterizedState::new(format!("naive_phase_{n}"), d, names, domain, eval)?
            .with_derivatives(derivs),
    )
}

/// How the syndrome weights of the ancilla-assisted GHZ probe are coordinatized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GhzWeights {
    /// `p_0...0 = 1 - sum of the others`; derivatives stay traceless.
    Eliminated,
    /// Every `p_x` is an independent coordinate, so `d rho / d p_x` has unit
    /// trace. The Fisher matrix is then diagonal.
    Free,
}

fn bit_label(x: usize, n: usize) -> String {
    (0..n)
        .map(|q| if x >> (n - 1 - q) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Matrices shared by every evaluation of the GHZ-with-ancilla family.
struct GhzOperators {
    n: usize,
    projectors: Vec<CMatrix>,
    xl: Vec<CMatrix>,
    yl: Vec<CMatrix>,
}

impl GhzOperators {
    fn new(n: usize) -> Self {
        let nq = n + 1;
        let d = 1usize << nq;
        let bit = |k: usize, q: usize| (k >> (nq - 1 - q)) & 1;
        let mut xl = CMatrix::zeros(d, d);
        let mut yl = CMatrix::zeros(d, d);
        for k in 0..d {
            let flipped = k ^ (d - 1);
            xl[(flipped, k)] = real(1.0);
            // Y on the ancilla: Y|0> = i|1>, Y|1> = -i|0>
            yl[(flipped, k)] = if bit(k, n) == 0 {
                C64::new(0.0, 1.0)
            } else {
                C64::new(0.0, -1.0)
            };
        }
        let mut projectors = Vec::with_capacity(1 << n);
        let mut pxl = Vec::with_capacity(1 << n);
        let mut pyl = Vec::with_capacity(1 << n);
        for x in 0..(1usize << n) {
            let xb = |q: usize| if q < n { (x >> (n - 1 - q)) & 1 } else { 0 };
            let diag: Vec<C64> = (0..d)
                .map(|k| {
                    let ok = (0..n).all(|i| (bit(k, i) ^ bit(k, i + 1)) == (xb(i) ^ xb(i + 1)));
                    real(if ok { 1.0 } else { 0.0 })
                })
                .collect();
            let p = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
            pxl.push(&p * &xl);
            pyl.push(&p * &yl);
            projectors.push(p);
        }
        Self {
            n,
            projectors,
            xl: pxl,
            yl: pyl,
        }
    }

    /// `Pi_x (I + lam cos(n phi) X_L + lam sin(n phi) Y_L) / 2`
    fn block(&self, x: usize, lam: f64, phi: f64) -> CMatrix {
        let a = self.n as f64 * phi;
        (&self.projectors[x]
            + &self.xl[x] * real(lam * a.cos())
            + &self.yl[x] * real(lam * a.sin()))
            * real(0.5)
    }
}

/// Ancilla-assisted GHZ probe after local Pauli noise on the sensing qubits:
/// `rho = sum_x p_x Pi_x (I + lambda_x cos(n phi) X_L + lambda_x sin(n phi) Y_L) / 2`.
/// Parameters are `phi`, the syndrome weights `p_x` and the coherences
/// `lambda_x`, in that order.
pub fn ghz_ancilla_probe(n: usize) -> Result<ParameterizedState> {
    ghz_ancilla_probe_with(n, GhzWeights::Eliminated)
}

pub fn ghz_ancilla_probe_with(n: usize, weights: GhzWeights) -> Result<ParameterizedState> {
    check_probe_qubits(n, 3)?;
    let nx = 1usize << n;
    let d = 1usize << (n + 1);
    let ops = Arc::new(GhzOperators::new(n));
    let first_p = match weights {
        GhzWeights::Eliminated => 1,
        GhzWeights::Free => 0,
    };
    let mut names = vec!["phi".to_string()];
    names.extend((first_p..nx).map(|x| format!("p_{}", bit_label(x, n))));
    names.extend((0..nx).map(|x| format!("lambda_{}", bit_label(x, n))));
    let np = nx - first_p;
    let mut domain = vec![(f64::NEG_INFINITY, f64::INFINITY)];
    domain.extend(std::iter::repeat_n((0.0, 1.0), np));
    domain.extend(std::iter::repeat_n((-1.0, 1.0), nx));

    // Unpacks theta into (phi, p, lambda) with all 2^n weights present.
    let unpack = Arc::new(move |t: &[f64]| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut p = Vec::with_capacity(nx);
        if first_p == 1 {
            let rest: f64 = t[1..1 + np].iter().sum();
            let p0 = 1.0 - rest;
            if p0 < 0.0 {
                return Err(Error::DomainError(format!(
                    "implied weight p_{} = {p0} is negative",
                    bit_label(0, n)
                )));
            }
            p.push(p0);
        }
        p.extend_from_slice(&t[1..1 + np]);
        Ok((t[0], p, t[1 + np..].to_vec()))
    });
    let eval = {
        let ops = ops.clone();
        let unpack = unpack.clone();
        Arc::new(move |t: &[f64]| -> Result<CMatrix> {
            let (phi, p, lam) = unpack(t)?;
            let mut rho = CMatrix::zeros(d, d);
            for x in 0..nx {
                rho += ops.block(x, lam[x], phi) * real(p[x]);
            }
            Ok(rho)
        })
    };
    let derivs = Arc::new(move |t: &[f64]| -> Result<Vec<CMatrix>> {
        let (phi, p, lam) = unpack(t)?;
        let nf = n as f64;
        let (c, s) = ((nf * phi).cos(), (nf * phi).sin());
        let mut out = Vec::with_capacity(1 + np + nx);
        let mut dphi = CMatrix::zeros(d, d);
        for x in 0..nx {
            dphi += (&ops.yl[x] * real(c) - &ops.xl[x] * real(s)) * real(0.5 * nf * p[x] * lam[x]);
        }
        out.push(dphi);
        let b0 = ops.block(0, lam[0], phi);
        for x in first_p..nx {
            let bx = ops.block(x, lam[x], phi);
            out.push(if first_p == 1 { bx - &b0 } else { bx });
        }
        for x in 0..nx {
            out.push((&ops.xl[x] * real(c) + &ops.yl[x] * real(s)) * real(0.5 * p[x]));
        }
        Ok(out)
    });
    let st = ParameterizedState::new(format!("ghz_ancilla_{n}"), d, names, domain, eval)?
        .with_derivatives(derivs);
    Ok(match weights {
        GhzWeights::Eliminated => st,
        GhzWeights::Free => st.allow_unnormalized_tangents(),
    })
}

/// Syndrome projector `Pi_x` of the GHZ-with-ancilla probe on `n + 1` qubits.
pub fn ghz_syndrome_projector(n: usize, x: usize) -> Result<HermitianOperator> {
    check_probe_qubits(n, 3)?;
    if x >= 1 << n {
        return Err(Error::InvalidInput(format!("syndrome {x} out of range")));
    }
    Ok(HermitianOperator::symmetrized(
        GhzOperators::new(n).projectors.swap_remove(x),
    ))
}

/// Single qubit after symmetric-Clifford-twirled Rz noise:
/// `rho = (I + lambda_1 cos(phi) X + lambda_1 sin(phi) Y + alpha Z) / 2`.
pub fn twirled_qubit_probe() -> ParameterizedState {
    let names = vec![
        "phi".to_string(),
        "lambda_1".to_string(),
        "alpha".to_string(),
    ];
    let domain = vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, 1.0), (-1.0, 1.0)];
    let x = PauliIndex::parse("X").unwrap().matrix();
    let y = PauliIndex::parse("Y").unwrap().matrix();
    let z = PauliIndex::parse("Z").unwrap().matrix();
    let id = CMatrix::identity(2, 2);
    let check = |t: &[f64]| -> Result<()> {
        let r2 = t[1] * t[1] + t[2] * t[2];
        if r2 >= 1.0 {
            return Err(Error::DomainError(format!(
                "lambda_1^2 + alpha^2 = {r2} must be below 1"
            )));
        }
        Ok(())
    };
    let eval = {
        let (x, y, z) = (x.clone(), y.clone(), z.clone());
        Arc::new(move |t: &[f64]| -> Result<CMatrix> {
            check(t)?;
            Ok((&id
                + &x * real(t[1] * t[0].cos())
                + &y * real(t[1] * t[0].sin())
                + &z * real(t[2]))
                * real(0.5))
        })
    };
    let derivs = Arc::new(move |t: &[f64]| -> Result<Vec<CMatrix>> {
        check(t)?;
        let (c, s) = (t[0].cos(), t[0].sin());
        Ok(vec![
            (&y * real(t[1] * c) - &x * real(t[1] * s)) * real(0.5),
            (&x * real(c) + &y * real(s)) * real(0.5),
            &z * real(0.5),
        ])
    });
    ParameterizedState::new("twirled_qubit", 2, names, domain, eval)
        .expect("static model definition")
        .with_derivatives(derivs)
}

/// `rho(theta) = U rho0 U^dagger` with `U = exp(-i sum_k theta_k H_k)`;
/// derivatives come from finite differences.
pub fn unitary_family(
    rho0: HermitianOperator,
    generators: Vec<HermitianOperator>,
    param_names: Vec<String>,
) -> Result<ParameterizedState> {
    let d = rho0.dim();
    validate_state(&rho0).map_err(|e| Error::InvalidInput(format!("rho: {e}")))?;
    if generators.len() != param_names.len() {
        return Err(Error::InvalidInput(
            "one generator per parameter is required".into(),
        ));
    }
    if generators.iter().any(|g| g.dim() != d) {
        return Err(Error::InvalidInput(
            "generators must match the state dimension".into(),
        ));
    }
    let domain = vec![(f64::NEG_INFINITY, f64::INFINITY); param_names.len()];
    let eval = Arc::new(move |t: &[f64]| -> Result<CMatrix> {
        let mut h = CMatrix::zeros(d, d);
        for (g, x) in generators.iter().zip(t) {
            h += g.matrix() * real(*x);
        }
        let e = eig_hermitian(&HermitianOperator::symmetrized(h))?;
        let phases =
            nalgebra::DVector::from_iterator(d, e.values.iter().map(|l| C64::from_polar(1.0, -l)));
        let u = &e.vectors * CMatrix::from_diagonal(&phases) * e.vectors.adjoint();
        Ok(&u * rho0.matrix() * u.adjoint())
    });
    ParameterizedState::new("unitary_family", d, param_names, domain, eval)
}
