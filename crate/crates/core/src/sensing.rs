//! Monte Carlo check of estimator bias and variance for the sensing probes.
//!
//! Shots are drawn from counter-based ChaCha streams: shot `k` always uses
//! word `2k` of the stream seeded by `seed`, so histograms do not depend on
//! how the shots are split across threads.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimability::{
    fisher_support_test, optimal_measurement, qfim, unit_vector, Tolerances,
};
use crate::linalg::{CMatrix, HermitianOperator, C64};
use crate::pauli::PauliIndex;
use crate::state::{
    ghz_ancilla_probe, naive_phase_probe, plus_state, twirled_qubit_probe, ParameterizedState,
};

/// Tolerance on `|sum p - 1|` for outcome distributions.
pub const PROBABILITY_TOL: f64 = 1e-9;
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Naive,
    GhzAncilla,
    Twirled,
}

/// How a histogram is turned into an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// Each outcome carries an estimate; the result is their empirical mean.
    PerShot { values: Vec<f64> },
    /// `atan2(<sin>/scale_sin, <cos>/scale_cos) / multiplier`, where `<cos>`
    /// and `<sin>` are the mean signs within the cosine and sine settings.
    PhaseReadout {
        cos_outcomes: (usize, usize),
        sin_outcomes: (usize, usize),
        scale_cos: f64,
        scale_sin: f64,
        multiplier: f64,
    },
}

/// A probe, its true parameters, a measurement and an estimator.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub name: String,
    pub model: ParameterizedState,
    pub true_theta: Vec<f64>,
    pub index: usize,
    pub povm: Vec<HermitianOperator>,
    pub outcome_labels: Vec<String>,
    /// Born probabilities at `true_theta`.
    pub outcome_probs: Vec<f64>,
    pub estimator: Estimator,
    /// Smallest variance any locally unbiased estimator can reach at
    /// `true_theta`; infinite when the target is not estimable.
    pub qcrb_bound: f64,
}

impl Scenario {
    fn assemble(
        kind: ScenarioKind,
        name: String,
        model: ParameterizedState,
        true_theta: Vec<f64>,
        index: usize,
        povm: Vec<HermitianOperator>,
        outcome_labels: Vec<String>,
        estimator: Estimator,
    ) -> Result<Self> {
        if let Some(first) = povm.first() {
            let mut total = HermitianOperator::zeros(first.dim());
            for e in &povm {
                total = total.add(e);
            }
            let dev = total
                .sub(&HermitianOperator::identity(first.dim()))
                .frobenius_norm();
            if dev > PROBABILITY_TOL {
                return Err(Error::InvalidScenario(format!(
                    "POVM elements sum to identity only within {dev:e}"
                )));
            }
        }
        let rho = model.state_at(&true_theta)?;
        let outcome_probs = povm.iter().map(|e| e.trace_product(&rho)).collect();
        let em = model.evaluate(&true_theta)?;
        let q = qfim(&em, None)?;
        let support = fisher_support_test(
            &q,
            &unit_vector(em.num_params(), index)?,
            Tolerances::default().span,
        )?;
        Ok(Self {
            kind,
            name,
            model,
            true_theta,
            index,
            povm,
            outcome_labels,
            outcome_probs,
            estimator,
            qcrb_bound: support.bound,
        })
    }

    pub fn true_value(&self) -> f64 {
        self.true_theta[self.index]
    }

    /// Optimal measurement for the target built at `fiducial` (defaults to
    /// the true point), with probabilities taken at the true point.
    fn optimal(
        kind: ScenarioKind,
        name: String,
        model: ParameterizedState,
        true_theta: Vec<f64>,
        fiducial: Option<Vec<f64>>,
    ) -> Result<Self> {
        let fid = fiducial.unwrap_or_else(|| true_theta.clone());
        let em = model.evaluate(&fid)?;
        let m = optimal_measurement(&em, 0, Tolerances::default())?;
        let labels = match &m.sld_eigenvalues {
            Some(l) => l.iter().map(|v| format!("{v:+.6}")).collect(),
            None => (0..m.num_outcomes()).map(|k| k.to_string()).collect(),
        };
        Self::assemble(
            kind,
            name,
            model,
            true_theta,
            0,
            m.povm,
            labels,
            Estimator::PerShot {
                values: m.estimator_values,
            },
        )
    }

    /// Ancilla-assisted GHZ probe with the optimal measurement for `phi`.
    pub fn ghz_ancilla(n: usize, true_theta: Vec<f64>, fiducial: Option<Vec<f64>>) -> Result<Self> {
        let model = ghz_ancilla_probe(n)?;
        Self::optimal(
            ScenarioKind::GhzAncilla,
            format!("ghz_ancilla_n{n}"),
            model,
            true_theta,
            fiducial,
        )
    }

    /// Twirled single-qubit probe `(phi, lambda_1, alpha)` with the optimal
    /// measurement for `phi`.
    pub fn twirled(true_theta: Vec<f64>, fiducial: Option<Vec<f64>>) -> Result<Self> {
        Self::optimal(
            ScenarioKind::Twirled,
            "twirled_qubit".into(),
            twirled_qubit_probe(),
            true_theta,
            fiducial,
        )
    }

    /// Product `|+>` probe read out by measuring qubit 1 in the X or Y basis
    /// with equal probability. The phase estimate divides the two mean signs
    /// by the assumed damping factors of `X` and `Y` on qubit 1 and takes
    /// their arctangent, so it is biased whenever the assumed ratio of those
    /// factors is wrong.
    pub fn naive_phase_readout(
        n: usize,
        true_theta: Vec<f64>,
        assumed_theta: &[f64],
    ) -> Result<Self> {
        let model = naive_phase_probe(n, &plus_state(n))?;
        if assumed_theta.len() != model.num_params() {
            return Err(Error::InvalidInput(format!(
                "expected {} assumed parameters",
                model.num_params()
            )));
        }
        let pad = "I".repeat(n - 1);
        let ix = model.param_index(&format!("lambda_X{pad}"))?;
        let iy = model.param_index(&format!("lambda_Y{pad}"))?;
        let (sx, sy) = (assumed_theta[ix], assumed_theta[iy]);
        if sx == 0.0 || sy == 0.0 {
            return Err(Error::InvalidScenario(
                "assumed damping factors must be nonzero".into(),
            ));
        }
        let x1 = PauliIndex::parse(&format!("X{pad}"))?.matrix();
        let y1 = PauliIndex::parse(&format!("Y{pad}"))?.matrix();
        let d = 1usize << n;
        let povm = basis_pair_povm(d, &x1, &y1);
        Self::assemble(
            ScenarioKind::Naive,
            format!("naive_n{n}"),
            model,
            true_theta,
            0,
            povm,
            ["x+", "x-", "y+", "y-"].map(String::from).to_vec(),
            Estimator::PhaseReadout {
                cos_outcomes: (0, 1),
                sin_outcomes: (2, 3),
                scale_cos: sx,
                scale_sin: sy,
                multiplier: 1.0,
            },
        )
    }

    /// GHZ probe read out with `X_L` or `Y_L` at random, estimate
    /// `atan2(<Y_L>, <X_L>) / n`. The noise rescales both signs by the same
    /// factor, so no calibration enters.
    pub fn ghz_phase_readout(n: usize, true_theta: Vec<f64>) -> Result<Self> {
        let model = ghz_ancilla_probe(n)?;
        let nq = n + 1;
        let xl = PauliIndex::parse(&"X".repeat(nq))?.matrix();
        let yl = PauliIndex::parse(&format!("{}Y", "X".repeat(n)))?.matrix();
        let povm = basis_pair_povm(1 << nq, &xl, &yl);
        Self::assemble(
            ScenarioKind::GhzAncilla,
            format!("ghz_readout_n{n}"),
            model,
            true_theta,
            0,
            povm,
            ["x+", "x-", "y+", "y-"].map(String::from).to_vec(),
            Estimator::PhaseReadout {
                cos_outcomes: (0, 1),
                sin_outcomes: (2, 3),
                scale_cos: 1.0,
                scale_sin: 1.0,
                multiplier: n as f64,
            },
        )
    }

    /// Large-sample limit of the phase readout, from the exact outcome
    /// probabilities.
    pub fn asymptotic_mean(&self) -> f64 {
        match &self.estimator {
            Estimator::PerShot { values } => self
                .outcome_probs
                .iter()
                .zip(values)
                .map(|(p, v)| p * v)
                .sum(),
            Estimator::PhaseReadout {
                cos_outcomes,
                sin_outcomes,
                scale_cos,
                scale_sin,
                multiplier,
            } => {
                let p = &self.outcome_probs;
                let c = (p[cos_outcomes.0] - p[cos_outcomes.1])
                    / (p[cos_outcomes.0] + p[cos_outcomes.1]);
                let s = (p[sin_outcomes.0] - p[sin_outcomes.1])
                    / (p[sin_outcomes.0] + p[sin_outcomes.1]);
                (s / scale_sin).atan2(c / scale_cos) / multiplier
            }
        }
    }
}

/// `{(I +- A)/4, (I +- B)/4}` for commuting-square Paulis `A`, `B`.
fn basis_pair_povm(d: usize, a: &CMatrix, b: &CMatrix) -> Vec<HermitianOperator> {
    let id = CMatrix::identity(d, d);
    let q = C64::new(0.25, 0.0);
    [(&id + a) * q, (&id - a) * q, (&id + b) * q, (&id - b) * q]
        .into_iter()
        .map(HermitianOperator::symmetrized)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shots: u64,
    pub seed: u64,
    pub counts: Vec<u64>,
}

fn uniform(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws `shots` outcomes from the scenario's Born distribution.
pub fn sample(sc: &Scenario, shots: u64, seed: u64) -> Result<ShotRecord> {
    sample_probs(&sc.outcome_probs, shots, seed)
}

pub fn sample_probs(probs: &[f64], shots: u64, seed: u64) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::InvalidInput("shot count must be positive".into()));
    }
    if probs.is_empty()
        || probs
            .iter()
            .any(|p| !p.is_finite() || *p < -PROBABILITY_TOL)
    {
        return Err(Error::InvalidScenario(
            "outcome probabilities must be finite and non-negative".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::InvalidScenario(format!(
            "outcome probabilities sum to {total}"
        )));
    }
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p.max(0.0) / total;
        cdf.push(acc);
    }
    let k = probs.len();
    let chunks = shots.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(shots);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_word_pos(2 * start as u128);
            let mut h = vec![0u64; k];
            for _ in start..end {
                let u = uniform(rng.next_u64());
                let idx = cdf.partition_point(|&c| c <= u).min(k - 1);
                h[idx] += 1;
            }
            h
        })
        .reduce(
            || vec![0u64; k],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(ShotRecord {
        shots,
        seed,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub scenario: String,
    pub shots: u64,
    pub seed: u64,
    pub true_value: f64,
    pub mean: f64,
    pub mean_stderr: f64,
    /// Single-shot variance about the true value.
    pub variance: f64,
    pub variance_stderr: f64,
    pub qcrb_bound: f64,
    /// `(mean - true_value) / mean_stderr`.
    pub z_score_bias: f64,
}

impl BiasVarianceReport {
    pub fn variance_ratio(&self) -> f64 {
        self.variance / self.qcrb_bound
    }
}

pub fn estimate(rec: &ShotRecord, sc: &Scenario) -> Result<BiasVarianceReport> {
    if rec.counts.len() != sc.povm.len() {
        return Err(Error::InvalidInput(
            "histogram does not match the scenario's outcomes".into(),
        ));
    }
    let n = rec.shots as f64;
    let theta = sc.true_value();
    let (mean, mean_stderr, variance, variance_stderr) = match &sc.estimator {
        Estimator::PerShot { values } => {
            let f: Vec<f64> = rec.counts.iter().map(|&c| c as f64 / n).collect();
            let mean: f64 = f.iter().zip(values).map(|(f, v)| f * v).sum();
            let spread: f64 = f
                .iter()
                .zip(values)
                .map(|(f, v)| f * (v - mean).powi(2))
                .sum();
            let m2: f64 = f
                .iter()
                .zip(values)
                .map(|(f, v)| f * (v - theta).powi(2))
                .sum();
            let m4: f64 = f
                .iter()
                .zip(values)
                .map(|(f, v)| f * (v - theta).powi(4))
                .sum();
            (
                mean,
                (spread / n).sqrt(),
                m2,
                ((m4 - m2 * m2).max(0.0) / n).sqrt(),
            )
        }
        Estimator::PhaseReadout {
            cos_outcomes,
            sin_outcomes,
            scale_cos,
            scale_sin,
            multiplier,
        } => {
            let c = &rec.counts;
            let sign_mean = |(p, m): (usize, usize)| -> Result<(f64, f64)> {
                let tot = (c[p] + c[m]) as f64;
                if tot == 0.0 {
                    return Err(Error::InvalidScenario(
                        "a readout setting received no shots".into(),
                    ));
                }
                let e = (c[p] as f64 - c[m] as f64) / tot;
                Ok((e, (1.0 - e * e).max(0.0) / tot))
            };
            let (ec, vc) = sign_mean(*cos_outcomes)?;
            let (es, vs) = sign_mean(*sin_outcomes)?;
            let (a, b) = (ec / scale_cos, es / scale_sin);
            let (va, vb) = (vc / (scale_cos * scale_cos), vs / (scale_sin * scale_sin));
            let r2 = a * a + b * b;
            let var = (b * b * va + a * a * vb) / (r2 * r2) / (multiplier * multiplier);
            let mean = b.atan2(a) / multiplier;
            let per_shot = var * n;
            (mean, var.sqrt(), per_shot, per_shot * (2.0 / n).sqrt())
        }
    };
    Ok(BiasVarianceReport {
        scenario: sc.name.clone(),
        shots: rec.shots,
        seed: rec.seed,
        true_value: theta,
        mean,
        mean_stderr,
        variance,
        variance_stderr,
        qcrb_bound: sc.qcrb_bound,
        z_score_bias: if mean_stderr > 0.0 {
            (mean - theta) / mean_stderr
        } else {
            0.0
        },
    })
}

/// Per-Pauli rescaling of the assumed damping factors that gives the true
/// ones, e.g. `[("X", 0.9)]` for a 10% overestimate of the `X` factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Miscalibration {
    pub factors: Vec<(String, f64)>,
}

impl Default for Miscalibration {
    fn default() -> Self {
        Self {
            factors: vec![("X".into(), 0.9)],
        }
    }
}

/// Runs the `|+>` phase readout with assumed parameters `assumed` while the
/// data come from `assumed` rescaled by `miscalibration`.
pub fn demonstrate_naive_bias(
    n: usize,
    assumed: &[f64],
    miscalibration: &Miscalibration,
    shots: u64,
    seed: u64,
) -> Result<BiasVarianceReport> {
    let truth = miscalibrated_truth(n, assumed, miscalibration)?;
    let sc = Scenario::naive_phase_readout(n, truth, assumed)?;
    estimate(&sample(&sc, shots, seed)?, &sc)
}

/// `assumed` with each listed damping factor rescaled. Labels shorter than
/// `n` are padded with identities, so `"X"` means `X` on qubit 1.
pub fn miscalibrated_truth(
    n: usize,
    assumed: &[f64],
    miscalibration: &Miscalibration,
) -> Result<Vec<f64>> {
    let model = naive_phase_probe(n, &plus_state(n))?;
    let mut truth = assumed.to_vec();
    if truth.len() != model.num_params() {
        return Err(Error::InvalidInput(format!(
            "expected {} parameters",
            model.num_params()
        )));
    }
    for (label, f) in &miscalibration.factors {
        let pad = "I".repeat(n.saturating_sub(label.len()));
        let i = model.param_index(&format!("lambda_{label}{pad}"))?;
        truth[i] *= f;
    }
    Ok(truth)
}
