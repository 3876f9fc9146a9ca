//! Measurement models, shot simulation, maximum-likelihood rotation estimation and Monte Carlo
//! checks of the quantum Cramér–Rao bound.
//!
//! Likelihood maximization runs in the rotation vector `ω = θ n`, which is regular at the
//! identity; estimates are reported in `(θ, Θ, Φ)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, max_abs, symmetric_eigen, CMatrix, CVector};
use crate::metrology::{
    classical_fi, cov_matrix_with, crb, qfi_rotation_matrix, rows, ProbabilityModel, PROB_FLOOR,
};
use crate::nelder_mead::NelderMead;
use crate::states::{coherent_state, BlochPoint, SpinState};
use crate::su2::{
    cartesian_generators, make_operators, rotation_unitary_with, so3_matrix, OperatorSet,
    Parametrization, RotationParams,
};

/// A POVM: Hermitian PSD elements resolving the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    elements: Vec<CMatrix>,
    labels: Vec<String>,
}

impl MeasurementModel {
    pub fn new(elements: Vec<CMatrix>, labels: Vec<String>) -> Result<Self> {
        if elements.is_empty() || elements.len() != labels.len() {
            return Err(Error::domain("need one label per POVM element"));
        }
        let d = elements[0].nrows();
        let mut sum = CMatrix::zeros(d, d);
        for (e, l) in elements.iter().zip(&labels) {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::domain(format!("element {l} has the wrong shape")));
            }
            if max_abs(&(e - e.adjoint())) > 1e-10 {
                return Err(Error::domain(format!("element {l} is not Hermitian")));
            }
            let (values, _) = hermitian_eigen(e);
            if values[0] < -1e-10 {
                return Err(Error::domain(format!(
                    "element {l} is not positive semidefinite"
                )));
            }
            sum += e;
        }
        let defect = max_abs(&(sum - CMatrix::identity(d, d)));
        if defect > 1e-9 {
            return Err(Error::domain(format!(
                "elements do not resolve the identity ({defect:e})"
            )));
        }
        Ok(MeasurementModel { elements, labels })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn n_outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Born probabilities `<ψ|Π|ψ>`, clipped to `[0, 1]`.
    pub fn probabilities(&self, psi: &CVector) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| psi.dotc(&(e * psi)).re.clamp(0.0, 1.0))
            .collect()
    }

    /// `∂P/∂x_k = 2 Im <ψ|Π G_k|ψ>` when `∂ψ/∂x_k = -i G_k ψ`; indexed `[k][outcome]`.
    pub fn born_derivatives(&self, psi: &CVector, generators: &[CMatrix]) -> Vec<Vec<f64>> {
        generators
            .iter()
            .map(|g| {
                let gpsi = g * psi;
                self.elements
                    .iter()
                    .map(|e| 2.0 * psi.dotc(&(e * &gpsi)).im)
                    .collect()
            })
            .collect()
    }
}

/// Orthonormal eigenvectors of the covariance matrix of `state`, used as measurement triad.
pub fn covariance_triad(state: &SpinState, ops: &OperatorSet) -> [Vector3<f64>; 3] {
    let cov = cov_matrix_with(state.amps(), ops);
    let m = DMatrix::from_fn(3, 3, |i, k| cov.c[(i, k)]);
    let (_, vecs) = symmetric_eigen(&m);
    [0, 1, 2].map(|k| Vector3::new(vecs[(0, k)], vecs[(1, k)], vecs[(2, k)]))
}

/// Relative norm below which a Gram–Schmidt residual counts as linearly dependent.
pub const PVM_DEPENDENCE_TOL: f64 = 1e-8;

/// Projective measurement onto `|ψ>` and the orthonormalized states `(J·v_k)|ψ>`, completed by
/// a "rest" projector when the dimension exceeds four.
pub fn optimal_pvm(anchor: &SpinState, triad: &[Vector3<f64>; 3]) -> Result<MeasurementModel> {
    let ops = make_operators(anchor.j());
    let d = anchor.dim();
    let mut basis: Vec<CVector> = vec![anchor.amps().clone()];
    for v in triad {
        let raw = ops.along(v) * anchor.amps();
        let scale = raw.norm();
        let mut w = raw.clone();
        for b in &basis {
            let proj = b.dotc(&w);
            w -= b * proj;
        }
        if scale == 0.0 || w.norm() < PVM_DEPENDENCE_TOL * scale {
            return Err(Error::Degenerate(format!(
                "(J·v)|ψ> is linearly dependent on earlier projectors for v = {v:?}"
            )));
        }
        let norm = w.norm();
        basis.push(w / c(norm, 0.0));
    }
    let mut elements: Vec<CMatrix> = basis.iter().map(|b| b * b.adjoint()).collect();
    let mut labels: Vec<String> = vec!["psi".into(), "v1".into(), "v2".into(), "v3".into()];
    if d > 4 {
        let rest =
            CMatrix::identity(d, d) - elements.iter().fold(CMatrix::zeros(d, d), |a, e| a + e);
        elements.push((&rest + rest.adjoint()) * c(0.5, 0.0));
        labels.push("rest".into());
    }
    MeasurementModel::new(elements, labels)
}

/// Binary coherent-state projections `{|n><n|, 1 - |n><n|}`, one model per direction.
pub fn husimi_design(
    j: crate::su2::HalfInt,
    directions: &[BlochPoint],
) -> Result<Vec<MeasurementModel>> {
    if directions.len() < 4 {
        return Err(Error::domain(format!(
            "orienting a Husimi function needs at least 4 directions, got {}",
            directions.len()
        )));
    }
    husimi_models(j, directions)
}

/// Like [`husimi_design`] but without the minimum-count requirement (used to study
/// under-determined configurations).
pub fn husimi_models(
    j: crate::su2::HalfInt,
    directions: &[BlochPoint],
) -> Result<Vec<MeasurementModel>> {
    for (a, p) in directions.iter().enumerate() {
        for q in &directions[a + 1..] {
            if p.chordal(q) < 1e-9 {
                return Err(Error::domain(format!("duplicate Husimi direction {p:?}")));
            }
        }
    }
    let d = j.dim();
    directions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let v = coherent_state(j, p);
            let proj = v.amps() * v.amps().adjoint();
            let other = CMatrix::identity(d, d) - &proj;
            MeasurementModel::new(
                vec![proj, other],
                vec![format!("n{i}"), format!("not_n{i}")],
            )
        })
        .collect()
}

/// Outcome counts of repeated measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub counts: Vec<u64>,
    pub n_shots: u64,
    pub seed: u64,
}

/// Multinomial sample by sequential conditional binomials.
pub fn multinomial<R: rand::Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(left);
            break;
        }
        let k = if left == 0 || mass <= 0.0 {
            0
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

pub fn simulate_shots(
    model: &MeasurementModel,
    true_state: &SpinState,
    n_shots: u64,
    seed: u64,
) -> ShotRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = model.probabilities(true_state.amps());
    ShotRecord {
        counts: multinomial(&probs, n_shots, &mut rng),
        n_shots,
        seed,
    }
}

/// Born probabilities of a fixed measurement on the rotated probe `R(x)|ψ>`, as a function of
/// the rotation coordinates `x` (spherical or Cartesian).
pub struct RotationModel<'a> {
    probe: &'a SpinState,
    ops: OperatorSet,
    model: &'a MeasurementModel,
    param: Parametrization,
}

impl<'a> RotationModel<'a> {
    pub fn new(
        probe: &'a SpinState,
        model: &'a MeasurementModel,
        param: Parametrization,
    ) -> Result<Self> {
        if param == Parametrization::EulerZyz {
            return Err(Error::domain(
                "Born models support spherical and Cartesian coordinates",
            ));
        }
        if model.dim() != probe.dim() {
            return Err(Error::domain("measurement and probe dimensions differ"));
        }
        Ok(RotationModel {
            probe,
            ops: make_operators(probe.j()),
            model,
            param,
        })
    }

    fn rotation(&self, x: &[f64]) -> RotationParams {
        match self.param {
            Parametrization::Cartesian => {
                RotationParams::from_omega(&Vector3::new(x[0], x[1], x[2]))
            }
            _ => RotationParams {
                theta: x[0],
                cap_theta: x[1],
                cap_phi: x[2],
            },
        }
    }

    fn generators(&self, x: &[f64]) -> Matrix3<f64> {
        match self.param {
            Parametrization::Cartesian => cartesian_generators(&Vector3::new(x[0], x[1], x[2])),
            _ => self.param.generator_columns(&self.rotation(x)),
        }
    }

    fn state(&self, x: &[f64]) -> CVector {
        rotation_unitary_with(&self.ops, &self.rotation(x)) * self.probe.amps()
    }
}

impl ProbabilityModel for RotationModel<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.model.probabilities(&self.state(x))
    }

    fn derivatives(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        let psi = self.state(x);
        let g = self.generators(x);
        let gens: Vec<CMatrix> = (0..3)
            .map(|k| self.ops.along(&g.column(k).into_owned()))
            .collect();
        Some(self.model.born_derivatives(&psi, &gens))
    }
}

/// Shot-weighted classical Fisher information of a set of independently sampled measurements.
pub fn design_fisher(
    probe: &SpinState,
    models: &[MeasurementModel],
    shots: &[u64],
    p: &RotationParams,
    param: Parametrization,
) -> Result<DMatrix<f64>> {
    let x = param.coordinates(p);
    let mut total = DMatrix::zeros(3, 3);
    for (m, &n) in models.iter().zip(shots) {
        let rm = RotationModel::new(probe, m, param)?;
        total += classical_fi(&rm, &x)? * n as f64;
    }
    Ok(total)
}

/// Log-likelihood of recorded counts as a function of the rotation vector.
pub struct Likelihood<'a> {
    probe: &'a SpinState,
    ops: OperatorSet,
    models: &'a [MeasurementModel],
    counts: Vec<Vec<u64>>,
}

impl<'a> Likelihood<'a> {
    pub fn new(
        probe: &'a SpinState,
        models: &'a [MeasurementModel],
        records: &[ShotRecord],
    ) -> Result<Self> {
        if models.len() != records.len() {
            return Err(Error::domain(
                "one shot record per measurement model is required",
            ));
        }
        for (m, r) in models.iter().zip(records) {
            if m.n_outcomes() != r.counts.len() || m.dim() != probe.dim() {
                return Err(Error::domain(
                    "shot record does not match its measurement model",
                ));
            }
            if r.counts.iter().sum::<u64>() != r.n_shots {
                return Err(Error::domain("counts do not sum to the number of shots"));
            }
        }
        Ok(Likelihood {
            probe,
            ops: make_operators(probe.j()),
            models,
            counts: records.iter().map(|r| r.counts.clone()).collect(),
        })
    }

    pub fn log_likelihood(&self, omega: &Vector3<f64>) -> f64 {
        let p = RotationParams::from_omega(omega);
        let psi = rotation_unitary_with(&self.ops, &p) * self.probe.amps();
        let mut total = 0.0;
        for (m, counts) in self.models.iter().zip(&self.counts) {
            for (prob, &k) in m.probabilities(&psi).iter().zip(counts) {
                if k > 0 {
                    total += k as f64 * prob.max(1e-300).ln();
                }
            }
        }
        total
    }

    /// Gradient of the log-likelihood and the expected (shot-weighted) Fisher information, both in
    /// Cartesian coordinates.
    pub fn score_and_fisher(&self, omega: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let p = RotationParams::from_omega(omega);
        let psi = rotation_unitary_with(&self.ops, &p) * self.probe.amps();
        let g = cartesian_generators(omega);
        let gens: Vec<CMatrix> = (0..3)
            .map(|k| self.ops.along(&g.column(k).into_owned()))
            .collect();
        let mut score = Vector3::zeros();
        let mut fisher = Matrix3::zeros();
        for (m, counts) in self.models.iter().zip(&self.counts) {
            let probs = m.probabilities(&psi);
            let dp = m.born_derivatives(&psi, &gens);
            let n: f64 = counts.iter().map(|&k| k as f64).sum();
            for (o, (&prob, &k)) in probs.iter().zip(counts).enumerate() {
                if prob <= PROB_FLOOR {
                    continue;
                }
                for a in 0..3 {
                    score[a] += k as f64 * dp[a][o] / prob;
                    for b in 0..3 {
                        fisher[(a, b)] += n * dp[a][o] * dp[b][o] / prob;
                    }
                }
            }
        }
        (score, fisher)
    }

    /// Fisher-scoring refinement from `start`; each accepted step must not lower the likelihood.
    pub fn polish(&self, start: &Vector3<f64>, max_steps: usize) -> (Vector3<f64>, f64) {
        let mut w = *start;
        let mut l = self.log_likelihood(&w);
        for _ in 0..max_steps {
            let (score, fisher) = self.score_and_fisher(&w);
            let Some(step) = fisher.try_inverse().map(|inv| inv * score) else {
                break;
            };
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-4 {
                let trial = w + step * t;
                let lt = self.log_likelihood(&trial);
                if lt >= l {
                    moved = (trial - w).norm() > 0.0;
                    w = trial;
                    l = lt;
                    break;
                }
                t *= 0.5;
            }
            if !moved || step.norm() * t < 1e-12 {
                break;
            }
        }
        (w, l)
    }

    pub fn shots(&self) -> Vec<u64> {
        self.counts.iter().map(|c| c.iter().sum()).collect()
    }
}

/// Settings of [`ml_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlOptions {
    /// Grid sizes over `(θ, Θ, Φ)`; `None` skips the global grid.
    pub grid: Option<[usize; 3]>,
    /// Additional starting rotation vector (e.g. from prior knowledge).
    pub start: Option<Vector3<f64>>,
    /// Number of best distinct grid points refined by Nelder–Mead.
    pub refine_seeds: usize,
    pub simplex: NelderMead,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            grid: Some([16, 8, 16]),
            start: None,
            refine_seeds: 24,
            simplex: NelderMead {
                initial_step: 0.05,
                f_tol: 1e-13,
                x_tol: 1e-9,
                max_evals: 3000,
            },
        }
    }
}

/// Maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub omega: Vector3<f64>,
    pub params: RotationParams,
    pub log_likelihood: f64,
    /// Total (shot-weighted) Fisher information in Cartesian coordinates at the estimate.
    pub fisher_cartesian: Matrix3<f64>,
    pub evaluations: usize,
}

/// Distance between the SO(3) images of two rotation vectors.
pub fn rotation_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ra = so3_matrix(&RotationParams::from_omega(a));
    let rb = so3_matrix(&RotationParams::from_omega(b));
    (ra - rb).norm()
}

const TIE_ABS: f64 = 1e-3;
const TIE_REL: f64 = 1e-7;
const DISTINCT_OPTIMA: f64 = 1e-3;
const IDENTIFIABILITY_RANK_TOL: f64 = 1e-8;
const POLISH_STEPS: usize = 30;
const HOP_ROUNDS: usize = 4;
const HOP_RADII: [f64; 2] = [0.05, 0.15];

pub fn ml_estimate(
    probe: &SpinState,
    models: &[MeasurementModel],
    records: &[ShotRecord],
    opts: &MlOptions,
) -> Result<MlFit> {
    let like = Likelihood::new(probe, models, records)?;
    let mut seeds: Vec<Vector3<f64>> = Vec::new();
    let mut evaluations = 0;
    if let Some([nt, nth, nph]) = opts.grid {
        let mut scored: Vec<(f64, Vector3<f64>)> = Vec::with_capacity(nt * nth * nph);
        for a in 0..nt {
            let theta = PI * (a as f64 + 1.0) / nt as f64;
            for b in 0..nth {
                let cap_theta = PI * (b as f64 + 0.5) / nth as f64;
                for k in 0..nph {
                    let cap_phi = TAU * k as f64 / nph as f64;
                    let w = RotationParams {
                        theta,
                        cap_theta,
                        cap_phi,
                    }
                    .omega();
                    scored.push((like.log_likelihood(&w), w));
                }
            }
        }
        evaluations += scored.len();
        let hi = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let lo = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
            return Err(Error::NonIdentifiable(
                "likelihood is flat over the whole grid".into(),
            ));
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0));
        for (_, w) in scored {
            if seeds.len() >= opts.refine_seeds {
                break;
            }
            if seeds.iter().all(|s| rotation_distance(s, &w) > 0.3) {
                seeds.push(w);
            }
        }
    }
    if let Some(s) = opts.start {
        seeds.insert(0, s);
    }
    if seeds.is_empty() {
        return Err(Error::domain(
            "ml_estimate needs a grid or a starting point",
        ));
    }

    let mut optima: Vec<(f64, Vector3<f64>)> = Vec::new();
    for s in &seeds {
        let m = opts.simplex.minimize(
            |x| -like.log_likelihood(&Vector3::new(x[0], x[1], x[2])),
            s.as_slice(),
        );
        evaluations += m.evaluations;
        // the simplex stalls on narrow likelihood ridges; finish with scoring steps
        let (w, l) = like.polish(&Vector3::new(m.x[0], m.x[1], m.x[2]), POLISH_STEPS);
        optima.push((l, w));
    }
    optima.sort_by(|x, y| y.0.total_cmp(&x.0));
    // a local search started from prior knowledge must stay in its basin
    let (best_l, best_w) = if opts.grid.is_some() {
        hop(&like, optima[0])
    } else {
        optima[0]
    };
    let tie = TIE_ABS + TIE_REL * best_l.abs();
    if let Some((l, w)) = optima[1..]
        .iter()
        .find(|(l, w)| best_l - l <= tie && rotation_distance(w, &best_w) > DISTINCT_OPTIMA)
    {
        return Err(Error::NonIdentifiable(format!(
            "distinct rotations {best_w:?} and {w:?} fit equally well (Δ log L = {:e})",
            best_l - l
        )));
    }

    let params = RotationParams::from_omega(&best_w);
    let fisher = design_fisher(
        probe,
        models,
        &like.shots(),
        &params,
        Parametrization::Cartesian,
    )?;
    let fisher_cartesian = Matrix3::from_fn(|i, k| fisher[(i, k)]);
    let eig = fisher_cartesian.symmetric_eigenvalues();
    if eig.min() <= IDENTIFIABILITY_RANK_TOL * eig.max().max(f64::MIN_POSITIVE) {
        return Err(Error::NonIdentifiable(
            "Fisher information at the estimate is singular; some rotation direction leaves the data unchanged".into(),
        ));
    }
    let cov = fisher_cartesian.try_inverse().expect("positive definite");
    let se = (0..3).map(|i| cov[(i, i)].sqrt()).fold(0.0, f64::max);
    if best_w.norm() < 3.0 * se {
        return Err(Error::NonIdentifiable(format!(
            "estimated rotation angle {} is within 3 standard errors of zero: the axis (Θ, Φ) is undefined",
            best_w.norm()
        )));
    }
    Ok(MlFit {
        omega: best_w,
        params,
        log_likelihood: best_l,
        fisher_cartesian,
        evaluations,
    })
}

/// Re-polishes from small axis offsets around the incumbent until no offset improves it. Folded
/// likelihood surfaces can hold neighbouring maxima closer than any grid spacing.
fn hop(like: &Likelihood, (mut best_l, mut best_w): (f64, Vector3<f64>)) -> (f64, Vector3<f64>) {
    for _ in 0..HOP_ROUNDS {
        let mut improved = false;
        for radius in HOP_RADII {
            for k in 0..6 {
                let mut start = best_w;
                start[k / 2] += if k % 2 == 0 { radius } else { -radius };
                let (w, l) = like.polish(&start, POLISH_STEPS);
                if l > best_l + 1e-9 * (1.0 + best_l.abs()) {
                    best_l = l;
                    best_w = w;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (best_l, best_w)
}

/// Per-parameter sample statistics of an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub mean: f64,
    pub bias: f64,
    pub bias_sq: f64,
    /// Population variance (divides by the number of estimates).
    pub variance: f64,
    pub mse: f64,
    /// `mean² / variance`.
    pub snr: f64,
}

pub fn estimator_stats(estimates: &[Vec<f64>], truth: &[f64]) -> Result<Vec<ParamStats>> {
    if estimates.len() < 2 {
        return Err(Error::domain(
            "estimator statistics need at least 2 estimates",
        ));
    }
    let n = estimates.len() as f64;
    Ok((0..truth.len())
        .map(|i| {
            let mean = estimates.iter().map(|e| e[i]).sum::<f64>() / n;
            let variance = estimates.iter().map(|e| (e[i] - mean).powi(2)).sum::<f64>() / n;
            let bias = mean - truth[i];
            let mse = estimates
                .iter()
                .map(|e| (e[i] - truth[i]).powi(2))
                .sum::<f64>()
                / n;
            let snr = if variance > 0.0 {
                mean * mean / variance
            } else {
                f64::INFINITY
            };
            ParamStats {
                mean,
                bias,
                bias_sq: bias * bias,
                variance,
                mse,
                snr,
            }
        })
        .collect())
}

/// Measurement scheme of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    /// PVM built around a slightly displaced copy of the rotated probe.
    OptimalPvm,
    /// Binary coherent-state projections, shot budget split evenly across directions.
    Husimi { directions: Vec<BlochPoint> },
}

/// Settings of a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    /// Total shots per trial.
    pub n_shots: u64,
    pub n_trials: usize,
    pub seed: u64,
    /// Standard deviation of the per-trial starting point around the truth (optimal PVM only),
    /// standing in for a coarse first-stage estimate.
    #[serde(default = "default_prior_sd")]
    pub prior_sd: f64,
    /// Rotation angle separating the PVM anchor from the true state.
    #[serde(default = "default_anchor_offset")]
    pub anchor_offset: f64,
}

fn default_prior_sd() -> f64 {
    0.005
}

fn default_anchor_offset() -> f64 {
    0.05
}

impl MonteCarloConfig {
    pub fn new(n_shots: u64, n_trials: usize, seed: u64) -> Self {
        MonteCarloConfig {
            n_shots,
            n_trials,
            seed,
            prior_sd: default_prior_sd(),
            anchor_offset: default_anchor_offset(),
        }
    }
}

/// Result of [`monte_carlo_qcrb`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    /// Mean estimate.
    pub estimate: RotationParams,
    pub truth: RotationParams,
    /// Empirical covariance of the estimates (population normalization).
    pub empirical_cov: Matrix3<f64>,
    /// Quantum Cramér–Rao bound `Q⁻¹/N`.
    pub crb_bound: Matrix3<f64>,
    /// Classical Cramér–Rao bound of the measurement actually used.
    pub classical_bound: Matrix3<f64>,
    pub n_shots: u64,
    pub n_trials: usize,
    pub failures: usize,
    pub stats: Vec<ParamStats>,
    /// `Tr(empirical) / Tr(QCRB)`.
    pub trace_ratio: f64,
    /// Smallest eigenvalue of `empirical_cov - crb_bound`.
    pub min_excess_eigenvalue: f64,
    /// Three-sigma sampling tolerance for that eigenvalue.
    pub psd_tolerance: f64,
    pub estimates: Vec<[f64; 3]>,
}

impl EstimationReport {
    pub fn empirical_trace(&self) -> f64 {
        self.empirical_cov.trace()
    }

    pub fn bound_trace(&self) -> f64 {
        self.crb_bound.trace()
    }

    /// Empirical covariance is not below the QCRB beyond sampling noise.
    pub fn respects_bound(&self) -> bool {
        self.min_excess_eigenvalue >= -self.psd_tolerance
    }

    pub fn to_json(&self) -> serde_json::Value {
        let m3 = |m: &Matrix3<f64>| rows(&DMatrix::from_fn(3, 3, |i, k| m[(i, k)]));
        serde_json::json!({
            "estimate": self.estimate,
            "truth": self.truth,
            "empirical_cov": m3(&self.empirical_cov),
            "crb_bound": m3(&self.crb_bound),
            "classical_bound": m3(&self.classical_bound),
            "n_shots": self.n_shots,
            "n_trials": self.n_trials,
            "failures": self.failures,
            "params": ["theta", "cap_theta", "cap_phi"],
            "mse": self.stats.iter().map(|s| s.mse).collect::<Vec<_>>(),
            "bias_sq": self.stats.iter().map(|s| s.bias_sq).collect::<Vec<_>>(),
            "variance": self.stats.iter().map(|s| s.variance).collect::<Vec<_>>(),
            "snr": self.stats.iter().map(|s| s.snr).collect::<Vec<_>>(),
            "trace_empirical": self.empirical_trace(),
            "trace_bound": self.bound_trace(),
            "trace_ratio": self.trace_ratio,
            "min_excess_eigenvalue": self.min_excess_eigenvalue,
            "psd_tolerance": self.psd_tolerance,
            "respects_bound": self.respects_bound(),
        })
    }
}

/// Deterministic per-trial seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The PVM used for a probe at `truth`: anchored at the rotated probe displaced by
/// `anchor_offset` about the diagonal of its covariance eigenframe.
pub fn displaced_pvm(
    probe: &SpinState,
    truth: &RotationParams,
    anchor_offset: f64,
) -> Result<MeasurementModel> {
    let ops = make_operators(probe.j());
    let rotated = probe.apply(&rotation_unitary_with(&ops, truth));
    let frame = covariance_triad(&rotated, &ops);
    let u = (frame[0] + frame[1] + frame[2]) / 3f64.sqrt();
    let nudge = RotationParams::from_omega(&(u * anchor_offset));
    let anchor = rotated.apply(&rotation_unitary_with(&ops, &nudge));
    // carry the frame along with the anchor so that u has equal weight on every triad axis
    let turn = so3_matrix(&nudge);
    optimal_pvm(&anchor, &frame.map(|v| turn * v))
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Repeats simulation and ML estimation and compares the spread of the estimates with the
/// quantum Cramér–Rao bound at `truth`.
pub fn monte_carlo_qcrb(
    probe: &SpinState,
    truth: &RotationParams,
    scheme: &Scheme,
    cfg: &MonteCarloConfig,
) -> Result<EstimationReport> {
    if cfg.n_trials < 2 || cfg.n_shots == 0 {
        return Err(Error::domain("need at least 2 trials and 1 shot"));
    }
    let qfi = qfi_rotation_matrix(probe, truth);
    let bound = crb(&qfi, cfg.n_shots as usize)?;
    let ops = make_operators(probe.j());
    let true_state = probe.apply(&rotation_unitary_with(&ops, truth));

    let (models, shots, opts): (Vec<MeasurementModel>, Vec<u64>, MlOptions) = match scheme {
        Scheme::OptimalPvm => (
            vec![displaced_pvm(probe, truth, cfg.anchor_offset)?],
            vec![cfg.n_shots],
            MlOptions {
                grid: None,
                refine_seeds: 0,
                ..Default::default()
            },
        ),
        Scheme::Husimi { directions } => {
            let models = husimi_design(probe.j(), directions)?;
            let per = cfg.n_shots / models.len() as u64;
            if per == 0 {
                return Err(Error::domain("fewer shots than Husimi directions"));
            }
            let n = models.len();
            (models, vec![per; n], MlOptions::default())
        }
    };
    let fisher = design_fisher(probe, &models, &shots, truth, Parametrization::Spherical)?;
    let classical_bound = fisher
        .clone()
        .try_inverse()
        .map(|m| Matrix3::from_fn(|i, k| m[(i, k)]))
        .unwrap_or_else(|| Matrix3::from_element(f64::INFINITY));
    let probs: Vec<Vec<f64>> = models
        .iter()
        .map(|m| m.probabilities(true_state.amps()))
        .collect();
    let truth_omega = truth.omega();
    let truth_arr = truth.as_array();

    let outcomes: Vec<Option<[f64; 3]>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, trial as u64));
            let records: Vec<ShotRecord> = probs
                .iter()
                .zip(&shots)
                .map(|(p, &n)| ShotRecord {
                    counts: multinomial(p, n, &mut rng),
                    n_shots: n,
                    seed: cfg.seed,
                })
                .collect();
            let mut trial_opts = opts.clone();
            if matches!(scheme, Scheme::OptimalPvm) {
                let normal = Normal::new(0.0, cfg.prior_sd).expect("valid prior");
                let jitter = Vector3::from_fn(|_, _| normal.sample(&mut rng));
                trial_opts.start = Some(truth_omega + jitter);
                // a small simplex keeps the search inside the basin selected by the start point
                trial_opts.simplex.initial_step =
                    0.25 * cfg.anchor_offset.min(cfg.prior_sd.max(1e-3) * 4.0);
            }
            let fit = ml_estimate(probe, &models, &records, &trial_opts).ok()?;
            let est = fit.params.as_array();
            Some([
                est[0],
                est[1],
                truth_arr[2] + wrap_angle(est[2] - truth_arr[2]),
            ])
        })
        .collect();

    let estimates: Vec<[f64; 3]> = outcomes.iter().flatten().copied().collect();
    let failures = cfg.n_trials - estimates.len();
    if failures as f64 > 0.05 * cfg.n_trials as f64 || estimates.len() < 2 {
        return Err(Error::Unreliable {
            failures,
            trials: cfg.n_trials,
        });
    }
    let as_vecs: Vec<Vec<f64>> = estimates.iter().map(|e| e.to_vec()).collect();
    let stats = estimator_stats(&as_vecs, &truth_arr)?;
    let n = estimates.len() as f64;
    let mean = Vector3::from_fn(|i, _| stats[i].mean);
    let mut empirical_cov = Matrix3::zeros();
    for e in &estimates {
        let d = Vector3::new(e[0], e[1], e[2]) - mean;
        empirical_cov += d * d.transpose() / n;
    }
    let crb_bound = Matrix3::from_fn(|i, k| bound.cov[(i, k)]);
    let excess = empirical_cov - crb_bound;
    let min_excess_eigenvalue = excess.symmetric_eigenvalues().min();
    let psd_tolerance = 3.0 * (2.0 / (n - 1.0)).sqrt() * crb_bound.symmetric_eigenvalues().max();
    let estimate = RotationParams {
        theta: mean[0],
        cap_theta: mean[1].clamp(0.0, PI),
        cap_phi: mean[2].rem_euclid(TAU),
    };
    Ok(EstimationReport {
        estimate,
        truth: *truth,
        empirical_cov,
        crb_bound,
        classical_bound,
        n_shots: cfg.n_shots,
        n_trials: cfg.n_trials,
        failures,
        trace_ratio: empirical_cov.trace() / crb_bound.trace(),
        stats,
        min_excess_eigenvalue,
        psd_tolerance,
        estimates,
    })
}
