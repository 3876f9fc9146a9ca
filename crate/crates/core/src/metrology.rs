//! Fisher information, sensitivity covariance matrices and Cramér–Rao bounds.
//!
//! The rotation QFI of a pure probe only needs the probe's 3x3 covariance matrix: the rotated
//! covariance is obtained by conjugating with the SO(3) matrix, never by rotating the state.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    adaptive_gk, c, expectation, hermitian_eigen, inverse3, pinv_symmetric, symmetric_eigen,
    CMatrix, CVector, Quadrature, I,
};
use crate::states::SpinState;
use crate::su2::{make_operators, so3_matrix, OperatorSet, Parametrization, RotationParams};

/// Relative eigenvalue threshold below which a Fisher information direction counts as null.
pub const RANK_TOL: f64 = 1e-10;
/// Probabilities (or eigenvalue pairs) at or below this are dropped from Fisher sums.
pub const PROB_FLOOR: f64 = 1e-12;
/// Central-difference step for probability models without analytic derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Angular-momentum covariance matrix `Cov(J_i, J_j)` of a state, with its mean spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensCov {
    pub c: Matrix3<f64>,
    pub mean: Vector3<f64>,
}

impl SensCov {
    pub fn trace(&self) -> f64 {
        self.c.trace()
    }

    pub fn det(&self) -> f64 {
        self.c.determinant()
    }

    /// Inverse and 2-norm condition number, `None` when numerically singular.
    pub fn inverse(&self) -> Option<(Matrix3<f64>, f64)> {
        let scale = self.c.amax();
        if scale == 0.0 {
            return None;
        }
        let min_eig = self.c.symmetric_eigenvalues().min();
        if min_eig <= RANK_TOL * scale {
            return None;
        }
        inverse3(&self.c)
    }

    pub fn trace_inverse(&self) -> Option<f64> {
        self.inverse().map(|(inv, _)| inv.trace())
    }

    /// Covariance of the rotated state `R(p)|ψ>`: `ℛ C ℛᵀ`.
    pub fn rotated(&self, p: &RotationParams) -> SensCov {
        let r = so3_matrix(p);
        SensCov {
            c: r * self.c * r.transpose(),
            mean: r * self.mean,
        }
    }
}

pub fn cov_matrix(state: &SpinState) -> SensCov {
    cov_matrix_with(state.amps(), &make_operators(state.j()))
}

/// Covariance matrix of an arbitrary vector with respect to a given set of spin operators.
pub fn cov_matrix_with(psi: &CVector, ops: &OperatorSet) -> SensCov {
    let applied: Vec<CVector> = (0..3).map(|i| ops.component(i) * psi).collect();
    let mean = Vector3::from_fn(|i, _| psi.dotc(&applied[i]).re);
    let mut cm = Matrix3::zeros();
    for i in 0..3 {
        for k in i..3 {
            // ½<{J_i, J_k}> = Re <J_i ψ | J_k ψ>
            let v = applied[i].dotc(&applied[k]).re - mean[i] * mean[k];
            cm[(i, k)] = v;
            cm[(k, i)] = v;
        }
    }
    SensCov { c: cm, mean }
}

/// Symmetric Fisher information matrix with its numerical rank and kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct QfiMatrix {
    pub q: DMatrix<f64>,
    pub rank: usize,
    pub null_basis: Vec<DVector<f64>>,
    pub labels: Vec<String>,
}

impl QfiMatrix {
    pub fn new(q: DMatrix<f64>, labels: Vec<String>) -> Self {
        let sym = (&q + q.transpose()) * 0.5;
        let (_, rank, null_basis) = pinv_symmetric(&sym, RANK_TOL);
        QfiMatrix {
            q: sym,
            rank,
            null_basis,
            labels,
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_singular(&self) -> bool {
        self.rank < self.dim()
    }

    pub fn det(&self) -> f64 {
        self.q.determinant()
    }

    /// Ratio of extreme eigenvalues (infinite when singular).
    pub fn cond(&self) -> f64 {
        let (values, _) = symmetric_eigen(&self.q);
        let lo = values.first().copied().unwrap_or(0.0);
        let hi = values.last().copied().unwrap_or(0.0);
        if self.is_singular() || lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        if self.is_singular() {
            return Err(Error::Singular {
                rank: self.rank,
                dim: self.dim(),
            });
        }
        if self.dim() == 3 {
            let m = Matrix3::from_fn(|i, k| self.q[(i, k)]);
            if let Some((inv, _)) = inverse3(&m) {
                return Ok(DMatrix::from_fn(3, 3, |i, k| inv[(i, k)]));
            }
        }
        self.q.clone().try_inverse().ok_or(Error::Singular {
            rank: self.rank,
            dim: self.dim(),
        })
    }

    pub fn trace_inverse(&self) -> Option<f64> {
        self.inverse().ok().map(|m| m.trace())
    }

    pub fn to_json(&self) -> QfiJson {
        QfiJson {
            labels: self.labels.clone(),
            matrix: rows(&self.q),
            rank: self.rank,
            null_basis: self
                .null_basis
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            det: self.det(),
            cond: self.cond(),
            trace_inverse: self.trace_inverse(),
        }
    }
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Serialized [`QfiMatrix`]. `cond` is infinite for singular matrices and then serializes as
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QfiJson {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub rank: usize,
    pub null_basis: Vec<Vec<f64>>,
    pub det: f64,
    pub cond: f64,
    pub trace_inverse: Option<f64>,
}

/// `4 Var(G)` for a pure state.
pub fn qfi_single_pure(psi: &CVector, generator: &CMatrix) -> f64 {
    let gpsi = generator * psi;
    let mean = psi.dotc(&gpsi).re;
    (4.0 * (gpsi.norm_squared() - mean * mean)).max(0.0)
}

fn validate_density(rho: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !rho.is_square() {
        return Err(Error::domain("density matrix must be square"));
    }
    let herm = (rho - rho.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if herm > 1e-10 {
        return Err(Error::domain(format!(
            "density matrix not Hermitian (deviation {herm:e})"
        )));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::domain(format!("density matrix trace {tr} != 1")));
    }
    let (values, vectors) = hermitian_eigen(rho);
    if values.iter().any(|&p| p < -1e-10) {
        return Err(Error::domain("density matrix has negative eigenvalues"));
    }
    Ok((values, vectors))
}

/// `2 Σ (p_i - p_j)²/(p_i + p_j) |<i|G|j>|²` over the spectral decomposition of `rho`.
pub fn qfi_single_mixed(rho: &CMatrix, generator: &CMatrix) -> Result<f64> {
    let (p, v) = validate_density(rho)?;
    let g = v.adjoint() * generator * &v;
    let mut q = 0.0;
    for i in 0..p.len() {
        for k in 0..p.len() {
            let s = p[i] + p[k];
            if s > PROB_FLOOR {
                q += 2.0 * (p[i] - p[k]).powi(2) / s * g[(i, k)].norm_sqr();
            }
        }
    }
    Ok(q)
}

/// Symmetric logarithmic derivative `L` solving `∂ρ = ½{ρ, L}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SldOperator {
    pub l: CMatrix,
}

pub fn sld(rho: &CMatrix, drho: &CMatrix) -> SldOperator {
    let (p, v) = hermitian_eigen(rho);
    let d = v.adjoint() * drho * &v;
    let n = p.len();
    let l_eig = CMatrix::from_fn(n, n, |i, k| {
        let s = p[i] + p[k];
        if s > PROB_FLOOR {
            d[(i, k)] * (2.0 / s)
        } else {
            c(0.0, 0.0)
        }
    });
    SldOperator {
        l: &v * l_eig * v.adjoint(),
    }
}

/// Generator vectors of `p`'s parametrization expressed in the probe's frame (`ℛᵀ g_k`).
fn probe_frame_generators(p: &RotationParams, param: Parametrization) -> Matrix3<f64> {
    so3_matrix(p).transpose() * param.generator_columns(p)
}

/// QFI matrix of `R(p)|ψ>` in spherical coordinates `(θ, Θ, Φ)`.
pub fn qfi_rotation_matrix(state: &SpinState, p: &RotationParams) -> QfiMatrix {
    qfi_rotation_matrix_in(state, p, Parametrization::Spherical)
}

/// QFI matrix `4 G̃ᵀ C G̃` in the requested parametrization; `C` is the unrotated probe's
/// covariance and `G̃` the generator vectors carried into the probe's frame.
pub fn qfi_rotation_matrix_in(
    state: &SpinState,
    p: &RotationParams,
    param: Parametrization,
) -> QfiMatrix {
    qfi_from_cov(&cov_matrix(state), p, param)
}

pub fn qfi_from_cov(cov: &SensCov, p: &RotationParams, param: Parametrization) -> QfiMatrix {
    let g = probe_frame_generators(p, param);
    let q = g.transpose() * cov.c * g * 4.0;
    QfiMatrix::new(
        DMatrix::from_fn(3, 3, |i, k| q[(i, k)]),
        param.labels().iter().map(|s| s.to_string()).collect(),
    )
}

/// Congruence `Jᵀ F J` with `J = ∂(old)/∂(new)`.
pub fn reparametrize(
    fi: &QfiMatrix,
    jacobian: &DMatrix<f64>,
    labels: Vec<String>,
) -> Result<QfiMatrix> {
    let d = fi.dim();
    if jacobian.nrows() != d || jacobian.ncols() != d || labels.len() != d {
        return Err(Error::domain(format!(
            "Jacobian {}x{} and {} labels do not match a {d}-parameter matrix",
            jacobian.nrows(),
            jacobian.ncols(),
            labels.len()
        )));
    }
    Ok(QfiMatrix::new(
        jacobian.transpose() * &fi.q * jacobian,
        labels,
    ))
}

/// Axis-averaged QFI for a known-axis rotation, `(4/3) Σ Var(J_i)`.
pub fn avg_qfi(state: &SpinState) -> f64 {
    4.0 / 3.0 * cov_matrix(state).trace()
}

/// Outcome of [`avg_variance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AvgVariance {
    Finite { value: f64, error: f64 },
    Divergent,
}

impl AvgVariance {
    pub fn value(&self) -> Option<f64> {
        match self {
            AvgVariance::Finite { value, .. } => Some(*value),
            AvgVariance::Divergent => None,
        }
    }
}

const AVG_PHI_POINTS: usize = 128;
const AVG_BLOWUP: f64 = 1e12;

/// Sphere average of the single-shot QCRB `1/(4 Var(J·n))` for rotations about a uniformly
/// random known axis.
pub fn avg_variance(state: &SpinState) -> AvgVariance {
    avg_variance_cov(&cov_matrix(state))
}

pub fn avg_variance_cov(cov: &SensCov) -> AvgVariance {
    let l = cov.c.symmetric_eigenvalues();
    let mut l = [l[0], l[1], l[2]];
    l.sort_by(f64::total_cmp);
    if l[2] <= 0.0 || l[0] <= 1e-12 * l[2] {
        // Var(J·n) vanishes along an axis: the integrand has a non-integrable pole there
        return AvgVariance::Divergent;
    }
    let phi_avg = |t: f64| {
        let (s, co) = t.sin_cos();
        let mut acc = 0.0;
        for k in 0..AVG_PHI_POINTS {
            let phi = 2.0 * PI * k as f64 / AVG_PHI_POINTS as f64;
            let (sp, cp) = phi.sin_cos();
            let q = 4.0 * (l[0] * s * s * cp * cp + l[1] * s * s * sp * sp + l[2] * co * co);
            acc += 1.0 / q;
        }
        acc / AVG_PHI_POINTS as f64
    };
    match adaptive_gk(|t| 0.5 * t.sin() * phi_avg(t), 0.0, PI, 1e-11, AVG_BLOWUP) {
        Quadrature::Converged { value, error } => AvgVariance::Finite { value, error },
        Quadrature::Divergent => AvgVariance::Divergent,
    }
}

/// A parametrized discrete probability distribution.
pub trait ProbabilityModel {
    fn n_params(&self) -> usize;
    fn probabilities(&self, x: &[f64]) -> Vec<f64>;
    /// `∂P(outcome)/∂x_i` indexed as `[i][outcome]`, when known analytically.
    fn derivatives(&self, _x: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
}

fn fd_derivatives<M: ProbabilityModel + ?Sized>(model: &M, x: &[f64]) -> Vec<Vec<f64>> {
    (0..model.n_params())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += FD_STEP;
            down[i] -= FD_STEP;
            let pu = model.probabilities(&up);
            let pd = model.probabilities(&down);
            pu.iter()
                .zip(&pd)
                .map(|(a, b)| (a - b) / (2.0 * FD_STEP))
                .collect()
        })
        .collect()
}

/// Classical Fisher information `Σ_x ∂_iP ∂_jP / P`.
pub fn classical_fi<M: ProbabilityModel + ?Sized>(model: &M, x: &[f64]) -> Result<DMatrix<f64>> {
    let d = model.n_params();
    if x.len() != d {
        return Err(Error::domain(format!(
            "expected {d} parameters, got {}",
            x.len()
        )));
    }
    let p = model.probabilities(x);
    if let Some(bad) = p.iter().find(|&&v| v < -1e-12 || !v.is_finite()) {
        return Err(Error::domain(format!("invalid probability {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    let dp = model
        .derivatives(x)
        .unwrap_or_else(|| fd_derivatives(model, x));
    let mut fi = DMatrix::zeros(d, d);
    for (o, &po) in p.iter().enumerate() {
        if po <= PROB_FLOOR {
            continue;
        }
        for i in 0..d {
            for k in i..d {
                fi[(i, k)] += dp[i][o] * dp[k][o] / po;
            }
        }
    }
    for i in 0..d {
        for k in 0..i {
            fi[(i, k)] = fi[(k, i)];
        }
    }
    Ok(fi)
}

/// Fisher information of a Gaussian `N(μ(x), Σ(x))` from the derivatives of its moments.
pub fn gaussian_fi(
    sigma: &DMatrix<f64>,
    dmu: &[DVector<f64>],
    dsigma: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    if dmu.len() != dsigma.len() {
        return Err(Error::domain(
            "mean and covariance derivative counts differ",
        ));
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::domain("covariance is not positive definite"))?;
    let inv = chol.inverse();
    let d = dmu.len();
    let a: Vec<DMatrix<f64>> = dsigma.iter().map(|ds| &inv * ds).collect();
    Ok(DMatrix::from_fn(d, d, |i, k| {
        (dmu[i].transpose() * &inv * &dmu[k])[(0, 0)] + 0.5 * (&a[i] * &a[k]).trace()
    }))
}

/// How a rank deficit of a Fisher matrix behaves under small parameter changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularityKind {
    FullRank,
    /// Rank recovers at nearby parameter points: an artefact of the chosen coordinates.
    Coordinate,
    /// Rank deficit persists: the probe cannot resolve some parameter combination.
    State,
}

/// Rank analysis of a singular (or regular) Fisher matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularReport {
    pub rank: usize,
    pub dim: usize,
    /// Inestimable parameter combinations.
    pub null_directions: Vec<DVector<f64>>,
    /// Moore–Penrose pseudoinverse, the bound on the estimable block.
    pub pinv: DMatrix<f64>,
    pub trace_pinv: f64,
    pub kind: SingularityKind,
    /// Ranks found at the perturbed parameter points.
    pub perturbed_ranks: Vec<usize>,
}

impl SingularReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rank": self.rank,
            "dim": self.dim,
            "null_directions": self.null_directions.iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "pinv": rows(&self.pinv),
            "trace_pinv": self.trace_pinv,
            "kind": self.kind,
            "perturbed_ranks": self.perturbed_ranks,
        })
    }
}

const DIAGNOSIS_PERTURBATIONS: usize = 4;
const DIAGNOSIS_STEP: f64 = 0.05;

/// Pseudoinverse bound of `fi` without a classification (no parameter information).
pub fn pseudo_bound(fi: &QfiMatrix) -> (DMatrix<f64>, f64) {
    let (pinv, _, _) = pinv_symmetric(&fi.q, RANK_TOL);
    let tr = pinv.trace();
    (pinv, tr)
}

/// Diagnoses the rotation QFI of `state` at `p`, classifying any rank deficit by re-evaluating
/// at a few deterministic nearby parameter points.
pub fn singular_diagnosis(
    state: &SpinState,
    p: &RotationParams,
    param: Parametrization,
) -> SingularReport {
    let cov = cov_matrix(state);
    let fi = qfi_from_cov(&cov, p, param);
    let (pinv, trace_pinv) = pseudo_bound(&fi);
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1a6);
    let perturbed_ranks: Vec<usize> = (0..DIAGNOSIS_PERTURBATIONS)
        .map(|_| {
            let mut jitter = || DIAGNOSIS_STEP * (0.5 + 0.5 * rng.random::<f64>());
            let theta = (p.theta + jitter()).min(2.0 * PI);
            let cap_theta = if p.cap_theta + 0.2 < PI {
                p.cap_theta + jitter()
            } else {
                p.cap_theta - jitter()
            };
            let cap_phi = p.cap_phi + jitter();
            let q =
                RotationParams::new(theta, cap_theta, cap_phi).expect("perturbed point in range");
            qfi_from_cov(&cov, &q, param).rank
        })
        .collect();
    let kind = if !fi.is_singular() {
        SingularityKind::FullRank
    } else if perturbed_ranks.iter().all(|&r| r == fi.dim()) {
        SingularityKind::Coordinate
    } else {
        SingularityKind::State
    };
    SingularReport {
        rank: fi.rank,
        dim: fi.dim(),
        null_directions: fi.null_basis.clone(),
        pinv,
        trace_pinv,
        kind,
        perturbed_ranks,
    }
}

/// Cramér–Rao lower bound `(1/N) F⁻¹` for `N` repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbBound {
    pub cov: DMatrix<f64>,
    pub trace: f64,
}

pub fn crb(fi: &QfiMatrix, n_shots: usize) -> Result<CrbBound> {
    if n_shots == 0 {
        return Err(Error::domain("need at least one shot"));
    }
    let cov = fi.inverse()? / n_shots as f64;
    let trace = cov.trace();
    Ok(CrbBound { cov, trace })
}

/// Matrix of `Im Tr(ρ L_i L_j)` for the rotated probe; it vanishes exactly when the
/// multiparameter QCRB can be saturated by a single measurement.
pub fn saturation_matrix(
    state: &SpinState,
    p: &RotationParams,
    param: Parametrization,
) -> Matrix3<f64> {
    let ops = make_operators(state.j());
    let u = crate::su2::rotation_unitary_with(&ops, p);
    let psi = &u * state.amps();
    let rho = &psi * psi.adjoint();
    let g = param.generator_columns(p);
    let slds: Vec<CMatrix> = (0..3)
        .map(|k| {
            let gk = ops.along(&g.column(k).into_owned());
            let drho = (&gk * &rho - &rho * &gk) * (-I);
            sld(&rho, &drho).l
        })
        .collect();
    Matrix3::from_fn(|i, k| expectation(&psi, &(&slds[i] * &slds[k])).im)
}
