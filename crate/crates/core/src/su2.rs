//! Angular-momentum algebra in the spin-J irrep, rotation operators in dimensions 2J+1 and 3,
//! and the generators of the axis-angle rotation parameters.
//!
//! Basis order is `m = +J, +J-1, ..., -J`: index 0 holds `m = +J`. All matrices and every
//! serialized state use this layout.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, expm_hermitian, gauss_legendre, hermitian_eigen, CMatrix, CVector, I};

/// A non-negative half-integer, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfInt {
    twice_j: u32,
}

impl HalfInt {
    pub const fn from_twice(twice_j: u32) -> Self {
        HalfInt { twice_j }
    }

    /// Parse a floating-point spin such as `2.0` or `1.5`.
    pub fn from_f64(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 0.0 || (twice - twice.round()).abs() > 1e-9 || twice > 1e6
        {
            return Err(Error::domain(format!(
                "J = {j} is not a non-negative half-integer"
            )));
        }
        Ok(HalfInt {
            twice_j: twice.round() as u32,
        })
    }

    pub fn twice(self) -> u32 {
        self.twice_j
    }

    pub fn value(self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn dim(self) -> usize {
        self.twice_j as usize + 1
    }

    /// J(J+1).
    pub fn casimir(self) -> f64 {
        let j = self.value();
        j * (j + 1.0)
    }

    pub fn is_integer(self) -> bool {
        self.twice_j.is_multiple_of(2)
    }

    /// Projection quantum number stored at basis index `index`.
    pub fn m_at(self, index: usize) -> f64 {
        self.value() - index as f64
    }

    /// Basis index of the projection `m`; errors on range or parity mismatch.
    pub fn index_of(self, m: f64) -> Result<usize> {
        let twice_m = 2.0 * m;
        if (twice_m - twice_m.round()).abs() > 1e-9 {
            return Err(Error::domain(format!("m = {m} is not a half-integer")));
        }
        let twice_m = twice_m.round() as i64;
        let tj = self.twice_j as i64;
        if twice_m.abs() > tj {
            return Err(Error::domain(format!(
                "|m| = {} exceeds J = {}",
                m.abs(),
                self
            )));
        }
        if (tj - twice_m) % 2 != 0 {
            return Err(Error::domain(format!(
                "m = {m} has the wrong parity for J = {self}"
            )));
        }
        Ok(((tj - twice_m) / 2) as usize)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.twice_j / 2)
        } else {
            write!(f, "{}/2", self.twice_j)
        }
    }
}

/// Dense spin-J angular momentum operators (hbar = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub j: HalfInt,
    pub jx: CMatrix,
    pub jy: CMatrix,
    pub jz: CMatrix,
    pub jplus: CMatrix,
    pub jminus: CMatrix,
    pub jsq: CMatrix,
}

impl OperatorSet {
    /// `J_x`, `J_y`, `J_z` by index 0, 1, 2.
    pub fn component(&self, i: usize) -> &CMatrix {
        match i {
            0 => &self.jx,
            1 => &self.jy,
            2 => &self.jz,
            _ => panic!("angular momentum component index {i} out of range"),
        }
    }

    /// `J . v` for a real 3-vector.
    pub fn along(&self, v: &Vector3<f64>) -> CMatrix {
        &self.jx * c(v[0], 0.0) + &self.jy * c(v[1], 0.0) + &self.jz * c(v[2], 0.0)
    }
}

/// Standard `|J m>` matrix elements in the `m = +J ... -J` ordering.
pub fn make_operators(j: HalfInt) -> OperatorSet {
    let d = j.dim();
    let jv = j.value();
    let mut jz = CMatrix::zeros(d, d);
    let mut jplus = CMatrix::zeros(d, d);
    for i in 0..d {
        let m = j.m_at(i);
        jz[(i, i)] = c(m, 0.0);
        if i > 0 {
            // J+ |m> = sqrt(J(J+1) - m(m+1)) |m+1>, and m+1 sits at index i-1
            jplus[(i - 1, i)] = c((jv * (jv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let jminus = jplus.adjoint();
    let jx = (&jplus + &jminus) * c(0.5, 0.0);
    let jy = (&jplus - &jminus) * c(0.0, -0.5);
    let jsq = &jx * &jx + &jy * &jy + &jz * &jz;
    OperatorSet {
        j,
        jx,
        jy,
        jz,
        jplus,
        jminus,
        jsq,
    }
}

/// Axis-angle rotation parameters: angle `theta` about the axis with polar angle `cap_theta`
/// and azimuth `cap_phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub theta: f64,
    pub cap_theta: f64,
    pub cap_phi: f64,
}

impl RotationParams {
    /// Validates `theta` in [0, 2π] and `cap_theta` in [0, π]; the azimuth is wrapped into
    /// [0, 2π).
    pub fn new(theta: f64, cap_theta: f64, cap_phi: f64) -> Result<Self> {
        if !theta.is_finite() || !cap_theta.is_finite() || !cap_phi.is_finite() {
            return Err(Error::domain("rotation parameters must be finite"));
        }
        if !(-1e-12..=TAU + 1e-12).contains(&theta) {
            return Err(Error::domain(format!(
                "rotation angle {theta} outside [0, 2π]"
            )));
        }
        if !(-1e-12..=PI + 1e-12).contains(&cap_theta) {
            return Err(Error::domain(format!(
                "axis polar angle {cap_theta} outside [0, π]"
            )));
        }
        Ok(RotationParams {
            theta: theta.clamp(0.0, TAU),
            cap_theta: cap_theta.clamp(0.0, PI),
            cap_phi: cap_phi.rem_euclid(TAU),
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta, self.cap_theta, self.cap_phi]
    }

    /// Unit rotation axis `n`.
    pub fn axis(&self) -> Vector3<f64> {
        let (st, ct) = self.cap_theta.sin_cos();
        let (sp, cp) = self.cap_phi.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }

    pub fn daxis_dcap_theta(&self) -> Vector3<f64> {
        let (st, ct) = self.cap_theta.sin_cos();
        let (sp, cp) = self.cap_phi.sin_cos();
        Vector3::new(ct * cp, ct * sp, -st)
    }

    pub fn daxis_dcap_phi(&self) -> Vector3<f64> {
        let st = self.cap_theta.sin();
        let (sp, cp) = self.cap_phi.sin_cos();
        Vector3::new(-st * sp, st * cp, 0.0)
    }

    /// Cartesian rotation vector `omega = theta n`.
    pub fn omega(&self) -> Vector3<f64> {
        self.axis() * self.theta
    }

    /// Inverse of [`RotationParams::omega`]. Rotations with `|omega| > π` are folded onto the
    /// equivalent rotation by `2π - |omega|` about the opposite axis.
    pub fn from_omega(omega: &Vector3<f64>) -> Self {
        let mut w = *omega;
        let mut norm = w.norm();
        if norm > PI {
            let folded = (TAU - norm.rem_euclid(TAU)).rem_euclid(TAU);
            w = -w / norm * folded;
            norm = folded;
        }
        if norm < 1e-300 {
            return RotationParams {
                theta: 0.0,
                cap_theta: 0.0,
                cap_phi: 0.0,
            };
        }
        let cap_theta = (w[2] / norm).clamp(-1.0, 1.0).acos();
        let cap_phi = w[1].atan2(w[0]).rem_euclid(TAU);
        RotationParams {
            theta: norm,
            cap_theta,
            cap_phi,
        }
    }
}

/// Index of one of the three rotation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamIndex {
    Theta,
    CapTheta,
    CapPhi,
}

impl ParamIndex {
    pub const ALL: [ParamIndex; 3] = [ParamIndex::Theta, ParamIndex::CapTheta, ParamIndex::CapPhi];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// `exp(-i theta J.n)` from the spectral decomposition of the Hermitian `J.n`.
pub fn rotation_unitary(j: HalfInt, p: &RotationParams) -> CMatrix {
    let ops = make_operators(j);
    rotation_unitary_with(&ops, p)
}

pub fn rotation_unitary_with(ops: &OperatorSet, p: &RotationParams) -> CMatrix {
    expm_hermitian(&ops.along(&p.axis()), p.theta)
}

/// Applies a rotation to a state vector.
pub fn rotate_vector(ops: &OperatorSet, p: &RotationParams, psi: &CVector) -> CVector {
    rotation_unitary_with(ops, p) * psi
}

/// Levi-Civita symbol on 0-based indices.
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Rodrigues matrix `R_ij = δ_ij cosθ + (1 - cosθ) n_i n_j - ε_ijk n_k sinθ`.
///
/// With the standard Levi-Civita sign this satisfies `R† J_i R = Σ_j R_ij J_j` for
/// `R = exp(-iθ J.n)`; it is the active rotation of 3-vectors by `theta` about `n`.
pub fn so3_matrix(p: &RotationParams) -> Matrix3<f64> {
    so3_from_axis_angle(&p.axis(), p.theta)
}

pub fn so3_from_axis_angle(n: &Vector3<f64>, theta: f64) -> Matrix3<f64> {
    let (s, co) = theta.sin_cos();
    Matrix3::from_fn(|i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        let mut eps = 0.0;
        for k in 0..3 {
            eps += levi_civita(i, j, k) * n[k];
        }
        delta * co + (1.0 - co) * n[i] * n[j] - eps * s
    })
}

/// The three vectors `g_k` with `G_k = i(∂_k R)R† = J.g_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorFrame {
    pub g_theta: Vector3<f64>,
    pub g_cap_theta: Vector3<f64>,
    pub g_cap_phi: Vector3<f64>,
}

impl GeneratorFrame {
    pub fn get(&self, k: ParamIndex) -> Vector3<f64> {
        match k {
            ParamIndex::Theta => self.g_theta,
            ParamIndex::CapTheta => self.g_cap_theta,
            ParamIndex::CapPhi => self.g_cap_phi,
        }
    }

    /// Matrix whose columns are `g_theta, g_cap_theta, g_cap_phi`.
    pub fn columns(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.g_theta, self.g_cap_theta, self.g_cap_phi])
    }
}

pub fn generator_frame(p: &RotationParams) -> GeneratorFrame {
    let n = p.axis();
    let (s, co) = (0.5 * p.theta).sin_cos();
    let g = |dn: Vector3<f64>| 2.0 * s * (co * dn - s * dn.cross(&n));
    GeneratorFrame {
        g_theta: n,
        g_cap_theta: g(p.daxis_dcap_theta()),
        g_cap_phi: g(p.daxis_dcap_phi()),
    }
}

/// `∂ω/∂θ_k` for the spherical parameters.
fn domega(p: &RotationParams, k: ParamIndex) -> Vector3<f64> {
    match k {
        ParamIndex::Theta => p.axis(),
        ParamIndex::CapTheta => p.daxis_dcap_theta() * p.theta,
        ParamIndex::CapPhi => p.daxis_dcap_phi() * p.theta,
    }
}

fn perturbed(p: &RotationParams, k: ParamIndex, h: f64) -> RotationParams {
    let mut q = *p;
    match k {
        ParamIndex::Theta => q.theta += h,
        ParamIndex::CapTheta => q.cap_theta += h,
        ParamIndex::CapPhi => q.cap_phi += h,
    }
    q
}

pub const GENERATOR_FD_STEP: f64 = 1e-5;
pub const GENERATOR_AGREEMENT: f64 = 1e-7;

/// Generator `G_k` computed numerically by two independent routes: central differences of
/// `i(∂_k R)R†` and 64-point Gauss–Legendre quadrature of
/// `∫₀¹ e^{-iα J.ω} J e^{iα J.ω} dα · ∂_k ω`. The routes must agree to 1e-7; the quadrature
/// result is returned.
pub fn numerical_generator(j: HalfInt, p: &RotationParams, k: ParamIndex) -> Result<CMatrix> {
    let ops = make_operators(j);
    let d = j.dim();
    let h = GENERATOR_FD_STEP;
    // raw parameter shifts, no range validation: the formula is analytic everywhere
    let r_plus = rotation_unitary_with(&ops, &perturbed(p, k, h));
    let r_minus = rotation_unitary_with(&ops, &perturbed(p, k, -h));
    let r0 = rotation_unitary_with(&ops, p);
    let fd = (r_plus - r_minus) * c(0.0, 1.0 / (2.0 * h)) * r0.adjoint();

    let omega = p.omega();
    let (values, vectors) = hermitian_eigen(&ops.along(&omega));
    let dw = domega(p, k);
    let jd = ops.along(&dw);
    let jd_eig = vectors.adjoint() * &jd * &vectors;
    let (nodes, weights) = gauss_legendre(64);
    let mut acc = CMatrix::zeros(d, d);
    for (x, w) in nodes.iter().zip(&weights) {
        let alpha = 0.5 * (x + 1.0);
        // in the eigenbasis e^{-iαA} X e^{iαA} has entries X_ab e^{-iα(λ_a - λ_b)}
        let term = CMatrix::from_fn(d, d, |a, b| {
            jd_eig[(a, b)] * (-I * alpha * (values[a] - values[b])).exp()
        });
        acc += term * c(0.5 * w, 0.0);
    }
    let quad = &vectors * acc * vectors.adjoint();

    let gap = (&fd - &quad).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !gap.is_finite() || gap > GENERATOR_AGREEMENT {
        return Err(Error::numerical(format!(
            "generator routes disagree by {gap:e} (tolerance {GENERATOR_AGREEMENT:e})"
        )));
    }
    Ok(quad)
}

/// Coordinates on the rotation group in which a QFI matrix can be expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    /// Axis-angle `(θ, Θ, Φ)`.
    Spherical,
    /// Rotation vector `ω = θ n`.
    Cartesian,
    /// `R = R_z(α) R_y(β) R_z(γ)`.
    EulerZyz,
}

impl Parametrization {
    pub fn labels(self) -> [&'static str; 3] {
        match self {
            Parametrization::Spherical => ["theta", "cap_theta", "cap_phi"],
            Parametrization::Cartesian => ["omega_x", "omega_y", "omega_z"],
            Parametrization::EulerZyz => ["alpha", "beta", "gamma"],
        }
    }

    /// Coordinates of the rotation `p` in this parametrization.
    pub fn coordinates(self, p: &RotationParams) -> [f64; 3] {
        match self {
            Parametrization::Spherical => p.as_array(),
            Parametrization::Cartesian => {
                let w = p.omega();
                [w[0], w[1], w[2]]
            }
            Parametrization::EulerZyz => euler_zyz(&so3_matrix(p)),
        }
    }

    /// Generator vectors (as matrix columns) of this parametrization at the rotation `p`.
    pub fn generator_columns(self, p: &RotationParams) -> Matrix3<f64> {
        match self {
            Parametrization::Spherical => generator_frame(p).columns(),
            Parametrization::Cartesian => cartesian_generators(&p.omega()),
            Parametrization::EulerZyz => {
                let [alpha, beta, _] = euler_zyz(&so3_matrix(p));
                let ez = Vector3::z();
                let rz = so3_from_axis_angle(&ez, alpha);
                let ry = so3_from_axis_angle(&Vector3::y(), beta);
                Matrix3::from_columns(&[ez, rz * Vector3::y(), rz * ry * ez])
            }
        }
    }
}

/// Generators `g_k = ∫₀¹ R(αω) e_k dα` of the Cartesian rotation-vector coordinates; regular at
/// `ω = 0`.
pub fn cartesian_generators(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    if theta < 1e-12 {
        return Matrix3::identity();
    }
    let n = omega / theta;
    let sinc = theta.sin() / theta;
    let versine = (1.0 - theta.cos()) / theta;
    let cols: Vec<Vector3<f64>> = (0..3)
        .map(|k| {
            let e = Vector3::ith(k, 1.0);
            let par = n * n.dot(&e);
            par + (e - par) * sinc + n.cross(&e) * versine
        })
        .collect();
    Matrix3::from_columns(&cols)
}

/// ZYZ Euler angles `(α, β, γ)` of an SO(3) matrix `R = R_z(α) R_y(β) R_z(γ)`.
pub fn euler_zyz(r: &Matrix3<f64>) -> [f64; 3] {
    let beta = r[(2, 2)].clamp(-1.0, 1.0).acos();
    if beta.sin() < 1e-12 {
        // gimbal lock: only α ± γ is defined, put it all in α
        let alpha = r[(1, 0)].atan2(r[(0, 0)]);
        return [alpha, beta, 0.0];
    }
    let alpha = r[(1, 2)].atan2(r[(0, 2)]);
    let gamma = r[(2, 1)].atan2(-r[(2, 0)]);
    [alpha, beta, gamma]
}

/// Jacobian `∂(θ, Θ, Φ)/∂ω` of spherical parameters with respect to the rotation vector.
pub fn spherical_from_cartesian_jacobian(p: &RotationParams) -> Result<Matrix3<f64>> {
    let forward = Matrix3::from_columns(&[
        p.axis(),
        p.daxis_dcap_theta() * p.theta,
        p.daxis_dcap_phi() * p.theta,
    ]);
    forward
        .try_inverse()
        .ok_or(Error::Singular { rank: 2, dim: 3 })
}
