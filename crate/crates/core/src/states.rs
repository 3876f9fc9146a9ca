//! Probe-state families: angular momentum eigenstates, Bloch coherent states, NOON, Bloch cat
//! and balanced states, and Kings of Quantumness (states with vanishing mean spin and isotropic
//! second moments).

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, expectation, CMatrix, CVector};
use crate::metrology::cov_matrix;
use crate::su2::{make_operators, HalfInt, OperatorSet};

/// Normalized pure state in the spin-J irrep, basis order `m = +J ... -J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinState {
    j: HalfInt,
    amps: CVector,
}

impl SpinState {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn from_amplitudes(j: HalfInt, amps: CVector) -> Result<Self> {
        if amps.len() != j.dim() {
            return Err(Error::domain(format!(
                "expected {} amplitudes for J = {j}, got {}",
                j.dim(),
                amps.len()
            )));
        }
        let norm = amps.norm();
        if !norm.is_finite() || norm <= 1e-300 {
            return Err(Error::domain(
                "amplitude vector has zero or non-finite norm",
            ));
        }
        Ok(SpinState {
            j,
            amps: amps / c(norm, 0.0),
        })
    }

    pub fn j(&self) -> HalfInt {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.j.dim()
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    pub fn amplitude(&self, m: f64) -> Result<Complex64> {
        Ok(self.amps[self.j.index_of(m)?])
    }

    /// Makes the first non-negligible amplitude real and positive.
    pub fn canonical(mut self) -> Self {
        let scale = self.amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if let Some(first) = self.amps.iter().find(|a| a.norm() > 1e-12 * scale) {
            let phase = first.conj() / first.norm();
            self.amps *= phase;
        }
        self
    }

    /// `<J>` as a real 3-vector.
    pub fn mean_spin(&self, ops: &OperatorSet) -> Vector3<f64> {
        Vector3::from_fn(|i, _| expectation(&self.amps, ops.component(i)).re)
    }

    pub fn apply(&self, unitary: &CMatrix) -> SpinState {
        SpinState {
            j: self.j,
            amps: unitary * &self.amps,
        }
    }

    /// `|<self|other>|`.
    pub fn overlap(&self, other: &SpinState) -> f64 {
        self.amps.dotc(&other.amps).norm()
    }

    pub fn to_json(&self) -> StateJson {
        StateJson {
            twice_j: self.j.twice(),
            amps: self.amps.iter().map(|a| [a.re, a.im]).collect(),
        }
    }

    pub fn from_json(s: &StateJson) -> Result<Self> {
        let j = HalfInt::from_twice(s.twice_j);
        let amps = CVector::from_iterator(s.amps.len(), s.amps.iter().map(|a| c(a[0], a[1])));
        let state = SpinState::from_amplitudes(j, amps.clone())?;
        if (amps.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "serialized state has norm {} (expected 1)",
                amps.norm()
            )));
        }
        Ok(state)
    }
}

/// Serialized form of a [`SpinState`]: `{"twice_j": int, "amps": [[re, im], ...]}` with
/// amplitudes in the `m = +J ... -J` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub twice_j: u32,
    pub amps: Vec<[f64; 2]>,
}

/// Direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochPoint {
    pub polar: f64,
    pub azimuth: f64,
}

impl BlochPoint {
    pub fn new(polar: f64, azimuth: f64) -> Result<Self> {
        if !polar.is_finite() || !azimuth.is_finite() {
            return Err(Error::domain("Bloch angles must be finite"));
        }
        if !(-1e-12..=PI + 1e-12).contains(&polar) {
            return Err(Error::domain(format!("polar angle {polar} outside [0, π]")));
        }
        Ok(BlochPoint {
            polar: polar.clamp(0.0, PI),
            azimuth: azimuth.rem_euclid(TAU),
        })
    }

    pub const NORTH: BlochPoint = BlochPoint {
        polar: 0.0,
        azimuth: 0.0,
    };
    pub const SOUTH: BlochPoint = BlochPoint {
        polar: PI,
        azimuth: 0.0,
    };

    pub fn unit_vector(&self) -> Vector3<f64> {
        let (st, ct) = self.polar.sin_cos();
        let (sp, cp) = self.azimuth.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        let n = v.norm();
        let polar = (v[2] / n).clamp(-1.0, 1.0).acos();
        let azimuth = if v[0] == 0.0 && v[1] == 0.0 {
            0.0
        } else {
            v[1].atan2(v[0]).rem_euclid(TAU)
        };
        BlochPoint { polar, azimuth }
    }

    /// Chordal distance between the two directions.
    pub fn chordal(&self, other: &BlochPoint) -> f64 {
        (self.unit_vector() - other.unit_vector()).norm()
    }
}

pub(crate) fn ln_binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// `|J m>`.
pub fn basis_state(j: HalfInt, m: f64) -> Result<SpinState> {
    let idx = j.index_of(m)?;
    let mut amps = CVector::zeros(j.dim());
    amps[idx] = c(1.0, 0.0);
    Ok(SpinState { j, amps })
}

/// Bloch coherent state pointing along `point`: the `+J` eigenstate of `J.n(point)`.
///
/// Amplitudes are `sqrt(C(2J, J+m)) cos(θ/2)^(J+m) (sin(θ/2) e^{iφ})^(J-m)`, i.e.
/// `(1+|z|²)^{-J} exp(z J₋)|JJ>` with `z = tan(θ/2) e^{iφ}` and the pole limits exact.
pub fn coherent_state(j: HalfInt, point: &BlochPoint) -> SpinState {
    let n = j.twice();
    let (s, co) = (0.5 * point.polar).sin_cos();
    let phase = Complex64::from_polar(1.0, point.azimuth);
    let amps = CVector::from_fn(j.dim(), |i, _| {
        // i = J - m, so J + m = 2J - i
        let up = n - i as u32;
        let down = i as u32;
        let mag = (0.5 * ln_binomial(n, up)).exp() * co.powi(up as i32) * s.powi(down as i32);
        phase.powu(down) * mag
    });
    let norm = amps.norm();
    SpinState {
        j,
        amps: amps / c(norm, 0.0),
    }
    .canonical()
}

/// Coherent state labelled by its stereographic coordinate `z = tan(θ/2) e^{iφ}`, without
/// phase canonicalization (used to build superpositions).
fn coherent_from_z(j: HalfInt, z: Complex64) -> CVector {
    let n = j.twice();
    let amps = CVector::from_fn(j.dim(), |i, _| {
        let down = i as u32;
        z.powu(down) * (0.5 * ln_binomial(n, n - down)).exp()
    });
    let norm = amps.norm();
    amps / c(norm, 0.0)
}

/// `(|JJ> - |J,-J>)/√2`.
pub fn noon_state(j: HalfInt) -> SpinState {
    let d = j.dim();
    let mut amps = CVector::zeros(d);
    if d == 1 {
        amps[0] = c(1.0, 0.0);
        return SpinState { j, amps };
    }
    amps[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[d - 1] = c(-std::f64::consts::FRAC_1_SQRT_2, 0.0);
    SpinState { j, amps }
}

pub const CAT_DEGENERATE_NORM: f64 = 1e-12;

/// Bloch cat state `(|z> - |-z>)` renormalized from the constructed vector.
pub fn cat_state(j: HalfInt, z: Complex64) -> Result<SpinState> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain("cat-state parameter must be finite"));
    }
    let diff = coherent_from_z(j, z) - coherent_from_z(j, -z);
    let norm = diff.norm();
    if norm < CAT_DEGENERATE_NORM {
        return Err(Error::Degenerate(format!(
            "|z> and |-z> coincide (difference norm {norm:e})"
        )));
    }
    Ok(SpinState {
        j,
        amps: diff / c(norm, 0.0),
    }
    .canonical())
}

/// `(|J m> + |J,-m>)/√2` for `m > 1/2`.
pub fn balanced_state(j: HalfInt, m: f64) -> Result<SpinState> {
    if m <= 0.5 {
        return Err(Error::domain(format!(
            "balanced states need m > 1/2, got {m}"
        )));
    }
    let a = j.index_of(m)?;
    let b = j.index_of(-m)?;
    let mut amps = CVector::zeros(j.dim());
    amps[a] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[b] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Ok(SpinState { j, amps })
}

/// Haar-random pure state.
pub fn random_state<R: Rng + ?Sized>(j: HalfInt, rng: &mut R) -> SpinState {
    let amps = CVector::from_fn(j.dim(), |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm = amps.norm();
    SpinState {
        j,
        amps: amps / c(norm, 0.0),
    }
}

/// Options for the numerical King search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KingSearch {
    pub base_seed: u64,
    pub starts: usize,
    pub max_iterations: usize,
    /// Accepted max-norm deviation of `C` from `(J(J+1)/3)·1`, and of `<J>` from zero.
    pub isotropy_tol: f64,
}

impl Default for KingSearch {
    fn default() -> Self {
        KingSearch {
            base_seed: 0x5eed_4b1d,
            starts: 20,
            max_iterations: 400,
            isotropy_tol: 1e-8,
        }
    }
}

/// Max-norm distance of a state's first and second moments from the King conditions.
pub fn isotropy_error(state: &SpinState, ops: &OperatorSet) -> f64 {
    let target = state.j().casimir() / 3.0;
    let cov = cov_matrix(state);
    let mean = state.mean_spin(ops);
    let mut err = mean.amax();
    for i in 0..3 {
        for k in 0..3 {
            let t = if i == k { target } else { 0.0 };
            err = err.max((cov.c[(i, k)] - t).abs());
        }
    }
    err
}

/// The admissible `m` with `m² = J(J+1)/3`, if one exists.
pub fn exact_balanced_king(j: HalfInt) -> Option<f64> {
    let m = (j.casimir() / 3.0).sqrt();
    let twice = (2.0 * m).round();
    if (2.0 * m - twice).abs() > 1e-9 {
        return None;
    }
    let m = twice / 2.0;
    (m > 0.5 && j.index_of(m).is_ok()).then_some(m)
}

/// A King of Quantumness for spin `J`.
///
/// Uses the balanced state when `J(J+1)/3` is the square of an admissible `m`; otherwise runs a
/// multi-start least-squares search for a state whose moments satisfy the King conditions.
pub fn king_state(j: HalfInt) -> Result<SpinState> {
    king_state_with(j, &KingSearch::default())
}

pub fn king_state_with(j: HalfInt, opts: &KingSearch) -> Result<SpinState> {
    if let Some(m) = exact_balanced_king(j) {
        return balanced_state(j, m);
    }
    let ops = make_operators(j);
    let problem = MomentProblem::new(&ops);
    let runs: Vec<(f64, SpinState)> = (0..opts.starts)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.base_seed);
            rng.set_stream(run as u64);
            let start = random_state(j, &mut rng);
            let state = problem.solve(start.amps, opts.max_iterations);
            (isotropy_error(&state, &ops), state)
        })
        .collect();
    // deterministic choice: lowest run index that meets the tolerance
    if let Some((_, state)) = runs.iter().find(|(err, _)| *err <= opts.isotropy_tol) {
        return Ok(state.clone().canonical());
    }
    let (best_err, best) = runs
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .cloned()
        .expect("at least one start");
    let best_trace_inverse = cov_matrix(&best).trace_inverse().unwrap_or(f64::INFINITY);
    Err(Error::NotFound {
        best_trace_inverse,
        isotropy_error: best_err,
    })
}

/// Least-squares formulation of the King conditions: every residual is a quadratic form
/// `<u|A|u> - b` in the raw amplitude vector `u`.
struct MomentProblem {
    forms: Vec<(CMatrix, f64)>,
    dim: usize,
}

impl MomentProblem {
    fn new(ops: &OperatorSet) -> Self {
        let d = ops.j.dim();
        let target = ops.j.casimir() / 3.0;
        let mut forms = Vec::new();
        for i in 0..3 {
            forms.push((ops.component(i).clone(), 0.0));
        }
        for i in 0..3 {
            for k in i..3 {
                let a = ops.component(i);
                let b = ops.component(k);
                let sym = (a * b + b * a) * c(0.5, 0.0);
                forms.push((sym, if i == k { target } else { 0.0 }));
            }
        }
        forms.push((CMatrix::identity(d, d), 1.0));
        MomentProblem { forms, dim: d }
    }

    fn residuals(&self, u: &CVector) -> DVector<f64> {
        DVector::from_iterator(
            self.forms.len(),
            self.forms.iter().map(|(a, b)| expectation(u, a).re - b),
        )
    }

    fn jacobian(&self, u: &CVector) -> DMatrix<f64> {
        let d = self.dim;
        let mut jac = DMatrix::zeros(self.forms.len(), 2 * d);
        for (row, (a, _)) in self.forms.iter().enumerate() {
            let au = a * u;
            for k in 0..d {
                jac[(row, k)] = 2.0 * au[k].re;
                jac[(row, d + k)] = 2.0 * au[k].im;
            }
        }
        jac
    }

    /// Levenberg–Marquardt on the stacked real/imaginary parts.
    fn solve(&self, start: CVector, max_iterations: usize) -> SpinState {
        let d = self.dim;
        let mut u = start;
        let mut r = self.residuals(&u);
        let mut cost = r.norm_squared();
        let mut mu = 1e-3;
        for _ in 0..max_iterations {
            if cost < 1e-30 {
                break;
            }
            let jac = self.jacobian(&u);
            let jt = jac.transpose();
            let grad = &jt * &r;
            let normal = &jt * &jac;
            let mut improved = false;
            for _ in 0..30 {
                let mut lhs = normal.clone();
                for k in 0..2 * d {
                    lhs[(k, k)] += mu * (1.0 + normal[(k, k)]);
                }
                let Some(step) = lhs.cholesky().map(|ch| ch.solve(&(-&grad))) else {
                    mu *= 10.0;
                    continue;
                };
                let trial = CVector::from_fn(d, |k, _| u[k] + c(step[k], step[d + k]));
                let tr = self.residuals(&trial);
                let tc = tr.norm_squared();
                if tc < cost {
                    u = trial;
                    r = tr;
                    cost = tc;
                    mu = (mu * 0.3).max(1e-15);
                    improved = true;
                    break;
                }
                mu *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let norm = u.norm();
        SpinState {
            j: self.forms_j(),
            amps: u / c(norm, 0.0),
        }
    }

    fn forms_j(&self) -> HalfInt {
        HalfInt::from_twice(self.dim as u32 - 1)
    }
}
