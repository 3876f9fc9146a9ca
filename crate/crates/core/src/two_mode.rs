//! Two bosonic modes viewed through the Schwinger map.
//!
//! A state of modes `a` and `b` splits into blocks of fixed photon number `N = n_a + n_b`; each
//! block is a spin `J = N/2` with `n_a = J + m`, `n_b = J - m`. Amplitudes are stored as a matrix
//! indexed by `(n_a, n_b)`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, symmetric_eigen, CMatrix, CVector, I};
use crate::majorana::{constellation, majorana_poly};
use crate::metrology::SensCov;
use crate::states::{BlochPoint, SpinState};
use crate::su2::{HalfInt, OperatorSet};

/// Largest neglected probability accepted by the constructors.
pub const TRUNCATION_BUDGET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    amps: DMatrix<Complex64>,
    neglected: f64,
}

impl TwoModeState {
    /// Wraps an amplitude table; `neglected` is the probability known to lie outside it.
    pub fn from_amplitudes(amps: DMatrix<Complex64>, neglected: f64) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::domain("empty amplitude table"));
        }
        if !(0.0..1.0).contains(&neglected) {
            return Err(Error::domain(format!(
                "neglected probability {neglected} outside [0, 1)"
            )));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::domain("amplitude table has no weight"));
        }
        Ok(TwoModeState { amps, neglected })
    }

    pub fn vacuum() -> Self {
        TwoModeState {
            amps: DMatrix::from_element(1, 1, c(1.0, 0.0)),
            neglected: 0.0,
        }
    }

    pub fn amps(&self) -> &DMatrix<Complex64> {
        &self.amps
    }

    /// Probability outside the stored table.
    pub fn neglected(&self) -> f64 {
        self.neglected
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Mean photon numbers `(<n_a>, <n_b>)` of the stored (renormalized) table.
    pub fn mean_photons(&self) -> (f64, f64) {
        let norm = self.norm_sqr();
        let (mut na, mut nb) = (0.0, 0.0);
        for ((i, k), a) in indexed(&self.amps) {
            na += i as f64 * a.norm_sqr();
            nb += k as f64 * a.norm_sqr();
        }
        (na / norm, nb / norm)
    }

    /// Covariance of the Schwinger operators computed on the Fock grid directly.
    pub fn cov(&self) -> SensCov {
        let norm = self.norm_sqr();
        let images: Vec<DMatrix<Complex64>> =
            (0..3).map(|i| schwinger_apply(i, &self.amps)).collect();
        let padded = pad(&self.amps, 1);
        let inner = |x: &DMatrix<Complex64>, y: &DMatrix<Complex64>| -> Complex64 {
            x.iter()
                .zip(y.iter())
                .map(|(p, q)| p.conj() * q)
                .sum::<Complex64>()
                / norm
        };
        let mean = Vector3::from_fn(|i, _| inner(&padded, &images[i]).re);
        let c = Matrix3::from_fn(|i, k| inner(&images[i], &images[k]).re - mean[i] * mean[k]);
        SensCov { c, mean }
    }
}

/// Serialized form: `amps[n_a][n_b] = [re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoModeJson {
    pub kind: TwoModeKind,
    pub amps: Vec<Vec<[f64; 2]>>,
    pub neglected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoModeKind {
    TwoMode,
}

impl TwoModeState {
    pub fn to_json(&self) -> TwoModeJson {
        TwoModeJson {
            kind: TwoModeKind::TwoMode,
            amps: (0..self.amps.nrows())
                .map(|i| {
                    (0..self.amps.ncols())
                        .map(|k| [self.amps[(i, k)].re, self.amps[(i, k)].im])
                        .collect()
                })
                .collect(),
            neglected: self.neglected,
        }
    }

    pub fn from_json(json: &TwoModeJson) -> Result<Self> {
        let cols = json.amps.first().map_or(0, Vec::len);
        if json.amps.iter().any(|row| row.len() != cols) {
            return Err(Error::domain("two-mode amplitude rows differ in length"));
        }
        let amps = DMatrix::from_fn(json.amps.len(), cols, |i, k| {
            c(json.amps[i][k][0], json.amps[i][k][1])
        });
        TwoModeState::from_amplitudes(amps, json.neglected)
    }
}

fn indexed(m: &DMatrix<Complex64>) -> impl Iterator<Item = ((usize, usize), &Complex64)> {
    let rows = m.nrows();
    m.iter()
        .enumerate()
        .map(move |(flat, a)| ((flat % rows, flat / rows), a))
}

fn pad(m: &DMatrix<Complex64>, extra: usize) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(m.nrows() + extra, m.ncols() + extra);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

/// `J_x`, `J_y` or `J_z` from the mode operators, applied to a Fock table. The image is one row and
/// one column larger so that raising never falls off the edge.
fn schwinger_apply(axis: usize, psi: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (rows, cols) = (psi.nrows() + 1, psi.ncols() + 1);
    let at = |na: usize, nb: usize| -> Complex64 {
        if na < psi.nrows() && nb < psi.ncols() {
            psi[(na, nb)]
        } else {
            c(0.0, 0.0)
        }
    };
    DMatrix::from_fn(rows, cols, |na, nb| {
        // a†b lowers n_b and raises n_a; b†a does the reverse
        let raise = if na > 0 {
            at(na - 1, nb + 1) * ((na as f64) * (nb as f64 + 1.0)).sqrt()
        } else {
            c(0.0, 0.0)
        };
        let lower = if nb > 0 {
            at(na + 1, nb - 1) * ((na as f64 + 1.0) * (nb as f64)).sqrt()
        } else {
            c(0.0, 0.0)
        };
        match axis {
            0 => (raise + lower) * 0.5,
            1 => (raise - lower) / (I * 2.0),
            _ => at(na, nb) * (0.5 * (na as f64 - nb as f64)),
        }
    })
}

/// Spin operators on the `N = 2J` block assembled from mode operators, in the `m = +J..-J` basis
/// (index `k` holds `n_a = 2J - k`, `n_b = k`).
pub fn schwinger_operators(j: HalfInt) -> OperatorSet {
    let n = j.twice() as usize;
    let d = n + 1;
    let mut a_dag_b = CMatrix::zeros(d, d);
    for k in 1..d {
        let (na, nb) = (n - k, k);
        a_dag_b[(k - 1, k)] = c(((na as f64 + 1.0) * nb as f64).sqrt(), 0.0);
    }
    let b_dag_a = a_dag_b.adjoint();
    let jz = CMatrix::from_fn(d, d, |r, s| {
        if r == s {
            c(0.5 * (n as f64 - 2.0 * r as f64), 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    let jx = (&a_dag_b + &b_dag_a) * c(0.5, 0.0);
    let jy = (&a_dag_b - &b_dag_a) * (-0.5 * I);
    let jsq = &jx * &jx + &jy * &jy + &jz * &jz;
    OperatorSet {
        j,
        jx,
        jy,
        jz,
        jplus: a_dag_b,
        jminus: b_dag_a,
        jsq,
    }
}

/// Truncated single-mode coherent amplitudes, normalized on the infinite ladder, with the
/// neglected probability.
fn coherent_mode(alpha: Complex64, n_max: usize) -> (Vec<Complex64>, f64) {
    let r = alpha.norm();
    let phase = if r > 0.0 { alpha / r } else { c(1.0, 0.0) };
    let mut ln_fact = 0.0;
    let mut amps = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        let mag = if r > 0.0 {
            (-0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_fact).exp()
        } else if n == 0 {
            1.0
        } else {
            0.0
        };
        amps.push(phase.powu(n as u32) * mag);
    }
    (trim(amps), tail(r * r, n_max))
}

/// Squeezed-vacuum amplitudes `∝ exp(λ b†²/2)|0>` on `n ≤ n_max`, by forward recursion over
/// even photon numbers.
fn squeezed_mode(lambda: Complex64, n_max: usize) -> (Vec<Complex64>, f64) {
    let mut amps = vec![c(0.0, 0.0); n_max + 1];
    let mut amp = c((1.0 - lambda.norm_sqr()).powf(0.25), 0.0);
    let mut kept = 0.0;
    let mut k = 0usize;
    while 2 * k <= n_max {
        amps[2 * k] = amp;
        kept += amp.norm_sqr();
        amp *= lambda * ((2 * k + 1) as f64 / (2 * k + 2) as f64).sqrt();
        k += 1;
    }
    (trim(amps), (1.0 - kept).max(0.0))
}

fn trim(mut amps: Vec<Complex64>) -> Vec<Complex64> {
    while amps.len() > 1 && amps.last().is_some_and(|a| *a == c(0.0, 0.0)) {
        amps.pop();
    }
    amps
}

/// Poisson tail `P(n > n_max)` for mean `mean`.
fn tail(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut ln_term = -mean;
    let mut kept = ln_term.exp();
    for n in 1..=n_max {
        ln_term += mean.ln() - (n as f64).ln();
        kept += ln_term.exp();
    }
    (1.0 - kept).max(0.0)
}

fn product(a: &[Complex64], b: &[Complex64], neglected: f64) -> Result<TwoModeState> {
    if neglected > TRUNCATION_BUDGET {
        return Err(Error::Truncation {
            neglected,
            budget: TRUNCATION_BUDGET,
        });
    }
    let amps = DMatrix::from_fn(a.len(), b.len(), |i, k| a[i] * b[k]);
    TwoModeState::from_amplitudes(amps, neglected)
}

/// `∝ exp(α a† + β b†)|vac>` truncated at `n_max` photons per mode.
pub fn two_mode_coherent(alpha: Complex64, beta: Complex64, n_max: usize) -> Result<TwoModeState> {
    let (a, ta) = coherent_mode(alpha, n_max);
    let (b, tb) = coherent_mode(beta, n_max);
    product(&a, &b, 1.0 - (1.0 - ta) * (1.0 - tb))
}

/// `λ = (ξ/|ξ|) tanh|ξ|`.
pub fn squeeze_parameter(xi: Complex64) -> Complex64 {
    let r = xi.norm();
    if r == 0.0 {
        c(0.0, 0.0)
    } else {
        xi / r * r.tanh()
    }
}

/// Coherent light in mode `a` and squeezed vacuum `∝ exp(λ b†²/2)|0>` in mode `b`.
pub fn coherent_plus_squeezed(
    alpha: Complex64,
    xi: Complex64,
    n_max: usize,
) -> Result<TwoModeState> {
    let lambda = squeeze_parameter(xi);
    if lambda.norm() >= 1.0 {
        return Err(Error::domain(
            "squeezing too strong to represent in double precision",
        ));
    }
    let (a, ta) = coherent_mode(alpha, n_max);
    let (b, tb) = squeezed_mode(lambda, n_max);
    product(&a, &b, 1.0 - (1.0 - ta) * (1.0 - tb))
}

/// Smallest per-mode photon cutoff keeping [`coherent_plus_squeezed`] within the truncation
/// budget (with `ξ = 0` this also serves [`two_mode_coherent`] for a single mode of strength `α`).
pub fn required_n_max(alpha: Complex64, xi: Complex64) -> usize {
    let lambda = squeeze_parameter(xi);
    let mut n = (alpha.norm_sqr() + 10.0 * alpha.norm() + 20.0) as usize;
    loop {
        let ta = tail(alpha.norm_sqr(), n);
        let tb = if lambda.norm() > 0.0 {
            squeezed_mode(lambda, n).1
        } else {
            0.0
        };
        if 1.0 - (1.0 - ta) * (1.0 - tb) <= 0.5 * TRUNCATION_BUDGET {
            return n;
        }
        n += n / 4 + 8;
    }
}

/// One fixed-photon-number block.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceComponent {
    pub j: HalfInt,
    pub weight: f64,
    pub state: SpinState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    pub components: Vec<SubspaceComponent>,
    /// Probability outside the truncated table.
    pub neglected: f64,
}

impl SubspaceDecomposition {
    pub fn component(&self, n: usize) -> Option<&SubspaceComponent> {
        self.components
            .iter()
            .find(|comp| comp.j.twice() as usize == n)
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|comp| comp.weight).sum()
    }

    /// Covariance assembled block by block from su(2) ladder algebra. Every `J_i` conserves the
    /// photon number, so second moments add with the block weights.
    pub fn cov(&self) -> SensCov {
        let total = self.total_weight();
        let mut mean = Vector3::zeros();
        let mut second = Matrix3::zeros();
        for comp in &self.components {
            let (m, s) = block_moments(&comp.state);
            mean += m * (comp.weight / total);
            second += s * (comp.weight / total);
        }
        SensCov {
            c: second - mean * mean.transpose(),
            mean,
        }
    }
}

/// First and symmetrized second moments of a spin state without forming matrices.
fn block_moments(state: &SpinState) -> (Vector3<f64>, Matrix3<f64>) {
    let j = state.j().value();
    let psi = state.amps();
    let d = psi.len();
    let ladder = |k: usize| -> f64 {
        // <m+1|J+|m> with m = J - k
        let m = j - k as f64;
        (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
    };
    let mut images = [CVector::zeros(d), CVector::zeros(d), CVector::zeros(d)];
    for k in 0..d {
        let raised = if k + 1 < d {
            psi[k + 1] * ladder(k + 1)
        } else {
            c(0.0, 0.0)
        };
        let lowered = if k > 0 {
            psi[k - 1] * ladder(k)
        } else {
            c(0.0, 0.0)
        };
        images[0][k] = (raised + lowered) * 0.5;
        images[1][k] = (raised - lowered) / (I * 2.0);
        images[2][k] = psi[k] * (j - k as f64);
    }
    let mean = Vector3::from_fn(|i, _| psi.dotc(&images[i]).re);
    let second = Matrix3::from_fn(|i, k| images[i].dotc(&images[k]).re);
    (mean, second)
}

/// Groups amplitudes by total photon number and normalizes each non-empty block.
pub fn decompose(state: &TwoModeState) -> SubspaceDecomposition {
    let amps = state.amps();
    let max_n = amps.nrows() + amps.ncols() - 2;
    let mut components = Vec::new();
    for n in 0..=max_n {
        let block = CVector::from_fn(n + 1, |k, _| {
            let (na, nb) = (n - k, k);
            if na < amps.nrows() && nb < amps.ncols() {
                amps[(na, nb)]
            } else {
                c(0.0, 0.0)
            }
        });
        let weight = block.norm_squared();
        if weight <= f64::MIN_POSITIVE {
            continue;
        }
        let j = HalfInt::from_twice(n as u32);
        let state = SpinState::from_amplitudes(j, block).expect("non-empty block");
        // the table is normalized on the untruncated ladder, so raw block norms are the weights
        components.push(SubspaceComponent { j, weight, state });
    }
    SubspaceDecomposition {
        components,
        neglected: state.neglected(),
    }
}

/// Terminating series `₁F₁(-n; b; x)`.
pub fn hyp1f1_terminating(n: usize, b: f64, x: Complex64) -> Complex64 {
    let mut term = c(1.0, 0.0);
    let mut sum = term;
    for l in 0..n {
        let l = l as f64;
        term *= x * ((l - n as f64) / ((b + l) * (l + 1.0)));
        sum += term;
    }
    sum
}

/// Majorana polynomial of the `N = 2J` block of `exp(α a† + λ b†²/2)|vac>` compared with its
/// confluent-hypergeometric closed form at 20 points; returns the largest residual relative to
/// the polynomial's peak magnitude on those points.
///
/// With `t = -2α²z²/λ` the block polynomial is proportional to `₁F₁(-J; 1/2; t/4)` for integer `J`
/// and to `z ₁F₁(-(J - 1/2); 3/2; t/4)` for half-odd `J`.
pub fn hypergeometric_check(j: HalfInt, alpha: f64, lambda: f64) -> f64 {
    let block = squeezed_block(j, alpha, lambda);
    let poly = majorana_poly(&block);
    let n = j.twice() as usize;
    let closed = |z: Complex64| -> Complex64 {
        let t = -2.0 * alpha * alpha * z * z / lambda;
        if n.is_multiple_of(2) {
            hyp1f1_terminating(n / 2, 0.5, t / 4.0)
        } else {
            z * hyp1f1_terminating((n - 1) / 2, 1.5, t / 4.0)
        }
    };
    let samples: Vec<Complex64> = (0..20)
        .map(|k| {
            let r = 0.3 + 0.07 * k as f64;
            Complex64::from_polar(r, 0.37 + 2.3 * k as f64)
        })
        .collect();
    let p: Vec<Complex64> = samples.iter().map(|&z| poly.eval(z)).collect();
    let h: Vec<Complex64> = samples.iter().map(|&z| closed(z)).collect();
    let scale = h
        .iter()
        .zip(&p)
        .map(|(h, p)| h.conj() * p)
        .sum::<Complex64>()
        / h.iter().map(|h| h.norm_sqr()).sum::<f64>();
    let peak = p.iter().map(|v| v.norm()).fold(0.0, f64::max);
    p.iter()
        .zip(&h)
        .map(|(p, h)| (p - scale * h).norm())
        .fold(0.0, f64::max)
        / peak
}

/// Normalized `N = 2J` block of the coherent-plus-squeezed state built from closed-form
/// amplitudes, independent of any truncation.
pub fn squeezed_block(j: HalfInt, alpha: f64, lambda: f64) -> SpinState {
    let n = j.twice() as usize;
    let mut ln_fact = vec![0.0; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    // c(n_a, n_b) ∝ α^{n_a}/√(n_a!) · (λ/2)^{l} √((2l)!)/l! with n_b = 2l
    let amps = CVector::from_fn(n + 1, |k, _| {
        if k % 2 == 1 {
            return c(0.0, 0.0);
        }
        let (na, l) = (n - k, k / 2);
        let ln_mag = na as f64 * alpha.abs().ln() - 0.5 * ln_fact[na]
            + l as f64 * (0.5 * lambda.abs()).ln()
            + 0.5 * ln_fact[k]
            - ln_fact[l];
        let sign = alpha.signum().powi(na as i32) * lambda.signum().powi(l as i32);
        c(sign * ln_mag.exp(), 0.0)
    });
    SpinState::from_amplitudes(j, amps).expect("block has weight")
}

/// Normal and largest out-of-plane distance of the best plane through the origin.
pub fn great_circle_fit(points: &[Vector3<f64>]) -> (Vector3<f64>, f64) {
    let scatter: Matrix3<f64> = points.iter().map(|v| v * v.transpose()).sum();
    let (_, vecs) = symmetric_eigen(&nalgebra::DMatrix::from_fn(3, 3, |i, k| scatter[(i, k)]));
    let normal = Vector3::new(vecs[(0, 0)], vecs[(1, 0)], vecs[(2, 0)]);
    let residual = points
        .iter()
        .map(|v| v.dot(&normal).abs())
        .fold(0.0, f64::max);
    (normal, residual)
}

/// Constellation of one photon-number block, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConstellation {
    #[serde(rename = "N")]
    pub n: usize,
    pub stars: Vec<BlochPoint>,
}

/// Constellations of the requested photon-number blocks.
pub fn block_constellations(
    decomposition: &SubspaceDecomposition,
    ns: &[usize],
) -> Result<Vec<BlockConstellation>> {
    ns.iter()
        .map(|&n| {
            let comp = decomposition
                .component(n)
                .ok_or_else(|| Error::domain(format!("no weight in the N = {n} block")))?;
            Ok(BlockConstellation {
                n,
                stars: constellation(&comp.state)?.points(),
            })
        })
        .collect()
}
