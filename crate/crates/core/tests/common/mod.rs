//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's linear algebra: spin matrices are built from the
//! ladder formula, exponentials by scaled Taylor series and derivatives by central differences.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `[Jx, Jy, Jz]` for spin `twice_j / 2`, basis order `m = +J ... -J`.
pub fn spin_matrices(twice_j: u32) -> [CMat; 3] {
    let j = twice_j as f64 / 2.0;
    let d = twice_j as usize + 1;
    let mut jp = CMat::zeros(d, d);
    let mut jz = CMat::zeros(d, d);
    for i in 0..d {
        let m = j - i as f64;
        jz[(i, i)] = cx(m, 0.0);
        if i > 0 {
            jp[(i - 1, i)] = cx((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * cx(0.5, 0.0);
    let jy = (&jp - &jm) * cx(0.0, -0.5);
    [jx, jy, jz]
}

pub fn along(ops: &[CMat; 3], v: &Vector3<f64>) -> CMat {
    &ops[0] * cx(v[0], 0.0) + &ops[1] * cx(v[1], 0.0) + &ops[2] * cx(v[2], 0.0)
}

/// `exp(a)` by scaling and squaring a 24-term Taylor series.
pub fn expm(a: &CMat) -> CMat {
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a * cx(scale, 0.0);
    let d = a.nrows();
    let mut term = CMat::identity(d, d);
    let mut sum = CMat::identity(d, d);
    for k in 1..24 {
        term = &term * &x * cx(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn axis(cap_theta: f64, cap_phi: f64) -> Vector3<f64> {
    Vector3::new(
        cap_theta.sin() * cap_phi.cos(),
        cap_theta.sin() * cap_phi.sin(),
        cap_theta.cos(),
    )
}

/// `exp(-i θ n·J)` for spherical parameters `(θ, Θ, Φ)`.
pub fn rotation(ops: &[CMat; 3], x: [f64; 3]) -> CMat {
    expm(&(along(ops, &axis(x[1], x[2])) * cx(0.0, -x[0])))
}

pub fn rotated(ops: &[CMat; 3], psi: &CVec, x: [f64; 3]) -> CVec {
    rotation(ops, x) * psi
}

/// Covariance `½<{J_i, J_k}> - <J_i><J_k>` straight from the definition.
pub fn covariance(ops: &[CMat; 3], psi: &CVec) -> Matrix3<f64> {
    let ev = |a: &CMat| psi.dotc(&(a * psi)).re;
    let mean: Vec<f64> = ops.iter().map(ev).collect();
    Matrix3::from_fn(|i, k| {
        let anti = &ops[i] * &ops[k] + &ops[k] * &ops[i];
        0.5 * ev(&anti) - mean[i] * mean[k]
    })
}

/// Pure-state QFI `4 Re(<∂_iψ|∂_kψ> - <∂_iψ|ψ><ψ|∂_kψ>)` with central-difference derivatives of
/// `f` at `x`.
pub fn fd_qfi(f: impl Fn([f64; 3]) -> CVec, x: [f64; 3], h: f64) -> Matrix3<f64> {
    let psi = f(x);
    let d: Vec<CVec> = (0..3)
        .map(|k| {
            let (mut up, mut down) = (x, x);
            up[k] += h;
            down[k] -= h;
            (f(up) - f(down)) * cx(1.0 / (2.0 * h), 0.0)
        })
        .collect();
    Matrix3::from_fn(|i, k| 4.0 * (d[i].dotc(&d[k]) - d[i].dotc(&psi) * psi.dotc(&d[k])).re)
}

/// Deterministic pseudo-random numbers in `[0, 1)` (splitmix64), so the oracles do not depend on
/// the library's RNG choices.
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Generic spherical parameters away from the coordinate singularities.
    pub fn params(&mut self) -> [f64; 3] {
        [
            self.range(0.3, 5.9),
            self.range(0.3, 2.8),
            self.range(0.0, 6.2),
        ]
    }
}
