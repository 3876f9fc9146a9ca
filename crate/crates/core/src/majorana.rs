//! Majorana polynomial, stellar constellations and the Husimi function.
//!
//! The polynomial of a state has coefficient `sqrt(C(2J, J+m)) ψ_m` on `z^{J+m}` and its roots
//! are mapped to the sphere through `z = tan(polar/2) e^{i azimuth}`. With this convention the
//! constellation of a coherent state pointing along `n` sits at `D n` with
//! `D = diag(-1, -1, 1)`, a rotation `R(p)` of the state moves the stars by `D ℛ(p) D`, and the
//! Husimi function vanishes at the mirror image `(π - polar, azimuth)` of every star.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, gauss_legendre, CVector};
use crate::states::{ln_binomial, BlochPoint, SpinState};
use crate::su2::HalfInt;

/// Stars closer than this (chordal distance) are reported as one star with multiplicity.
pub const MERGE_DISTANCE: f64 = 1e-7;
/// Accepted normalized polynomial residual at a returned root.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;

/// Majorana polynomial, coefficients in ascending powers of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MajoranaPoly {
    pub coeffs: Vec<Complex64>,
}

impl MajoranaPoly {
    /// Nominal degree `2J` (the polynomial may have lower actual degree).
    pub fn nominal_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.coeffs, z)
    }

    /// `|p(z)| / (max|coeff| max(1,|z|)^deg)`.
    pub fn normalized_residual(&self, z: Complex64) -> f64 {
        let scale = self.coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let deg = self.nominal_degree() as i32;
        self.eval(z).norm() / (scale * z.norm().max(1.0).powi(deg))
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(c(0.0, 0.0), |acc, &a| acc * z + a)
}

fn derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * k as f64)
        .collect()
}

pub fn majorana_poly(state: &SpinState) -> MajoranaPoly {
    let n = state.j().twice();
    let amps = state.amps();
    let coeffs = (0..=n)
        .map(|k| amps[(n - k) as usize] * (0.5 * ln_binomial(n, k)).exp())
        .collect();
    MajoranaPoly { coeffs }
}

/// One point of a constellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Star {
    pub polar: f64,
    pub azimuth: f64,
    pub multiplicity: usize,
}

impl Star {
    pub fn point(&self) -> BlochPoint {
        BlochPoint {
            polar: self.polar,
            azimuth: self.azimuth,
        }
    }
}

/// The `2J` Majorana stars of a state, coincident stars merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Constellation {
    pub stars: Vec<Star>,
}

impl Constellation {
    pub fn total(&self) -> usize {
        self.stars.iter().map(|s| s.multiplicity).sum()
    }

    /// All stars with multiplicity expanded.
    pub fn points(&self) -> Vec<BlochPoint> {
        self.stars
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.point(), s.multiplicity))
            .collect()
    }

    pub fn unit_vectors(&self) -> Vec<Vector3<f64>> {
        self.points().iter().map(|p| p.unit_vector()).collect()
    }
}

/// Star map induced by a rotation of the state: `D ℛ D` with `D = diag(-1, -1, 1)`.
pub fn star_rotation(so3: &Matrix3<f64>) -> Matrix3<f64> {
    let d = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
    d * so3 * d
}

fn point_from_z(z: Complex64) -> BlochPoint {
    let azimuth = if z.norm() == 0.0 {
        0.0
    } else {
        z.arg().rem_euclid(2.0 * PI)
    };
    BlochPoint {
        polar: 2.0 * z.norm().atan(),
        azimuth,
    }
}

pub fn constellation(state: &SpinState) -> Result<Constellation> {
    let poly = majorana_poly(state);
    let scale = poly.coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let zero = |a: &Complex64| a.norm() <= 1e-15 * scale;
    let low = poly.coeffs.iter().take_while(|a| zero(a)).count();
    let high = poly.coeffs.iter().rev().take_while(|a| zero(a)).count();
    let mut points: Vec<BlochPoint> = Vec::new();
    points.extend(std::iter::repeat_n(BlochPoint::NORTH, low));
    points.extend(std::iter::repeat_n(BlochPoint::SOUTH, high));
    let n = poly.coeffs.len();
    if low + high < n {
        let core = &poly.coeffs[low..n - high];
        let roots = polynomial_roots(core)?;
        for z in &roots {
            let r = poly.normalized_residual(*z);
            if r.is_nan() || r > ROOT_RESIDUAL_TOL {
                return Err(Error::numerical(format!(
                    "Majorana root {z} has normalized residual {r:e}"
                )));
            }
        }
        points.extend(roots.into_iter().map(point_from_z));
    }
    Ok(merge_points(&points))
}

fn merge_points(points: &[BlochPoint]) -> Constellation {
    let mut stars: Vec<(Vector3<f64>, Star)> = Vec::new();
    for p in points {
        let v = p.unit_vector();
        if let Some((_, s)) = stars
            .iter_mut()
            .find(|(u, _)| (u - v).norm() < MERGE_DISTANCE)
        {
            s.multiplicity += 1;
        } else {
            stars.push((
                v,
                Star {
                    polar: p.polar,
                    azimuth: p.azimuth,
                    multiplicity: 1,
                },
            ));
        }
    }
    Constellation {
        stars: stars.into_iter().map(|(_, s)| s).collect(),
    }
}

const ABERTH_MAX_ITER: usize = 1000;

/// All roots of a polynomial with nonzero constant and leading coefficients, by Aberth–Ehrlich
/// iteration followed by centroid refinement of root clusters.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[deg];
    if deg == 1 {
        return Ok(vec![-coeffs[0] / lead]);
    }
    let monic: Vec<Complex64> = coeffs.iter().map(|&a| a / lead).collect();
    let dmonic = derivative(&monic);
    // initial guesses on a circle of the geometric-mean root radius
    let radius = monic[0].norm().powf(1.0 / deg as f64).max(1e-3);
    let mut roots: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / deg as f64 + 0.4))
        .collect();
    let mut converged = vec![false; deg];
    for _ in 0..ABERTH_MAX_ITER {
        for k in 0..deg {
            if converged[k] {
                continue;
            }
            let z = roots[k];
            let p = horner(&monic, z);
            if p.norm() == 0.0 {
                converged[k] = true;
                continue;
            }
            let ratio = p / horner(&dmonic, z);
            let repulsion: Complex64 = (0..deg)
                .filter(|&i| i != k)
                .map(|i| {
                    let d = z - roots[i];
                    if d.norm() == 0.0 {
                        c(0.0, 0.0)
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let step = ratio / (c(1.0, 0.0) - ratio * repulsion);
            if !step.re.is_finite() || !step.im.is_finite() {
                converged[k] = true;
                continue;
            }
            roots[k] = z - step;
            if step.norm() <= 4.0 * f64::EPSILON * roots[k].norm().max(f64::MIN_POSITIVE) {
                converged[k] = true;
            }
        }
        if converged.iter().all(|&b| b) {
            break;
        }
    }
    Ok(refine_clusters(&monic, roots))
}

/// Replaces clusters of nearby approximate roots by the refined multiple root they represent,
/// when the derivatives confirm the multiplicity. An `m`-fold root comes out of the iteration
/// smeared over a radius of order `eps^(1/m)`, so clustering starts coarse and is tightened
/// wherever a cluster fails confirmation.
fn refine_clusters(monic: &[Complex64], roots: Vec<Complex64>) -> Vec<Complex64> {
    let deg = roots.len();
    let start = 4.0 * (1e-14_f64).powf(1.0 / deg as f64);
    let all: Vec<usize> = (0..deg).collect();
    let mut out = Vec::with_capacity(deg);
    resolve_group(monic, &roots, &all, start, &mut out);
    out
}

fn resolve_group(
    monic: &[Complex64],
    roots: &[Complex64],
    members: &[usize],
    threshold: f64,
    out: &mut Vec<Complex64>,
) {
    for group in single_linkage(roots, members, threshold) {
        let m = group.len();
        if m == 1 {
            out.push(roots[group[0]]);
            continue;
        }
        let centroid: Complex64 = group.iter().map(|&i| roots[i]).sum::<Complex64>() / m as f64;
        if let Some(a) = confirm_multiple_root(monic, centroid, m) {
            out.extend(std::iter::repeat_n(a, m));
        } else if threshold > 1e-9 {
            resolve_group(monic, roots, &group, threshold * 0.1, out);
        } else {
            out.extend(group.iter().map(|&i| roots[i]));
        }
    }
}

fn single_linkage(roots: &[Complex64], members: &[usize], threshold: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut assigned = vec![false; members.len()];
    for seed in 0..members.len() {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut group = vec![members[seed]];
        let mut cursor = 0;
        while cursor < group.len() {
            let a = roots[group[cursor]];
            for (k, &idx) in members.iter().enumerate() {
                if !assigned[k] {
                    let b = roots[idx];
                    if (a - b).norm() < threshold * a.norm().max(b.norm()).max(1.0) {
                        assigned[k] = true;
                        group.push(idx);
                    }
                }
            }
            cursor += 1;
        }
        groups.push(group);
    }
    groups
}

/// Newton refinement of a root of multiplicity `m` on the `(m-1)`-th derivative, accepted when
/// all lower derivatives also (nearly) vanish there.
fn confirm_multiple_root(monic: &[Complex64], start: Complex64, m: usize) -> Option<Complex64> {
    let mut derivs = vec![monic.to_vec()];
    for _ in 0..m {
        let next = derivative(derivs.last().unwrap());
        derivs.push(next);
    }
    let target = &derivs[m - 1];
    let slope = &derivs[m];
    let mut a = start;
    for _ in 0..50 {
        let f = horner(target, a);
        let df = horner(slope, a);
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        a -= step;
        if step.norm() <= 4.0 * f64::EPSILON * a.norm().max(1.0) {
            break;
        }
    }
    for (k, d) in derivs.iter().enumerate().take(m) {
        let scale: f64 = d
            .iter()
            .enumerate()
            .map(|(i, coef)| coef.norm() * a.norm().max(1.0).powi(i as i32))
            .sum();
        if horner(d, a).norm() > 1e-10 * scale * (k + 1) as f64 {
            return None;
        }
    }
    Some(a)
}

/// Non-canonicalized coherent amplitudes, used for overlaps.
fn coherent_amps(j: HalfInt, point: &BlochPoint) -> CVector {
    let n = j.twice();
    let (s, co) = (0.5 * point.polar).sin_cos();
    let phase = Complex64::from_polar(1.0, point.azimuth);
    CVector::from_fn(j.dim(), |i, _| {
        let down = i as u32;
        let up = n - down;
        phase.powu(down)
            * ((0.5 * ln_binomial(n, up)).exp() * co.powi(up as i32) * s.powi(down as i32))
    })
}

/// `|<n|ψ>|²` with `|n>` the coherent state along `point`.
pub fn husimi(state: &SpinState, point: &BlochPoint) -> f64 {
    coherent_amps(state.j(), point)
        .dotc(state.amps())
        .norm_sqr()
}

/// Display scaling `(4q/π)^{3/4}` used for Husimi maps.
pub fn scaled_husimi(q: f64) -> f64 {
    (4.0 * q / PI).powf(0.75)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HusimiSample {
    pub polar: f64,
    pub azimuth: f64,
    pub q: f64,
    pub scaled_q: f64,
}

/// Husimi function on a regular grid: polar angles `0..=π`, azimuths `[0, 2π)`, row-major in
/// polar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub samples: Vec<HusimiSample>,
}

impl HusimiGrid {
    pub fn max(&self) -> &HusimiSample {
        self.samples
            .iter()
            .max_by(|a, b| a.q.total_cmp(&b.q))
            .expect("non-empty grid")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("polar,azimuth,q,scaled_q\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                s.polar, s.azimuth, s.q, s.scaled_q
            );
        }
        out
    }
}

pub fn husimi_grid(state: &SpinState, n_polar: usize, n_azimuth: usize) -> Result<HusimiGrid> {
    if n_polar < 2 || n_azimuth < 2 {
        return Err(Error::domain(
            "Husimi grid needs at least 2 points per axis",
        ));
    }
    let samples = (0..n_polar * n_azimuth)
        .into_par_iter()
        .map(|idx| {
            let (i, k) = (idx / n_azimuth, idx % n_azimuth);
            let polar = PI * i as f64 / (n_polar - 1) as f64;
            let azimuth = 2.0 * PI * k as f64 / n_azimuth as f64;
            let q = husimi(state, &BlochPoint { polar, azimuth });
            HusimiSample {
                polar,
                azimuth,
                q,
                scaled_q: scaled_husimi(q),
            }
        })
        .collect();
    Ok(HusimiGrid {
        n_polar,
        n_azimuth,
        samples,
    })
}

/// `(2J+1)/(4π) ∫ q dΩ`, which equals one for every state; Gauss–Legendre in `cos(polar)`
/// times a uniform azimuth rule.
pub fn husimi_sphere_integral(state: &SpinState, n_cos: usize, n_azimuth: usize) -> f64 {
    let (x, w) = gauss_legendre(n_cos);
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let polar = xi.clamp(-1.0, 1.0).acos();
        let ring: f64 = (0..n_azimuth)
            .map(|k| {
                husimi(
                    state,
                    &BlochPoint {
                        polar,
                        azimuth: 2.0 * PI * k as f64 / n_azimuth as f64,
                    },
                )
            })
            .sum();
        total += wi * ring * 2.0 * PI / n_azimuth as f64;
    }
    total * state.dim() as f64 / (4.0 * PI)
}
