//! Acceptance run: prints one PASS/FAIL line per criterion, with the sub-checks beneath it.
//!
//! Sub-checks marked `known` are closed forms that cannot hold for the state in question; they
//! are printed as failures but do not fail the run. Any other failed check exits non-zero.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::{cx, CVec, Stream};
use spinsense_core::estimation::{
    design_fisher, displaced_pvm, husimi_design, husimi_models, ml_estimate, monte_carlo_qcrb,
    simulate_shots, trial_seed, MeasurementModel, MlOptions, MonteCarloConfig, RotationModel,
    Scheme, ShotRecord,
};
use spinsense_core::metrology::{
    avg_variance, classical_fi, cov_matrix, qfi_rotation_matrix, qfi_rotation_matrix_in,
    reparametrize, singular_diagnosis, AvgVariance, SingularityKind,
};
use spinsense_core::states::{
    balanced_state, basis_state, coherent_state, king_state, noon_state, random_state, BlochPoint,
    SpinState,
};
use spinsense_core::su2::{
    generator_frame, make_operators, numerical_generator, rotation_unitary,
    spherical_from_cartesian_jacobian, HalfInt, ParamIndex, Parametrization, RotationParams,
};
use spinsense_core::two_mode::{
    block_constellations, coherent_plus_squeezed, decompose, great_circle_fit, required_n_max,
    two_mode_coherent,
};
use spinsense_core::Error;

struct Check {
    what: String,
    ok: bool,
    known: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn check(&mut self, what: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            what: what.into(),
            ok,
            known: false,
            detail: detail.into(),
        });
    }

    /// A check expected to fail for a documented reason.
    fn known(&mut self, what: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            what: what.into(),
            ok,
            known: true,
            detail: detail.into(),
        });
    }
}

fn max_err(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).abs().max()
}

fn spin(twice: u32) -> HalfInt {
    HalfInt::from_twice(twice)
}

fn params(x: [f64; 3]) -> RotationParams {
    RotationParams::new(x[0], x[1], x[2]).expect("parameters in range")
}

fn dmat(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, k| m[(i, k)])
}

fn m3(m: &DMatrix<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, k| m[(i, k)])
}

fn closed_forms() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let mut worst = [0.0f64; 5];
    let mut counts = [0usize; 5];
    let mut noon_low = Vec::new();
    for twice in 1..=20u32 {
        let j = spin(twice);
        let jv = j.value();
        for (polar, azimuth) in [
            (0.0, 0.0),
            (PI, 0.0),
            (0.7, -1.3),
            (2.2, 2.9),
            (FRAC_PI_2, 0.4),
        ] {
            let point = BlochPoint::new(polar, azimuth).unwrap();
            let n = point.unit_vector();
            let expected = (Matrix3::identity() - n * n.transpose()) * (jv / 2.0);
            worst[0] = worst[0].max(max_err(
                &cov_matrix(&coherent_state(j, &point)).c,
                &expected,
            ));
            counts[0] += 1;
        }
        for i in 0..j.dim() {
            let m = j.m_at(i);
            let side = (jv * (jv + 1.0) - m * m) / 2.0;
            let expected = Matrix3::from_diagonal(&Vector3::new(side, side, 0.0));
            worst[1] = worst[1].max(max_err(
                &cov_matrix(&basis_state(j, m).unwrap()).c,
                &expected,
            ));
            counts[1] += 1;
        }
        let noon = cov_matrix(&noon_state(j)).c;
        let printed = Matrix3::from_diagonal(&Vector3::new(jv / 2.0, jv / 2.0, jv * jv));
        if twice >= 3 {
            worst[2] = worst[2].max(max_err(&noon, &printed));
            counts[2] += 1;
        } else {
            let ops = common::spin_matrices(twice);
            let oracle = common::covariance(&ops, noon_state(j).amps());
            noon_low.push((jv, max_err(&noon, &oracle), max_err(&noon, &printed)));
        }
        let mut m = if j.is_integer() { 2.0 } else { 1.5 };
        while m <= jv {
            let side = (jv * jv + jv - m * m) / 2.0;
            let expected = Matrix3::from_diagonal(&Vector3::new(side, side, m * m));
            worst[3] = worst[3].max(max_err(
                &cov_matrix(&balanced_state(j, m).unwrap()).c,
                &expected,
            ));
            counts[3] += 1;
            m += 1.0;
        }
    }
    let four = Matrix3::identity() * 4.0;
    for state in [
        balanced_state(spin(6), 2.0).unwrap(),
        king_state(spin(6)).unwrap(),
    ] {
        worst[4] = worst[4].max(max_err(&cov_matrix(&state).c, &four));
        counts[4] += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    for (k, name) in [
        "coherent",
        "|Jm>",
        "NOON (J >= 3/2)",
        "balanced (m >= 3/2)",
        "King J=3",
    ]
    .iter()
    .enumerate()
    {
        c.check(
            *name,
            worst[k] <= 1e-10,
            format!("{} states, max error {:.1e}", counts[k], worst[k]),
        );
    }
    for (jv, vs_oracle, vs_printed) in noon_low {
        c.check(
            format!("NOON J={jv} against direct covariance"),
            vs_oracle <= 1e-10,
            format!("max error {vs_oracle:.1e}"),
        );
        c.known(
            format!("NOON J={jv} against diag(J/2, J/2, J^2)"),
            vs_printed <= 1e-10,
            format!("max error {vs_printed:.2}: J_+^2 couples the two branches when 2J <= 2"),
        );
    }
    c.check("runtime < 1 s", elapsed < 1.0, format!("{elapsed:.3} s"));
    c
}

fn bound_suite() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    for twice in [2u32, 4, 6, 10] {
        let j = spin(twice);
        let bound = 9.0 / j.casimir();
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0 + twice as u64);
        let mut violations = 0;
        let mut closest = f64::INFINITY;
        for _ in 0..1000 {
            let tr = cov_matrix(&random_state(j, &mut rng))
                .trace_inverse()
                .unwrap_or(f64::INFINITY);
            if tr < bound - 1e-10 {
                violations += 1;
            }
            closest = closest.min(tr / bound);
        }
        c.check(
            format!("Haar J={}", j.value()),
            violations == 0,
            format!("{violations} violations in 1000, min Tr C^-1 / bound = {closest:.4}"),
        );
    }
    let king = cov_matrix(&king_state(spin(6)).unwrap())
        .trace_inverse()
        .unwrap_or(f64::NAN);
    c.check(
        "King J=3 attains 0.75",
        (king - 0.75).abs() <= 1e-8,
        format!("Tr C^-1 = {king:.12}"),
    );
    let elapsed = start.elapsed().as_secs_f64();
    c.check("runtime < 10 s", elapsed < 10.0, format!("{elapsed:.2} s"));
    c
}

fn generator_suite() -> Criterion {
    let mut c = Criterion::default();
    let mut stream = Stream::new(3);
    let (mut vs_numerical, mut vs_oracle, mut norms, mut ortho) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    for t in 0..100u32 {
        let twice = 1 + t % 6;
        let j = spin(twice);
        let x = [
            stream.range(0.0, 2.0 * PI),
            stream.range(0.0, PI),
            stream.range(0.0, 2.0 * PI),
        ];
        let p = params(x);
        let ops = make_operators(j);
        let oracle_ops = common::spin_matrices(twice);
        let frame = generator_frame(&p);
        let r0 = common::rotation(&oracle_ops, x);
        for k in [ParamIndex::Theta, ParamIndex::CapTheta, ParamIndex::CapPhi] {
            let analytic = ops.along(&frame.get(k));
            match numerical_generator(j, &p, k) {
                Ok(g) => {
                    vs_numerical = vs_numerical.max(
                        (&g - &analytic)
                            .iter()
                            .map(|z| z.norm())
                            .fold(0.0, f64::max),
                    )
                }
                Err(_) => failures += 1,
            }
            let h = 1e-5;
            let (mut up, mut down) = (x, x);
            up[k.index()] += h;
            down[k.index()] -= h;
            let fd = (common::rotation(&oracle_ops, up) - common::rotation(&oracle_ops, down))
                * cx(0.0, 1.0 / (2.0 * h))
                * r0.adjoint();
            vs_oracle = vs_oracle.max(
                (&fd - &analytic)
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max),
            );
        }
        let s = (0.5 * x[0]).sin();
        norms = norms
            .max((frame.g_theta.norm() - 1.0).abs())
            .max((frame.g_cap_theta.norm() - 2.0 * s.abs()).abs())
            .max((frame.g_cap_phi.norm() - 2.0 * (s * x[1].sin()).abs()).abs());
        ortho = ortho
            .max(frame.g_theta.dot(&frame.g_cap_theta).abs())
            .max(frame.g_theta.dot(&frame.g_cap_phi).abs())
            .max(frame.g_cap_theta.dot(&frame.g_cap_phi).abs());
    }
    c.check(
        "analytic vs numerical_generator",
        failures == 0 && vs_numerical <= 1e-7,
        format!(
            "100 triples, J <= 3, max error {vs_numerical:.1e}, {failures} route disagreements"
        ),
    );
    c.check(
        "analytic vs finite-difference oracle",
        vs_oracle <= 1e-7,
        format!("max error {vs_oracle:.1e}"),
    );
    c.check(
        "norm identities",
        norms <= 1e-10,
        format!("max error {norms:.1e}"),
    );
    c.check(
        "orthogonality",
        ortho <= 1e-10,
        format!("max |g_i . g_k| {ortho:.1e}"),
    );
    c
}

fn qfi_equivalence() -> Criterion {
    let mut c = Criterion::default();
    let mut stream = Stream::new(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for t in 0..20u32 {
        let twice = 1 + t % 8;
        let probe = random_state(spin(twice), &mut rng);
        let x = stream.params();
        let ops = common::spin_matrices(twice);
        let oracle = common::fd_qfi(|y| common::rotated(&ops, probe.amps(), y), x, 1e-5);
        worst = worst.max(max_err(
            &m3(&qfi_rotation_matrix(&probe, &params(x)).q),
            &oracle,
        ));
    }
    c.check(
        "finite-difference QFI",
        worst <= 1e-6,
        format!("20 pairs, J <= 4, max error {worst:.1e}"),
    );

    for (name, probe) in [
        ("King J=3", king_state(spin(6)).unwrap()),
        ("random J=2", random_state(spin(4), &mut rng)),
    ] {
        let (cap_theta, cap_phi) = (1.0, 0.5);
        let f = |theta: f64| {
            qfi_rotation_matrix(&probe, &params([theta, cap_theta, cap_phi])).det()
                / (theta.powi(4) * cap_theta.sin().powi(2))
        };
        let h = [0.1, 0.05, 0.025].map(f);
        let r1 = (4.0 * h[1] - h[0]) / 3.0;
        let r2 = (4.0 * h[2] - h[1]) / 3.0;
        let drift = (r1 - r2).abs() / r2.abs();
        let expected = 64.0
            * common::covariance(&common::spin_matrices(probe.j().twice()), probe.amps())
                .determinant();
        c.check(
            format!("det Q / (theta^4 sin^2 Theta) limit, {name}"),
            drift < 0.01 && (r2 - expected).abs() <= 1e-6 * expected.abs().max(1.0),
            format!("Richardson {r1:.6} -> {r2:.6}, drift {drift:.1e}, 64 det C = {expected:.6}"),
        );
    }
    c
}

fn average_axis() -> Criterion {
    let mut c = Criterion::default();
    for jv in [1u32, 2, 4, 8] {
        let s = (2.0 * jv as f64 - 1.0).sqrt();
        let target = s.atan() / (2.0 * jv as f64 * s);
        let got = avg_variance(&noon_state(spin(2 * jv)));
        let detail = format!("target {target:.9}, got {got:?}");
        let ok = matches!(got, AvgVariance::Finite { value, .. } if (value - target).abs() <= 1e-6);
        if jv == 1 {
            c.known(
                "NOON J=1",
                ok,
                format!("{detail}: C is singular at J=1, so the average diverges"),
            );
        } else {
            c.check(format!("NOON J={jv}"), ok, detail);
        }
    }
    let mut divergent = 0;
    let mut total = 0;
    for twice in 1..=8u32 {
        let j = spin(twice);
        for i in 0..j.dim() {
            total += 1;
            if avg_variance(&basis_state(j, j.m_at(i)).unwrap()) == AvgVariance::Divergent {
                divergent += 1;
            }
        }
    }
    c.check(
        "basis states divergent",
        divergent == total,
        format!("{divergent} of {total}"),
    );
    let king = avg_variance(&king_state(spin(6)).unwrap());
    let ok =
        matches!(king, AvgVariance::Finite { value, .. } if (value - 1.0 / 16.0).abs() <= 1e-6);
    c.check("King J=3 = 1/16", ok, format!("{king:?}"));
    c
}

fn saturation() -> Criterion {
    let mut c = Criterion::default();
    let king = king_state(spin(6)).unwrap();
    let mut stream = Stream::new(6);
    let mut worst = 0.0f64;
    let mut failed = 0;
    for _ in 0..10 {
        let p = params(stream.params());
        let q = qfi_rotation_matrix(&king, &p).q;
        // the anchor sits on the true state only in the limit; average both sides of it
        let fi = |offset: f64| -> Option<DMatrix<f64>> {
            let pvm = displaced_pvm(&king, &p, offset).ok()?;
            let model = RotationModel::new(&king, &pvm, Parametrization::Spherical).ok()?;
            classical_fi(&model, &p.as_array()).ok()
        };
        match (fi(1e-4), fi(-1e-4)) {
            (Some(a), Some(b)) => worst = worst.max(((a + b) * 0.5 - &q).abs().max()),
            _ => failed += 1,
        }
    }
    c.check(
        "classical FI of the optimal PVM = QFI",
        failed == 0 && worst <= 1e-5,
        format!("10 generic points, max entry error {worst:.1e}"),
    );

    let ops = common::spin_matrices(6);
    let x = stream.params();
    let psi: CVec = king
        .apply(&rotation_unitary(spin(6), &params(x)))
        .amps()
        .clone();
    let n = common::axis(1.2, -0.7);
    for eps in [1e-2, 1e-3] {
        let kicked = common::expm(&(common::along(&ops, &n) * cx(0.0, -eps))) * &psi;
        let p0 = psi.dotc(&kicked).norm_sqr();
        let residual = (p0 - (1.0 - eps * eps * 12.0 / 3.0)).abs();
        c.check(
            format!("p0 expansion at eps={eps:e}"),
            residual <= eps.powi(3),
            format!("residual {residual:.2e} (eps^3 = {:.0e})", eps.powi(3)),
        );
    }
    c
}

fn monte_carlo() -> Criterion {
    let mut c = Criterion::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool");
    let start = Instant::now();
    let truth = params([0.8, 1.0, 0.5]);
    let cfg = MonteCarloConfig::new(10_000, 500, 20240611);
    let run = |probe: &SpinState| {
        pool.install(|| monte_carlo_qcrb(probe, &truth, &Scheme::OptimalPvm, &cfg))
    };
    let king = run(&king_state(spin(6)).unwrap());
    let noon = run(&noon_state(spin(6)));
    let elapsed = start.elapsed().as_secs_f64();
    match (&king, &noon) {
        (Ok(k), Ok(n)) => {
            c.check(
                "King Tr(cov) <= 1.15 Tr(QCRB)",
                k.trace_ratio <= 1.15,
                format!(
                    "Tr empirical {:.4e}, Tr QCRB {:.4e}, ratio {:.3}",
                    k.empirical_trace(),
                    k.bound_trace(),
                    k.trace_ratio
                ),
            );
            c.check(
                "King above QCRB - 3 sigma",
                k.respects_bound(),
                format!(
                    "min excess eigenvalue {:.2e}, tolerance {:.2e}",
                    k.min_excess_eigenvalue, k.psd_tolerance
                ),
            );
            c.check(
                "NOON worse than King",
                n.empirical_trace() > k.empirical_trace(),
                format!(
                    "NOON Tr empirical {:.4e} (ratio to its own bound {:.3})",
                    n.empirical_trace(),
                    n.trace_ratio
                ),
            );
        }
        _ => c.check(
            "runs complete",
            false,
            format!("king {:?}, noon {:?}", king.err(), noon.err()),
        ),
    }
    c.check(
        "runtime < 5 min single-threaded",
        elapsed < 300.0,
        format!("{elapsed:.1} s"),
    );
    c
}

fn generic_state() -> SpinState {
    let amps = [
        (0.000394688, 0.409134),
        (0.0324599, 0.0448131),
        (0.494021, 0.484609),
        (0.483644, 0.114779),
        (0.100279, 0.305783),
    ];
    let v = CVec::from_iterator(5, amps.iter().map(|&(re, im)| Complex64::new(re, im)));
    SpinState::from_amplitudes(spin(4), v).unwrap()
}

fn points(raw: &[(f64, f64)]) -> Vec<BlochPoint> {
    raw.iter()
        .map(|&(a, b)| BlochPoint::new(a, b).unwrap())
        .collect()
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn husimi_gps() -> Criterion {
    let mut c = Criterion::default();
    let probe = generic_state();
    let j = probe.j();
    let truth = params([1.1, 0.9, 2.3]);
    let true_state = probe.apply(&rotation_unitary(j, &truth));
    let shots = 100_000;
    let records = |models: &[MeasurementModel], trial: u64| -> Vec<ShotRecord> {
        models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                simulate_shots(m, &true_state, shots, trial_seed(8, trial * 8 + i as u64))
            })
            .collect()
    };

    let design = husimi_design(
        j,
        &points(&[(0.7, 0.3), (1.9, 1.4), (2.3, -2.2), (1.2, -1.0)]),
    )
    .unwrap();
    let cond = design_fisher(
        &probe,
        &design,
        &[shots; 4],
        &truth,
        Parametrization::Spherical,
    )
    .map(|f| f.symmetric_eigenvalues())
    .map(|e| e.max() / e.min())
    .unwrap_or(f64::INFINITY);
    let zs: Vec<Result<f64, Error>> = (0..100u64)
        .into_par_iter()
        .map(|trial| {
            let fit = ml_estimate(
                &probe,
                &design,
                &records(&design, trial),
                &MlOptions::default(),
            )?;
            let jac = spherical_from_cartesian_jacobian(&fit.params)?;
            let inv = fit
                .fisher_cartesian
                .try_inverse()
                .ok_or(Error::Singular { rank: 2, dim: 3 })?;
            let cov = jac * inv * jac.transpose();
            let (est, tru) = (fit.params.as_array(), truth.as_array());
            let diff = [est[0] - tru[0], est[1] - tru[1], wrap(est[2] - tru[2])];
            Ok((0..3)
                .map(|k| diff[k].abs() / cov[(k, k)].sqrt())
                .fold(0.0, f64::max))
        })
        .collect();
    let flagged = zs.iter().filter(|z| z.is_err()).count();
    let z: Vec<f64> = zs.iter().filter_map(|z| z.as_ref().ok().copied()).collect();
    let beyond3 = z.iter().filter(|&&v| v > 3.0).count();
    let worst = z.iter().copied().fold(0.0, f64::max);
    c.check(
        "4 directions, 100 trials within 3 SE",
        flagged == 0 && beyond3 <= 3 && worst <= 5.0,
        format!("{beyond3} trials beyond 3 SE (allowed 3), worst {worst:.2} SE, {flagged} flagged, design condition {cond:.0}"),
    );

    let clustered = points(&[(1.0, -1.7), (0.6, -0.3), (0.9, -0.3)]);
    let three = husimi_models(j, &clustered).unwrap();
    let flagged: usize = (0..10u64)
        .into_par_iter()
        .map(|trial| {
            matches!(
                ml_estimate(
                    &probe,
                    &three,
                    &records(&three, trial),
                    &MlOptions::default()
                ),
                Err(Error::NonIdentifiable(_))
            ) as usize
        })
        .sum();
    c.check(
        "3 directions flagged non-identifiable",
        flagged == 10,
        format!("{flagged} of 10 trials flagged"),
    );
    c.check(
        "3-direction design rejected",
        matches!(husimi_design(j, &clustered), Err(Error::Domain(_))),
        "husimi_design needs 4 directions",
    );
    c
}

fn two_mode() -> Criterion {
    let mut c = Criterion::default();
    match two_mode_coherent(cx(2.0, 0.0), cx(1.0, 0.0), 40) {
        Ok(s) => {
            let err = max_err(&s.cov().c, &(Matrix3::identity() * 1.25));
            c.check(
                "two-mode coherent(2, 1) C = 1.25 I",
                err <= 1e-6,
                format!("n_max 40, max error {err:.1e}"),
            );
        }
        Err(e) => c.check("two-mode coherent(2, 1) C = 1.25 I", false, e.to_string()),
    }

    let lambda: f64 = 0.9;
    let (alpha, xi) = (cx((4.0 * lambda).sqrt(), 0.0), cx(lambda.atanh(), 0.0));
    let state = coherent_plus_squeezed(alpha, xi, required_n_max(alpha, xi));
    match state.and_then(|s| block_constellations(&decompose(&s), &[4, 9, 14, 19])) {
        Ok(blocks) => {
            let residual = blocks
                .iter()
                .map(|b| {
                    great_circle_fit(&b.stars.iter().map(|p| p.unit_vector()).collect::<Vec<_>>()).1
                })
                .fold(0.0, f64::max);
            c.check(
                "great-circle stars, N = 4, 9, 14, 19",
                residual <= 1e-6,
                format!("max plane residual {residual:.1e}"),
            );
        }
        Err(e) => c.check("great-circle stars, N = 4, 9, 14, 19", false, e.to_string()),
    }

    // |α|² = sinh²|ξ| = 30 gives J_a = J_b = 15
    let jb = 15.0;
    let printed = [jb / 2.0, 4.0 * jb * jb, 2.0 * jb * jb];
    for (sign, order, label) in [
        (-1.0, [0, 1, 2], "xi < 0"),
        (1.0, [1, 0, 2], "xi > 0, x and y exchanged"),
    ] {
        let alpha = cx(30f64.sqrt(), 0.0);
        let xi = cx(sign * 30f64.sqrt().asinh(), 0.0);
        match coherent_plus_squeezed(alpha, xi, required_n_max(alpha, xi)) {
            Ok(s) => {
                let cm = s.cov().c;
                let diag = [cm[(0, 0)], cm[(1, 1)], cm[(2, 2)]];
                let rel = (0..3)
                    .map(|k| (diag[k] - printed[order[k]]).abs() / printed[order[k]])
                    .fold(0.0, f64::max);
                let off = (cm - Matrix3::from_diagonal(&cm.diagonal())).abs().max();
                c.check(
                    format!("asymptotic diag(J_b/2, 4 J_a J_b, 2 J_b^2), {label}"),
                    rel <= 0.10 && off <= 1e-6 * diag[1],
                    format!(
                        "diag ({:.2}, {:.1}, {:.1}), max relative error {rel:.3}",
                        diag[0], diag[1], diag[2]
                    ),
                );
            }
            Err(e) => c.check(format!("asymptotic form, {label}"), false, e.to_string()),
        }
    }
    c
}

fn diagnostics() -> Criterion {
    let mut c = Criterion::default();
    let mut stream = Stream::new(10);
    let twice = 6;
    let ops = common::spin_matrices(twice);
    let coherent = coherent_state(spin(twice), &BlochPoint::new(0.4, 1.0).unwrap());
    let (mut ranks, mut kinds, mut null_leak, mut other_min) =
        (Vec::new(), 0, 0.0f64, f64::INFINITY);
    for _ in 0..5 {
        let x = stream.params();
        let p = params(x);
        let q = qfi_rotation_matrix(&coherent, &p);
        ranks.push(q.rank);
        kinds += (singular_diagnosis(&coherent, &p, Parametrization::Spherical).kind
            == SingularityKind::State) as usize;
        // the state must not move, to first order, along the reported null direction
        let leak = |v: &[f64]| {
            let f = |t: f64| {
                common::rotated(
                    &ops,
                    coherent.amps(),
                    [x[0] + t * v[0], x[1] + t * v[1], x[2] + t * v[2]],
                )
            };
            let h = 1e-5;
            let psi = f(0.0);
            let d = (f(h) - f(-h)) * cx(1.0 / (2.0 * h), 0.0);
            let perp = &d - &psi * psi.dotc(&d);
            perp.norm()
        };
        for v in &q.null_basis {
            null_leak = null_leak.max(leak(v.as_slice()));
        }
        for k in 0..3 {
            let mut e = [0.0; 3];
            e[k] = 1.0;
            if q.null_basis.iter().all(|v| v[k].abs() < 0.9) {
                other_min = other_min.min(leak(&e));
            }
        }
    }
    c.check(
        "coherent probe: persistent rank 2",
        ranks.iter().all(|&r| r == 2) && kinds == 5,
        format!("ranks {ranks:?}, {kinds} of 5 classified as state-limited"),
    );
    c.check(
        "coherent probe: null direction",
        null_leak <= 1e-6 && other_min > 0.1,
        format!(
            "|P_perp d psi| along null {null_leak:.1e}, along resolvable axes >= {other_min:.2}"
        ),
    );

    let king = king_state(spin(twice)).unwrap();
    let zero = params([0.0, 1.0, 0.5]);
    let spherical = qfi_rotation_matrix(&king, &zero);
    let diagnosis = singular_diagnosis(&king, &zero, Parametrization::Spherical);
    c.check(
        "theta = 0 is a coordinate singularity",
        spherical.rank < 3 && diagnosis.kind == SingularityKind::Coordinate,
        format!(
            "spherical rank {}, nearby ranks {:?}",
            spherical.rank, diagnosis.perturbed_ranks
        ),
    );
    let cartesian = qfi_rotation_matrix_in(&king, &zero, Parametrization::Cartesian);
    let oracle = common::fd_qfi(
        |w| {
            common::expm(&(common::along(&ops, &Vector3::new(w[0], w[1], w[2])) * cx(0.0, -1.0)))
                * king.amps()
        },
        [0.0; 3],
        1e-5,
    );
    let err = max_err(&m3(&cartesian.q), &oracle);
    c.check(
        "Cartesian QFI at theta = 0",
        cartesian.rank == 3 && err <= 1e-6,
        format!(
            "rank {}, max error against finite differences {err:.1e}",
            cartesian.rank
        ),
    );
    let mut worst = 0.0f64;
    let mut ranks = Vec::new();
    for theta in [1e-2, 1e-3, 1e-4] {
        let p = params([theta, 1.0, 0.5]);
        let jac = dmat(&spherical_from_cartesian_jacobian(&p).unwrap());
        let labels = Parametrization::Cartesian
            .labels()
            .iter()
            .map(|s| s.to_string())
            .collect();
        let repaired = reparametrize(&qfi_rotation_matrix(&king, &p), &jac, labels).unwrap();
        let direct = qfi_rotation_matrix_in(&king, &p, Parametrization::Cartesian);
        worst = worst.max((&repaired.q - &direct.q).abs().max() / direct.q.abs().max());
        ranks.push(repaired.rank);
    }
    c.check(
        "reparametrized spherical QFI repairs the rank",
        ranks.iter().all(|&r| r == 3) && worst <= 1e-8,
        format!("ranks {ranks:?} at theta = 1e-2, 1e-3, 1e-4; relative gap to direct Cartesian {worst:.1e}"),
    );
    c
}

type Suite = fn() -> Criterion;

fn main() {
    let criteria: [(&str, Suite); 10] = [
        ("closed-form covariances", closed_forms),
        ("Tr C^-1 bound", bound_suite),
        ("generators", generator_suite),
        ("QFI equivalence", qfi_equivalence),
        ("axis-averaged variance", average_axis),
        ("optimal PVM saturation", saturation),
        ("Monte Carlo saturation", monte_carlo),
        ("Husimi orientation", husimi_gps),
        ("two-mode states", two_mode),
        ("singular QFI diagnostics", diagnostics),
    ];
    let mut unexpected = 0;
    for (n, (title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let pass = result.checks.iter().all(|ch| ch.ok);
        let known_only = result.checks.iter().all(|ch| ch.ok || ch.known);
        let verdict = if pass {
            "PASS"
        } else if known_only {
            "FAIL (known)"
        } else {
            "FAIL"
        };
        println!(
            "criterion {:>2} {verdict}: {title} [{:.2} s]",
            n + 1,
            start.elapsed().as_secs_f64()
        );
        for ch in &result.checks {
            let mark = match (ch.ok, ch.known) {
                (true, _) => "ok  ",
                (false, true) => "red ",
                (false, false) => "FAIL",
            };
            println!("    {mark} {}: {}", ch.what, ch.detail);
        }
        unexpected += result
            .checks
            .iter()
            .filter(|ch| !ch.ok && !ch.known)
            .count();
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance checks failed");
        std::process::exit(1);
    }
}
