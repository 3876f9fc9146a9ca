use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde_json::json;
use spinsense_core::estimation::monte_carlo_qcrb;
use spinsense_core::majorana::{constellation as stars_of, husimi_grid};
use spinsense_core::metrology::{
    cov_matrix, crb as crb_bound, pseudo_bound, qfi_from_cov, qfi_rotation_matrix_in,
    singular_diagnosis, QfiMatrix, SingularityKind,
};
use spinsense_core::states::{
    balanced_state, basis_state, cat_state, coherent_state, king_state, noon_state, BlochPoint,
    SpinState,
};
use spinsense_core::su2::{Parametrization, RotationParams};
use spinsense_core::two_mode::{
    block_constellations, coherent_plus_squeezed, decompose, required_n_max, two_mode_coherent,
    TwoModeState,
};

use crate::config::{half_int, ExperimentConfig};
use crate::error::CliError;
use crate::io::{emit, read_state, to_json, LoadedState};
use crate::{
    ConstellationArgs, CrbArgs, Family, HusimiArgs, QfiArgs, RotationArgs, SimulateArgs, StateArgs,
    TableFormat,
};

/// Human-readable summaries go to stdout when the data has its own file, otherwise to stderr.
fn note(text: &str, data_in_file: bool) {
    if data_in_file {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

fn need<T: Copy>(value: Option<T>, flag: &str, family: Family) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("{family:?} states need --{flag}")))
}

pub fn state(a: &StateArgs) -> Result<(), CliError> {
    let f = a.family;
    let loaded = match f {
        Family::TwoModeCoherent => {
            let alpha = need(a.alpha, "alpha", f)?;
            let beta = a.beta.unwrap_or_default();
            let zero = Complex64::default();
            let n_max = a
                .n_max
                .unwrap_or_else(|| required_n_max(alpha, zero).max(required_n_max(beta, zero)));
            LoadedState::TwoMode(two_mode_coherent(alpha, beta, n_max)?)
        }
        Family::CoherentSqueezed => {
            let alpha = need(a.alpha, "alpha", f)?;
            let xi = need(a.xi, "xi", f)?;
            let n_max = a.n_max.unwrap_or_else(|| required_n_max(alpha, xi));
            LoadedState::TwoMode(coherent_plus_squeezed(alpha, xi, n_max)?)
        }
        _ => {
            let j = half_int(need(a.j, "j", f)?)?;
            LoadedState::Spin(match f {
                Family::Basis => basis_state(j, need(a.m, "m", f)?)?,
                Family::Coherent => coherent_state(
                    j,
                    &BlochPoint::new(need(a.polar, "polar", f)?, need(a.azimuth, "azimuth", f)?)?,
                ),
                Family::Noon => noon_state(j),
                Family::Cat => cat_state(j, need(a.z, "z", f)?)?,
                Family::Balanced => balanced_state(j, need(a.m, "m", f)?)?,
                _ => king_state(j)?,
            })
        }
    };
    let in_file = a.out.is_some();
    match &loaded {
        LoadedState::Spin(s) => {
            let s = s.clone().canonical();
            emit(&to_json(&s.to_json()), a.out.as_deref())?;
            let mean = cov_matrix(&s).mean;
            note(
                &format!(
                    "J = {}  norm = {:.12}  <J> = ({:.6}, {:.6}, {:.6})\n",
                    s.j().value(),
                    s.amps().norm(),
                    mean[0],
                    mean[1],
                    mean[2]
                ),
                in_file,
            );
        }
        LoadedState::TwoMode(t) => {
            emit(&to_json(&t.to_json()), a.out.as_deref())?;
            let mean = t.cov().mean;
            let (na, nb) = t.mean_photons();
            note(
                &format!(
                    "norm = {:.12}  neglected = {:.3e}  <n_a> = {na:.6}  <n_b> = {nb:.6}  <J> = ({:.6}, {:.6}, {:.6})\n",
                    t.norm_sqr().sqrt(),
                    t.neglected(),
                    mean[0],
                    mean[1],
                    mean[2]
                ),
                in_file,
            );
        }
    }
    Ok(())
}

pub fn constellation(a: &ConstellationArgs) -> Result<(), CliError> {
    let csv = match a.format {
        Some(f) => f == TableFormat::Csv,
        None => a
            .out
            .as_ref()
            .is_some_and(|p| p.extension().is_some_and(|e| e == "csv")),
    };
    let text = match read_state(&a.state)? {
        LoadedState::Spin(s) => {
            let c = stars_of(&s)?;
            if csv {
                let mut t = String::from("polar,azimuth,multiplicity\n");
                for star in &c.stars {
                    writeln!(
                        t,
                        "{:.16e},{:.16e},{}",
                        star.polar, star.azimuth, star.multiplicity
                    )
                    .unwrap();
                }
                t
            } else {
                to_json(&c)
            }
        }
        LoadedState::TwoMode(t) => {
            if csv {
                return Err(CliError::Usage(
                    "two-mode constellations are exported as JSON only".into(),
                ));
            }
            to_json(&block_constellations(&decompose(&t), &a.blocks)?)
        }
    };
    emit(&text, a.out.as_deref())
}

fn block_state(t: &TwoModeState, block: Option<usize>) -> Result<SpinState, CliError> {
    let n = block.ok_or_else(|| CliError::Usage("two-mode states need --block N".into()))?;
    decompose(t)
        .component(n)
        .map(|c| c.state.clone())
        .ok_or_else(|| CliError::Usage(format!("the N = {n} block is empty")))
}

pub fn husimi(a: &HusimiArgs) -> Result<(), CliError> {
    let state = match read_state(&a.state)? {
        LoadedState::Spin(s) => s,
        LoadedState::TwoMode(t) => block_state(&t, a.block)?,
    };
    let grid = husimi_grid(&state, a.n_polar, a.n_azimuth)?;
    emit(&grid.to_csv(), a.out.as_deref())
}

fn rotation(r: &RotationArgs) -> Result<(RotationParams, Parametrization), CliError> {
    Ok((
        RotationParams::new(r.theta, r.cap_theta, r.cap_phi)?,
        r.parametrization.into(),
    ))
}

fn qfi_of(state: &LoadedState, p: &RotationParams, param: Parametrization) -> QfiMatrix {
    match state {
        LoadedState::Spin(s) => qfi_rotation_matrix_in(s, p, param),
        LoadedState::TwoMode(t) => qfi_from_cov(&t.cov(), p, param),
    }
}

fn matrix_table(labels: &[String], rows: &[Vec<f64>]) -> String {
    let mut t = format!("{:>10}", "");
    for l in labels {
        write!(t, "{l:>16}").unwrap();
    }
    t.push('\n');
    for (l, row) in labels.iter().zip(rows) {
        write!(t, "{l:>10}").unwrap();
        for v in row {
            write!(t, "{v:>16.8e}").unwrap();
        }
        t.push('\n');
    }
    t
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Explains a rank deficit; spin states are classified by probing nearby parameter points.
fn diagnose(
    state: &LoadedState,
    p: &RotationParams,
    param: Parametrization,
    fi: &QfiMatrix,
) -> (String, serde_json::Value) {
    let mut t = format!(
        "warning: QFI is singular (rank {} of {})\n",
        fi.rank,
        fi.dim()
    );
    for v in &fi.null_basis {
        let parts: Vec<String> = fi
            .labels
            .iter()
            .zip(v.iter())
            .map(|(l, x)| format!("{x:+.6} {l}"))
            .collect();
        writeln!(t, "  inestimable combination: {}", parts.join(" ")).unwrap();
    }
    let json = match state {
        LoadedState::Spin(s) => {
            let report = singular_diagnosis(s, p, param);
            match report.kind {
                SingularityKind::Coordinate => t.push_str(
                    "  coordinate singularity: the rank recovers nearby; use --parametrization cartesian at this point\n",
                ),
                SingularityKind::State => {
                    t.push_str("  the probe itself cannot resolve these directions at any nearby rotation\n")
                }
                SingularityKind::FullRank => {}
            }
            report.to_json()
        }
        LoadedState::TwoMode(_) => {
            let (pinv, trace) = pseudo_bound(fi);
            json!({ "rank": fi.rank, "dim": fi.dim(), "pinv": rows_of(&pinv), "trace_pinv": trace })
        }
    };
    (t, json)
}

pub fn qfi(a: &QfiArgs) -> Result<(), CliError> {
    let state = read_state(&a.state)?;
    let (p, param) = rotation(&a.rotation)?;
    let fi = qfi_of(&state, &p, param);
    let fj = fi.to_json();
    let mut table = matrix_table(&fj.labels, &fj.matrix);
    writeln!(
        table,
        "rank = {}  det = {:.8e}  cond = {:.6e}",
        fi.rank, fj.det, fj.cond
    )
    .unwrap();
    let mut out = serde_json::to_value(&fj).expect("serializable");
    if fi.is_singular() {
        let (text, diagnosis) = diagnose(&state, &p, param, &fi);
        table.push_str(&text);
        let (pinv, trace) = pseudo_bound(&fi);
        writeln!(
            table,
            "Tr Q^+ = {trace:.10e} (pseudoinverse: bound on the estimable block only)"
        )
        .unwrap();
        out["diagnosis"] = diagnosis;
        if a.inverse {
            out["pseudoinverse"] = json!(rows_of(&pinv));
        }
    } else {
        let inv = fi.inverse()?;
        writeln!(table, "Tr Q^-1 = {:.10e}", inv.trace()).unwrap();
        if a.inverse {
            out["inverse"] = json!(rows_of(&inv));
        }
    }
    emit(&to_json(&out), a.out.as_deref())?;
    print!("{table}");
    Ok(())
}

pub fn crb(a: &CrbArgs) -> Result<(), CliError> {
    if a.shots == 0 {
        return Err(CliError::Usage("--shots must be positive".into()));
    }
    let state = read_state(&a.state)?;
    let (p, param) = rotation(&a.rotation)?;
    let fi = qfi_of(&state, &p, param);
    if fi.is_singular() {
        let (text, diagnosis) = diagnose(&state, &p, param, &fi);
        eprint!("{text}");
        eprintln!("{}", to_json(&diagnosis).trim_end());
        return Err(CliError::Infeasible(
            "no finite Cramér-Rao bound at these parameters".into(),
        ));
    }
    let bound = crb_bound(&fi, a.shots)?;
    let out = json!({
        "labels": fi.labels,
        "n_shots": a.shots,
        "cov": rows_of(&bound.cov),
        "trace": bound.trace,
    });
    emit(&to_json(&out), a.out.as_deref())?;
    let mut table = matrix_table(&fi.labels, &rows_of(&bound.cov));
    writeln!(
        table,
        "Tr bound = {:.10e}  ({} shots)",
        bound.trace, a.shots
    )
    .unwrap();
    note(&table, a.out.is_some());
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let exp = cfg.validate(base)?;
    let fi = qfi_rotation_matrix_in(&exp.probe, &exp.truth, Parametrization::Spherical);
    if fi.is_singular() {
        let state = LoadedState::Spin(exp.probe.clone());
        let (text, diagnosis) = diagnose(&state, &exp.truth, Parametrization::Spherical, &fi);
        eprint!("{text}");
        eprintln!("{}", to_json(&diagnosis).trim_end());
        return Err(CliError::Infeasible(
            "the true parameters sit on a QFI singularity".into(),
        ));
    }
    let report = monte_carlo_qcrb(&exp.probe, &exp.truth, &exp.scheme, &exp.monte_carlo)?;
    let out = a.out.clone().or(exp.output);
    emit(&to_json(&report.to_json()), out.as_deref())?;

    let mut t = format!(
        "trials = {} (failures {})  shots = {}\nTr empirical = {:.6e}  Tr QCRB = {:.6e}  ratio = {:.4}  bound respected: {}\n",
        report.n_trials,
        report.failures,
        report.n_shots,
        report.empirical_trace(),
        report.bound_trace(),
        report.trace_ratio,
        report.respects_bound()
    );
    writeln!(
        t,
        "{:>10}{:>16}{:>16}{:>16}{:>16}",
        "param", "bias^2", "variance", "mse", "qcrb"
    )
    .unwrap();
    for (i, (name, s)) in ["theta", "cap_theta", "cap_phi"]
        .iter()
        .zip(&report.stats)
        .enumerate()
    {
        writeln!(
            t,
            "{name:>10}{:>16.6e}{:>16.6e}{:>16.6e}{:>16.6e}",
            s.bias_sq,
            s.variance,
            s.mse,
            report.crb_bound[(i, i)]
        )
        .unwrap();
    }
    note(&t, out.is_some());
    Ok(())
}
