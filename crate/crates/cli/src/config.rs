//! Experiment configuration files for `spinsense simulate`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use spinsense_core::estimation::{MonteCarloConfig, Scheme};
use spinsense_core::states::{
    balanced_state, basis_state, cat_state, coherent_state, king_state, noon_state, BlochPoint,
    SpinState, StateJson,
};
use spinsense_core::su2::{HalfInt, RotationParams};

use crate::error::CliError;
use crate::io::{read_state, LoadedState};

/// Spin-state families that can be named in a config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    Basis {
        j: f64,
        m: f64,
    },
    Coherent {
        j: f64,
        polar: f64,
        azimuth: f64,
    },
    Noon {
        j: f64,
    },
    Cat {
        j: f64,
        z: [f64; 2],
    },
    Balanced {
        j: f64,
        m: f64,
    },
    King {
        j: f64,
    },
    /// Amplitudes given inline.
    Explicit {
        twice_j: u32,
        amps: Vec<[f64; 2]>,
    },
    /// A state file written by `spinsense state`, relative to the config file.
    File {
        path: PathBuf,
    },
}

pub fn half_int(j: f64) -> Result<HalfInt, CliError> {
    HalfInt::from_f64(j)
        .map_err(|_| CliError::Usage(format!("J = {j} is not a non-negative half-integer")))
}

impl ProbeSpec {
    pub fn build(&self, base: &Path) -> Result<SpinState, CliError> {
        Ok(match self {
            ProbeSpec::Basis { j, m } => basis_state(half_int(*j)?, *m)?,
            ProbeSpec::Coherent { j, polar, azimuth } => {
                coherent_state(half_int(*j)?, &BlochPoint::new(*polar, *azimuth)?)
            }
            ProbeSpec::Noon { j } => noon_state(half_int(*j)?),
            ProbeSpec::Cat { j, z } => cat_state(half_int(*j)?, Complex64::new(z[0], z[1]))?,
            ProbeSpec::Balanced { j, m } => balanced_state(half_int(*j)?, *m)?,
            ProbeSpec::King { j } => king_state(half_int(*j)?)?,
            ProbeSpec::Explicit { twice_j, amps } => SpinState::from_json(&StateJson {
                twice_j: *twice_j,
                amps: amps.clone(),
            })?,
            ProbeSpec::File { path } => match read_state(&base.join(path))? {
                LoadedState::Spin(s) => s,
                LoadedState::TwoMode(_) => {
                    return Err(CliError::Usage(
                        "Monte Carlo probes must be single-spin states".into(),
                    ))
                }
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueParams {
    pub theta: f64,
    pub cap_theta: f64,
    pub cap_phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    OptimalPvm,
    Husimi,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub probe: ProbeSpec,
    pub true_params: TrueParams,
    pub scheme: SchemeName,
    #[serde(default)]
    pub directions: Option<Vec<BlochPoint>>,
    pub n_shots: u64,
    pub n_trials: usize,
    /// Mandatory: runs are never seeded from the clock.
    pub seed: u64,
    #[serde(default)]
    pub prior_sd: Option<f64>,
    #[serde(default)]
    pub anchor_offset: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// A config checked against everything the library will need.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub probe: SpinState,
    pub truth: RotationParams,
    pub scheme: Scheme,
    pub monte_carlo: MonteCarloConfig,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self, base: &Path) -> Result<Experiment, CliError> {
        let t = self.true_params;
        let truth = RotationParams::new(t.theta, t.cap_theta, t.cap_phi)?;
        if self.n_shots == 0 {
            return Err(CliError::Usage("n_shots must be positive".into()));
        }
        if self.n_trials < 2 {
            return Err(CliError::Usage("n_trials must be at least 2".into()));
        }
        let scheme = match (self.scheme, &self.directions) {
            (SchemeName::OptimalPvm, None) => Scheme::OptimalPvm,
            (SchemeName::OptimalPvm, Some(_)) => {
                return Err(CliError::Usage(
                    "directions only apply to the husimi scheme".into(),
                ))
            }
            (SchemeName::Husimi, None) => {
                return Err(CliError::Usage("the husimi scheme needs directions".into()))
            }
            (SchemeName::Husimi, Some(dirs)) => {
                let directions = dirs
                    .iter()
                    .map(|d| BlochPoint::new(d.polar, d.azimuth))
                    .collect::<Result<Vec<_>, _>>()?;
                if directions.len() < 4 {
                    return Err(CliError::Usage(format!(
                        "a Husimi fit needs at least 4 directions, got {}",
                        directions.len()
                    )));
                }
                Scheme::Husimi { directions }
            }
        };
        let mut monte_carlo = MonteCarloConfig::new(self.n_shots, self.n_trials, self.seed);
        if let Some(sd) = self.prior_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(CliError::Usage("prior_sd must be positive".into()));
            }
            monte_carlo.prior_sd = sd;
        }
        if let Some(offset) = self.anchor_offset {
            if !(offset > 0.0 && offset.is_finite()) {
                return Err(CliError::Usage("anchor_offset must be positive".into()));
            }
            monte_carlo.anchor_offset = offset;
        }
        Ok(Experiment {
            probe: self.probe.build(base)?,
            truth,
            scheme,
            monte_carlo,
            output: self.output.as_ref().map(|p| base.join(p)),
        })
    }
}
