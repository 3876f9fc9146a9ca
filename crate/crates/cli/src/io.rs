//! State files and lossless JSON output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use spinsense_core::states::{SpinState, StateJson};
use spinsense_core::two_mode::{TwoModeJson, TwoModeState};

use crate::error::CliError;

/// Writes every float with 17 significant digits so that values survive a round trip.
struct Precise;

impl serde_json::ser::Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise);
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.into(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

pub enum LoadedState {
    Spin(SpinState),
    TwoMode(TwoModeState),
}

pub fn read_state(path: &Path) -> Result<LoadedState, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    let bad = |e: serde_json::Error| {
        CliError::Usage(format!("{}: not a state file: {e}", path.display()))
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    if value.get("kind").is_some() {
        let json: TwoModeJson = serde_json::from_value(value).map_err(bad)?;
        Ok(LoadedState::TwoMode(TwoModeState::from_json(&json)?))
    } else {
        let json: StateJson = serde_json::from_value(value).map_err(bad)?;
        Ok(LoadedState::Spin(SpinState::from_json(&json)?))
    }
}
