//! Command implementations behind the `nexsplat` binary.
//!
//! Every command is a plain function returning a report, so the binary only
//! parses flags, sizes the thread pool and maps errors to exit codes.

pub mod commands;
pub mod output;
pub mod scenes;

use std::collections::BTreeMap;
use std::path::PathBuf;

use nexsplat::transmittance::TransmittanceModel;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] nexsplat::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => 2,
            CliError::Core(
                nexsplat::Error::UnknownModel(_)
                | nexsplat::Error::MissingParameter { .. }
                | nexsplat::Error::ParameterDomain { .. }
                | nexsplat::Error::Config(_),
            ) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses a model spec such as `linear`, `quadratic:c=0.5` or
/// `power_law:v=2`, with `extra` (`k=v` strings) merged into the inline
/// parameters.
pub fn parse_model(spec: &str, extra: &[String]) -> CliResult<TransmittanceModel> {
    let (tag, inline) = match spec.split_once(':') {
        Some((t, rest)) => (t, rest.split(',').filter(|s| !s.is_empty()).collect()),
        None => (spec, Vec::new()),
    };
    let mut params = BTreeMap::new();
    for kv in inline.into_iter().chain(extra.iter().map(String::as_str)) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("parameter `{kv}` is not k=v")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("parameter `{kv}` has a non-numeric value")))?;
        params.insert(k.trim().to_string(), v);
    }
    Ok(TransmittanceModel::from_tag(tag.trim(), &params)?)
}

/// The model set used by the studies when none is given.
pub fn default_study_models() -> Vec<TransmittanceModel> {
    vec![
        TransmittanceModel::Exponential,
        TransmittanceModel::Linear,
        TransmittanceModel::Quadratic { c: -0.5 },
        TransmittanceModel::Quadratic { c: 1.0 },
        TransmittanceModel::Blended { gamma: 0.5 },
        TransmittanceModel::ViciniBlend { gamma: 0.5 },
        TransmittanceModel::PowerLaw { v: 2.0 },
        TransmittanceModel::PowerLaw { v: -0.5 },
        TransmittanceModel::Softplus { kappa: 20.0 },
    ]
}

/// Reads and deserializes a JSON file, keeping the path in errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}
