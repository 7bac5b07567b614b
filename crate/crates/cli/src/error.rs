use std::fmt;
use std::process::ExitCode;

use igbm::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flag value; exit code 2.
    Validation(String),
    /// Every requested output failed an existence condition; exit code 3.
    ConditionFailed(String),
    /// Anything else; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 2,
            CliError::ConditionFailed(_) => 3,
            CliError::Runtime(_) => 1,
        })
    }

    pub fn flag(flag: &str, msg: impl fmt::Display) -> Self {
        CliError::Validation(format!("--{flag}: {msg}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::ConditionFailed(m) | CliError::Runtime(m) => {
                f.write_str(m)
            }
        }
    }
}

/// Flag carrying the value a core parameter name refers to.
fn flag_for(name: &str) -> Option<&'static str> {
    Some(match name {
        "mu" => "mu",
        "tau" => "tau",
        "sigma" => "sigma",
        "y0" => "y0",
        "dt" => "dt",
        "t_max" => "tmax",
        "n_paths" => "paths",
        "bandwidth" => "bandwidth",
        _ => return None,
    })
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match &err {
            Error::InvalidParameter { name, .. } => match flag_for(name) {
                Some(flag) => CliError::flag(flag, &err),
                None => CliError::Validation(err.to_string()),
            },
            Error::InvalidScheme(_) => CliError::flag("scheme", &err),
            Error::OffGrid { .. } => CliError::flag("t", &err),
            Error::PropertyNotApplicable { .. } => CliError::flag("property", &err),
            Error::InsufficientSamples { .. } => CliError::flag("paths", &err),
            Error::StationarityViolated(_) | Error::ConditionFailed(_) => {
                CliError::ConditionFailed(err.to_string())
            }
            _ => CliError::Runtime(err.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_name_the_flag() {
        let e: CliError = Error::InvalidParameter {
            name: "n_paths",
            value: 0.0,
            reason: "must be positive",
        }
        .into();
        assert!(matches!(&e, CliError::Validation(m) if m.starts_with("--paths")));
        let e: CliError = Error::InvalidParameter {
            name: "t_max",
            value: -1.0,
            reason: "x",
        }
        .into();
        assert!(e.to_string().starts_with("--tmax"));
        let e: CliError = Error::StationarityViolated(2.5).into();
        assert!(matches!(e, CliError::ConditionFailed(_)));
    }
}
