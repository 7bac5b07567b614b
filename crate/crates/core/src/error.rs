use std::fmt;

use thiserror::Error;

use crate::schemes::SchemeKind;

/// Existence conditions for the asymptotic moments of the numerical schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExistenceCondition {
    /// `|1 - dt/tau| < 1`, required by Euler-Maruyama and Milstein for the mean.
    TaylorMeanStep,
    /// `dt < 2 tau - sigma^2 tau^2`, Euler-Maruyama variance.
    EulerVarianceStep,
    /// `dt < (2 tau - sigma^2 tau^2) / (sigma^4 tau^2 / 2 + 1)`, Milstein variance.
    MilsteinVarianceStep,
    /// `sigma^2 tau < 2`, shared by the exact process and the splitting schemes.
    Stationarity,
}

impl fmt::Display for ExistenceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExistenceCondition::TaylorMeanStep => "|1 - dt/tau| < 1",
            ExistenceCondition::EulerVarianceStep => "dt < 2 tau - sigma^2 tau^2",
            ExistenceCondition::MilsteinVarianceStep => {
                "dt < (2 tau - sigma^2 tau^2) / (sigma^4 tau^2 / 2 + 1)"
            }
            ExistenceCondition::Stationarity => "sigma^2 tau < 2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("stationarity violated: sigma^2 tau = {0} must be < 2")]
    StationarityViolated(f64),
    #[error("argument {0} outside the density support (y > 0)")]
    DomainError(f64),
    #[error("scheme {0} is only valid for mu = 0")]
    InvalidScheme(SchemeKind),
    #[error("scheme {0} has no moment parameterisation")]
    UnsupportedScheme(SchemeKind),
    #[error("asymptotic mean diverges (|mu_x| = {0} >= 1)")]
    MeanDiverges(f64),
    #[error("asymptotic variance diverges (r = {0} outside (0, 1))")]
    VarianceDiverges(f64),
    #[error("existence condition failed: {0}")]
    ConditionFailed(ExistenceCondition),
    #[error("exact reference quantity is zero, relative bias undefined")]
    TrueQuantityZero,
    #[error("time {t} is not on the grid with step {dt}")]
    OffGrid { t: f64, dt: f64 },
    #[error("property {property} requires {requirement}, got mu = {mu}")]
    PropertyNotApplicable {
        property: &'static str,
        requirement: &'static str,
        mu: f64,
    },
    #[error("at least {needed} samples required, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("all samples are equal, bandwidth rule undefined")]
    DegenerateSample,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
