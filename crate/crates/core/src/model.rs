//! Exact facts about the inhomogeneous geometric Brownian motion
//!
//! ```text
//! dY(t) = (-Y(t)/tau + mu) dt + sigma Y(t) dW(t),   Y(0) = y0
//! ```
//!
//! Conditional and asymptotic moments, the boundary classification at zero
//! and the inverse-gamma stationary law.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, InverseGamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Distance from `sigma^2 tau = 1` or `2` below which the special variance
/// branches are used instead of the general one.
pub const VARIANCE_BRANCH_TOL: f64 = 1e-8;

/// Model parameters `(mu, tau, sigma)` and the initial value `y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    mu: f64,
    tau: f64,
    sigma: f64,
    y0: f64,
}

impl ModelParams {
    pub fn new(mu: f64, tau: f64, sigma: f64, y0: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "must be finite",
            });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                value: tau,
                reason: "must be finite and > 0",
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: sigma,
                reason: "must be finite and > 0",
            });
        }
        if !(y0 >= 0.0 && y0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "y0",
                value: y0,
                reason: "must be finite and >= 0",
            });
        }
        Ok(ModelParams { mu, tau, sigma, y0 })
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn with_mu(self, mu: f64) -> Result<Self> {
        Self::new(mu, self.tau, self.sigma, self.y0)
    }

    pub fn with_y0(self, y0: f64) -> Result<Self> {
        Self::new(self.mu, self.tau, self.sigma, y0)
    }

    pub fn with_tau(self, tau: f64) -> Result<Self> {
        Self::new(self.mu, tau, self.sigma, self.y0)
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.mu, self.tau, sigma, self.y0)
    }

    /// The dimensionless product `sigma^2 tau`.
    #[inline]
    pub fn noise_ratio(&self) -> f64 {
        self.sigma * self.sigma * self.tau
    }

    /// Drift coefficient `F(y) = -y/tau + mu`.
    #[inline]
    pub fn drift(&self, y: f64) -> f64 {
        -y / self.tau + self.mu
    }

    /// Diffusion coefficient `G(y) = sigma y`.
    #[inline]
    pub fn diffusion(&self, y: f64) -> f64 {
        self.sigma * y
    }
}

/// `E[Y(t) | Y0]`.
pub fn conditional_mean_exact(p: &ModelParams, t: f64) -> f64 {
    let decay = (-t / p.tau).exp();
    p.y0 * decay + p.mu * p.tau * (1.0 - decay)
}

/// `Var(Y(t) | Y0)`, with the removable singularities at `sigma^2 tau = 1`
/// and `sigma^2 tau = 2` handled by their own closed forms.
pub fn conditional_variance_exact(p: &ModelParams, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let s = p.noise_ratio();
    let m = p.mu * p.tau;
    let y0 = p.y0;
    let e1 = (-t / p.tau).exp();
    let e2 = (-2.0 * t / p.tau).exp();
    let dev = y0 - m;

    if (s - 1.0).abs() < VARIANCE_BRANCH_TOL {
        e1 * (2.0 * p.mu * (t * y0 - p.tau * y0 - t * m) + y0 * y0) - e2 * dev * dev + m * m
    } else if (s - 2.0).abs() < VARIANCE_BRANCH_TOL {
        e1 * (4.0 * m * (m - y0)) - e2 * dev * dev + 2.0 * p.mu * m * t - 3.0 * m * m
            + 2.0 * m * y0
            + y0 * y0
    } else {
        let growth = ((p.sigma * p.sigma - 2.0 / p.tau) * t).exp();
        m * m * s / (2.0 - s) + 2.0 * s * dev * m / (1.0 - s) * e1 - e2 * dev * dev
            + growth * (y0 * y0 - 2.0 * y0 * m / (1.0 - s) + 2.0 * m * m / ((2.0 - s) * (1.0 - s)))
    }
}

/// `E[Y_inf] = mu tau`.
pub fn asymptotic_mean_exact(p: &ModelParams) -> f64 {
    p.mu * p.tau
}

/// `Var(Y_inf) = (mu tau)^2 / (2/(sigma^2 tau) - 1)`, defined for `sigma^2 tau < 2`.
pub fn asymptotic_variance_exact(p: &ModelParams) -> Result<f64> {
    let s = p.noise_ratio();
    if s >= 2.0 {
        return Err(Error::StationarityViolated(s));
    }
    let m = p.mu * p.tau;
    Ok(m * m / (2.0 / s - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Entrance,
    UnattainableAttracting,
    Exit,
}

/// Feller classification of the boundary at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundaryClass {
    pub kind: BoundaryKind,
    /// Set when `mu = 0` and `y0 = 0`: the process stays at zero.
    pub absorbing_at_zero: bool,
}

/// The scale and speed integrals at zero are finite or infinite according to
/// `sign(mu)` alone, so the classification reduces to that sign.
pub fn classify_boundary(p: &ModelParams) -> BoundaryClass {
    let kind = if p.mu > 0.0 {
        BoundaryKind::Entrance
    } else if p.mu == 0.0 {
        BoundaryKind::UnattainableAttracting
    } else {
        BoundaryKind::Exit
    };
    BoundaryClass {
        kind,
        absorbing_at_zero: p.mu == 0.0 && p.y0 == 0.0,
    }
}

/// Inverse-gamma law with shape `alpha` and scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryDensity {
    alpha: f64,
    beta: f64,
}

impl StationaryDensity {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 2.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "must be finite and > 2",
            });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: beta,
                reason: "must be finite and > 0",
            });
        }
        Ok(StationaryDensity { alpha, beta })
    }

    /// `alpha = 1 + 2/(sigma^2 tau)`, `beta = 2 mu / sigma^2`; needs
    /// `sigma^2 tau < 2` and `mu > 0`.
    pub fn from_params(p: &ModelParams) -> Result<Self> {
        let s = p.noise_ratio();
        if s >= 2.0 {
            return Err(Error::StationarityViolated(s));
        }
        if p.mu <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: p.mu,
                reason: "stationary law requires mu > 0",
            });
        }
        Self::new(1.0 + 2.0 / s, 2.0 * p.mu / (p.sigma * p.sigma))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ln_pdf(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::DomainError(y));
        }
        Ok(self.alpha * self.beta.ln()
            - ln_gamma(self.alpha)
            - (self.alpha + 1.0) * y.ln()
            - self.beta / y)
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.ln_pdf(y).map(f64::exp)
    }

    pub fn mean(&self) -> f64 {
        self.beta / (self.alpha - 1.0)
    }

    pub fn variance(&self) -> f64 {
        let a1 = self.alpha - 1.0;
        self.beta * self.beta / (a1 * a1 * (self.alpha - 2.0))
    }

    pub fn mode(&self) -> f64 {
        self.beta / (self.alpha + 1.0)
    }

    /// The `prob`-quantile, `prob` in `(0, 1)`.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidParameter {
                name: "prob",
                value: prob,
                reason: "must lie in (0, 1)",
            });
        }
        // statrs names the scale parameter `rate`; the density is identical.
        let ig = InverseGamma::new(self.alpha, self.beta).expect("validated at construction");
        Ok(ig.inverse_cdf(prob))
    }
}
