//! One-step maps of the six integrators and path simulation.
//!
//! The splitting schemes compose the exact flows of
//!
//! ```text
//! dY = -Y/tau dt + sigma Y dW     (geometric Brownian motion, flow_gbm)
//! dY = mu dt                      (translation, flow_ode)
//! ```
//!
//! in Lie-Trotter order (L1, L2) or symmetrically (S1, S2). Euler-Maruyama
//! (E) and Milstein (M) are the usual Ito-Taylor updates.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::noise::{PathNoise, RawStep, StepNormals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SchemeKind {
    #[serde(rename = "E")]
    EulerMaruyama,
    #[serde(rename = "M")]
    Milstein,
    #[serde(rename = "L1")]
    LieTrotter1,
    #[serde(rename = "L2")]
    LieTrotter2,
    #[serde(rename = "S1")]
    Strang1,
    #[serde(rename = "S2")]
    Strang2,
    #[serde(rename = "GBM")]
    /// Exact flow of the homogeneous equation; only valid when `mu = 0`.
    ExactGbm,
}

impl SchemeKind {
    /// The six integrators of the inhomogeneous equation.
    pub const NUMERICAL: [SchemeKind; 6] = [
        SchemeKind::EulerMaruyama,
        SchemeKind::Milstein,
        SchemeKind::LieTrotter1,
        SchemeKind::LieTrotter2,
        SchemeKind::Strang1,
        SchemeKind::Strang2,
    ];

    pub const SPLITTING: [SchemeKind; 4] = [
        SchemeKind::LieTrotter1,
        SchemeKind::LieTrotter2,
        SchemeKind::Strang1,
        SchemeKind::Strang2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyama => "E",
            SchemeKind::Milstein => "M",
            SchemeKind::LieTrotter1 => "L1",
            SchemeKind::LieTrotter2 => "L2",
            SchemeKind::Strang1 => "S1",
            SchemeKind::Strang2 => "S2",
            SchemeKind::ExactGbm => "GBM",
        }
    }

    pub fn is_splitting(self) -> bool {
        matches!(
            self,
            SchemeKind::LieTrotter1
                | SchemeKind::LieTrotter2
                | SchemeKind::Strang1
                | SchemeKind::Strang2
        )
    }

    /// Fails with `InvalidScheme` for the exact GBM flow when `mu != 0`.
    pub fn check_valid_for(self, p: &ModelParams) -> Result<()> {
        if self == SchemeKind::ExactGbm && p.mu() != 0.0 {
            return Err(Error::InvalidScheme(self));
        }
        Ok(())
    }

    /// Builds the increments this scheme consumes from one step's normals.
    #[inline]
    pub fn noise(self, z: StepNormals, dt: f64) -> NoiseDraw {
        match self {
            SchemeKind::Strang2 => {
                let half = (0.5 * dt).sqrt();
                NoiseDraw::split(half * z.z0, half * z.z1)
            }
            _ => NoiseDraw::single(dt.sqrt() * z.z0),
        }
    }

    /// Same as [`SchemeKind::noise`], converting only the bits it uses.
    #[inline]
    pub fn draw(self, raw: RawStep, dt: f64) -> NoiseDraw {
        match self {
            SchemeKind::Strang2 => self.noise(raw.normals(), dt),
            _ => NoiseDraw::single(dt.sqrt() * raw.z0()),
        }
    }

    #[inline]
    pub fn step(self, p: &ModelParams, y: f64, d: NoiseDraw, dt: f64) -> f64 {
        match self {
            SchemeKind::EulerMaruyama => step_euler(p, y, d, dt),
            SchemeKind::Milstein => step_milstein(p, y, d, dt),
            SchemeKind::LieTrotter1 => step_l1(p, y, d, dt),
            SchemeKind::LieTrotter2 => step_l2(p, y, d, dt),
            SchemeKind::Strang1 => step_s1(p, y, d, dt),
            SchemeKind::Strang2 => step_s2(p, y, d, dt),
            SchemeKind::ExactGbm => flow_gbm(p, y, d.xi, dt),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseSchemeError(pub String);

impl fmt::Display for ParseSchemeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown scheme `{}` (expected one of e, m, l1, l2, s1, s2, gbm)",
            self.0
        )
    }
}

impl std::error::Error for ParseSchemeError {}

impl FromStr for SchemeKind {
    type Err = ParseSchemeError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "e" | "em" | "euler" | "euler-maruyama" => Ok(SchemeKind::EulerMaruyama),
            "m" | "milstein" => Ok(SchemeKind::Milstein),
            "l1" => Ok(SchemeKind::LieTrotter1),
            "l2" => Ok(SchemeKind::LieTrotter2),
            "s1" => Ok(SchemeKind::Strang1),
            "s2" => Ok(SchemeKind::Strang2),
            "gbm" | "exact" => Ok(SchemeKind::ExactGbm),
            _ => Err(ParseSchemeError(s.to_string())),
        }
    }
}

/// Gaussian increments of one step: `xi ~ N(0, dt)`; for S2 additionally the
/// two half-step increments `phi, psi ~ N(0, dt/2)` with `xi = phi + psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub xi: f64,
    pub phi: f64,
    pub psi: f64,
}

impl NoiseDraw {
    pub fn single(xi: f64) -> Self {
        NoiseDraw {
            xi,
            phi: 0.0,
            psi: 0.0,
        }
    }

    pub fn split(phi: f64, psi: f64) -> Self {
        NoiseDraw {
            xi: phi + psi,
            phi,
            psi,
        }
    }
}

#[inline]
pub fn step_euler(p: &ModelParams, y: f64, d: NoiseDraw, dt: f64) -> f64 {
    y + dt * p.drift(y) + p.diffusion(y) * d.xi
}

#[inline]
pub fn step_milstein(p: &ModelParams, y: f64, d: NoiseDraw, dt: f64) -> f64 {
    let s = p.sigma();
    step_euler(p, y, d, dt) + p.diffusion(y) * 0.5 * s * (d.xi * d.xi - dt)
}

/// Exact flow of the geometric Brownian motion over `h` with increment `xi ~ N(0, h)`.
#[inline]
pub fn flow_gbm(p: &ModelParams, y: f64, xi: f64, h: f64) -> f64 {
    let s = p.sigma();
    y * (-(1.0 / p.tau() + 0.5 * s * s) * h + s * xi).exp()
}

/// Exact flow of `dY = mu dt` over `h`.
#[inline]
pub fn flow_ode(mu: f64, y: f64, h: f64) -> f64 {
    y + mu * h
}

#[inline]
pub fn step_l1(p: &ModelParams, y: f64, d: NoiseDraw, dt: f64) -> f64 {
    flow_gbm(p, flow_ode(p.mu(), y, dt), d.xi, dt)
}

#[inline]
pub fn step_l2(p: &ModelParams, y: f64, d: NoiseDraw, dt: f64) -> f64 {
    flow_ode(p.mu(), flow_gbm(p, y, d.xi, dt), dt)
}

#[inline]
pub fn step_s1(p: &ModelParams, y: f64, d: NoiseDraw, dt: f64) -> f64 {
    let half = 0.5 * dt;
    flow_ode(
        p.mu(),
        flow_gbm(p, flow_ode(p.mu(), y, half), d.xi, dt),
        half,
    )
}

/// Half GBM step with `phi`, full translation, half GBM step with `psi`.
/// The two GBM factors acting on `y` are merged into a single flow over the
/// full step with `xi = phi + psi`, which is the same map.
#[inline]
pub fn step_s2(p: &ModelParams, y: f64, d: NoiseDraw, dt: f64) -> f64 {
    flow_gbm(p, y, d.xi, dt) + flow_gbm(p, p.mu() * dt, d.psi, 0.5 * dt)
}

/// Equidistant grid `t_i = i dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt,
                reason: "must be finite and > 0",
            });
        }
        Ok(TimeGrid { dt, n_steps })
    }

    /// Grid from 0 to the last grid point not beyond `t_max`.
    pub fn covering(t_max: f64, dt: f64) -> Result<Self> {
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_max",
                value: t_max,
                reason: "must be finite and >= 0",
            });
        }
        Self::new(dt, 0)?;
        Self::new(dt, steps_until(t_max, dt))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.n_steps)
    }
}

/// Number of whole steps of size `dt` fitting in `[0, t]`, tolerating the
/// rounding of decimal inputs such as `15 / 0.1`.
pub fn steps_until(t: f64, dt: f64) -> usize {
    let ratio = t / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.floor() as usize
    }
}

/// Index `i` with `i dt = t`, or `OffGrid`.
pub fn grid_index(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "must be positive and finite",
        });
    }
    let ratio = t / dt;
    let nearest = ratio.round();
    if t >= 0.0 && (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        Ok(nearest as usize)
    } else {
        Err(Error::OffGrid { t, dt })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub scheme: SchemeKind,
    pub seed: u64,
    pub path_index: u64,
}

impl Trajectory {
    /// `t,y` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,y")?;
        for (i, y) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.t(i), y)?;
        }
        Ok(())
    }
}

/// Path 0 of the stream selected by `seed`.
pub fn simulate(
    p: &ModelParams,
    grid: TimeGrid,
    scheme: SchemeKind,
    seed: u64,
) -> Result<Trajectory> {
    simulate_path(p, grid, scheme, seed, 0)
}

pub fn simulate_path(
    p: &ModelParams,
    grid: TimeGrid,
    scheme: SchemeKind,
    seed: u64,
    path_index: u64,
) -> Result<Trajectory> {
    scheme.check_valid_for(p)?;
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    let mut noise = PathNoise::new(seed, path_index);
    let mut y = p.y0();
    values.push(y);
    for _ in 0..grid.n_steps {
        let d = scheme.draw(noise.next_raw(), grid.dt);
        y = scheme.step(p, y, d, grid.dt);
        values.push(y);
    }
    Ok(Trajectory {
        grid,
        values,
        scheme,
        seed,
        path_index,
    })
}

/// Value after `n_steps` without storing the path. Callers validate the scheme.
#[inline]
pub fn terminal_value(
    p: &ModelParams,
    scheme: SchemeKind,
    dt: f64,
    n_steps: usize,
    seed: u64,
    path_index: u64,
) -> f64 {
    let mut noise = PathNoise::new(seed, path_index);
    let mut y = p.y0();
    for _ in 0..n_steps {
        y = scheme.step(p, y, scheme.draw(noise.next_raw(), dt), dt);
    }
    y
}
