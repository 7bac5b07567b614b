//! Conditional and asymptotic moments of the numerical schemes.
//!
//! Every scheme can be back-iterated into the form
//!
//! ```text
//! Z_i = Z_0 W_i + c1 * sum_{k=0}^{I} W_k H_{k+1} + c2,   W_k = X_1 ... X_k,  X_j = M_j H_j
//! ```
//!
//! with iid factors, so its first two moments follow from the means and second
//! moments of `X`, `M` and `H` alone. [`MomentSpec`] holds those quantities for
//! one scheme and step size; the generic functions below turn them into
//! moments, and the `*_scheme` functions give the simplified per-scheme
//! asymptotic forms used as an independent cross-check.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, ExistenceCondition, Result};
use crate::model::{
    asymptotic_mean_exact, asymptotic_variance_exact, conditional_mean_exact,
    conditional_variance_exact, ModelParams,
};
use crate::schemes::{grid_index, NoiseDraw, SchemeKind};

/// Upper summation limit `I` relative to the step count `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UpperIndex {
    /// `I = i`
    Current,
    /// `I = i - 1`
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSpec {
    pub mu_x: f64,
    pub mu_h: f64,
    pub mu_m: f64,
    pub r: f64,
    pub r_h: f64,
    /// Only enters through the consistency relation `r = r_m r_h`.
    pub r_m: f64,
    pub c1: f64,
    pub c2: f64,
    pub upper: UpperIndex,
    pub z0: f64,
    /// `W_0`, either 0 or 1.
    pub w0: f64,
}

impl MomentSpec {
    fn upper_limit(&self, i: usize) -> usize {
        match self.upper {
            UpperIndex::Current => i,
            UpperIndex::Previous => i - 1,
        }
    }
}

/// Moment parameters of `scheme` at step `dt`.
pub fn moment_spec(scheme: SchemeKind, p: &ModelParams, dt: f64) -> Result<MomentSpec> {
    let (mu, tau, sigma, y0) = (p.mu(), p.tau(), p.sigma(), p.y0());
    let s2dt = sigma * sigma * dt;
    let c1 = mu * dt;
    match scheme {
        SchemeKind::EulerMaruyama | SchemeKind::Milstein => {
            let mu_x = 1.0 - dt / tau;
            let mut r = s2dt + mu_x * mu_x;
            if scheme == SchemeKind::Milstein {
                r += 0.5 * s2dt * s2dt;
            }
            Ok(MomentSpec {
                mu_x,
                mu_h: 1.0,
                mu_m: mu_x,
                r,
                r_h: 1.0,
                r_m: r,
                c1,
                c2: mu * dt,
                upper: UpperIndex::Previous,
                z0: y0,
                w0: 0.0,
            })
        }
        SchemeKind::LieTrotter1
        | SchemeKind::LieTrotter2
        | SchemeKind::Strang1
        | SchemeKind::Strang2 => {
            let mu_x = (-dt / tau).exp();
            let r = (s2dt - 2.0 * dt / tau).exp();
            let base = MomentSpec {
                mu_x,
                mu_h: 1.0,
                mu_m: mu_x,
                r,
                r_h: 1.0,
                r_m: r,
                c1,
                c2: 0.0,
                upper: UpperIndex::Previous,
                z0: y0,
                w0: 0.0,
            };
            Ok(match scheme {
                SchemeKind::LieTrotter1 => MomentSpec {
                    upper: UpperIndex::Current,
                    ..base
                },
                SchemeKind::LieTrotter2 => MomentSpec {
                    c2: mu * dt,
                    ..base
                },
                SchemeKind::Strang1 => MomentSpec {
                    c2: 0.5 * mu * dt,
                    z0: y0 + 0.5 * mu * dt,
                    ..base
                },
                _ => {
                    let half_mean = (-0.5 * dt / tau).exp();
                    let half_second = (0.5 * s2dt - dt / tau).exp();
                    MomentSpec {
                        mu_h: half_mean,
                        mu_m: half_mean,
                        r_h: half_second,
                        r_m: half_second,
                        w0: 1.0,
                        ..base
                    }
                }
            })
        }
        SchemeKind::ExactGbm => Err(Error::UnsupportedScheme(scheme)),
    }
}

/// State of the recurrence
///
/// ```text
/// P_n = a^n,  X_n = x^n,  H_n = sum_{k<n} a^k x^{n-1-k},
/// D_n = sum_{l=1}^{n} H_l,  G_n = sum_{k<n} a^k
/// ```
#[derive(Debug, Clone, Copy)]
struct PowerSums {
    h: f64,
    d: f64,
    g: f64,
}

type Mat5 = [[f64; 5]; 5];

fn mat_mul(a: &Mat5, b: &Mat5) -> Mat5 {
    let mut out = [[0.0; 5]; 5];
    for (i, row) in a.iter().enumerate() {
        for (k, &aik) in row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for j in 0..5 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

impl PowerSums {
    /// Raises the one-step transition to the `n`-th power by repeated squaring,
    /// so `n` up to millions costs a few dozen small products and no
    /// differences of nearly equal powers are formed. The transition is
    /// divided by `scale`, so every sum comes out multiplied by `scale^-n`.
    fn at(a: f64, x: f64, n: usize, scale: f64) -> Self {
        let (a, x, one) = (a / scale, x / scale, 1.0 / scale);
        // Order: [P, X, H, D, G].
        let step: Mat5 = [
            [a, 0.0, 0.0, 0.0, 0.0],
            [0.0, x, 0.0, 0.0, 0.0],
            [one, 0.0, x, 0.0, 0.0],
            [one, 0.0, x, one, 0.0],
            [one, 0.0, 0.0, 0.0, one],
        ];
        let mut acc: Mat5 = [[0.0; 5]; 5];
        for (i, row) in acc.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut base = step;
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = mat_mul(&acc, &base);
            }
            e >>= 1;
            if e > 0 {
                base = mat_mul(&base, &base);
            }
        }
        // Initial state (1, 1, 0, 0, 0) selects the first two columns.
        let col = |row: usize| acc[row][0] + acc[row][1];
        PowerSums {
            h: col(2),
            d: col(3),
            g: col(4),
        }
    }
}

/// `v scale^n`, overflowing only when the product itself does.
fn unscale(v: f64, scale: f64, n: usize) -> f64 {
    let ln_factor = n as f64 * scale.ln();
    let factor = ln_factor.exp();
    if factor.is_finite() || v == 0.0 || !v.is_finite() {
        v * factor
    } else {
        v.signum() * (ln_factor + v.abs().ln()).exp()
    }
}

/// `a^n - b^n`, accurate when the two are close and positive.
fn power_difference(a: f64, b: f64, n: usize) -> f64 {
    let nf = n as f64;
    let log_ratio = if a > 0.0 && b > 0.0 {
        nf * (a.ln() - b.ln())
    } else {
        f64::INFINITY
    };
    if log_ratio.abs() < 1.0 {
        (nf * b.ln()).exp() * log_ratio.exp_m1()
    } else {
        a.powi(n as i32) - b.powi(n as i32)
    }
}

/// `E[Z_i | Z_0]`, `i >= 1`.
pub fn conditional_mean_generic(s: &MomentSpec, i: usize) -> f64 {
    assert!(i >= 1, "moment formulas start at the first step");
    let upper = s.upper_limit(i);
    let x = s.mu_x;
    // Everything that grows is carried relative to `scale^i`.
    let scale = x.abs().max(1.0);
    let tail = x * PowerSums::at(x, x, upper, scale).g / scale.powi((i - upper) as i32);
    let growing = s.z0 * (x / scale).powi(i as i32) + s.c1 * s.mu_h * tail;
    unscale(growing, scale, i) + s.c1 * s.w0 * s.mu_h + s.c2
}

/// `Var(Z_i | Z_0)`, `i >= 1`.
pub fn conditional_variance_generic(s: &MomentSpec, i: usize) -> f64 {
    assert!(i >= 1, "moment formulas start at the first step");
    let upper = s.upper_limit(i);
    let x = s.mu_x;
    let q = x * x;
    let mh2 = s.mu_h * s.mu_h;
    // Every term is carried relative to `scale^i`, so intermediate powers
    // cannot overflow before the variance itself does.
    let scale = s.r.max(q).max(x.abs()).max(1.0);
    let (rs, qs) = (s.r / scale, q / scale);
    let sums = |a: f64, n: usize| {
        let p = PowerSums::at(a, x, n, scale);
        let shift = scale.powi(n as i32 - i as i32);
        (p.h * shift, p.d * shift, p.g * shift)
    };

    let first = s.z0 * s.z0 * power_difference(rs, qs, i);

    let (r_h_i, _, _) = sums(s.r, i);
    let (q_h_i, _, _) = sums(q, i);
    let mut cov_sum = s.r_h * r_h_i - mh2 * q_h_i;
    if upper == i {
        // a_i = Var(W_i H_{i+1}) = r^i r_h - mu_x^{2i} mu_h^2
        cov_sum += (s.r_h * rs.powi(i as i32) - mh2 * qs.powi(i as i32)) / x;
    }
    let second = 2.0 * s.c1 * s.z0 * s.mu_m * cov_sum;

    let (_, _, r_g) = sums(s.r, upper + 1);
    let (_, _, q_g) = sums(q, upper + 1);
    let var_sum = s.r_h * r_g - mh2 * q_g;
    let (_, r_d, _) = sums(s.r, upper);
    let (_, q_d, _) = sums(q, upper);
    let double_sum = s.r_h * r_d - mh2 * q_d;
    let third = s.c1 * s.c1 * (var_sum + 2.0 * s.mu_m * s.mu_h * double_sum);

    unscale(first + second + third, scale, i)
}

/// Limit of the conditional mean; needs `|mu_x| < 1`.
pub fn asymptotic_mean_generic(s: &MomentSpec) -> Result<f64> {
    if s.mu_x.abs() >= 1.0 {
        return Err(Error::MeanDiverges(s.mu_x.abs()));
    }
    Ok(s.c1 * s.mu_h * s.mu_x / (1.0 - s.mu_x) + s.c1 * s.w0 * s.mu_h + s.c2)
}

/// Limit of the conditional variance; needs `|mu_x| < 1` and `r` in `(0, 1)`.
pub fn asymptotic_variance_generic(s: &MomentSpec) -> Result<f64> {
    if s.mu_x.abs() >= 1.0 {
        return Err(Error::MeanDiverges(s.mu_x.abs()));
    }
    if !(s.r > 0.0 && s.r < 1.0) {
        return Err(Error::VarianceDiverges(s.r));
    }
    let (x, mh) = (s.mu_x, s.mu_h);
    let num = (1.0 + mh * s.mu_m) * (s.r_h * (x * x - 1.0) - mh * mh * (s.r - 1.0));
    let den = (x - 1.0) * (x - 1.0) * (1.0 + x) * (s.r - 1.0);
    Ok(s.c1 * s.c1 * num / den)
}

/// Conditional mean and variance of `scheme` after `i` steps.
pub fn conditional_moments_scheme(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    i: usize,
) -> Result<(f64, f64)> {
    if scheme == SchemeKind::ExactGbm {
        scheme.check_valid_for(p)?;
        let t = i as f64 * dt;
        return Ok((
            conditional_mean_exact(p, t),
            conditional_variance_exact(p, t),
        ));
    }
    let spec = moment_spec(scheme, p, dt)?;
    if i == 0 {
        return Ok((p.y0(), 0.0));
    }
    Ok((
        conditional_mean_generic(&spec, i),
        conditional_variance_generic(&spec, i),
    ))
}

fn lie_trotter_mean(p: &ModelParams, dt: f64) -> f64 {
    let x = dt / p.tau();
    p.mu() * p.tau() * x / x.exp_m1()
}

/// Closed-form asymptotic mean of `scheme`.
pub fn asymptotic_mean_scheme(scheme: SchemeKind, p: &ModelParams, dt: f64) -> Result<f64> {
    let x = dt / p.tau();
    match scheme {
        SchemeKind::EulerMaruyama | SchemeKind::Milstein => {
            if (1.0 - x).abs() < 1.0 {
                Ok(p.mu() * p.tau())
            } else {
                Err(Error::ConditionFailed(ExistenceCondition::TaylorMeanStep))
            }
        }
        SchemeKind::LieTrotter1 => Ok(lie_trotter_mean(p, dt)),
        SchemeKind::LieTrotter2 => Ok(lie_trotter_mean(p, dt) * x.exp()),
        SchemeKind::Strang1 => Ok(lie_trotter_mean(p, dt) * 0.5 * (1.0 + x.exp())),
        SchemeKind::Strang2 => Ok(lie_trotter_mean(p, dt) * (0.5 * x).exp()),
        SchemeKind::ExactGbm => {
            scheme.check_valid_for(p)?;
            Ok(asymptotic_mean_exact(p))
        }
    }
}

/// Closed-form asymptotic variance of `scheme`, reporting the first failing
/// existence condition.
pub fn asymptotic_variance_scheme(scheme: SchemeKind, p: &ModelParams, dt: f64) -> Result<f64> {
    let (tau, sigma) = (p.tau(), p.sigma());
    let s2 = sigma * sigma;
    let m = p.mu() * tau;
    match scheme {
        SchemeKind::EulerMaruyama => {
            asymptotic_mean_scheme(scheme, p, dt)?;
            if dt < 2.0 * tau - s2 * tau * tau {
                Ok(m * m / (2.0 / (s2 * tau) - 1.0 - dt / (s2 * tau * tau)))
            } else {
                Err(Error::ConditionFailed(
                    ExistenceCondition::EulerVarianceStep,
                ))
            }
        }
        SchemeKind::Milstein => {
            asymptotic_mean_scheme(scheme, p, dt)?;
            let bound = (2.0 * tau - s2 * tau * tau) / (0.5 * s2 * s2 * tau * tau + 1.0);
            if dt < bound {
                let correction = 0.5 * s2 * dt;
                Ok(m * m * (1.0 + correction)
                    / (2.0 / (s2 * tau) - 1.0 - dt / (s2 * tau * tau) - correction))
            } else {
                Err(Error::ConditionFailed(
                    ExistenceCondition::MilsteinVarianceStep,
                ))
            }
        }
        SchemeKind::LieTrotter1
        | SchemeKind::LieTrotter2
        | SchemeKind::Strang1
        | SchemeKind::Strang2 => {
            if p.noise_ratio() >= 2.0 {
                return Err(Error::ConditionFailed(ExistenceCondition::Stationarity));
            }
            let mean = lie_trotter_mean(p, dt);
            let x = dt / tau;
            let s = dt * s2;
            // e^{2x}(1 - e^s)/(e^s - e^{2x}) with the e^{2x} factored out.
            let shared = -s.exp_m1() / (s - 2.0 * x).exp_m1();
            if scheme == SchemeKind::Strang2 {
                // e^x (1 - e^{s/2})(e^{2x} + e^{s/2}) / (e^s - e^{2x})
                let ratio = -(0.5 * s).exp_m1() * ((2.0 * x).exp() + (0.5 * s).exp()) * (-x).exp()
                    / (s - 2.0 * x).exp_m1();
                Ok(mean * mean * ratio)
            } else {
                Ok(mean * mean * shared)
            }
        }
        SchemeKind::ExactGbm => {
            scheme.check_valid_for(p)?;
            asymptotic_variance_exact(p)
                .map_err(|_| Error::ConditionFailed(ExistenceCondition::Stationarity))
        }
    }
}

/// Asymptotic mean and variance of one scheme; each entry fails independently.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticMoments {
    pub mean: Result<f64>,
    pub variance: Result<f64>,
}

impl AsymptoticMoments {
    pub fn conditions_satisfied(&self) -> bool {
        self.mean.is_ok() && self.variance.is_ok()
    }
}

pub fn asymptotic_moments_scheme(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
) -> AsymptoticMoments {
    AsymptoticMoments {
        mean: asymptotic_mean_scheme(scheme, p, dt),
        variance: asymptotic_variance_scheme(scheme, p, dt),
    }
}

/// Relative biases of one scheme; `t` absent means asymptotic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasReport {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub t: Option<f64>,
    pub rbias_mean: f64,
    pub rbias_var: f64,
}

impl BiasReport {
    pub const CSV_HEADER: &'static str = "scheme,dt,t,rbias_mean,rbias_var";

    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{},", self.scheme, self.dt);
        if let Some(t) = self.t {
            write!(row, "{t}").unwrap();
        }
        write!(row, ",{},{}", self.rbias_mean, self.rbias_var).unwrap();
        row
    }
}

fn relative(approx: f64, exact: f64) -> Result<f64> {
    if exact == 0.0 {
        return Err(Error::TrueQuantityZero);
    }
    Ok((approx - exact) / exact)
}

pub fn rbias_conditional_mean(scheme: SchemeKind, p: &ModelParams, dt: f64, t: f64) -> Result<f64> {
    let i = grid_index(t, dt)?;
    let (mean, _) = conditional_moments_scheme(scheme, p, dt, i)?;
    relative(mean, conditional_mean_exact(p, i as f64 * dt))
}

pub fn rbias_conditional_variance(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    t: f64,
) -> Result<f64> {
    let i = grid_index(t, dt)?;
    let (_, var) = conditional_moments_scheme(scheme, p, dt, i)?;
    relative(var, conditional_variance_exact(p, i as f64 * dt))
}

/// Conditional biases at grid time `t`.
pub fn rbias_conditional(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    t: f64,
) -> Result<BiasReport> {
    Ok(BiasReport {
        scheme,
        dt,
        t: Some(t),
        rbias_mean: rbias_conditional_mean(scheme, p, dt, t)?,
        rbias_var: rbias_conditional_variance(scheme, p, dt, t)?,
    })
}

pub fn rbias_asymptotic_mean(scheme: SchemeKind, p: &ModelParams, dt: f64) -> Result<f64> {
    relative(
        asymptotic_mean_scheme(scheme, p, dt)?,
        asymptotic_mean_exact(p),
    )
}

pub fn rbias_asymptotic_variance(scheme: SchemeKind, p: &ModelParams, dt: f64) -> Result<f64> {
    let exact = asymptotic_variance_exact(p)
        .map_err(|_| Error::ConditionFailed(ExistenceCondition::Stationarity))?;
    relative(asymptotic_variance_scheme(scheme, p, dt)?, exact)
}

pub fn rbias_asymptotic(scheme: SchemeKind, p: &ModelParams, dt: f64) -> Result<BiasReport> {
    Ok(BiasReport {
        scheme,
        dt,
        t: None,
        rbias_mean: rbias_asymptotic_mean(scheme, p, dt)?,
        rbias_var: rbias_asymptotic_variance(scheme, p, dt)?,
    })
}

/// `sqrt(Var_inf) / E_inf` of the scheme.
pub fn asymptotic_cv(scheme: SchemeKind, p: &ModelParams, dt: f64) -> Result<f64> {
    let mean = asymptotic_mean_scheme(scheme, p, dt)?;
    if mean == 0.0 {
        return Err(Error::TrueQuantityZero);
    }
    Ok(asymptotic_variance_scheme(scheme, p, dt)?.sqrt() / mean)
}

/// `sqrt(Var(Y_inf)) / E[Y_inf]` of the process.
pub fn asymptotic_cv_exact(p: &ModelParams) -> Result<f64> {
    let mean = asymptotic_mean_exact(p);
    if mean == 0.0 {
        return Err(Error::TrueQuantityZero);
    }
    Ok(asymptotic_variance_exact(p)?.sqrt() / mean)
}

/// One draw of the factors `X = M H` of the back-iterated representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductFactor {
    pub m: f64,
    pub h: f64,
}

impl ProductFactor {
    pub fn x(&self) -> f64 {
        self.m * self.h
    }
}

/// Factors of `scheme` for one step's increments. For S2, `H` carries the
/// half step driven by `psi` and `M` the one driven by `phi`.
pub fn product_factor(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    d: NoiseDraw,
) -> Result<ProductFactor> {
    let (tau, sigma) = (p.tau(), p.sigma());
    let drift = -(1.0 / tau + 0.5 * sigma * sigma);
    let m = match scheme {
        SchemeKind::EulerMaruyama => 1.0 - dt / tau + sigma * d.xi,
        SchemeKind::Milstein => {
            1.0 - dt / tau + sigma * d.xi + 0.5 * sigma * sigma * (d.xi * d.xi - dt)
        }
        SchemeKind::LieTrotter1 | SchemeKind::LieTrotter2 | SchemeKind::Strang1 => {
            (drift * dt + sigma * d.xi).exp()
        }
        SchemeKind::Strang2 => {
            return Ok(ProductFactor {
                m: (0.5 * drift * dt + sigma * d.phi).exp(),
                h: (0.5 * drift * dt + sigma * d.psi).exp(),
            })
        }
        SchemeKind::ExactGbm => return Err(Error::UnsupportedScheme(scheme)),
    };
    Ok(ProductFactor { m, h: 1.0 })
}
