//! Ensemble estimators: sample moments, kernel density estimates, KL
//! divergence against the stationary law, and grid crossing probabilities.
//!
//! Paths are generated in parallel, but every reduction runs over fixed-size
//! chunks of path indices combined in index order, so results never depend on
//! the number of worker threads.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParams, StationaryDensity};
use crate::noise::PathNoise;
use crate::schemes::{steps_until, SchemeKind};

const CHUNK: usize = 4096;
/// Kernel contributions beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 10.0;
/// Lower clamp for estimated densities inside the logarithm.
pub const KL_DENSITY_FLOOR: f64 = 1e-300;
/// Tail probability left out on each side of the KL integration window.
pub const KL_TAIL: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl EstimateWithError {
    /// Proportion `hits / n` with its binomial standard error.
    pub fn proportion(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        EstimateWithError {
            value: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Streaming central moments up to fourth order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    n: usize,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term = delta * dn * n1;
        self.mean += dn;
        self.m4 += term * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * d * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        self.n += other.n;
        self.mean += d * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
    }

    /// Sample mean and unbiased sample variance with standard errors.
    ///
    /// The variance error uses the sample fourth moment,
    /// `sqrt((m4 - v^2 (n-3)/(n-1)) / n)`, which reduces to `v sqrt(2/(n-1))`
    /// for Gaussian data but stays honest for skewed, heavy-tailed ensembles.
    pub fn estimates(&self) -> Result<(EstimateWithError, EstimateWithError)> {
        if self.n < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.n,
            });
        }
        let n = self.n as f64;
        let var = self.m2 / (n - 1.0);
        let m4 = self.m4 / n;
        let var_of_var = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0);
        Ok((
            EstimateWithError {
                value: self.mean,
                stderr: (var / n).sqrt(),
                n: self.n,
            },
            EstimateWithError {
                value: var,
                stderr: var_of_var.sqrt(),
                n: self.n,
            },
        ))
    }
}

impl Extend<f64> for MomentAccumulator {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

/// Sample mean and variance of `values`.
pub fn sample_moments(values: &[f64]) -> Result<(EstimateWithError, EstimateWithError)> {
    let mut acc = MomentAccumulator::new();
    acc.extend(values.iter().copied());
    acc.estimates()
}

/// Sample covariance with a standard error from the spread of the centred
/// cross products.
pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> Result<EstimateWithError> {
    if xs.len() != ys.len() {
        return Err(Error::GridMismatch(format!(
            "{} and {} samples",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut acc = MomentAccumulator::new();
    acc.extend(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let (prod, _) = acc.estimates()?;
    Ok(EstimateWithError {
        value: prod.value * nf / (nf - 1.0),
        stderr: prod.stderr,
        n,
    })
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            value: 0.0,
            reason: "must be positive",
        });
    }
    Ok(())
}

fn chunk_ranges(n_paths: usize) -> impl IndexedParallelIterator<Item = std::ops::Range<usize>> {
    (0..n_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(move |c| c * CHUNK..((c + 1) * CHUNK).min(n_paths))
}

/// Runs one path and calls `record(slot, value)` at each recorded step.
fn run_path(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    record_steps: &[usize],
    seed: u64,
    path: usize,
    mut record: impl FnMut(usize, f64),
) {
    let mut noise = PathNoise::new(seed, path as u64);
    let mut y = p.y0();
    let mut step = 0;
    for (slot, &target) in record_steps.iter().enumerate() {
        while step < target {
            y = scheme.step(p, y, scheme.draw(noise.next_raw(), dt), dt);
            step += 1;
        }
        record(slot, y);
    }
}

fn check_record_steps(record_steps: &[usize]) -> Result<()> {
    if record_steps.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::GridMismatch("record steps must be ascending".into()));
    }
    Ok(())
}

/// Values of `n_paths` independent paths after `n_steps` steps.
pub fn terminal_values(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_paths(n_paths)?;
    scheme.check_valid_for(p)?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut out = 0.0;
            run_path(scheme, p, dt, &[n_steps], seed, path, |_, y| out = y);
            out
        })
        .collect())
}

/// Sample mean and variance across paths at each of `record_steps`
/// (ascending), all taken from the same ensemble.
pub fn ensemble_moments(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    record_steps: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(EstimateWithError, EstimateWithError)>> {
    check_paths(n_paths)?;
    check_record_steps(record_steps)?;
    scheme.check_valid_for(p)?;
    let k = record_steps.len();
    let partial: Vec<Vec<MomentAccumulator>> = chunk_ranges(n_paths)
        .map(|range| {
            let mut acc = vec![MomentAccumulator::new(); k];
            for path in range {
                run_path(scheme, p, dt, record_steps, seed, path, |slot, y| {
                    acc[slot].push(y)
                });
            }
            acc
        })
        .collect();
    let mut total = vec![MomentAccumulator::new(); k];
    for chunk in &partial {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    total.iter().map(MomentAccumulator::estimates).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Bandwidth {
    Fixed(f64),
    /// `0.9 min(sd, IQR/1.34) n^{-1/5}`
    Silverman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl KdeGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::GridMismatch(format!(
                "need lo < hi, got [{lo}, {hi}]"
            )));
        }
        if points < 2 {
            return Err(Error::GridMismatch(format!(
                "need at least 2 points, got {points}"
            )));
        }
        Ok(KdeGrid { lo, hi, points })
    }

    pub fn nodes(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + i as f64 * step
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub grid: KdeGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Type-7 quantile of sorted data.
fn sorted_quantile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_values(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
}

fn silverman(sorted: &[f64]) -> Result<f64> {
    let (_, var) = sample_moments(sorted)?;
    let sd = var.value.sqrt();
    let iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::DegenerateSample);
    }
    Ok(0.9 * spread * (sorted.len() as f64).powf(-0.2))
}

pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    silverman(&sorted_values(values))
}

/// Gaussian kernel density estimate of `values` on the configured grid.
pub fn kde(values: &[f64], cfg: &KdeConfig) -> Result<KdeEstimate> {
    if values.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: values.len(),
        });
    }
    let sorted = sorted_values(values);
    let h = match cfg.bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                value: h,
                reason: "must be positive and finite",
            })
        }
        Bandwidth::Silverman => silverman(&sorted)?,
    };
    let grid = KdeGrid::new(cfg.grid.lo, cfg.grid.hi, cfg.grid.points)?.nodes();
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = KERNEL_CUTOFF * h;
    let density = grid
        .par_iter()
        .map(|&y| {
            let start = sorted.partition_point(|&x| x < y - reach);
            let end = sorted.partition_point(|&x| x <= y + reach);
            let sum: f64 = sorted[start..end]
                .iter()
                .map(|&x| {
                    let u = (y - x) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            sum * norm
        })
        .collect();
    Ok(KdeEstimate {
        grid,
        density,
        bandwidth: h,
    })
}

/// Trapezoid rule on an arbitrary ascending grid.
pub fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// `int f log(f / f_hat)` by the trapezoid rule over `grid`.
pub fn kl_divergence(true_pdf: impl Fn(f64) -> f64, grid: &[f64], est_pdf: &[f64]) -> Result<f64> {
    if grid.len() != est_pdf.len() || grid.len() < 2 {
        return Err(Error::GridMismatch(format!(
            "{} grid points, {} density values",
            grid.len(),
            est_pdf.len()
        )));
    }
    let integrand: Vec<f64> = grid
        .iter()
        .zip(est_pdf)
        .map(|(&y, &g)| {
            let f = true_pdf(y);
            if f > 0.0 {
                f * (f / g.max(KL_DENSITY_FLOOR)).ln()
            } else {
                0.0
            }
        })
        .collect();
    Ok(trapezoid(grid, &integrand))
}

/// Integration window for KL against the stationary law.
pub fn stationary_window(density: &StationaryDensity, points: usize) -> Result<KdeGrid> {
    KdeGrid::new(
        density.quantile(KL_TAIL)?,
        density.quantile(1.0 - KL_TAIL)?,
        points,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryFit {
    pub kde: KdeEstimate,
    pub density_true: Vec<f64>,
    pub kl: f64,
}

impl StationaryFit {
    pub const CSV_HEADER: &'static str = "y,density_est,density_true";

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for ((y, e), t) in self
            .kde
            .grid
            .iter()
            .zip(&self.kde.density)
            .zip(&self.density_true)
        {
            writeln!(out, "{y:.10e},{e:.10e},{t:.10e}")?;
        }
        Ok(())
    }
}

/// Kernel density estimate of `values` on the stationary window, compared to
/// the exact stationary density.
pub fn stationary_fit(
    values: &[f64],
    density: &StationaryDensity,
    bandwidth: Bandwidth,
    points: usize,
) -> Result<StationaryFit> {
    let grid = stationary_window(density, points)?;
    let est = kde(values, &KdeConfig { bandwidth, grid })?;
    let pdf = |y: f64| {
        if y > 0.0 {
            density.ln_pdf(y).map_or(0.0, f64::exp)
        } else {
            0.0
        }
    };
    let density_true: Vec<f64> = est.grid.iter().map(|&y| pdf(y)).collect();
    let kl = kl_divergence(pdf, &est.grid, &est.density)?;
    Ok(StationaryFit {
        kde: est,
        density_true,
        kl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingConfig {
    pub t_max: f64,
}

impl CrossingConfig {
    pub const THRESHOLD: f64 = 0.0;

    pub fn new(t_max: f64) -> Result<Self> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidParameter {
                name: "t_max",
                value: t_max,
                reason: "must be positive and finite",
            });
        }
        Ok(CrossingConfig { t_max })
    }
}

/// Index of the first grid point `1..=n_steps` at which each path is `<= 0`.
pub fn first_passage_steps(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Option<usize>>> {
    check_paths(n_paths)?;
    scheme.check_valid_for(p)?;
    if !(p.y0() > 0.0) {
        return Err(Error::InvalidParameter {
            name: "y0",
            value: p.y0(),
            reason: "crossing needs a positive start",
        });
    }
    Ok((0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut noise = PathNoise::new(seed, path as u64);
            let mut y = p.y0();
            for step in 1..=n_steps {
                y = scheme.step(p, y, scheme.draw(noise.next_raw(), dt), dt);
                if y <= CrossingConfig::THRESHOLD {
                    return Some(step);
                }
            }
            None
        })
        .collect())
}

/// Fraction of paths with a grid point `t_i <= t_max` at which `Y <= 0`.
pub fn crossing_probability(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    cfg: &CrossingConfig,
    n_paths: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    let n_steps = steps_until(cfg.t_max, dt);
    let passages = first_passage_steps(scheme, p, dt, n_steps, n_paths, seed)?;
    Ok(crossing_from_passages(&passages, n_steps))
}

/// Crossing estimate at `n_steps` from precomputed first-passage indices.
pub fn crossing_from_passages(passages: &[Option<usize>], n_steps: usize) -> EstimateWithError {
    let hits = passages
        .iter()
        .filter(|s| matches!(s, Some(k) if *k <= n_steps))
        .count();
    EstimateWithError::proportion(hits, passages.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingRow {
    pub mu: f64,
    pub dt: f64,
    pub scheme: SchemeKind,
    pub estimate: EstimateWithError,
}

impl CrossingRow {
    pub const CSV_HEADER: &'static str = "mu,dt,scheme,prob,stderr,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.mu,
            self.dt,
            self.scheme,
            self.estimate.value,
            self.estimate.stderr,
            self.estimate.n
        )
    }
}
