use std::fmt::Write as _;

use igbm::boundary::{boundary_check, BoundaryProperty};
use igbm::model::{
    asymptotic_mean_exact, asymptotic_variance_exact, conditional_mean_exact,
    conditional_variance_exact,
};
use igbm::moments::{
    asymptotic_mean_scheme, asymptotic_variance_scheme, conditional_moments_scheme,
    rbias_asymptotic_mean, rbias_asymptotic_variance, rbias_conditional_mean,
    rbias_conditional_variance, BiasReport,
};
use igbm::montecarlo::{
    crossing_probability, ensemble_moments, stationary_fit, terminal_values, Bandwidth,
    CrossingConfig, CrossingRow, StationaryFit,
};
use igbm::schemes::{grid_index, simulate_path};
use igbm::{Error, ModelParams, SchemeKind, StationaryDensity, TimeGrid};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{
    BiasSweepArgs, BoundaryArgs, Command, CrossingArgs, Format, ModelArgs, MomentsArgs,
    SimulateArgs, StationaryArgs, SweepAxis,
};
use crate::error::CliError;
use crate::output::{emit, ensure_dir, envelope, json_string, metadata, write_file};

pub fn run(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => simulate(cmd, a),
        Command::Moments(a) => moments(cmd, a),
        Command::BiasSweep(a) => bias_sweep(cmd, a),
        Command::Stationary(a) => stationary(cmd, a),
        Command::Crossing(a) => crossing(cmd, a),
        Command::BoundaryCheck(a) => boundary(cmd, a),
    }
}

fn params(m: &ModelArgs) -> Result<ModelParams, CliError> {
    Ok(ModelParams::new(m.mu, m.tau, m.sigma, m.y0)?)
}

/// Scheme list with `all` (the six integrators) and `splitting` expanded,
/// duplicates dropped.
fn parse_schemes(names: &[String], allow_gbm: bool) -> Result<Vec<SchemeKind>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let group: Vec<SchemeKind> = match name.trim().to_ascii_lowercase().as_str() {
            "all" => SchemeKind::NUMERICAL.to_vec(),
            "splitting" => SchemeKind::SPLITTING.to_vec(),
            other => vec![other.parse().map_err(|e| CliError::flag("scheme", e))?],
        };
        for s in group {
            if s == SchemeKind::ExactGbm && !allow_gbm {
                return Err(CliError::flag(
                    "scheme",
                    "GBM is not available for this command",
                ));
            }
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::flag("scheme", "at least one scheme required"));
    }
    Ok(out)
}

fn parse_properties(names: &[String]) -> Result<Vec<BoundaryProperty>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let group = if name.trim().eq_ignore_ascii_case("all") {
            BoundaryProperty::ALL.to_vec()
        } else {
            vec![name.parse().map_err(|e| CliError::flag("property", e))?]
        };
        for q in group {
            if !out.contains(&q) {
                out.push(q);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::flag("property", "at least one property required"));
    }
    Ok(out)
}

fn check_step(flag: &str, dt: f64) -> Result<(), CliError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(CliError::flag(
            flag,
            format!("{dt} must be positive and finite"),
        ))
    }
}

fn check_count(flag: &str, n: usize, min: usize) -> Result<(), CliError> {
    if n >= min {
        Ok(())
    } else {
        Err(CliError::flag(flag, format!("{n} must be at least {min}")))
    }
}

/// `start:stop:count` as `count` evenly spaced values including both ends.
fn parse_range(flag: &str, spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::flag(flag, format!("'{spec}' is not start:stop:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !a.is_finite() || !b.is_finite() || n == 0 || (n == 1 && a != b) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    let step = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i + 1 == n { b } else { a + i as f64 * step })
        .collect())
}

fn grid_step(t: f64, dt: f64) -> Result<usize, CliError> {
    check_step("dt", dt)?;
    grid_index(t, dt).map_err(|e| CliError::flag("t", e))
}

fn marker(err: &Error) -> Option<&'static str> {
    match err {
        Error::ConditionFailed(_)
        | Error::StationarityViolated(_)
        | Error::MeanDiverges(_)
        | Error::VarianceDiverges(_) => Some("condition_failed"),
        Error::TrueQuantityZero => Some("true_quantity_zero"),
        Error::OffGrid { .. } => Some("off_grid"),
        _ => None,
    }
}

/// A number, or a marker string for quantities that do not exist.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Value(f64),
    Missing(&'static str),
}

impl Cell {
    fn from_result(r: igbm::Result<f64>) -> Result<Self, CliError> {
        match r {
            Ok(v) => Ok(Cell::Value(v)),
            Err(e) => marker(&e).map(Cell::Missing).ok_or_else(|| e.into()),
        }
    }

    fn is_value(&self) -> bool {
        matches!(self, Cell::Value(_))
    }

    fn csv(&self) -> String {
        match self {
            Cell::Value(v) => v.to_string(),
            Cell::Missing(m) => (*m).to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Value(v) if v.is_finite() => json!(v),
            Cell::Value(v) => json!(v.to_string()),
            Cell::Missing(m) => json!(m),
        }
    }
}

fn simulate(cmd: &Command, a: &SimulateArgs) -> Result<(), CliError> {
    let p = params(&a.model)?;
    let schemes = parse_schemes(&a.scheme, true)?;
    check_count("paths", a.paths, 1)?;
    check_step("dt", a.dt)?;
    let grid = TimeGrid::covering(a.tmax, a.dt)?;
    for &s in &schemes {
        s.check_valid_for(&p)?;
    }
    ensure_dir(&a.out_dir)?;
    let header = metadata(cmd);
    for &s in &schemes {
        let files: Vec<(String, String)> = (0..a.paths)
            .into_par_iter()
            .map(|k| {
                let traj = simulate_path(&p, grid, s, a.seed, k as u64)?;
                let mut text = header.clone().into_bytes();
                traj.write_csv(&mut text).expect("writing to memory");
                let name = format!("{}_{k}.csv", s.label().to_ascii_lowercase());
                Ok((name, String::from_utf8(text).expect("ascii output")))
            })
            .collect::<Result<_, CliError>>()?;
        for (name, text) in files {
            let path = a.out_dir.join(name);
            write_file(&path, &text)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn moments(cmd: &Command, a: &MomentsArgs) -> Result<(), CliError> {
    let p = params(&a.model)?;
    let schemes = parse_schemes(&a.scheme, true)?;
    let i = grid_step(a.t, a.dt)?;
    for &s in &schemes {
        s.check_valid_for(&p)?;
    }
    let t = i as f64 * a.dt;
    let exact = json!({
        "conditional": {
            "mean": conditional_mean_exact(&p, t),
            "variance": conditional_variance_exact(&p, t),
        },
        "asymptotic": {
            "mean": asymptotic_mean_exact(&p),
            "variance": Cell::from_result(asymptotic_variance_exact(&p))?.json(),
        },
    });
    let mut rows = Vec::new();
    for &s in &schemes {
        let (mean, var) = conditional_moments_scheme(s, &p, a.dt, i)?;
        let asymptotic = if s == SchemeKind::ExactGbm {
            json!({
                "mean": asymptotic_mean_exact(&p),
                "variance": Cell::from_result(asymptotic_variance_exact(&p))?.json(),
                "rbias_mean": 0.0,
                "rbias_var": Cell::from_result(asymptotic_variance_exact(&p).map(|_| 0.0))?.json(),
            })
        } else {
            json!({
                "mean": Cell::from_result(asymptotic_mean_scheme(s, &p, a.dt))?.json(),
                "variance": Cell::from_result(asymptotic_variance_scheme(s, &p, a.dt))?.json(),
                "rbias_mean": Cell::from_result(rbias_asymptotic_mean(s, &p, a.dt))?.json(),
                "rbias_var": Cell::from_result(rbias_asymptotic_variance(s, &p, a.dt))?.json(),
            })
        };
        let mut row = json!({
            "scheme": s,
            "conditional": {
                "mean": mean,
                "variance": var,
                "rbias_mean": Cell::from_result(rbias_conditional_mean(s, &p, a.dt, t))?.json(),
                "rbias_var": Cell::from_result(rbias_conditional_variance(s, &p, a.dt, t))?.json(),
            },
            "asymptotic": asymptotic,
        });
        if a.paths > 0 {
            let est = ensemble_moments(s, &p, a.dt, &[i], a.paths, a.seed)?;
            let (m, v) = est[0];
            row["sample"] = json!({
                "mean": m.value,
                "mean_stderr": m.stderr,
                "variance": v.value,
                "variance_stderr": v.stderr,
                "n": m.n,
            });
        }
        rows.push(row);
    }
    let body = json!({ "t": t, "step_index": i, "exact": exact, "schemes": rows });
    emit(a.out.as_ref(), &json_string(&envelope(cmd, body)))
}

struct SweepRow {
    axis_value: f64,
    scheme: SchemeKind,
    dt: f64,
    t: Option<f64>,
    mean: Cell,
    var: Cell,
}

fn sweep_point(
    a: &BiasSweepArgs,
    base: &ModelParams,
    v: f64,
) -> Result<(ModelParams, f64, Option<f64>), CliError> {
    let values_err = |e: Error| CliError::flag("values", e);
    Ok(match a.axis {
        SweepAxis::Dt => {
            check_step("values", v)?;
            (*base, v, a.t)
        }
        SweepAxis::T => {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::flag(
                    "values",
                    format!("{v} must be a finite time >= 0"),
                ));
            }
            (*base, a.dt, Some(v))
        }
        SweepAxis::Y0 => (base.with_y0(v).map_err(values_err)?, a.dt, a.t),
        SweepAxis::Tau => (base.with_tau(v).map_err(values_err)?, a.dt, a.t),
    })
}

fn bias_sweep(cmd: &Command, a: &BiasSweepArgs) -> Result<(), CliError> {
    let p = params(&a.model)?;
    let schemes = parse_schemes(&a.scheme, false)?;
    let values = match &a.range {
        Some(r) => parse_range("range", r)?,
        None => a.values.clone(),
    };
    if values.is_empty() {
        return Err(CliError::flag("values", "give --values or --range"));
    }
    if a.axis != SweepAxis::Dt {
        check_step("dt", a.dt)?;
    }
    if let Some(t) = a.t {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::flag(
                "t",
                format!("{t} must be a finite time >= 0"),
            ));
        }
    }
    let mut rows = Vec::new();
    for &v in &values {
        let (q, dt, t) = sweep_point(a, &p, v)?;
        for &s in &schemes {
            let (mean, var) = match t {
                Some(t) => (
                    rbias_conditional_mean(s, &q, dt, t),
                    rbias_conditional_variance(s, &q, dt, t),
                ),
                None => (
                    rbias_asymptotic_mean(s, &q, dt),
                    rbias_asymptotic_variance(s, &q, dt),
                ),
            };
            rows.push(SweepRow {
                axis_value: v,
                scheme: s,
                dt,
                t,
                mean: Cell::from_result(mean)?,
                var: Cell::from_result(var)?,
            });
        }
    }
    let axis_column = match a.axis {
        SweepAxis::Y0 => Some("y0"),
        SweepAxis::Tau => Some("tau"),
        SweepAxis::Dt | SweepAxis::T => None,
    };
    let text = match a.format {
        Format::Csv => {
            let mut s = metadata(cmd);
            if let Some(c) = axis_column {
                write!(s, "{c},").unwrap();
            }
            writeln!(s, "{}", BiasReport::CSV_HEADER).unwrap();
            for r in &rows {
                if axis_column.is_some() {
                    write!(s, "{},", r.axis_value).unwrap();
                }
                let t = r.t.map(|t| t.to_string()).unwrap_or_default();
                writeln!(
                    s,
                    "{},{},{t},{},{}",
                    r.scheme,
                    r.dt,
                    r.mean.csv(),
                    r.var.csv()
                )
                .unwrap();
            }
            s
        }
        Format::Json => {
            let list: Vec<Value> = rows
                .iter()
                .map(|r| {
                    let mut o = json!({
                        "scheme": r.scheme,
                        "dt": r.dt,
                        "t": r.t,
                        "rbias_mean": r.mean.json(),
                        "rbias_var": r.var.json(),
                    });
                    if let Some(c) = axis_column {
                        o[c] = json!(r.axis_value);
                    }
                    o
                })
                .collect();
            json_string(&envelope(cmd, json!({ "rows": list })))
        }
    };
    emit(a.out.as_ref(), &text)?;
    if rows.iter().all(|r| !r.mean.is_value() && !r.var.is_value()) {
        return Err(CliError::ConditionFailed(
            "no requested bias exists for these parameters".into(),
        ));
    }
    Ok(())
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, CliError> {
    if s.trim().eq_ignore_ascii_case("silverman") {
        return Ok(Bandwidth::Silverman);
    }
    match s.trim().parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(CliError::flag(
            "bandwidth",
            format!("'{s}' is neither 'silverman' nor a positive number"),
        )),
    }
}

fn stationary(cmd: &Command, a: &StationaryArgs) -> Result<(), CliError> {
    let p = params(&a.model)?;
    let schemes = parse_schemes(&a.scheme, false)?;
    let n_steps = grid_step(a.t, a.dt)?;
    check_count("paths", a.paths, 2)?;
    check_count("points", a.points, 2)?;
    let bandwidth = parse_bandwidth(&a.bandwidth)?;
    let density = StationaryDensity::from_params(&p)?;
    ensure_dir(&a.out_dir)?;
    let header = metadata(cmd);
    let mut results = Vec::new();
    let mut summary = String::from("scheme,kl,bandwidth\n");
    for &s in &schemes {
        let values = terminal_values(s, &p, a.dt, n_steps, a.paths, a.seed)?;
        let fit: StationaryFit = stationary_fit(&values, &density, bandwidth, a.points)?;
        let mut text = header.clone().into_bytes();
        fit.write_csv(&mut text).expect("writing to memory");
        let path = a
            .out_dir
            .join(format!("kde_{}.csv", s.label().to_ascii_lowercase()));
        write_file(&path, &String::from_utf8(text).expect("ascii output"))?;
        writeln!(summary, "{s},{},{}", fit.kl, fit.kde.bandwidth).unwrap();
        results.push(json!({
            "scheme": s,
            "kl": fit.kl,
            "bandwidth": fit.kde.bandwidth,
            "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        }));
    }
    let body = json!({
        "stationary_law": { "alpha": density.alpha(), "beta": density.beta() },
        "window": {
            "lo": density.quantile(igbm::montecarlo::KL_TAIL)?,
            "hi": density.quantile(1.0 - igbm::montecarlo::KL_TAIL)?,
            "points": a.points,
        },
        "results": results,
    });
    write_file(
        &a.out_dir.join("kl.json"),
        &json_string(&envelope(cmd, body)),
    )?;
    emit(None, &summary)
}

fn crossing(cmd: &Command, a: &CrossingArgs) -> Result<(), CliError> {
    let p = params(&a.model)?;
    let schemes = parse_schemes(&a.scheme, false)?;
    let mus = match &a.mu_range {
        Some(r) => parse_range("mu-range", r)?,
        None if a.mu_values.is_empty() => vec![p.mu()],
        None => a.mu_values.clone(),
    };
    if a.dt.is_empty() {
        return Err(CliError::flag("dt", "at least one step required"));
    }
    for &dt in &a.dt {
        check_step("dt", dt)?;
    }
    check_count("paths", a.paths, 1)?;
    if !(p.y0() > 0.0) {
        return Err(CliError::flag("y0", "crossing needs a positive start"));
    }
    let cfg = CrossingConfig::new(a.tmax)?;
    let mut params_by_mu = Vec::with_capacity(mus.len());
    for &mu in &mus {
        params_by_mu.push((
            mu,
            p.with_mu(mu).map_err(|e| CliError::flag("mu-values", e))?,
        ));
    }
    let mut text = metadata(cmd);
    writeln!(text, "{}", CrossingRow::CSV_HEADER).unwrap();
    for (mu, q) in &params_by_mu {
        for &dt in &a.dt {
            for &s in &schemes {
                let estimate = crossing_probability(s, q, dt, &cfg, a.paths, a.seed)?;
                let row = CrossingRow {
                    mu: *mu,
                    dt,
                    scheme: s,
                    estimate,
                };
                writeln!(text, "{}", row.csv_row()).unwrap();
            }
        }
    }
    emit(a.out.as_ref(), &text)
}

/// Drift used for `property`: the given one when it applies, otherwise the
/// nearest drift of the required sign with the same magnitude.
pub fn drift_for(property: BoundaryProperty, mu: f64) -> f64 {
    if property.applies_to(mu) {
        return mu;
    }
    let m = if mu == 0.0 { 1.0 } else { mu.abs() };
    match property {
        BoundaryProperty::Unattainable => mu.abs(),
        BoundaryProperty::Absorbing => 0.0,
        BoundaryProperty::Entrance => m,
        BoundaryProperty::Exit => -m,
    }
}

fn boundary(cmd: &Command, a: &BoundaryArgs) -> Result<(), CliError> {
    let p = params(&a.model)?;
    let schemes = parse_schemes(&a.scheme, true)?;
    let properties = parse_properties(&a.property)?;
    if a.dt.is_empty() {
        return Err(CliError::flag("dt", "at least one step required"));
    }
    for &dt in &a.dt {
        check_step("dt", dt)?;
    }
    check_count("paths", a.paths, 1)?;
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for &property in &properties {
        let q = p.with_mu(drift_for(property, p.mu()))?;
        for &s in &schemes {
            if s.check_valid_for(&q).is_err() {
                skipped.push(json!({ "scheme": s, "property": property, "mu": q.mu() }));
                continue;
            }
            for &dt in &a.dt {
                results.push(boundary_check(
                    s, property, &q, dt, a.steps, a.paths, a.seed,
                )?);
            }
        }
    }
    if results.is_empty() {
        return Err(CliError::flag(
            "scheme",
            "no requested scheme applies to the requested properties",
        ));
    }
    let body = json!({ "results": results, "skipped": skipped });
    emit(a.out.as_ref(), &json_string(&envelope(cmd, body)))
}
