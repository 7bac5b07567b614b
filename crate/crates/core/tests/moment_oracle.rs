//! Independent oracles for the closed-form moments.
//!
//! Each scheme is affine in the state, `Y' = A Y + B`, with `(A, B)`
//! independent of `Y`, so its first two moments obey a scalar recursion that
//! needs only `E[A], E[A^2], E[B], E[AB], E[B^2]`. The exact process has
//! linear moment ODEs, integrated here with RK4.

use igbm::model::{
    asymptotic_mean_exact, asymptotic_variance_exact, conditional_mean_exact,
    conditional_variance_exact,
};
use igbm::moments::{
    asymptotic_mean_scheme, asymptotic_variance_scheme, conditional_moments_scheme,
};
use igbm::montecarlo::ensemble_moments;
use igbm::{ModelParams, SchemeKind};

struct StepMoments {
    a: f64,
    a2: f64,
    b: f64,
    ab: f64,
    b2: f64,
}

fn step_moments(s: SchemeKind, p: &ModelParams, dt: f64) -> StepMoments {
    let (mu, tau, sigma) = (p.mu(), p.tau(), p.sigma());
    let s2dt = sigma * sigma * dt;
    let h = mu * dt;
    let ea = (-dt / tau).exp();
    let ea2 = (s2dt - 2.0 * dt / tau).exp();
    match s {
        SchemeKind::EulerMaruyama | SchemeKind::Milstein => {
            let c = 1.0 - dt / tau;
            let extra = if s == SchemeKind::Milstein {
                0.5 * s2dt * s2dt
            } else {
                0.0
            };
            StepMoments {
                a: c,
                a2: c * c + s2dt + extra,
                b: h,
                ab: h * c,
                b2: h * h,
            }
        }
        SchemeKind::LieTrotter1 => StepMoments {
            a: ea,
            a2: ea2,
            b: h * ea,
            ab: h * ea2,
            b2: h * h * ea2,
        },
        SchemeKind::LieTrotter2 => StepMoments {
            a: ea,
            a2: ea2,
            b: h,
            ab: h * ea,
            b2: h * h,
        },
        SchemeKind::Strang1 => {
            let g = 0.5 * h;
            StepMoments {
                a: ea,
                a2: ea2,
                b: g * (ea + 1.0),
                ab: g * (ea2 + ea),
                b2: g * g * (ea2 + 2.0 * ea + 1.0),
            }
        }
        SchemeKind::Strang2 => {
            let half = (-0.5 * dt / tau).exp();
            let half2 = (0.5 * s2dt - dt / tau).exp();
            StepMoments {
                a: ea,
                a2: ea2,
                b: h * half,
                ab: h * (0.5 * s2dt - 1.5 * dt / tau).exp(),
                b2: h * h * half2,
            }
        }
        SchemeKind::ExactGbm => unreachable!(),
    }
}

/// Mean and variance after each of `n` steps.
fn recursion(s: SchemeKind, p: &ModelParams, dt: f64, n: usize) -> Vec<(f64, f64)> {
    let k = step_moments(s, p, dt);
    let (mut m, mut v) = (p.y0(), 0.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let var_a = k.a2 - k.a * k.a;
        let cov_ab = k.ab - k.a * k.b;
        let var_b = k.b2 - k.b * k.b;
        v = k.a2 * v + var_a * m * m + 2.0 * cov_ab * m + var_b;
        m = k.a * m + k.b;
        out.push((m, v));
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

fn parameter_sets() -> Vec<ModelParams> {
    vec![
        ModelParams::new(1.0, 5.0, 0.2, 10.0).unwrap(),
        ModelParams::new(0.5, 5.0, 0.6, 1.0).unwrap(),
        ModelParams::new(-0.7, 2.0, 0.9, 3.0).unwrap(),
        ModelParams::new(2.0, 1.0, 0.3, 0.0).unwrap(),
        ModelParams::new(0.0, 3.0, 0.4, 5.0).unwrap(),
    ]
}

#[test]
fn conditional_moments_follow_the_affine_recursion() {
    for p in parameter_sets() {
        for s in SchemeKind::NUMERICAL {
            for &dt in &[0.01, 0.1, 0.5, 1.0] {
                let path = recursion(s, &p, dt, 400);
                for (i, &(m, v)) in path.iter().enumerate() {
                    let (cm, cv) = conditional_moments_scheme(s, &p, dt, i + 1).unwrap();
                    let scale_m = m.abs().max(1e-6 * p.mu().abs() * p.tau());
                    assert!(
                        (cm - m).abs() <= 1e-10 * scale_m.max(1e-300),
                        "{s} dt={dt} i={} mean {cm} vs {m}",
                        i + 1
                    );
                    assert!(
                        rel(cv, v) < 1e-8 || (cv - v).abs() < 1e-14,
                        "{s} dt={dt} i={} var {cv} vs {v}",
                        i + 1
                    );
                }
            }
        }
    }
}

#[test]
fn asymptotic_closed_forms_are_fixed_points_of_the_recursion() {
    for p in parameter_sets() {
        if p.noise_ratio() >= 2.0 {
            continue;
        }
        for s in SchemeKind::NUMERICAL {
            for &dt in &[0.05, 0.5, 1.0] {
                let (Ok(mean), Ok(var)) = (
                    asymptotic_mean_scheme(s, &p, dt),
                    asymptotic_variance_scheme(s, &p, dt),
                ) else {
                    continue;
                };
                let k = step_moments(s, &p, dt);
                let next_mean = k.a * mean + k.b;
                let next_var = k.a2 * var
                    + (k.a2 - k.a * k.a) * mean * mean
                    + 2.0 * (k.ab - k.a * k.b) * mean
                    + (k.b2 - k.b * k.b);
                let scale = mean.abs().max(1e-12);
                assert!((next_mean - mean).abs() < 1e-12 * scale, "{s} dt={dt}");
                assert!(
                    (next_var - var).abs() < 1e-10 * var.abs().max(1e-12),
                    "{s} dt={dt}: {next_var} {var}"
                );
            }
        }
    }
}

/// RK4 on `m' = -m/tau + mu`, `q' = (sigma^2 - 2/tau) q + 2 mu m` with `q = E[Y^2]`.
fn exact_by_ode(p: &ModelParams, t: f64, steps: usize) -> (f64, f64) {
    let (mu, tau, s2) = (p.mu(), p.tau(), p.sigma() * p.sigma());
    let f = |m: f64, q: f64| (-m / tau + mu, (s2 - 2.0 / tau) * q + 2.0 * mu * m);
    let h = t / steps as f64;
    let (mut m, mut q) = (p.y0(), p.y0() * p.y0());
    for _ in 0..steps {
        let k1 = f(m, q);
        let k2 = f(m + 0.5 * h * k1.0, q + 0.5 * h * k1.1);
        let k3 = f(m + 0.5 * h * k2.0, q + 0.5 * h * k2.1);
        let k4 = f(m + h * k3.0, q + h * k3.1);
        m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        q += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (m, q - m * m)
}

#[test]
fn exact_moments_solve_the_moment_equations() {
    // Noise ratios 0.2, 1 and 2 hit all three variance branches.
    let cases = [
        ModelParams::new(1.0, 5.0, 0.2, 10.0).unwrap(),
        ModelParams::new(0.8, 4.0, 0.5, 2.0).unwrap(),
        ModelParams::new(0.8, 2.0, 1.0, 2.0).unwrap(),
        ModelParams::new(-0.3, 1.0, 1.5, 1.0).unwrap(),
    ];
    for p in cases {
        for &t in &[0.1, 1.0, 7.5] {
            let (m, v) = exact_by_ode(&p, t, 20_000);
            assert!(rel(conditional_mean_exact(&p, t), m) < 1e-10, "{p:?} t={t}");
            assert!(
                rel(conditional_variance_exact(&p, t), v) < 1e-8,
                "{p:?} t={t}"
            );
        }
    }
}

#[test]
fn exact_limits_match_long_integration() {
    let p = ModelParams::new(1.0, 5.0, 0.2, 10.0).unwrap();
    let (m, v) = exact_by_ode(&p, 400.0, 200_000);
    assert!(rel(asymptotic_mean_exact(&p), m) < 1e-9);
    assert!(rel(asymptotic_variance_exact(&p).unwrap(), v) < 1e-8);
}

#[test]
fn exact_moments_match_a_fine_symmetric_simulation() {
    let p = ModelParams::new(1.0, 5.0, 0.2, 10.0).unwrap();
    let dt = 0.05;
    let est = ensemble_moments(SchemeKind::Strang1, &p, dt, &[300], 100_000, 2024).unwrap();
    let (m, v) = est[0];
    assert!(m.covers(conditional_mean_exact(&p, 15.0), 3.0), "{m:?}");
    assert!(v.covers(conditional_variance_exact(&p, 15.0), 3.0), "{v:?}");
}

#[test]
fn homogeneous_splitting_matches_the_exact_flow_in_distribution() {
    let p = ModelParams::new(0.0, 5.0, 0.4, 2.0).unwrap();
    for s in SchemeKind::SPLITTING {
        for i in [1usize, 10, 100] {
            let (m, v) = conditional_moments_scheme(s, &p, 0.2, i).unwrap();
            let (gm, gv) = conditional_moments_scheme(SchemeKind::ExactGbm, &p, 0.2, i).unwrap();
            assert!(rel(m, gm) < 1e-12 && rel(v, gv) < 1e-11, "{s} {i}");
        }
    }
}
