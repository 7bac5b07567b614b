//! Discrete boundary properties of the schemes at zero.
//!
//! A scheme has a discrete property when a single step preserves it with
//! probability one:
//!
//! | property     | requires | from      | every step gives |
//! |--------------|----------|-----------|------------------|
//! | unattainable | mu >= 0  | y > 0     | y' > 0           |
//! | absorbing    | mu = 0   | y = 0     | y' = 0           |
//! | entrance     | mu > 0   | y = 0     | y' > 0           |
//! | exit         | mu < 0   | y <= 0    | y' < 0           |

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::montecarlo::EstimateWithError;
use crate::noise::PathNoise;
use crate::schemes::SchemeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryProperty {
    Unattainable,
    Absorbing,
    Entrance,
    Exit,
}

impl BoundaryProperty {
    pub const ALL: [BoundaryProperty; 4] = [
        BoundaryProperty::Unattainable,
        BoundaryProperty::Absorbing,
        BoundaryProperty::Entrance,
        BoundaryProperty::Exit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BoundaryProperty::Unattainable => "unattainable",
            BoundaryProperty::Absorbing => "absorbing",
            BoundaryProperty::Entrance => "entrance",
            BoundaryProperty::Exit => "exit",
        }
    }

    fn requirement(self) -> &'static str {
        match self {
            BoundaryProperty::Unattainable => "mu >= 0",
            BoundaryProperty::Absorbing => "mu = 0",
            BoundaryProperty::Entrance => "mu > 0",
            BoundaryProperty::Exit => "mu < 0",
        }
    }

    pub fn applies_to(self, mu: f64) -> bool {
        match self {
            BoundaryProperty::Unattainable => mu >= 0.0,
            BoundaryProperty::Absorbing => mu == 0.0,
            BoundaryProperty::Entrance => mu > 0.0,
            BoundaryProperty::Exit => mu < 0.0,
        }
    }

    pub fn check_applicable(self, p: &ModelParams) -> Result<()> {
        if self.applies_to(p.mu()) {
            Ok(())
        } else {
            Err(Error::PropertyNotApplicable {
                property: self.label(),
                requirement: self.requirement(),
                mu: p.mu(),
            })
        }
    }

    /// Whether the step `from -> to` breaks the property.
    pub fn violated(self, from: f64, to: f64) -> bool {
        match self {
            BoundaryProperty::Unattainable | BoundaryProperty::Entrance => {
                debug_assert!(self == BoundaryProperty::Entrance || from > 0.0);
                !(to > 0.0)
            }
            BoundaryProperty::Absorbing => to != 0.0,
            BoundaryProperty::Exit => !(to < 0.0),
        }
    }
}

impl fmt::Display for BoundaryProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BoundaryProperty {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unattainable" => Ok(BoundaryProperty::Unattainable),
            "absorbing" => Ok(BoundaryProperty::Absorbing),
            "entrance" => Ok(BoundaryProperty::Entrance),
            "exit" => Ok(BoundaryProperty::Exit),
            other => Err(format!(
                "unknown property '{other}' (expected unattainable, absorbing, entrance or exit)"
            )),
        }
    }
}

/// Whether `scheme` has the discrete `property` for every step size.
pub fn analytic_guarantee(
    scheme: SchemeKind,
    property: BoundaryProperty,
    p: &ModelParams,
) -> Result<bool> {
    property.check_applicable(p)?;
    scheme.check_valid_for(p)?;
    Ok(match scheme {
        SchemeKind::EulerMaruyama | SchemeKind::Milstein => property == BoundaryProperty::Absorbing,
        _ => true,
    })
}

/// Largest step for which a Milstein step from `y` stays positive for every
/// increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MilsteinThreshold {
    /// Positive for all increments iff `dt` is strictly below the bound.
    Bounded(f64),
    /// Positive for all increments and every `dt`.
    Unconditional,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExactMilsteinThreshold {
    Bounded(BigRational),
    Unconditional,
}

fn check_positive_state(y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "y",
            value: y,
            reason: "threshold is defined for positive states",
        })
    }
}

/// `y / (sigma^2 y + 2y/tau - 2mu)`.
///
/// The Milstein update is a quadratic in the increment with minimum
/// `y/2 - dt (sigma^2 y/2 + y/tau - mu)` at `xi = -1/sigma`.
pub fn milstein_positivity_threshold(p: &ModelParams, y: f64) -> Result<MilsteinThreshold> {
    check_positive_state(y)?;
    let s2 = p.sigma() * p.sigma();
    let den = s2 * y + 2.0 * y / p.tau() - 2.0 * p.mu();
    Ok(if den > 0.0 {
        MilsteinThreshold::Bounded(y / den)
    } else {
        MilsteinThreshold::Unconditional
    })
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite parameters")
}

/// The same threshold in exact arithmetic on the binary values of the inputs.
pub fn milstein_positivity_threshold_exact(
    p: &ModelParams,
    y: f64,
) -> Result<ExactMilsteinThreshold> {
    check_positive_state(y)?;
    let (mu, tau, sigma, y) = (
        rational(p.mu()),
        rational(p.tau()),
        rational(p.sigma()),
        rational(y),
    );
    let two = BigRational::from_integer(BigInt::from(2));
    let den = &sigma * &sigma * &y + &two * &y / &tau - &two * &mu;
    Ok(if den > BigRational::from_integer(BigInt::from(0)) {
        ExactMilsteinThreshold::Bounded(y / den)
    } else {
        ExactMilsteinThreshold::Unconditional
    })
}

/// Positive starting states probed in addition to simulated ones.
pub const STRESS_STATES: [f64; 8] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

fn stress_states(property: BoundaryProperty) -> Vec<f64> {
    match property {
        BoundaryProperty::Unattainable => STRESS_STATES.to_vec(),
        BoundaryProperty::Exit => std::iter::once(0.0)
            .chain(STRESS_STATES.iter().map(|y| -y))
            .collect(),
        BoundaryProperty::Absorbing | BoundaryProperty::Entrance => Vec::new(),
    }
}

/// Largest |z| the noise generator can produce is about 8.3.
const MAX_NORMAL: f64 = 9.0;

/// States closer to zero than this restart the probing path: one more step
/// could shrink them below the smallest positive double, which would test
/// floating-point underflow rather than the scheme.
pub fn underflow_guard(p: &ModelParams, dt: f64) -> f64 {
    let s = p.sigma();
    let shrink = (1.0 / p.tau() + 0.5 * s * s) * dt + s * dt.sqrt() * MAX_NORMAL;
    (f64::MIN_POSITIVE.ln() + shrink).exp().max(1e-250)
}

/// Fraction of one-step transitions that violate `property`.
///
/// Absorbing and entrance take one step from zero per path. Unattainable and
/// exit follow each path from `|y0|` (resp. `-|y0|`) for up to `n_steps`
/// steps, counting every transition until a violation ends the path, then add
/// one step from each stress state per path.
pub fn empirical_violation_rate(
    scheme: SchemeKind,
    p: &ModelParams,
    dt: f64,
    property: BoundaryProperty,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    property.check_applicable(p)?;
    scheme.check_valid_for(p)?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            value: 0.0,
            reason: "must be positive",
        });
    }
    let stress = stress_states(property);
    let start = match property {
        BoundaryProperty::Unattainable => p.y0().abs().max(f64::MIN_POSITIVE),
        BoundaryProperty::Exit => -p.y0().abs(),
        _ => 0.0,
    };
    let guard = underflow_guard(p, dt);
    let (transitions, violations) = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut noise = PathNoise::new(seed, path as u64);
            let mut step = |y: f64| scheme.step(p, y, scheme.draw(noise.next_raw(), dt), dt);
            let (mut count, mut bad) = (0usize, 0usize);
            match property {
                BoundaryProperty::Absorbing | BoundaryProperty::Entrance => {
                    count = 1;
                    bad = property.violated(0.0, step(0.0)) as usize;
                }
                BoundaryProperty::Unattainable | BoundaryProperty::Exit => {
                    let mut y = start;
                    for _ in 0..n_steps {
                        let next = step(y);
                        count += 1;
                        if property.violated(y, next) {
                            bad += 1;
                            break;
                        }
                        y = if next.abs() < guard { start } else { next };
                    }
                    for &s in &stress {
                        count += 1;
                        bad += property.violated(s, step(s)) as usize;
                    }
                }
            }
            (count, bad)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(EstimateWithError::proportion(violations, transitions))
}

/// Outcome of one (scheme, property, step) check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCheckResult {
    pub scheme: SchemeKind,
    pub property: BoundaryProperty,
    pub dt: f64,
    pub mu: f64,
    pub guaranteed: bool,
    pub violation_rate: Option<EstimateWithError>,
}

impl Serialize for BoundaryCheckResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Flat {
            scheme: SchemeKind,
            property: BoundaryProperty,
            dt: f64,
            mu: f64,
            guaranteed: bool,
            violation_rate: Option<f64>,
            stderr: Option<f64>,
            n: Option<usize>,
        }
        Flat {
            scheme: self.scheme,
            property: self.property,
            dt: self.dt,
            mu: self.mu,
            guaranteed: self.guaranteed,
            violation_rate: self.violation_rate.map(|e| e.value),
            stderr: self.violation_rate.map(|e| e.stderr),
            n: self.violation_rate.map(|e| e.n),
        }
        .serialize(serializer)
    }
}

/// Analytic guarantee plus an empirical estimate over `n_paths` paths.
pub fn boundary_check(
    scheme: SchemeKind,
    property: BoundaryProperty,
    p: &ModelParams,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<BoundaryCheckResult> {
    let guaranteed = analytic_guarantee(scheme, property, p)?;
    let rate = empirical_violation_rate(scheme, p, dt, property, n_steps, n_paths, seed)?;
    Ok(BoundaryCheckResult {
        scheme,
        property,
        dt,
        mu: p.mu(),
        guaranteed,
        violation_rate: Some(rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::NoiseDraw;
    use proptest::prelude::*;

    fn params(mu: f64) -> ModelParams {
        ModelParams::new(mu, 5.0, 5.0, 1.0).unwrap()
    }

    #[test]
    fn guarantee_examples() {
        let pos = params(0.5);
        assert!(
            analytic_guarantee(SchemeKind::Strang1, BoundaryProperty::Unattainable, &pos).unwrap()
        );
        assert!(!analytic_guarantee(
            SchemeKind::EulerMaruyama,
            BoundaryProperty::Unattainable,
            &pos
        )
        .unwrap());
        let zero = params(0.0);
        assert!(
            analytic_guarantee(SchemeKind::Milstein, BoundaryProperty::Absorbing, &zero).unwrap()
        );
        assert!(analytic_guarantee(
            SchemeKind::EulerMaruyama,
            BoundaryProperty::Absorbing,
            &zero
        )
        .unwrap());
        assert!(
            !analytic_guarantee(SchemeKind::Milstein, BoundaryProperty::Unattainable, &zero)
                .unwrap()
        );
        assert!(
            analytic_guarantee(SchemeKind::ExactGbm, BoundaryProperty::Unattainable, &zero)
                .unwrap()
        );
        let neg = params(-0.5);
        for s in SchemeKind::SPLITTING {
            assert!(analytic_guarantee(s, BoundaryProperty::Exit, &neg).unwrap());
            assert!(analytic_guarantee(s, BoundaryProperty::Entrance, &pos).unwrap());
        }
        assert!(!analytic_guarantee(SchemeKind::Milstein, BoundaryProperty::Exit, &neg).unwrap());
    }

    #[test]
    fn inapplicable_properties_are_rejected() {
        let cases = [
            (BoundaryProperty::Unattainable, -0.1),
            (BoundaryProperty::Absorbing, 0.3),
            (BoundaryProperty::Entrance, 0.0),
            (BoundaryProperty::Exit, 0.0),
        ];
        for (prop, mu) in cases {
            assert!(matches!(
                analytic_guarantee(SchemeKind::Strang2, prop, &params(mu)),
                Err(Error::PropertyNotApplicable { .. })
            ));
        }
    }

    #[test]
    fn threshold_examples() {
        let t = milstein_positivity_threshold(&params(0.5), 1.0).unwrap();
        assert_eq!(t, MilsteinThreshold::Bounded(1.0 / 24.4));
        let MilsteinThreshold::Bounded(b) =
            milstein_positivity_threshold(&params(0.0), 1.0).unwrap()
        else {
            panic!()
        };
        assert!((b - 5.0 / 127.0).abs() < 1e-17);
        assert_eq!(
            milstein_positivity_threshold(&params(100.0), 1.0).unwrap(),
            MilsteinThreshold::Unconditional
        );
        assert!(milstein_positivity_threshold(&params(0.0), 0.0).is_err());
    }

    #[test]
    fn exact_threshold_values() {
        let want = |n: i64, d: i64| {
            ExactMilsteinThreshold::Bounded(BigRational::new(BigInt::from(n), BigInt::from(d)))
        };
        assert_eq!(
            milstein_positivity_threshold_exact(&params(0.5), 1.0).unwrap(),
            want(5, 122)
        );
        assert_eq!(
            milstein_positivity_threshold_exact(&params(0.0), 1.0).unwrap(),
            want(5, 127)
        );
        assert_eq!(
            milstein_positivity_threshold_exact(&params(100.0), 1.0).unwrap(),
            ExactMilsteinThreshold::Unconditional
        );
    }

    #[test]
    fn splitting_schemes_never_violate() {
        for s in SchemeKind::SPLITTING {
            for &dt in &[0.01, 0.1, 1.0, 10.0] {
                for (prop, mu) in [
                    (BoundaryProperty::Unattainable, 0.5),
                    (BoundaryProperty::Unattainable, 0.0),
                    (BoundaryProperty::Absorbing, 0.0),
                    (BoundaryProperty::Entrance, 0.5),
                    (BoundaryProperty::Exit, -0.5),
                ] {
                    let r = boundary_check(s, prop, &params(mu), dt, 50, 500, 3).unwrap();
                    assert!(r.guaranteed);
                    assert_eq!(r.violation_rate.unwrap().value, 0.0, "{s} {prop} {dt}");
                }
            }
        }
    }

    #[test]
    fn taylor_schemes_violate_near_zero() {
        let p = params(0.5).with_y0(0.01).unwrap();
        let e = empirical_violation_rate(
            SchemeKind::EulerMaruyama,
            &p,
            0.05,
            BoundaryProperty::Unattainable,
            10,
            20_000,
            1,
        )
        .unwrap();
        assert!(e.value > 0.0);
        let m = empirical_violation_rate(
            SchemeKind::Milstein,
            &params(0.0),
            0.05,
            BoundaryProperty::Unattainable,
            10,
            5_000,
            1,
        )
        .unwrap();
        assert!(m.value > 0.0);
        let a = empirical_violation_rate(
            SchemeKind::EulerMaruyama,
            &params(0.0),
            0.05,
            BoundaryProperty::Absorbing,
            10,
            1000,
            1,
        )
        .unwrap();
        assert_eq!(a.value, 0.0);
        let x = empirical_violation_rate(
            SchemeKind::EulerMaruyama,
            &params(-0.5),
            0.05,
            BoundaryProperty::Exit,
            10,
            5000,
            1,
        )
        .unwrap();
        assert!(x.value > 0.0);
    }

    #[test]
    fn milstein_below_threshold_at_homogeneous_drift_never_crosses() {
        // With mu = 0 the threshold does not depend on the state.
        let r = empirical_violation_rate(
            SchemeKind::Milstein,
            &params(0.0),
            0.039,
            BoundaryProperty::Unattainable,
            20,
            20_000,
            4,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn result_json_fields() {
        let r = boundary_check(
            SchemeKind::Strang2,
            BoundaryProperty::Exit,
            &params(-1.0),
            0.1,
            5,
            10,
            1,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        for key in [
            "scheme",
            "property",
            "dt",
            "guaranteed",
            "violation_rate",
            "stderr",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["property"], "exit");
        assert_eq!(v["violation_rate"], 0.0);
    }

    #[test]
    fn property_parsing() {
        for p in BoundaryProperty::ALL {
            assert_eq!(p.label().parse::<BoundaryProperty>().unwrap(), p);
        }
        assert!("sticky".parse::<BoundaryProperty>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn milstein_step_below_threshold_stays_positive(
            y in 1e-4f64..20.0,
            mu in -2.0f64..2.0,
            tau in 0.2f64..10.0,
            sigma in 0.05f64..5.0,
            frac in 0.0f64..0.999,
            xi in -50.0f64..50.0,
        ) {
            let p = ModelParams::new(mu, tau, sigma, y).unwrap();
            let dt = match milstein_positivity_threshold(&p, y).unwrap() {
                MilsteinThreshold::Bounded(b) => frac * b,
                MilsteinThreshold::Unconditional => frac * 10.0,
            };
            prop_assume!(dt > 0.0);
            // Quadratic a xi^2 + b xi + c in the increment; no real root
            // means the update cannot reach zero.
            let a = 0.5 * sigma * sigma * y;
            let b = sigma * y;
            let c = y + dt * (mu - y / tau) - 0.5 * sigma * sigma * y * dt;
            prop_assert!(b * b - 4.0 * a * c < 0.0);
            let out = SchemeKind::Milstein.step(&p, y, NoiseDraw::single(xi), dt);
            prop_assert!(out > 0.0);
            let worst = SchemeKind::Milstein.step(&p, y, NoiseDraw::single(-1.0 / sigma), dt);
            prop_assert!(worst > 0.0);
        }

        #[test]
        fn milstein_above_threshold_has_a_negative_step(
            y in 1e-3f64..20.0,
            mu in -2.0f64..2.0,
            tau in 0.2f64..10.0,
            sigma in 0.05f64..5.0,
            frac in 1.01f64..5.0,
        ) {
            let p = ModelParams::new(mu, tau, sigma, y).unwrap();
            if let MilsteinThreshold::Bounded(b) = milstein_positivity_threshold(&p, y).unwrap() {
                let worst = SchemeKind::Milstein.step(&p, y, NoiseDraw::single(-1.0 / sigma), frac * b);
                prop_assert!(worst < 0.0);
            }
        }
    }
}
