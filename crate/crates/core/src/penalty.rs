//! Sparse penalties (soft-threshold/ℓ1, SCAD, MCP) with their exact scalar
//! minimizers. Everything downstream — AMP, state evolution, the replica
//! solver — reduces to the single-body problem
//!
//!   minimize over x:   x²/(2s) − w·x + J(x; λ, a)
//!
//! whose closed-form solution is a piecewise-linear threshold map. The same
//! map is exposed in two parameterizations: the *field* convention
//! `threshold_field(s, w)` above, and the *prox* convention
//! `threshold_prox(m, s)` for the equivalent objective (x−m)²/(2s) + J(x),
//! related by m = s·w.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    L1,
    Scad,
    Mcp,
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyFamily::L1 => "l1",
            PenaltyFamily::Scad => "scad",
            PenaltyFamily::Mcp => "mcp",
        })
    }
}

impl FromStr for PenaltyFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(PenaltyFamily::L1),
            "scad" => Ok(PenaltyFamily::Scad),
            "mcp" => Ok(PenaltyFamily::Mcp),
            _ => Err(Error::InvalidParameter {
                name: "family",
                value: f64::NAN,
                constraint: "one of l1 | scad | mcp",
            }),
        }
    }
}

/// Which branch of the piecewise minimizer produced the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// Dead zone: x* = 0.
    Zero,
    /// Soft-threshold branch: x* = s·(w − λ·sign w).
    L1Like,
    /// Reduced-curvature middle branch where the penalty unwinds.
    Transition,
    /// Unbiased outer branch: x* = s·w exactly.
    Ols,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Zero => "Zero",
            Region::L1Like => "L1Like",
            Region::Transition => "Transition",
            Region::Ols => "Ols",
        })
    }
}

/// Output of the scalar minimizer: x* = sigma_factor × (shifted input), with
/// sigma_factor = ∂x*/∂w almost everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub x_star: f64,
    pub sigma_factor: f64,
    pub region: Region,
}

/// A penalty family together with its parameters. λ ∈ (0, ∞); a ∈ (1, ∞) for
/// SCAD and MCP (stored as +∞ for ℓ1, whose threshold does not depend on it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    family: PenaltyFamily,
    lambda: f64,
    a: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            constraint: "0 < lambda < inf",
        });
    }
    Ok(())
}

impl PenaltySpec {
    pub fn l1(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(PenaltySpec {
            family: PenaltyFamily::L1,
            lambda,
            a: f64::INFINITY,
        })
    }

    pub fn scad(lambda: f64, a: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::InvalidParameter {
                name: "a",
                value: a,
                constraint: "1 < a < inf",
            });
        }
        Ok(PenaltySpec {
            family: PenaltyFamily::Scad,
            lambda,
            a,
        })
    }

    pub fn mcp(lambda: f64, a: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::InvalidParameter {
                name: "a",
                value: a,
                constraint: "1 < a < inf",
            });
        }
        Ok(PenaltySpec {
            family: PenaltyFamily::Mcp,
            lambda,
            a,
        })
    }

    /// Family-dispatched constructor; `a` is required for SCAD/MCP and
    /// ignored for ℓ1.
    pub fn new(family: PenaltyFamily, lambda: f64, a: Option<f64>) -> Result<Self> {
        match family {
            PenaltyFamily::L1 => PenaltySpec::l1(lambda),
            PenaltyFamily::Scad => PenaltySpec::scad(
                lambda,
                a.ok_or(Error::InvalidParameter {
                    name: "a",
                    value: f64::NAN,
                    constraint: "required for scad",
                })?,
            ),
            PenaltyFamily::Mcp => PenaltySpec::mcp(
                lambda,
                a.ok_or(Error::InvalidParameter {
                    name: "a",
                    value: f64::NAN,
                    constraint: "required for mcp",
                })?,
            ),
        }
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Penalty value J(x; λ, a). Continuous in x; equals λ|x| for ℓ1 and is
    /// capped at a constant for large |x| under SCAD/MCP.
    pub fn value(&self, x: f64) -> f64 {
        let (lambda, a) = (self.lambda, self.a);
        let y = x.abs();
        match self.family {
            PenaltyFamily::L1 => lambda * y,
            PenaltyFamily::Scad => {
                if y <= lambda {
                    lambda * y
                } else if y <= a * lambda {
                    -(y * y - 2.0 * a * lambda * y + lambda * lambda) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * lambda * lambda / 2.0
                }
            }
            PenaltyFamily::Mcp => {
                if y <= a * lambda {
                    lambda * y - y * y / (2.0 * a)
                } else {
                    a * lambda * lambda / 2.0
                }
            }
        }
    }

    /// Smallest `a` for which the single-body problem at curvature inverse
    /// `s` keeps a finite minimizer; the problem is well posed iff a > a_min
    /// strictly. ℓ1 is unconditionally admissible (returns 1).
    pub fn a_min(&self, s: f64) -> f64 {
        match self.family {
            PenaltyFamily::L1 => 1.0,
            PenaltyFamily::Scad => (1.0 + s).max(1.0),
            PenaltyFamily::Mcp => s.max(1.0),
        }
    }

    pub fn admissible(&self, s: f64) -> bool {
        match self.family {
            PenaltyFamily::L1 => true,
            _ => self.a > self.a_min(s),
        }
    }

    pub fn check_admissible(&self, s: f64) -> Result<()> {
        if self.admissible(s) {
            Ok(())
        } else {
            Err(Error::Inadmissible {
                a: self.a,
                a_min: self.a_min(s),
            })
        }
    }

    /// Exact minimizer of x²/(2s) − w·x + J(x) for s > 0. Odd and monotone
    /// nondecreasing in w; at exact region boundaries the lower-|w| branch
    /// applies.
    pub fn threshold_field(&self, s: f64, w: f64) -> Result<ThresholdResult> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter {
                name: "s",
                value: s,
                constraint: "0 < s < inf",
            });
        }
        if !w.is_finite() {
            return Err(Error::InvalidParameter {
                name: "w",
                value: w,
                constraint: "finite",
            });
        }
        self.check_admissible(s)?;
        Ok(self.threshold_parts(s, w))
    }

    /// Region edges of the prox map in m-space (m = s·w), ascending; unused
    /// slots hold +inf.
    pub(crate) fn m_breaks(&self, s: f64) -> [f64; 3] {
        let (lambda, a) = (self.lambda, self.a);
        match self.family {
            PenaltyFamily::L1 => [s * lambda, f64::INFINITY, f64::INFINITY],
            PenaltyFamily::Scad => [s * lambda, (s + 1.0) * lambda, a * lambda],
            PenaltyFamily::Mcp => [s * lambda, a * lambda, f64::INFINITY],
        }
    }

    /// Branch dispatch without the validity checks (callers guarantee s > 0,
    /// finite w, admissible a).
    pub(crate) fn threshold_parts(&self, s: f64, w: f64) -> ThresholdResult {
        let (lambda, a) = (self.lambda, self.a);
        let y = w.abs();
        let sgn = if w < 0.0 { -1.0 } else { 1.0 };
        if y <= lambda {
            return ThresholdResult {
                x_star: 0.0,
                sigma_factor: 0.0,
                region: Region::Zero,
            };
        }
        match self.family {
            PenaltyFamily::L1 => ThresholdResult {
                x_star: s * (w - lambda * sgn),
                sigma_factor: s,
                region: Region::L1Like,
            },
            PenaltyFamily::Scad => {
                if y <= lambda * (1.0 + 1.0 / s) {
                    ThresholdResult {
                        x_star: s * (w - lambda * sgn),
                        sigma_factor: s,
                        region: Region::L1Like,
                    }
                } else if y <= a * lambda / s {
                    let sigma = 1.0 / (1.0 / s - 1.0 / (a - 1.0));
                    ThresholdResult {
                        x_star: sigma * (w - sgn * a * lambda / (a - 1.0)),
                        sigma_factor: sigma,
                        region: Region::Transition,
                    }
                } else {
                    ThresholdResult {
                        x_star: s * w,
                        sigma_factor: s,
                        region: Region::Ols,
                    }
                }
            }
            PenaltyFamily::Mcp => {
                if y <= a * lambda / s {
                    let sigma = 1.0 / (1.0 / s - 1.0 / a);
                    ThresholdResult {
                        x_star: sigma * (w - lambda * sgn),
                        sigma_factor: sigma,
                        region: Region::Transition,
                    }
                } else {
                    ThresholdResult {
                        x_star: s * w,
                        sigma_factor: s,
                        region: Region::Ols,
                    }
                }
            }
        }
    }

    /// Prox form: exact minimizer of (x−m)²/(2s) + J(x), i.e.
    /// `threshold_field(s, m/s)`. Defined at s = 0 by its analytic limit, the
    /// identity map (the dead zone shrinks to a point).
    pub fn threshold_prox(&self, m: f64, s: f64) -> Result<ThresholdResult> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "s",
                value: s,
                constraint: "0 <= s < inf",
            });
        }
        if !m.is_finite() {
            return Err(Error::InvalidParameter {
                name: "m",
                value: m,
                constraint: "finite",
            });
        }
        if s == 0.0 {
            return Ok(ThresholdResult {
                x_star: m,
                sigma_factor: 0.0,
                region: if m == 0.0 { Region::Zero } else { Region::Ols },
            });
        }
        let w = m / s;
        if !w.is_finite() {
            // s is so small that m/s overflows: already inside the identity
            // limit, outside every breakpoint.
            self.check_admissible(s)?;
            return Ok(ThresholdResult {
                x_star: m,
                sigma_factor: s,
                region: Region::Ols,
            });
        }
        self.threshold_field(s, w)
    }

    /// Σ(s, w) = ∂x*/∂w almost everywhere (one-sided from the lower-|w|
    /// region at the boundaries).
    pub fn threshold_deriv(&self, s: f64, w: f64) -> Result<f64> {
        Ok(self.threshold_field(s, w)?.sigma_factor)
    }

    /// Minimum value L = min_x { (Q̃/2)x² − field·x + J(x) } in closed form.
    /// Requires the curvature to be admissible: Q̃ > 1/(a−1) for SCAD,
    /// Q̃ > 1/a for MCP.
    pub fn single_body_min_value(&self, qtilde: f64, field: f64) -> Result<f64> {
        if !(qtilde.is_finite() && qtilde > 0.0) {
            return Err(Error::InvalidParameter {
                name: "qtilde",
                value: qtilde,
                constraint: "0 < qtilde < inf",
            });
        }
        self.check_admissible(1.0 / qtilde)?;
        let (lambda, a) = (self.lambda, self.a);
        let y = field.abs();
        if y <= lambda {
            return Ok(0.0);
        }
        let neg2l = match self.family {
            PenaltyFamily::L1 => (y - lambda).powi(2) / qtilde,
            PenaltyFamily::Scad => {
                if y <= lambda * (1.0 + qtilde) {
                    (y - lambda).powi(2) / qtilde
                } else if y <= a * lambda * qtilde {
                    (y - a * lambda / (a - 1.0)).powi(2) / (qtilde - 1.0 / (a - 1.0))
                        + lambda * lambda / (a - 1.0)
                } else {
                    y * y / qtilde - (a + 1.0) * lambda * lambda
                }
            }
            PenaltyFamily::Mcp => {
                if y <= a * lambda * qtilde {
                    (y - lambda).powi(2) / (qtilde - 1.0 / a)
                } else {
                    y * y / qtilde - a * lambda * lambda
                }
            }
        };
        Ok(-0.5 * neg2l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scad13() -> PenaltySpec {
        PenaltySpec::scad(1.0, 3.0).unwrap()
    }

    fn mcp13() -> PenaltySpec {
        PenaltySpec::mcp(1.0, 3.0).unwrap()
    }

    #[test]
    fn construction_guards() {
        assert!(PenaltySpec::l1(0.0).is_err());
        assert!(PenaltySpec::l1(-1.0).is_err());
        assert!(PenaltySpec::scad(1.0, 1.0).is_err());
        assert!(PenaltySpec::mcp(1.0, 0.5).is_err());
        assert!(PenaltySpec::scad(f64::NAN, 3.0).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::Scad, 1.0, None).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::L1, 1.0, None).is_ok());
        assert_eq!("mcp".parse::<PenaltyFamily>().unwrap(), PenaltyFamily::Mcp);
        assert!("lasso".parse::<PenaltyFamily>().is_err());
    }

    #[test]
    fn penalty_values() {
        assert_eq!(scad13().value(0.5), 0.5);
        assert!((scad13().value(2.0) - 1.75).abs() < 1e-15);
        assert_eq!(scad13().value(100.0), 2.0); // (a+1)λ²/2
        assert_eq!(mcp13().value(5.0), 1.5); // aλ²/2
        assert!((mcp13().value(1.0) - (1.0 - 1.0 / 6.0)).abs() < 1e-15);
        let l1 = PenaltySpec::l1(0.7).unwrap();
        assert!((l1.value(-3.0) - 2.1).abs() < 1e-15);
    }

    #[test]
    fn penalty_value_is_continuous_and_even() {
        for p in [scad13(), mcp13(), PenaltySpec::mcp(0.4, 1.2).unwrap()] {
            for edge in [p.lambda(), p.a() * p.lambda()] {
                let lo = p.value(edge - 1e-9);
                let hi = p.value(edge + 1e-9);
                assert!((lo - hi).abs() < 1e-8, "{p:?} at {edge}");
            }
            for x in [-2.3, -0.4, 1.7] {
                assert_eq!(p.value(x), p.value(-x));
            }
        }
    }

    #[test]
    fn large_a_values_approach_soft_penalty() {
        let lambda = 0.8;
        let scad = PenaltySpec::scad(lambda, 1e8).unwrap();
        let mcp = PenaltySpec::mcp(lambda, 1e8).unwrap();
        let mut worst: f64 = 0.0;
        let mut x = -10.0;
        while x <= 10.0 {
            worst = worst.max((scad.value(x) - lambda * x.abs()).abs());
            worst = worst.max((mcp.value(x) - lambda * x.abs()).abs());
            x += 0.01;
        }
        assert!(worst <= 1e-6, "sup deviation {worst}");
    }

    #[test]
    fn a_min_formulas() {
        assert_eq!(scad13().a_min(0.5), 1.5);
        assert_eq!(mcp13().a_min(0.5), 1.0);
        assert_eq!(scad13().a_min(2.5), 3.5);
        assert_eq!(PenaltySpec::l1(1.0).unwrap().a_min(100.0), 1.0);
        // strictness: a == a_min is rejected
        let p = PenaltySpec::scad(1.0, 2.0).unwrap();
        assert!(p.admissible(0.999));
        assert!(!p.admissible(1.0));
        match p.threshold_field(1.0, 0.3).unwrap_err() {
            Error::Inadmissible { a, a_min } => {
                assert_eq!(a, 2.0);
                assert_eq!(a_min, 2.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn threshold_anchor_points() {
        let t = scad13().threshold_field(1.0, 1.5).unwrap();
        assert!((t.x_star - 0.5).abs() < 1e-15);
        assert_eq!(t.region, Region::L1Like);

        let t = scad13().threshold_field(1.0, 2.5).unwrap();
        assert!((t.x_star - 2.0).abs() < 1e-15);
        assert_eq!(t.region, Region::Transition);
        assert!((t.sigma_factor - 2.0).abs() < 1e-15);

        let t = mcp13().threshold_field(1.0, 2.0).unwrap();
        assert!((t.x_star - 1.5).abs() < 1e-15);
        assert_eq!(t.region, Region::Transition);

        let t = scad13().threshold_field(1.0, 0.0).unwrap();
        assert_eq!(t.x_star, 0.0);
        assert_eq!(t.region, Region::Zero);

        // unbiased outer branch is exact
        let t = scad13().threshold_field(0.7, 9.0).unwrap();
        assert_eq!(t.x_star, 0.7 * 9.0);
        assert_eq!(t.region, Region::Ols);
    }

    #[test]
    fn prox_is_field_with_rescaled_input() {
        let t = scad13().threshold_prox(1.5, 1.0).unwrap();
        assert!((t.x_star - 0.5).abs() < 1e-15);

        let t = mcp13().threshold_prox(2.0, 0.5).unwrap();
        assert!((t.x_star - 1.8).abs() < 1e-12);
        assert_eq!(t.region, Region::Transition);

        for p in [scad13(), mcp13(), PenaltySpec::l1(0.3).unwrap()] {
            for m in [-4.0, -0.9, 0.2, 2.7] {
                for s in [0.3, 1.0, 1.7] {
                    if !p.admissible(s) {
                        continue;
                    }
                    let a = p.threshold_prox(m, s).unwrap();
                    let b = p.threshold_field(s, m / s).unwrap();
                    assert_eq!(a, b);
                }
            }
        }

        // vanishing step: identity up to the shrunken dead zone
        let t = scad13().threshold_prox(0.7, 1e-9).unwrap();
        assert!((t.x_star - 0.7).abs() < 1e-6);
        let t = mcp13().threshold_prox(-0.7, 0.0).unwrap();
        assert_eq!(t.x_star, -0.7);
        assert_eq!(t.sigma_factor, 0.0);
        let t = mcp13().threshold_prox(0.0, 0.0).unwrap();
        assert_eq!(t.region, Region::Zero);
    }

    #[test]
    fn threshold_is_odd_and_monotone() {
        for p in [
            scad13(),
            mcp13(),
            PenaltySpec::l1(0.6).unwrap(),
            PenaltySpec::scad(0.4, 5.0).unwrap(),
        ] {
            let s = 0.8;
            let mut prev = f64::NEG_INFINITY;
            let mut w = -8.0;
            while w <= 8.0 {
                let t = p.threshold_field(s, w).unwrap();
                let neg = p.threshold_field(s, -w).unwrap();
                assert!(
                    (t.x_star + neg.x_star).abs() < 1e-12,
                    "odd symmetry {p:?} w={w}"
                );
                assert!(t.x_star >= prev - 1e-12, "monotone {p:?} w={w}");
                assert!(t.x_star == 0.0 || t.x_star.signum() == w.signum());
                prev = t.x_star;
                w += 0.0173;
            }
        }
    }

    #[test]
    fn threshold_is_continuous_at_region_boundaries() {
        // |x*(b+h) − x*(b−h)| must be explained by the local slope: any true
        // jump would survive the h → 0 narrowing.
        let h = 1e-7;
        let cases: Vec<(PenaltySpec, f64)> = vec![
            (scad13(), 1.0),
            (scad13(), 0.35),
            (PenaltySpec::scad(0.7, 2.2).unwrap(), 0.9),
            (mcp13(), 1.0),
            (PenaltySpec::mcp(0.7, 4.0).unwrap(), 2.1),
            (PenaltySpec::l1(1.3).unwrap(), 0.6),
        ];
        for (p, s) in cases {
            let bounds = match p.family() {
                PenaltyFamily::L1 => vec![p.lambda()],
                PenaltyFamily::Scad => vec![
                    p.lambda(),
                    p.lambda() * (1.0 + 1.0 / s),
                    p.a() * p.lambda() / s,
                ],
                PenaltyFamily::Mcp => vec![p.lambda(), p.a() * p.lambda() / s],
            };
            for b in bounds {
                let lo = p.threshold_field(s, b - h).unwrap();
                let hi = p.threshold_field(s, b + h).unwrap();
                let slope = lo.sigma_factor.max(hi.sigma_factor);
                let defect = (hi.x_star - lo.x_star).abs() - 2.0 * h * slope;
                assert!(defect < 1e-9, "{p:?} s={s} boundary {b}: defect {defect}");
            }
        }
    }

    #[test]
    fn deriv_matches_finite_differences() {
        let h = 1e-6;
        for p in [scad13(), mcp13(), PenaltySpec::l1(0.6).unwrap()] {
            let s = 1.3;
            if !p.admissible(s) {
                continue;
            }
            let mut w: f64 = -6.0;
            while w <= 6.0 {
                // stay away from region boundaries
                let near_boundary = [
                    p.lambda(),
                    p.lambda() * (1.0 + 1.0 / s),
                    p.a() * p.lambda() / s,
                ]
                .iter()
                .any(|b| (w.abs() - b).abs() < 1e-3);
                if !near_boundary {
                    let d = p.threshold_deriv(s, w).unwrap();
                    let fd = (p.threshold_field(s, w + h).unwrap().x_star
                        - p.threshold_field(s, w - h).unwrap().x_star)
                        / (2.0 * h);
                    assert!((d - fd).abs() < 1e-4, "{p:?} w={w}: {d} vs {fd}");
                }
                w += 0.0519;
            }
        }
        assert_eq!(scad13().threshold_deriv(1.0, 1.5).unwrap(), 1.0);
        assert_eq!(scad13().threshold_deriv(1.0, 2.5).unwrap(), 2.0);
        assert_eq!(scad13().threshold_deriv(1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn min_value_anchor_points() {
        assert!((scad13().single_body_min_value(1.0, 1.5).unwrap() + 0.125).abs() < 1e-15);
        assert!((mcp13().single_body_min_value(1.0, 2.0).unwrap() + 0.75).abs() < 1e-15);
        assert_eq!(scad13().single_body_min_value(1.0, 0.8).unwrap(), 0.0);
        assert_eq!(mcp13().single_body_min_value(2.0, -0.5).unwrap(), 0.0);
        // curvature admissibility
        assert!(scad13().single_body_min_value(0.5, 1.0).is_err()); // 0.5 == 1/(a−1)
        assert!(mcp13().single_body_min_value(0.2, 1.0).is_err());
    }

    #[test]
    fn min_value_equals_objective_at_minimizer() {
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..300 {
            let lambda = 0.05 + 1.95 * next();
            let qtilde = 0.2 + 3.0 * next();
            let fam = (next() * 3.0) as usize;
            let a = 0.2 + 1.0 / qtilde + (if fam == 0 { 1.0 } else { 0.0 }) + 10.0 * next();
            let p = match fam {
                0 => PenaltySpec::scad(lambda, a).unwrap(),
                1 => PenaltySpec::mcp(lambda, a).unwrap(),
                _ => PenaltySpec::l1(lambda).unwrap(),
            };
            let field = 12.0 * (next() - 0.5);
            let l = p.single_body_min_value(qtilde, field).unwrap();
            let x = p.threshold_field(1.0 / qtilde, field).unwrap().x_star;
            let obj = 0.5 * qtilde * x * x - field * x + p.value(x);
            assert!(
                (l - obj).abs() < 1e-10,
                "{p:?} qtilde={qtilde} field={field}: {l} vs {obj}"
            );
        }
    }
}
