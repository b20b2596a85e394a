//! Scalar analysis kernel shared by every solver: expectations over the
//! standard Gaussian measure Dz, a complementary error function, and the
//! two-point width mixture that drives the replica equations.
//!
//! Two integration routes are provided. `GaussQuadrature` is Gauss–Hermite
//! for smooth integrands on the whole line. Piecewise integrands (threshold
//! operators have kinks at known breakpoints) go through `expect_on` /
//! `expect_piecewise_even`, which lay fixed-order Gauss–Legendre panels
//! between the breakpoints so no panel straddles a kink.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::sync::LazyLock;

/// Integration cutoff for the standard normal: mass beyond |z| = 12 is
/// ~1.8e-33 and below every tolerance used in this crate.
pub const Z_CUT: f64 = 12.0;

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014326779;

/// Standard normal density.
#[inline]
pub fn phi(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

// ---------------------------------------------------------------------------
// Golub–Welsch construction
// ---------------------------------------------------------------------------

/// Nodes and weights of the quadrature rule whose Jacobi matrix has zero
/// diagonal and the given off-diagonal, scaled so the weights sum to `mu0`.
fn golub_welsch(offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = offdiag.len() + 1;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in offdiag.iter().enumerate() {
        j[(k, k + 1)] = b;
        j[(k + 1, k)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

// ---------------------------------------------------------------------------
// Gauss–Hermite for the Dz measure
// ---------------------------------------------------------------------------

/// Gauss–Hermite rule expressed directly in the unit-normal measure:
/// `expect(f)` approximates E[f(z)] with z ~ N(0,1). Weights sum to 1 by
/// construction.
#[derive(Debug, Clone)]
pub struct GaussQuadrature {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussQuadrature {
    /// Rule with `order` nodes (recurrence for the probabilists' Hermite
    /// polynomials: off-diagonal sqrt(k), total mass 1).
    pub fn hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter {
                name: "order",
                value: 0.0,
                constraint: "order >= 1",
            });
        }
        let offdiag: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
        let (nodes, weights) = golub_welsch(&offdiag, 1.0);
        Ok(GaussQuadrature {
            order,
            nodes,
            weights,
        })
    }

    /// Shared default rule (order 101).
    pub fn default_hermite() -> &'static GaussQuadrature {
        static DEFAULT: LazyLock<GaussQuadrature> =
            LazyLock::new(|| GaussQuadrature::hermite(101).expect("order 101 is valid"));
        &DEFAULT
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// E[f(z)] over the rule's nodes. Errs if `f` returns a non-finite value.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(z);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { node: z });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// E[f(z)] with the shared order-101 rule.
pub fn gauss_expect(f: impl FnMut(f64) -> f64) -> Result<f64> {
    GaussQuadrature::default_hermite().expect(f)
}

// ---------------------------------------------------------------------------
// Panel-based Gauss–Legendre against the normal density
// ---------------------------------------------------------------------------

const LEGENDRE_ORDER: usize = 48;
/// Longest panel a single Legendre rule is trusted with.
const PANEL_MAX: f64 = 2.0;

static LEGENDRE: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| {
    let offdiag: Vec<f64> = (1..LEGENDRE_ORDER)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&offdiag, 2.0)
});

/// ∫_a^b f(z) φ(z) dz by Gauss–Legendre panels of length at most `PANEL_MAX`.
/// Intended for segments between integrand breakpoints; `f` must be smooth on
/// (a, b).
pub fn expect_on(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "interval",
            value: if a.is_finite() { b } else { a },
            constraint: "finite endpoints",
        });
    }
    if b <= a {
        return Ok(0.0);
    }
    let (xs, ws) = &*LEGENDRE;
    let n_panels = ((b - a) / PANEL_MAX).ceil() as usize;
    let h = (b - a) / n_panels as f64;
    let mut acc = 0.0;
    for p in 0..n_panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (&x, &w) in xs.iter().zip(ws) {
            let z = mid + half * x;
            let v = f(z);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { node: z });
            }
            acc += w * half * v * phi(z);
        }
    }
    Ok(acc)
}

/// E[f(z)] for an even integrand with kinks at the given nonnegative
/// breakpoints: integrates 2·∫_0^{Z_CUT} f φ with panels split at every
/// breakpoint. Breakpoints outside (0, Z_CUT) are ignored.
pub fn expect_piecewise_even(breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    Ok(expect_piecewise_even_multi(breaks, |z| [f(z)])?[0])
}

/// Same panel scheme as `expect_piecewise_even`, but integrating K components
/// in one sweep so a shared expensive evaluation (a threshold solve, say) is
/// done once per node.
pub fn expect_piecewise_even_multi<const K: usize>(
    breaks: &[f64],
    mut f: impl FnMut(f64) -> [f64; K],
) -> Result<[f64; K]> {
    let mut edges = [0.0; 8];
    let mut n_edges = 1;
    debug_assert!(breaks.len() + 2 <= edges.len());
    for &b in breaks {
        if b > 0.0 && b < Z_CUT {
            edges[n_edges] = b;
            n_edges += 1;
        }
    }
    edges[n_edges] = Z_CUT;
    n_edges += 1;
    edges[..n_edges].sort_by(f64::total_cmp);
    let (xs, ws) = &*LEGENDRE;
    let mut acc = [0.0; K];
    for win in edges[..n_edges].windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let n_panels = ((b - a) / PANEL_MAX).ceil() as usize;
        let h = (b - a) / n_panels as f64;
        for p in 0..n_panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            let half = 0.5 * h;
            for (&x, &w) in xs.iter().zip(ws) {
                let z = mid + half * x;
                let vs = f(z);
                let scale = w * half * phi(z);
                for (a_k, v) in acc.iter_mut().zip(vs) {
                    if !v.is_finite() {
                        return Err(Error::NonFiniteIntegrand { node: z });
                    }
                    *a_k += scale * v;
                }
            }
        }
    }
    for a_k in acc.iter_mut() {
        *a_k *= 2.0;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Complementary error function
// ---------------------------------------------------------------------------

// Rational approximations in three ranges (Cody's classic scheme), with the
// split-exponential trick that keeps exp(-x*x) accurate to the last bit.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const FRAC_1_SQRT_PI: f64 = 5.6418958354775628695e-1;
const ERFC_XBIG: f64 = 26.543;

/// exp(-y*y) computed as exp(-hi*hi)*exp(-del) with hi a 1/16-grid snap of y,
/// which avoids the rounding of y*y for large arguments.
#[inline]
fn exp_msq(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let del = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-del).exp()
}

/// Complementary error function, relative error at double precision across
/// the full range; underflows to exactly 0 past x ≈ 26.5.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 {
        let ysq = y * y;
        let mut xnum = ERF_A[4] * ysq;
        let mut xden = ysq;
        for i in 0..3 {
            xnum = (xnum + ERF_A[i]) * ysq;
            xden = (xden + ERF_B[i]) * ysq;
        }
        return 1.0 - x * (xnum + ERF_A[3]) / (xden + ERF_B[3]);
    } else if y <= 4.0 {
        let mut xnum = ERF_C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + ERF_C[i]) * y;
            xden = (xden + ERF_D[i]) * y;
        }
        exp_msq(y) * (xnum + ERF_C[7]) / (xden + ERF_D[7])
    } else if y < ERFC_XBIG {
        let ysq = 1.0 / (y * y);
        let mut xnum = ERF_P[5] * ysq;
        let mut xden = ysq;
        for i in 0..4 {
            xnum = (xnum + ERF_P[i]) * ysq;
            xden = (xden + ERF_Q[i]) * ysq;
        }
        let r = ysq * (xnum + ERF_P[4]) / (xden + ERF_Q[4]);
        exp_msq(y) * (FRAC_1_SQRT_PI - r) / y
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

// ---------------------------------------------------------------------------
// Two-point width mixture
// ---------------------------------------------------------------------------

/// The effective-width mixture behind every replica average: width
/// `sigma_minus` with probability 1−rho and `sigma_plus` with probability rho.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMixture {
    pub rho: f64,
    pub sigma_minus: f64,
    pub sigma_plus: f64,
}

impl SigmaMixture {
    pub fn new(rho: f64, sigma_minus: f64, sigma_plus: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: rho,
                constraint: "0 <= rho <= 1",
            });
        }
        if !(sigma_minus >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_minus",
                value: sigma_minus,
                constraint: "sigma_minus >= 0",
            });
        }
        if !(sigma_plus >= sigma_minus) {
            return Err(Error::InvalidParameter {
                name: "sigma_plus",
                value: sigma_plus,
                constraint: "sigma_plus >= sigma_minus",
            });
        }
        Ok(SigmaMixture {
            rho,
            sigma_minus,
            sigma_plus,
        })
    }

    /// Widths sqrt(chit) and sqrt(chit + mt²·sigma_x2) of the conjugate-order
    /// parameter mixture.
    pub fn from_conjugates(rho: f64, chit: f64, mt: f64, sigma_x2: f64) -> Result<Self> {
        if !(chit >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "chit",
                value: chit,
                constraint: "chit >= 0",
            });
        }
        SigmaMixture::new(rho, chit.sqrt(), (chit + mt * mt * sigma_x2).sqrt())
    }
}

/// (1−rho)·g(sigma_minus) + rho·g(sigma_plus). Degenerate weights skip the
/// corresponding evaluation so g may be singular at a width of weight zero.
pub fn sigma_average(mix: &SigmaMixture, mut g: impl FnMut(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    if mix.rho < 1.0 {
        acc += (1.0 - mix.rho) * g(mix.sigma_minus);
    }
    if mix.rho > 0.0 {
        acc += mix.rho * g(mix.sigma_plus);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_a_probability_measure() {
        for order in [20, 51, 101] {
            let q = GaussQuadrature::hermite(order).unwrap();
            let sum: f64 = q.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "order {order}: sum {sum}");
            assert!(q.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn low_moments_are_exact() {
        let q = GaussQuadrature::hermite(101).unwrap();
        assert!((q.expect(|_| 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(q.expect(|z| z).unwrap().abs() < 1e-10);
        assert!((q.expect(|z| z * z).unwrap() - 1.0).abs() < 1e-10);
        assert!((q.expect(|z| z.powi(4)).unwrap() - 3.0).abs() < 1e-9);
        let q20 = GaussQuadrature::hermite(20).unwrap();
        assert!(q20.expect(|z| z).unwrap().abs() < 1e-10);
        assert!((q20.expect(|z| z * z).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn expectation_is_linear() {
        let f = |z: f64| (0.3 * z).sin();
        let g = |z: f64| (-z * z / 3.0).exp();
        let lhs = gauss_expect(|z| 2.5 * f(z) - 1.25 * g(z)).unwrap();
        let rhs = 2.5 * gauss_expect(f).unwrap() - 1.25 * gauss_expect(g).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn even_integrands_match_half_line_panels() {
        // analytic even integrand: both routes are exact to roundoff
        let f = |z: f64| (1.3 * z).cos() * (-0.2 * z * z).exp();
        let whole = gauss_expect(f).unwrap();
        let half = expect_piecewise_even(&[], f).unwrap();
        assert!((whole - half).abs() < 1e-12, "{whole} vs {half}");
        let g = |z: f64| z * z;
        let whole = gauss_expect(g).unwrap();
        let half = expect_piecewise_even(&[0.7, 2.0], g).unwrap();
        assert!((whole - half).abs() < 1e-10, "{whole} vs {half}");
    }

    #[test]
    fn indicator_mass_ties_to_erfc() {
        // E[1{|z| > sqrt(2)·theta}] = erfc(theta); split panels at the jump.
        for &theta in &[0.0, 0.17, 0.5, 1.0, 2.3, 5.0] {
            let edge = std::f64::consts::SQRT_2 * theta;
            let mass =
                expect_piecewise_even(&[edge], |z| if z > edge { 1.0 } else { 0.0 }).unwrap();
            assert!(
                (mass - erfc(theta)).abs() < 1e-8,
                "theta {theta}: {mass} vs {}",
                erfc(theta)
            );
        }
    }

    #[test]
    fn half_wave_rectifier_expectation() {
        // E[max(z,0)] = 1/sqrt(2π). Exact once the kink at 0 is a panel edge;
        // plain Gauss–Hermite only gets there slowly with a kinked integrand.
        let exact = 0.3989422804014327;
        let split = expect_on(0.0, Z_CUT, |z| z).unwrap();
        assert!((split - exact).abs() < 1e-12, "{split}");
        let hermite = gauss_expect(|z| z.max(0.0)).unwrap();
        assert!((hermite - exact).abs() < 5e-3, "{hermite}");
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let bad = |z: f64| if z.abs() < 1.0 { f64::NAN } else { 0.0 };
        match gauss_expect(bad).unwrap_err() {
            Error::NonFiniteIntegrand { node } => assert!(node.abs() < 1.0),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(expect_on(-1.0, 1.0, bad).is_err());
        assert!(expect_piecewise_even(&[0.5], bad).is_err());
    }

    #[test]
    fn erfc_anchor_values() {
        assert_eq!(erfc(0.0), 1.0);
        let known = [
            (0.25, 0.7236736098317630),
            (0.5, 0.4795001221869535),
            (1.0, 0.15729920705028513),
            (2.0, 0.0046777349810472664),
            (3.0, 2.2090496998585441e-5),
        ];
        for (x, v) in known {
            let rel = (erfc(x) - v).abs() / v;
            assert!(rel < 5e-15, "erfc({x}) = {} vs {v}", erfc(x));
        }
        assert!(erfc(40.0) == 0.0);
        assert!(erfc(26.0) > 0.0 && erfc(26.0) < 1e-290);
        // symmetry
        for &x in &[0.3, 1.7, 4.2] {
            assert!((erfc(-x) - (2.0 - erfc(x))).abs() < 1e-15);
        }
    }

    #[test]
    fn sigma_average_mixes_two_points() {
        let mix = SigmaMixture::new(0.5, 1.0, 3.0).unwrap();
        assert_eq!(sigma_average(&mix, |s| s), 2.0);
        let lo = SigmaMixture::new(0.0, 1.0, 3.0).unwrap();
        assert_eq!(sigma_average(&lo, |s| s * s), 1.0);
        let hi = SigmaMixture::new(1.0, 1.0, 3.0).unwrap();
        assert_eq!(sigma_average(&hi, |s| s * s), 9.0);
        // weight-zero branch is never evaluated
        let z = SigmaMixture::new(1.0, 0.0, 2.0).unwrap();
        assert_eq!(sigma_average(&z, |s| 1.0 / s), 0.5);
        assert!(SigmaMixture::new(0.5, 2.0, 1.0).is_err());
        assert!(SigmaMixture::new(1.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn conjugate_widths() {
        let m = SigmaMixture::from_conjugates(0.3, 0.25, 2.0, 1.0).unwrap();
        assert!((m.sigma_minus - 0.5).abs() < 1e-15);
        assert!((m.sigma_plus - (0.25f64 + 4.0).sqrt()).abs() < 1e-15);
    }
}
