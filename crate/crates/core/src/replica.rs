//! Replica-symmetric saddle-point machinery: the failure-branch solver, the
//! success solution and its local stability, the general AT integral, and
//! the phase-boundary searches built on top of them.
//!
//! All single-body Gaussian averages are closed forms in erfc and θe^{−θ²};
//! their quadrature identities are exercised in the test suites rather than
//! used at runtime. The only numerical integral here is the general AT
//! expression, which is genuinely region-agnostic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauss::{erfc, expect_on, expect_piecewise_even_multi};
use crate::penalty::{PenaltyFamily, PenaltySpec};
use crate::se::{fixed_point_continuation, lambda_path, SeClass};

const SQRT_PI: f64 = 1.772_453_850_905_516;
/// θ beyond which θe^{−θ²} and every erfc(θ) term is an exact 0.0 in f64.
const THETA_CUT: f64 = 38.0;

/// θ·e^{−θ²} with the θ = ∞ limit handled (0, not NaN).
fn te2(theta: f64) -> f64 {
    if theta > THETA_CUT {
        0.0
    } else {
        theta * (-theta * theta).exp()
    }
}

fn e2(theta: f64) -> f64 {
    if theta > THETA_CUT {
        0.0
    } else {
        (-theta * theta).exp()
    }
}

/// a·b treating b == 0 as absorbing, so huge·0 stays 0 instead of NaN/inf.
fn mul0(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a * b
    }
}

// ---------------------------------------------------------------------------
// Single-σ closed-form blocks
// ---------------------------------------------------------------------------

/// Family-specific Gaussian averages at one field width σ: the probability
/// mass past the dead zone, the x̂² mass (Q integrand), the Σ mass beyond
/// the plain 1/Q̃ share (χ/m correction), and the AT excess mass.
#[derive(Debug, Clone, Copy, Default)]
struct SigmaBlock {
    /// erfc(θ₁): mass escaping the dead zone.
    escape: f64,
    /// E[x̂²] at this width.
    q_mass: f64,
    /// Mass of the enhanced-curvature region (ξ₄ for SCAD, ξ₃ for MCP).
    band: f64,
    /// E[−min_x{(Q̃/2)x² − σz·x + J(x)}]: the free-entropy integrand.
    /// Exercised by the quadrature-identity tests only.
    #[cfg_attr(not(test), allow(dead_code))]
    xi_total: f64,
}

fn scad_block(lambda: f64, a: f64, qt: f64, sigma: f64) -> SigmaBlock {
    if sigma == 0.0 {
        return SigmaBlock::default();
    }
    let s2 = sigma * sigma;
    let th1 = lambda / (std::f64::consts::SQRT_2 * sigma);
    let th2 = th1 * (1.0 + qt);
    let th3 = a * lambda * qt / (std::f64::consts::SQRT_2 * sigma);
    let dt = qt - 1.0 / (a - 1.0);

    let erfc1 = erfc(th1);
    let erfc2 = erfc(th2);
    let erfc3 = erfc(th3);
    let xi4 = erfc2 - erfc3;

    // ξ₁/Q̃: soft-threshold band; ξ₂/dT: unbiasing band; ξ₃/Q̃: identity tail
    let xi1 = (s2 / qt)
        * (-(2.0 / SQRT_PI) * (te2(th1) + mul0((qt - 1.0) * th1, e2(th2)))
            + mul0(1.0 + 2.0 * th1 * th1, erfc1 - erfc2));
    let r3 = th3 / (qt * (a - 1.0));
    let xi2 = (s2 / dt)
        * ((2.0 / SQRT_PI) * (te2(th2) - te2(th3) - mul0(2.0 * r3, e2(th2) - e2(th3)))
            + mul0(1.0 + 2.0 * r3 * r3, xi4));
    let xi3 = (s2 / qt) * ((2.0 / SQRT_PI) * te2(th3) + erfc3);

    let l2 = lambda * lambda;
    SigmaBlock {
        escape: erfc1,
        q_mass: xi1 / qt + xi2 / dt + xi3 / qt,
        band: xi4,
        xi_total: 0.5 * (xi1 + xi2 + xi3 + l2 * xi4 / (a - 1.0) - (a + 1.0) * l2 * erfc3),
    }
}

fn mcp_block(lambda: f64, a: f64, qt: f64, sigma: f64) -> SigmaBlock {
    if sigma == 0.0 {
        return SigmaBlock::default();
    }
    let s2 = sigma * sigma;
    let th1 = lambda / (std::f64::consts::SQRT_2 * sigma);
    let th2 = a * lambda * qt / (std::f64::consts::SQRT_2 * sigma);
    let dt = qt - 1.0 / a;

    let erfc1 = erfc(th1);
    let erfc2 = erfc(th2);
    let xi3 = erfc1 - erfc2;

    let xi1 = -(2.0 * s2 / (SQRT_PI * dt))
        * (te2(th1) - mul0(2.0 * th1, e2(th2)) + te2(th2))
        + (s2 + lambda * lambda) * xi3 / dt;
    let tail = (s2 / (qt * qt)) * ((2.0 / SQRT_PI) * te2(th2) + erfc2);

    SigmaBlock {
        escape: erfc1,
        q_mass: xi1 / dt + tail,
        band: xi3,
        xi_total: 0.5 * (xi1 + tail * qt - a * lambda * lambda * erfc2),
    }
}

fn l1_block(lambda: f64, qt: f64, sigma: f64) -> SigmaBlock {
    if sigma == 0.0 {
        return SigmaBlock::default();
    }
    let s2 = sigma * sigma;
    let th1 = lambda / (std::f64::consts::SQRT_2 * sigma);
    let erfc1 = erfc(th1);
    let psi = s2 * (mul0(1.0 + 2.0 * th1 * th1, erfc1) - (2.0 / SQRT_PI) * te2(th1));
    SigmaBlock {
        escape: erfc1,
        q_mass: psi / (qt * qt),
        band: 0.0,
        xi_total: 0.5 * psi / qt,
    }
}

fn block_for(p: &PenaltySpec, qt: f64, sigma: f64) -> SigmaBlock {
    match p.family() {
        PenaltyFamily::L1 => l1_block(p.lambda(), qt, sigma),
        PenaltyFamily::Scad => scad_block(p.lambda(), p.a(), qt, sigma),
        PenaltyFamily::Mcp => mcp_block(p.lambda(), p.a(), qt, sigma),
    }
}

/// One full Ω update at conjugate Q̃ = m̃ = α/χ and widths (σ₋, σ₊):
/// (Q, χ, m, ρ̂, AT lhs).
fn omega_update(
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    qt: f64,
    sigma_minus: f64,
    sigma_plus: f64,
) -> (f64, f64, f64, f64, f64) {
    let bm = block_for(p, qt, sigma_minus);
    let bp = block_for(p, qt, sigma_plus);
    let avg = |f: fn(&SigmaBlock) -> f64| (1.0 - rho) * f(&bm) + rho * f(&bp);

    let rho_hat = avg(|b| b.escape);
    let q_new = avg(|b| b.q_mass);
    // enhanced-curvature correction: 1/(a−1) for SCAD, 1/a for MCP, none for ℓ1
    let (inv_a, dt) = match p.family() {
        PenaltyFamily::L1 => (0.0, qt),
        PenaltyFamily::Scad => (1.0 / (p.a() - 1.0), qt - 1.0 / (p.a() - 1.0)),
        PenaltyFamily::Mcp => (1.0 / p.a(), qt - 1.0 / p.a()),
    };
    let chi_new = (rho_hat + inv_a * avg(|b| b.band) / dt) / qt;
    let m_new = rho * sigma_x2 * (bp.escape + inv_a * bp.band / dt);
    let ratio = qt / dt;
    let at_lhs = (rho_hat + (ratio * ratio - 1.0) * avg(|b| b.band)) / alpha;
    (q_new, chi_new, m_new, rho_hat, at_lhs)
}

// ---------------------------------------------------------------------------
// Failure-branch saddle solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SaddleStatus {
    Converged,
    MaxSweeps,
    Diverged,
    Inadmissible,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SaddleSolution {
    pub alpha: f64,
    pub rho: f64,
    pub sigma_x2: f64,
    pub q: f64,
    pub m: f64,
    pub chi: f64,
    /// Q − 2m + ρσ_x², the squared reconstruction error of the branch.
    pub eps: f64,
    /// Conjugate pair: Q̃ = m̃ = α/χ for the noiseless quadratic channel.
    pub q_tilde: f64,
    pub m_tilde: f64,
    pub chi_tilde: f64,
    pub rho_hat: f64,
    pub at_lhs: f64,
    pub status: SaddleStatus,
    pub sweeps: usize,
}

impl SaddleSolution {
    pub fn converged(&self) -> bool {
        self.status == SaddleStatus::Converged
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SaddleOptions {
    /// Mixing factor toward the new iterate.
    pub damping: f64,
    /// Convergence tolerance on the largest undamped component move.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Starting (Q, m, χ); None uses (0, 0, ρ/α).
    pub init: Option<(f64, f64, f64)>,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            damping: 0.5,
            tol: 1e-12,
            max_sweeps: 100_000,
            init: None,
        }
    }
}

const CHI_FLOOR: f64 = 1e-150;
const DIVERGENCE_CAP: f64 = 1e12;

fn check_ensemble(alpha: f64, rho: f64, sigma_x2: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: "0 < alpha <= 1",
        });
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            constraint: "0 <= rho <= 1",
        });
    }
    if !(sigma_x2.is_finite() && sigma_x2 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma_x2",
            value: sigma_x2,
            constraint: "0 < sigma_x2 < inf",
        });
    }
    Ok(())
}

/// Admissibility ceiling on χ (χ/α strictly below the curvature bound);
/// +inf when the family has none.
fn chi_cap(p: &PenaltySpec, alpha: f64) -> f64 {
    match p.family() {
        PenaltyFamily::L1 => f64::INFINITY,
        PenaltyFamily::Scad => alpha * (p.a() - 1.0) * (1.0 - 1e-9),
        PenaltyFamily::Mcp => alpha * p.a() * (1.0 - 1e-9),
    }
}

/// Damped alternation of the conjugate and direct order-parameter updates.
/// Inadmissible transient iterates are projected back inside the curvature
/// bound; a converged solution must sit strictly inside on its own or the
/// run is labeled Inadmissible. Divergence is reported when the iterates
/// leave [0, 1e12] or stop being finite.
pub fn solve_saddle(
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    opts: &SaddleOptions,
) -> Result<SaddleSolution> {
    check_ensemble(alpha, rho, sigma_x2)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "damping",
            value: opts.damping,
            constraint: "in (0, 1]",
        });
    }
    let cap = chi_cap(p, alpha);
    let (mut q, mut m, mut chi) = opts.init.unwrap_or((0.0, 0.0, rho / alpha));
    if !(chi.is_finite() && chi > 0.0) {
        return Err(Error::InvalidParameter {
            name: "chi0",
            value: chi,
            constraint: "finite and positive",
        });
    }

    let gamma = opts.damping;
    let mut status = SaddleStatus::MaxSweeps;
    let mut sweeps = opts.max_sweeps;
    let mut projected = chi > cap;
    let mut scal = (0.0, 0.0, 0.0, 0.0, 0.0);

    for sweep in 1..=opts.max_sweeps {
        let chi_c = chi.clamp(CHI_FLOOR, cap);
        let qt = alpha / chi_c;
        let eps = (q - 2.0 * m + rho * sigma_x2).max(0.0);
        let chit = alpha * eps / (chi_c * chi_c);
        let sm = chit.sqrt();
        let sp = (chit + qt * qt * sigma_x2).sqrt();
        scal = omega_update(p, alpha, rho, sigma_x2, qt, sm, sp);
        let (q_new, chi_new, m_new, _, _) = scal;

        if !(q_new.is_finite() && chi_new.is_finite() && m_new.is_finite())
            || q_new > DIVERGENCE_CAP
            || chi_new > DIVERGENCE_CAP && cap.is_infinite()
        {
            status = SaddleStatus::Diverged;
            sweeps = sweep;
            break;
        }

        let diff = (q_new - q)
            .abs()
            .max((chi_new - chi_c).abs())
            .max((m_new - m).abs());
        projected = chi_new > cap;

        q = gamma * q_new + (1.0 - gamma) * q;
        m = gamma * m_new + (1.0 - gamma) * m;
        chi = (gamma * chi_new + (1.0 - gamma) * chi_c).clamp(CHI_FLOOR, cap);

        if diff <= opts.tol {
            status = if projected || !p.admissible(chi_new / alpha) {
                SaddleStatus::Inadmissible
            } else {
                SaddleStatus::Converged
            };
            sweeps = sweep;
            break;
        }
    }
    let _ = projected;

    let eps_raw = q - 2.0 * m + rho * sigma_x2;
    let chit = alpha * eps_raw.max(0.0) / (chi * chi);
    let (_, _, _, rho_hat, at_lhs) = scal;
    Ok(SaddleSolution {
        alpha,
        rho,
        sigma_x2,
        q,
        m,
        chi,
        eps: eps_raw,
        q_tilde: alpha / chi,
        m_tilde: alpha / chi,
        chi_tilde: chit,
        rho_hat,
        at_lhs,
        status,
        sweeps,
    })
}

// ---------------------------------------------------------------------------
// General AT integral
// ---------------------------------------------------------------------------

/// The replicon left-hand side (α⁻¹·E[(Σ/s)²] over the effective two-width
/// Gaussian field) at a solved state, evaluated by piecewise quadrature over
/// the threshold regions. Values above 1 mean the replica symmetric point is
/// locally unstable.
pub fn at_condition_general(p: &PenaltySpec, sol: &SaddleSolution) -> Result<f64> {
    at_condition_at(p, sol.alpha, sol.rho, sol.sigma_x2, sol.chi, sol.eps.max(0.0))
}

/// `at_condition_general` at explicit (χ, ε) coordinates.
pub fn at_condition_at(
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    chi: f64,
    eps: f64,
) -> Result<f64> {
    check_ensemble(alpha, rho, sigma_x2)?;
    if !(chi.is_finite() && chi > 0.0 && eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "chi/eps",
            value: if chi <= 0.0 { chi } else { eps },
            constraint: "chi > 0 and eps >= 0",
        });
    }
    let s = chi / alpha;
    p.check_admissible(s)?;
    let w0 = (eps / alpha).sqrt();
    let w1 = (eps / alpha + sigma_x2).sqrt();
    let term = |sigma_tilde: f64| -> Result<f64> {
        if sigma_tilde == 0.0 {
            return Ok(0.0);
        }
        let mb = p.m_breaks(s);
        let breaks = [mb[0] / sigma_tilde, mb[1] / sigma_tilde, mb[2] / sigma_tilde];
        let [v] = expect_piecewise_even_multi(&breaks, |z| {
            let t = p.threshold_parts(s, sigma_tilde * z / s);
            let r = t.sigma_factor / s;
            [r * r]
        })?;
        Ok(v)
    };
    Ok(((1.0 - rho) * term(w0)? + rho * term(w1)?) / alpha)
}

// ---------------------------------------------------------------------------
// Success solution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SuccessSolution {
    pub alpha: f64,
    pub rho: f64,
    pub sigma_x2: f64,
    /// χ̃ at the root.
    pub chit: f64,
    pub theta_minus: f64,
    pub theta_plus: f64,
    /// ((1−ρ)erfc(θ₋) + ρ)/α.
    pub stability_lhs: f64,
    pub stable: bool,
}

/// Empty-entry second moment: 2∫_{√2θ₋}^∞ Dz (√χ̃ z − λ)² in closed form.
fn t_minus(chit: f64, lambda: f64) -> f64 {
    if chit == 0.0 {
        return 0.0;
    }
    let th = lambda / (2.0 * chit).sqrt();
    -(2.0 * chit / SQRT_PI) * te2(th) + mul0(chit + lambda * lambda, erfc(th))
}

/// Occupied-entry contribution C (the part of the χ̃ fixed-point equation
/// that does not contain χ̃), family-specific.
fn success_occupied_const(p: &PenaltySpec, sigma_x2: f64) -> f64 {
    let lambda = p.lambda();
    let l2 = lambda * lambda;
    let thp = lambda / (2.0 * sigma_x2).sqrt();
    match p.family() {
        PenaltyFamily::L1 => l2,
        PenaltyFamily::Scad => {
            let a = p.a();
            let soft = l2 * (1.0 - erfc(thp));
            // unbiasing band: (a−1)⁻²·2∫_{√2θ₊}^{√2aθ₊} Dz (σ_x z − aλ)²,
            // a nonnegative integrand — quadrature is cancellation-free where
            // the closed form loses all digits as a → 1
            let band = if a - 1.0 < 0.5 {
                let lo = std::f64::consts::SQRT_2 * thp;
                let denom = (a - 1.0) * (a - 1.0);
                let sx = sigma_x2.sqrt();
                2.0 * expect_on(lo, a * lo, |z| {
                    let r = sx * z - a * lambda;
                    r * r
                })
                .unwrap_or(f64::NAN)
                    / denom
            } else {
                let am1 = a - 1.0;
                let coef = (a * lambda / am1).powi(2) + sigma_x2 / (am1 * am1);
                let exps = (a / am1) * (e2(a * thp) - e2(thp)) - e2(thp);
                mul0(coef, erfc(thp) - erfc(a * thp))
                    + (2.0 * sigma_x2 * thp / (SQRT_PI * am1)) * exps
            };
            soft + band
        }
        PenaltyFamily::Mcp => {
            let a = p.a();
            (l2 + sigma_x2 / (a * a)) * (1.0 - erfc(a * thp))
                + (2.0 * sigma_x2 * thp / (a * SQRT_PI)) * e2(a * thp)
                - 4.0 * sigma_x2 * thp / (a * SQRT_PI)
        }
    }
}

/// Right-hand side of the success fixed-point equation χ̃ = F(χ̃).
fn success_rhs(p: &PenaltySpec, alpha: f64, rho: f64, occ_const: f64, chit: f64) -> f64 {
    ((1.0 - rho) * t_minus(chit, p.lambda()) + rho * (chit + occ_const)) / alpha
}

/// Solve the success-branch width equation. Damped fixed-point iteration is
/// tried first (it lands on the attracting root); a sign-change scan plus
/// bisection over χ̃ ∈ [1e-16, 10³σ_x²] is the fallback, which also covers
/// the ρ = 0 repelling root. Both agree to ~1e-10 when both converge.
///
/// dT₋/dχ̃ = erfc(θ₋) exactly, so χ̃ − F(χ̃) has slope 1 − stability_lhs:
/// the attracting root annihilates with its repelling partner precisely at
/// the stability boundary. A NoRoot error therefore indicates the unstable
/// phase, and an attracting root, when it exists, is stable or marginal.
pub fn solve_success(
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
) -> Result<SuccessSolution> {
    check_ensemble(alpha, rho, sigma_x2)?;
    let occ = success_occupied_const(p, sigma_x2);
    if !occ.is_finite() {
        return Err(Error::NonFiniteIntegrand { node: occ });
    }
    let f = |chit: f64| success_rhs(p, alpha, rho, occ, chit);

    let chit = match success_fixed_point(f, sigma_x2) {
        Some(v) => v,
        None => success_bisection(f, sigma_x2)?,
    };

    let theta_minus = p.lambda() / (2.0 * chit).sqrt();
    let theta_plus = p.lambda() / (2.0 * sigma_x2).sqrt();
    let stability_lhs = ((1.0 - rho) * erfc(theta_minus) + rho) / alpha;
    Ok(SuccessSolution {
        alpha,
        rho,
        sigma_x2,
        chit,
        theta_minus,
        theta_plus,
        stability_lhs,
        stable: stability_lhs < 1.0,
    })
}

fn success_fixed_point(f: impl Fn(f64) -> f64, sigma_x2: f64) -> Option<f64> {
    let mut chit = 1e-12 * sigma_x2;
    for _ in 0..20_000 {
        let next = f(chit);
        if !(next.is_finite() && next >= 0.0) || next > 1e6 * sigma_x2 {
            return None;
        }
        let mixed = 0.5 * (next + chit);
        if (next - chit).abs() <= 1e-14 * chit.max(1e-300) {
            // a positive, genuinely attracting root — the collapse to 0
            // (possible at ρ = 0) is not one
            return (mixed > 1e-250).then_some(mixed);
        }
        chit = mixed;
    }
    None
}

fn refine_root(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, lo_sign: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = mid - f(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn success_bisection(f: impl Fn(f64) -> f64, sigma_x2: f64) -> Result<f64> {
    let lo_exp = -16.0f64;
    let hi_exp = (1e3 * sigma_x2).log10();
    let n = 240;
    let node = |t: f64| 10f64.powf(lo_exp + (hi_exp - lo_exp) * t);
    let grid_g = |k: usize| {
        let x = node(k as f64 / n as f64);
        (x, x - f(x))
    };
    let (mut xa, mut ga) = grid_g(0);
    let (mut best_k, mut best_g) = (0usize, ga);
    for k in 1..=n {
        let (xb, gb) = grid_g(k);
        if ga == 0.0 {
            return Ok(xa);
        }
        if ga.signum() != gb.signum() && ga.is_finite() && gb.is_finite() {
            return Ok(refine_root(&f, xa, xb, ga.signum()));
        }
        if gb > best_g {
            (best_k, best_g) = (k, gb);
        }
        (xa, ga) = (xb, gb);
    }
    // near-tangent root pairs can hide between grid nodes: hunt the maximum
    // of χ̃ − F around the best node and bisect its flanks if it pokes above 0
    if best_g < 0.0 && best_k > 0 && best_k < n {
        let (mut lo, mut hi) = (
            (best_k as f64 - 1.0) / n as f64,
            (best_k as f64 + 1.0) / n as f64,
        );
        let g_of = |t: f64| {
            let x = node(t);
            x - f(x)
        };
        for _ in 0..120 {
            let m1 = lo + (hi - lo) * 0.382;
            let m2 = lo + (hi - lo) * 0.618;
            if g_of(m1) < g_of(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let t_star = 0.5 * (lo + hi);
        let x_star = node(t_star);
        if g_of(t_star) > 0.0 {
            let x_left = node((best_k as f64 - 1.0) / n as f64);
            return Ok(refine_root(&f, x_left, x_star, -1.0));
        }
    }
    Err(Error::NoRoot {
        lo: 10f64.powf(lo_exp),
        hi: 10f64.powf(hi_exp),
    })
}

impl SuccessSolution {
    /// Embed as a degenerate saddle at a vanishing χ (success has χ → 0,
    /// ε → 0 with χ̃ = αε/χ² held at the root).
    pub fn to_saddle(&self, chi_eps: f64) -> SaddleSolution {
        let chi = chi_eps;
        let eps = self.chit * chi * chi / self.alpha;
        let rsx = self.rho * self.sigma_x2;
        SaddleSolution {
            alpha: self.alpha,
            rho: self.rho,
            sigma_x2: self.sigma_x2,
            q: rsx + eps,
            m: rsx,
            chi,
            eps,
            q_tilde: self.alpha / chi,
            m_tilde: self.alpha / chi,
            chi_tilde: self.chit,
            rho_hat: (1.0 - self.rho) * erfc(self.theta_minus) + self.rho,
            at_lhs: self.stability_lhs,
            status: SaddleStatus::Converged,
            sweeps: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Phase-boundary searches
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BracketStep {
    pub lo: f64,
    pub hi: f64,
    pub mid: f64,
    pub predicate_mid: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub value: f64,
    pub history: Vec<BracketStep>,
}

/// Bisect a predicate boundary on [lo, hi]; `pred_lo` states the predicate
/// value on the lo side (the hi side must differ — caller checks). Midpoints
/// are arithmetic or geometric according to `log_space`.
fn bisect_boundary(
    mut lo: f64,
    mut hi: f64,
    pred_lo: bool,
    tol: f64,
    log_space: bool,
    mut pred: impl FnMut(f64) -> Result<bool>,
) -> Result<SearchResult> {
    let mut history = Vec::new();
    while hi - lo > tol {
        let mid = if log_space {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if !(mid > lo && mid < hi) {
            break; // interval at floating-point resolution
        }
        let pm = pred(mid)?;
        history.push(BracketStep {
            lo,
            hi,
            mid,
            predicate_mid: pm,
        });
        if pm == pred_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SearchResult {
        value: 0.5 * (lo + hi),
        history,
    })
}

fn success_stable(p: &PenaltySpec, alpha: f64, rho: f64, sigma_x2: f64) -> bool {
    matches!(solve_success(p, alpha, rho, sigma_x2), Ok(s) if s.stable)
}

/// Smallest compression ratio at which the success solution is locally
/// stable, for fixed penalty and sparsity. Bisection over α ∈ [1e-4, 1].
pub fn alpha_c(p: &PenaltySpec, rho: f64, sigma_x2: f64, tol: f64) -> Result<SearchResult> {
    let (lo, hi) = (1e-4, 1.0);
    if success_stable(p, lo, rho, sigma_x2) {
        return Ok(SearchResult {
            value: lo,
            history: vec![],
        });
    }
    if !success_stable(p, hi, rho, sigma_x2) {
        return Err(Error::BracketFailure { lo, hi });
    }
    bisect_boundary(lo, hi, false, tol, false, |a| {
        Ok(success_stable(p, a, rho, sigma_x2))
    })
}

/// Largest sparsity at which the success solution is locally stable, for
/// fixed penalty and compression ratio.
pub fn rho_c(p: &PenaltySpec, alpha: f64, sigma_x2: f64, tol: f64) -> Result<SearchResult> {
    let (lo, hi) = (1e-6, alpha * (1.0 - 1e-12));
    if !success_stable(p, alpha, lo, sigma_x2) {
        return Err(Error::BracketFailure { lo, hi });
    }
    if success_stable(p, alpha, hi, sigma_x2) {
        return Ok(SearchResult {
            value: hi,
            history: vec![],
        });
    }
    bisect_boundary(lo, hi, true, tol, false, |r| {
        Ok(success_stable(p, alpha, r, sigma_x2))
    })
}

const A_SENTINEL: f64 = 1e6;

fn spec_for(family: PenaltyFamily, lambda: f64, a: f64) -> Result<PenaltySpec> {
    match family {
        PenaltyFamily::L1 => PenaltySpec::l1(lambda),
        PenaltyFamily::Scad => PenaltySpec::scad(lambda, a),
        PenaltyFamily::Mcp => PenaltySpec::mcp(lambda, a),
    }
}

/// Largest nonconvexity knob a at which the success solution stays stable
/// for the given λ (stability improves as a decreases toward 1). Returns
/// 1e6 when even the ℓ1-like end is stable and 1.0 when no admissible a is.
/// Geometric bisection in a − 1.
pub fn a_c_of_lambda(
    family: PenaltyFamily,
    lambda: f64,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    rel_tol: f64,
) -> Result<SearchResult> {
    let (a_lo, a_hi) = (1.0 + 1e-6, A_SENTINEL);
    let stable_at = |a: f64| -> Result<bool> {
        Ok(success_stable(&spec_for(family, lambda, a)?, alpha, rho, sigma_x2))
    };
    if stable_at(a_hi)? {
        return Ok(SearchResult {
            value: A_SENTINEL,
            history: vec![],
        });
    }
    if !stable_at(a_lo)? {
        return Ok(SearchResult {
            value: 1.0,
            history: vec![],
        });
    }
    // bisect on u = a − 1 in log space with a width-ratio stop
    let mut lo = a_lo - 1.0;
    let mut hi = a_hi - 1.0;
    let mut history = Vec::new();
    while hi / lo > 1.0 + rel_tol {
        let mid = (lo * hi).sqrt();
        let pm = stable_at(1.0 + mid)?;
        history.push(BracketStep {
            lo: 1.0 + lo,
            hi: 1.0 + hi,
            mid: 1.0 + mid,
            predicate_mid: pm,
        });
        if pm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SearchResult {
        value: 1.0 + (lo * hi).sqrt(),
        history,
    })
}

const LAMBDA_SENTINEL: f64 = 1e6;

/// Probe knob for "a_c(λ) > 1": stability is monotone improving as a → 1⁺,
/// so some admissible a works iff the near-unit knob does.
const A_NEAR_ONE: f64 = 1.0 + 1e-6;

/// Largest λ at which some admissible nonconvexity knob keeps the success
/// solution stable, i.e. the largest λ with a_c(λ) > 1. Geometric up-scan to
/// bracket, then log bisection; 1e6 when stability never breaks below that
/// cap, and an error when not even λ = 1e-12 works.
pub fn lambda_c(
    family: PenaltyFamily,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    rel_tol: f64,
) -> Result<SearchResult> {
    let stable_at = |l: f64| -> Result<bool> {
        Ok(success_stable(
            &spec_for(family, l, A_NEAR_ONE)?,
            alpha,
            rho,
            sigma_x2,
        ))
    };
    let mut lo = 1e-3;
    while !stable_at(lo)? {
        lo /= 4.0;
        if lo < 1e-12 {
            return Err(Error::BracketFailure { lo, hi: 1e-3 });
        }
    }
    let mut hi = lo * 2.0;
    let mut history = Vec::new();
    while stable_at(hi)? {
        history.push(BracketStep {
            lo,
            hi,
            mid: hi,
            predicate_mid: true,
        });
        lo = hi;
        hi *= 2.0;
        if hi > LAMBDA_SENTINEL {
            return Ok(SearchResult {
                value: LAMBDA_SENTINEL,
                history,
            });
        }
    }
    while hi / lo > 1.0 + rel_tol {
        let mid = (lo * hi).sqrt();
        let pm = stable_at(mid)?;
        history.push(BracketStep {
            lo,
            hi,
            mid,
            predicate_mid: pm,
        });
        if pm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SearchResult {
        value: (lo * hi).sqrt(),
        history,
    })
}

// ---------------------------------------------------------------------------
// Nonconvexity-control limit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct NccOptions {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub tol: f64,
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    pub lambda_step: f64,
}

impl Default for NccOptions {
    fn default() -> Self {
        NccOptions {
            rho_lo: 0.05,
            rho_hi: 0.48,
            tol: 1e-3,
            lambda_hi: 1.0,
            lambda_lo: 0.01,
            lambda_step: 0.002,
        }
    }
}

/// Whether a slow λ continuation reaches the perfect-reconstruction point
/// with no solution gap anywhere above the entry: the operational test of
/// nonconvexity control at one sparsity.
pub fn ncc_reachable(
    family: PenaltyFamily,
    a: f64,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    opts: &NccOptions,
) -> Result<bool> {
    let path = lambda_path(opts.lambda_hi, opts.lambda_lo, opts.lambda_step)?;
    let res = fixed_point_continuation(&path, a, family, alpha, rho, sigma_x2)?;
    let first = res
        .points
        .iter()
        .position(|pt| pt.class == SeClass::Success);
    Ok(match first {
        None => false,
        Some(idx) => res.points[..idx].iter().all(|pt| !pt.gap_flag),
    })
}

/// Largest sparsity (to `opts.tol`) at which nonconvexity control still
/// works, by bisection of `ncc_reachable` over ρ.
pub fn ncc_limit(
    family: PenaltyFamily,
    a: f64,
    alpha: f64,
    sigma_x2: f64,
    opts: &NccOptions,
) -> Result<SearchResult> {
    if !ncc_reachable(family, a, alpha, opts.rho_lo, sigma_x2, opts)? {
        return Err(Error::BracketFailure {
            lo: opts.rho_lo,
            hi: opts.rho_hi,
        });
    }
    if ncc_reachable(family, a, alpha, opts.rho_hi, sigma_x2, opts)? {
        return Ok(SearchResult {
            value: opts.rho_hi,
            history: vec![],
        });
    }
    bisect_boundary(opts.rho_lo, opts.rho_hi, true, opts.tol, false, |r| {
        ncc_reachable(family, a, alpha, r, sigma_x2, opts)
    })
}

/// `ncc_limit` maximized over a coarse a grid; the dependence on a is weak,
/// so {2, 3, 5, 10} suffices to localize the best knob.
pub fn ncc_limit_over_a(
    family: PenaltyFamily,
    alpha: f64,
    sigma_x2: f64,
    opts: &NccOptions,
) -> Result<(f64, f64, Vec<(f64, f64)>)> {
    let mut per_a = Vec::new();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for a in [2.0, 3.0, 5.0, 10.0] {
        let r = ncc_limit(family, a, alpha, sigma_x2, opts)?;
        per_a.push((a, r.value));
        if r.value > best.1 {
            best = (a, r.value);
        }
    }
    Ok((best.0, best.1, per_a))
}
