//! State evolution: the deterministic two-dimensional map on (V, ε) that
//! tracks the large-system behaviour of the message-passing reconstruction.
//! V is the average cavity variance, ε the mean squared error. Perfect
//! reconstruction is the fixed point (0, 0); a finite fixed point is the
//! failure branch. On top of the map itself this module provides the flow
//! field over a grid, basin-of-attraction classification with a declared
//! rectangle convention for the "volume", and fixed-point continuation along
//! a descending λ path with gap detection.

use crate::error::{Error, Result};
use crate::gauss::expect_piecewise_even_multi;
use crate::penalty::{PenaltyFamily, PenaltySpec};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SePoint {
    pub v: f64,
    pub eps: f64,
}

impl SePoint {
    pub fn new(v: f64, eps: f64) -> Self {
        SePoint { v, eps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SeClass {
    Success,
    FiniteFixedPoint,
    Diverged,
    MaxIters,
    Inadmissible,
}

impl fmt::Display for SeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeClass::Success => "Success",
            SeClass::FiniteFixedPoint => "FiniteFixedPoint",
            SeClass::Diverged => "Diverged",
            SeClass::MaxIters => "MaxIters",
            SeClass::Inadmissible => "Inadmissible",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeOutcome {
    pub classification: SeClass,
    pub final_point: SePoint,
    pub iters: usize,
    pub trace: Option<Vec<SePoint>>,
}

/// Relative stagnation factor required (on top of the absolute tolerance)
/// before a state counts as settled.
const REL_SETTLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct SeOptions {
    pub max_iters: usize,
    /// Success when both V and ε fall at or below this.
    pub success_tol: f64,
    /// Fixed point when consecutive max-norm difference falls below this.
    pub fp_tol: f64,
    pub div_bound: f64,
    pub keep_trace: bool,
}

impl Default for SeOptions {
    fn default() -> Self {
        SeOptions {
            max_iters: 5000,
            success_tol: 1e-10,
            fp_tol: 1e-12,
            div_bound: 1e8,
            keep_trace: false,
        }
    }
}

fn check_se_params(alpha: f64, rho: f64, sigma_x2: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: "0 < alpha <= 1",
        });
    }
    if !(rho >= 0.0 && rho <= 1.0) {
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

/// One half-line pass at noise width σ̃: returns (∫Dz Σ, ∫Dz (x̂ − κm)²)
/// with m = σ̃z, x̂ = threshold_prox(m; s). κ is the posterior-mean slope of
/// the branch (0 for empty entries); keeping the residual inside the
/// integrand makes both outputs sums of nonnegative terms, so ε retains full
/// relative accuracy all the way down the success funnel instead of drowning
/// in the cancellation noise of O(1) moments.
fn width_integrals(p: &PenaltySpec, s: f64, sigma_tilde: f64, kappa: f64) -> Result<[f64; 2]> {
    if sigma_tilde == 0.0 {
        // m ≡ 0 sits in the dead zone: every integrand vanishes
        return Ok([0.0, 0.0]);
    }
    // region edges of the prox map in m-space, rescaled to z
    let mb = p.m_breaks(s);
    let breaks = [
        mb[0] / sigma_tilde,
        mb[1] / sigma_tilde,
        mb[2] / sigma_tilde,
    ];
    expect_piecewise_even_multi(&breaks, |z| {
        let m = sigma_tilde * z;
        let t = p.threshold_parts(s, m / s);
        let res = t.x_star - kappa * m;
        [t.sigma_factor, res * res]
    })
}

/// One step of the (V, ε) map at ratio α, sparsity ρ, signal power σ_x².
///
/// With s = V/α the effective scalar channel sees m = x⁰ + z√(ε/α); the
/// Bernoulli–Gaussian average over x⁰ collapses to two Gaussian widths,
/// √(ε/α) for the empty entries and √(ε/α + σ_x²) for the occupied ones.
/// V=0 is handled by its analytic limit (identity denoiser): V'=0, ε'=ε/α.
pub fn se_step(
    pt: SePoint,
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
) -> Result<SePoint> {
    check_se_params(alpha, rho, sigma_x2)?;
    if !(pt.v >= 0.0 && pt.eps >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "point",
            value: if pt.v < 0.0 { pt.v } else { pt.eps },
            constraint: "V >= 0 and eps >= 0",
        });
    }
    let s = pt.v / alpha;
    if s == 0.0 {
        return Ok(SePoint::new(0.0, pt.eps / alpha));
    }
    p.check_admissible(s)?;

    let noise_var = pt.eps / alpha;
    let w0 = noise_var.sqrt();
    let w1 = (noise_var + sigma_x2).sqrt();

    let mut v_next = 0.0;
    let mut eps_next = 0.0;
    if rho < 1.0 {
        let [t_sigma, t_res] = width_integrals(p, s, w0, 0.0)?;
        v_next += (1.0 - rho) * t_sigma;
        eps_next += (1.0 - rho) * t_res;
    }
    if rho > 0.0 {
        // E[x⁰|m] = κm with κ = σ_x²/σ̃₁²; E[(x̂−x⁰)²] decomposes into the
        // residual against κm plus the posterior variance σ_x²·(ε/α)/σ̃₁²
        let kappa = sigma_x2 / (w1 * w1);
        let [t_sigma, t_res] = width_integrals(p, s, w1, kappa)?;
        v_next += rho * t_sigma;
        eps_next += rho * (t_res + kappa * noise_var);
    }
    Ok(SePoint::new(v_next, eps_next))
}

/// Iterate `se_step` from `start` until one of the classifications fires.
/// Success is tested before stepping, so an exact (0,0) start reports
/// Success at zero iterations.
pub fn se_run(
    start: SePoint,
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    opts: &SeOptions,
) -> SeOutcome {
    let mut pt = start;
    let mut trace = opts.keep_trace.then(|| vec![pt]);
    let mut iters = 0;
    loop {
        if !(pt.v.is_finite() && pt.eps.is_finite())
            || pt.v > opts.div_bound
            || pt.eps > opts.div_bound
        {
            return SeOutcome {
                classification: SeClass::Diverged,
                final_point: pt,
                iters,
                trace,
            };
        }
        if pt.v <= opts.success_tol && pt.eps <= opts.success_tol {
            return SeOutcome {
                classification: SeClass::Success,
                final_point: pt,
                iters,
                trace,
            };
        }
        if iters >= opts.max_iters {
            return SeOutcome {
                classification: SeClass::MaxIters,
                final_point: pt,
                iters,
                trace,
            };
        }
        let next = match se_step(pt, p, alpha, rho, sigma_x2) {
            Ok(n) => n,
            // Inadmissible only describes the *start*: once an admissible
            // trajectory grows past the admissibility bound on V it has run
            // away, which is a divergence. Quadrature overflow likewise only
            // happens on a blow-up trajectory.
            Err(e) => {
                let class = if iters == 0 && matches!(e, Error::Inadmissible { .. }) {
                    SeClass::Inadmissible
                } else {
                    SeClass::Diverged
                };
                return SeOutcome {
                    classification: class,
                    final_point: pt,
                    iters,
                    trace,
                };
            }
        };
        iters += 1;
        if let Some(tr) = trace.as_mut() {
            tr.push(next);
        }
        // Settling needs the absolute tolerance *and* relative stagnation:
        // deep in the success funnel the state is tiny but still drifting by
        // fractions of itself per sweep (the approach ray rebalances slowly),
        // and that crawl must not read as a finite fixed point.
        let dv = (next.v - pt.v).abs();
        let de = (next.eps - pt.eps).abs();
        let settled = dv <= opts.fp_tol
            && de <= opts.fp_tol
            && dv <= REL_SETTLE * next.v
            && de <= REL_SETTLE * next.eps;
        let at_success = next.v <= opts.success_tol && next.eps <= opts.success_tol;
        pt = next;
        if settled && !at_success {
            return SeOutcome {
                classification: SeClass::FiniteFixedPoint,
                final_point: pt,
                iters,
                trace,
            };
        }
    }
}

// ---------------------------------------------------------------------------
// Grids, flow fields, basins
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub nv: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub neps: usize,
    pub log_spacing: bool,
}

impl GridSpec {
    pub fn linear(v_max: f64, nv: usize, eps_max: f64, neps: usize) -> Result<Self> {
        let g = GridSpec {
            v_min: 0.0,
            v_max,
            nv,
            eps_min: 0.0,
            eps_max,
            neps,
            log_spacing: false,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lo, hi) in [
            ("v", self.v_min, self.v_max),
            ("eps", self.eps_min, self.eps_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
                return Err(Error::InvalidParameter {
                    name,
                    value: hi,
                    constraint: "0 <= min < max < inf",
                });
            }
            if self.log_spacing && lo <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value: lo,
                    constraint: "log spacing needs min > 0",
                });
            }
        }
        if self.nv == 0 || self.neps == 0 {
            return Err(Error::InvalidParameter {
                name: "grid counts",
                value: 0.0,
                constraint: "nv >= 1 and neps >= 1",
            });
        }
        Ok(())
    }

    fn axis_node(&self, lo: f64, hi: f64, count: usize, i: usize) -> f64 {
        if count == 1 {
            return lo;
        }
        let t = i as f64 / (count - 1) as f64;
        if self.log_spacing {
            lo * (hi / lo).powf(t)
        } else {
            lo + (hi - lo) * t
        }
    }

    fn axis_edge(&self, lo: f64, hi: f64, count: usize, i: usize) -> f64 {
        let t = i as f64 / count as f64;
        if self.log_spacing {
            lo * (hi / lo).powf(t)
        } else {
            lo + (hi - lo) * t
        }
    }

    /// Endpoint-inclusive lattice nodes, V fastest.
    pub fn nodes(&self) -> Vec<SePoint> {
        let mut out = Vec::with_capacity(self.nv * self.neps);
        for je in 0..self.neps {
            let eps = self.axis_node(self.eps_min, self.eps_max, self.neps, je);
            for iv in 0..self.nv {
                let v = self.axis_node(self.v_min, self.v_max, self.nv, iv);
                out.push(SePoint::new(v, eps));
            }
        }
        out
    }

    /// Cell centers (geometric for log spacing), V fastest, plus cell areas
    /// in linear measure.
    pub fn cells(&self) -> Vec<(SePoint, f64)> {
        let mut out = Vec::with_capacity(self.nv * self.neps);
        for je in 0..self.neps {
            let e0 = self.axis_edge(self.eps_min, self.eps_max, self.neps, je);
            let e1 = self.axis_edge(self.eps_min, self.eps_max, self.neps, je + 1);
            let ec = if self.log_spacing {
                (e0 * e1).sqrt()
            } else {
                0.5 * (e0 + e1)
            };
            for iv in 0..self.nv {
                let v0 = self.axis_edge(self.v_min, self.v_max, self.nv, iv);
                let v1 = self.axis_edge(self.v_min, self.v_max, self.nv, iv + 1);
                let vc = if self.log_spacing {
                    (v0 * v1).sqrt()
                } else {
                    0.5 * (v0 + v1)
                };
                out.push((SePoint::new(vc, ec), (v1 - v0) * (e1 - e0)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FlowNode {
    pub v: f64,
    pub eps: f64,
    /// One-step displacement; zero when the node is inadmissible.
    pub dv: f64,
    pub deps: f64,
    /// Unit direction of (dv, deps); zero at exact fixed points.
    pub norm_dv: f64,
    pub norm_deps: f64,
    pub admissible: bool,
}

/// One se_step displacement per grid node.
pub fn flow_field(
    grid: &GridSpec,
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
) -> Result<Vec<FlowNode>> {
    grid.validate()?;
    check_se_params(alpha, rho, sigma_x2)?;
    let nodes = grid.nodes();
    Ok(nodes
        .par_iter()
        .map(|&pt| match se_step(pt, p, alpha, rho, sigma_x2) {
            Ok(next) => {
                let dv = next.v - pt.v;
                let deps = next.eps - pt.eps;
                let norm = dv.hypot(deps);
                let (ndv, ndeps) = if norm > 0.0 {
                    (dv / norm, deps / norm)
                } else {
                    (0.0, 0.0)
                };
                FlowNode {
                    v: pt.v,
                    eps: pt.eps,
                    dv,
                    deps,
                    norm_dv: ndv,
                    norm_deps: ndeps,
                    admissible: true,
                }
            }
            Err(_) => FlowNode {
                v: pt.v,
                eps: pt.eps,
                dv: 0.0,
                deps: 0.0,
                norm_dv: 0.0,
                norm_deps: 0.0,
                admissible: false,
            },
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinMap {
    pub grid: GridSpec,
    /// Cell centers with their classification, V fastest within each ε row.
    pub cells: Vec<(SePoint, SeClass)>,
    /// Sum of Success-cell areas (linear measure on the declared rectangle).
    pub volume: f64,
    /// Largest cell-center ε that still reaches (0,0); 0 if none does.
    pub eps_max: f64,
}

/// Classify every grid cell center by a full se_run and aggregate the basin
/// volume and its maximal ε. The rectangle and its linear measure are a
/// reporting convention recorded in `grid`, not a property of the map.
pub fn basin_map(
    grid: &GridSpec,
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
    opts: &SeOptions,
) -> Result<BasinMap> {
    grid.validate()?;
    check_se_params(alpha, rho, sigma_x2)?;
    let run_opts = SeOptions {
        keep_trace: false,
        ..*opts
    };
    let cells = grid.cells();
    let classed: Vec<(SePoint, SeClass)> = cells
        .par_iter()
        .map(|&(pt, _)| {
            (
                pt,
                se_run(pt, p, alpha, rho, sigma_x2, &run_opts).classification,
            )
        })
        .collect();
    let mut volume = 0.0;
    let mut eps_max = 0.0f64;
    for ((pt, class), (_, area)) in classed.iter().zip(cells.iter()) {
        if *class == SeClass::Success {
            volume += area;
            eps_max = eps_max.max(pt.eps);
        }
    }
    Ok(BasinMap {
        grid: *grid,
        cells: classed,
        volume,
        eps_max,
    })
}

/// Default basin rectangle for given ensemble parameters: [0, 2ρ/α]×[0, 2ρσ_x²].
pub fn default_basin_grid(alpha: f64, rho: f64, sigma_x2: f64, nv: usize, neps: usize) -> Result<GridSpec> {
    GridSpec::linear(2.0 * rho / alpha, nv, 2.0 * rho * sigma_x2, neps)
}

// ---------------------------------------------------------------------------
// Fixed-point continuation along λ
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationPoint {
    pub lambda: f64,
    pub v: f64,
    pub eps: f64,
    pub class: SeClass,
    /// True when no admissible Success/FiniteFixedPoint outcome was found.
    pub gap_flag: bool,
    pub iters: usize,
}

/// A maximal run of gap-flagged λ values, bracketed by the nearest valid λ
/// on each side (NaN when the run touches the end of the path).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Gap {
    pub lambda_upper: f64,
    pub lambda_lower: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationResult {
    pub points: Vec<ContinuationPoint>,
    pub gaps: Vec<Gap>,
}

fn spec_for(family: PenaltyFamily, lambda: f64, a: f64) -> Result<PenaltySpec> {
    match family {
        PenaltyFamily::L1 => PenaltySpec::l1(lambda),
        PenaltyFamily::Scad => PenaltySpec::scad(lambda, a),
        PenaltyFamily::Mcp => PenaltySpec::mcp(lambda, a),
    }
}

fn outcome_valid(o: &SeOutcome, p: &PenaltySpec, alpha: f64) -> bool {
    matches!(
        o.classification,
        SeClass::Success | SeClass::FiniteFixedPoint
    ) && p.admissible(o.final_point.v / alpha)
}

/// An iteration-capped run whose error ε has already fallen to the
/// perfect-reconstruction scale is a crawl toward (0,0), not a missing
/// solution: near a marginal success entry the finite branch merges into
/// the success point and the approach is arbitrarily slow, with V trailing
/// ε by orders of magnitude. ε is the discriminator (failure branches keep
/// macroscopic ε); V gets only a loose sanity bound.
fn converging_to_success(o: &SeOutcome) -> bool {
    o.classification == SeClass::MaxIters && o.final_point.v <= 1e-2 && o.final_point.eps <= 1e-8
}

/// Deterministic restart candidates used when the warm start loses the
/// branch: a stale fixed point, the standard cold starts, and a log-spread
/// fan over admissible V and ε scales (a reborn finite branch tends to sit
/// at small V with a thin basin, so small V values must be covered).
fn restart_fan(
    stale: Option<SePoint>,
    p: &PenaltySpec,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
) -> Vec<SePoint> {
    let mut fan = Vec::with_capacity(40);
    if let Some(s) = stale {
        fan.push(s);
    }
    fan.push(SePoint::new(rho / alpha, rho / alpha));
    fan.push(SePoint::new(rho / alpha, rho * sigma_x2));
    let v_cap = match p.family() {
        PenaltyFamily::Scad => ((p.a() - 1.0) * alpha).min(4.0 * rho.max(0.05) / alpha),
        PenaltyFamily::Mcp => (p.a() * alpha).min(4.0 * rho.max(0.05) / alpha),
        PenaltyFamily::L1 => 2.0 * rho.max(0.05) / alpha,
    };
    for fv in [0.02, 0.06, 0.15, 0.3, 0.55, 0.85] {
        for fe in [1e-3, 1e-2, 0.1, 0.5, 1.5] {
            fan.push(SePoint::new(fv * v_cap, fe * rho.max(0.05) * sigma_x2));
        }
    }
    fan
}

/// Follow the finite fixed point along a strictly decreasing λ path, warm
/// starting each solve from the previous fixed point (first solve from
/// (ρ/α, ρ/α)). Where the warm start stops yielding a valid fixed point a
/// deterministic restart fan is tried; surviving invalid λ's are gap-flagged.
/// An ascending refinement pass then re-enters each gap from the valid
/// branch below it (when that branch is a finite fixed point), pinning the
/// lower gap endpoint even where the reborn branch has a tiny basin.
pub fn fixed_point_continuation(
    lambda_path: &[f64],
    a: f64,
    family: PenaltyFamily,
    alpha: f64,
    rho: f64,
    sigma_x2: f64,
) -> Result<ContinuationResult> {
    check_se_params(alpha, rho, sigma_x2)?;
    if lambda_path.is_empty() {
        return Err(Error::InvalidParameter {
            name: "lambda_path",
            value: 0.0,
            constraint: "non-empty",
        });
    }
    for w in lambda_path.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter {
                name: "lambda_path",
                value: w[1],
                constraint: "strictly decreasing",
            });
        }
    }
    if !(lambda_path[lambda_path.len() - 1] > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda_path",
            value: lambda_path[lambda_path.len() - 1],
            constraint: "positive",
        });
    }

    // long leash: critical slowing near a disappearing fixed point must not
    // masquerade as a gap
    let warm_opts = SeOptions {
        max_iters: 100_000,
        ..Default::default()
    };
    let fan_opts = SeOptions {
        max_iters: 3000,
        ..Default::default()
    };

    let mut outcomes: Vec<SeOutcome> = Vec::with_capacity(lambda_path.len());
    let mut warm = SePoint::new(rho / alpha, rho / alpha);
    let mut stale: Option<SePoint> = None;

    for &lambda in lambda_path {
        let p = spec_for(family, lambda, a)?;
        let mut best = se_run(warm, &p, alpha, rho, sigma_x2, &warm_opts);
        if !outcome_valid(&best, &p, alpha) {
            // The restart fan tracks the finite branch only: an isolated
            // init that happens to land in the success basin says nothing
            // about whether the continued solution exists at this λ.
            for cand in restart_fan(stale, &p, alpha, rho, sigma_x2) {
                let o = se_run(cand, &p, alpha, rho, sigma_x2, &fan_opts);
                if o.classification == SeClass::FiniteFixedPoint && outcome_valid(&o, &p, alpha) {
                    best = o;
                    break;
                }
            }
        }
        if outcome_valid(&best, &p, alpha) || converging_to_success(&best) {
            warm = best.final_point;
        }
        if best.classification == SeClass::FiniteFixedPoint && outcome_valid(&best, &p, alpha) {
            stale = Some(best.final_point);
        }
        outcomes.push(best);
    }

    let is_gap = |o: &SeOutcome, lambda: f64| -> bool {
        let p = spec_for(family, lambda, a).expect("validated above");
        !outcome_valid(o, &p, alpha) && !converging_to_success(o)
    };

    // ascending refinement: walk each flagged run from below, warm starting
    // at the first valid finite fixed point underneath it
    let flagged: Vec<bool> = outcomes
        .iter()
        .zip(lambda_path)
        .map(|(o, &l)| is_gap(o, l))
        .collect();
    let mut idx = lambda_path.len();
    while idx > 0 {
        idx -= 1;
        if !flagged[idx] {
            continue;
        }
        // idx is the bottom of a flagged run; the anchor sits just below it
        let anchor = idx + 1;
        if anchor >= lambda_path.len() {
            continue;
        }
        let anchor_out = &outcomes[anchor];
        if anchor_out.classification != SeClass::FiniteFixedPoint {
            // success anchors collapse to (0,0), which warm-restarts trivially
            continue;
        }
        let mut warm_up = anchor_out.final_point;
        let mut j = idx;
        loop {
            let p = spec_for(family, lambda_path[j], a)?;
            let o = se_run(warm_up, &p, alpha, rho, sigma_x2, &warm_opts);
            if o.classification == SeClass::FiniteFixedPoint && outcome_valid(&o, &p, alpha) {
                warm_up = o.final_point;
                outcomes[j] = o;
                if j == 0 {
                    break;
                }
                j -= 1;
                if !is_gap(&outcomes[j], lambda_path[j]) {
                    break;
                }
            } else {
                break;
            }
        }
        // skip the rest of this run (already refined or truly extinct)
        while idx > 0 && flagged[idx - 1] {
            idx -= 1;
        }
    }

    let points: Vec<ContinuationPoint> = outcomes
        .iter()
        .zip(lambda_path)
        .map(|(o, &lambda)| ContinuationPoint {
            lambda,
            v: o.final_point.v,
            eps: o.final_point.eps,
            class: o.classification,
            gap_flag: is_gap(o, lambda),
            iters: o.iters,
        })
        .collect();

    let mut gaps = Vec::new();
    let mut i = 0;
    while i < points.len() {
        if points[i].gap_flag {
            let start = i;
            while i < points.len() && points[i].gap_flag {
                i += 1;
            }
            gaps.push(Gap {
                lambda_upper: if start > 0 {
                    points[start - 1].lambda
                } else {
                    f64::NAN
                },
                lambda_lower: if i < points.len() {
                    points[i].lambda
                } else {
                    f64::NAN
                },
            });
        } else {
            i += 1;
        }
    }

    Ok(ContinuationResult { points, gaps })
}

/// Strictly decreasing λ path from `hi` to `lo` with step `step` (positive),
/// endpoint included.
pub fn lambda_path(hi: f64, lo: f64, step: f64) -> Result<Vec<f64>> {
    if !(hi.is_finite() && lo.is_finite() && hi > lo && lo > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda range",
            value: lo,
            constraint: "0 < lo < hi < inf",
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParameter {
            name: "step",
            value: step,
            constraint: "0 < step",
        });
    }
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    let mut path: Vec<f64> = (0..=n).map(|k| hi - k as f64 * (hi - lo) / n as f64).collect();
    let last = path.len() - 1;
    path[last] = lo;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scad(lambda: f64, a: f64) -> PenaltySpec {
        PenaltySpec::scad(lambda, a).unwrap()
    }

    #[test]
    fn origin_is_an_exact_fixed_point() {
        let p = scad(1.0, 3.0);
        let next = se_step(SePoint::new(0.0, 0.0), &p, 0.5, 0.3, 1.0).unwrap();
        assert_eq!(next.v, 0.0);
        assert_eq!(next.eps, 0.0);
        let out = se_run(SePoint::new(0.0, 0.0), &p, 0.5, 0.3, 1.0, &SeOptions::default());
        assert_eq!(out.classification, SeClass::Success);
        assert_eq!(out.iters, 0);
    }

    #[test]
    fn zero_v_limit_rescales_eps() {
        let p = scad(1.0, 3.0);
        let next = se_step(SePoint::new(0.0, 0.2), &p, 0.5, 0.3, 1.0).unwrap();
        assert_eq!(next.v, 0.0);
        assert!((next.eps - 0.4).abs() < 1e-15);
    }

    #[test]
    fn no_signal_no_noise_collapses() {
        let p = scad(1.0, 3.0);
        let next = se_step(SePoint::new(0.4, 0.0), &p, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(next.v, 0.0);
        assert_eq!(next.eps, 0.0);
    }

    #[test]
    fn inadmissible_curvature_is_reported() {
        let p = scad(1.0, 1.5);
        // s = V/α = 1.2 > a − 1 = 0.5
        let err = se_step(SePoint::new(0.6, 0.1), &p, 0.5, 0.3, 1.0).unwrap_err();
        assert!(matches!(err, Error::Inadmissible { .. }));
        let out = se_run(SePoint::new(0.6, 0.1), &p, 0.5, 0.3, 1.0, &SeOptions::default());
        assert_eq!(out.classification, SeClass::Inadmissible);
    }

    #[test]
    fn failure_point_at_large_lambda() {
        // large-λ regime keeps a finite fixed point
        let p = scad(1.0, 3.0);
        let out = se_run(
            SePoint::new(0.28 / 0.5, 0.28 / 0.5),
            &p,
            0.5,
            0.28,
            1.0,
            &SeOptions::default(),
        );
        assert_eq!(out.classification, SeClass::FiniteFixedPoint);
        assert!(out.final_point.v > 1e-6 && out.final_point.eps > 1e-6);

        // re-stepping the fixed point moves it by less than the tolerance
        let fp = out.final_point;
        let next = se_step(fp, &p, 0.5, 0.28, 1.0).unwrap();
        assert!((next.v - fp.v).abs() < 1e-11 && (next.eps - fp.eps).abs() < 1e-11);
    }

    #[test]
    fn small_lambda_diverges_from_cold_start() {
        let p = scad(0.1, 3.0);
        let out = se_run(
            SePoint::new(0.28 / 0.5, 0.28 / 0.5),
            &p,
            0.5,
            0.28,
            1.0,
            &SeOptions::default(),
        );
        assert_eq!(out.classification, SeClass::Diverged);
    }

    #[test]
    fn success_from_inside_the_basin() {
        // the basin hugs the V axis: moderate V with small ε flows to (0,0)
        // (near-origin starts with ε ≈ V escape — the ε map picks up ε/α)
        let p = scad(0.3, 3.0);
        let out = se_run(
            SePoint::new(0.2, 1e-3),
            &p,
            0.5,
            0.2,
            1.0,
            &SeOptions {
                keep_trace: true,
                ..Default::default()
            },
        );
        assert_eq!(out.classification, SeClass::Success);
        // tail of the trace decreases monotonically in ε
        let tr = out.trace.unwrap();
        let tail = &tr[tr.len() / 2..];
        for w in tail.windows(2) {
            assert!(w[1].eps <= w[0].eps + 1e-15);
        }
    }

    #[test]
    fn flow_field_flags_and_directions() {
        let p = scad(0.3, 3.0);
        let grid = GridSpec::linear(1.2, 7, 0.6, 5).unwrap();
        let nodes = flow_field(&grid, &p, 0.5, 0.28, 1.0).unwrap();
        assert_eq!(nodes.len(), 35);
        // the (0,0) corner node is an exact fixed point
        let origin = &nodes[0];
        assert_eq!((origin.v, origin.eps), (0.0, 0.0));
        assert_eq!((origin.dv, origin.deps), (0.0, 0.0));
        // flag must mirror the penalty's own admissibility at s = V/α
        // (strict bound: the V = (a−1)α = 1 node itself is inadmissible)
        for nd in &nodes {
            assert_eq!(nd.admissible, p.admissible(nd.v / 0.5), "V={}", nd.v);
            if nd.admissible && nd.dv != 0.0 {
                let n = nd.dv.hypot(nd.deps);
                assert!((nd.norm_dv - nd.dv / n).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flow_eps_row_is_invariant_without_signal() {
        let p = scad(0.5, 3.0);
        let grid = GridSpec {
            v_min: 0.0,
            v_max: 0.8,
            nv: 6,
            eps_min: 0.0,
            eps_max: 0.5,
            neps: 3,
            log_spacing: false,
        };
        let nodes = flow_field(&grid, &p, 0.5, 0.0, 1.0).unwrap();
        for nd in nodes.iter().filter(|n| n.eps == 0.0 && n.admissible) {
            assert_eq!(nd.deps, 0.0, "V={}", nd.v);
        }
    }

    #[test]
    fn basin_volume_and_eps_max() {
        let p = scad(0.3, 3.0);
        let grid = GridSpec::linear(2.0 * 0.2 / 0.5, 12, 2.0 * 0.2, 12).unwrap();
        let map = basin_map(&grid, &p, 0.5, 0.2, 1.0, &SeOptions::default()).unwrap();
        assert_eq!(map.cells.len(), 144);
        assert!(map.volume > 0.0, "basin should be nonempty at rho=0.2");
        assert!(map.eps_max > 0.0);
        let domain = (2.0 * 0.2 / 0.5) * (2.0 * 0.2);
        assert!(map.volume <= domain + 1e-12);
        // volume equals success count × cell area on a linear grid
        let n_succ = map
            .cells
            .iter()
            .filter(|(_, c)| *c == SeClass::Success)
            .count();
        let cell_area = domain / 144.0;
        assert!((map.volume - n_succ as f64 * cell_area).abs() < 1e-12);
    }

    #[test]
    fn lambda_path_construction() {
        let path = lambda_path(1.0, 0.1, 0.1).unwrap();
        assert_eq!(path.len(), 10);
        assert!((path[0] - 1.0).abs() < 1e-15);
        assert_eq!(*path.last().unwrap(), 0.1);
        for w in path.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(lambda_path(0.1, 1.0, 0.1).is_err());
    }

    #[test]
    fn continuation_enters_basin_without_gap() {
        // moderate sparsity: the fixed point slides into the basin and the
        // path ends in Success with no gap anywhere
        let path = lambda_path(1.0, 0.1, 0.01).unwrap();
        let res =
            fixed_point_continuation(&path, 3.0, PenaltyFamily::Scad, 0.5, 0.28, 1.0).unwrap();
        assert!(res.gaps.is_empty(), "gaps: {:?}", res.gaps);
        assert!(res
            .points
            .iter()
            .any(|pt| pt.class == SeClass::Success && pt.lambda < 0.4));
        // monotone handoff: first point is a finite fixed point
        assert_eq!(res.points[0].class, SeClass::FiniteFixedPoint);
    }

    #[test]
    fn l1_path_has_no_gap() {
        let path = lambda_path(1.0, 0.2, 0.05).unwrap();
        let res = fixed_point_continuation(&path, 1e8, PenaltyFamily::L1, 0.5, 0.2, 1.0).unwrap();
        assert!(res.gaps.is_empty());
        for pt in &res.points {
            assert!(!pt.gap_flag);
        }
    }
}
