//! Approximate message passing on a realized instance, with an optional
//! (λ, a) lowering schedule applied between iterations.
//!
//! The residual carries its history: R ← (y − Ax̂)/(αV̂) + R. Writing
//! z = V̂·R turns this into the familiar corrected residual
//! z = (y − Ax̂)/α + (V̂/V̂′)z′, whose memory coefficient V̂/V̂′ equals
//! (1/α)·mean ∂x̂/∂m — without it the iteration is plain thresholded
//! Landweber and does not follow state evolution. The 1/α on the drive
//! term compensates the measurement columns carrying squared norm α (the
//! matrix ensemble is Gaussian with variance 1/N, not 1/M): it makes the
//! pseudo-data x̂ + V̂·AᵀR an unbiased estimate of the signal with noise
//! variance mse/α, the width state evolution assumes.

use serde::Serialize;
use std::io::Write as IoWrite;
use std::path::Path;

use crate::error::{Error, Result};
use crate::instance::{dot, matvec, mse_against_truth, residual_field_pass, ProblemInstance};
use crate::penalty::{PenaltyFamily, PenaltySpec};

/// One (λ, a) plateau held for `steps` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub lambda: f64,
    pub a: f64,
    pub steps: usize,
}

/// Piecewise-constant (λ, a) control sequence; the last segment persists if
/// the run outlives the schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSchedule {
    segments: Vec<Segment>,
}

impl ControlSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter {
                name: "schedule",
                value: 0.0,
                constraint: "at least one segment",
            });
        }
        for seg in &segments {
            if !(seg.lambda.is_finite() && seg.lambda > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "segment lambda",
                    value: seg.lambda,
                    constraint: "finite and positive",
                });
            }
            if !(seg.a > 1.0) || seg.a.is_nan() {
                return Err(Error::InvalidParameter {
                    name: "segment a",
                    value: seg.a,
                    constraint: "greater than 1",
                });
            }
            if seg.steps == 0 {
                return Err(Error::InvalidParameter {
                    name: "segment steps",
                    value: 0.0,
                    constraint: "positive",
                });
            }
        }
        Ok(ControlSchedule { segments })
    }

    /// Single plateau: fixed-penalty AMP.
    pub fn fixed(lambda: f64, a: f64) -> Result<Self> {
        ControlSchedule::new(vec![Segment {
            lambda,
            a,
            steps: 1,
        }])
    }

    /// λ ladder from `start` towards `end` by signed `step`, `k` iterations
    /// per rung, constant `a`. `end` is included (within rounding).
    pub fn stepped(start: f64, step: f64, end: f64, k: usize, a: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "schedule range",
                value: step,
                constraint: "finite",
            });
        }
        if step == 0.0 || (end - start) * step < 0.0 {
            return Err(Error::InvalidParameter {
                name: "schedule step",
                value: step,
                constraint: "nonzero, pointing from start to end",
            });
        }
        let n = ((end - start) / step).round().max(0.0) as usize;
        let segments = (0..=n)
            .map(|j| Segment {
                lambda: if j == n { end } else { start + j as f64 * step },
                a,
                steps: k,
            })
            .collect();
        ControlSchedule::new(segments)
    }

    /// Parse "start:step:end@k" (the step is signed, e.g. "1.0:-0.1:0.1@20").
    pub fn parse(text: &str, a: f64) -> Result<Self> {
        let bad = || Error::MalformedFile(format!("schedule {text:?}: want start:step:end@k"));
        let (range, k) = text.split_once('@').ok_or_else(bad)?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        let mut parts = range.splitn(3, ':');
        let mut next = || -> Result<f64> { parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad()) };
        let (start, step, end) = (next()?, next()?, next()?);
        ControlSchedule::stepped(start, step, end, k, a)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }

    /// (λ, a) in force at iteration `t` (0-based); the final segment holds
    /// beyond the schedule's end.
    pub fn params_at(&self, t: usize) -> (f64, f64) {
        let mut rem = t;
        for seg in &self.segments {
            if rem < seg.steps {
                return (seg.lambda, seg.a);
            }
            rem -= seg.steps;
        }
        let last = self.segments.last().expect("non-empty by construction");
        (last.lambda, last.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AmpStatus {
    Converged,
    MaxIters,
    Diverged,
    AdmissibilityViolation,
}

/// State of the run *entering* iteration `t`: the estimate after `t` updates
/// and the (λ, a) about to be applied.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub lambda: f64,
    pub a: f64,
    pub mse: f64,
    pub v_hat: f64,
    /// ‖y − Ax̂‖²/M for the estimate of this row.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmpReport {
    pub trajectory: Vec<TrajectoryRow>,
    pub status: AmpStatus,
    pub final_xhat: Vec<f64>,
    pub final_mse: f64,
    /// Iterations actually performed.
    pub iters: usize,
    /// Iteration at which the (λ, a) switch failed admissibility, if any.
    pub violation_t: Option<usize>,
    /// Times V̂ was lifted off the 1e-300 floor.
    pub clamp_events: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AmpOptions {
    pub max_iters: usize,
    /// Convergence tolerance on ‖x̂⁺ − x̂‖²/N.
    pub tol: f64,
    /// Divergence bound on V̂ and on mse.
    pub div_bound: f64,
    /// Mixing factor on the estimate update; 1.0 = undamped.
    pub damping: f64,
    /// Initial per-coordinate variance v̂ᵢ; None uses ρσ_x².
    pub vhat0: Option<f64>,
}

impl Default for AmpOptions {
    fn default() -> Self {
        AmpOptions {
            max_iters: 1000,
            tol: 1e-12,
            div_bound: 1e8,
            damping: 1.0,
            vhat0: None,
        }
    }
}

const VHAT_FLOOR: f64 = 1e-300;

fn spec_for(family: PenaltyFamily, lambda: f64, a: f64) -> Result<PenaltySpec> {
    match family {
        PenaltyFamily::L1 => PenaltySpec::l1(lambda),
        PenaltyFamily::Scad => PenaltySpec::scad(lambda, a),
        PenaltyFamily::Mcp => PenaltySpec::mcp(lambda, a),
    }
}

/// Run AMP for `family` on a realized instance under a (λ, a) schedule.
///
/// Each iteration costs exactly two matrix–vector products (A·x̂ and Aᵀ·R,
/// fused into one sweep over A) plus O(N) scalar work. The trajectory row at
/// index t describes the state entering iteration t; `final_xhat` is the
/// estimate after the last update, one step past the last row.
pub fn amp_run(
    inst: &ProblemInstance,
    family: PenaltyFamily,
    schedule: &ControlSchedule,
    opts: &AmpOptions,
) -> Result<AmpReport> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "damping",
            value: opts.damping,
            constraint: "in (0, 1]",
        });
    }
    if !(opts.tol > 0.0 && opts.div_bound > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol/div_bound",
            value: opts.tol.min(opts.div_bound),
            constraint: "positive",
        });
    }
    let n = inst.n();
    let m = inst.m();
    let p0 = &inst.params;
    let vhat_init = match opts.vhat0 {
        Some(v) if v.is_finite() && v > 0.0 => v,
        Some(v) => {
            return Err(Error::InvalidParameter {
                name: "vhat0",
                value: v,
                constraint: "finite and positive",
            })
        }
        None => p0.rho * p0.sigma_x2,
    };

    let mut xhat = vec![0.0f64; n];
    let mut r_acc = vec![0.0f64; m];
    // V̂ = (1/M)Σᵢ v̂ᵢ, so a uniform v̂ᵢ = ρσ_x² starts V̂ at ρσ_x²·N/M
    let mut v_hat = vhat_init * n as f64 / m as f64;

    let gamma = opts.damping;
    // α = M/N of the realized matrix — its columns carry norm² ≈ α
    let alpha = m as f64 / n as f64;
    let mut trajectory = Vec::with_capacity(opts.max_iters.min(4096) + 1);
    let mut status = AmpStatus::MaxIters;
    let mut violation_t = None;
    let mut clamp_events = 0usize;
    let mut iters = 0usize;
    let mut mse = mse_against_truth(&xhat, inst)?;

    for t in 0..opts.max_iters {
        let (lambda, a) = schedule.params_at(t);
        let p = spec_for(family, lambda, a)?;

        // the incoming (λ, a) must be admissible against the current width
        // before any state is touched; the offending iteration still logs
        // the residual of the entering estimate
        if !p.admissible(v_hat) {
            trajectory.push(TrajectoryRow {
                t,
                lambda,
                a,
                mse,
                v_hat,
                residual: residual_norm2(inst, &xhat)?,
            });
            status = AmpStatus::AdmissibilityViolation;
            violation_t = Some(t);
            break;
        }

        // both matvecs in one sweep over A: residual of the entering
        // estimate, its accumulation into R, and the field correction AᵀR
        let (res_norm2, corr) =
            residual_field_pass(m, n, &inst.matrix, &inst.y, &xhat, &mut r_acc, alpha * v_hat);
        trajectory.push(TrajectoryRow {
            t,
            lambda,
            a,
            mse,
            v_hat,
            residual: res_norm2 / m as f64,
        });
        let mut delta2 = 0.0;
        let mut vhat_sum = 0.0;
        let mut finite = true;
        for i in 0..n {
            let h = xhat[i] / v_hat + corr[i];
            if !h.is_finite() {
                finite = false;
                break;
            }
            let tr = p.threshold_field(v_hat, h)?;
            let xnew = gamma * tr.x_star + (1.0 - gamma) * xhat[i];
            let d = xnew - xhat[i];
            delta2 += d * d;
            vhat_sum += tr.sigma_factor;
            xhat[i] = xnew;
        }
        iters = t + 1;
        if !finite {
            status = AmpStatus::Diverged;
            break;
        }

        let mut v_next = vhat_sum / m as f64;
        if v_next < VHAT_FLOOR {
            v_next = VHAT_FLOOR;
            clamp_events += 1;
        }
        v_hat = v_next;
        mse = mse_against_truth(&xhat, inst)?;

        if !(v_hat.is_finite() && mse.is_finite()) || v_hat > opts.div_bound || mse > opts.div_bound
        {
            status = AmpStatus::Diverged;
            break;
        }
        if delta2 / n as f64 <= opts.tol {
            status = AmpStatus::Converged;
            break;
        }
    }

    Ok(AmpReport {
        trajectory,
        status,
        final_mse: mse,
        final_xhat: xhat,
        iters,
        violation_t,
        clamp_events,
    })
}

/// Whether the run ended at mse ≤ tol (truth is always carried by synthetic
/// instances).
pub fn success_indicator(report: &AmpReport, tol: f64) -> bool {
    report.final_mse <= tol
}

/// Residual ‖y − Ax̂‖²/M of an arbitrary estimate (one matrix–vector product).
pub fn residual_norm2(inst: &ProblemInstance, xhat: &[f64]) -> Result<f64> {
    if xhat.len() != inst.n() {
        return Err(Error::LengthMismatch {
            expected: inst.n(),
            got: xhat.len(),
        });
    }
    let ax = matvec(inst.m(), inst.n(), &inst.matrix, xhat);
    let mut acc = 0.0;
    for (&y, &a) in inst.y.iter().zip(&ax) {
        let d = y - a;
        acc += d * d;
    }
    Ok(acc / inst.m() as f64)
}

/// Write the trajectory as CSV: t,lambda,a,mse,V_hat,residual with 17
/// significant digits on every float column.
pub fn write_trajectory_csv(report: &AmpReport, w: &mut impl IoWrite) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    writeln!(w, "t,lambda,a,mse,V_hat,residual").map_err(io)?;
    for row in &report.trajectory {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            row.t, row.lambda, row.a, row.mse, row.v_hat, row.residual
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn trajectory_csv_to_path(report: &AmpReport, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?,
    );
    write_trajectory_csv(report, &mut f)?;
    f.flush().map_err(|e| Error::Io(e.to_string()))
}

/// ‖x‖²/len (zero-estimate mse baseline and general diagnostics).
pub fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    dot(x, x) / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_instance, EnsembleParams};

    #[test]
    fn schedule_parse_and_lookup() {
        let s = ControlSchedule::parse("1.0:-0.1:0.1@20", 3.0).unwrap();
        assert_eq!(s.segments().len(), 10);
        assert_eq!(s.total_steps(), 200);
        assert_eq!(s.params_at(0), (1.0, 3.0));
        assert_eq!(s.params_at(19), (1.0, 3.0));
        assert!((s.params_at(20).0 - 0.9).abs() < 1e-12);
        assert_eq!(s.params_at(180), (0.1, 3.0));
        // past the end the last rung persists
        assert_eq!(s.params_at(10_000), (0.1, 3.0));

        assert!(ControlSchedule::parse("1.0:0.1:0.1@20", 3.0).is_err()); // wrong sign
        assert!(ControlSchedule::parse("1.0:-0.1:0.1", 3.0).is_err()); // no @k
        assert!(ControlSchedule::parse("1.0:-0.1@20", 3.0).is_err()); // two fields
        assert!(ControlSchedule::new(vec![]).is_err());
        assert!(ControlSchedule::fixed(1.0, 1.0).is_err()); // a must exceed 1
    }

    #[test]
    fn schedule_single_value_range() {
        let s = ControlSchedule::stepped(0.5, -0.1, 0.5, 7, 2.0).unwrap();
        assert_eq!(s.segments().len(), 1);
        assert_eq!(s.params_at(3), (0.5, 2.0));
    }

    #[test]
    fn empty_signal_converges_immediately() {
        // a realization with no occupied entries: y = 0 exactly
        let params = EnsembleParams::new(400, 0.5, 1e-4, 1.0, 11).unwrap();
        let mut inst = gen_instance(&params).unwrap();
        inst.x0.iter_mut().for_each(|v| *v = 0.0);
        inst.y.iter_mut().for_each(|v| *v = 0.0);
        let sched = ControlSchedule::fixed(1.0, 3.0).unwrap();
        let rep = amp_run(&inst, PenaltyFamily::Scad, &sched, &AmpOptions::default()).unwrap();
        assert_eq!(rep.status, AmpStatus::Converged);
        assert_eq!(rep.iters, 1);
        assert!(rep.final_xhat.iter().all(|&v| v == 0.0));
        assert_eq!(rep.final_mse, 0.0);
        assert!(success_indicator(&rep, 1e-8));
    }

    #[test]
    fn inadmissible_start_is_a_status_not_a_panic() {
        // V̂⁰ = ρσ_x²/α = 1, so SCAD needs a > 2
        let params = EnsembleParams::new(300, 0.5, 0.5, 1.0, 5).unwrap();
        let inst = gen_instance(&params).unwrap();
        let sched = ControlSchedule::fixed(1.0, 1.5).unwrap();
        let rep = amp_run(&inst, PenaltyFamily::Scad, &sched, &AmpOptions::default()).unwrap();
        assert_eq!(rep.status, AmpStatus::AdmissibilityViolation);
        assert_eq!(rep.violation_t, Some(0));
        assert_eq!(rep.iters, 0);
        // the estimate never moved
        assert!(rep.final_xhat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let params = EnsembleParams::new(600, 0.5, 0.2, 1.0, 42).unwrap();
        let inst = gen_instance(&params).unwrap();
        let sched = ControlSchedule::fixed(0.8, 3.0).unwrap();
        let opts = AmpOptions {
            max_iters: 40,
            ..Default::default()
        };
        let a = amp_run(&inst, PenaltyFamily::Scad, &sched, &opts).unwrap();
        let b = amp_run(&inst, PenaltyFamily::Scad, &sched, &opts).unwrap();
        assert_eq!(a.final_xhat, b.final_xhat);
        assert_eq!(a.trajectory.len(), b.trajectory.len());
        for (ra, rb) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!((ra.mse, ra.v_hat, ra.residual), (rb.mse, rb.v_hat, rb.residual));
        }
    }

    #[test]
    fn trajectory_rows_describe_entering_state() {
        let params = EnsembleParams::new(500, 0.5, 0.25, 1.0, 3).unwrap();
        let inst = gen_instance(&params).unwrap();
        let sched = ControlSchedule::fixed(1.0, 3.0).unwrap();
        let opts = AmpOptions {
            max_iters: 5,
            ..Default::default()
        };
        let rep = amp_run(&inst, PenaltyFamily::Scad, &sched, &opts).unwrap();
        let r0 = &rep.trajectory[0];
        assert_eq!(r0.t, 0);
        // x̂⁰ = 0: mse is the signal power, residual is ‖y‖²/M
        assert!((r0.mse - mean_square(&inst.x0)).abs() < 1e-15);
        let y_norm2 = inst.y.iter().map(|v| v * v).sum::<f64>() / inst.m() as f64;
        assert!((r0.residual - y_norm2).abs() < 1e-15);
        assert!((r0.v_hat - 0.25 / 0.5).abs() < 1e-12);
        assert_eq!(rep.trajectory.len(), 5);
    }

    #[test]
    fn csv_shape_and_precision() {
        let params = EnsembleParams::new(200, 0.5, 0.2, 1.0, 9).unwrap();
        let inst = gen_instance(&params).unwrap();
        let sched = ControlSchedule::fixed(1.0, 3.0).unwrap();
        let opts = AmpOptions {
            max_iters: 3,
            ..Default::default()
        };
        let rep = amp_run(&inst, PenaltyFamily::Scad, &sched, &opts).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,lambda,a,mse,V_hat,residual"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,1.0000000000000000e0,3.0000000000000000e0,"));
        assert_eq!(text.lines().count(), 1 + rep.trajectory.len());
    }

    #[test]
    fn reconstructs_easy_instance() {
        // generous measurements, sparse signal: fixed ℓ1 with a small λ rung
        // then SCAD cleanup reaches machine-level mse
        let params = EnsembleParams::new(1500, 0.7, 0.1, 1.0, 17).unwrap();
        let inst = gen_instance(&params).unwrap();
        let sched = ControlSchedule::stepped(1.0, -0.1, 0.1, 15, 3.0).unwrap();
        let opts = AmpOptions {
            max_iters: 400,
            ..Default::default()
        };
        let rep = amp_run(&inst, PenaltyFamily::Scad, &sched, &opts).unwrap();
        assert_eq!(rep.status, AmpStatus::Converged, "mse={}", rep.final_mse);
        assert!(rep.final_mse <= 1e-8, "mse={}", rep.final_mse);
    }
}
