//! One function per subcommand: resolve config, optionally stop at the
//! dry-run plan, compute, write the result file and its manifest, print a
//! one-line summary.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde_json::{json, Value};

use ncvxcs_core::amp::{amp_run, write_trajectory_csv, AmpOptions, ControlSchedule};
use ncvxcs_core::instance::{gen_instance, EnsembleParams};
use ncvxcs_core::penalty::PenaltySpec;
use ncvxcs_core::replica::{
    a_c_of_lambda, alpha_c, at_condition_general, lambda_c, ncc_limit, ncc_limit_over_a, rho_c,
    solve_saddle, solve_success, NccOptions, SaddleOptions, SaddleStatus,
};
use ncvxcs_core::se::{
    basin_map, fixed_point_continuation, flow_field, lambda_path, se_run, GridSpec, SeOptions,
    SePoint,
};

use crate::config::{
    manifest_path, parse_grid, write_manifest, CliError, CliResult, FamilyArg, FormatArg, Resolver,
};

/// Global flags shared by every subcommand.
pub struct Globals {
    pub config: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Option<FormatArg>,
    pub dry_run: bool,
}

fn resolver(g: &Globals) -> CliResult<Resolver> {
    Resolver::new(g.config.as_deref())
}

/// Resolve format + output path (default name per command and format),
/// record both, and handle --dry-run. Returns None when the plan was
/// printed instead of running.
fn prepare(
    r: &mut Resolver,
    g: &Globals,
    command: &str,
    stem: &str,
    default_format: FormatArg,
) -> CliResult<Option<(FormatArg, PathBuf)>> {
    let format = r.opt("format", g.format, default_format)?;
    let ext = match format {
        FormatArg::Csv => "csv",
        FormatArg::Json => "json",
    };
    let out = r.opt("output", g.output.clone(), PathBuf::from(format!("{stem}.{ext}")))?;
    if g.dry_run {
        let plan = json!({
            "command": command,
            "resolved_config": Value::Object(r.resolved.clone()),
            "manifest": manifest_path(&out),
            "dry_run": true,
        });
        println!("{}", serde_json::to_string_pretty(&plan).map_err(|e| CliError::Config(e.to_string()))?);
        return Ok(None);
    }
    Ok(Some((format, out)))
}

fn finish(
    command: &str,
    r: &Resolver,
    seed: Option<u64>,
    out: &PathBuf,
    body: &[u8],
    t0: Instant,
) -> CliResult<()> {
    fs::write(out, body)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", out.display())))?;
    write_manifest(command, &r.resolved, seed, out, t0.elapsed().as_secs_f64())
}

fn to_json_pretty(v: &impl serde::Serialize) -> CliResult<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Config(e.to_string()))
}

fn resolve_penalty(
    r: &mut Resolver,
    family: Option<FamilyArg>,
    lambda: Option<f64>,
    a: Option<f64>,
) -> CliResult<(FamilyArg, PenaltySpec)> {
    let fam: FamilyArg = r.req("family", family)?;
    let lambda: f64 = r.req("lambda", lambda)?;
    let spec = match fam {
        FamilyArg::L1 => PenaltySpec::l1(lambda)?,
        FamilyArg::Scad => PenaltySpec::scad(lambda, r.req("a", a)?)?,
        FamilyArg::Mcp => PenaltySpec::mcp(lambda, r.req("a", a)?)?,
    };
    Ok((fam, spec))
}

// ---------------------------------------------------------------------------
// prox
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ProxArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Curvature scale s of the single-body problem x²/(2s) − w·x + J(x).
    #[arg(long)]
    s: Option<f64>,
    /// Field value w.
    #[arg(long)]
    w: Option<f64>,
}

pub fn prox(args: &ProxArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let (_, p) = resolve_penalty(&mut r, args.family, args.lambda, args.a)?;
    let s: f64 = r.req("s", args.s)?;
    let w: f64 = r.req("w", args.w)?;
    let Some((_, out)) = prepare(&mut r, g, "prox", "prox", FormatArg::Json)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let res = p.threshold_field(s, w)?;
    println!(
        "x*={:?} region={:?} sigma_factor={:?}",
        res.x_star, res.region, res.sigma_factor
    );
    let body = to_json_pretty(&json!({
        "x_star": res.x_star,
        "region": format!("{:?}", res.region),
        "sigma_factor": res.sigma_factor,
    }))?;
    finish("prox", &r, None, &out, body.as_bytes(), t0)
}

// ---------------------------------------------------------------------------
// amp
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct AmpArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// λ schedule "start:step:end@k" (signed step); conflicts with --lambda.
    #[arg(long)]
    schedule: Option<String>,
    /// Fixed λ (single-segment schedule); conflicts with --schedule.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    div_bound: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    /// Initial per-coordinate variance v̂ᵢ (default ρσ_x²).
    #[arg(long)]
    vhat0: Option<f64>,
}

pub fn amp(args: &AmpArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let fam: FamilyArg = r.req("family", args.family)?;
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let rho: f64 = r.req("rho", args.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let n: usize = r.req("n", args.n)?;
    let seed: u64 = r.opt("seed", args.seed, 0)?;
    let a: f64 = match fam {
        FamilyArg::L1 => r.opt("a", args.a, 1e8)?,
        _ => r.req("a", args.a)?,
    };
    let sched_text: Option<String> = r.maybe("schedule", args.schedule.clone())?;
    let lambda: Option<f64> = r.maybe("lambda", args.lambda)?;
    let schedule = match (&sched_text, lambda) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "conflicting parameters: give either `schedule` or `lambda`, not both".into(),
            ))
        }
        (Some(text), None) => ControlSchedule::parse(text, a)?,
        (None, Some(l)) => ControlSchedule::fixed(l, a)?,
        (None, None) => {
            return Err(CliError::Config(
                "missing required parameter: one of `schedule` or `lambda`".into(),
            ))
        }
    };
    let opts = AmpOptions {
        max_iters: r.opt("max_iters", args.max_iters, 1000)?,
        tol: r.opt("tol", args.tol, 1e-12)?,
        div_bound: r.opt("div_bound", args.div_bound, 1e8)?,
        damping: r.opt("damping", args.damping, 1.0)?,
        vhat0: r.maybe("vhat0", args.vhat0)?,
    };
    let Some((format, out)) = prepare(&mut r, g, "amp", "amp_trajectory", FormatArg::Csv)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let params = EnsembleParams::new(n, alpha, rho, sigma_x2, seed)?;
    let inst = gen_instance(&params)?;
    let report = amp_run(&inst, fam.to_family(), &schedule, &opts)?;
    let body: Vec<u8> = match format {
        FormatArg::Csv => {
            let mut buf = Vec::new();
            write_trajectory_csv(&report, &mut buf)?;
            buf
        }
        FormatArg::Json => to_json_pretty(&json!({
            "status": report.status,
            "iters": report.iters,
            "final_mse": report.final_mse,
            "violation_t": report.violation_t,
            "clamp_events": report.clamp_events,
            "trajectory": report.trajectory,
        }))?
        .into_bytes(),
    };
    println!(
        "status={:?} iters={} final_mse={:.6e} clamp_events={}",
        report.status, report.iters, report.final_mse, report.clamp_events
    );
    finish("amp", &r, Some(seed), &out, &body, t0)
}

// ---------------------------------------------------------------------------
// se-run
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SeRunArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    /// Start V (default ρσ_x²/α).
    #[arg(long)]
    v0: Option<f64>,
    /// Start ε (default ρσ_x²/α).
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    success_tol: Option<f64>,
    #[arg(long)]
    fp_tol: Option<f64>,
    #[arg(long)]
    div_bound: Option<f64>,
}

pub fn se_run_cmd(args: &SeRunArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let (_, p) = resolve_penalty(&mut r, args.family, args.lambda, args.a)?;
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let rho: f64 = r.req("rho", args.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let start_default = rho * sigma_x2 / alpha;
    let v0: f64 = r.opt("v0", args.v0, start_default)?;
    let eps0: f64 = r.opt("eps0", args.eps0, start_default)?;
    let defaults = SeOptions::default();
    let opts = SeOptions {
        max_iters: r.opt("max_iters", args.max_iters, defaults.max_iters)?,
        success_tol: r.opt("success_tol", args.success_tol, defaults.success_tol)?,
        fp_tol: r.opt("fp_tol", args.fp_tol, defaults.fp_tol)?,
        div_bound: r.opt("div_bound", args.div_bound, defaults.div_bound)?,
        keep_trace: true,
    };
    let Some((format, out)) = prepare(&mut r, g, "se-run", "se_run", FormatArg::Csv)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let outcome = se_run(SePoint::new(v0, eps0), &p, alpha, rho, sigma_x2, &opts);
    println!(
        "class={:?} iters={} V={:.6e} eps={:.6e}",
        outcome.classification, outcome.iters, outcome.final_point.v, outcome.final_point.eps
    );
    let body = match format {
        FormatArg::Csv => {
            let mut s = String::from("t,V,eps\n");
            for (t, pt) in outcome.trace.as_deref().unwrap_or_default().iter().enumerate() {
                let _ = writeln!(s, "{t},{:.16e},{:.16e}", pt.v, pt.eps);
            }
            s
        }
        FormatArg::Json => to_json_pretty(&outcome)?,
    };
    finish("se-run", &r, None, &out, body.as_bytes(), t0)
}

// ---------------------------------------------------------------------------
// se-flow / basin (shared grid flags)
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SeFlowArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    #[arg(long)]
    v_min: Option<f64>,
    /// Default 2ρσ_x²/α.
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long)]
    nv: Option<usize>,
    #[arg(long)]
    eps_min: Option<f64>,
    /// Default 2ρσ_x².
    #[arg(long)]
    eps_max: Option<f64>,
    #[arg(long)]
    neps: Option<usize>,
    #[arg(long)]
    log_spacing: bool,
}

fn resolve_grid(r: &mut Resolver, args: &SeFlowArgs, alpha: f64, rho: f64, sigma_x2: f64, default_n: usize) -> CliResult<GridSpec> {
    let grid = GridSpec {
        v_min: r.opt("v_min", args.v_min, 0.0)?,
        v_max: r.opt("v_max", args.v_max, 2.0 * rho * sigma_x2 / alpha)?,
        nv: r.opt("nv", args.nv, default_n)?,
        eps_min: r.opt("eps_min", args.eps_min, 0.0)?,
        eps_max: r.opt("eps_max", args.eps_max, 2.0 * rho * sigma_x2)?,
        neps: r.opt("neps", args.neps, default_n)?,
        log_spacing: r.opt(
            "log_spacing",
            if args.log_spacing { Some(true) } else { None },
            false,
        )?,
    };
    grid.validate()?;
    Ok(grid)
}

pub fn se_flow(args: &SeFlowArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let (_, p) = resolve_penalty(&mut r, args.family, args.lambda, args.a)?;
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let rho: f64 = r.req("rho", args.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let grid = resolve_grid(&mut r, args, alpha, rho, sigma_x2, 50)?;
    let Some((format, out)) = prepare(&mut r, g, "se-flow", "se_flow", FormatArg::Csv)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let nodes = flow_field(&grid, &p, alpha, rho, sigma_x2)?;
    let body = match format {
        FormatArg::Csv => {
            let mut s = String::from("V,eps,dV,deps,admissible\n");
            for nd in &nodes {
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    nd.v, nd.eps, nd.dv, nd.deps, nd.admissible
                );
            }
            s
        }
        FormatArg::Json => to_json_pretty(&nodes)?,
    };
    println!("nodes={}", nodes.len());
    finish("se-flow", &r, None, &out, body.as_bytes(), t0)
}

#[derive(Args, Debug)]
pub struct BasinArgs {
    #[command(flatten)]
    grid: SeFlowArgs,
    #[arg(long)]
    max_iters: Option<usize>,
}

pub fn basin(args: &BasinArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let (_, p) = resolve_penalty(&mut r, args.grid.family, args.grid.lambda, args.grid.a)?;
    let alpha: f64 = r.req("alpha", args.grid.alpha)?;
    let rho: f64 = r.req("rho", args.grid.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.grid.sigma_x2, 1.0)?;
    let grid = resolve_grid(&mut r, &args.grid, alpha, rho, sigma_x2, 64)?;
    let defaults = SeOptions::default();
    let opts = SeOptions {
        max_iters: r.opt("max_iters", args.max_iters, defaults.max_iters)?,
        ..defaults
    };
    let Some((format, out)) = prepare(&mut r, g, "basin", "basin", FormatArg::Csv)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let map = basin_map(&grid, &p, alpha, rho, sigma_x2, &opts)?;
    println!("volume={:.6e} eps_max={:.6e}", map.volume, map.eps_max);
    let body = match format {
        FormatArg::Csv => {
            let mut s = String::from("V0,eps0,class\n");
            for (pt, class) in &map.cells {
                let _ = writeln!(s, "{:.16e},{:.16e},{class:?}", pt.v, pt.eps);
            }
            s
        }
        FormatArg::Json => to_json_pretty(&json!({
            "volume": map.volume,
            "eps_max": map.eps_max,
            "grid": map.grid,
            "params": {
                "family": p.family(),
                "lambda": p.lambda(),
                "a": p.a(),
                "alpha": alpha,
                "rho": rho,
                "sigma_x2": sigma_x2,
            },
        }))?,
    };
    finish("basin", &r, None, &out, body.as_bytes(), t0)
}

// ---------------------------------------------------------------------------
// continue
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ContinueArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    #[arg(long)]
    lambda_hi: Option<f64>,
    #[arg(long)]
    lambda_lo: Option<f64>,
    #[arg(long)]
    lambda_step: Option<f64>,
}

pub fn continue_cmd(args: &ContinueArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let fam: FamilyArg = r.req("family", args.family)?;
    let a: f64 = match fam {
        FamilyArg::L1 => r.opt("a", args.a, 1e8)?,
        _ => r.req("a", args.a)?,
    };
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let rho: f64 = r.req("rho", args.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let hi: f64 = r.opt("lambda_hi", args.lambda_hi, 1.0)?;
    let lo: f64 = r.opt("lambda_lo", args.lambda_lo, 0.01)?;
    let step: f64 = r.opt("lambda_step", args.lambda_step, 0.002)?;
    let Some((format, out)) = prepare(&mut r, g, "continue", "continuation", FormatArg::Csv)?
    else {
        return Ok(());
    };
    let t0 = Instant::now();
    let path = lambda_path(hi, lo, step)?;
    let res = fixed_point_continuation(&path, a, fam.to_family(), alpha, rho, sigma_x2)?;
    for gap in &res.gaps {
        println!(
            "gap: lambda_upper={:.6} lambda_lower={:.6}",
            gap.lambda_upper, gap.lambda_lower
        );
    }
    println!("points={} gaps={}", res.points.len(), res.gaps.len());
    let body = match format {
        FormatArg::Csv => {
            let mut s = String::from("lambda,V,eps,class,gap_flag\n");
            for pt in &res.points {
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e},{:?},{}",
                    pt.lambda, pt.v, pt.eps, pt.class, pt.gap_flag
                );
            }
            s
        }
        FormatArg::Json => to_json_pretty(&res)?,
    };
    finish("continue", &r, None, &out, body.as_bytes(), t0)
}

// ---------------------------------------------------------------------------
// saddle / success
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SaddleArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Starting Q (all three init components or none).
    #[arg(long)]
    init_q: Option<f64>,
    #[arg(long)]
    init_m: Option<f64>,
    #[arg(long)]
    init_chi: Option<f64>,
}

pub fn saddle(args: &SaddleArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let (_, p) = resolve_penalty(&mut r, args.family, args.lambda, args.a)?;
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let rho: f64 = r.req("rho", args.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let defaults = SaddleOptions::default();
    let init_q = r.maybe("init_q", args.init_q)?;
    let init_m = r.maybe("init_m", args.init_m)?;
    let init_chi = r.maybe("init_chi", args.init_chi)?;
    let init = match (init_q, init_m, init_chi) {
        (None, None, None) => None,
        (Some(q), Some(m), Some(chi)) => Some((q, m, chi)),
        _ => {
            return Err(CliError::Config(
                "conflicting parameters: init-q, init-m, init-chi must be given together".into(),
            ))
        }
    };
    let opts = SaddleOptions {
        damping: r.opt("damping", args.damping, defaults.damping)?,
        tol: r.opt("tol", args.tol, defaults.tol)?,
        max_sweeps: r.opt("max_sweeps", args.max_sweeps, defaults.max_sweeps)?,
        init,
    };
    let Some((_, out)) = prepare(&mut r, g, "saddle", "saddle", FormatArg::Json)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let sol = solve_saddle(&p, alpha, rho, sigma_x2, &opts)?;
    let at_general = at_condition_general(&p, &sol).ok();
    println!(
        "status={:?} chi={:.6e} eps={:.6e} at_lhs={:.6}",
        sol.status, sol.chi, sol.eps, sol.at_lhs
    );
    let mut doc = serde_json::to_value(sol).map_err(|e| CliError::Config(e.to_string()))?;
    if let Value::Object(ref mut map) = doc {
        map.insert("at_general".into(), json!(at_general));
    }
    let body = to_json_pretty(&doc)?;
    finish("saddle", &r, None, &out, body.as_bytes(), t0)?;
    if sol.status != SaddleStatus::Converged {
        return Err(CliError::Numeric(format!(
            "saddle solver did not converge: status={:?} after {} sweeps",
            sol.status, sol.sweeps
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SuccessArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
}

pub fn success(args: &SuccessArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let (_, p) = resolve_penalty(&mut r, args.family, args.lambda, args.a)?;
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let rho: f64 = r.req("rho", args.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let Some((_, out)) = prepare(&mut r, g, "success", "success", FormatArg::Json)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let sol = solve_success(&p, alpha, rho, sigma_x2)?;
    println!(
        "stable={} stability_lhs={:.8} chit={:.8e}",
        sol.stable, sol.stability_lhs, sol.chit
    );
    let body = to_json_pretty(&sol)?;
    finish("success", &r, None, &out, body.as_bytes(), t0)
}

// ---------------------------------------------------------------------------
// phase / boundary / ncc
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PhaseArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    /// ρ grid "start:end:step" → α_c per ρ; conflicts with --alpha-grid.
    #[arg(long)]
    rho_grid: Option<String>,
    /// α grid "start:end:step" → ρ_c per α; conflicts with --rho-grid.
    #[arg(long)]
    alpha_grid: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
}

pub fn phase(args: &PhaseArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let (fam, p) = resolve_penalty(&mut r, args.family, args.lambda, args.a)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let tol: f64 = r.opt("tol", args.tol, 1e-5)?;
    let rho_grid: Option<String> = r.maybe("rho_grid", args.rho_grid.clone())?;
    let alpha_grid: Option<String> = r.maybe("alpha_grid", args.alpha_grid.clone())?;
    let (grid_text, by_rho) = match (&rho_grid, &alpha_grid) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "conflicting parameters: give either `rho-grid` or `alpha-grid`, not both".into(),
            ))
        }
        (Some(t), None) => (t.clone(), true),
        (None, Some(t)) => (t.clone(), false),
        (None, None) => {
            return Err(CliError::Config(
                "missing required parameter: one of `rho-grid` or `alpha-grid`".into(),
            ))
        }
    };
    let grid = parse_grid(&grid_text)?;
    let Some((format, out)) = prepare(&mut r, g, "phase", "phase", FormatArg::Csv)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    use rayon::prelude::*;
    let rows: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&x| {
            let res = if by_rho {
                alpha_c(&p, x, sigma_x2, tol)
            } else {
                rho_c(&p, x, sigma_x2, tol)
            };
            res.map(|sr| (x, sr.value))
        })
        .collect::<Result<_, _>>()?;
    let (xcol, ycol) = if by_rho {
        ("rho", "alpha_c")
    } else {
        ("alpha", "rho_c")
    };
    let fam_name = format!("{fam:?}").to_lowercase();
    let body = match format {
        FormatArg::Csv => {
            let mut s = format!("{xcol},{ycol},family,lambda,a\n");
            for &(x, y) in &rows {
                let _ = writeln!(
                    s,
                    "{x:.16e},{y:.16e},{fam_name},{:.16e},{:.16e}",
                    p.lambda(),
                    p.a()
                );
            }
            s
        }
        FormatArg::Json => to_json_pretty(
            &rows
                .iter()
                .map(|&(x, y)| json!({ xcol: x, ycol: y }))
                .collect::<Vec<_>>(),
        )?,
    };
    println!("points={}", rows.len());
    finish("phase", &r, None, &out, body.as_bytes(), t0)
}

#[derive(Args, Debug)]
pub struct BoundaryArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    /// λ grid "start:end:step" → a_c(λ) sweep.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Single λ → one a_c value.
    #[arg(long)]
    lambda: Option<f64>,
    /// Without `lambda`/`lambda-grid`: computes λ_c instead.
    #[arg(long)]
    rel_tol: Option<f64>,
}

pub fn boundary(args: &BoundaryArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let fam: FamilyArg = r.req("family", args.family)?;
    if fam == FamilyArg::L1 {
        return Err(CliError::Config(
            "parameter `family` = l1: nonconvexity boundaries need scad or mcp".into(),
        ));
    }
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let rho: f64 = r.req("rho", args.rho)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let rel_tol: f64 = r.opt("rel_tol", args.rel_tol, 1e-4)?;
    let lambda_grid: Option<String> = r.maybe("lambda_grid", args.lambda_grid.clone())?;
    let lambda: Option<f64> = r.maybe("lambda", args.lambda)?;
    if lambda_grid.is_some() && lambda.is_some() {
        return Err(CliError::Config(
            "conflicting parameters: give either `lambda-grid` or `lambda`, not both".into(),
        ));
    }
    let fam_name = format!("{fam:?}").to_lowercase();
    if let Some(text) = lambda_grid {
        let grid = parse_grid(&text)?;
        let Some((format, out)) = prepare(&mut r, g, "boundary", "boundary", FormatArg::Csv)?
        else {
            return Ok(());
        };
        let t0 = Instant::now();
        use rayon::prelude::*;
        let rows: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&l| {
                a_c_of_lambda(fam.to_family(), l, alpha, rho, sigma_x2, rel_tol)
                    .map(|sr| (l, sr.value))
            })
            .collect::<Result<_, _>>()?;
        let body = match format {
            FormatArg::Csv => {
                let mut s = String::from("lambda,a_c,family,alpha,rho\n");
                for &(l, ac) in &rows {
                    let _ = writeln!(s, "{l:.16e},{ac:.16e},{fam_name},{alpha:.16e},{rho:.16e}");
                }
                s
            }
            FormatArg::Json => to_json_pretty(
                &rows
                    .iter()
                    .map(|&(l, ac)| json!({"lambda": l, "a_c": ac}))
                    .collect::<Vec<_>>(),
            )?,
        };
        println!("points={}", rows.len());
        return finish("boundary", &r, None, &out, body.as_bytes(), t0);
    }
    let Some((_, out)) = prepare(&mut r, g, "boundary", "boundary", FormatArg::Json)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let doc = if let Some(l) = lambda {
        let sr = a_c_of_lambda(fam.to_family(), l, alpha, rho, sigma_x2, rel_tol)?;
        println!("a_c={:.8e}", sr.value);
        json!({"mode": "a_c", "lambda": l, "a_c": sr.value, "bisection_steps": sr.history.len()})
    } else {
        let sr = lambda_c(fam.to_family(), alpha, rho, sigma_x2, rel_tol)?;
        println!("lambda_c={:.8e}", sr.value);
        json!({"mode": "lambda_c", "lambda_c": sr.value, "bisection_steps": sr.history.len()})
    };
    let body = to_json_pretty(&doc)?;
    finish("boundary", &r, None, &out, body.as_bytes(), t0)
}

#[derive(Args, Debug)]
pub struct NccArgs {
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Maximize over a ∈ {2, 3, 5, 10} instead of a single fixed a.
    #[arg(long)]
    over_a: bool,
    #[arg(long)]
    rho_lo: Option<f64>,
    #[arg(long)]
    rho_hi: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    lambda_hi: Option<f64>,
    #[arg(long)]
    lambda_lo: Option<f64>,
    #[arg(long)]
    lambda_step: Option<f64>,
}

pub fn ncc(args: &NccArgs, g: &Globals) -> CliResult<()> {
    let mut r = resolver(g)?;
    let fam: FamilyArg = r.req("family", args.family)?;
    let alpha: f64 = r.req("alpha", args.alpha)?;
    let sigma_x2: f64 = r.opt("sigma_x2", args.sigma_x2, 1.0)?;
    let defaults = NccOptions::default();
    let opts = NccOptions {
        rho_lo: r.opt("rho_lo", args.rho_lo, defaults.rho_lo)?,
        rho_hi: r.opt("rho_hi", args.rho_hi, defaults.rho_hi)?,
        tol: r.opt("tol", args.tol, defaults.tol)?,
        lambda_hi: r.opt("lambda_hi", args.lambda_hi, defaults.lambda_hi)?,
        lambda_lo: r.opt("lambda_lo", args.lambda_lo, defaults.lambda_lo)?,
        lambda_step: r.opt("lambda_step", args.lambda_step, defaults.lambda_step)?,
    };
    let over_a: bool = r.opt(
        "over_a",
        if args.over_a { Some(true) } else { None },
        false,
    )?;
    let a: Option<f64> = if over_a {
        None
    } else {
        Some(match fam {
            FamilyArg::L1 => r.opt("a", args.a, 1e8)?,
            _ => r.req("a", args.a)?,
        })
    };
    let Some((_, out)) = prepare(&mut r, g, "ncc", "ncc", FormatArg::Json)? else {
        return Ok(());
    };
    let t0 = Instant::now();
    let doc = if let Some(a) = a {
        let sr = ncc_limit(fam.to_family(), a, alpha, sigma_x2, &opts)?;
        println!("ncc_limit={:.4}", sr.value);
        json!({"a": a, "rho_limit": sr.value, "bisection_steps": sr.history.len()})
    } else {
        let (best_a, best_rho, per_a) = ncc_limit_over_a(fam.to_family(), alpha, sigma_x2, &opts)?;
        println!("ncc_limit={best_rho:.4} at a={best_a}");
        json!({
            "best_a": best_a,
            "rho_limit": best_rho,
            "per_a": per_a.iter().map(|&(a, rho)| json!({"a": a, "rho_limit": rho})).collect::<Vec<_>>(),
        })
    };
    let body = to_json_pretty(&doc)?;
    finish("ncc", &r, None, &out, body.as_bytes(), t0)
}
