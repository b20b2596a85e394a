//! Scratch probe: dump per-seed AMP (alpha*Vhat, mse) curves and the SE
//! reference curve for the schedule protocol, for offline averaging studies.

use std::fs::File;
use std::io::Write;

use ncvxcs_core::amp::{amp_run, AmpOptions, ControlSchedule};
use ncvxcs_core::instance::{gen_instance, EnsembleParams};
use ncvxcs_core::penalty::{PenaltyFamily, PenaltySpec};
use ncvxcs_core::se::{se_step, SePoint};

fn main() {
    let alpha = 0.5;
    let rho = 0.28;
    let n = 20_000;
    let sched = ControlSchedule::parse("1.0:-0.1:0.1@20", 3.0).unwrap();
    let t_max = 300usize;

    // SE reference from the matched start (rho*sigma_x2, rho*sigma_x2)
    let mut se = Vec::with_capacity(t_max + 1);
    let mut pt = SePoint::new(rho, rho);
    se.push(pt);
    for t in 0..t_max {
        let (l, a) = sched.params_at(t);
        let p = PenaltySpec::scad(l, a).unwrap();
        pt = se_step(pt, &p, alpha, rho, 1.0).unwrap();
        se.push(pt);
    }
    let mut f = File::create("/tmp/c9_se.csv").unwrap();
    writeln!(f, "t,V,eps").unwrap();
    for (t, p) in se.iter().enumerate() {
        writeln!(f, "{t},{:.16e},{:.16e}", p.v, p.eps).unwrap();
    }

    let opts = AmpOptions {
        max_iters: t_max,
        ..Default::default()
    };
    for seed in 0..10u64 {
        let params = EnsembleParams::new(n, alpha, rho, 1.0, seed).unwrap();
        let inst = gen_instance(&params).unwrap();
        let rep = amp_run(&inst, PenaltyFamily::Scad, &sched, &opts).unwrap();
        let mut f = File::create(format!("/tmp/c9_seed{seed}.csv")).unwrap();
        writeln!(f, "t,avhat,mse").unwrap();
        let m = (alpha * n as f64).round();
        for row in &rep.trajectory {
            let avhat = row.v_hat * m / n as f64;
            writeln!(f, "{},{:.16e},{:.16e}", row.t, avhat, row.mse).unwrap();
        }
        println!(
            "seed={seed} status={:?} iters={} mse={:.3e}",
            rep.status, rep.iters, rep.final_mse
        );
    }
}
