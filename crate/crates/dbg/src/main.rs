use statvac::profiles::{self, TargetSign};
use statvac::profiles::yamabe_reduce;
use statvac::splitting::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    // round cylinder at N = 256
    let m = ClosedWarpedMetric::round_cylinder(1.0, 1.0);
    let rep = split(&m, 256).unwrap();
    println!("round: delta {:.2e} dev, u dev {:.2e}", (rep.delta - 1.0/3.0).abs(),
        rep.u.iter().map(|v| (v - 2.0/3.0).abs()).fold(0.0f64, f64::max));
    for (k, v) in &rep.residuals { println!("  round {k}: {v:.2e}"); }
    println!("round done in {:?}", t0.elapsed());

    let t1 = Instant::now();
    let prof = profiles::perturbed_cylinder(0.05, 1.0);
    let sol = yamabe_reduce(&prof, TargetSign::Positive, 256).unwrap();
    let conf = profiles::conformal_profile(&prof, &sol.psi).unwrap();
    let m2 = ClosedWarpedMetric::new(conf).unwrap();
    let rep2 = split(&m2, 256).unwrap();
    for (k, v) in &rep2.residuals { println!("  pert {k}: {v:.2e}"); }
    println!("perturbed done in {:?}", t1.elapsed());
}
