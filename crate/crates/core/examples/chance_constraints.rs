//! Distributionally robust chance constraints: the mean +- sigma(eps) * std
//! tube of the scalar state is kept inside a box over the last decision steps.

use ddpce::experiment::{run_experiment, ExperimentConfig};
use ddpce::ocp::{sigma_eps, ChanceConstraint, Signal};

fn main() -> ddpce::Result<()> {
    let eps = 0.1;
    let bound = 0.9;
    println!("sigma({eps}) = {:.4}", sigma_eps(eps)?);

    let base = ExperimentConfig::scalar();
    let mut cfg = base.clone();
    cfg.samples.monte_carlo = 2000;
    cfg.samples.histogram = 1000;
    for step in 16..21 {
        cfg.ocp.chance.push(ChanceConstraint { signal: Signal::Y, channel: 0, step, lo: -bound, hi: bound, eps, sigma: None });
    }
    let free = run_experiment(&ExperimentConfig { samples: cfg.samples, ..base })?;
    let tight = run_experiment(&cfg)?;
    println!("unconstrained objective {:.4}, constrained {:.4} ({:?})", free.diag.objective, tight.diag.objective, tight.diag.status);
    let s = sigma_eps(eps)?;
    for k in 16..21 {
        let (m0, s0) = free.moment("y", k, 0).unwrap();
        let (m1, s1) = tight.moment("y", k, 0).unwrap();
        println!("k = {k}: free |mean| + sigma std = {:.4}, constrained = {:.4}", m0.abs() + s * s0, m1.abs() + s * s1);
    }
    Ok(())
}
