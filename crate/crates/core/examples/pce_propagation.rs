//! Exact moment propagation through a stable scalar system with an uncertain
//! initial state and alternating Gaussian / uniform disturbances, checked
//! against sampled realizations.

use ddpce::experiment::mean_std;
use ddpce::pce::{galerkin_propagate, moments_from_pce, sample_realizations, CoeffTrajectory, Distribution, JointBasis};
use ddpce::systems::ExplicitSystem;
use nalgebra::DVector;

fn main() -> ddpce::Result<()> {
    let sys = ExplicitSystem::scalar(0.8, 1.0, 1.0);
    let steps = 12;
    let noise: Vec<Vec<Distribution>> = (0..steps)
        .map(|k| {
            vec![if k % 2 == 0 {
                Distribution::Gaussian { mean: 0.0, std: 0.1 }
            } else {
                Distribution::Uniform { lo: -0.2, hi: 0.2 }
            }]
        })
        .collect();
    let initial = [Distribution::Uniform { lo: 0.5, hi: 1.5 }];
    let basis = JointBasis::build(&initial, &noise, None)?;
    let x0 = basis.initial_coeffs(&initial)?;
    let w = basis.noise_coeffs(&noise)?;
    let u = CoeffTrajectory::deterministic(basis.p(), &vec![DVector::from_element(1, 0.1); steps]);
    let traj = galerkin_propagate(&sys, &basis, &x0, &u, &w)?;

    let samples = sample_realizations(&traj, 5, 20_000);
    println!("basis size {}", basis.p());
    println!("{:>3} {:>10} {:>10} {:>10} {:>10}", "k", "pce mean", "mc mean", "pce std", "mc std");
    for k in 0..steps {
        let (mean, cov) = moments_from_pce(&basis, &traj.y.steps[k], None)?;
        let xs: Vec<f64> = samples.iter().map(|s| s.y[k][0]).collect();
        let (m, s) = mean_std(&xs);
        println!("{k:>3} {:>10.5} {m:>10.5} {:>10.5} {s:>10.5}", mean[0], cov[(0, 0)].sqrt());
    }
    Ok(())
}
