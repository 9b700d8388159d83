use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PceTrajectory;
use crate::systems::RealTrajectory;

/// Generator for sample `index` under master `seed`. Independent streams let
/// sample ranges be split across workers without changing any draw.
pub fn sub_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Realizations obtained by evaluating the basis at independent joint draws.
pub fn sample_realizations(traj: &PceTrajectory, seed: u64, n_samples: usize) -> Vec<RealTrajectory> {
    (0..n_samples)
        .map(|n| {
            let phi = traj.basis.sample(&mut sub_rng(seed, n as u64));
            RealTrajectory {
                x: traj.x.as_ref().map(|x| x.realize(&phi)),
                u: traj.u.realize(&phi),
                w: traj.w.realize(&phi),
                y: traj.y.realize(&phi),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::{CoeffTrajectory, Distribution, JointBasis};
    use nalgebra::DVector;

    #[test]
    fn constant_only_trajectory_samples_its_mean() {
        let basis = JointBasis::deterministic();
        let sig: Vec<DVector<f64>> = (0..3).map(|k| DVector::from_element(1, k as f64)).collect();
        let c = CoeffTrajectory::deterministic(1, &sig);
        let t = PceTrajectory { basis, x: None, u: c.clone(), w: c.clone(), y: c };
        for s in sample_realizations(&t, 1, 5) {
            assert_eq!(s.y, sig);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let noise = vec![vec![Distribution::Uniform { lo: -1.0, hi: 1.0 }]; 3];
        let basis = JointBasis::build(&[], &noise, None).unwrap();
        let w = basis.noise_coeffs(&noise).unwrap();
        let t = PceTrajectory { basis, x: None, u: w.clone(), w: w.clone(), y: w };
        assert_eq!(sample_realizations(&t, 9, 4), sample_realizations(&t, 9, 4));
        assert_ne!(sample_realizations(&t, 9, 4), sample_realizations(&t, 10, 4));
    }
}
