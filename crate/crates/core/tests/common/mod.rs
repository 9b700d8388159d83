#![allow(dead_code)]

use ddpce::pce::sub_rng;
use ddpce::systems::{simulate_closed_loop, simulate_descriptor, DescriptorSystem, ExplicitSystem, QuasiWeierstrass, RealTrajectory};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn sig(v: &[f64]) -> Vec<DVector<f64>> {
    v.iter().map(|&x| DVector::from_element(1, x)).collect()
}

pub fn scalar_sys() -> ExplicitSystem {
    ExplicitSystem::scalar(2.0, 1.0, 1.0)
}

pub fn descriptor_qw() -> QuasiWeierstrass {
    QuasiWeierstrass::from_system(&DescriptorSystem::fourth_order_example()).unwrap()
}

/// Alternating N(0, 0.1^2) / U(-0.2, 0.2) draws.
pub fn alternating_noise(t: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = sub_rng(seed, 1);
    (0..t)
        .map(|k| {
            let v = if k % 2 == 0 { 0.1 * rng.sample::<f64, _>(StandardNormal) } else { rng.random_range(-0.2..0.2) };
            DVector::from_element(1, v)
        })
        .collect()
}

pub fn uniform_signal(t: usize, d: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = sub_rng(seed, 0);
    (0..t).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect()
}

/// Scalar plant recorded under `u = e - 1.5 x`.
pub fn scalar_data(t: usize, seed: u64) -> RealTrajectory {
    let exc = uniform_signal(t, 1, seed);
    let w = alternating_noise(t, seed);
    simulate_closed_loop(&scalar_sys(), &DVector::zeros(1), &DMatrix::from_element(1, 1, 1.5), &exc, &w).unwrap()
}

/// Descriptor plant with uniform inputs and N(0, 0.1^2) noise; `t` output samples.
pub fn descriptor_data(t: usize, seed: u64) -> RealTrajectory {
    let qw = descriptor_qw();
    let m = t + qw.delta - 1;
    let u = uniform_signal(m, 1, seed);
    let mut rng = sub_rng(seed, 1);
    let w: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_element(1, 0.1 * rng.sample::<f64, _>(StandardNormal))).collect();
    let mut d = simulate_descriptor(&qw, &DVector::zeros(qw.n_j), &u, &w).unwrap();
    d.u.truncate(t);
    d.w.truncate(t);
    d
}

/// Sample mean and (n - 1)-normalised standard deviation.
pub fn sample_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// `|mean - m| <= 3 SE` and `|std - s| <= 3 SE(std)` for the samples `xs`.
pub fn within_3se(xs: &[f64], mean: f64, std: f64) -> bool {
    let n = xs.len() as f64;
    let (m, s) = sample_moments(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let se_m = s / n.sqrt();
    let se_s = if s > 0.0 { ((m4 - s.powi(4)).max(0.0) / (4.0 * s * s * n)).sqrt() } else { 0.0 };
    let floor = 1e-9 * (1.0 + mean.abs());
    (m - mean).abs() <= 3.0 * se_m + floor && (s - std).abs() <= 3.0 * se_s + floor
}
