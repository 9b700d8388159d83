mod common;

use common::{descriptor_qw, sample_moments, scalar_sys, sig, within_3se};
use ddpce::pce::{
    basis_sq_norm, galerkin_propagate, galerkin_propagate_descriptor, moment_counterexample_demo, moment_propagate,
    moments_from_pce, pce_of_distribution, sample_realizations, sub_rng, CoeffTrajectory, Distribution, Family,
    InputMoments, JointBasis, PruneRule,
};
use ddpce::systems::{simulate_descriptor, simulate_explicit, ExplicitSystem};
use nalgebra::{DMatrix, DVector};

fn gauss(std: f64) -> Distribution {
    Distribution::Gaussian { mean: 0.0, std }
}

fn alternating(steps: usize) -> Vec<Vec<Distribution>> {
    (0..steps).map(|k| vec![if k % 2 == 0 { gauss(0.1) } else { Distribution::Uniform { lo: -0.2, hi: 0.2 } }]).collect()
}

/// Three-point Gauss rules: probabilists' Hermite nodes `0, +-sqrt(3)` with
/// weights `2/3, 1/6`; Legendre nodes `0, +-sqrt(3/5)` with weights `8/9, 5/9`
/// (halved for the uniform density on [-1, 1]).
fn quadrature(f: impl Fn(f64) -> f64, family: Family) -> f64 {
    match family {
        Family::Hermite => {
            let r = 3f64.sqrt();
            2.0 / 3.0 * f(0.0) + (f(r) + f(-r)) / 6.0
        }
        Family::Legendre => {
            let r = (0.6f64).sqrt();
            0.5 * (8.0 / 9.0 * f(0.0) + 5.0 / 9.0 * (f(r) + f(-r)))
        }
        Family::Constant => f(0.0),
    }
}

#[test]
fn squared_norms_against_quadrature() {
    assert_eq!(basis_sq_norm(Family::Constant, 0), 1.0);
    let h2 = quadrature(|x| (x * x - 1.0).powi(2), Family::Hermite);
    assert!((basis_sq_norm(Family::Hermite, 2) - h2).abs() < 1e-12 && (h2 - 2.0).abs() < 1e-12);
    let l1 = quadrature(|x| x * x, Family::Legendre);
    assert!((basis_sq_norm(Family::Legendre, 1) - l1).abs() < 1e-12 && (l1 - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn expansions_of_the_example_laws() {
    let (c, k) = pce_of_distribution(&gauss(0.1)).unwrap();
    assert_eq!((c, k), (vec![0.0, 0.1], vec![(Family::Constant, 0), (Family::Hermite, 1)]));
    let (c, k) = pce_of_distribution(&Distribution::Uniform { lo: -0.2, hi: 0.2 }).unwrap();
    assert!((c[0]).abs() < 1e-15 && (c[1] - 0.2).abs() < 1e-15);
    assert_eq!(k[1], (Family::Legendre, 1));
    let (c, _) = pce_of_distribution(&Distribution::Dirac { value: 5.0 }).unwrap();
    assert_eq!(c, vec![5.0]);
}

#[test]
fn joint_basis_sizes_of_the_scalar_example() {
    let noise = alternating(21);
    assert_eq!(JointBasis::build(&[], &noise, None).unwrap().p(), 22);
    let pruned = JointBasis::build(&[], &noise, Some(PruneRule { window_end: 20, lag: 1 })).unwrap();
    assert_eq!(pruned.p(), 21);
    let det = vec![vec![Distribution::Dirac { value: 0.0 }]; 21];
    assert_eq!(JointBasis::build(&[], &det, None).unwrap().p(), 1);
    let with_init = JointBasis::build(&[Distribution::Uniform { lo: -2.0, hi: 2.0 }], &det, None).unwrap();
    assert_eq!((with_init.p(), with_init.p_ini), (2, 2));
}

#[test]
fn moments_of_single_elements() {
    let b = JointBasis::build(&[], &[vec![gauss(0.1)]], None).unwrap();
    let (m, v) = moments_from_pce(&b, &DMatrix::from_column_slice(2, 1, &[0.0, 0.1]), None).unwrap();
    assert!(m[0] == 0.0 && (v[(0, 0)] - 0.01).abs() < 1e-15);
    let b = JointBasis::build(&[], &[vec![Distribution::Uniform { lo: -1.0, hi: 1.0 }]], None).unwrap();
    let (_, v) = moments_from_pce(&b, &DMatrix::from_column_slice(2, 1, &[0.0, 0.2]), None).unwrap();
    assert!((v[(0, 0)] - 0.04 / 3.0).abs() < 1e-15);
    let (m, v) = moments_from_pce(&JointBasis::deterministic(), &DMatrix::from_element(1, 1, 3.0), None).unwrap();
    assert!(m[0] == 3.0 && v[(0, 0)] == 0.0);
}

#[test]
fn one_gaussian_step_and_mean_channel() {
    let sys = scalar_sys();
    let noise = vec![vec![gauss(0.1)], vec![gauss(0.1)]];
    let b = JointBasis::build(&[], &noise, None).unwrap();
    let w = b.noise_coeffs(&noise).unwrap();
    let u = CoeffTrajectory::deterministic(b.p(), &sig(&[0.3, -0.1]));
    let mut x0 = DMatrix::zeros(b.p(), 1);
    x0[(0, 0)] = 1.0;
    let t = galerkin_propagate(&sys, &b, &x0, &u, &w).unwrap();
    let x = t.x.unwrap();
    let (_, v) = moments_from_pce(&b, &x.steps[1], None).unwrap();
    assert!((v[(0, 0)] - 0.01).abs() < 1e-15);
    let mean = simulate_explicit(&sys, &DVector::from_element(1, 1.0), &sig(&[0.3, -0.1]), &sig(&[0.0, 0.0])).unwrap();
    for k in 0..2 {
        assert!((x.steps[k][(0, 0)] - mean.x.as_ref().unwrap()[k][0]).abs() < 1e-14);
    }
}

#[test]
fn explicit_propagation_matches_direct_monte_carlo() {
    // The oracle draws x0 and w from their laws directly, never through the basis.
    let sys = ExplicitSystem::scalar(0.9, 1.0, 1.0);
    let steps = 10;
    let noise = alternating(steps);
    let init = [Distribution::Uniform { lo: -2.0, hi: 2.0 }];
    let b = JointBasis::build(&init, &noise, None).unwrap();
    let u = CoeffTrajectory::deterministic(b.p(), &sig(&vec![0.2; steps]));
    let t = galerkin_propagate(&sys, &b, &b.initial_coeffs(&init).unwrap(), &u, &b.noise_coeffs(&noise).unwrap()).unwrap();

    let n = 10_000;
    let mut ys = vec![Vec::with_capacity(n); steps];
    for s in 0..n {
        let mut rng = sub_rng(77, s as u64);
        let x0 = DVector::from_element(1, init[0].sample(&mut rng));
        let w: Vec<DVector<f64>> = noise.iter().map(|d| DVector::from_element(1, d[0].sample(&mut rng))).collect();
        let sim = simulate_explicit(&sys, &x0, &vec![DVector::from_element(1, 0.2); steps], &w).unwrap();
        for k in 0..steps {
            ys[k].push(sim.y[k][0]);
        }
    }
    for k in 0..steps {
        let (m, c) = moments_from_pce(&b, &t.y.steps[k], None).unwrap();
        assert!(within_3se(&ys[k], m[0], c[(0, 0)].sqrt()), "k = {k}");
    }
}

#[test]
fn descriptor_propagation_matches_direct_monte_carlo() {
    let qw = descriptor_qw();
    let span = 12;
    let noise = vec![vec![gauss(0.1)]; span];
    let b = JointBasis::build(&[], &noise, None).unwrap();
    let u_det: Vec<DVector<f64>> = (0..span).map(|k| DVector::from_element(1, (k as f64 * 0.7).sin())).collect();
    let u = CoeffTrajectory::deterministic(b.p(), &u_det);
    let z0 = DMatrix::from_fn(b.p(), 2, |i, j| if i == 0 { [0.5, -0.5][j] } else { 0.0 });
    let t = galerkin_propagate_descriptor(&qw, &b, &z0, &u, &b.noise_coeffs(&noise).unwrap()).unwrap();
    assert_eq!(t.horizon(), span - 1);

    let det = simulate_descriptor(&qw, &DVector::from_vec(vec![0.5, -0.5]), &u_det, &vec![DVector::zeros(1); span]).unwrap();
    for k in 0..t.horizon() {
        assert!((t.y.steps[k].row(0).transpose() - &det.y[k]).amax() < 1e-12);
    }

    let n = 10_000;
    let mut ys = vec![vec![Vec::with_capacity(n); 2]; t.horizon()];
    for s in 0..n {
        let mut rng = sub_rng(6, s as u64);
        let w: Vec<DVector<f64>> = (0..span).map(|_| DVector::from_element(1, gauss(0.1).sample(&mut rng))).collect();
        let sim = simulate_descriptor(&qw, &DVector::from_vec(vec![0.5, -0.5]), &u_det, &w).unwrap();
        for k in 0..t.horizon() {
            for c in 0..2 {
                ys[k][c].push(sim.y[k][c]);
            }
        }
    }
    for k in 0..t.horizon() {
        let (m, cov) = moments_from_pce(&b, &t.y.steps[k], None).unwrap();
        for c in 0..2 {
            assert!(within_3se(&ys[k][c], m[c], cov[(c, c)].sqrt()), "k = {k}, channel {c}");
        }
    }
}

#[test]
fn sampled_realizations() {
    let sys = scalar_sys();
    let steps = 6;
    let noise = alternating(steps);
    let b = JointBasis::build(&[], &noise, None).unwrap();
    let mut x0 = DMatrix::zeros(b.p(), 1);
    x0[(0, 0)] = 0.5;
    let u = CoeffTrajectory::deterministic(b.p(), &sig(&vec![-0.4; steps]));
    let t = galerkin_propagate(&sys, &b, &x0, &u, &b.noise_coeffs(&noise).unwrap()).unwrap();

    let n = 100_000;
    let paths = sample_realizations(&t, 3, n);
    for k in 0..steps {
        let xs: Vec<f64> = paths.iter().map(|p| p.y[k][0]).collect();
        let (m, s) = sample_moments(&xs);
        assert!((m - t.y.steps[k][(0, 0)]).abs() <= 4.0 * s / (n as f64).sqrt() + 1e-12, "k = {k}");
    }
    for p in paths.iter().take(200) {
        let x = p.x.as_ref().unwrap();
        for k in 0..steps {
            let r = x[k + 1][0] - (2.0 * x[k][0] + p.u[k][0] + p.w[k][0]);
            assert!(r.abs() < 1e-10);
        }
    }

    let det = JointBasis::deterministic();
    let c = CoeffTrajectory::deterministic(1, &sig(&[1.0, 2.0]));
    let t = ddpce::pce::PceTrajectory { basis: det, x: None, u: c.clone(), w: c.clone(), y: c };
    assert!(sample_realizations(&t, 1, 5).iter().all(|p| p.y == sig(&[1.0, 2.0])));
}

#[test]
fn moment_recursion_by_hand_and_against_coefficients() {
    let sys = scalar_sys();
    let zero_in = |var_w: f64| InputMoments {
        mean_v: DVector::zeros(2),
        c_vv: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, var_w]),
        c_xv: DMatrix::zeros(1, 2),
    };
    let r = moment_propagate(&sys, &DVector::zeros(1), &DMatrix::zeros(1, 1), &[zero_in(0.01), zero_in(0.04 / 3.0)]).unwrap();
    assert!((r.final_c_xx[(0, 0)] - (4.0 * 0.01 + 0.04 / 3.0)).abs() < 1e-15);

    // Input correlated with the state: u_k = -0.5 x_k-ish through coefficients.
    let steps = 5;
    let noise = alternating(steps);
    let init = [gauss(1.0)];
    let b = JointBasis::build(&init, &noise, None).unwrap();
    let w = b.noise_coeffs(&noise).unwrap();
    let mut u = CoeffTrajectory::zeros(b.p(), 1, steps);
    for k in 0..steps {
        for i in 0..b.p() {
            u.steps[k][(i, 0)] = 0.1 * (i as f64 + 1.0) / (k as f64 + 1.0);
        }
    }
    let x0 = b.initial_coeffs(&init).unwrap();
    let t = galerkin_propagate(&sys, &b, &x0, &u, &w).unwrap();
    let x = t.x.as_ref().unwrap();
    let inputs: Vec<InputMoments> = (0..steps)
        .map(|k| {
            let v = DMatrix::from_fn(b.p(), 2, |i, j| if j == 0 { u.steps[k][(i, 0)] } else { w.steps[k][(i, 0)] });
            let (mean_v, c_vv) = moments_from_pce(&b, &v, None).unwrap();
            let (_, c_xv) = moments_from_pce(&b, &x.steps[k], Some(&v)).unwrap();
            InputMoments { mean_v, c_vv, c_xv }
        })
        .collect();
    let (m0, c0) = moments_from_pce(&b, &x0, None).unwrap();
    let r = moment_propagate(&sys, &m0, &c0, &inputs).unwrap();
    for k in 0..steps {
        let (m, c) = moments_from_pce(&b, &x.steps[k], None).unwrap();
        assert!((r.steps[k].mean_x[0] - m[0]).abs() < 1e-10);
        assert!((r.steps[k].c_xx[(0, 0)] - c[(0, 0)]).abs() < 1e-10 * (1.0 + c[(0, 0)]));
    }
}

#[test]
fn moments_do_not_determine_paths() {
    let r = moment_counterexample_demo(2, 10_000, 5);
    assert_eq!(r.moment_residual, 0.0);
    assert!(r.var_delta.iter().all(|v| (1.9..=2.1).contains(v)), "{:?}", r.var_delta);
    assert_eq!(r.paths_satisfying, 0);
}
