use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{sub_rng, JointBasis};
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::systems::ExplicitSystem;

/// Mean and (cross-)covariance from coefficients: `mean = z^0`,
/// `Cov(Z, Z2) = sum_{i>=1} z^i (z2^i)^T E[phi_i^2]`.
pub fn moments_from_pce(
    basis: &JointBasis,
    z: &DMatrix<f64>,
    z2: Option<&DMatrix<f64>>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let z2 = z2.unwrap_or(z);
    for m in [z, z2] {
        if m.nrows() != basis.p() {
            return Err(Error::BasisMismatch(format!("{} coefficient rows for p = {}", m.nrows(), basis.p())));
        }
    }
    let mean = z.row(0).transpose();
    let mut cov = DMatrix::zeros(z.ncols(), z2.ncols());
    for (i, e) in basis.elements.iter().enumerate().skip(1) {
        cov += z.row(i).transpose() * z2.row(i) * e.sq_norm();
    }
    Ok((mean, cov))
}

/// Second-order description of the input at one step: `c_xv` is the cross
/// covariance with the state at the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMoments {
    pub mean_v: DVector<f64>,
    pub c_vv: DMatrix<f64>,
    pub c_xv: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mean_x: DVector<f64>,
    pub mean_v: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub c_xx: DMatrix<f64>,
    pub c_xv: DMatrix<f64>,
    pub c_vv: DMatrix<f64>,
    pub c_yy: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    pub steps: Vec<MomentState>,
    pub final_mean_x: DVector<f64>,
    pub final_c_xx: DMatrix<f64>,
    pub warnings: Vec<String>,
}

fn joint_cov(c_xx: &DMatrix<f64>, c_xv: &DMatrix<f64>, c_vv: &DMatrix<f64>) -> DMatrix<f64> {
    let top = linalg::hstack(&[c_xx, c_xv]);
    let bottom = linalg::hstack(&[&c_xv.transpose(), c_vv]);
    linalg::vstack(&[&top, &bottom])
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Mean and covariance recursion
/// `E[x+] = A E[x] + B~ E[v]`, `C_xx+ = [A B~] M [A B~]^T`, with `M` the joint
/// covariance of `(x, v)`. An indefinite `c_vv` only produces a warning.
pub fn moment_propagate(
    sys: &ExplicitSystem,
    mean_x0: &DVector<f64>,
    c_xx0: &DMatrix<f64>,
    inputs: &[InputMoments],
) -> Result<MomentTrajectory> {
    let (nx, nv) = (sys.nx(), sys.nv());
    if mean_x0.len() != nx || c_xx0.shape() != (nx, nx) {
        return Err(dim_err("initial moments", nx, mean_x0.len()));
    }
    let ab = linalg::hstack(&[&sys.a, &sys.b_tilde()]);
    let cd = linalg::hstack(&[&sys.c, &sys.d_tilde()]);
    let mut mean_x = mean_x0.clone();
    let mut c_xx = c_xx0.clone();
    let mut steps = Vec::with_capacity(inputs.len());
    let mut warnings = Vec::new();
    for (k, inp) in inputs.iter().enumerate() {
        if inp.mean_v.len() != nv || inp.c_vv.shape() != (nv, nv) || inp.c_xv.shape() != (nx, nv) {
            return Err(dim_err("input moments", format!("n_v = {nv}"), format!("step {k}")));
        }
        if min_eig(&inp.c_vv) < -1e-12 {
            warnings.push(format!("step {k}: input covariance is not positive semidefinite"));
        }
        let m = joint_cov(&c_xx, &inp.c_xv, &inp.c_vv);
        let mut xv = DVector::zeros(nx + nv);
        xv.rows_mut(0, nx).copy_from(&mean_x);
        xv.rows_mut(nx, nv).copy_from(&inp.mean_v);
        let state = MomentState {
            mean_x: mean_x.clone(),
            mean_v: inp.mean_v.clone(),
            mean_y: &cd * &xv,
            c_xx: c_xx.clone(),
            c_xv: inp.c_xv.clone(),
            c_vv: inp.c_vv.clone(),
            c_yy: &cd * &m * cd.transpose(),
        };
        mean_x = &ab * &xv;
        c_xx = &ab * &m * ab.transpose();
        steps.push(state);
    }
    Ok(MomentTrajectory { steps, final_mean_x: mean_x, final_c_xx: c_xx, warnings })
}

/// Outcome of the moment non-equivalence demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub samples: usize,
    pub steps: usize,
    /// Empirical variance of the one-step residual, per step.
    pub var_delta: Vec<f64>,
    /// Largest violation of the moment recursion by the process's moments.
    pub moment_residual: f64,
    /// Paths whose largest one-step residual is below 0.01.
    pub paths_satisfying: usize,
    pub smallest_path_residual: f64,
}

/// An i.i.d. standard-normal process `(X_k, V_k)` for the scalar system
/// `sqrt(2) x+ = x + v`, `y = x`. Its mean and variance obey the moment
/// recursion (`2 * 1 = 1 + 1`) while no realization obeys the dynamics:
/// `Delta_k = X_{k+1} - (X_k + V_k)/sqrt(2)` has variance 2.
pub fn moment_counterexample_demo(seed: u64, samples: usize, steps: usize) -> CounterexampleReport {
    let (var_x, var_v, cov_xv, mean_x, mean_v) = (1.0f64, 1.0f64, 0.0f64, 0.0f64, 0.0f64);
    // Recursion written in the scaled form s^2 Var[X+] = Var[X] + 2 Cov + Var[V],
    // s^2 = 2, which is exact in floating point.
    let var_res = (2.0 * var_x - (var_x + 2.0 * cov_xv + var_v)).abs();
    let mean_res = (2f64.sqrt() * mean_x - (mean_x + mean_v)).abs();
    let moment_residual = var_res.max(mean_res);

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut sums = vec![(0.0f64, 0.0f64); steps];
    let mut paths_satisfying = 0;
    let mut smallest = f64::INFINITY;
    for n in 0..samples {
        let mut rng = sub_rng(seed, n as u64);
        let xs: Vec<f64> = (0..=steps).map(|_| rng.sample(StandardNormal)).collect();
        let vs: Vec<f64> = (0..steps).map(|_| rng.sample(StandardNormal)).collect();
        let mut worst = 0.0f64;
        for k in 0..steps {
            let d = xs[k + 1] - s * (xs[k] + vs[k]);
            sums[k].0 += d;
            sums[k].1 += d * d;
            worst = worst.max(d.abs());
        }
        if worst < 0.01 {
            paths_satisfying += 1;
        }
        smallest = smallest.min(worst);
    }
    let nf = samples as f64;
    let var_delta = sums
        .iter()
        .map(|&(s1, s2)| (s2 - s1 * s1 / nf) / (nf - 1.0))
        .collect();
    CounterexampleReport {
        samples,
        steps,
        var_delta,
        moment_residual,
        paths_satisfying,
        smallest_path_residual: smallest,
    }
}
