use nalgebra::DMatrix;

use super::{CoeffTrajectory, JointBasis, PceTrajectory};
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::systems::{simulate_descriptor, simulate_explicit, ExplicitSystem, Model, QuasiWeierstrass};

/// Smallest delay after which a disturbance at step `j` can show up in an
/// output or in a causal input: `j + lag` is the first affected sample.
pub fn earliest_influence(model: &Model) -> usize {
    match model {
        Model::Explicit(s) => {
            let out = if linalg::is_zero(&s.h, 0.0) { 1 } else { 0 };
            out.min(1)
        }
        Model::Descriptor(q) => {
            let out = if linalg::is_zero(&q.h, 0.0) && linalg::is_zero(&q.f_n, crate::systems::CHAIN_ATOL) {
                1
            } else {
                0
            };
            out.min(q.delta)
        }
    }
}

fn check(basis: &JointBasis, init: &DMatrix<f64>, u: &CoeffTrajectory, w: &CoeffTrajectory) -> Result<()> {
    if init.nrows() != basis.p() {
        return Err(Error::BasisMismatch(format!("initial value has {} rows for p = {}", init.nrows(), basis.p())));
    }
    u.check_basis(basis, "u")?;
    w.check_basis(basis, "w")?;
    if u.len() != w.len() {
        return Err(dim_err("coefficient horizons", u.len(), w.len()));
    }
    Ok(())
}

/// Per-index deterministic simulation: every coefficient index follows the
/// system recursion on its own.
pub fn galerkin_propagate(
    sys: &ExplicitSystem,
    basis: &JointBasis,
    x0: &DMatrix<f64>,
    u: &CoeffTrajectory,
    w: &CoeffTrajectory,
) -> Result<PceTrajectory> {
    check(basis, x0, u, w)?;
    let mut xs = Vec::with_capacity(basis.p());
    let mut ys = Vec::with_capacity(basis.p());
    for i in 0..basis.p() {
        let t = simulate_explicit(sys, &x0.row(i).transpose(), &u.index(i), &w_index(w, i, sys.nw()))?;
        xs.push(t.x.unwrap());
        ys.push(t.y);
    }
    Ok(PceTrajectory {
        basis: basis.clone(),
        x: Some(CoeffTrajectory::from_indices(&xs)),
        u: u.clone(),
        w: w.clone(),
        y: CoeffTrajectory::from_indices(&ys),
    })
}

fn w_index(w: &CoeffTrajectory, i: usize, nw: usize) -> Vec<nalgebra::DVector<f64>> {
    if w.dim() == 0 && nw == 0 {
        vec![nalgebra::DVector::zeros(0); w.len()]
    } else {
        w.index(i)
    }
}

/// Descriptor counterpart; `u`, `w` must extend `delta - 1` steps past the
/// returned horizon.
pub fn galerkin_propagate_descriptor(
    qw: &QuasiWeierstrass,
    basis: &JointBasis,
    z0j: &DMatrix<f64>,
    u: &CoeffTrajectory,
    w: &CoeffTrajectory,
) -> Result<PceTrajectory> {
    check(basis, z0j, u, w)?;
    let mut xs = Vec::with_capacity(basis.p());
    let mut ys = Vec::with_capacity(basis.p());
    for i in 0..basis.p() {
        let t = simulate_descriptor(qw, &z0j.row(i).transpose(), &u.index(i), &w_index(w, i, qw.nw()))?;
        xs.push(t.x.unwrap());
        ys.push(t.y);
    }
    let y = CoeffTrajectory::from_indices(&ys);
    let h = y.len();
    Ok(PceTrajectory {
        basis: basis.clone(),
        x: Some(CoeffTrajectory::from_indices(&xs)),
        u: u.slice(0, h),
        w: w.slice(0, h),
        y,
    })
}
