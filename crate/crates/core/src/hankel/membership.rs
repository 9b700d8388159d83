use nalgebra::{DMatrix, DVector};

use super::{concat, stack_index};
use crate::error::{dim_err, Result};
use crate::linalg;
use crate::pce::CoeffTrajectory;
use crate::systems::{simulate_descriptor, simulate_explicit, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub ok: bool,
    pub max_residual: f64,
    pub per_index: Vec<f64>,
}

/// Checks that every coefficient index is a trajectory of the model. The
/// initial state is fitted by least squares from the outputs; a supplied state
/// trajectory is checked against the recursion as well. Descriptor models need
/// `u`, `w` to run `delta - 1` steps past `y`.
pub fn validate_membership(
    model: &Model,
    u: &CoeffTrajectory,
    w: &CoeffTrajectory,
    y: &CoeffTrajectory,
    x: Option<&CoeffTrajectory>,
    tol: f64,
) -> Result<MembershipReport> {
    let h = y.len();
    let need = h + model.lookahead();
    if u.len() < need || (model.nw() > 0 && w.len() < need) {
        return Err(dim_err("input window", need, u.len().min(w.len())));
    }
    let (obs, ny) = observability(model, h);
    let obs_pinv = linalg::pinv(&obs);
    let mut per_index = Vec::with_capacity(y.p());
    for i in 0..y.p() {
        let ui: Vec<DVector<f64>> = u.index(i)[..need].to_vec();
        let wi: Vec<DVector<f64>> = if model.nw() == 0 {
            vec![DVector::zeros(0); need]
        } else {
            w.index(i)[..need].to_vec()
        };
        let free = match model {
            Model::Explicit(s) => simulate_explicit(s, &DVector::zeros(s.nx()), &ui, &wi)?,
            Model::Descriptor(q) => simulate_descriptor(q, &DVector::zeros(q.n_j), &ui, &wi)?,
        };
        let r = stack_index(y, i) - concat(&free.y[..h]);
        debug_assert_eq!(r.len(), ny * h);
        let fit = &obs * (&obs_pinv * &r);
        let mut res = (&r - fit).amax();
        if let (Some(x), Model::Explicit(s)) = (x, model) {
            let xi = x.index(i);
            for k in 0..xi.len().saturating_sub(1).min(h) {
                let v = &s.a * &xi[k] + &s.b * &ui[k] + &s.f * &wi[k] - &xi[k + 1];
                res = res.max(v.amax());
            }
        }
        per_index.push(res);
    }
    let max_residual = per_index.iter().copied().fold(0.0, f64::max);
    Ok(MembershipReport { ok: max_residual <= tol, max_residual, per_index })
}

/// Stacked free response map from the initial (dynamic) state to `y_0..y_{h-1}`.
fn observability(model: &Model, h: usize) -> (DMatrix<f64>, usize) {
    let (a, c) = match model {
        Model::Explicit(s) => (s.a.clone(), s.c.clone()),
        Model::Descriptor(q) => (q.j.clone(), q.c_j.clone()),
    };
    let ny = c.nrows();
    let mut obs = DMatrix::zeros(ny * h, a.nrows());
    let mut ck = c;
    for k in 0..h {
        obs.view_mut((k * ny, 0), (ny, a.nrows())).copy_from(&ck);
        ck = &ck * &a;
    }
    (obs, ny)
}
