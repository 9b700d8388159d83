use nalgebra::{DMatrix, DVector};

use super::OcpQp;
use crate::error::Result;
use crate::solver::{solve_eq_qp, solve_qp_splitting, AdmmSettings, QpSolution, Residuals, Status};

#[derive(Debug, Clone)]
pub struct OcpSolution {
    /// Row `i` is the selector `g^i`.
    pub g: DMatrix<f64>,
    /// Output consistency slack `sigma^i = sigma+ - sigma-`, per index.
    pub slack: Vec<DVector<f64>>,
    pub objective: f64,
    pub status: Status,
    pub block_status: Vec<Status>,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl OcpSolution {
    pub fn slack_l1(&self) -> f64 {
        self.slack.iter().map(|s| s.lp_norm(1)).sum()
    }
}

fn solve_block(qp: &crate::solver::QpProblem, settings: &AdmmSettings) -> QpSolution {
    if qp.has_cones() {
        solve_qp_splitting(qp, settings)
    } else {
        let mut s = solve_eq_qp(&qp.h, &qp.f, &qp.a_eq, &qp.b_eq);
        s.objective += qp.c0;
        s
    }
}

fn worst(a: Status, b: Status) -> Status {
    use Status::*;
    match (a, b) {
        (Singular, _) | (_, Singular) => Singular,
        (MaxIter, _) | (_, MaxIter) => MaxIter,
        _ => Optimal,
    }
}

/// Solves block by block when nothing couples the indices, otherwise as one
/// problem.
pub fn solve_ocp(ocp: &OcpQp, settings: &AdmmSettings) -> Result<OcpSolution> {
    let p = ocp.p();
    let mut g = DMatrix::zeros(p, ocp.cols);
    let mut slack = Vec::with_capacity(p);
    let mut residuals = Residuals::default();
    let mut block_status = Vec::with_capacity(p);
    let mut objective = 0.0;
    let mut iterations = 0;

    let mut unpack = |i: usize, x: &DVector<f64>| {
        let b = &ocp.blocks[i];
        let xg = x.rows(0, b.n_g).into_owned();
        g.row_mut(i).copy_from(&b.map.apply(&xg).transpose());
        let ns = b.n_slack;
        slack.push(x.rows(b.n_g, ns).into_owned() - x.rows(b.n_g + ns, ns));
    };

    if ocp.chance.is_empty() {
        for (i, b) in ocp.blocks.iter().enumerate() {
            let s = solve_block(&b.qp, settings);
            unpack(i, &s.x);
            objective += s.objective;
            iterations = iterations.max(s.iterations);
            residuals.stationarity = residuals.stationarity.max(s.residuals.stationarity);
            residuals.primal = residuals.primal.max(s.residuals.primal);
            residuals.complementarity = residuals.complementarity.max(s.residuals.complementarity);
            block_status.push(s.status);
        }
    } else {
        let qp = ocp.global()?;
        let s = solve_qp_splitting(&qp, settings);
        for (i, o) in ocp.offsets().into_iter().enumerate() {
            unpack(i, &s.x.rows(o, ocp.blocks[i].n()).into_owned());
        }
        objective = s.objective;
        iterations = s.iterations;
        residuals = s.residuals;
        block_status = vec![s.status; p];
    }
    let status = block_status.iter().copied().fold(Status::Optimal, worst);
    Ok(OcpSolution { g, slack, objective, status, block_status, residuals, iterations })
}
