//! Data-driven PCE optimal control problems assembled as quadratic programs.
//!
//! Decision variables are the per-index selectors `g^i`; outputs and inputs
//! are eliminated through the Hankel rows (`y^i = H_y g^i`, `u^i = H_u g^i`).
//! Without chance constraints the problem separates into one block per basis
//! index.

mod build;
mod solve;

pub use build::{build_ocp, BlockQp, OcpQp, RowLayout, VarMap};
pub use solve::{solve_ocp, OcpSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pce::{CoeffTrajectory, JointBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OcpKind {
    Explicit { n_x: usize },
    Descriptor { n_j: usize, delta: usize },
}

impl OcpKind {
    /// Window length `L` for horizon `n`.
    pub fn window(&self, n: usize) -> usize {
        match *self {
            OcpKind::Explicit { n_x } => n + n_x,
            OcpKind::Descriptor { n_j, delta } => n + delta + n_j - 1,
        }
    }
    /// Number of initial output samples pinned by the consistency condition.
    pub fn init_y(&self) -> usize {
        match *self {
            OcpKind::Explicit { n_x } => n_x,
            OcpKind::Descriptor { n_j, .. } => n_j,
        }
    }
    pub fn init_u(&self) -> usize {
        match *self {
            OcpKind::Explicit { n_x } => n_x,
            OcpKind::Descriptor { n_j, delta } => n_j + delta - 1,
        }
    }
    /// First step of the decision window.
    pub fn decision_start(&self) -> usize {
        match *self {
            OcpKind::Explicit { n_x } => n_x,
            OcpKind::Descriptor { n_j, delta } => delta + n_j - 1,
        }
    }
    pub fn delta(&self) -> usize {
        match *self {
            OcpKind::Explicit { .. } => 1,
            OcpKind::Descriptor { delta, .. } => delta,
        }
    }
    /// Input samples a causality mask applies to: the window, plus the
    /// `delta - 1` future inputs a descriptor window depends on.
    pub fn input_span(&self, n: usize) -> usize {
        self.window(n) + self.delta() - 1
    }
}

/// First basis index that input step `k` must not load on.
pub fn causality_threshold(basis: &JointBasis, kind: OcpKind, k: usize) -> usize {
    let (pi, pw) = (basis.p_ini, basis.p_w);
    match kind {
        OcpKind::Explicit { .. } => pi + k * (pw - 1),
        OcpKind::Descriptor { delta, .. } => {
            if k < delta {
                pi + pw - 1
            } else {
                pi + (k - delta + 1) * (pw - 1)
            }
        }
    }
}

/// `(k, i)` pairs with `u_k^i` forced to zero.
pub fn causality_mask(basis: &JointBasis, horizon: usize, kind: OcpKind) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..kind.input_span(horizon) {
        for i in causality_threshold(basis, kind, k)..basis.p() {
            out.push((k, i));
        }
    }
    out
}

/// `sqrt((2 - eps) / eps)`: a distribution-free multiplier for the
/// mean +- sigma * std reformulation of `P[Z in [lo, hi]] >= 1 - eps`.
pub fn sigma_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Invalid(format!("chance level eps = {eps} outside (0, 1]")));
    }
    Ok(((2.0 - eps) / eps).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Y,
    U,
}

/// `z^0 +- sigma * std(Z) in [lo, hi]` for one channel at window step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceConstraint {
    pub signal: Signal,
    pub channel: usize,
    pub step: usize,
    pub lo: f64,
    pub hi: f64,
    pub eps: f64,
    /// Overrides `sigma_eps(eps)`, e.g. with a Gaussian quantile.
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl ChanceConstraint {
    pub fn multiplier(&self) -> Result<f64> {
        match self.sigma {
            Some(s) if s >= 0.0 => Ok(s),
            Some(s) => Err(Error::Invalid(format!("negative chance multiplier {s}"))),
            None => sigma_eps(self.eps),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OcpSpec {
    pub horizon: usize,
    pub kind: OcpKind,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Weight of the expected squared input increments over the decision window.
    pub rate: f64,
    pub y_ref: DVector<f64>,
    pub u_ref: DVector<f64>,
    pub basis: JointBasis,
    /// Consistency data over the initial window.
    pub y_ini: CoeffTrajectory,
    pub u_ini: CoeffTrajectory,
    /// Disturbance coefficients over the whole window.
    pub w_hat: CoeffTrajectory,
    /// 1-norm weight of output consistency slack; 0 keeps the rows hard.
    pub slack_weight: f64,
    pub nullspace_reduce: bool,
    pub causality: bool,
    pub chance: Vec<ChanceConstraint>,
}

fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::Invalid(format!("{name} must be symmetric")));
    }
    if m.is_empty() || m.clone().symmetric_eigenvalues().min() <= 0.0 {
        return Err(Error::Invalid(format!("{name} must be positive definite")));
    }
    Ok(())
}

impl OcpSpec {
    pub fn window(&self) -> usize {
        self.kind.window(self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        check_spd("Q", &self.q)?;
        check_spd("R", &self.r)?;
        if self.rate < 0.0 || self.slack_weight < 0.0 {
            return Err(Error::Invalid("rate and slack weights must be nonnegative".into()));
        }
        let l = self.window();
        if self.y_ini.len() != self.kind.init_y() || self.u_ini.len() != self.kind.init_u() {
            return Err(Error::Invalid(format!(
                "consistency window needs {} outputs and {} inputs, got {} and {}",
                self.kind.init_y(),
                self.kind.init_u(),
                self.y_ini.len(),
                self.u_ini.len()
            )));
        }
        if self.w_hat.len() != l {
            return Err(Error::Invalid(format!("disturbance window needs {l} steps, got {}", self.w_hat.len())));
        }
        self.y_ini.check_basis(&self.basis, "y_ini")?;
        self.u_ini.check_basis(&self.basis, "u_ini")?;
        self.w_hat.check_basis(&self.basis, "w_hat")?;
        if self.y_ref.len() != self.q.nrows() || self.u_ref.len() != self.r.nrows() {
            return Err(Error::Invalid("reference dimensions do not match Q, R".into()));
        }
        for c in &self.chance {
            c.multiplier()?;
            if c.step >= l {
                return Err(Error::Invalid(format!("chance constraint at step {} outside window {l}", c.step)));
            }
        }
        Ok(())
    }
}
