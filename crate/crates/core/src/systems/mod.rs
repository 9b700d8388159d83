//! Explicit and descriptor LTI systems with the input split `v = (u, w)` into
//! manipulated controls and exogenous disturbances.

mod descriptor;

pub use descriptor::{
    consistent_initial_basis, CHAIN_ATOL, is_r_controllable, is_r_observable, is_regular, nilpotency_index,
    quasi_weierstrass, simulate_descriptor, structured_nilpotency_index, DescriptorSystem,
    QuasiWeierstrass, QwCore,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::linalg;

/// `x+ = A x + B u + F w`, `y = C x + D u + H w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl ExplicitSystem {
    /// Checks dimensions. Empty (0x0) `F`, `D`, `H` are widened to zero blocks of
    /// the right shape, so a disturbance-free system can pass `F = H = []`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        f: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        h: DMatrix<f64>,
    ) -> Result<Self> {
        let nx = a.nrows();
        if nx == 0 || a.ncols() != nx {
            return Err(dim_err("A", "square n_x >= 1", format!("{:?}", a.shape())));
        }
        if b.nrows() != nx || b.ncols() == 0 {
            return Err(dim_err("B", format!("{nx} x n_u (n_u >= 1)"), format!("{:?}", b.shape())));
        }
        let nu = b.ncols();
        let f = if f.is_empty() { DMatrix::zeros(nx, f.ncols()) } else { f };
        if f.nrows() != nx {
            return Err(dim_err("F", format!("{nx} x n_w"), format!("{:?}", f.shape())));
        }
        let nw = f.ncols();
        if c.ncols() != nx && !(c.nrows() == 0) {
            return Err(dim_err("C", format!("n_y x {nx}"), format!("{:?}", c.shape())));
        }
        let c = if c.nrows() == 0 { DMatrix::zeros(0, nx) } else { c };
        let ny = c.nrows();
        let d = if d.is_empty() { DMatrix::zeros(ny, nu) } else { d };
        if d.shape() != (ny, nu) {
            return Err(dim_err("D", format!("{ny} x {nu}"), format!("{:?}", d.shape())));
        }
        let h = if h.is_empty() { DMatrix::zeros(ny, nw) } else { h };
        if h.shape() != (ny, nw) {
            return Err(dim_err("H", format!("{ny} x {nw}"), format!("{:?}", h.shape())));
        }
        Ok(Self { a, b, f, c, d, h })
    }

    /// Scalar system `x+ = a x + b u + f w`, `y = x`.
    pub fn scalar(a: f64, b: f64, f: f64) -> Self {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(b), m(f), m(1.0), m(0.0), m(0.0)).expect("scalar system is consistent")
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.b.ncols()
    }
    pub fn nw(&self) -> usize {
        self.f.ncols()
    }
    pub fn ny(&self) -> usize {
        self.c.nrows()
    }
    pub fn nv(&self) -> usize {
        self.nu() + self.nw()
    }

    /// `[B F]`
    pub fn b_tilde(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.b, &self.f])
    }
    /// `[D H]`
    pub fn d_tilde(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.d, &self.h])
    }
}

/// A sampled (or coefficient-wise) trajectory. `x`, when present, has length
/// `horizon` or `horizon + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealTrajectory {
    pub x: Option<Vec<DVector<f64>>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl RealTrajectory {
    pub fn horizon(&self) -> usize {
        self.y.len()
    }

    /// Stacked `v_k = (u_k, w_k)`.
    pub fn v(&self, k: usize) -> DVector<f64> {
        stack_v(&self.u[k], &self.w[k])
    }
}

pub(crate) fn stack_v(u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(u.len() + w.len());
    v.rows_mut(0, u.len()).copy_from(u);
    v.rows_mut(u.len(), w.len()).copy_from(w);
    v
}

fn check_inputs(
    nu: usize,
    nw: usize,
    u: &[DVector<f64>],
    w: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let w: Vec<DVector<f64>> = if nw == 0 && w.is_empty() {
        vec![DVector::zeros(0); u.len()]
    } else {
        w.to_vec()
    };
    if w.len() != u.len() {
        return Err(dim_err("input sequences", format!("len(w) = {}", u.len()), w.len()));
    }
    if let Some(bad) = u.iter().find(|v| v.len() != nu) {
        return Err(dim_err("u_k", nu, bad.len()));
    }
    if let Some(bad) = w.iter().find(|v| v.len() != nw) {
        return Err(dim_err("w_k", nw, bad.len()));
    }
    Ok(w)
}

/// Forward simulation; `x` has `len(u) + 1` entries and `y` has `len(u)`.
pub fn simulate_explicit(
    sys: &ExplicitSystem,
    x0: &DVector<f64>,
    u: &[DVector<f64>],
    w: &[DVector<f64>],
) -> Result<RealTrajectory> {
    if x0.len() != sys.nx() {
        return Err(dim_err("x0", sys.nx(), x0.len()));
    }
    let w = check_inputs(sys.nu(), sys.nw(), u, w)?;
    let mut xs = Vec::with_capacity(u.len() + 1);
    let mut ys = Vec::with_capacity(u.len());
    let mut x = x0.clone();
    for k in 0..u.len() {
        ys.push(&sys.c * &x + &sys.d * &u[k] + &sys.h * &w[k]);
        let next = &sys.a * &x + &sys.b * &u[k] + &sys.f * &w[k];
        xs.push(std::mem::replace(&mut x, next));
    }
    xs.push(x);
    Ok(RealTrajectory { x: Some(xs), u: u.to_vec(), w, y: ys })
}

/// Simulation under `u_k = excitation_k - K x_k`. Used to record data from
/// open-loop unstable plants without numerical blow-up.
pub fn simulate_closed_loop(
    sys: &ExplicitSystem,
    x0: &DVector<f64>,
    gain: &DMatrix<f64>,
    excitation: &[DVector<f64>],
    w: &[DVector<f64>],
) -> Result<RealTrajectory> {
    if gain.shape() != (sys.nu(), sys.nx()) {
        return Err(dim_err("feedback gain", format!("{} x {}", sys.nu(), sys.nx()), format!("{:?}", gain.shape())));
    }
    let w = check_inputs(sys.nu(), sys.nw(), excitation, w)?;
    let mut x = x0.clone();
    let mut us = Vec::with_capacity(excitation.len());
    for k in 0..excitation.len() {
        let uk = &excitation[k] - gain * &x;
        x = &sys.a * &x + &sys.b * &uk + &sys.f * &w[k];
        us.push(uk);
    }
    simulate_explicit(sys, x0, &us, &w)
}

/// Either system class, with whatever is needed to simulate it.
#[derive(Debug, Clone)]
pub enum Model {
    Explicit(ExplicitSystem),
    Descriptor(Box<QuasiWeierstrass>),
}

impl Model {
    pub fn nu(&self) -> usize {
        match self {
            Model::Explicit(s) => s.nu(),
            Model::Descriptor(q) => q.b_j.ncols(),
        }
    }
    pub fn nw(&self) -> usize {
        match self {
            Model::Explicit(s) => s.nw(),
            Model::Descriptor(q) => q.f_j.ncols(),
        }
    }
    pub fn ny(&self) -> usize {
        match self {
            Model::Explicit(s) => s.ny(),
            Model::Descriptor(q) => q.c_j.nrows(),
        }
    }
    /// Number of extra future input samples needed per simulated output sample.
    pub fn lookahead(&self) -> usize {
        match self {
            Model::Explicit(_) => 0,
            Model::Descriptor(q) => q.delta - 1,
        }
    }
}

/// Row-major nested-array serde for `DMatrix<f64>`.
pub(crate) mod rows_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        linalg::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        if rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(linalg::from_rows(&rows))
    }
}

/// Serializable form of a system: named matrices as row-major nested arrays.
/// `e` present means a descriptor system.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rows")]
    pub e: Option<DMatrix<f64>>,
    #[serde(with = "rows_serde")]
    pub a: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub b: DMatrix<f64>,
    #[serde(default = "empty", with = "rows_serde")]
    pub f: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub c: DMatrix<f64>,
    #[serde(default = "empty", with = "rows_serde")]
    pub d: DMatrix<f64>,
    #[serde(default = "empty", with = "rows_serde")]
    pub h: DMatrix<f64>,
}

fn empty() -> DMatrix<f64> {
    DMatrix::zeros(0, 0)
}

mod opt_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(linalg::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DMatrix<f64>>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        Ok(rows.map(|r| linalg::from_rows(&r)))
    }
}

impl SystemSpec {
    pub fn explicit(&self) -> Result<ExplicitSystem> {
        ExplicitSystem::new(
            self.a.clone(),
            self.b.clone(),
            self.f.clone(),
            self.c.clone(),
            self.d.clone(),
            self.h.clone(),
        )
    }

    pub fn model(&self) -> Result<Model> {
        let sys = self.explicit()?;
        match &self.e {
            None => Ok(Model::Explicit(sys)),
            Some(e) => {
                let ds = DescriptorSystem::new(e.clone(), sys)?;
                Ok(Model::Descriptor(Box::new(QuasiWeierstrass::from_system(&ds)?)))
            }
        }
    }
}

impl From<&ExplicitSystem> for SystemSpec {
    fn from(s: &ExplicitSystem) -> Self {
        Self {
            e: None,
            a: s.a.clone(),
            b: s.b.clone(),
            f: s.f.clone(),
            c: s.c.clone(),
            d: s.d.clone(),
            h: s.h.clone(),
        }
    }
}
