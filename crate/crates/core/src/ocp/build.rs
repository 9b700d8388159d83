use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{causality_threshold, ChanceConstraint, OcpKind, OcpSpec, Signal};
use crate::error::{Error, Result};
use crate::hankel::{stack_index, HankelStack, StackKind};
use crate::linalg;
use crate::solver::{stack, Cone, QpProblem};

/// Selector parameterisation `g = offset + basis * x_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    pub offset: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl VarMap {
    fn identity(n: usize) -> Self {
        Self { offset: DVector::zeros(n), basis: DMatrix::identity(n, n) }
    }
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.basis * x
    }
}

/// Equality-row ranges inside a block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RowLayout {
    pub w: Range<usize>,
    pub y_ini: Range<usize>,
    pub u_ini: Range<usize>,
    pub mask: Range<usize>,
}

/// The part of the problem belonging to basis index `index`. Variables are
/// `[x_g; sigma+; sigma-]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockQp {
    pub index: usize,
    pub qp: QpProblem,
    pub map: VarMap,
    pub n_g: usize,
    pub n_slack: usize,
    pub rows: RowLayout,
}

impl BlockQp {
    pub fn n(&self) -> usize {
        self.n_g + 2 * self.n_slack
    }
}

#[derive(Debug, Clone)]
pub struct OcpQp {
    pub blocks: Vec<BlockQp>,
    pub kind: OcpKind,
    pub horizon: usize,
    pub cols: usize,
    pub sq_norms: Vec<f64>,
    /// Chance constraints with the Hankel row that extracts their channel.
    pub chance: Vec<(ChanceConstraint, DVector<f64>)>,
    pub slack_weight: f64,
}

fn rows_of(block: &DMatrix<f64>, k: usize, d: usize) -> DMatrix<f64> {
    block.rows(k * d, d).into_owned()
}

/// Assembles the QP. Slack and null-space reduction are applied when the spec
/// asks for them.
pub fn build_ocp(spec: &OcpSpec, st: &HankelStack) -> Result<OcpQp> {
    spec.validate()?;
    let l = spec.window();
    match (spec.kind, st.kind) {
        (OcpKind::Explicit { .. }, StackKind::Explicit) => {}
        (OcpKind::Descriptor { delta, .. }, StackKind::Descriptor { delta: d }) if delta == d => {}
        _ => return Err(Error::Invalid(format!("stack kind {:?} does not match problem kind {:?}", st.kind, spec.kind))),
    }
    if st.depth != l {
        return Err(Error::Invalid(format!("stack depth {} but window length {l}", st.depth)));
    }
    if spec.q.nrows() != st.ny || spec.r.nrows() != st.nu || spec.w_hat.dim() != st.nw {
        return Err(Error::Invalid("weights or disturbance channels do not match the data".into()));
    }
    let (ny, nu, cols) = (st.ny, st.nu, st.cols());
    let p = spec.basis.p();
    let e = spec.basis.sq_norms();
    let d0 = spec.kind.decision_start();

    // Shared quadratic and linear parts (per unit E[phi^2]).
    let mut h_base = DMatrix::zeros(cols, cols);
    let mut f_ref = DVector::zeros(cols);
    let mut c_ref = 0.0;
    for k in d0..l {
        let sy = rows_of(&st.y, k, ny);
        let su = rows_of(&st.u, k, nu);
        h_base += sy.transpose() * &spec.q * &sy + su.transpose() * &spec.r * &su;
        f_ref -= (sy.transpose() * (&spec.q * &spec.y_ref) + su.transpose() * (&spec.r * &spec.u_ref)) * 2.0;
        c_ref += spec.y_ref.dot(&(&spec.q * &spec.y_ref)) + spec.u_ref.dot(&(&spec.r * &spec.u_ref));
    }
    if spec.rate > 0.0 {
        for k in d0..l.saturating_sub(1) {
            let du = rows_of(&st.u, k + 1, nu) - rows_of(&st.u, k, nu);
            h_base += du.transpose() * &du * spec.rate;
        }
    }
    let h_base = h_base * 2.0;

    let ny_ini = spec.kind.init_y();
    let nu_ini = spec.kind.init_u();
    let y_ini_rows = st.y.rows(0, ny * ny_ini).into_owned();
    let u_ini_rows = st.u_ext.rows(0, nu * nu_ini).into_owned();
    let span = spec.kind.input_span(spec.horizon);

    let mut blocks = Vec::with_capacity(p);
    for i in 0..p {
        let mut qp = QpProblem::new(cols);
        qp.h = &h_base * e[i];
        if i == 0 {
            qp.f = f_ref.clone();
            qp.c0 = c_ref;
        }
        let mut rows = RowLayout::default();
        let mut r0 = 0;
        if st.nw > 0 {
            qp.push_eq(&st.w, &stack_index(&spec.w_hat, i));
        }
        rows.w = r0..qp.a_eq.nrows();
        r0 = qp.a_eq.nrows();
        qp.push_eq(&y_ini_rows, &stack_index(&spec.y_ini, i));
        rows.y_ini = r0..qp.a_eq.nrows();
        r0 = qp.a_eq.nrows();
        qp.push_eq(&u_ini_rows, &stack_index(&spec.u_ini, i));
        rows.u_ini = r0..qp.a_eq.nrows();
        r0 = qp.a_eq.nrows();
        if spec.causality {
            let masked: Vec<usize> = (0..span)
                .filter(|&k| i >= causality_threshold(&spec.basis, spec.kind, k))
                .flat_map(|k| (k * nu)..(k * nu + nu))
                .collect();
            if !masked.is_empty() {
                let m = linalg::select_rows(&st.u_ext, &masked);
                qp.push_eq(&m, &DVector::zeros(masked.len()));
            }
        }
        rows.mask = r0..qp.a_eq.nrows();
        blocks.push(BlockQp { index: i, qp, map: VarMap::identity(cols), n_g: cols, n_slack: 0, rows });
    }

    let mut chance = Vec::with_capacity(spec.chance.len());
    for c in &spec.chance {
        let (block, d) = match c.signal {
            Signal::Y => (&st.y, ny),
            Signal::U => (&st.u, nu),
        };
        if c.channel >= d {
            return Err(Error::Invalid(format!("chance constraint channel {} out of range", c.channel)));
        }
        chance.push((*c, block.row(c.step * d + c.channel).transpose()));
    }

    let mut ocp = OcpQp {
        blocks,
        kind: spec.kind,
        horizon: spec.horizon,
        cols,
        sq_norms: e.iter().copied().collect(),
        chance,
        slack_weight: 0.0,
    };
    if spec.nullspace_reduce {
        ocp.nullspace_reduce()?;
    }
    if spec.slack_weight > 0.0 {
        ocp.add_slack(spec.slack_weight);
    }
    Ok(ocp)
}

fn pad_cols(m: &DMatrix<f64>, extra: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols() + extra);
    out.view_mut((0, 0), m.shape()).copy_from(m);
    out
}

/// Substitutes `x_head = o + Z z` for the leading `o.len()` variables.
fn substitute(qp: &QpProblem, o: &DVector<f64>, z: &DMatrix<f64>) -> QpProblem {
    let n = qp.n();
    let k = o.len();
    let tail = n - k;
    let t = linalg::block_diag(z, &DMatrix::identity(tail, tail));
    let off = stack(o, &DVector::zeros(tail));
    let ho = &qp.h * &off;
    QpProblem {
        h: t.transpose() * &qp.h * &t,
        f: t.transpose() * (&ho + &qp.f),
        c0: qp.c0 + 0.5 * off.dot(&ho) + qp.f.dot(&off),
        a_eq: &qp.a_eq * &t,
        b_eq: &qp.b_eq - &qp.a_eq * &off,
        m: &qp.m * &t,
        c: &qp.c + &qp.m * &off,
        cones: qp.cones.clone(),
    }
}

fn drop_rows(qp: &mut QpProblem, rows: Range<usize>) {
    let keep: Vec<usize> = (0..qp.a_eq.nrows()).filter(|r| !rows.contains(r)).collect();
    qp.a_eq = linalg::select_rows(&qp.a_eq, &keep);
    qp.b_eq = linalg::select_entries(&qp.b_eq, &keep);
}

fn shift(r: &Range<usize>, by: usize) -> Range<usize> {
    (r.start - by)..(r.end - by)
}

/// Largest disturbance-row residual tolerated by the null-space method.
pub const REDUCE_TOL: f64 = 1e-8;

impl OcpQp {
    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    /// Penalises output consistency rows with `lambda_s * |sigma|_1` via
    /// nonnegative split variables; `lambda_s = 0` leaves the problem unchanged.
    pub fn add_slack(&mut self, lambda_s: f64) {
        if lambda_s <= 0.0 {
            return;
        }
        self.slack_weight = lambda_s;
        for b in &mut self.blocks {
            if b.n_slack > 0 {
                continue;
            }
            let ns = b.rows.y_ini.len();
            let n = b.qp.n();
            let qp = &mut b.qp;
            let mut h = DMatrix::zeros(n + 2 * ns, n + 2 * ns);
            h.view_mut((0, 0), (n, n)).copy_from(&qp.h);
            qp.h = h;
            qp.f = stack(&qp.f, &DVector::from_element(2 * ns, lambda_s));
            qp.a_eq = pad_cols(&qp.a_eq, 2 * ns);
            for (j, r) in b.rows.y_ini.clone().enumerate() {
                qp.a_eq[(r, n + j)] = -1.0;
                qp.a_eq[(r, n + ns + j)] = 1.0;
            }
            qp.m = pad_cols(&qp.m, 2 * ns);
            let mut sel = DMatrix::zeros(2 * ns, n + 2 * ns);
            for j in 0..2 * ns {
                sel[(j, n + j)] = 1.0;
            }
            qp.push_cone(&sel, &DVector::zeros(2 * ns), false);
            b.n_slack = ns;
        }
    }

    /// Eliminates the disturbance rows: `x_g = o + Z z` with `Z` spanning the
    /// null space of the disturbance block.
    pub fn nullspace_reduce(&mut self) -> Result<()> {
        for b in &mut self.blocks {
            if b.rows.w.is_empty() {
                continue;
            }
            let aw = b.qp.a_eq.view((b.rows.w.start, 0), (b.rows.w.len(), b.n_g)).into_owned();
            let bw = b.qp.b_eq.rows(b.rows.w.start, b.rows.w.len()).into_owned();
            let o = linalg::pinv_solve(&aw, &bw);
            let residual = (&aw * &o - &bw).amax();
            if residual > REDUCE_TOL {
                return Err(Error::InconsistentDisturbance { index: b.index, residual });
            }
            let z = linalg::null_space(&aw);
            b.qp = substitute(&b.qp, &o, &z);
            drop_rows(&mut b.qp, b.rows.w.clone());
            let nw = b.rows.w.len();
            b.rows = RowLayout {
                w: 0..0,
                y_ini: shift(&b.rows.y_ini, nw),
                u_ini: shift(&b.rows.u_ini, nw),
                mask: shift(&b.rows.mask, nw),
            };
            b.map = VarMap { offset: b.map.apply(&o), basis: &b.map.basis * &z };
            b.n_g = z.ncols();
        }
        Ok(())
    }

    /// Variable offsets of each block inside the global vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.p());
        let mut at = 0;
        for b in &self.blocks {
            out.push(at);
            at += b.n();
        }
        out
    }

    /// One QP over all blocks, including the coupling chance-constraint cones.
    pub fn global(&self) -> Result<QpProblem> {
        let offs = self.offsets();
        let n: usize = self.blocks.iter().map(|b| b.n()).sum();
        let me: usize = self.blocks.iter().map(|b| b.qp.a_eq.nrows()).sum();
        let mut qp = QpProblem::new(n);
        qp.a_eq = DMatrix::zeros(me, n);
        qp.b_eq = DVector::zeros(me);
        let mut r = 0;
        for (b, &o) in self.blocks.iter().zip(&offs) {
            let nb = b.n();
            qp.h.view_mut((o, o), (nb, nb)).copy_from(&b.qp.h);
            qp.f.rows_mut(o, nb).copy_from(&b.qp.f);
            qp.c0 += b.qp.c0;
            let rb = b.qp.a_eq.nrows();
            qp.a_eq.view_mut((r, o), (rb, nb)).copy_from(&b.qp.a_eq);
            qp.b_eq.rows_mut(r, rb).copy_from(&b.qp.b_eq);
            r += rb;
        }
        for (b, &o) in self.blocks.iter().zip(&offs) {
            if b.qp.m.nrows() == 0 {
                continue;
            }
            let mut rows = DMatrix::zeros(b.qp.m.nrows(), n);
            rows.view_mut((0, o), (b.qp.m.nrows(), b.n())).copy_from(&b.qp.m);
            let base = qp.m.nrows();
            qp.m = linalg::vstack(&[&qp.m, &rows]);
            qp.c = stack(&qp.c, &b.qp.c);
            for cone in &b.qp.cones {
                qp.cones.push(match *cone {
                    Cone::NonNeg { start, len } => Cone::NonNeg { start: base + start, len },
                    Cone::Soc { start, len } => Cone::Soc { start: base + start, len },
                });
            }
        }
        for (c, row) in &self.chance {
            let s = c.multiplier()?;
            for upper in [true, false] {
                let bound = if upper { c.hi } else { c.lo };
                if !bound.is_finite() {
                    continue;
                }
                let sign = if upper { -1.0 } else { 1.0 };
                let mut rows = DMatrix::zeros(self.p(), n);
                let mut off = DVector::zeros(self.p());
                for (i, (b, &o)) in self.blocks.iter().zip(&offs).enumerate() {
                    let coef = (b.map.basis.transpose() * row).transpose();
                    let base = row.dot(&b.map.offset);
                    if i == 0 {
                        rows.view_mut((0, o), (1, b.n_g)).copy_from(&(&coef * sign));
                        off[0] = sign * base - sign * bound;
                    } else {
                        let w = s * self.sq_norms[i].sqrt();
                        rows.view_mut((i, o), (1, b.n_g)).copy_from(&(&coef * w));
                        off[i] = w * base;
                    }
                }
                qp.push_cone(&rows, &off, self.p() > 1);
            }
        }
        Ok(qp)
    }
}
