//! Hankel matrices of recorded data and the fundamental-lemma reconstructions
//! built on them.

mod membership;

pub use membership::{validate_membership, MembershipReport};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::pce::CoeffTrajectory;
use crate::systems::RealTrajectory;

/// Column `j` stacks `signal[j..j+L]`.
pub fn hankel(signal: &[DVector<f64>], l: usize) -> Result<DMatrix<f64>> {
    let t = signal.len();
    if l == 0 || t < l {
        return Err(Error::TooShort { len: t, depth: l });
    }
    let d = signal[0].len();
    if let Some(bad) = signal.iter().find(|s| s.len() != d) {
        return Err(dim_err("signal samples", d, bad.len()));
    }
    let cols = t - l + 1;
    let mut h = DMatrix::zeros(d * l, cols);
    for j in 0..cols {
        for i in 0..l {
            h.view_mut((i * d, j), (d, 1)).copy_from(&signal[i + j]);
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeReason {
    /// `T < L (n_u + 1) - 1`: too few columns for full row rank.
    LengthBound,
    RankDeficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeCertificate {
    pub order: usize,
    pub rank: usize,
    pub required: usize,
    pub reason: Option<PeReason>,
}

impl PeCertificate {
    pub fn holds(&self) -> bool {
        self.reason.is_none()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.reason {
            None => Ok(self),
            Some(r) => Err(Error::NotPersistentlyExciting {
                order: self.order,
                reason: format!("{r:?}: rank {} of required {}", self.rank, self.required),
            }),
        }
    }
}

pub fn persistency_of_excitation(u: &[DVector<f64>], l: usize) -> PeCertificate {
    let nu = u.first().map_or(0, |v| v.len());
    let required = nu * l;
    if l == 0 || u.len() + 1 < l * (nu + 1) {
        return PeCertificate { order: l, rank: 0, required, reason: Some(PeReason::LengthBound) };
    }
    let rank = hankel(u, l).map(|h| linalg::rank(&h)).unwrap_or(0);
    let reason = (rank != required).then_some(PeReason::RankDeficient);
    PeCertificate { order: l, rank, required, reason }
}

pub fn is_persistently_exciting(u: &[DVector<f64>], l: usize) -> bool {
    persistency_of_excitation(u, l).holds()
}

/// Rank of `[H_L(u); H_L(y)]`. A longer `u` (descriptor data) is cut to the
/// length of `y`.
pub fn stacked_rank(u: &[DVector<f64>], y: &[DVector<f64>], l: usize) -> Result<usize> {
    let t = u.len().min(y.len());
    let hu = hankel(&u[..t], l)?;
    let hy = hankel(&y[..t], l)?;
    Ok(linalg::rank(&linalg::vstack(&[&hu, &hy])))
}

/// `rank - n_u L`, the dimension of the dynamic part under persistent excitation.
pub fn estimate_n_j(u: &[DVector<f64>], y: &[DVector<f64>], l: usize) -> Result<usize> {
    let nu = u.first().map_or(0, |v| v.len());
    Ok(stacked_rank(u, y, l)?.saturating_sub(nu * l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StackKind {
    Explicit,
    Descriptor { delta: usize },
}

impl StackKind {
    pub fn delta(&self) -> usize {
        match self {
            StackKind::Explicit => 1,
            StackKind::Descriptor { delta } => *delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Y,
    U,
    W,
}

/// Depth-`L` Hankel blocks of `(y, u, w)` with a shared column count. Descriptor
/// stacks also carry depth `L + delta - 1` blocks of `u` and `w`, which fix the
/// inputs the non-causal part needs beyond the window.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelStack {
    pub depth: usize,
    pub kind: StackKind,
    pub horizon: usize,
    pub y: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub u_ext: DMatrix<f64>,
    pub w_ext: DMatrix<f64>,
    pub ny: usize,
    pub nu: usize,
    pub nw: usize,
}

impl HankelStack {
    pub fn build(data: &RealTrajectory, l: usize, kind: StackKind) -> Result<Self> {
        let t = data.horizon();
        let delta = kind.delta();
        if t + 1 < l + delta || l == 0 {
            return Err(Error::TooShort { len: t, depth: l + delta - 1 });
        }
        let n = t - delta + 1;
        let y = hankel(&data.y[..n], l)?;
        let u = hankel(&data.u[..n], l)?;
        let nw = data.w.first().map_or(0, |w| w.len());
        let w = block_or_empty(&data.w[..n.min(data.w.len())], l, nw, y.ncols())?;
        let (u_ext, w_ext) = match kind {
            StackKind::Explicit => (u.clone(), w.clone()),
            StackKind::Descriptor { delta } => (
                hankel(&data.u[..t], l + delta - 1)?,
                block_or_empty(&data.w, l + delta - 1, nw, y.ncols())?,
            ),
        };
        Ok(Self {
            depth: l,
            kind,
            horizon: t,
            ny: data.y[0].len(),
            nu: data.u[0].len(),
            nw,
            y,
            u,
            w,
            u_ext,
            w_ext,
        })
    }

    pub fn cols(&self) -> usize {
        self.y.ncols()
    }

    /// Depth of the extended input blocks.
    pub fn ext_depth(&self) -> usize {
        self.depth + self.kind.delta() - 1
    }

    pub fn block(&self, b: Block) -> &DMatrix<f64> {
        match b {
            Block::Y => &self.y,
            Block::U => &self.u,
            Block::W => &self.w,
        }
    }

    pub fn stacked(&self, blocks: &[Block]) -> DMatrix<f64> {
        let refs: Vec<&DMatrix<f64>> = blocks.iter().map(|b| self.block(*b)).collect();
        linalg::vstack(&refs)
    }

    /// CSV with header `block,row,c0,c1,...` plus a JSON header describing the layout.
    pub fn export<W1: Write, W2: Write>(&self, csv_out: W1, json_out: W2) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(csv_out);
        let mut head = vec!["block".to_string(), "row".to_string()];
        head.extend((0..self.cols()).map(|j| format!("c{j}")));
        wr.write_record(&head)?;
        let mut blocks = Vec::new();
        for (name, m) in [("y", &self.y), ("u", &self.u), ("w", &self.w), ("u_ext", &self.u_ext), ("w_ext", &self.w_ext)] {
            if matches!(self.kind, StackKind::Explicit) && name.ends_with("_ext") {
                continue;
            }
            blocks.push(serde_json::json!({ "name": name, "rows": m.nrows() }));
            for r in 0..m.nrows() {
                let mut rec = vec![name.to_string(), r.to_string()];
                rec.extend(m.row(r).iter().map(|v| format!("{v:e}")));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        let header = serde_json::json!({
            "depth": self.depth,
            "kind": self.kind,
            "horizon": self.horizon,
            "columns": self.cols(),
            "blocks": blocks,
        });
        serde_json::to_writer_pretty(json_out, &header)?;
        Ok(())
    }
}

fn block_or_empty(sig: &[DVector<f64>], l: usize, nw: usize, cols: usize) -> Result<DMatrix<f64>> {
    if nw == 0 {
        Ok(DMatrix::zeros(0, cols))
    } else {
        hankel(sig, l)
    }
}

/// Flattens a coefficient trajectory index into a stacked column.
pub fn stack_index(traj: &CoeffTrajectory, i: usize) -> DVector<f64> {
    let d = traj.dim();
    let mut out = DVector::zeros(d * traj.len());
    for (k, m) in traj.steps.iter().enumerate() {
        out.rows_mut(k * d, d).copy_from(&m.row(i).transpose());
    }
    out
}

pub(crate) fn concat(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}

fn unstack(col: &DVector<f64>, d: usize) -> Vec<DVector<f64>> {
    if d == 0 {
        return Vec::new();
    }
    (0..col.len() / d).map(|k| col.rows(k * d, d).into_owned()).collect()
}

/// One selector column `g^i` per basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorPce {
    pub g: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

impl SelectorPce {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Window coefficients that a selector should reproduce. Absent blocks are not
/// matched.
#[derive(Debug, Clone, Default)]
pub struct WindowTarget {
    pub y: Option<CoeffTrajectory>,
    pub u: Option<CoeffTrajectory>,
    pub w: Option<CoeffTrajectory>,
}

/// Per-index minimum-norm least-squares selectors; the residual is the largest
/// absolute mismatch of the reproduced window.
pub fn reconstruct_selector(stack: &HankelStack, target: &WindowTarget) -> Result<SelectorPce> {
    let mut blocks = Vec::new();
    let mut parts = Vec::new();
    for (b, t) in [(Block::Y, &target.y), (Block::U, &target.u), (Block::W, &target.w)] {
        if let Some(t) = t {
            if t.len() != stack.depth {
                return Err(dim_err("target window", stack.depth, t.len()));
            }
            if t.dim() * t.len() != stack.block(b).nrows() {
                return Err(dim_err("target channels", stack.block(b).nrows(), t.dim() * t.len()));
            }
            blocks.push(b);
            parts.push(t);
        }
    }
    let p = parts.first().map_or(0, |t| t.p());
    if parts.iter().any(|t| t.p() != p) {
        return Err(Error::BasisMismatch("target signals disagree on p".into()));
    }
    let m = stack.stacked(&blocks);
    let m_pinv = linalg::pinv(&m);
    let mut g = DMatrix::zeros(p, stack.cols());
    let mut residuals = Vec::with_capacity(p);
    for i in 0..p {
        let rhs = concat(&parts.iter().map(|t| stack_index(t, i)).collect::<Vec<_>>());
        let gi = &m_pinv * &rhs;
        residuals.push((&m * &gi - &rhs).amax());
        g.row_mut(i).copy_from(&gi.transpose());
    }
    Ok(SelectorPce { g, residuals })
}

/// Image of a selector: window coefficients, plus the extended input window.
#[derive(Debug, Clone, PartialEq)]
pub struct StackImage {
    pub y: CoeffTrajectory,
    pub u: CoeffTrajectory,
    pub w: CoeffTrajectory,
    pub u_ext: CoeffTrajectory,
    pub w_ext: CoeffTrajectory,
}

fn image(block: &DMatrix<f64>, g: &DMatrix<f64>, d: usize) -> CoeffTrajectory {
    let seqs: Vec<Vec<DVector<f64>>> = (0..g.nrows()).map(|i| unstack(&(block * g.row(i).transpose()), d)).collect();
    if d == 0 {
        return CoeffTrajectory::zeros(g.nrows(), 0, 0);
    }
    CoeffTrajectory::from_indices(&seqs)
}

pub fn trajectory_from_selector(stack: &HankelStack, g: &DMatrix<f64>) -> Result<StackImage> {
    if g.ncols() != stack.cols() {
        return Err(dim_err("selector columns", stack.cols(), g.ncols()));
    }
    Ok(StackImage {
        y: image(&stack.y, g, stack.ny),
        u: image(&stack.u, g, stack.nu),
        w: image_w(&stack.w, g, stack.nw, stack.depth),
        u_ext: image(&stack.u_ext, g, stack.nu),
        w_ext: image_w(&stack.w_ext, g, stack.nw, stack.ext_depth()),
    })
}

fn image_w(block: &DMatrix<f64>, g: &DMatrix<f64>, nw: usize, depth: usize) -> CoeffTrajectory {
    if nw == 0 {
        CoeffTrajectory::zeros(g.nrows(), 0, depth)
    } else {
        image(block, g, nw)
    }
}
