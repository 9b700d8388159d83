//! Dense convex QP solvers: an equality-constrained KKT solve and an ADMM
//! splitting for nonnegative and second-order-cone rows.

mod triplet;

pub use triplet::{read_triplets, write_triplets};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;

/// Relative cutoff for dropping linearly dependent equality rows.
pub const ROW_RTOL: f64 = 1e-10;
pub const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Cone {
    /// Every row nonnegative.
    NonNeg { start: usize, len: usize },
    /// `(t, z)` with `t >= |z|`; `t` is the first row.
    Soc { start: usize, len: usize },
}

/// `min 1/2 x'Hx + f'x + c0  s.t.  A x = b,  M x + c in K`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub c0: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
    pub cones: Vec<Cone>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, n),
            f: DVector::zeros(n),
            c0: 0.0,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            m: DMatrix::zeros(0, n),
            c: DVector::zeros(0),
            cones: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x) + self.c0
    }

    pub fn has_cones(&self) -> bool {
        !self.cones.is_empty()
    }

    /// Appends equality rows.
    pub fn push_eq(&mut self, rows: &DMatrix<f64>, rhs: &DVector<f64>) {
        self.a_eq = linalg::vstack(&[&self.a_eq, rows]);
        self.b_eq = stack(&self.b_eq, rhs);
    }

    /// Appends a cone block `rows x + offset in cone`.
    pub fn push_cone(&mut self, rows: &DMatrix<f64>, offset: &DVector<f64>, soc: bool) {
        let start = self.m.nrows();
        let len = rows.nrows();
        self.m = linalg::vstack(&[&self.m, rows]);
        self.c = stack(&self.c, offset);
        self.cones.push(if soc { Cone::Soc { start, len } } else { Cone::NonNeg { start, len } });
    }

    /// Largest violation of the cone rows.
    pub fn cone_violation(&self, x: &DVector<f64>) -> f64 {
        let v = &self.m * x + &self.c;
        let p = project(&v, &self.cones);
        (v - p).amax()
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    MaxIter,
    Singular,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `|H x + f + A'nu + M'lambda|` over `1 +` the largest of its terms.
    pub stationarity: f64,
    /// Equality and cone feasibility, relative.
    pub primal: f64,
    /// `|lambda' s|` at the cone rows.
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub nu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub objective: f64,
    pub status: Status,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// Equality residuals relative to the data scale, as used for the Optimal check.
pub fn kkt_residuals(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    nu: &DVector<f64>,
) -> (f64, f64) {
    let (hx, atn) = (h * x, a.transpose() * nu);
    let stat = (&hx + f + &atn).norm() / (1.0 + hx.norm().max(f.norm()).max(atn.norm()));
    let feas = if a.nrows() == 0 { 0.0 } else { (a * x - b).norm() / (1.0 + b.norm()) };
    (stat, feas)
}

/// Equality-constrained QP by null-space elimination: `x = x_p + Z z` with
/// `A x_p = b` and `A Z = 0`, then the reduced (possibly singular) Hessian
/// system is solved in the minimum-norm sense. Dependent rows of `A` are
/// dropped first. `Singular` means the constraints are inconsistent or the
/// reduced problem is unbounded.
pub fn solve_eq_qp(h: &DMatrix<f64>, f: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> QpSolution {
    let n = f.len();
    let kept = linalg::independent_rows(a, ROW_RTOL);
    let ar = linalg::select_rows(a, &kept);
    let br = linalg::select_entries(b, &kept);
    let xp = linalg::pinv_solve(&ar, &br);
    let z = if ar.nrows() == 0 { DMatrix::identity(n, n) } else { linalg::null_space(&ar) };
    let hz = h * &z;
    let hr = z.transpose() * &hz;
    let fr = z.transpose() * (h * &xp + f);
    let mut zeta = -linalg::pinv_solve(&hr, &fr);
    let r = &hr * &zeta + &fr;
    zeta -= linalg::pinv_solve(&hr, &r);
    let x = &xp + &z * zeta;
    let grad = h * &x + f;
    let nu_r = multipliers(&ar, &grad);
    let mut nu = DVector::zeros(a.nrows());
    for (j, &r) in kept.iter().enumerate() {
        nu[r] = nu_r[j];
    }
    let (stationarity, primal) = kkt_residuals(h, f, a, b, &x, &nu);
    let status = if stationarity <= KKT_TOL && primal <= KKT_TOL { Status::Optimal } else { Status::Singular };
    let objective = 0.5 * x.dot(&(h * &x)) + f.dot(&x);
    QpSolution {
        x,
        nu,
        lambda: DVector::zeros(0),
        objective,
        status,
        residuals: Residuals { stationarity, primal, complementarity: 0.0 },
        iterations: 1,
    }
}

/// Least-squares `A' nu = -grad` for full-row-rank `A`, by QR without a
/// rank cutoff.
fn multipliers(ar: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    if ar.nrows() == 0 {
        return DVector::zeros(0);
    }
    let at = ar.transpose();
    let qr = at.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let solve = |g: &DVector<f64>| r.solve_upper_triangular(&-(q.transpose() * g));
    let Some(mut nu) = solve(grad) else {
        return -linalg::pinv_solve(&at, grad);
    };
    for _ in 0..2 {
        match solve(&(grad + &at * &nu)) {
            Some(d) => nu += d,
            None => break,
        }
    }
    nu
}

fn project_soc(v: &DVector<f64>) -> DVector<f64> {
    let t = v[0];
    let z = v.rows(1, v.len() - 1);
    let nz = z.norm();
    if nz <= t {
        v.clone()
    } else if nz <= -t {
        DVector::zeros(v.len())
    } else {
        let a = 0.5 * (t + nz);
        let mut out = DVector::zeros(v.len());
        out[0] = a;
        out.rows_mut(1, v.len() - 1).copy_from(&(z * (a / nz)));
        out
    }
}

/// Euclidean projection onto the product cone.
pub fn project(v: &DVector<f64>, cones: &[Cone]) -> DVector<f64> {
    let mut out = v.clone();
    for cone in cones {
        match *cone {
            Cone::NonNeg { start, len } => {
                for i in start..start + len {
                    out[i] = out[i].max(0.0);
                }
            }
            Cone::Soc { start, len } => {
                let seg = project_soc(&v.rows(start, len).into_owned());
                out.rows_mut(start, len).copy_from(&seg);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Residual balancing: rescale `rho` by `factor` when the residual ratio
    /// exceeds `ratio`.
    pub factor: f64,
    pub ratio: f64,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self { rho: 1.0, sigma: 1e-6, tol: 1e-7, max_iter: 50_000, factor: 2.0, ratio: 10.0 }
    }
}

struct XStep {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl XStep {
    fn new(qp: &QpProblem, ar: &DMatrix<f64>, rho: f64, sigma: f64) -> Self {
        let n = qp.n();
        let m = ar.nrows();
        let mut kkt = DMatrix::zeros(n + m, n + m);
        let mut top = &qp.h + qp.m.transpose() * &qp.m * rho;
        for i in 0..n {
            top[(i, i)] += sigma;
        }
        kkt.view_mut((0, 0), (n, n)).copy_from(&top);
        kkt.view_mut((0, n), (n, m)).copy_from(&ar.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(ar);
        Self { lu: kkt.lu(), n }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let sol = self.lu.solve(rhs)?;
        Some((sol.rows(0, self.n).into_owned(), sol.rows(self.n, sol.len() - self.n).into_owned()))
    }
}

/// ADMM on `M x + c = s`, `s in K`, with the equality rows kept inside every
/// x-update. A small proximal term makes each x-update uniquely solvable.
pub fn solve_qp_splitting(qp: &QpProblem, settings: &AdmmSettings) -> QpSolution {
    if !qp.has_cones() {
        let mut sol = solve_eq_qp(&qp.h, &qp.f, &qp.a_eq, &qp.b_eq);
        sol.objective += qp.c0;
        return sol;
    }
    let n = qp.n();
    let kept = linalg::independent_rows(&qp.a_eq, ROW_RTOL);
    let ar = linalg::select_rows(&qp.a_eq, &kept);
    let br = linalg::select_entries(&qp.b_eq, &kept);
    let mut rho = settings.rho;
    let mut step = XStep::new(qp, &ar, rho, settings.sigma);

    let mut x = DVector::zeros(n);
    let mut s = project(&qp.c, &qp.cones);
    let mut lambda = DVector::zeros(qp.m.nrows());
    let mut nu_r = DVector::zeros(ar.nrows());
    let mut status = Status::MaxIter;
    let mut iterations = settings.max_iter;
    let mt = qp.m.transpose();

    for it in 0..settings.max_iter {
        let rhs_top = -&qp.f + &x * settings.sigma - &mt * (&qp.c - &s + &lambda / rho) * rho;
        let Some((xn, nun)) = step.solve(&stack(&rhs_top, &br)) else {
            status = Status::Singular;
            iterations = it;
            break;
        };
        x = xn;
        nu_r = nun;
        let mx = &qp.m * &x + &qp.c;
        let s_prev = s.clone();
        s = project(&(&mx + &lambda / rho), &qp.cones);
        lambda += (&mx - &s) * rho;

        let r_prim = (&mx - &s).norm();
        let r_dual = (&mt * (&s - &s_prev)).norm() * rho;
        let prim_scale = 1.0 + mx.norm().max(s.norm()).max(qp.c.norm());
        let dual_scale = 1.0 + (&qp.h * &x).norm().max(qp.f.norm()).max((&mt * &lambda).norm());
        if r_prim <= settings.tol * prim_scale && r_dual <= settings.tol * dual_scale && it > 0 {
            status = Status::Optimal;
            iterations = it + 1;
            break;
        }
        if it % 25 == 24 {
            let (rp, rd) = (r_prim / prim_scale, r_dual / dual_scale);
            let new_rho = if rp > settings.ratio * rd {
                rho * settings.factor
            } else if rd > settings.ratio * rp {
                rho / settings.factor
            } else {
                rho
            };
            if new_rho != rho {
                rho = new_rho;
                step = XStep::new(qp, &ar, rho, settings.sigma);
            }
        }
    }

    let mut nu = DVector::zeros(qp.a_eq.nrows());
    for (j, &r) in kept.iter().enumerate() {
        nu[r] = nu_r[j];
    }
    let grad = &qp.h * &x + &qp.f + qp.a_eq.transpose() * &nu + &mt * &lambda;
    let terms = [(&qp.h * &x).norm(), qp.f.norm(), (qp.a_eq.transpose() * &nu).norm(), (&mt * &lambda).norm()];
    let stationarity = grad.norm() / (1.0 + terms.iter().copied().fold(0.0, f64::max));
    let eq = if qp.a_eq.nrows() == 0 { 0.0 } else { (&qp.a_eq * &x - &qp.b_eq).norm() / (1.0 + qp.b_eq.norm()) };
    let primal = eq.max(qp.cone_violation(&x) / (1.0 + qp.c.norm()));
    let complementarity = lambda.dot(&s).abs();
    let admm = QpSolution {
        objective: qp.objective(&x),
        x,
        nu,
        lambda,
        status,
        residuals: Residuals { stationarity, primal, complementarity },
        iterations,
    };
    match polish(qp, &admm) {
        Some(p) => p,
        None => admm,
    }
}

/// Re-solves with the nonnegative rows ADMM found active held as equalities.
/// Kept only when the result passes the full KKT check.
fn polish(qp: &QpProblem, admm: &QpSolution) -> Option<QpSolution> {
    if qp.cones.iter().any(|c| matches!(c, Cone::Soc { .. })) || admm.status == Status::Singular {
        return None;
    }
    let v = &qp.m * &admm.x + &qp.c;
    let active: Vec<usize> = (0..v.len()).filter(|&j| -admm.lambda[j] > v[j]).collect();
    let m_act = linalg::select_rows(&qp.m, &active);
    let a = linalg::vstack(&[&qp.a_eq, &m_act]);
    let b = stack(&qp.b_eq, &(-linalg::select_entries(&qp.c, &active)));
    let eq = solve_eq_qp(&qp.h, &qp.f, &a, &b);
    if eq.status != Status::Optimal {
        return None;
    }
    let scale = 1.0 + qp.c.norm();
    let x = eq.x;
    let cone_viol = qp.cone_violation(&x);
    let ne = qp.a_eq.nrows();
    // Multipliers of dependent rows are not unique; take the exact one closest
    // to the (sign-correct) ADMM estimate.
    let g = a.transpose();
    let null = linalg::null_space(&g);
    let mut nu_all = eq.nu.clone();
    if null.ncols() > 0 && !active.is_empty() {
        let sel = null.rows(ne, active.len()).into_owned();
        let target = DVector::from_iterator(active.len(), active.iter().map(|&r| admm.lambda[r]));
        let t = linalg::pinv_solve(&sel, &(target - nu_all.rows(ne, active.len())));
        nu_all += &null * t;
    }
    let (stationarity, _) = kkt_residuals(&qp.h, &qp.f, &a, &b, &x, &nu_all);
    let mut lambda = DVector::zeros(qp.m.nrows());
    for (j, &r) in active.iter().enumerate() {
        lambda[r] = nu_all[ne + j];
    }
    let dual_scale = 1.0 + qp.f.norm();
    if cone_viol > KKT_TOL * scale || lambda.max() > KKT_TOL * dual_scale || stationarity > KKT_TOL {
        return None;
    }
    let objective = qp.objective(&x);
    let nu = nu_all.rows(0, ne).into_owned();
    let s = project(&(&qp.m * &x + &qp.c), &qp.cones);
    let complementarity = lambda.dot(&s).abs();
    let primal = eq.residuals.primal.max(cone_viol / scale);
    Some(QpSolution {
        objective,
        x,
        nu,
        lambda,
        status: Status::Optimal,
        residuals: Residuals { stationarity, primal, complementarity },
        iterations: admm.iterations,
    })
}

/// Dense brute-force reference: eliminate `A x = b` through a QR-based null
/// space and minimise the reduced quadratic by least squares.
pub fn eliminate_and_solve(h: &DMatrix<f64>, f: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = f.len();
    if a.nrows() == 0 {
        return linalg::pinv_solve(h, &(-f));
    }
    let qr = a.transpose().col_piv_qr();
    let r = qr.r();
    let r00 = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(r.ncols()))
        .filter(|&i| r[(i, i)].abs() > 1e-10 * r00.max(f64::MIN_POSITIVE))
        .count();
    let q = qr.q().columns(0, rank).into_owned();
    let aq = a * &q;
    let y = (aq.transpose() * &aq)
        .cholesky()
        .map(|c| c.solve(&(aq.transpose() * b)))
        .unwrap_or_else(|| DVector::zeros(rank));
    let x_part = &q * y;
    let full_q = linalg::hstack(&[&q, &DMatrix::identity(n, n)]).qr().q();
    let z = full_q.columns(rank, n - rank).into_owned();
    let hz = z.transpose() * h * &z;
    let gz = z.transpose() * (h * &x_part + f);
    let zeta = linalg::pinv_solve(&hz, &(-gz));
    x_part + z * zeta
}
