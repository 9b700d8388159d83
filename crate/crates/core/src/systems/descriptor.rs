//! Descriptor systems `E x+ = A x + B u + F w` and their quasi-Weierstrass form.
//!
//! The decomposition is computed from the Wong sequences
//!
//! ```text
//! V_0 = R^n,  V_{i+1} = A^{-1}(E V_i)        (limit V*, dim n_J)
//! W_0 = {0},  W_{i+1} = E^{-1}(A W_i)        (limit W*, dim n_N)
//! ```
//!
//! with `P = [V* | W*]` and `S = [E V* | A W*]^{-1}`, which gives
//! `S E P = diag(I, N)` and `S A P = diag(J, I)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_inputs, stack_v, ExplicitSystem, RealTrajectory};
use crate::error::{dim_err, Error, Result};
use crate::linalg;

/// Zero test used along nilpotency chains.
pub const CHAIN_ATOL: f64 = 1e-12;
const REGULARITY_SEED: u64 = 0x5eed_9e9c;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSystem {
    pub e: DMatrix<f64>,
    pub sys: ExplicitSystem,
}

impl DescriptorSystem {
    pub fn new(e: DMatrix<f64>, sys: ExplicitSystem) -> Result<Self> {
        if e.shape() != sys.a.shape() {
            return Err(dim_err("E", format!("{:?}", sys.a.shape()), format!("{:?}", e.shape())));
        }
        if !is_regular(&e, &sys.a) {
            return Err(Error::IrregularPencil);
        }
        Ok(Self { e, sys })
    }

    /// Descriptor example with a fourth-order pencil of index two.
    pub fn fourth_order_example() -> Self {
        let e = DMatrix::from_row_slice(
            4,
            4,
            &[0., 0., 1., 0., 1., 2., 0., 2., 2., 3., 1., 3., 1., 2., 0., 2.],
        );
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[1., 1., 0., 2., 0., 2., 1., 1., 1., 4., 2., 3., -1., 1., 1., 0.],
        );
        let b = DMatrix::from_column_slice(4, 1, &[-1., 2., 2., 3.]);
        let f = DMatrix::from_column_slice(4, 1, &[1., 2., 3., 2.]);
        let c = DMatrix::from_row_slice(2, 4, &[1., 2., 1., 2., 0., 1., 0., 1.]);
        let d = DMatrix::zeros(2, 1);
        let h = DMatrix::zeros(2, 1);
        let sys = ExplicitSystem::new(a, b, f, c, d, h).expect("example dimensions");
        Self::new(e, sys).expect("example pencil is regular")
    }
}

/// `det(lambda E - A)` is a polynomial of degree at most n, so full rank at any
/// one of n+1 distinct sample points proves regularity.
pub fn is_regular(e: &DMatrix<f64>, a: &DMatrix<f64>) -> bool {
    let n = e.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(REGULARITY_SEED);
    (0..=n).any(|_| {
        let lambda: f64 = rng.random_range(-2.0..2.0);
        linalg::rank(&(e * lambda - a)) == n
    })
}

/// `{x : M x in im(R)}` as an orthonormal basis.
fn preimage(m: &DMatrix<f64>, range: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let stacked = linalg::hstack(&[m, &(-range)]);
    let kernel = linalg::null_space(&stacked);
    linalg::col_space(&kernel.rows(0, n).into_owned())
}

/// The transformation and diagonal blocks of the quasi-Weierstrass form.
#[derive(Debug, Clone)]
pub struct QwCore {
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub n_j: usize,
    pub n_n: usize,
}

pub fn quasi_weierstrass(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<QwCore> {
    let n = e.nrows();
    if e.shape() != (n, n) || a.shape() != (n, n) {
        return Err(dim_err("pencil", "square E, A of equal size", format!("{:?} / {:?}", e.shape(), a.shape())));
    }
    if !is_regular(e, a) {
        return Err(Error::IrregularPencil);
    }

    let mut v = DMatrix::<f64>::identity(n, n);
    loop {
        let next = preimage(a, &(e * &v));
        let done = next.ncols() == v.ncols();
        v = next;
        if done {
            break;
        }
    }
    let mut w = DMatrix::<f64>::zeros(n, 0);
    loop {
        let next = preimage(e, &(a * &w));
        let done = next.ncols() == w.ncols();
        w = next;
        if done {
            break;
        }
    }

    let (n_j, n_n) = (v.ncols(), w.ncols());
    if n_j + n_n != n {
        return Err(Error::IrregularPencil);
    }
    let p = linalg::hstack(&[&v, &w]);
    let s = linalg::hstack(&[&(e * &v), &(a * &w)])
        .try_inverse()
        .ok_or(Error::IrregularPencil)?;
    let sap = &s * a * &p;
    let sep = &s * e * &p;
    let j = sap.view((0, 0), (n_j, n_j)).into_owned();
    let nn = sep.view((n_j, n_j), (n_n, n_n)).into_owned();
    Ok(QwCore { p, s, j, n: nn, n_j, n_n })
}

/// `min { i >= 1 : N^i B_N = 0 }`, or 1 when there is no algebraic part or
/// `B_N = 0`.
pub fn structured_nilpotency_index(n: &DMatrix<f64>, b_n: &DMatrix<f64>) -> usize {
    if n.nrows() == 0 || linalg::is_zero(b_n, CHAIN_ATOL) {
        return 1;
    }
    let mut chain = b_n.clone();
    for i in 1..=n.nrows() {
        chain = n * chain;
        if linalg::is_zero(&chain, CHAIN_ATOL) {
            return i;
        }
    }
    // N nilpotent implies N^{n_N} = 0; reaching here means N was not nilpotent
    // to tolerance.
    n.nrows()
}

/// `min { i : N^i = 0 }`; 1 for an empty `N`.
pub fn nilpotency_index(n: &DMatrix<f64>) -> usize {
    if n.nrows() == 0 {
        return 1;
    }
    let mut pow = n.clone();
    for i in 1..=n.nrows() {
        if linalg::is_zero(&pow, CHAIN_ATOL) {
            return i;
        }
        pow = n * pow;
    }
    n.nrows()
}

/// A descriptor system expressed in quasi-Weierstrass coordinates `z = P^{-1} x`.
#[derive(Debug, Clone)]
pub struct QuasiWeierstrass {
    pub p: DMatrix<f64>,
    pub p_inv: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub b_j: DMatrix<f64>,
    pub b_n: DMatrix<f64>,
    pub f_j: DMatrix<f64>,
    pub f_n: DMatrix<f64>,
    pub c_j: DMatrix<f64>,
    pub c_n: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub n_j: usize,
    pub n_n: usize,
    /// Structured nilpotency index with respect to the full input `v = (u, w)`.
    pub delta: usize,
    /// Nilpotency index of `N`.
    pub delta_hat: usize,
}

impl QuasiWeierstrass {
    pub fn from_system(ds: &DescriptorSystem) -> Result<Self> {
        let core = quasi_weierstrass(&ds.e, &ds.sys.a)?;
        Ok(Self::from_core(core, &ds.sys))
    }

    /// Wraps an explicit system (`E = I`).
    pub fn from_explicit(sys: &ExplicitSystem) -> Result<Self> {
        let e = DMatrix::identity(sys.nx(), sys.nx());
        Self::from_system(&DescriptorSystem::new(e, sys.clone())?)
    }

    pub fn from_core(core: QwCore, sys: &ExplicitSystem) -> Self {
        let QwCore { p, s, j, n, n_j, n_n } = core;
        let sb = &s * &sys.b;
        let sf = &s * &sys.f;
        let cp = &sys.c * &p;
        let b_j = sb.rows(0, n_j).into_owned();
        let b_n = sb.rows(n_j, n_n).into_owned();
        let f_j = sf.rows(0, n_j).into_owned();
        let f_n = sf.rows(n_j, n_n).into_owned();
        let c_j = cp.columns(0, n_j).into_owned();
        let c_n = cp.columns(n_j, n_n).into_owned();
        let b_tilde_n = linalg::hstack(&[&b_n, &f_n]);
        let delta = structured_nilpotency_index(&n, &b_tilde_n);
        let delta_hat = nilpotency_index(&n);
        let p_inv = p.clone().try_inverse().expect("P from a regular pencil is invertible");
        Self {
            p,
            p_inv,
            s,
            j,
            n,
            b_j,
            b_n,
            f_j,
            f_n,
            c_j,
            c_n,
            d: sys.d.clone(),
            h: sys.h.clone(),
            n_j,
            n_n,
            delta,
            delta_hat,
        }
    }

    pub fn nx(&self) -> usize {
        self.n_j + self.n_n
    }
    pub fn nu(&self) -> usize {
        self.b_j.ncols()
    }
    pub fn nw(&self) -> usize {
        self.f_j.ncols()
    }
    pub fn ny(&self) -> usize {
        self.c_j.nrows()
    }

    pub fn b_tilde_j(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.b_j, &self.f_j])
    }
    pub fn b_tilde_n(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.b_n, &self.f_n])
    }
    pub fn d_tilde(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.d, &self.h])
    }

    /// Dynamic-part coordinates of a physical state.
    pub fn z_j_of(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.p_inv * x).rows(0, self.n_j).into_owned()
    }

    /// `[B_N, N B_N, ..., N^{delta-1} B_N]` over the full input.
    fn algebraic_reach(&self) -> DMatrix<f64> {
        let bn = self.b_tilde_n();
        let mut blocks = Vec::with_capacity(self.delta);
        let mut cur = bn;
        for _ in 0..self.delta {
            let next = &self.n * &cur;
            blocks.push(cur);
            cur = next;
        }
        let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
        linalg::hstack(&refs)
    }
}

/// Simulates from the dynamic-part initial value `z0J`. With `M` input samples
/// the result covers `M - (delta - 1)` steps.
pub fn simulate_descriptor(
    qw: &QuasiWeierstrass,
    z0j: &DVector<f64>,
    u: &[DVector<f64>],
    w: &[DVector<f64>],
) -> Result<RealTrajectory> {
    if z0j.len() != qw.n_j {
        return Err(dim_err("z0J", qw.n_j, z0j.len()));
    }
    let w = check_inputs(qw.nu(), qw.nw(), u, w)?;
    if u.len() < qw.delta {
        return Err(Error::InsufficientFutureInputs { needed: qw.delta, got: u.len() });
    }
    let horizon = u.len() + 1 - qw.delta;
    let v: Vec<DVector<f64>> = u.iter().zip(&w).map(|(a, b)| stack_v(a, b)).collect();
    let btj = qw.b_tilde_j();
    let reach = qw.algebraic_reach();
    let dt = qw.d_tilde();
    let nv = qw.nu() + qw.nw();

    let mut zj = z0j.clone();
    let mut xs = Vec::with_capacity(horizon);
    let mut ys = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let mut window = DVector::zeros(nv * qw.delta);
        for i in 0..qw.delta {
            window.rows_mut(i * nv, nv).copy_from(&v[k + i]);
        }
        let zn = -(&reach * window);
        let mut z = DVector::zeros(qw.nx());
        z.rows_mut(0, qw.n_j).copy_from(&zj);
        z.rows_mut(qw.n_j, qw.n_n).copy_from(&zn);
        xs.push(&qw.p * &z);
        ys.push(&qw.c_j * &zj + &qw.c_n * &zn + &dt * &v[k]);
        zj = &qw.j * &zj + &btj * &v[k];
    }
    Ok(RealTrajectory {
        x: Some(xs),
        u: u[..horizon].to_vec(),
        w: w[..horizon].to_vec(),
        y: ys,
    })
}

fn kalman_controllability(j: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        let next = j * &cur;
        blocks.push(cur);
        cur = next;
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    linalg::hstack(&refs)
}

pub fn is_r_controllable(qw: &QuasiWeierstrass) -> bool {
    if qw.n_j == 0 {
        return true;
    }
    linalg::rank(&kalman_controllability(&qw.j, &qw.b_j)) == qw.n_j
}

pub fn is_r_observable(qw: &QuasiWeierstrass) -> bool {
    if qw.n_j == 0 {
        return true;
    }
    let obs = kalman_controllability(&qw.j.transpose(), &qw.c_j.transpose());
    linalg::rank(&obs) == qw.n_j
}

/// `P diag(I, [B_N ... N^{delta-1} B_N])`; its column span is the set of
/// consistent initial states. Uses the full input `v = (u, w)`.
pub fn consistent_initial_basis(qw: &QuasiWeierstrass) -> DMatrix<f64> {
    let reach = if qw.n_n == 0 {
        DMatrix::zeros(0, 0)
    } else {
        qw.algebraic_reach()
    };
    let ident = DMatrix::identity(qw.n_j, qw.n_j);
    &qw.p * linalg::block_diag(&ident, &reach)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(core: &QwCore, e: &DMatrix<f64>, a: &DMatrix<f64>) -> (f64, f64) {
        let n = e.nrows();
        let ide = linalg::block_diag(&DMatrix::identity(core.n_j, core.n_j), &core.n);
        let ida = linalg::block_diag(&core.j, &DMatrix::identity(core.n_n, core.n_n));
        let scale = 1.0 + e.norm() + a.norm();
        let _ = n;
        (
            (&core.s * e * &core.p - ide).norm() / scale,
            (&core.s * a * &core.p - ida).norm() / scale,
        )
    }

    #[test]
    fn invertible_e_has_no_algebraic_part() {
        let e = DMatrix::identity(3, 3);
        let a = DMatrix::from_row_slice(3, 3, &[1., 2., 0., 0., 1., 3., 1., 0., 1.]);
        let core = quasi_weierstrass(&e, &a).unwrap();
        assert_eq!((core.n_j, core.n_n), (3, 0));
        let (re, ra) = rel_err(&core, &e, &a);
        assert!(re < 1e-10 && ra < 1e-10);
        // J is similar to A: same trace and determinant.
        assert!((core.j.trace() - a.trace()).abs() < 1e-10);
        assert!((core.j.determinant() - a.determinant()).abs() < 1e-10);
    }

    #[test]
    fn fourth_order_example_blocks() {
        let ds = DescriptorSystem::fourth_order_example();
        let core = quasi_weierstrass(&ds.e, &ds.sys.a).unwrap();
        assert_eq!((core.n_j, core.n_n), (2, 2));
        let (re, ra) = rel_err(&core, &ds.e, &ds.sys.a);
        assert!(re < 1e-10, "{re}");
        assert!(ra < 1e-10, "{ra}");
    }

    #[test]
    fn zero_pencil_is_irregular() {
        let z = DMatrix::zeros(1, 1);
        assert!(matches!(quasi_weierstrass(&z, &z), Err(Error::IrregularPencil)));
    }

    #[test]
    fn shift_example_indices() {
        let n = DMatrix::from_row_slice(
            4,
            4,
            &[0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0.],
        );
        let b_n = DMatrix::from_row_slice(4, 2, &[1., 0., 0., 1., 0., 0., 0., 0.]);
        assert_eq!(structured_nilpotency_index(&n, &b_n), 2);
        assert_eq!(nilpotency_index(&n), 4);
        assert_eq!(structured_nilpotency_index(&n, &DMatrix::zeros(4, 2)), 1);
    }

    #[test]
    fn example_indices_and_structure() {
        let qw = QuasiWeierstrass::from_system(&DescriptorSystem::fourth_order_example()).unwrap();
        assert_eq!(qw.delta, 2);
        assert_eq!(qw.delta_hat, 2);
        assert!(linalg::is_zero(&qw.f_n, 1e-12));
        assert!(is_r_controllable(&qw));
        assert!(is_r_observable(&qw));
    }

    #[test]
    fn zero_b_j_is_not_controllable() {
        let mut qw = QuasiWeierstrass::from_system(&DescriptorSystem::fourth_order_example()).unwrap();
        qw.b_j.fill(0.0);
        assert!(!is_r_controllable(&qw));
    }

    #[test]
    fn short_input_window_is_rejected() {
        let qw = QuasiWeierstrass::from_system(&DescriptorSystem::fourth_order_example()).unwrap();
        let u = vec![DVector::zeros(1)];
        let err = simulate_descriptor(&qw, &DVector::zeros(2), &u, &u).unwrap_err();
        assert!(matches!(err, Error::InsufficientFutureInputs { needed: 2, got: 1 }));
    }

    #[test]
    fn impulse_response_by_hand() {
        // C_N vanishes for this pencil and C_J B_J = (1, 1), so an input pulse at
        // k = 0 leaves y_0 = 0 and gives y_1 = (1, 1).
        let qw = QuasiWeierstrass::from_system(&DescriptorSystem::fourth_order_example()).unwrap();
        let mut u = vec![DVector::zeros(1); 5];
        u[0][0] = 1.0;
        let w = vec![DVector::zeros(1); 5];
        let t = simulate_descriptor(&qw, &DVector::zeros(2), &u, &w).unwrap();
        assert_eq!(t.horizon(), 4);
        assert!(t.y[0].norm() < 1e-12);
        assert!((&t.y[1] - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-12);
    }
}
