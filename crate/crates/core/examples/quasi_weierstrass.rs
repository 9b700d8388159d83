//! Quasi-Weierstrass form of the fourth-order descriptor plant: block sizes,
//! nilpotency indices and the residuals of `S E P = diag(I, N)`,
//! `S A P = diag(J, I)`.

use ddpce::linalg::block_diag;
use ddpce::systems::{is_r_controllable, is_r_observable, quasi_weierstrass, DescriptorSystem, QuasiWeierstrass};
use nalgebra::DMatrix;

fn main() -> ddpce::Result<()> {
    let ds = DescriptorSystem::fourth_order_example();
    let core = quasi_weierstrass(&ds.e, &ds.sys.a)?;
    let (nj, nn) = (core.n_j, core.n_n);
    let res_e = (&core.s * &ds.e * &core.p - block_diag(&DMatrix::identity(nj, nj), &core.n)).amax();
    let res_a = (&core.s * &ds.sys.a * &core.p - block_diag(&core.j, &DMatrix::identity(nn, nn))).amax();

    let qw = QuasiWeierstrass::from_system(&ds)?;
    println!("n_J = {nj}, n_N = {nn}");
    println!("delta (structured, v = (u, w)) = {}, nilpotency of N = {}", qw.delta, qw.delta_hat);
    println!("J = {:.6}", core.j);
    println!("N = {:.6}", core.n);
    println!("max |S E P - diag(I, N)| = {res_e:.2e}");
    println!("max |S A P - diag(J, I)| = {res_a:.2e}");
    println!("max |F_N| = {:.2e}", qw.f_n.amax());
    println!("R-controllable: {}, R-observable: {}", is_r_controllable(&qw), is_r_observable(&qw));
    Ok(())
}
