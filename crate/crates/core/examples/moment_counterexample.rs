//! Matching means and variances is not enough: an i.i.d. process satisfies the
//! moment recursion of `sqrt(2) x+ = x + v` exactly, yet none of its paths is
//! a trajectory of the system.

use ddpce::pce::moment_counterexample_demo;

fn main() {
    let r = moment_counterexample_demo(1, 10_000, 10);
    println!("moment recursion residual: {:e}", r.moment_residual);
    for (k, v) in r.var_delta.iter().enumerate() {
        println!("k = {k}: Var[Delta_k] = {v:.4}");
    }
    println!(
        "{} of {} paths satisfy the dynamics (smallest residual {:.3})",
        r.paths_satisfying, r.samples, r.smallest_path_residual
    );
}
