//! Hankel matrices of recorded data span every window trajectory: a random
//! selector maps to coefficient trajectories that satisfy the dynamics, and
//! the trajectory maps back to a selector with the same image. Descriptor
//! stacks also fix the inputs `delta - 1` steps past the window.

use ddpce::experiment::{collect_data, ExperimentConfig, Layout, MEMBERSHIP_TOL};
use ddpce::hankel::{reconstruct_selector, trajectory_from_selector, validate_membership, HankelStack, WindowTarget};
use nalgebra::DMatrix;
use rand::Rng;

fn main() -> ddpce::Result<()> {
    for cfg in [ExperimentConfig::scalar(), ExperimentConfig::descriptor()] {
        let lay = Layout::new(&cfg)?;
        let ds = collect_data(&cfg)?;
        let stack = HankelStack::build(&ds.data, lay.window, lay.stack_kind)?;
        println!(
            "{}: T = {}, L = {}, {} columns, (u, w) excitation order {} rank {}/{}",
            cfg.name,
            ds.data.horizon(),
            lay.window,
            stack.cols(),
            ds.certificate.order,
            ds.certificate.rank,
            ds.certificate.required
        );

        let mut rng = ddpce::pce::sub_rng(42, 0);
        let p = 5;
        let g = DMatrix::from_fn(p, stack.cols(), |_, _| rng.random_range(-1.0..1.0) / stack.cols() as f64);
        let img = trajectory_from_selector(&stack, &g)?;
        let member = validate_membership(&lay.model, &img.u_ext, &img.w_ext, &img.y, None, MEMBERSHIP_TOL)?;
        let target = WindowTarget { y: Some(img.y.clone()), u: Some(img.u.clone()), w: Some(img.w.clone()) };
        let sel = reconstruct_selector(&stack, &target)?;
        let back = trajectory_from_selector(&stack, &sel.g)?;
        let again = validate_membership(&lay.model, &back.u_ext, &back.w_ext, &back.y, None, MEMBERSHIP_TOL)?;
        println!(
            "  membership {:.2e}, reconstruction residual {:.2e}, round trip {:.2e}",
            member.max_residual,
            sel.max_residual(),
            back.y.max_abs_diff(&img.y).max(back.u.max_abs_diff(&img.u))
        );
        println!(
            "  {} input steps per window; the reconstructed selector's own inputs satisfy the dynamics to {:.2e}",
            back.u_ext.len(),
            again.max_residual
        );
    }
    Ok(())
}
