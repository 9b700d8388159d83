//! Stochastic optimal control of the unstable scalar plant from recorded data.
//! Pass a directory to also write the report files there.

use ddpce::experiment::{run_scalar_example, write_report, ExperimentConfig};

fn main() -> ddpce::Result<()> {
    let cfg = ExperimentConfig::scalar();
    let r = run_scalar_example(&cfg)?;
    let d = &r.diag;
    println!(
        "{:?}: objective {:.6}, {} Hankel columns, basis {}, x0 = {:.4}",
        d.status, d.objective, d.hankel_columns, d.basis_size, d.initial.state[0]
    );
    println!("{:>3} {:>10} {:>9} {:>10} {:>9}", "k", "E[X]", "std X", "E[U]", "std U");
    for k in 0..r.layout.window {
        let (my, sy) = r.moment("y", k, 0).unwrap();
        let (mu, su) = r.moment("u", k, 0).unwrap();
        println!("{k:>3} {my:>10.5} {sy:>9.5} {mu:>10.5} {su:>9.5}");
    }
    println!(
        "Monte Carlo ({} runs): {}, max path residual {:.2e}",
        r.monte_carlo.samples,
        if r.monte_carlo.passed { "moments agree" } else { "MISMATCH" },
        d.max_path_residual
    );
    if let Some(dir) = std::env::args().nth(1) {
        write_report(dir.as_ref(), &r)?;
        println!("report written to {dir}");
    }
    Ok(())
}
