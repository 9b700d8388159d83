use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ddpce::experiment::{
    collect_data, run_experiment, validate, write_dataset, write_report, ExperimentConfig, ExperimentReport, FileEntry,
    Layout,
};
use ddpce::hankel::HankelStack;
use ddpce::solver::{read_triplets, solve_eq_qp, solve_qp_splitting, write_triplets, AdmmSettings};
use ddpce::{Error, Result};

#[derive(Parser)]
#[command(name = "ddpce", version, about = "Data-driven stochastic optimal control with polynomial chaos")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the data seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record data and write it with its Hankel blocks.
    Collect(Common),
    /// Run the full pipeline and write the report files.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write the assembled QP as `qp.txt` (sparse triplets).
        #[arg(long)]
        export_qp: bool,
        /// Solve a QP given as a triplet file instead and write `solution.csv`.
        #[arg(long, conflicts_with = "config")]
        qp: Option<PathBuf>,
    },
    /// Re-check a written report; exits nonzero on any failed check.
    Validate(Common),
    /// Run one of the built-in experiments and validate the result.
    Example {
        which: Which,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Scalar,
    Descriptor,
}

fn load(common: &Common, fallback: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, fallback) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(c)) => c,
        (None, None) => return Err(Error::Config("--config is required".into())),
    };
    if let Some(s) = common.seed {
        cfg.seeds.data = s;
    }
    if let Some(n) = common.samples {
        cfg.samples.monte_carlo = n;
        cfg.samples.histogram = cfg.samples.histogram.min(n);
        cfg.samples.paths = cfg.samples.paths.min(n);
    }
    cfg.check()?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn summary(r: &ExperimentReport) {
    let d = &r.diag;
    println!(
        "{}: {:?}, objective {:.6}, stationarity {:.2e}, primal {:.2e}, basis {}, Monte Carlo {}",
        d.name,
        d.status,
        d.objective,
        d.residuals.stationarity,
        d.residuals.primal,
        d.basis_size,
        if d.monte_carlo_passed { "ok" } else { "FAILED" }
    );
}

fn solve_triplets(path: &Path, dir: &Path) -> Result<()> {
    let qp = read_triplets(BufReader::new(File::open(path)?))?;
    let sol = if qp.has_cones() {
        solve_qp_splitting(&qp, &AdmmSettings::default())
    } else {
        let mut s = solve_eq_qp(&qp.h, &qp.f, &qp.a_eq, &qp.b_eq);
        s.objective += qp.c0;
        s
    };
    std::fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(File::create(dir.join("solution.csv"))?);
    writeln!(f, "index,value")?;
    for (i, v) in sol.x.iter().enumerate() {
        writeln!(f, "{i},{v}")?;
    }
    f.flush()?;
    println!(
        "{:?}, objective {:.9}, stationarity {:.2e}, primal {:.2e}, {} iterations",
        sol.status, sol.objective, sol.residuals.stationarity, sol.residuals.primal, sol.iterations
    );
    Ok(())
}

fn solve(cfg: &ExperimentConfig, dir: &Path, export_qp: bool) -> Result<ExperimentReport> {
    let report = run_experiment(cfg)?;
    let mut manifest = write_report(dir, &report)?;
    if export_qp {
        write_triplets(BufWriter::new(File::create(dir.join("qp.txt"))?), &report.ocp.global()?)?;
        manifest.files.push(FileEntry { name: "qp.txt".into(), rows: None });
        manifest.save(dir)?;
    }
    summary(&report);
    Ok(report)
}

fn check(cfg: &ExperimentConfig, dir: &Path) -> Result<bool> {
    let s = validate(cfg, dir)?;
    for c in &s.checks {
        println!("{:<12} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    Ok(s.passed())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Collect(common) => {
            let cfg = load(&common, None)?;
            let dir = out_dir(&common, &cfg);
            let lay = Layout::new(&cfg)?;
            let ds = collect_data(&cfg)?;
            let stack = HankelStack::build(&ds.data, lay.window, lay.stack_kind)?;
            write_dataset(&dir, &cfg, &ds, &stack)?;
            println!(
                "{} samples, PE order {} rank {}/{}, {} Hankel columns -> {}",
                ds.data.horizon(),
                ds.certificate.order,
                ds.certificate.rank,
                ds.certificate.required,
                stack.cols(),
                dir.display()
            );
            Ok(true)
        }
        Cmd::Solve { common, export_qp, qp } => {
            if let Some(path) = qp {
                let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
                solve_triplets(&path, &dir)?;
                return Ok(true);
            }
            let cfg = load(&common, None)?;
            let dir = out_dir(&common, &cfg);
            solve(&cfg, &dir, export_qp)?;
            Ok(true)
        }
        Cmd::Validate(common) => {
            let dir = common
                .out
                .clone()
                .ok_or_else(|| Error::Config("--out must name the report directory".into()))?;
            let saved = ExperimentConfig::load(&dir.join("config.toml")).ok();
            let cfg = load(&common, saved)?;
            check(&cfg, &dir)
        }
        Cmd::Example { which, common } => {
            let preset = match which {
                Which::Scalar => ExperimentConfig::scalar(),
                Which::Descriptor => ExperimentConfig::descriptor(),
            };
            let cfg = load(&common, Some(preset))?;
            let dir = out_dir(&common, &cfg);
            solve(&cfg, &dir, false)?;
            check(&cfg, &dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
