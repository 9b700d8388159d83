use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::hankel::{persistency_of_excitation, trajectory_from_selector, validate_membership, HankelStack, PeCertificate, StackKind};
use crate::ocp::{build_ocp, causality_mask, solve_ocp, OcpKind, OcpQp, OcpSolution, OcpSpec};
use crate::pce::{
    earliest_influence, galerkin_propagate, galerkin_propagate_descriptor, moments_from_pce, sub_rng, CoeffTrajectory,
    Distribution, JointBasis, PruneRule,
};
use crate::solver::{Residuals, Status};
use crate::systems::{simulate_closed_loop, simulate_descriptor, simulate_explicit, Model, RealTrajectory};

const STREAM_INPUT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_INITIAL: u64 = 2;

/// Tolerance for pathwise dynamics residuals of sampled optimal paths.
pub const PATH_TOL: f64 = 1e-8;
/// Tolerance for membership of the optimal coefficient trajectories.
pub const MEMBERSHIP_TOL: f64 = 1e-7;
/// Masked input coefficients must stay below this in magnitude.
pub const MASK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: RealTrajectory,
    /// Excitation of the stacked input `v = (u, w)` at the order the problem needs.
    pub certificate: PeCertificate,
    /// Excitation of `u` alone at the same order.
    pub input_certificate: PeCertificate,
}

/// Problem-class bookkeeping derived from the system.
#[derive(Debug, Clone)]
pub struct Layout {
    pub model: Model,
    pub kind: OcpKind,
    pub stack_kind: StackKind,
    /// Window length `L`.
    pub window: usize,
    /// Input samples one window depends on (`L + delta - 1`).
    pub span: usize,
    /// PE order of `v` needed for the fundamental lemma.
    pub order: usize,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let model = cfg.system.model()?;
        let (kind, stack_kind) = match &model {
            Model::Explicit(s) => (OcpKind::Explicit { n_x: s.nx() }, StackKind::Explicit),
            Model::Descriptor(q) => (
                OcpKind::Descriptor { n_j: q.n_j, delta: q.delta },
                StackKind::Descriptor { delta: q.delta },
            ),
        };
        let window = kind.window(cfg.ocp.horizon);
        let span = kind.input_span(cfg.ocp.horizon);
        let order = match kind {
            OcpKind::Explicit { n_x } => window + n_x,
            OcpKind::Descriptor { n_j, .. } => span + n_j,
        };
        Ok(Self { model, kind, stack_kind, window, span, order })
    }

    pub fn decision_start(&self) -> usize {
        self.kind.decision_start()
    }
}

fn draw(dist: &Distribution, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| dist.sample(rng))
}

/// Records `T` samples of the true system under seeded excitation and
/// noise, and certifies persistency of excitation.
pub fn collect_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.check()?;
    let lay = Layout::new(cfg)?;
    let t = cfg.collection.length;
    let total = t + lay.model.lookahead();
    let mut rin = sub_rng(cfg.seeds.data, STREAM_INPUT);
    let mut rw = sub_rng(cfg.seeds.data, STREAM_NOISE);
    let nu = lay.model.nu();
    let exc: Vec<DVector<f64>> = (0..total).map(|_| draw(&cfg.collection.input, nu, &mut rin)).collect();
    let w: Vec<DVector<f64>> = (0..total)
        .map(|k| DVector::from_iterator(cfg.noise.channels(), cfg.noise.at(k).iter().map(|d| d.sample(&mut rw))))
        .collect();
    let mut data = match &lay.model {
        Model::Explicit(s) => {
            let x0 = DVector::zeros(s.nx());
            let mut d = match &cfg.collection.feedback {
                Some(k) => simulate_closed_loop(s, &x0, k, &exc, &w)?,
                None => simulate_explicit(s, &x0, &exc, &w)?,
            };
            if s.c != DMatrix::identity(s.nx(), s.nx()) {
                d.x = None;
            }
            d
        }
        Model::Descriptor(q) => {
            if cfg.collection.feedback.is_some() {
                return Err(Error::Config("collection.feedback is only supported for explicit systems".into()));
            }
            let mut d = simulate_descriptor(q, &DVector::zeros(q.n_j), &exc, &w)?;
            d.x = None;
            d
        }
    };
    data.u.truncate(t);
    data.w.truncate(t);
    data.y.truncate(t);

    let v: Vec<DVector<f64>> = (0..t).map(|k| data.v(k)).collect();
    let certificate = persistency_of_excitation(&v, lay.order);
    let input_certificate = persistency_of_excitation(&data.u, lay.order);
    if !certificate.holds() {
        let nv = v.first().map_or(1, |x| x.len());
        return Err(Error::NotPersistentlyExciting {
            order: lay.order,
            reason: format!(
                "(u, w) Hankel rank {} of {} with T = {t}; the length bound needs T >= {}, \
                 increase collection.length or change seeds.data",
                certificate.rank,
                certificate.required,
                (nv + 1) * lay.order - 1
            ),
        });
    }
    Ok(Dataset { data, certificate, input_certificate })
}

/// The deterministic run-time initial data: state (or `z0J`) and the inputs
/// of the consistency window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDraw {
    pub state: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
}

pub fn initial_draw(cfg: &ExperimentConfig, lay: &Layout) -> InitialDraw {
    let mut rng = sub_rng(cfg.seeds.data, STREAM_INITIAL);
    let n = match &lay.model {
        Model::Explicit(s) => s.nx(),
        Model::Descriptor(q) => q.n_j,
    };
    let state = (0..n).map(|_| cfg.initial.state.sample(&mut rng)).collect();
    let inputs = (0..lay.kind.init_u())
        .map(|_| (0..lay.model.nu()).map(|_| cfg.initial.input.sample(&mut rng)).collect())
        .collect();
    InitialDraw { state, inputs }
}

/// Everything the problem needs before solving.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub layout: Layout,
    pub dataset: Dataset,
    pub stack: HankelStack,
    pub basis: JointBasis,
    pub initial: InitialDraw,
    pub spec: OcpSpec,
}

pub fn basis_for(cfg: &ExperimentConfig, lay: &Layout) -> Result<JointBasis> {
    let rule = PruneRule { window_end: lay.window - 1, lag: earliest_influence(&lay.model) };
    JointBasis::build(&[], &cfg.noise.window(lay.window), Some(rule))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let layout = Layout::new(cfg)?;
    let dataset = collect_data(cfg)?;
    let stack = HankelStack::build(&dataset.data, layout.window, layout.stack_kind)?;
    let basis = basis_for(cfg, &layout)?;
    let w_hat = basis.noise_coeffs(&cfg.noise.window(layout.window))?;
    let initial = initial_draw(cfg, &layout);
    let p = basis.p();
    let u_ini: Vec<DVector<f64>> = initial.inputs.iter().map(|u| DVector::from_vec(u.clone())).collect();
    let u_ini = CoeffTrajectory::deterministic(p, &u_ini);
    let mut init = DMatrix::zeros(p, initial.state.len());
    init.row_mut(0).copy_from(&DVector::from_vec(initial.state.clone()).transpose());
    let n_ini = u_ini.len();
    let y_ini = match &layout.model {
        Model::Explicit(s) => galerkin_propagate(s, &basis, &init, &u_ini, &w_hat.slice(0, n_ini))?.y,
        Model::Descriptor(q) => galerkin_propagate_descriptor(q, &basis, &init, &u_ini, &w_hat.slice(0, n_ini))?.y,
    };
    let o = &cfg.ocp;
    let spec = OcpSpec {
        horizon: o.horizon,
        kind: layout.kind,
        q: o.q.clone(),
        r: o.r.clone(),
        rate: o.rate,
        y_ref: DVector::from_vec(o.y_ref.clone()),
        u_ref: DVector::from_vec(o.u_ref.clone()),
        basis: basis.clone(),
        y_ini,
        u_ini,
        w_hat,
        slack_weight: o.slack_weight,
        nullspace_reduce: o.nullspace_reduce,
        causality: o.causality,
        chance: o.chance.clone(),
    };
    Ok(Prepared { layout, dataset, stack, basis, initial, spec })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub k: usize,
    pub channel: String,
    pub mean: f64,
    pub std: f64,
}

/// Means and standard deviations of every channel of each named signal.
pub fn moment_rows(basis: &JointBasis, signals: &[(&str, &CoeffTrajectory)]) -> Result<Vec<MomentRow>> {
    let mut out = Vec::new();
    for (name, traj) in signals {
        for (k, z) in traj.steps.iter().enumerate() {
            let (mean, cov) = moments_from_pce(basis, z, None)?;
            for c in 0..z.ncols() {
                out.push(MomentRow { k, channel: format!("{name}{c}"), mean: mean[c], std: cov[(c, c)].max(0.0).sqrt() });
            }
        }
    }
    Ok(out)
}

/// Realization of the optimal trajectory at one basis draw. Inputs and
/// disturbances run `delta - 1` steps past the outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub sample_id: usize,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    /// Largest violation of the system equations along the path.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Window step.
    pub k: usize,
    pub channel: usize,
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub samples: usize,
    pub sample_mean: f64,
    pub sample_std: f64,
}

impl Histogram {
    /// 40-style uniform bins over `mean +- 4 std` of the samples.
    pub fn from_samples(k: usize, channel: usize, xs: &[f64], bins: usize) -> Self {
        let (mean, std) = mean_std(xs);
        let half = if std > 0.0 { 4.0 * std } else { 0.5 };
        let (lo, hi) = (mean - half, mean + half);
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        for &x in xs {
            if x >= lo && x <= hi {
                counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        let n = xs.len().max(1) as f64;
        let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
        Self { k, channel, edges, density, samples: xs.len(), sample_mean: mean, sample_std: std }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Empirical moments of one channel at one step, with the comparison against
/// the coefficient moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub k: usize,
    pub channel: String,
    pub pce_mean: f64,
    pub pce_std: f64,
    pub mc_mean: f64,
    pub mc_std: f64,
    pub mean_se: f64,
    pub std_se: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<MomentCheck>,
    /// Largest `|y_true - y_pce|` over samples and steps.
    pub realization_gap: f64,
    pub passed: bool,
}

impl MonteCarloCheck {
    pub fn failures(&self) -> impl Iterator<Item = &MomentCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// What a Monte Carlo run needs: the true system and start, and the optimal
/// input and output coefficients.
pub struct McInput<'a> {
    pub model: &'a Model,
    pub init: &'a DVector<f64>,
    pub basis: &'a JointBasis,
    /// Input coefficients over `L + delta - 1` steps.
    pub u: &'a CoeffTrajectory,
    /// Output coefficients over the window.
    pub y: &'a CoeffTrajectory,
    /// Disturbance law over `L + delta - 1` steps.
    pub noise: &'a [Vec<Distribution>],
}

pub struct McOutcome {
    pub check: MonteCarloCheck,
    /// `ys[k][c]` holds all samples of output channel `c` at window step `k`.
    pub ys: Vec<Vec<Vec<f64>>>,
}

fn compare(k: usize, channel: String, pce: (f64, f64), xs: &[f64]) -> MomentCheck {
    let n = xs.len() as f64;
    let (m, s) = mean_std(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let mean_se = s / n.sqrt();
    let std_se = if s > 0.0 { ((m4 - s.powi(4)).max(0.0) / (4.0 * s * s * n)).sqrt() } else { 0.0 };
    let floor = 1e-9 * (1.0 + pce.0.abs());
    let passed = (m - pce.0).abs() <= 3.0 * mean_se + floor && (s - pce.1).abs() <= 3.0 * std_se + floor;
    MomentCheck { k, channel, pce_mean: pce.0, pce_std: pce.1, mc_mean: m, mc_std: s, mean_se, std_se, passed }
}

/// Simulates the true system under the optimal input policy: each run draws the
/// basis variables, realizes the inputs, takes the covered disturbances from
/// the same draw and samples the uncovered ones afresh.
pub fn monte_carlo(inp: &McInput, samples: usize, seed: u64) -> Result<McOutcome> {
    let window = inp.y.len();
    let span = inp.u.len();
    let ny = inp.y.dim();
    let nu = inp.u.dim();
    let w_coeffs = inp.basis.noise_coeffs(inp.noise)?;
    let mut ys = vec![vec![Vec::with_capacity(samples); ny]; window];
    let mut us = vec![vec![Vec::with_capacity(samples); nu]; window];
    let mut gap = 0.0f64;
    for n in 0..samples {
        let mut rng = sub_rng(seed, n as u64);
        let phi = inp.basis.sample(&mut rng);
        let u = inp.u.realize(&phi);
        let mut w = w_coeffs.realize(&phi);
        for (k, wk) in w.iter_mut().enumerate().skip(inp.basis.noise_steps) {
            for (c, d) in inp.noise[k].iter().enumerate() {
                wk[c] = d.sample(&mut rng);
            }
        }
        let sim = match inp.model {
            Model::Explicit(s) => simulate_explicit(s, inp.init, &u, &w)?,
            Model::Descriptor(q) => simulate_descriptor(q, inp.init, &u, &w)?,
        };
        let y_pce = inp.y.realize(&phi);
        for k in 0..window {
            gap = gap.max((&sim.y[k] - &y_pce[k]).amax());
            for c in 0..ny {
                ys[k][c].push(sim.y[k][c]);
            }
            for c in 0..nu {
                us[k][c].push(u[k][c]);
            }
        }
    }
    debug_assert!(span >= window);
    let mut checks = Vec::new();
    for (name, traj, store) in [("y", inp.y, &ys), ("u", &inp.u.slice(0, window), &us)] {
        for k in 0..window {
            let (mean, cov) = moments_from_pce(inp.basis, &traj.steps[k], None)?;
            for c in 0..traj.dim() {
                checks.push(compare(k, format!("{name}{c}"), (mean[c], cov[(c, c)].max(0.0).sqrt()), &store[k][c]));
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(McOutcome { check: MonteCarloCheck { samples, seed, checks, realization_gap: gap, passed }, ys })
}

/// Realized paths of the optimal trajectory and their dynamics residuals.
pub fn sample_paths(
    model: &Model,
    basis: &JointBasis,
    y: &CoeffTrajectory,
    u_ext: &CoeffTrajectory,
    w_ext: &CoeffTrajectory,
    count: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let phi = basis.sample(&mut sub_rng(seed, n as u64));
        let (yr, ur, wr) = (y.realize(&phi), u_ext.realize(&phi), w_ext.realize(&phi));
        let residual = path_residual(model, &yr, &ur, &wr)?;
        out.push(PathSample { sample_id: n, y: yr, u: ur, w: wr, residual });
    }
    Ok(out)
}

/// Largest violation of the system equations by one realized path, with the
/// initial state fitted from the outputs.
pub fn path_residual(model: &Model, y: &[DVector<f64>], u: &[DVector<f64>], w: &[DVector<f64>]) -> Result<f64> {
    let one = |s: &[DVector<f64>]| CoeffTrajectory::deterministic(1, s);
    let w = if w.is_empty() { vec![DVector::zeros(0); u.len()] } else { w.to_vec() };
    Ok(validate_membership(model, &one(u), &one(&w), &one(y), None, PATH_TOL)?.max_residual)
}

/// Largest masked input coefficient.
pub fn mask_violation(basis: &JointBasis, horizon: usize, kind: OcpKind, u_ext: &CoeffTrajectory) -> f64 {
    causality_mask(basis, horizon, kind)
        .into_iter()
        .filter(|&(k, _)| k < u_ext.len())
        .map(|(k, i)| u_ext.steps[k].row(i).amax())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiag {
    pub name: String,
    pub kind: OcpKind,
    pub horizon: usize,
    pub window: usize,
    pub decision_start: usize,
    pub data_length: usize,
    pub hankel_columns: usize,
    pub basis_size: usize,
    pub noise_steps: usize,
    pub pe_order: usize,
    pub pe_rank: usize,
    pub status: Status,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: Residuals,
    pub slack_l1: f64,
    pub membership_residual: f64,
    pub mask_violation: f64,
    pub initial: InitialDraw,
    pub realization_gap: f64,
    pub monte_carlo_passed: bool,
    pub max_path_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub layout: Layout,
    pub basis: JointBasis,
    pub ocp: OcpQp,
    pub solution: OcpSolution,
    pub y: CoeffTrajectory,
    pub u: CoeffTrajectory,
    pub w: CoeffTrajectory,
    pub u_ext: CoeffTrajectory,
    pub w_ext: CoeffTrajectory,
    pub moments: Vec<MomentRow>,
    pub paths: Vec<PathSample>,
    pub histograms: Vec<Histogram>,
    pub monte_carlo: MonteCarloCheck,
    pub diag: SolveDiag,
}

impl ExperimentReport {
    /// Mean and std of `signal` (`"y"` or `"u"`) channel `c` at window step `k`.
    pub fn moment(&self, signal: &str, k: usize, c: usize) -> Option<(f64, f64)> {
        let name = format!("{signal}{c}");
        self.moments.iter().find(|m| m.k == k && m.channel == name).map(|m| (m.mean, m.std))
    }

    pub fn decision_start(&self) -> usize {
        self.layout.decision_start()
    }

    pub fn histogram_at(&self, decision_step: usize) -> Option<&Histogram> {
        let k = self.decision_start() + decision_step;
        self.histograms.iter().find(|h| h.k == k)
    }
}

/// Full pipeline: data, problem, solve, then sampling-based analysis.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let prep = prepare(cfg)?;
    let ocp = build_ocp(&prep.spec, &prep.stack)?;
    let solution = solve_ocp(&ocp, &cfg.solver)?;
    analyze(cfg, prep, ocp, solution)
}

fn analyze(cfg: &ExperimentConfig, prep: Prepared, ocp: OcpQp, solution: OcpSolution) -> Result<ExperimentReport> {
    let lay = &prep.layout;
    let img = trajectory_from_selector(&prep.stack, &solution.g)?;
    let basis = &prep.basis;
    let membership = validate_membership(&lay.model, &img.u_ext, &img.w_ext, &img.y, None, MEMBERSHIP_TOL)?;
    let mask = mask_violation(basis, cfg.ocp.horizon, lay.kind, &img.u_ext);
    let moments = moment_rows(basis, &[("y", &img.y), ("u", &img.u)])?;

    let init = DVector::from_vec(prep.initial.state.clone());
    let noise = cfg.noise.window(lay.span);
    let mc = monte_carlo(
        &McInput { model: &lay.model, init: &init, basis, u: &img.u_ext, y: &img.y, noise: &noise },
        cfg.samples.monte_carlo,
        cfg.seeds.validation,
    )?;
    let histograms = cfg
        .histogram
        .steps
        .iter()
        .map(|&j| {
            let k = lay.decision_start() + j;
            let xs = &mc.ys[k][cfg.histogram.channel][..cfg.samples.histogram];
            Histogram::from_samples(k, cfg.histogram.channel, xs, cfg.histogram.bins)
        })
        .collect();
    let paths = sample_paths(&lay.model, basis, &img.y, &img.u_ext, &img.w_ext, cfg.samples.paths, cfg.seeds.validation)?;

    let diag = SolveDiag {
        name: cfg.name.clone(),
        kind: lay.kind,
        horizon: cfg.ocp.horizon,
        window: lay.window,
        decision_start: lay.decision_start(),
        data_length: prep.dataset.data.horizon(),
        hankel_columns: prep.stack.cols(),
        basis_size: basis.p(),
        noise_steps: basis.noise_steps,
        pe_order: prep.dataset.certificate.order,
        pe_rank: prep.dataset.certificate.rank,
        status: solution.status,
        objective: solution.objective,
        iterations: solution.iterations,
        residuals: solution.residuals.clone(),
        slack_l1: solution.slack_l1(),
        membership_residual: membership.max_residual,
        mask_violation: mask,
        initial: prep.initial.clone(),
        realization_gap: mc.check.realization_gap,
        monte_carlo_passed: mc.check.passed,
        max_path_residual: paths.iter().map(|p| p.residual).fold(0.0, f64::max),
    };
    Ok(ExperimentReport {
        config: cfg.clone(),
        layout: prep.layout,
        basis: prep.basis,
        ocp,
        solution,
        y: img.y,
        u: img.u,
        w: img.w,
        u_ext: img.u_ext,
        w_ext: img.w_ext,
        moments,
        paths,
        histograms,
        monte_carlo: mc.check,
        diag,
    })
}

pub fn run_scalar_example(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.system.model()? {
        Model::Explicit(_) => run_experiment(cfg),
        Model::Descriptor(_) => Err(Error::Config("the scalar example needs an explicit system".into())),
    }
}

pub fn run_descriptor_example(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.system.e.is_none() {
        return Err(Error::Config("the descriptor example needs an E matrix".into()));
    }
    run_experiment(cfg)
}
