//! Polynomial chaos expansions over finite joint bases.
//!
//! Every basis element is a univariate orthogonal polynomial in one primitive
//! random variable (a standard normal for Hermite, a uniform on [-1, 1] for
//! Legendre). Elements with different sources are independent.

mod io;
mod moments;
mod propagate;
mod sampling;

pub use io::{read_coeffs_csv, read_basis_json, write_basis_json, write_coeffs_csv};
pub use moments::{
    moment_counterexample_demo, moment_propagate, moments_from_pce, CounterexampleReport,
    InputMoments, MomentState,
};
pub use propagate::{earliest_influence, galerkin_propagate, galerkin_propagate_descriptor};
pub use sampling::{sample_realizations, sub_rng};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Constant,
    Hermite,
    Legendre,
}

/// The primitive random variable an element is a polynomial in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Constant,
    Initial { channel: usize },
    Noise { step: usize, channel: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisElement {
    pub family: Family,
    pub degree: usize,
    pub source: Source,
}

impl BasisElement {
    pub const CONSTANT: Self = Self {
        family: Family::Constant,
        degree: 0,
        source: Source::Constant,
    };

    /// `E[phi^2]`: `i!` for probabilists' Hermite, `1/(2i+1)` for Legendre.
    pub fn sq_norm(&self) -> f64 {
        basis_sq_norm(self.family, self.degree)
    }

    /// Value of the polynomial at the primitive sample `xi`.
    pub fn eval(&self, xi: f64) -> f64 {
        match self.family {
            Family::Constant => 1.0,
            Family::Hermite => hermite(self.degree, xi),
            Family::Legendre => legendre(self.degree, xi),
        }
    }
}

pub fn basis_sq_norm(family: Family, degree: usize) -> f64 {
    match family {
        Family::Constant => 1.0,
        Family::Hermite => (1..=degree).map(|i| i as f64).product(),
        Family::Legendre => 1.0 / (2 * degree + 1) as f64,
    }
}

/// Probabilists' Hermite polynomial `He_n`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = x * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// Legendre polynomial `P_n`.
pub fn legendre(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let kf = k as f64;
        let c = ((2.0 * kf + 1.0) * x * b - kf * a) / (kf + 1.0);
        a = b;
        b = c;
    }
    b
}

/// Scalar distributions with an exact expansion of at most two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Dirac { value: f64 },
}

impl Distribution {
    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Gaussian { mean, .. } => mean,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::Dirac { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Gaussian { std, .. } => std * std,
            Distribution::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Distribution::Dirac { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Gaussian { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
            Distribution::Uniform { lo, hi } => rng.random_range(lo..hi),
            Distribution::Dirac { value } => value,
        }
    }

    /// Number of expansion terms including the constant.
    pub fn terms(&self) -> usize {
        match self {
            Distribution::Dirac { .. } => 1,
            _ => 2,
        }
    }
}

/// Exact expansion: coefficients and the (family, degree) of each term.
pub fn pce_of_distribution(dist: &Distribution) -> Result<(Vec<f64>, Vec<(Family, usize)>)> {
    match *dist {
        Distribution::Gaussian { mean, std } => {
            if !(std >= 0.0) || !mean.is_finite() {
                return Err(Error::UnsupportedDistribution(format!("{dist:?}")));
            }
            Ok((vec![mean, std], vec![(Family::Constant, 0), (Family::Hermite, 1)]))
        }
        Distribution::Uniform { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::UnsupportedDistribution(format!("{dist:?}")));
            }
            Ok((
                vec![0.5 * (lo + hi), 0.5 * (hi - lo)],
                vec![(Family::Constant, 0), (Family::Legendre, 1)],
            ))
        }
        Distribution::Dirac { value } => {
            if !value.is_finite() {
                return Err(Error::UnsupportedDistribution(format!("{dist:?}")));
            }
            Ok((vec![value], vec![(Family::Constant, 0)]))
        }
    }
}

/// Ordered joint basis: constant, initial-condition elements, then the
/// disturbance elements step by step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBasis {
    pub elements: Vec<BasisElement>,
    pub p_ini: usize,
    pub p_w: usize,
    /// Noise steps that kept their elements.
    pub noise_steps: usize,
    /// Noise steps the basis was asked to cover.
    pub nominal_steps: usize,
}

/// Which noise steps can reach a signal inside a window ending at `window_end`.
/// A disturbance at step `j` first shows up at `j + lag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneRule {
    pub window_end: usize,
    pub lag: usize,
}

impl JointBasis {
    pub fn build(
        initial: &[Distribution],
        noise: &[Vec<Distribution>],
        prune: Option<PruneRule>,
    ) -> Result<Self> {
        let mut elements = vec![BasisElement::CONSTANT];
        for (channel, d) in initial.iter().enumerate() {
            let (_, kinds) = pce_of_distribution(d)?;
            for &(family, degree) in &kinds[1..] {
                elements.push(BasisElement { family, degree, source: Source::Initial { channel } });
            }
        }
        let p_ini = elements.len();

        let mut p_w = None;
        for (step, dists) in noise.iter().enumerate() {
            let terms = 1 + dists.iter().map(|d| d.terms() - 1).sum::<usize>();
            match p_w {
                None => p_w = Some(terms),
                Some(expected) if expected != terms => {
                    return Err(Error::NonUniformNoise { step, expected, got: terms });
                }
                _ => {}
            }
        }
        let p_w = p_w.unwrap_or(1);
        let nominal_steps = noise.len();
        let noise_steps = match prune {
            None => nominal_steps,
            Some(r) => nominal_steps.min((r.window_end + 1).saturating_sub(r.lag)),
        };
        for (step, dists) in noise.iter().enumerate().take(noise_steps) {
            for (channel, d) in dists.iter().enumerate() {
                let (_, kinds) = pce_of_distribution(d)?;
                for &(family, degree) in &kinds[1..] {
                    elements.push(BasisElement { family, degree, source: Source::Noise { step, channel } });
                }
            }
        }
        Ok(Self { elements, p_ini, p_w, noise_steps, nominal_steps })
    }

    /// A basis holding only the constant element.
    pub fn deterministic() -> Self {
        Self {
            elements: vec![BasisElement::CONSTANT],
            p_ini: 1,
            p_w: 1,
            noise_steps: 0,
            nominal_steps: 0,
        }
    }

    pub fn p(&self) -> usize {
        self.elements.len()
    }

    pub fn sq_norms(&self) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.elements.iter().map(|e| e.sq_norm()))
    }

    /// First index of the elements of noise step `step` (or `p` past the end).
    pub fn step_offset(&self, step: usize) -> usize {
        (self.p_ini + step * (self.p_w - 1)).min(self.p())
    }

    /// Evaluates all elements at one joint draw of the primitive variables.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut drawn: Vec<(Source, f64)> = Vec::new();
        DVector::from_iterator(
            self.p(),
            self.elements.iter().map(|e| {
                let xi = match e.family {
                    Family::Constant => 0.0,
                    _ => match drawn.iter().find(|(s, _)| *s == e.source) {
                        Some(&(_, xi)) => xi,
                        None => {
                            let xi = match e.family {
                                Family::Hermite => rng.sample(StandardNormal),
                                _ => rng.random_range(-1.0..1.0),
                            };
                            drawn.push((e.source, xi));
                            xi
                        }
                    },
                };
                e.eval(xi)
            }),
        )
    }

    fn index_of(&self, source: Source) -> Option<usize> {
        self.elements.iter().position(|e| e.source == source && e.degree == 1)
    }

    /// p x n coefficients of a vector of independent initial-condition channels.
    pub fn initial_coeffs(&self, initial: &[Distribution]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.p(), initial.len());
        for (channel, d) in initial.iter().enumerate() {
            let (c, _) = pce_of_distribution(d)?;
            out[(0, channel)] = c[0];
            if c.len() > 1 {
                let i = self
                    .index_of(Source::Initial { channel })
                    .ok_or_else(|| Error::BasisMismatch(format!("no element for initial channel {channel}")))?;
                out[(i, channel)] = c[1];
            }
        }
        Ok(out)
    }

    /// Coefficients of the whole disturbance sequence. Pruned steps keep only
    /// their mean.
    pub fn noise_coeffs(&self, noise: &[Vec<Distribution>]) -> Result<CoeffTrajectory> {
        let nw = noise.first().map_or(0, |d| d.len());
        let mut steps = Vec::with_capacity(noise.len());
        for (step, dists) in noise.iter().enumerate() {
            if dists.len() != nw {
                return Err(crate::error::dim_err("noise channels", nw, dists.len()));
            }
            let mut m = DMatrix::zeros(self.p(), nw);
            for (channel, d) in dists.iter().enumerate() {
                let (c, _) = pce_of_distribution(d)?;
                m[(0, channel)] = c[0];
                if c.len() > 1 && step < self.noise_steps {
                    let i = self.index_of(Source::Noise { step, channel }).ok_or_else(|| {
                        Error::BasisMismatch(format!("no element for noise step {step} channel {channel}"))
                    })?;
                    m[(i, channel)] = c[1];
                }
            }
            steps.push(m);
        }
        Ok(CoeffTrajectory { steps })
    }
}

/// Time sequence of p x d coefficient matrices (row i = coefficient of phi^i).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoeffTrajectory {
    pub steps: Vec<DMatrix<f64>>,
}

impl CoeffTrajectory {
    pub fn zeros(p: usize, d: usize, len: usize) -> Self {
        Self { steps: vec![DMatrix::zeros(p, d); len] }
    }

    /// Deterministic signal carried by the constant element only.
    pub fn deterministic(p: usize, signal: &[DVector<f64>]) -> Self {
        Self {
            steps: signal
                .iter()
                .map(|s| {
                    let mut m = DMatrix::zeros(p, s.len());
                    m.row_mut(0).copy_from(&s.transpose());
                    m
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
    pub fn p(&self) -> usize {
        self.steps.first().map_or(0, |m| m.nrows())
    }
    pub fn dim(&self) -> usize {
        self.steps.first().map_or(0, |m| m.ncols())
    }

    /// The deterministic sequence of coefficient `i`.
    pub fn index(&self, i: usize) -> Vec<DVector<f64>> {
        self.steps.iter().map(|m| m.row(i).transpose()).collect()
    }

    /// Inverse of [`Self::index`] over all indices.
    pub fn from_indices(seqs: &[Vec<DVector<f64>>]) -> Self {
        let p = seqs.len();
        let len = seqs.first().map_or(0, |s| s.len());
        let d = seqs.first().and_then(|s| s.first()).map_or(0, |v| v.len());
        let steps = (0..len)
            .map(|k| DMatrix::from_fn(p, d, |i, j| seqs[i][k][j]))
            .collect();
        Self { steps }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self { steps: self.steps[start..start + len].to_vec() }
    }

    /// Realization at one evaluated basis vector `phi`.
    pub fn realize(&self, phi: &DVector<f64>) -> Vec<DVector<f64>> {
        self.steps.iter().map(|m| m.transpose() * phi).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.steps
            .iter()
            .zip(&other.steps)
            .map(|(a, b)| {
                if a.shape() != b.shape() {
                    f64::INFINITY
                } else {
                    crate::linalg::max_abs(&(a - b))
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn check_basis(&self, basis: &JointBasis, what: &str) -> Result<()> {
        match self.steps.iter().find(|m| m.nrows() != basis.p()) {
            Some(m) => Err(Error::BasisMismatch(format!("{what}: {} rows for p = {}", m.nrows(), basis.p()))),
            None => Ok(()),
        }
    }
}

/// Coefficient trajectories of all signals of one system over a shared basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PceTrajectory {
    pub basis: JointBasis,
    pub x: Option<CoeffTrajectory>,
    pub u: CoeffTrajectory,
    pub w: CoeffTrajectory,
    pub y: CoeffTrajectory,
}

impl PceTrajectory {
    pub fn horizon(&self) -> usize {
        self.y.len()
    }
}
