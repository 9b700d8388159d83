use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::ChanceConstraint;
use crate::pce::Distribution;
use crate::solver::AdmmSettings;
use crate::systems::{DescriptorSystem, SystemSpec};

/// Disturbance law per step: step `k` uses `cycle[k % cycle.len()]`, one
/// distribution per noise channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub cycle: Vec<Vec<Distribution>>,
}

impl NoiseSchedule {
    pub fn at(&self, k: usize) -> &[Distribution] {
        &self.cycle[k % self.cycle.len()]
    }

    pub fn window(&self, len: usize) -> Vec<Vec<Distribution>> {
        (0..len).map(|k| self.at(k).to_vec()).collect()
    }

    pub fn channels(&self) -> usize {
        self.cycle.first().map_or(0, |c| c.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    /// Number of recorded samples `T`.
    pub length: usize,
    /// Law of the i.i.d. excitation added to the input.
    pub input: Distribution,
    /// Optional static feedback `u = e - K x` applied while recording.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rows")]
    pub feedback: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpConfig {
    pub horizon: usize,
    #[serde(with = "rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "rows")]
    pub r: DMatrix<f64>,
    #[serde(default)]
    pub rate: f64,
    pub y_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    #[serde(default)]
    pub slack_weight: f64,
    #[serde(default)]
    pub nullspace_reduce: bool,
    #[serde(default = "yes")]
    pub causality: bool,
    #[serde(default)]
    pub chance: Vec<ChanceConstraint>,
}

fn yes() -> bool {
    true
}

/// Laws of the deterministic run-time initial data. Each is drawn once under
/// the data seed: the initial state (explicit) or dynamic part `z0J`
/// (descriptor), and the inputs of the consistency window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub state: Distribution,
    pub input: Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub validation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Samples {
    /// Realization paths written to `paths.csv`.
    pub paths: usize,
    /// Monte Carlo runs of the true system.
    pub monte_carlo: usize,
    /// Runs feeding the histograms (the first ones of the Monte Carlo set).
    pub histogram: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramConfig {
    pub channel: usize,
    /// Steps relative to the start of the decision window.
    pub steps: Vec<usize>,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemSpec,
    pub noise: NoiseSchedule,
    pub collection: Collection,
    pub ocp: OcpConfig,
    pub initial: InitialConfig,
    pub seeds: Seeds,
    pub samples: Samples,
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub solver: AdmmSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

impl ExperimentConfig {
    /// Unstable scalar plant `x+ = 2x + u + w`, state measured, alternating
    /// Gaussian / uniform disturbances.
    pub fn scalar() -> Self {
        Self {
            name: "scalar".into(),
            system: SystemSpec {
                e: None,
                a: m(1, 1, &[2.0]),
                b: m(1, 1, &[1.0]),
                f: m(1, 1, &[1.0]),
                c: m(1, 1, &[1.0]),
                d: m(1, 1, &[0.0]),
                h: m(1, 1, &[0.0]),
            },
            noise: NoiseSchedule {
                cycle: vec![
                    vec![Distribution::Gaussian { mean: 0.0, std: 0.1 }],
                    vec![Distribution::Uniform { lo: -0.2, hi: 0.2 }],
                ],
            },
            collection: Collection {
                length: 65,
                input: Distribution::Uniform { lo: -1.0, hi: 1.0 },
                feedback: Some(m(1, 1, &[1.5])),
            },
            ocp: OcpConfig {
                horizon: 20,
                q: m(1, 1, &[1.0]),
                r: m(1, 1, &[1.0]),
                rate: 2.0,
                y_ref: vec![0.0],
                u_ref: vec![0.0],
                slack_weight: 0.0,
                nullspace_reduce: false,
                causality: true,
                chance: Vec::new(),
            },
            initial: InitialConfig {
                state: Distribution::Uniform { lo: -2.0, hi: 2.0 },
                input: Distribution::Dirac { value: 0.0 },
            },
            seeds: Seeds { data: 7, validation: 11 },
            samples: Samples { paths: 20, monte_carlo: 10_000, histogram: 1000 },
            histogram: HistogramConfig { channel: 0, steps: vec![0, 4, 9, 14, 19], bins: 40 },
            solver: AdmmSettings::default(),
            output_dir: None,
        }
    }

    /// Fourth-order descriptor plant with two outputs, tracked to `(20, 0)`.
    pub fn descriptor() -> Self {
        let ds = DescriptorSystem::fourth_order_example();
        Self {
            name: "descriptor".into(),
            system: SystemSpec {
                e: Some(ds.e),
                a: ds.sys.a,
                b: ds.sys.b,
                f: ds.sys.f,
                c: ds.sys.c,
                d: ds.sys.d,
                h: ds.sys.h,
            },
            noise: NoiseSchedule { cycle: vec![vec![Distribution::Gaussian { mean: 0.0, std: 0.1 }]] },
            collection: Collection {
                length: 160,
                input: Distribution::Uniform { lo: -1.0, hi: 1.0 },
                feedback: None,
            },
            ocp: OcpConfig {
                horizon: 20,
                q: DMatrix::identity(2, 2),
                r: m(1, 1, &[1.0]),
                rate: 0.0,
                y_ref: vec![20.0, 0.0],
                u_ref: vec![0.0],
                slack_weight: 1e3,
                nullspace_reduce: true,
                causality: true,
                chance: Vec::new(),
            },
            initial: InitialConfig {
                state: Distribution::Uniform { lo: -1.0, hi: 1.0 },
                input: Distribution::Uniform { lo: -1.0, hi: 1.0 },
            },
            seeds: Seeds { data: 3, validation: 1 },
            samples: Samples { paths: 20, monte_carlo: 10_000, histogram: 1000 },
            histogram: HistogramConfig { channel: 0, steps: vec![0, 4, 9, 14, 19], bins: 40 },
            solver: AdmmSettings::default(),
            output_dir: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "scalar" => Ok(Self::scalar()),
            "descriptor" => Ok(Self::descriptor()),
            _ => Err(Error::Config(format!("unknown example `{name}` (expected scalar or descriptor)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn check(&self) -> Result<()> {
        if self.noise.cycle.is_empty() {
            return Err(Error::Config("noise.cycle must list at least one step".into()));
        }
        if self.noise.cycle.iter().any(|c| c.len() != self.system.f.ncols()) {
            return Err(Error::Config(format!(
                "every noise.cycle entry needs {} distributions (columns of F)",
                self.system.f.ncols()
            )));
        }
        if self.ocp.horizon == 0 {
            return Err(Error::Config("ocp.horizon must be positive".into()));
        }
        if self.samples.histogram > self.samples.monte_carlo || self.samples.paths > self.samples.monte_carlo {
            return Err(Error::Config("samples.paths and samples.histogram may not exceed samples.monte_carlo".into()));
        }
        if self.histogram.bins == 0 {
            return Err(Error::Config("histogram.bins must be positive".into()));
        }
        if let Some(h) = self.histogram.steps.iter().find(|&&s| s >= self.ocp.horizon) {
            return Err(Error::Config(format!("histogram step {h} outside the horizon {}", self.ocp.horizon)));
        }
        Ok(())
    }
}

mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        crate::linalg::to_rows(m).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(crate::linalg::from_rows(&rows))
    }
}

mod opt_rows {
    use nalgebra::DMatrix;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => super::rows::serialize(m, s),
            None => s.serialize_none(),
        }
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        Ok(Some(super::rows::deserialize(d)?))
    }
}
