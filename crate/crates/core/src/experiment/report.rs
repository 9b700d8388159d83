use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{
    initial_draw, mask_violation, moment_rows, monte_carlo, path_residual, prepare, Dataset, ExperimentReport, Layout, McInput,
    MomentRow, MASK_TOL, MEMBERSHIP_TOL, PATH_TOL,
};
use crate::error::{Error, Result};
use crate::hankel::{validate_membership, HankelStack};
use crate::pce::{read_basis_json, read_coeffs_csv, write_basis_json, write_coeffs_csv, CoeffTrajectory};
use crate::systems::RealTrajectory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    /// Data rows (CSV records without the header); absent for JSON / TOML.
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub stage: String,
    pub files: Vec<FileEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub info: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(dir.join(name))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<FileEntry> {
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(FileEntry { name: "config.toml".into(), rows: None })
}

fn write_signals(dir: &Path, name: &str, t: &RealTrajectory) -> Result<FileEntry> {
    let mut wr = csv_writer(dir, name)?;
    wr.write_record(["k", "channel", "value"])?;
    let mut rows = 0;
    let mut emit = |sig: &str, seq: &[DVector<f64>]| -> Result<()> {
        for (k, v) in seq.iter().enumerate() {
            for (c, x) in v.iter().enumerate() {
                wr.write_record([k.to_string(), format!("{sig}{c}"), num(*x)])?;
                rows += 1;
            }
        }
        Ok(())
    };
    emit("u", &t.u)?;
    emit("w", &t.w)?;
    emit("y", &t.y)?;
    if let Some(x) = &t.x {
        emit("x", &x[..t.u.len()])?;
    }
    wr.flush()?;
    Ok(FileEntry { name: name.into(), rows: Some(rows) })
}

/// Writes the recorded data, its Hankel blocks and the excitation certificate.
pub fn write_dataset(dir: &Path, cfg: &ExperimentConfig, ds: &Dataset, stack: &HankelStack) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = vec![write_config(dir, cfg)?, write_signals(dir, "data.csv", &ds.data)?];
    stack.export(BufWriter::new(File::create(dir.join("hankel.csv"))?), BufWriter::new(File::create(dir.join("hankel.json"))?))?;
    files.push(FileEntry { name: "hankel.csv".into(), rows: Some(stack.y.nrows() + stack.u.nrows() + stack.w.nrows() + ext_rows(stack)) });
    files.push(FileEntry { name: "hankel.json".into(), rows: None });
    let mut info = BTreeMap::new();
    info.insert("pe_certificate".into(), serde_json::to_value(&ds.certificate)?);
    info.insert("input_pe_certificate".into(), serde_json::to_value(&ds.input_certificate)?);
    let m = Manifest { name: cfg.name.clone(), stage: "collect".into(), files, info };
    m.save(dir)?;
    Ok(m)
}

fn ext_rows(st: &HankelStack) -> usize {
    match st.kind {
        crate::hankel::StackKind::Explicit => 0,
        _ => st.u_ext.nrows() + st.w_ext.nrows(),
    }
}

fn coeff_signals(r: &ExperimentReport) -> Vec<(&'static str, &CoeffTrajectory)> {
    let mut v = vec![("y", &r.y), ("u", &r.u)];
    if r.w.dim() > 0 {
        v.push(("w", &r.w));
    }
    if r.u_ext.len() > r.u.len() {
        v.push(("ue", &r.u_ext));
        if r.w_ext.dim() > 0 {
            v.push(("we", &r.w_ext));
        }
    }
    v
}

/// Writes every artifact of a solved experiment plus the manifest.
pub fn write_report(dir: &Path, r: &ExperimentReport) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = vec![write_config(dir, &r.config)?];

    let mut wr = csv_writer(dir, "moments.csv")?;
    wr.write_record(["k", "channel", "mean", "std"])?;
    for m in &r.moments {
        wr.write_record([m.k.to_string(), m.channel.clone(), num(m.mean), num(m.std)])?;
    }
    wr.flush()?;
    files.push(FileEntry { name: "moments.csv".into(), rows: Some(r.moments.len()) });

    let rows = write_coeffs_csv(BufWriter::new(File::create(dir.join("pce_coeffs.csv"))?), &coeff_signals(r))?;
    files.push(FileEntry { name: "pce_coeffs.csv".into(), rows: Some(rows) });
    write_basis_json(BufWriter::new(File::create(dir.join("basis.json"))?), &r.basis)?;
    files.push(FileEntry { name: "basis.json".into(), rows: None });

    let mut wr = csv_writer(dir, "paths.csv")?;
    wr.write_record(["sample_id", "k", "channel", "value"])?;
    let mut rows = 0;
    for p in &r.paths {
        for (sig, seq) in [("y", &p.y), ("u", &p.u), ("w", &p.w)] {
            for (k, v) in seq.iter().enumerate() {
                for (c, x) in v.iter().enumerate() {
                    wr.write_record([p.sample_id.to_string(), k.to_string(), format!("{sig}{c}"), num(*x)])?;
                    rows += 1;
                }
            }
        }
    }
    wr.flush()?;
    files.push(FileEntry { name: "paths.csv".into(), rows: Some(rows) });

    let mut wr = csv_writer(dir, "hist.csv")?;
    wr.write_record(["k", "bin_lo", "bin_hi", "density"])?;
    let mut rows = 0;
    for h in &r.histograms {
        for (b, d) in h.density.iter().enumerate() {
            wr.write_record([h.k.to_string(), num(h.edges[b]), num(h.edges[b + 1]), num(*d)])?;
            rows += 1;
        }
    }
    wr.flush()?;
    files.push(FileEntry { name: "hist.csv".into(), rows: Some(rows) });

    let mut wr = csv_writer(dir, "mc_check.csv")?;
    wr.write_record(["k", "channel", "pce_mean", "pce_std", "mc_mean", "mc_std", "mean_se", "std_se", "passed"])?;
    for c in &r.monte_carlo.checks {
        wr.write_record([
            c.k.to_string(),
            c.channel.clone(),
            num(c.pce_mean),
            num(c.pce_std),
            num(c.mc_mean),
            num(c.mc_std),
            num(c.mean_se),
            num(c.std_se),
            c.passed.to_string(),
        ])?;
    }
    wr.flush()?;
    files.push(FileEntry { name: "mc_check.csv".into(), rows: Some(r.monte_carlo.checks.len()) });

    write_json(dir, "solve_diag.json", &r.diag)?;
    files.push(FileEntry { name: "solve_diag.json".into(), rows: None });

    let mut info = BTreeMap::new();
    info.insert("window".into(), r.layout.window.into());
    info.insert("decision_start".into(), r.layout.decision_start().into());
    info.insert("histogram_channel".into(), r.config.histogram.channel.into());
    let m = Manifest { name: r.config.name.clone(), stage: "solve".into(), files, info };
    m.save(dir)?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub checks: Vec<CheckResult>,
}

impl ValidationSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, outcome: Result<String>) {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(e) => (false, e.to_string()),
        };
        self.checks.push(CheckResult { name: name.into(), passed, detail });
    }
}

fn fail(msg: String) -> Error {
    Error::Invalid(msg)
}

fn count_records(path: &Path) -> Result<usize> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut n = 0;
    for rec in rd.records() {
        rec?;
        n += 1;
    }
    Ok(n)
}

fn check_manifest(dir: &Path, m: &Manifest) -> Result<String> {
    for f in &m.files {
        let path = dir.join(&f.name);
        if !path.is_file() {
            return Err(fail(format!("{} is listed but missing", f.name)));
        }
        match (f.rows, path.extension().and_then(|e| e.to_str())) {
            (Some(rows), _) => {
                let got = count_records(&path)?;
                if got != rows {
                    return Err(fail(format!("{}: {got} rows, manifest says {rows}", f.name)));
                }
            }
            (None, Some("json")) => {
                let _: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(&path)?))?;
            }
            (None, Some("toml")) => {
                ExperimentConfig::load(&path)?;
            }
            _ => {}
        }
    }
    Ok(format!("{} files present and parsed", m.files.len()))
}

fn read_moments(path: &Path) -> Result<Vec<MomentRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

struct Loaded {
    basis: crate::pce::JointBasis,
    signals: BTreeMap<String, CoeffTrajectory>,
}

impl Loaded {
    fn get(&self, name: &str) -> Result<&CoeffTrajectory> {
        self.signals.get(name).ok_or_else(|| fail(format!("pce_coeffs.csv has no signal `{name}`")))
    }
    /// Inputs (and disturbances) over the full span the window depends on.
    fn inputs(&self) -> Result<(&CoeffTrajectory, Option<&CoeffTrajectory>)> {
        let u = self.signals.get("ue").map_or_else(|| self.get("u"), Ok)?;
        let w = self.signals.get("we").or_else(|| self.signals.get("w"));
        Ok((u, w))
    }
}

fn empty_w(p: usize, len: usize) -> CoeffTrajectory {
    CoeffTrajectory::zeros(p, 0, len)
}

/// Re-runs the invariant checks against a written report directory. Each
/// check is named; one failing check does not stop the others.
pub fn validate(cfg: &ExperimentConfig, dir: &Path) -> Result<ValidationSummary> {
    let mut out = ValidationSummary { checks: Vec::new() };
    let manifest = match Manifest::load(dir) {
        Ok(m) => m,
        Err(e) => {
            out.push("manifest", Err(e));
            return Ok(out);
        }
    };
    out.push("manifest", check_manifest(dir, &manifest));
    if manifest.stage != "solve" {
        return Ok(out);
    }
    let lay = Layout::new(cfg)?;

    let loaded = (|| -> Result<Loaded> {
        let basis = read_basis_json(BufReader::new(File::open(dir.join("basis.json"))?))?;
        let signals = read_coeffs_csv(BufReader::new(File::open(dir.join("pce_coeffs.csv"))?))?;
        for (name, t) in &signals {
            t.check_basis(&basis, name)?;
        }
        Ok(Loaded { basis, signals })
    })();
    let loaded = match loaded {
        Ok(l) => {
            out.push("coefficients", Ok(format!("p = {}, {} signals", l.basis.p(), l.signals.len())));
            l
        }
        Err(e) => {
            out.push("coefficients", Err(e));
            return Ok(out);
        }
    };

    out.push(
        "moments",
        (|| {
            let file = read_moments(&dir.join("moments.csv"))?;
            let want = moment_rows(&loaded.basis, &[("y", loaded.get("y")?), ("u", loaded.get("u")?)])?;
            if file.len() != want.len() {
                return Err(fail(format!("{} rows, coefficients give {}", file.len(), want.len())));
            }
            for (a, b) in file.iter().zip(&want) {
                let tol = 1e-9 * (1.0 + b.mean.abs().max(b.std));
                if a.k != b.k || a.channel != b.channel || (a.mean - b.mean).abs() > tol || (a.std - b.std).abs() > tol {
                    return Err(fail(format!("k = {} {}: file ({}, {}) vs coefficients ({}, {})", b.k, b.channel, a.mean, a.std, b.mean, b.std)));
                }
            }
            Ok(format!("{} rows agree with the coefficients", want.len()))
        })(),
    );

    out.push(
        "membership",
        (|| {
            let y = loaded.get("y")?;
            let (u, w) = loaded.inputs()?;
            let w = w.cloned().unwrap_or_else(|| empty_w(loaded.basis.p(), u.len()));
            let rep = validate_membership(&lay.model, u, &w, y, None, MEMBERSHIP_TOL)?;
            if !rep.ok {
                return Err(fail(format!("max residual {:.3e} > {MEMBERSHIP_TOL:e}", rep.max_residual)));
            }
            Ok(format!("max residual {:.3e}", rep.max_residual))
        })(),
    );

    out.push(
        "causality",
        (|| {
            let (u, _) = loaded.inputs()?;
            let v = mask_violation(&loaded.basis, cfg.ocp.horizon, lay.kind, u);
            if v > MASK_TOL {
                return Err(fail(format!("masked input coefficient {v:.3e} > {MASK_TOL:e}")));
            }
            Ok(format!("max masked coefficient {v:.3e}"))
        })(),
    );

    let prep = prepare(cfg);
    out.push(
        "consistency",
        (|| {
            let prep = prep.as_ref().map_err(|e| fail(format!("cannot rebuild the initial data: {e}")))?;
            let (u, y) = (loaded.get("u")?, loaded.get("y")?);
            let (su, sy) = (&prep.spec.u_ini, &prep.spec.y_ini);
            if u.len() < su.len() || y.len() < sy.len() {
                return Err(fail("trajectories shorter than the initial window".into()));
            }
            let du = u.slice(0, su.len()).max_abs_diff(su);
            let dy = y.slice(0, sy.len()).max_abs_diff(sy);
            if du.max(dy) > MEMBERSHIP_TOL {
                return Err(fail(format!("initial window off by {du:.3e} (u), {dy:.3e} (y)")));
            }
            Ok(format!("initial window matches to {:.3e}", du.max(dy)))
        })(),
    );

    out.push(
        "paths",
        (|| {
            let paths = read_paths(&dir.join("paths.csv"))?;
            if paths.is_empty() {
                return Err(fail("no sampled paths".into()));
            }
            let mut worst = 0.0f64;
            for (id, p) in &paths {
                let r = path_residual(&lay.model, &p.y, &p.u, &p.w)?;
                if r > PATH_TOL {
                    return Err(fail(format!("sample {id}: dynamics residual {r:.3e} > {PATH_TOL:e}")));
                }
                worst = worst.max(r);
            }
            Ok(format!("{} paths, max residual {worst:.3e}", paths.len()))
        })(),
    );

    out.push(
        "histograms",
        (|| {
            let mut rd = csv::Reader::from_path(dir.join("hist.csv"))?;
            let mut per_k: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
            for rec in rd.deserialize::<(usize, f64, f64, f64)>() {
                let (k, lo, hi, d) = rec?;
                if !(d >= 0.0) || !(hi > lo) {
                    return Err(fail(format!("k = {k}: bad bin [{lo}, {hi}] density {d}")));
                }
                let e = per_k.entry(k).or_default();
                e.0 += 1;
                e.1 += d * (hi - lo);
            }
            let want: Vec<usize> = cfg.histogram.steps.iter().map(|s| lay.decision_start() + s).collect();
            if per_k.keys().copied().collect::<Vec<_>>() != want {
                return Err(fail(format!("histogram steps {:?}, expected {want:?}", per_k.keys().collect::<Vec<_>>())));
            }
            for (k, (bins, mass)) in &per_k {
                if *bins != cfg.histogram.bins || *mass > 1.0 + 1e-9 || *mass <= 0.0 {
                    return Err(fail(format!("k = {k}: {bins} bins with mass {mass}")));
                }
            }
            Ok(format!("{} histograms", per_k.len()))
        })(),
    );

    out.push(
        "monte_carlo",
        (|| {
            let y = loaded.get("y")?;
            let (u, _) = loaded.inputs()?;
            let initial = initial_draw(cfg, &lay);
            let init = DVector::from_vec(initial.state);
            let noise = cfg.noise.window(lay.span);
            let mc = monte_carlo(
                &McInput { model: &lay.model, init: &init, basis: &loaded.basis, u, y, noise: &noise },
                cfg.samples.monte_carlo,
                cfg.seeds.validation,
            )?;
            let bad: Vec<String> = mc.check.failures().map(|c| format!("k = {} {}", c.k, c.channel)).collect();
            if !bad.is_empty() {
                return Err(fail(format!("outside 3 standard errors at {}", bad.join(", "))));
            }
            Ok(format!("{} samples, {} moments within 3 standard errors", mc.check.samples, mc.check.checks.len()))
        })(),
    );
    Ok(out)
}

struct PathRead {
    y: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    w: Vec<DVector<f64>>,
}

fn read_paths(path: &Path) -> Result<BTreeMap<usize, PathRead>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut raw: BTreeMap<usize, BTreeMap<String, Vec<(usize, usize, f64)>>> = BTreeMap::new();
    for rec in rd.deserialize::<(usize, usize, String, f64)>() {
        let (id, k, ch, v) = rec?;
        let digits = ch.len() - ch.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (sig, c) = ch.split_at(ch.len() - digits);
        let c: usize = c.parse().map_err(|_| fail(format!("bad channel {ch}")))?;
        raw.entry(id).or_default().entry(sig.to_string()).or_default().push((k, c, v));
    }
    let seq = |entries: Option<&Vec<(usize, usize, f64)>>| -> Vec<DVector<f64>> {
        let Some(e) = entries else { return Vec::new() };
        let len = e.iter().map(|x| x.0).max().map_or(0, |m| m + 1);
        let d = e.iter().map(|x| x.1).max().map_or(0, |m| m + 1);
        let mut out = vec![DVector::zeros(d); len];
        for &(k, c, v) in e {
            out[k][c] = v;
        }
        out
    };
    Ok(raw
        .into_iter()
        .map(|(id, m)| (id, PathRead { y: seq(m.get("y")), u: seq(m.get("u")), w: seq(m.get("w")) }))
        .collect())
}
