//! Coefficient trajectories as `k,basis_index,channel,value` CSV with the basis
//! in a JSON sidecar. Channels are named `<signal><component>`, e.g. `y0`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{CoeffTrajectory, JointBasis};
use crate::error::{Error, Result};

pub fn write_coeffs_csv<W: Write>(out: W, signals: &[(&str, &CoeffTrajectory)]) -> Result<usize> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["k", "basis_index", "channel", "value"])?;
    let mut rows = 0;
    for (name, traj) in signals {
        for (k, m) in traj.steps.iter().enumerate() {
            for i in 0..m.nrows() {
                for c in 0..m.ncols() {
                    wr.write_record([
                        k.to_string(),
                        i.to_string(),
                        format!("{name}{c}"),
                        format!("{:e}", m[(i, c)]),
                    ])?;
                    rows += 1;
                }
            }
        }
    }
    wr.flush()?;
    Ok(rows)
}

fn split_channel(ch: &str) -> Result<(String, usize)> {
    let digits = ch.len() - ch.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return Err(Error::Invalid(format!("channel name without component index: {ch}")));
    }
    let (name, idx) = ch.split_at(ch.len() - digits);
    Ok((name.to_string(), idx.parse().map_err(|_| Error::Invalid(ch.to_string()))?))
}

/// Reads back every signal found in the file.
pub fn read_coeffs_csv<R: Read>(input: R) -> Result<BTreeMap<String, CoeffTrajectory>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut raw: BTreeMap<String, Vec<(usize, usize, usize, f64)>> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Invalid(format!("expected 4 fields, got {}", rec.len())));
        }
        let parse_usize = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Invalid(format!("bad index {s:?}")));
        let k = parse_usize(&rec[0])?;
        let i = parse_usize(&rec[1])?;
        let (name, c) = split_channel(rec[2].trim())?;
        let v: f64 = rec[3].trim().parse().map_err(|_| Error::Invalid(format!("bad value {:?}", &rec[3])))?;
        raw.entry(name).or_default().push((k, i, c, v));
    }
    let mut out = BTreeMap::new();
    for (name, entries) in raw {
        let len = entries.iter().map(|e| e.0).max().unwrap() + 1;
        let p = entries.iter().map(|e| e.1).max().unwrap() + 1;
        let d = entries.iter().map(|e| e.2).max().unwrap() + 1;
        let mut steps = vec![DMatrix::from_element(p, d, f64::NAN); len];
        for (k, i, c, v) in entries {
            steps[k][(i, c)] = v;
        }
        if steps.iter().any(|m| m.iter().any(|v| v.is_nan())) {
            return Err(Error::Invalid(format!("signal {name} has missing entries")));
        }
        out.insert(name, CoeffTrajectory { steps });
    }
    Ok(out)
}

pub fn write_basis_json<W: Write>(out: W, basis: &JointBasis) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Sidecar<'a> {
        p: usize,
        #[serde(flatten)]
        basis: &'a JointBasis,
        sq_norms: Vec<f64>,
    }
    let sidecar = Sidecar { p: basis.p(), basis, sq_norms: basis.sq_norms().iter().copied().collect() };
    serde_json::to_writer_pretty(out, &sidecar)?;
    Ok(())
}

pub fn read_basis_json<R: Read>(input: R) -> Result<JointBasis> {
    let v: serde_json::Value = serde_json::from_reader(input)?;
    let basis: JointBasis = serde_json::from_value(v.clone())?;
    if let Some(norms) = v.get("sq_norms").and_then(|n| n.as_array()) {
        let expected = basis.sq_norms();
        let ok = norms.len() == expected.len()
            && norms.iter().zip(expected.iter()).all(|(a, b)| a.as_f64().is_some_and(|a| (a - b).abs() <= 1e-12 * b.abs().max(1.0)));
        if !ok {
            return Err(Error::BasisMismatch("sq_norms in sidecar disagree with element kinds".into()));
        }
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::Distribution;

    #[test]
    fn csv_and_sidecar_round_trip() {
        let noise = vec![vec![Distribution::Gaussian { mean: 0.5, std: 0.1 }, Distribution::Uniform { lo: -1.0, hi: 2.0 }]; 3];
        let basis = JointBasis::build(&[], &noise, None).unwrap();
        let w = basis.noise_coeffs(&noise).unwrap();
        let mut buf = Vec::new();
        let rows = write_coeffs_csv(&mut buf, &[("w", &w)]).unwrap();
        assert_eq!(rows, 3 * basis.p() * 2);
        let back = read_coeffs_csv(buf.as_slice()).unwrap();
        assert_eq!(back["w"], w);

        let mut js = Vec::new();
        write_basis_json(&mut js, &basis).unwrap();
        assert_eq!(read_basis_json(js.as_slice()).unwrap(), basis);
    }

    #[test]
    fn truncated_csv_is_rejected() {
        let text = "k,basis_index,channel,value\n0,0,y0,1.0\n0,1,y1,2.0\n";
        assert!(read_coeffs_csv(text.as_bytes()).is_err());
    }
}
