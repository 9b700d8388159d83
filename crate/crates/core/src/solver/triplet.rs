//! Plain-text sparse format for [`QpProblem`]:
//!
//! ```text
//! qp <n_var> <n_eq> <n_cone_rows>
//! const <c0>
//! H <i> <j> <v>        (full symmetric storage)
//! f <i> <v>
//! A <i> <j> <v>
//! b <i> <v>
//! M <i> <j> <v>
//! c <i> <v>
//! cone nonneg|soc <start> <len>
//! ```
//!
//! Zero entries are omitted; indices are 0-based.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};

use super::{Cone, QpProblem};
use crate::error::{Error, Result};

pub fn write_triplets<W: Write>(mut out: W, qp: &QpProblem) -> Result<()> {
    writeln!(out, "qp {} {} {}", qp.n(), qp.a_eq.nrows(), qp.m.nrows())?;
    writeln!(out, "const {:e}", qp.c0)?;
    let mat = |out: &mut W, tag: &str, m: &DMatrix<f64>| -> std::io::Result<()> {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    writeln!(out, "{tag} {i} {j} {:e}", m[(i, j)])?;
                }
            }
        }
        Ok(())
    };
    let vec = |out: &mut W, tag: &str, v: &DVector<f64>| -> std::io::Result<()> {
        for (i, x) in v.iter().enumerate() {
            if *x != 0.0 {
                writeln!(out, "{tag} {i} {x:e}")?;
            }
        }
        Ok(())
    };
    mat(&mut out, "H", &qp.h)?;
    vec(&mut out, "f", &qp.f)?;
    mat(&mut out, "A", &qp.a_eq)?;
    vec(&mut out, "b", &qp.b_eq)?;
    mat(&mut out, "M", &qp.m)?;
    vec(&mut out, "c", &qp.c)?;
    for cone in &qp.cones {
        match cone {
            Cone::NonNeg { start, len } => writeln!(out, "cone nonneg {start} {len}")?,
            Cone::Soc { start, len } => writeln!(out, "cone soc {start} {len}")?,
        }
    }
    Ok(())
}

fn bad(line: usize, msg: &str) -> Error {
    Error::Invalid(format!("triplet line {}: {msg}", line + 1))
}

pub fn read_triplets<R: Read>(input: R) -> Result<QpProblem> {
    let mut qp: Option<QpProblem> = None;
    for (ln, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.is_empty() || tok[0].starts_with('#') {
            continue;
        }
        let us = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad index"));
        let fl = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad value"));
        if tok[0] == "qp" {
            if tok.len() != 4 {
                return Err(bad(ln, "header needs three sizes"));
            }
            let (n, me, mc) = (us(tok[1])?, us(tok[2])?, us(tok[3])?);
            let mut p = QpProblem::new(n);
            p.a_eq = DMatrix::zeros(me, n);
            p.b_eq = DVector::zeros(me);
            p.m = DMatrix::zeros(mc, n);
            p.c = DVector::zeros(mc);
            qp = Some(p);
            continue;
        }
        let p = qp.as_mut().ok_or_else(|| bad(ln, "missing header"))?;
        let set_m = |m: &mut DMatrix<f64>| -> Result<()> {
            if tok.len() != 4 {
                return Err(bad(ln, "expected i j v"));
            }
            let (i, j) = (us(tok[1])?, us(tok[2])?);
            if i >= m.nrows() || j >= m.ncols() {
                return Err(bad(ln, "index out of range"));
            }
            m[(i, j)] = fl(tok[3])?;
            Ok(())
        };
        let set_v = |v: &mut DVector<f64>| -> Result<()> {
            if tok.len() != 3 {
                return Err(bad(ln, "expected i v"));
            }
            let i = us(tok[1])?;
            if i >= v.len() {
                return Err(bad(ln, "index out of range"));
            }
            v[i] = fl(tok[2])?;
            Ok(())
        };
        match tok[0] {
            "const" => p.c0 = fl(tok.get(1).ok_or_else(|| bad(ln, "missing value"))?)?,
            "H" => set_m(&mut p.h)?,
            "f" => set_v(&mut p.f)?,
            "A" => set_m(&mut p.a_eq)?,
            "b" => set_v(&mut p.b_eq)?,
            "M" => set_m(&mut p.m)?,
            "c" => set_v(&mut p.c)?,
            "cone" => {
                if tok.len() != 4 {
                    return Err(bad(ln, "expected cone kind start len"));
                }
                let (start, len) = (us(tok[2])?, us(tok[3])?);
                if start + len > p.m.nrows() {
                    return Err(bad(ln, "cone rows out of range"));
                }
                p.cones.push(match tok[1] {
                    "nonneg" => Cone::NonNeg { start, len },
                    "soc" => Cone::Soc { start, len },
                    _ => return Err(bad(ln, "unknown cone")),
                });
            }
            other => return Err(bad(ln, &format!("unknown tag {other}"))),
        }
    }
    qp.ok_or_else(|| Error::Invalid("empty triplet file".into()))
}
