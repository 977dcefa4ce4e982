//! Versioned text checkpoint for trained parameters.
//!
//! ```text
//! imc-mimo-detnet v1
//! n_t 4
//! n_r 6
//! modulation qpsk
//! layers 10
//! hidden 64
//! a_size 16
//! block 0
//! w1 64 24 <row-major values...>
//! b1 64 <values...>
//! ...
//! alpha1 <value>
//! alpha2 <value>
//! block 1
//! ...
//! end
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::DetNetParams;
use crate::error::{Error, Result};
use crate::mimo::{MimoConfig, Modulation};

pub const MAGIC: &str = "imc-mimo-detnet";
pub const VERSION: &str = "v1";

fn write_vec<W: Write>(w: &mut W, name: &str, v: &DVector<f64>) -> std::io::Result<()> {
    write!(w, "{name} {}", v.len())?;
    for x in v.iter() {
        write!(w, " {x}")?;
    }
    writeln!(w)
}

fn write_mat<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    write!(w, "{name} {} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write!(w, " {}", m[(i, j)])?;
        }
    }
    writeln!(w)
}

pub fn write_params<W: Write>(params: &DetNetParams, mut w: W) -> Result<()> {
    let c = &params.config;
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "n_t {}", c.n_t)?;
    writeln!(w, "n_r {}", c.n_r)?;
    writeln!(w, "modulation {}", c.modulation.name())?;
    writeln!(w, "layers {}", c.layers)?;
    writeln!(w, "hidden {}", c.hidden)?;
    writeln!(w, "a_size {}", c.a_size)?;
    for (k, b) in params.blocks.iter().enumerate() {
        writeln!(w, "block {k}")?;
        write_mat(&mut w, "w1", &b.w1)?;
        write_vec(&mut w, "b1", &b.b1)?;
        write_mat(&mut w, "w2", &b.w2)?;
        write_vec(&mut w, "b2", &b.b2)?;
        write_mat(&mut w, "w3", &b.w3)?;
        write_vec(&mut w, "b3", &b.b3)?;
        writeln!(w, "alpha1 {}", b.alpha1)?;
        writeln!(w, "alpha2 {}", b.alpha2)?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn save(params: &DetNetParams, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(params, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line_no += 1;
            match self.inner.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Checkpoint(format!("line {}: {msg}", self.line_no))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace().map(str::to_owned);
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            other => Err(self.err(format!("expected '{key}', found '{}'", other.unwrap_or_default()))),
        }
    }

    fn usize_field(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        v.first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("bad value for '{key}'")))
    }

    fn floats(&self, vals: &[String]) -> Result<Vec<f64>> {
        vals.iter()
            .map(|s| s.parse::<f64>().map_err(|_| self.err(format!("bad float '{s}'"))))
            .collect()
    }

    fn matrix(&mut self, key: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let v = self.keyed(key)?;
        if v.len() < 2 || v[0] != rows.to_string() || v[1] != cols.to_string() {
            return Err(self.err(format!("'{key}' must be {rows}x{cols}")));
        }
        let vals = self.floats(&v[2..])?;
        if vals.len() != rows * cols {
            return Err(self.err(format!("'{key}' has {} values, expected {}", vals.len(), rows * cols)));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }

    fn vector(&mut self, key: &str, len: usize) -> Result<DVector<f64>> {
        let v = self.keyed(key)?;
        if v.is_empty() || v[0] != len.to_string() {
            return Err(self.err(format!("'{key}' must have length {len}")));
        }
        let vals = self.floats(&v[1..])?;
        if vals.len() != len {
            return Err(self.err(format!("'{key}' has {} values, expected {len}", vals.len())));
        }
        Ok(DVector::from_vec(vals))
    }

    fn scalar(&mut self, key: &str) -> Result<f64> {
        let v = self.keyed(key)?;
        let vals = self.floats(&v)?;
        match vals.as_slice() {
            [x] => Ok(*x),
            _ => Err(self.err(format!("'{key}' expects one value"))),
        }
    }
}

/// Reads parameters; with `expected` set, any header mismatch is an error.
pub fn read_params<R: BufRead>(r: R, expected: Option<&MimoConfig>) -> Result<DetNetParams> {
    let mut lines = Lines {
        inner: r.lines(),
        line_no: 0,
    };
    let header = lines.next_line()?;
    if header.trim() != format!("{MAGIC} {VERSION}") {
        return Err(lines.err(format!("unsupported header '{}'", header.trim())));
    }
    let n_t = lines.usize_field("n_t")?;
    let n_r = lines.usize_field("n_r")?;
    let m = lines.keyed("modulation")?;
    let modulation = m
        .first()
        .and_then(|s| Modulation::parse(s))
        .ok_or_else(|| lines.err("unknown modulation"))?;
    let layers = lines.usize_field("layers")?;
    let hidden = lines.usize_field("hidden")?;
    let a_size = lines.usize_field("a_size")?;
    let config = MimoConfig {
        n_t,
        n_r,
        modulation,
        layers,
        hidden,
        a_size,
    };
    config.validate()?;
    if let Some(exp) = expected {
        if exp != &config {
            return Err(Error::Checkpoint(format!(
                "checkpoint config {config:?} does not match expected {exp:?}"
            )));
        }
    }
    let mut params = DetNetParams::zeros(&config);
    let (nx, s, a) = (config.x_len(), hidden, a_size);
    for (k, b) in params.blocks.iter_mut().enumerate() {
        let idx = lines.usize_field("block")?;
        if idx != k {
            return Err(lines.err(format!("expected block {k}, found {idx}")));
        }
        b.w1 = lines.matrix("w1", s, nx + a)?;
        b.b1 = lines.vector("b1", s)?;
        b.w2 = lines.matrix("w2", nx, s)?;
        b.b2 = lines.vector("b2", nx)?;
        b.w3 = lines.matrix("w3", a, s)?;
        b.b3 = lines.vector("b3", a)?;
        b.alpha1 = lines.scalar("alpha1")?;
        b.alpha2 = lines.scalar("alpha2")?;
    }
    lines.keyed("end")?;
    Ok(params)
}

pub fn load(path: &Path, expected: Option<&MimoConfig>) -> Result<DetNetParams> {
    read_params(BufReader::new(File::open(path)?), expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn cfg() -> MimoConfig {
        MimoConfig::new(2, 3, Modulation::Qpsk, 2, 5)
    }

    proptest! {
        #[test]
        fn save_load_is_lossless(seed in any::<u64>(), scale in 1e-6f64..1e6) {
            let mut p = DetNetParams::init(&cfg(), &mut rng_from_seed(seed));
            p.scale(scale);
            let mut buf = Vec::new();
            write_params(&p, &mut buf).unwrap();
            let q = read_params(buf.as_slice(), Some(&cfg())).unwrap();
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn mismatched_config_rejected() {
        let p = DetNetParams::init(&cfg(), &mut rng_from_seed(1));
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        let other = MimoConfig::new(2, 4, Modulation::Qpsk, 2, 5);
        assert!(matches!(read_params(buf.as_slice(), Some(&other)), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn truncated_and_corrupt_files_rejected() {
        let p = DetNetParams::init(&cfg(), &mut rng_from_seed(1));
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(read_params(truncated.as_bytes(), None).is_err());
        let corrupt = text.replacen("alpha1", "alpha9", 1);
        assert!(read_params(corrupt.as_bytes(), None).is_err());
        let wrong_version = text.replacen("v1", "v2", 1);
        assert!(read_params(wrong_version.as_bytes(), None).is_err());
    }
}
