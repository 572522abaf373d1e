//! Plain-text output: field dumps and CSV series.
//!
//! Field dump format (one scalar field per file):
//!
//! ```text
//! dims nx ny nz
//! spacing hx hy hz
//! origin ox oy oz
//! <one value per line, x varying fastest, then y, then z>
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! dump read back in reproduces the field bit for bit.
//!
//! CSV series files start with a comment line `# config_hash=<hex>` tying the
//! output to the exact configuration text that produced it, then a header
//! line, then one row per record.

use super::{Grid, ScalarField};
use crate::{Error, Result};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// 64-bit FNV-1a hash (stable across platforms and runs).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Write a scalar field in the dump format above.
pub fn write_scalar_field(path: &Path, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let d = grid.dims();
    let h = grid.spacing();
    let o = grid.origin();
    writeln!(out, "dims {} {} {}", d[0], d[1], d[2])?;
    writeln!(out, "spacing {} {} {}", h[0], h[1], h[2])?;
    writeln!(out, "origin {} {} {}", o[0], o[1], o[2])?;
    for v in field.data() {
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// A field dump read back from disk. Carries raw geometry only; whether an
/// obstacle mask applies is up to the caller.
#[derive(Clone, Debug)]
pub struct FieldDump {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub values: Vec<f64>,
}

impl FieldDump {
    /// Check that the dump matches `grid` geometrically and wrap the values.
    pub fn into_field(self, grid: std::sync::Arc<Grid>) -> Result<ScalarField> {
        if self.dims != grid.dims() {
            return Err(Error::GridMismatch("dump dims differ from grid"));
        }
        if self.values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch("dump value count differs from grid"));
        }
        for d in 0..3 {
            if (self.spacing[d] - grid.spacing()[d]).abs() > 1e-12 * grid.spacing()[d]
                || (self.origin[d] - grid.origin()[d]).abs() > 1e-12
            {
                return Err(Error::GridMismatch("dump geometry differs from grid"));
            }
        }
        Ok(ScalarField::from_vec(grid, self.values))
    }
}

fn parse_triple<T: std::str::FromStr>(line: &str, tag: &str, lineno: usize) -> Result<[T; 3]> {
    let mut parts = line.split_whitespace();
    let head = parts.next().unwrap_or("");
    if head != tag {
        return Err(Error::ConfigParse {
            line: lineno,
            msg: format!("expected `{tag}`, found `{head}`"),
        });
    }
    let mut out: Vec<T> = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse().map_err(|_| Error::ConfigParse {
            line: lineno,
            msg: format!("bad number `{p}`"),
        })?);
    }
    out.try_into().map_err(|_| Error::ConfigParse {
        line: lineno,
        msg: format!("`{tag}` needs exactly three values"),
    })
}

/// Read a field dump.
pub fn read_field_dump(path: &Path) -> Result<FieldDump> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let mut next_line = |lineno: usize| -> Result<String> {
        lines
            .next()
            .transpose()
            .map_err(Error::Io)?
            .ok_or(Error::ConfigParse { line: lineno, msg: "unexpected end of file".into() })
    };
    let dims: [usize; 3] = parse_triple(&next_line(1)?, "dims", 1)?;
    let spacing: [f64; 3] = parse_triple(&next_line(2)?, "spacing", 2)?;
    let origin: [f64; 3] = parse_triple(&next_line(3)?, "origin", 3)?;
    let n = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let line = next_line(4 + k)?;
        values.push(line.trim().parse().map_err(|_| Error::ConfigParse {
            line: 4 + k,
            msg: format!("bad value `{}`", line.trim()),
        })?);
    }
    Ok(FieldDump { dims, spacing, origin, values })
}

/// CSV series writer: hash comment, header, numeric rows.
pub struct CsvWriter {
    out: BufWriter<std::fs::File>,
    columns: usize,
}

impl CsvWriter {
    /// `config_text` is the exact configuration the run was built from; its
    /// FNV-1a hash goes in the first line so outputs are traceable.
    pub fn create(path: &Path, config_text: &str, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# config_hash={:016x}", fnv1a64(config_text.as_bytes()))?;
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter { out, columns: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        debug_assert_eq!(values.len(), self.columns, "row width mismatch");
        let mut first = true;
        for v in values {
            if !first {
                write!(self.out, ",")?;
            }
            write!(self.out, "{v}")?;
            first = false;
        }
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
