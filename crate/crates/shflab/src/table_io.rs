//! Versioned binary cache for the precomputed tables.
//!
//! When `SHFLAB_TABLE_DIR` is set, the renewal-density and pair-kernel
//! tables are stored there and reloaded on later runs instead of being
//! rebuilt. The format is little-endian: an 8-byte magic, a format
//! version, a table kind, the defining scalars, then the columns. Any
//! mismatch (magic, version, kind, parameters, column shape) falls back to
//! a fresh build; a cache can never change numerical results.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kernels::K2Table;
use crate::special_fn::{GThetaTable, Theta};

const MAGIC: &[u8; 8] = b"SHFLTBL\0";
const VERSION: u32 = 1;
const KIND_GTHETA: u32 = 1;
const KIND_K2: u32 = 2;

/// Cache directory from the environment, if configured.
pub fn table_dir() -> Option<PathBuf> {
    std::env::var_os("SHFLAB_TABLE_DIR").map(PathBuf::from)
}

fn write_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    out.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Invariant("table cache: truncated file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if n > 1 << 24 {
            return Err(Error::Invariant("table cache: implausible column size".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn header(kind: u32) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out
}

fn check_header(r: &mut Reader<'_>, kind: u32) -> Result<()> {
    if r.take(8)? != MAGIC {
        return Err(Error::Invariant("table cache: bad magic".into()));
    }
    if r.u32()? != VERSION {
        return Err(Error::Invariant("table cache: version mismatch".into()));
    }
    if r.u32()? != kind {
        return Err(Error::Invariant("table cache: kind mismatch".into()));
    }
    Ok(())
}

fn gtheta_file(dir: &Path, theta: Theta) -> PathBuf {
    dir.join(format!("gtheta-v{VERSION}-{:016x}.tbl", theta.0.to_bits()))
}

fn k2_file(dir: &Path, theta: f64, t: f64) -> PathBuf {
    dir.join(format!(
        "k2-v{VERSION}-{:016x}-{:016x}.tbl",
        theta.to_bits(),
        t.to_bits()
    ))
}

/// Serialize a renewal-density table.
pub fn encode_gtheta(table: &GThetaTable) -> Vec<u8> {
    let mut out = header(KIND_GTHETA);
    out.extend_from_slice(&table.theta.0.to_le_bytes());
    write_f64s(&mut out, &table.grid);
    write_f64s(&mut out, &table.values_g);
    write_f64s(&mut out, &table.values_gbar);
    out
}

/// Deserialize a renewal-density table, validating against the expected
/// `θ`.
pub fn decode_gtheta(bytes: &[u8], theta: Theta) -> Result<GThetaTable> {
    let mut r = Reader { buf: bytes };
    check_header(&mut r, KIND_GTHETA)?;
    let stored = r.f64()?;
    if stored.to_bits() != theta.0.to_bits() {
        return Err(Error::Invariant("table cache: theta mismatch".into()));
    }
    let grid = r.f64s()?;
    let values_g = r.f64s()?;
    let values_gbar = r.f64s()?;
    GThetaTable::assemble(theta, grid, values_g, values_gbar)
}

/// Serialize a pair-kernel table.
pub fn encode_k2(table: &K2Table) -> Vec<u8> {
    let (ln_r, values, r_ceil, gbar_t) = table.columns();
    let mut out = header(KIND_K2);
    out.extend_from_slice(&table.theta.to_le_bytes());
    out.extend_from_slice(&table.t.to_le_bytes());
    out.extend_from_slice(&r_ceil.to_le_bytes());
    out.extend_from_slice(&gbar_t.to_le_bytes());
    write_f64s(&mut out, ln_r);
    write_f64s(&mut out, values);
    out
}

/// Deserialize a pair-kernel table, validating against the expected
/// `(θ, t)`.
pub fn decode_k2(bytes: &[u8], theta: f64, t: f64) -> Result<K2Table> {
    let mut r = Reader { buf: bytes };
    check_header(&mut r, KIND_K2)?;
    let (stored_theta, stored_t) = (r.f64()?, r.f64()?);
    if stored_theta.to_bits() != theta.to_bits() || stored_t.to_bits() != t.to_bits() {
        return Err(Error::Invariant("table cache: parameter mismatch".into()));
    }
    let r_ceil = r.f64()?;
    let gbar_t = r.f64()?;
    let ln_r = r.f64s()?;
    let values = r.f64s()?;
    K2Table::assemble(t, theta, ln_r, values, r_ceil, gbar_t)
}

fn try_load(path: &Path) -> Option<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path).ok()?.read_to_end(&mut buf).ok()?;
    Some(buf)
}

fn try_store(path: &Path, bytes: &[u8]) {
    // Best effort: a read-only or missing cache directory must not fail
    // the computation. Write through a temp name so readers never see a
    // half-written table.
    let tmp = path.with_extension("tmp");
    let ok = (|| -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::File::create(&tmp)?.write_all(bytes)?;
        fs::rename(&tmp, path)
    })();
    if ok.is_err() {
        let _ = fs::remove_file(&tmp);
    }
}

/// Renewal-density table from the cache directory, building (and storing)
/// on miss.
pub fn gtheta_table_in(dir: Option<&Path>, theta: Theta) -> Result<GThetaTable> {
    if let Some(dir) = dir {
        let path = gtheta_file(dir, theta);
        if let Some(bytes) = try_load(&path) {
            if let Ok(table) = decode_gtheta(&bytes, theta) {
                return Ok(table);
            }
        }
        let table = GThetaTable::build(theta)?;
        try_store(&path, &encode_gtheta(&table));
        return Ok(table);
    }
    GThetaTable::build(theta)
}

/// Pair-kernel table from the cache directory, building (and storing) on
/// miss.
pub fn k2_table_in(dir: Option<&Path>, gtheta: &GThetaTable, t: f64) -> Result<K2Table> {
    if let Some(dir) = dir {
        let path = k2_file(dir, gtheta.theta.0, t);
        if let Some(bytes) = try_load(&path) {
            if let Ok(table) = decode_k2(&bytes, gtheta.theta.0, t) {
                return Ok(table);
            }
        }
        let table = K2Table::build(gtheta, t)?;
        try_store(&path, &encode_k2(&table));
        return Ok(table);
    }
    K2Table::build(gtheta, t)
}

/// [`gtheta_table_in`] with the directory taken from `SHFLAB_TABLE_DIR`.
pub fn gtheta_table(theta: Theta) -> Result<GThetaTable> {
    gtheta_table_in(table_dir().as_deref(), theta)
}

/// [`k2_table_in`] with the directory taken from `SHFLAB_TABLE_DIR`.
pub fn k2_table(gtheta: &GThetaTable, t: f64) -> Result<K2Table> {
    k2_table_in(table_dir().as_deref(), gtheta, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "shflab-tbl-{tag}-{}",
            std::process::id()
        ));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn gtheta_roundtrip_is_bitwise() {
        let table = GThetaTable::build(Theta(0.75)).unwrap();
        let decoded = decode_gtheta(&encode_gtheta(&table), Theta(0.75)).unwrap();
        assert_eq!(table.grid.len(), decoded.grid.len());
        for (a, b) in table.values_g.iter().zip(&decoded.values_g) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in table.values_gbar.iter().zip(&decoded.values_gbar) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // A cached reload evaluates identically.
        assert_eq!(
            table.g(0.3).unwrap().to_bits(),
            decoded.g(0.3).unwrap().to_bits()
        );
        assert_eq!(
            table.gbar_inv(0.2).unwrap().to_bits(),
            decoded.gbar_inv(0.2).unwrap().to_bits()
        );
    }

    #[test]
    fn k2_roundtrip_and_cache_hit() {
        let dir = temp_dir("k2");
        let gtheta = GThetaTable::build(Theta(0.0)).unwrap();
        let built = k2_table_in(Some(&dir), &gtheta, 0.5).unwrap();
        let reloaded = k2_table_in(Some(&dir), &gtheta, 0.5).unwrap();
        for r in [1e-9, 1e-4, 0.03, 0.9, 5.0] {
            assert_eq!(built.eval(r).to_bits(), reloaded.eval(r).to_bits());
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn corrupted_or_mismatched_cache_rebuilds() {
        let dir = temp_dir("bad");
        let path = gtheta_file(&dir, Theta(0.25));
        fs::write(&path, b"garbage").unwrap();
        let table = gtheta_table_in(Some(&dir), Theta(0.25)).unwrap();
        assert!(table.g(0.5).unwrap() > 0.0);
        // The corrupt file was replaced by a valid one.
        let bytes = try_load(&path).unwrap();
        assert!(decode_gtheta(&bytes, Theta(0.25)).is_ok());
        // A table stored for one theta never loads for another.
        assert!(decode_gtheta(&bytes, Theta(0.5)).is_err());
        let _ = fs::remove_dir_all(&dir);
    }
}
