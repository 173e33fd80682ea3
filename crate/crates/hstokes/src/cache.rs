//! Binary persistence for corrector sets and solution dumps.
//!
//! Corrector cache files carry the ASCII header line
//! `HSCACHE v1 <family> <params> <N> <tol>` followed by named field
//! blocks. A block is a u32 little-endian name length, the UTF-8 name,
//! a u64 little-endian value count, then that many f64 values in
//! little-endian row-major grid order. Solution dumps reuse the block
//! layout under the header `HSSOL v1 <M> <epsilon>` with fields
//! `u1, u2, p`.
//!
//! Values travel as raw bit patterns, so a cache hit reproduces the
//! original computation exactly and warm and cold runs stay
//! byte-identical downstream. Anything structurally wrong with a cache
//! file (bad version, key mismatch, truncation, block shape) reads as a
//! miss; corrupted data is never returned as valid.

use crate::cell::CorrectorSet;
use crate::coeff::CoefficientTensor;
use crate::error::{Error, Result};
use crate::field::{BoxVelocity, Field2, TorusVelocity};
use crate::solver::SolveStats;
use std::io::Write;
use std::path::{Path, PathBuf};

const CACHE_MAGIC: &str = "HSCACHE v1";
const SOLUTION_MAGIC: &str = "HSSOL v1";

/// Identity of one corrector computation. Two keys compare equal exactly
/// when their header lines are byte-identical: every float is rendered
/// with the shortest representation that parses back to the same bits.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheKey {
    /// Family name as in the config file.
    pub family: String,
    /// Canonical `k=v` parameter list, commas between entries.
    pub params: String,
    pub n: usize,
    pub tol: f64,
}

impl CacheKey {
    pub fn for_correctors(coeff: &CoefficientTensor, n: usize, tol: f64) -> CacheKey {
        let mut params = String::new();
        for (name, value) in [("offset", 0), ("amplitude", 1)]
            .iter()
            .filter_map(|&(name, k)| coeff.family.params().get(k).map(|&v| (name, v)))
        {
            params.push_str(&format!("{name}={value},"));
        }
        params.push_str(&format!("mu={}", coeff.mu));
        if coeff.is_flipped() {
            params.push_str(",adjoint=1");
        }
        CacheKey {
            family: coeff.family.name().to_string(),
            params,
            n,
            tol,
        }
    }

    /// The exact first line of the file, newline included.
    pub fn header_line(&self) -> String {
        format!(
            "{CACHE_MAGIC} {} {} {} {}\n",
            self.family, self.params, self.n, self.tol
        )
    }

    /// Stable file name under the cache directory.
    pub fn file_name(&self) -> String {
        format!("{}_{}_n{}_tol{}.hscache", self.family, self.params, self.n, self.tol)
    }
}

fn push_block(buf: &mut Vec<u8>, name: &str, values: &[f64]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for &v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes `bytes` to `path` through a unique temporary file in the same
/// directory, then renames. Concurrent writers race benignly: the last
/// rename wins and readers only ever observe complete files.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{stamp}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("cache"),
        std::process::id()
    ));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::Io(e)
    })
}

/// Sequential block reader over a fully loaded file body.
struct BlockReader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> BlockReader<'b> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'b [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::format(format!(
                "truncated while reading {what}: needed {len} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    /// Reads the next block, checking its name and value count.
    fn block(&mut self, expect_name: &str, expect_len: usize) -> Result<Vec<f64>> {
        let name_len = u32::from_le_bytes(self.take(4, "block name length")?.try_into().unwrap());
        if name_len > 256 {
            return Err(Error::format(format!("implausible block name length {name_len}")));
        }
        let name = std::str::from_utf8(self.take(name_len as usize, "block name")?)
            .map_err(|_| Error::format("block name is not UTF-8"))?;
        if name != expect_name {
            return Err(Error::format(format!(
                "unexpected block {name:?}, wanted {expect_name:?}"
            )));
        }
        let count = u64::from_le_bytes(self.take(8, "value count")?.try_into().unwrap()) as usize;
        if count != expect_len {
            return Err(Error::format(format!(
                "block {name:?} holds {count} values, expected {expect_len}"
            )));
        }
        let raw = self.take(8 * count, "block values")?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after the last block",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Splits a loaded file into its header line and binary body.
fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::format("header is not UTF-8"))?;
    Ok((header, &bytes[nl + 1..]))
}

fn encode_correctors(key: &CacheKey, set: &CorrectorSet) -> Vec<u8> {
    let mut buf = key.header_line().into_bytes();
    for (q, (chi, pi)) in set.chi.iter().zip(&set.pi).enumerate() {
        push_block(&mut buf, &format!("chi{q}_u1"), &chi.u1.data);
        push_block(&mut buf, &format!("chi{q}_u2"), &chi.u2.data);
        push_block(&mut buf, &format!("pi{q}"), &pi.data);
    }
    let stats: Vec<f64> = set
        .stats
        .iter()
        .flat_map(|s| {
            [
                s.iterations as f64,
                s.restarts as f64,
                s.residual,
                if s.converged { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    push_block(&mut buf, "stats", &stats);
    buf
}

/// Decodes a loaded corrector cache body against the key it must match.
/// Every structural defect is a `Format` error; the path-based
/// [`read_correctors`] maps those to cache misses.
pub fn decode_correctors(key: &CacheKey, bytes: &[u8]) -> Result<CorrectorSet> {
    let (header, body) = split_header(bytes)?;
    let expected = key.header_line();
    if header != expected.trim_end() {
        return Err(Error::format(format!(
            "header {header:?} does not match the requested key"
        )));
    }
    let n = key.n;
    let mut r = BlockReader { bytes: body, pos: 0 };
    let mut chi = Vec::with_capacity(4);
    let mut pi = Vec::with_capacity(4);
    for q in 0..4 {
        let u1 = r.block(&format!("chi{q}_u1"), n * n)?;
        let u2 = r.block(&format!("chi{q}_u2"), n * n)?;
        let pq = r.block(&format!("pi{q}"), n * n)?;
        chi.push(TorusVelocity {
            n,
            u1: Field2 { nx: n, ny: n, data: u1 },
            u2: Field2 { nx: n, ny: n, data: u2 },
        });
        pi.push(Field2 { nx: n, ny: n, data: pq });
    }
    let raw_stats = r.block("stats", 16)?;
    r.finish()?;
    let stats = raw_stats
        .chunks_exact(4)
        .map(|c| SolveStats {
            iterations: c[0] as usize,
            restarts: c[1] as usize,
            residual: c[2],
            converged: c[3] != 0.0,
        })
        .collect();
    Ok(CorrectorSet { n, chi, pi, stats })
}

/// Persists a corrector set under its key. Returns the final path.
pub fn write_correctors(dir: &Path, key: &CacheKey, set: &CorrectorSet) -> Result<PathBuf> {
    assert_eq!(set.n, key.n, "corrector set resolution disagrees with its key");
    assert_eq!(set.chi.len(), 4, "a corrector set holds one field per index pair");
    let path = dir.join(key.file_name());
    write_atomic(&path, &encode_correctors(key, set))?;
    Ok(path)
}

/// Cache lookup. `Ok(None)` covers every miss: absent file, version or
/// key mismatch, truncation, malformed blocks. Only environmental IO
/// failures (permissions, hardware) surface as errors.
pub fn read_correctors(dir: &Path, key: &CacheKey) -> Result<Option<CorrectorSet>> {
    let path = dir.join(key.file_name());
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::Io(e)),
    };
    match decode_correctors(key, &bytes) {
        Ok(set) => Ok(Some(set)),
        Err(Error::Format(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// A solved field triple as stored in an `HSSOL` dump. Homogenized
/// solves record `epsilon = 0`.
#[derive(Debug, Clone)]
pub struct SolutionDump {
    pub m: usize,
    pub epsilon: f64,
    pub velocity: BoxVelocity,
    pub pressure: Field2,
}

pub fn write_solution(
    path: &Path,
    epsilon: f64,
    velocity: &BoxVelocity,
    pressure: &Field2,
) -> Result<()> {
    let m = velocity.m;
    assert_eq!(pressure.nx, m, "pressure grid disagrees with the velocity");
    let mut buf = format!("{SOLUTION_MAGIC} {m} {epsilon}\n").into_bytes();
    push_block(&mut buf, "u1", &velocity.u1.data);
    push_block(&mut buf, "u2", &velocity.u2.data);
    push_block(&mut buf, "p", &pressure.data);
    write_atomic(path, &buf)
}

/// Decodes a loaded solution dump. Dumps are explicit artifacts rather
/// than a cache, so every structural problem is an error here.
pub fn decode_solution(bytes: &[u8]) -> Result<SolutionDump> {
    let (header, body) = split_header(bytes)?;
    let mut tokens = header.split(' ');
    let magic = (tokens.next().unwrap_or(""), tokens.next().unwrap_or(""));
    if (magic.0, magic.1) != ("HSSOL", "v1") {
        return Err(Error::format(format!(
            "not a solution dump (header starts {:?})",
            header.chars().take(20).collect::<String>()
        )));
    }
    let m: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format("solution header is missing the grid size"))?;
    // Grid sizes beyond this would dwarf any file the writer produces;
    // the bound also keeps the block-length arithmetic below overflow.
    if m == 0 || m > (1 << 16) {
        return Err(Error::format(format!("implausible grid size {m}")));
    }
    let epsilon: f64 = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format("solution header is missing epsilon"))?;
    if tokens.next().is_some() {
        return Err(Error::format("solution header has trailing tokens"));
    }
    let mut r = BlockReader { bytes: body, pos: 0 };
    let u1 = r.block("u1", (m + 1) * m)?;
    let u2 = r.block("u2", m * (m + 1))?;
    let p = r.block("p", m * m)?;
    r.finish()?;
    Ok(SolutionDump {
        m,
        epsilon,
        velocity: BoxVelocity {
            m,
            u1: Field2 { nx: m + 1, ny: m, data: u1 },
            u2: Field2 { nx: m, ny: m + 1, data: u2 },
        },
        pressure: Field2 { nx: m, ny: m, data: p },
    })
}

/// Loads and decodes a solution dump, naming the file in any error.
pub fn read_solution(path: &Path) -> Result<SolutionDump> {
    let bytes = std::fs::read(path)?;
    decode_solution(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
