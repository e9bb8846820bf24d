//! Binary snapshots of a spectral field.
//!
//! Layout (little-endian): `b"GNSE"`, `u32` version, the header
//! `d, n, m: u64; alpha, s: f64; seed, member: u64; time: f64`, then `d`
//! arrays of `n^d` complex values (`re, im` as `f64`) in lattice order, and
//! finally the CRC-32 of every preceding byte. A trajectory file is a plain
//! concatenation of such records.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralVectorField;
use crate::grid::Grid;
use crate::trajectory::{Provenance, Trajectory};

pub const MAGIC: &[u8; 4] = b"GNSE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub s: f64,
    pub seed: u64,
    pub member: u64,
    pub time: f64,
}

impl CheckpointHeader {
    pub fn at(&self, time: f64) -> Self {
        CheckpointHeader { time, ..*self }
    }

    /// Errors naming the first field that differs from `expected` (time is ignored).
    pub fn check_matches(&self, expected: &CheckpointHeader) -> Result<()> {
        let pairs = [
            ("d", self.d as f64, expected.d as f64),
            ("n", self.n as f64, expected.n as f64),
            ("m", self.m as f64, expected.m as f64),
            ("alpha", self.alpha, expected.alpha),
            ("s", self.s, expected.s),
        ];
        for (name, got, want) in pairs {
            if got.to_bits() != want.to_bits() {
                return Err(Error::HeaderMismatch(format!("{name}: file has {got}, config has {want}")));
            }
        }
        if self.seed != expected.seed {
            return Err(Error::HeaderMismatch(format!("seed: file has {}, config has {}", self.seed, expected.seed)));
        }
        if self.member != expected.member {
            return Err(Error::HeaderMismatch(format!(
                "member: file has {}, config has {}",
                self.member, expected.member
            )));
        }
        Ok(())
    }
}

pub fn encode(header: &CheckpointHeader, field: &SpectralVectorField) -> Result<Vec<u8>> {
    let grid = field.grid();
    if (grid.d(), grid.n(), grid.m()) != (header.d, header.n, header.m) {
        return Err(Error::HeaderMismatch("field grid differs from header".into()));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + grid.d() * grid.len() * 16 + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [header.d as u64, header.n as u64, header.m as u64] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&header.alpha.to_le_bytes());
    buf.extend_from_slice(&header.s.to_le_bytes());
    buf.extend_from_slice(&header.seed.to_le_bytes());
    buf.extend_from_slice(&header.member.to_le_bytes());
    buf.extend_from_slice(&header.time.to_le_bytes());
    for comp in field.comps() {
        for z in comp {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().expect("8 bytes"))
}

fn f64_at(b: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(b[off..off + 8].try_into().expect("8 bytes"))
}

/// Decodes the record at the start of `bytes`; returns it and its length.
pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, SpectralVectorField, usize)> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dims = [u64_at(bytes, 8), u64_at(bytes, 16), u64_at(bytes, 24)];
    if dims[0] > 3 || dims[1] > 1 << 16 || dims[2] > 1 << 20 {
        return Err(Error::Checkpoint(format!("implausible grid {dims:?}")));
    }
    let header = CheckpointHeader {
        d: dims[0] as usize,
        n: dims[1] as usize,
        m: dims[2] as usize,
        alpha: f64_at(bytes, 32),
        s: f64_at(bytes, 40),
        seed: u64_at(bytes, 48),
        member: u64_at(bytes, 56),
        time: f64_at(bytes, 64),
    };
    let grid = Grid::new(header.d, header.n, header.m).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let body = header.d * grid.len() * 16;
    let total = HEADER_LEN + body + 4;
    if bytes.len() < total {
        return Err(Error::Checkpoint("truncated body".into()));
    }
    let stored = u32::from_le_bytes(bytes[total - 4..total].try_into().expect("4 bytes"));
    if crc32fast::hash(&bytes[..total - 4]) != stored {
        return Err(Error::Checkpoint("CRC mismatch".into()));
    }
    let mut off = HEADER_LEN;
    let mut comps = Vec::with_capacity(header.d);
    for _ in 0..header.d {
        let mut c = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            c.push(Complex64::new(f64_at(bytes, off), f64_at(bytes, off + 8)));
            off += 16;
        }
        comps.push(c);
    }
    Ok((header, SpectralVectorField::from_components(&grid, comps)?, total))
}

/// Writes through a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, field: &SpectralVectorField) -> Result<()> {
    write_atomic(path, &encode(header, field)?)
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, SpectralVectorField)> {
    let bytes = std::fs::read(path)?;
    let (h, f, used) = decode(&bytes)?;
    if used != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes after the record", bytes.len() - used)));
    }
    Ok((h, f))
}

/// One record per node; `header.time` is replaced by each node time.
pub fn write_trajectory(path: &Path, header: &CheckpointHeader, traj: &Trajectory) -> Result<()> {
    let mut bytes = Vec::new();
    for (t, f) in traj.nodes().iter().zip(traj.fields()) {
        bytes.extend(encode(&header.at(*t), f)?);
    }
    write_atomic(path, &bytes)
}

pub fn read_trajectory(path: &Path, provenance: Provenance) -> Result<(CheckpointHeader, Trajectory)> {
    let bytes = std::fs::read(path)?;
    let mut off = 0;
    let (mut nodes, mut fields) = (Vec::new(), Vec::new());
    let mut first: Option<CheckpointHeader> = None;
    while off < bytes.len() {
        let (h, f, used) = decode(&bytes[off..])?;
        if let Some(h0) = &first {
            h.check_matches(h0).map_err(|e| Error::Checkpoint(format!("mixed records: {e}")))?;
        } else {
            first = Some(h);
        }
        nodes.push(h.time);
        fields.push(f);
        off += used;
    }
    let header = first.ok_or_else(|| Error::Checkpoint("empty trajectory file".into()))?;
    Ok((header, Trajectory::new(nodes, fields, provenance)?))
}
