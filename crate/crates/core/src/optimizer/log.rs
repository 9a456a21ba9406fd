//! Seed-replay update log.
//!
//! Binary layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `DPZO`                            |
//! | 4      | 2    | format version (u16)                    |
//! | 6      | 2    | flags (u16); bit 0 = compact coefficients |
//! | 8      | 8    | parameter dimension (u64)               |
//! | 16     | 8    | root seed (u64)                         |
//! | 24     | 8    | record count (u64)                      |
//! | 32     | ...  | records                                 |
//!
//! Each record is the perturbation seed (u64) followed by the coefficient:
//! an IEEE-754 binary64 (8 bytes), or binary16 (2 bytes) in compact mode.
//! Compact logs are lossy; replay then matches training only up to the
//! half-precision rounding of each coefficient.

use std::io::{Read, Write};
use std::path::Path;

use half::f16;

use crate::oracle::ParamVector;

use super::spsa::perturbation;
use super::OptimError;

pub const LOG_MAGIC: [u8; 4] = *b"DPZO";
/// Bumped whenever the layout, the PRNG stream or the Gaussian transform
/// changes.
pub const LOG_FORMAT_VERSION: u16 = 1;
const FLAG_COMPACT: u16 = 1;

/// One update: `theta <- theta + coeff * z(seed)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateRecord {
    pub seed: u64,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateLog {
    pub version: u16,
    pub compact: bool,
    pub dim: u64,
    pub root_seed: u64,
    pub records: Vec<UpdateRecord>,
}

impl UpdateLog {
    pub fn new(dim: usize, root_seed: u64) -> Self {
        UpdateLog {
            version: LOG_FORMAT_VERSION,
            compact: false,
            dim: dim as u64,
            root_seed,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A compact copy with coefficients rounded to half precision.
    pub fn to_compact(&self) -> Self {
        UpdateLog {
            compact: true,
            records: self
                .records
                .iter()
                .map(|r| UpdateRecord {
                    seed: r.seed,
                    coeff: f16::from_f64(r.coeff).to_f64(),
                })
                .collect(),
            ..self.clone()
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), OptimError> {
        w.write_all(&LOG_MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        let flags = if self.compact { FLAG_COMPACT } else { 0 };
        w.write_all(&flags.to_le_bytes())?;
        w.write_all(&self.dim.to_le_bytes())?;
        w.write_all(&self.root_seed.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.seed.to_le_bytes())?;
            if self.compact {
                w.write_all(&f16::from_f64(r.coeff).to_le_bytes())?;
            } else {
                w.write_all(&r.coeff.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, OptimError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "header")?;
        if magic != LOG_MAGIC {
            return Err(OptimError::MalformedLog("bad magic".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut r, "version")?);
        if version != LOG_FORMAT_VERSION {
            return Err(OptimError::UnknownVersion(version));
        }
        let flags = u16::from_le_bytes(read_array(&mut r, "flags")?);
        if flags & !FLAG_COMPACT != 0 {
            return Err(OptimError::MalformedLog(format!("unknown flags {flags:#06x}")));
        }
        let compact = flags & FLAG_COMPACT != 0;
        let dim = u64::from_le_bytes(read_array(&mut r, "dim")?);
        let root_seed = u64::from_le_bytes(read_array(&mut r, "root seed")?);
        let count = u64::from_le_bytes(read_array(&mut r, "record count")?);
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let seed = u64::from_le_bytes(read_array(&mut r, "record seed")?);
            let coeff = if compact {
                f16::from_le_bytes(read_array(&mut r, "record coeff")?).to_f64()
            } else {
                f64::from_le_bytes(read_array(&mut r, "record coeff")?)
            };
            if !coeff.is_finite() {
                return Err(OptimError::MalformedLog("non-finite coefficient".into()));
            }
            records.push(UpdateRecord { seed, coeff });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(OptimError::MalformedLog("trailing bytes".into()));
        }
        Ok(UpdateLog {
            version,
            compact,
            dim,
            root_seed,
            records,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, OptimError> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OptimError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OptimError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), OptimError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => OptimError::MalformedLog(format!("truncated {what}")),
        _ => OptimError::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N], OptimError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

/// `theta_i <- theta_i + coeff * z_i` with `z` regenerated from the seed.
pub fn apply_record(theta: &mut [f64], record: &UpdateRecord) {
    let z = perturbation(record.seed, theta.len());
    for (t, z) in theta.iter_mut().zip(&z) {
        *t += record.coeff * z;
    }
}

/// Applies every record of `log` to `init`, in order.
pub fn replay(init: &ParamVector, log: &UpdateLog) -> Result<ParamVector, OptimError> {
    if log.version != LOG_FORMAT_VERSION {
        return Err(OptimError::UnknownVersion(log.version));
    }
    if log.dim != init.dim() as u64 {
        return Err(OptimError::DimensionMismatch {
            expected: log.dim as usize,
            got: init.dim(),
        });
    }
    let mut theta = init.clone();
    for r in &log.records {
        apply_record(&mut theta, r);
    }
    Ok(theta)
}
