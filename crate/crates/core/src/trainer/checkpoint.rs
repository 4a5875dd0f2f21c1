//! Binary checkpoint.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic  b"CECP"
//! u32    version (= 1)
//! u32    F (feature buckets)
//! F × f32 theta
//! u8     baseline kind (0 linear, 1 hidden-layer)
//! u32    baseline parameter count P
//! P × f32 baseline parameters
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::baseline::{BaselineKind, ValueBaseline};
use crate::policy::PolicyParams;

const MAGIC: &[u8; 4] = b"CECP";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("unknown baseline kind {0}")]
    BadBaseline(u8),
    #[error("baseline parameter count {0} does not match its kind")]
    BadBaselineShape(u32),
    #[error("trailing bytes after checkpoint")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub baseline: ValueBaseline,
}

impl Checkpoint {
    /// Round every parameter through f32, as a write/read cycle would.
    pub fn quantized(&self) -> Checkpoint {
        let q = |v: &[f64]| v.iter().map(|&x| f64::from(x as f32)).collect::<Vec<_>>();
        Checkpoint {
            params: PolicyParams {
                theta: q(&self.params.theta),
            },
            baseline: ValueBaseline::from_flat(self.baseline.kind(), &q(&self.baseline.flat()))
                .expect("same shape"),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.params.dim() as u32).to_le_bytes())?;
        for v in &self.params.theta {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        let kind = match self.baseline.kind() {
            BaselineKind::Linear => 0u8,
            BaselineKind::Mlp => 1u8,
        };
        w.write_all(&[kind])?;
        let flat = self.baseline.flat();
        w.write_all(&(flat.len() as u32).to_le_bytes())?;
        for v in &flat {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        match r.read_exact(&mut magic) {
            Ok(()) if &magic == MAGIC => {}
            Ok(()) => return Err(CheckpointError::BadMagic),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(CheckpointError::BadMagic),
            Err(e) => return Err(e.into()),
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let f = read_u32(&mut r)? as usize;
        let theta = read_f32s(&mut r, f)?;
        let mut kind = [0u8; 1];
        fill(&mut r, &mut kind)?;
        let kind = match kind[0] {
            0 => BaselineKind::Linear,
            1 => BaselineKind::Mlp,
            k => return Err(CheckpointError::BadBaseline(k)),
        };
        let count = read_u32(&mut r)?;
        let flat = read_f32s(&mut r, count as usize)?;
        let baseline = ValueBaseline::from_flat(kind, &flat).ok_or(CheckpointError::BadBaselineShape(count))?;
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(CheckpointError::TrailingBytes);
        }
        Ok(Checkpoint {
            params: PolicyParams { theta },
            baseline,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
        _ => e.into(),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    fill(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut buf = vec![0u8; n * 4];
    fill(r, &mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}
