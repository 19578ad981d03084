//! Weights file: `PCQW`, u32 version, u32 layer count, then per layer u32
//! in-dim, u32 out-dim, the row-major weights and the bias (all f32,
//! little-endian), and a trailing CRC32 of everything before it.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::network::{Linear, Network, LAYER_DIMS};
use super::ScorerWeights;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PCQW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn write_weights(w: &ScorerWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * w.param_count() + 8 * LAYER_DIMS.len() + 4);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.layers().len() as u32).to_le_bytes());
    for l in w.layers() {
        let (i, o) = l.dims();
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(o as u32).to_le_bytes());
        for v in l.w.iter().chain(l.b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::WeightsFormat("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Parses a weights file. The checksum is verified first, so truncation or
/// corruption anywhere is reported as [`Error::Checksum`]; layer shapes
/// that disagree with the architecture are [`Error::DimMismatch`].
pub fn read_weights(bytes: &[u8]) -> Result<ScorerWeights> {
    if bytes.len() < 4 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(&[]),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::WeightsFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::WeightsFormat(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count != LAYER_DIMS.len() {
        return Err(Error::DimMismatch {
            layer: count,
            expected: (LAYER_DIMS.len(), 0),
            found: (count, 0),
        });
    }
    let mut layers = Vec::with_capacity(count);
    for (l, &want) in LAYER_DIMS.iter().enumerate() {
        let found = (r.u32()? as usize, r.u32()? as usize);
        if found != want {
            return Err(Error::DimMismatch {
                layer: l,
                expected: want,
                found,
            });
        }
        let w = Array2::from_shape_vec(found, r.f32s(found.0 * found.1)?).expect("sized");
        let b = Array1::from(r.f32s(found.1)?);
        layers.push(Linear { w, b });
    }
    if r.pos != body.len() {
        return Err(Error::WeightsFormat(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Network::from_layers(layers)
}

pub fn save_weights(path: impl AsRef<Path>, w: &ScorerWeights) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_weights(w)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ScorerWeights> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes)
}
