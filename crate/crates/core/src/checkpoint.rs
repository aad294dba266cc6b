//! Flat binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "GNAE" | version u32 | kind u8 | num_features u64 | hidden u64 | dim u64 | scale f64
//! block_count u64 | { rows u64 | cols u64 | rows*cols f64 } * block_count
//! ```
//!
//! Blocks follow [`Model::params`] order. `hidden` is 0 and `scale` is NaN
//! when the model has no such component.

use std::fs;
use std::path::Path;

use crate::encoders::{Activation, GcnEncoder, GncnEncoder};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{MeanEncoder, Model, ModelKind};

const MAGIC: &[u8; 4] = b"GNAE";
const VERSION: u32 = 1;

fn kind_code(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Gae => 0,
        ModelKind::Vgae => 1,
        ModelKind::Gnae => 2,
        ModelKind::Vgnae => 3,
    }
}

fn kind_from_code(code: u8) -> Result<ModelKind> {
    ModelKind::ALL
        .into_iter()
        .find(|&k| kind_code(k) == code)
        .ok_or_else(|| Error::Checkpoint(format!("unknown model code {code}")))
}

pub fn encode(model: &Model) -> Vec<u8> {
    let params = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind_code(model.kind()));
    out.extend_from_slice(&(model.num_features() as u64).to_le_bytes());
    out.extend_from_slice(&(model.hidden_dim().unwrap_or(0) as u64).to_le_bytes());
    out.extend_from_slice(&(model.embedding_dim() as u64).to_le_bytes());
    out.extend_from_slice(&model.scale().unwrap_or(f64::NAN).to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        let m = p.value();
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("dimension overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| Error::Checkpoint(format!("block {rows}x{cols} exceeds file size")))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data)
    }
}

fn expect_shape(m: &Matrix, shape: (usize, usize), what: &str) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::Checkpoint(format!(
            "{what} block is {:?}, header implies {shape:?}",
            m.shape()
        )));
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = kind_from_code(r.u8()?)?;
    let num_features = r.usize()?;
    let hidden = r.usize()?;
    let dim = r.usize()?;
    let scale = r.f64()?;
    let count = r.usize()?;
    let expected = match kind {
        ModelKind::Gae => 2,
        ModelKind::Vgae => 4,
        ModelKind::Gnae => 1,
        ModelKind::Vgnae => 3,
    };
    if count != expected {
        return Err(Error::Checkpoint(format!("{kind} expects {expected} blocks, found {count}")));
    }
    let blocks = (0..count).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut blocks = blocks.into_iter();
    let gcn = |blocks: &mut dyn Iterator<Item = Matrix>, what: &str| -> Result<GcnEncoder> {
        let w1 = blocks.next().unwrap();
        let w2 = blocks.next().unwrap();
        expect_shape(&w1, (num_features, hidden), what)?;
        expect_shape(&w2, (hidden, dim), what)?;
        GcnEncoder::from_weights(w1, w2, Activation::Relu)
    };
    let mean = if kind.uses_gncn() {
        let w = blocks.next().unwrap();
        expect_shape(&w, (num_features, dim), "gncn")?;
        MeanEncoder::Gncn(GncnEncoder::from_weights(w, scale).map_err(|e| Error::Checkpoint(e.to_string()))?)
    } else {
        MeanEncoder::Gcn(gcn(&mut blocks, "mean gcn")?)
    };
    let log_sigma = if kind.is_variational() {
        Some(gcn(&mut blocks, "log-sigma gcn")?)
    } else {
        None
    };
    Model::from_parts(kind, mean, log_sigma)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
