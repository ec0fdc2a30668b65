//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | field            | type                               |
//! |------------------|------------------------------------|
//! | magic            | `b"AGUMODEL"`                      |
//! | version          | `u32` (= 1)                        |
//! | arch tag         | `u8` (gcn, sgc, gat, gin, sage)    |
//! | layers K         | `u32`                              |
//! | dims             | `u32` count, then `u32` per entry  |
//! | seed             | `u64`                              |
//! | parameters       | `u32` count, then per parameter:   |
//! |                  | `u16` name length, UTF-8 name,     |
//! |                  | `u32` rows, `u32` cols,            |
//! |                  | `rows*cols` x `f64`                |
//! | content hash     | SHA-256 of every preceding byte    |

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{init_model, Arch, Model};
use crate::error::{AguError, Result};
use crate::numeric::Tensor;

const MAGIC: &[u8; 8] = b"AGUMODEL";
const VERSION: u32 = 1;

pub fn encode_checkpoint(m: &Model) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.push(m.arch().tag());
    b.extend_from_slice(&(m.layers() as u32).to_le_bytes());
    b.extend_from_slice(&(m.dims().len() as u32).to_le_bytes());
    for &d in m.dims() {
        b.extend_from_slice(&(d as u32).to_le_bytes());
    }
    b.extend_from_slice(&m.seed().to_le_bytes());
    b.extend_from_slice(&(m.params().len() as u32).to_le_bytes());
    for (name, p) in m.param_names().iter().zip(m.params()) {
        b.extend_from_slice(&(name.len() as u16).to_le_bytes());
        b.extend_from_slice(name.as_bytes());
        b.extend_from_slice(&(p.rows() as u32).to_le_bytes());
        b.extend_from_slice(&(p.cols() as u32).to_le_bytes());
        for x in p.data() {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&b);
    b.extend_from_slice(&digest);
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(AguError::Checkpoint("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 32 {
        return Err(AguError::Checkpoint("file too short".into()));
    }
    let (body, stored) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != stored {
        return Err(AguError::Checkpoint("content hash mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(AguError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AguError::Checkpoint(format!("unsupported version {version}")));
    }
    let tag = r.u8()?;
    let arch = Arch::from_tag(tag).ok_or_else(|| AguError::Checkpoint(format!("unknown arch tag {tag}")))?;
    let layers = r.u32()? as usize;
    let ndims = r.u32()? as usize;
    let dims = (0..ndims)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != layers + 1 {
        return Err(AguError::Checkpoint(format!(
            "{layers} layers but {} dims",
            dims.len()
        )));
    }
    let seed = r.u64()?;
    let mut model = init_model(arch, &dims, seed)?;
    let count = r.u32()? as usize;
    if count != model.params().len() {
        return Err(AguError::Checkpoint(format!(
            "{count} parameters, architecture needs {}",
            model.params().len()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for i in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| AguError::Checkpoint("parameter name is not UTF-8".into()))?;
        if name != model.param_names()[i] {
            return Err(AguError::Checkpoint(format!(
                "parameter {i} is {name:?}, expected {:?}",
                model.param_names()[i]
            )));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.push(Tensor::from_vec(rows, cols, data)?);
    }
    if r.pos != body.len() {
        return Err(AguError::Checkpoint("trailing bytes before hash".into()));
    }
    model
        .set_params(params)
        .map_err(|e| AguError::Checkpoint(e.to_string()))?;
    Ok(model)
}

pub fn save_checkpoint(path: &Path, m: &Model) -> Result<()> {
    fs::write(path, encode_checkpoint(m)).map_err(|e| AguError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| AguError::io(path, e))?;
    decode_checkpoint(&bytes)
}
