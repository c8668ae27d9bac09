//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `RSQCKPT1`, format version u32, precision
//! bits u8, JSON config block (u32 length + bytes), JSON vocabulary block,
//! update counter u64, tensor count u32, then per tensor a length-prefixed
//! name, rank u8, dims as u64 and the f64 payload; a CRC32 of everything
//! preceding closes the file.

use std::fs;
use std::path::Path;

use super::params::ParameterSet;
use super::tensor::Tensor;
use super::vocab::Vocabulary;
use super::{ModelConfig, ModelError};
use crate::fsutil::write_atomic;

const MAGIC: &[u8; 8] = b"RSQCKPT1";
const FORMAT_VERSION: u32 = 1;
const PRECISION_BITS: u8 = 64;

pub fn save_checkpoint(
    params: &ParameterSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<(), ModelError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(PRECISION_BITS);

    let cfg_json = serde_json::to_vec(cfg).expect("config serialization");
    buf.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg_json);

    let vocab_json = serde_json::to_vec(vocab).expect("vocab serialization");
    buf.extend_from_slice(&(vocab_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&vocab_json);

    buf.extend_from_slice(&params.step.to_le_bytes());
    buf.extend_from_slice(&(params.tensor_count() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(tensor.shape().len() as u8);
        for &dim in tensor.shape() {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &x in tensor.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    write_atomic(path, &buf)?;
    Ok(())
}

pub fn load_checkpoint(
    path: &Path,
) -> Result<(ParameterSet, ModelConfig, Vocabulary), ModelError> {
    let buf = fs::read(path)?;
    if buf.len() < MAGIC.len() + 4 {
        return Err(ModelError::ChecksumMismatch);
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored_crc = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(ModelError::ChecksumMismatch);
    }

    let mut r = Reader { buf: body, pos: 0 };
    let magic = r.bytes(8)?;
    if magic != MAGIC {
        return Err(ModelError::VersionMismatch("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let precision = r.u8()?;
    if precision != PRECISION_BITS {
        return Err(ModelError::VersionMismatch(format!(
            "precision {precision} bits, expected {PRECISION_BITS}"
        )));
    }

    let cfg_len = r.u32()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.bytes(cfg_len)?)
        .map_err(|e| ModelError::VersionMismatch(format!("config block: {e}")))?;
    let vocab_len = r.u32()? as usize;
    let vocab: Vocabulary = serde_json::from_slice(r.bytes(vocab_len)?)
        .map_err(|e| ModelError::VersionMismatch(format!("vocabulary block: {e}")))?;

    let step = r.u64()?;
    let count = r.u32()? as usize;
    let mut params = ParameterSet::new();
    params.step = step;
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?.to_vec())
            .map_err(|_| ModelError::VersionMismatch("tensor name not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(r.bytes(8)?.try_into().unwrap()));
        }
        params.insert(&name, Tensor::from_vec(&shape, data));
    }
    if r.pos != r.buf.len() {
        return Err(ModelError::VersionMismatch("trailing bytes".into()));
    }
    Ok((params, cfg, vocab))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::ChecksumMismatch);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}
