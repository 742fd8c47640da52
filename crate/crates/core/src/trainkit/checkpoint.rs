//! Binary checkpoint: magic, version, payload length, payload, SHA-256 of
//! the payload. All integers and floats are little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::optim::OptimizerState;
use crate::encoders::{predict_image, Probabilities};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::gradnet::{Owner, ParameterStore, Tensor};
use crate::synthgen::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EDJCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub vocabulary: Vocabulary,
    pub params: ParameterStore,
    pub optimizer: OptimizerState,
}

/// Class probabilities from the image stream alone.
pub fn infer_image(checkpoint: &Checkpoint, image: &Tensor) -> Result<Probabilities> {
    predict_image(image, &checkpoint.params, &checkpoint.config.model)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn floats(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        for x in xs {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Integrity("checkpoint payload ends early".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self, width: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(width) > self.buf.len() - self.pos {
            return Err(Error::Integrity("checkpoint length field out of range".into()));
        }
        Ok(n)
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }
    fn floats(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn integrity(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

impl Checkpoint {
    fn payload(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(serde_json::to_string(&self.config).expect("serializable").as_bytes());
        let words = &self.vocabulary.tokens()[3..];
        w.bytes(serde_json::to_string(words).expect("serializable").as_bytes());
        w.u32(self.params.len() as u32);
        for (name, p) in self.params.iter() {
            w.bytes(name.as_bytes());
            w.u8(p.owner.code());
            w.u32(p.value.shape().len() as u32);
            for &d in p.value.shape() {
                w.u64(d as u64);
            }
            w.floats(p.value.data());
        }
        w.u64(self.optimizer.step);
        for (m, v) in self.optimizer.m.iter().zip(&self.optimizer.v) {
            w.floats(m);
            w.floats(v);
        }
        w.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(integrity("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        if bytes.len() != HEADER_LEN + len + DIGEST_LEN {
            return Err(integrity(format!(
                "expected {} bytes, found {}",
                HEADER_LEN + len + DIGEST_LEN,
                bytes.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
        if Sha256::digest(payload).as_slice() != &bytes[HEADER_LEN + len..] {
            return Err(integrity("checksum mismatch"));
        }
        Self::parse_payload(payload)
    }

    fn parse_payload(payload: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: payload, pos: 0 };
        let config: ExperimentConfig = serde_json::from_slice(r.bytes()?)?;
        let words: Vec<String> = serde_json::from_slice(r.bytes()?)?;
        let vocabulary = Vocabulary::from_tokens(words);

        let mut params = ParameterStore::new();
        let n = r.u32()?;
        for _ in 0..n {
            let name = std::str::from_utf8(r.bytes()?).map_err(|_| integrity("parameter name is not UTF-8"))?;
            let owner = Owner::from_code(r.u8()?).ok_or_else(|| integrity("unknown parameter owner"))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let data = r.floats()?;
            let value = Tensor::new(shape, data).map_err(|_| integrity(format!("bad shape for {name}")))?;
            params.insert(name, owner, value)?;
        }
        let step = r.u64()?;
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for _ in 0..params.len() {
            m.push(r.floats()?);
            v.push(r.floats()?);
        }
        if r.pos != payload.len() {
            return Err(integrity("trailing bytes in checkpoint payload"));
        }
        let optimizer = OptimizerState { m, v, step };
        if !optimizer.matches(&params) {
            return Err(integrity("optimizer state does not match the parameters"));
        }
        Ok(Checkpoint {
            config,
            vocabulary,
            params,
            optimizer,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, &checkpoint.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
