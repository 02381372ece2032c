//! Binary checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "GRUCNNCK" | version u32 | spec json len u32 | spec json
//! spec digest [32] | global step u64 | rng seed u64 | rng word pos u128
//! entry count u32 | entries: name len u16, name, rank u8, dims u64.., offset u64
//! blob len u64 | blob f64..
//! sha256 of everything above [32]
//! ```
//!
//! Optimizer moments are stored as extra entries prefixed `adam.m/` and
//! `adam.v/`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::network::Model;
use super::params::ParamStore;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GRUCNNCK";
pub const FORMAT_VERSION: u32 = 1;

const FIRST_MOMENT: &str = "adam.m/";
const SECOND_MOMENT: &str = "adam.v/";

/// Adam moment estimates, named like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerMoments {
    pub first: ParamStore,
    pub second: ParamStore,
}

/// Position of the training RNG stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub moments: Option<OptimizerMoments>,
    pub step: u64,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            spec: model.spec().clone(),
            params: model.params().clone(),
            moments: None,
            step: 0,
            rng: RngState::default(),
        }
    }

    /// Builds the model, checking the parameters against `expected` when
    /// given.
    pub fn model_for(&self, expected: Option<&ModelSpec>) -> Result<Model> {
        if let Some(spec) = expected {
            if spec != &self.spec {
                // Names and shapes decide compatibility; report the first clash.
                Model::from_params(spec.clone(), self.params.clone())?;
            }
        }
        Model::from_params(self.spec.clone(), self.params.clone())
    }

    pub fn model(&self) -> Result<Model> {
        self.model_for(None)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries: Vec<(String, &Tensor)> = self
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t))
            .collect();
        if let Some(m) = &self.moments {
            entries.extend(
                m.first
                    .iter()
                    .map(|(n, t)| (format!("{FIRST_MOMENT}{n}"), t)),
            );
            entries.extend(
                m.second
                    .iter()
                    .map(|(n, t)| (format!("{SECOND_MOMENT}{n}"), t)),
            );
        }
        let spec_json = serde_json::to_vec(&self.spec).expect("spec serializes");

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&spec_json);
        out.extend_from_slice(&self.spec.digest());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, t) in &entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += t.numel() as u64;
        }
        out.extend_from_slice(&offset.to_le_bytes());
        for (_, t) in &entries {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(Error::Checkpoint(
                "checksum mismatch (truncated or corrupt file)".into(),
            ));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let spec_len = r.u32()? as usize;
        let spec: ModelSpec = serde_json::from_slice(r.take(spec_len)?)
            .map_err(|e| Error::Checkpoint(format!("bad model spec: {e}")))?;
        let digest = r.take(32)?;
        if digest != spec.digest() {
            return Err(Error::Checkpoint("spec digest mismatch".into()));
        }
        let step = r.u64()?;
        let rng = RngState {
            seed: r.u64()?,
            word_pos: r.u128()?,
        };
        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let offset = r.u64()? as usize;
            table.push((name, shape, offset));
        }
        let blob_len = r.u64()? as usize;
        let blob = r.take(
            blob_len
                .checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("blob too large".into()))?,
        )?;
        if r.pos != body.len() {
            return Err(Error::Checkpoint(
                "trailing bytes after parameter blob".into(),
            ));
        }
        let mut params = ParamStore::new();
        let mut first = ParamStore::new();
        let mut second = ParamStore::new();
        for (name, shape, offset) in table {
            let n: usize = shape.iter().product();
            if offset + n > blob_len {
                return Err(Error::Checkpoint(format!("entry {name} overruns the blob")));
            }
            let data = blob[offset * 8..(offset + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data)
                .map_err(|e| Error::Checkpoint(format!("entry {name}: {e}")))?;
            if let Some(p) = name.strip_prefix(FIRST_MOMENT) {
                first.insert(p, t);
            } else if let Some(p) = name.strip_prefix(SECOND_MOMENT) {
                second.insert(p, t);
            } else {
                params.insert(name, t);
            }
        }
        let moments =
            (!first.is_empty() || !second.is_empty()).then_some(OptimizerMoments { first, second });
        Ok(Self {
            spec,
            params,
            moments,
            step,
            rng,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
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

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
}
