//! Binary model container: magic, version, JSON header, little-endian f32 data.
//!
//! The header records the model spec plus the name, shape and element offset
//! of every parameter, so a file is self-describing and can be checked against
//! the architecture it claims to hold.

use std::fs;
use std::io::Write;
use std::path::Path;

use crackseq_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec};
use crate::error::{data_err, Error, Result};

const MAGIC: &[u8; 8] = b"CRACKSEQ";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    tensors: Vec<Entry>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// A loaded model with the free-form metadata stored next to it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &serde_json::Value) -> Result<()> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (_, p) in model.params().iter() {
        tensors.push(Entry { name: p.name.clone(), shape: p.value().shape().to_vec(), offset });
        offset += p.value().len();
    }
    let header = serde_json::to_vec(&Header { spec: model.spec(), tensors, meta: meta.clone() })?;
    let mut buf = Vec::with_capacity(20 + header.len() + offset * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for (_, p) in model.params().iter() {
        for v in p.value().data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    // write-then-rename so an interrupted save never leaves a torn file
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| data_err!("{}: {what}", path.display());
    if buf.len() < 20 || &buf[..8] != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
    let body = buf.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    let data = &buf[20 + hlen..];

    let mut model = Model::new(&header.spec, 0).map_err(|e| bad(&format!("invalid spec: {e}")))?;
    let ids: Vec<_> = model.params().ids().collect();
    if ids.len() != header.tensors.len() {
        return Err(bad(&format!("{} tensors stored, architecture has {}", header.tensors.len(), ids.len())));
    }
    for (id, entry) in ids.into_iter().zip(&header.tensors) {
        let param = model.params().get(id);
        if param.name != entry.name || param.value().shape() != entry.shape.as_slice() {
            return Err(bad(&format!("tensor {} {:?} does not match {} {:?}", entry.name, entry.shape, param.name, param.value().shape())));
        }
        let n: usize = entry.shape.iter().product();
        let bytes = data.get(entry.offset * 4..(entry.offset + n) * 4).ok_or_else(|| bad("truncated data"))?;
        let vals = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::from_vec(&entry.shape, vals).map_err(|e| bad(&e.to_string()))?;
        if !t.is_finite() {
            return Err(bad(&format!("non-finite values in {}", entry.name)));
        }
        model.params_mut().set(id, t);
    }
    Ok(Checkpoint { model, meta: header.meta })
}
