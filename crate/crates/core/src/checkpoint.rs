//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "FROSTCKP"
//! version   u32
//! config    u32 length + UTF-8 JSON of ArchitectureConfig
//! count     u32
//! arrays    count x { u32 name length, name, u32 rank, rank x u64 dims, f64 values }
//! end       8 bytes  "ENDFROST"
//! ```
//!
//! Arrays are `block{i}.kernels|bias|gamma|beta|running_mean|running_var`,
//! `dense.weights`, `dense.bias`, and optionally `input.mean` / `input.std`
//! for the feature standardizer fitted at training time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::model::{build_model, ArchitectureConfig, ModelParams};
use crate::ops::RunningStats;
use crate::tensor::NumericArray;

const MAGIC: &[u8; 8] = b"FROSTCKP";
const END: &[u8; 8] = b"ENDFROST";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub standardizer: Option<Standardizer>,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_array(buf: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    put_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
    put_u32(buf, shape.len() as u32);
    for &d in shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let params = &ckpt.params;
    let mut arrays: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
    for (i, b) in params.blocks.iter().enumerate() {
        for (name, a) in [
            ("kernels", &b.kernels),
            ("bias", &b.bias),
            ("gamma", &b.gamma),
            ("beta", &b.beta),
        ] {
            arrays.push((format!("block{i}.{name}"), a.shape().to_vec(), a.data()));
        }
        let c = b.running.channels();
        arrays.push((format!("block{i}.running_mean"), vec![c], &b.running.mean));
        arrays.push((format!("block{i}.running_var"), vec![c], &b.running.var));
    }
    arrays.push((
        "dense.weights".into(),
        params.dense_weights.shape().to_vec(),
        params.dense_weights.data(),
    ));
    arrays.push((
        "dense.bias".into(),
        params.dense_bias.shape().to_vec(),
        params.dense_bias.data(),
    ));
    if let Some(s) = &ckpt.standardizer {
        arrays.push(("input.mean".into(), vec![s.dim()], &s.mean));
        arrays.push(("input.std".into(), vec![s.dim()], &s.std));
    }

    let config = serde_json::to_vec(&params.config)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_u32(&mut buf, config.len() as u32);
    buf.extend_from_slice(&config);
    put_u32(&mut buf, arrays.len() as u32);
    for (name, shape, values) in &arrays {
        put_array(&mut buf, name, shape, values);
    }
    buf.extend_from_slice(END);
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode(bytes: &[u8]) -> std::result::Result<(ArchitectureConfig, BTreeMap<String, (Vec<usize>, Vec<f64>)>), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint file (bad magic)".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("format version {version}, expected {FORMAT_VERSION}"));
    }
    let len = r.u32()? as usize;
    let config: ArchitectureConfig =
        serde_json::from_slice(r.take(len)?).map_err(|e| format!("architecture config: {e}"))?;
    let count = r.u32()?;
    let mut arrays = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "array name is not UTF-8".to_string())?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| format!("{name}: dimension too large"))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| format!("{name}: shape {shape:?} overflows"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| format!("{name}: too large"))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if arrays.insert(name.clone(), (shape, values)).is_some() {
            return Err(format!("duplicate array {name}"));
        }
    }
    if r.take(8)? != END {
        return Err("missing end marker".into());
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((config, arrays))
}

/// Rebuilds a checkpoint, checking every array against the shapes implied
/// by the embedded architecture config.
pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let (config, mut arrays) = decode(bytes)?;
    // a freshly built model provides the expected shapes
    let mut params = build_model(&config, 0).map_err(|e| e.to_string())?;
    type Arrays = BTreeMap<String, (Vec<usize>, Vec<f64>)>;
    fn take_from(arrays: &mut Arrays, name: String, shape: &[usize]) -> std::result::Result<Vec<f64>, String> {
        let (s, v) = arrays.remove(&name).ok_or_else(|| format!("missing array {name}"))?;
        if s != shape {
            return Err(format!("array {name} has shape {s:?}, config implies {shape:?}"));
        }
        Ok(v)
    }
    let mut take = |name: String, shape: &[usize]| take_from(&mut arrays, name, shape);
    let fill = |a: &mut NumericArray, v: Vec<f64>| a.data_mut().copy_from_slice(&v);
    for (i, b) in params.blocks.iter_mut().enumerate() {
        let v = take(format!("block{i}.kernels"), b.kernels.shape())?;
        fill(&mut b.kernels, v);
        let v = take(format!("block{i}.bias"), b.bias.shape())?;
        fill(&mut b.bias, v);
        let v = take(format!("block{i}.gamma"), b.gamma.shape())?;
        fill(&mut b.gamma, v);
        let v = take(format!("block{i}.beta"), b.beta.shape())?;
        fill(&mut b.beta, v);
        let c = b.running.channels();
        b.running = RunningStats {
            mean: take(format!("block{i}.running_mean"), &[c])?,
            var: take(format!("block{i}.running_var"), &[c])?,
        };
    }
    let v = take("dense.weights".into(), params.dense_weights.shape())?;
    fill(&mut params.dense_weights, v);
    let v = take("dense.bias".into(), params.dense_bias.shape())?;
    fill(&mut params.dense_bias, v);
    let d = config.input_length;
    let standardizer = if arrays.contains_key("input.mean") || arrays.contains_key("input.std") {
        Some(Standardizer {
            mean: take_from(&mut arrays, "input.mean".into(), &[d])?,
            std: take_from(&mut arrays, "input.std".into(), &[d])?,
        })
    } else {
        None
    };
    if let Some(extra) = arrays.keys().next() {
        return Err(format!("unexpected array {extra}"));
    }
    Ok(Checkpoint { params, standardizer })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}

/// Loads a checkpoint and requires its architecture to equal `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ArchitectureConfig) -> Result<Checkpoint> {
    let path = path.as_ref();
    let ckpt = load_checkpoint(path)?;
    if &ckpt.params.config != expected {
        let found = &ckpt.params.config;
        let msg = if found.input_length != expected.input_length {
            format!(
                "input_length {} does not match the expected {}",
                found.input_length, expected.input_length
            )
        } else {
            format!("architecture {found:?} does not match the expected {expected:?}")
        };
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        });
    }
    Ok(ckpt)
}
