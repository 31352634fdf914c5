//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "TXRCKPT\0"
//! version    u32
//! header_len u64
//! header     header_len bytes of JSON: config, rng_seed, parameter names
//!            and shapes, optional optimizer step
//! payload    f64 values: every parameter in header order, then (if the
//!            optimizer step is present) all first moments, then all
//!            second moments
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{parameter_layout, Model};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TXRCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// Optimizer state carried along so training can resume.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState {
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub rng_seed: u64,
    pub training: Option<TrainingState>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    rng_seed: u64,
    params: Vec<ParamEntry>,
    optimizer_step: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, rng_seed: u64, training: Option<TrainingState>) -> Self {
        Self {
            config: model.config().clone(),
            params: model.store().clone(),
            rng_seed,
            training,
        }
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_store(self.config, self.params)
    }

    pub fn format_version(&self) -> u32 {
        FORMAT_VERSION
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            rng_seed: self.rng_seed,
            params: self
                .params
                .iter()
                .map(|(_, p)| ParamEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                })
                .collect(),
            optimizer_step: self.training.as_ref().map(|t| t.step),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.params.num_scalars() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let mut put = |t: &Tensor| {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for (_, p) in self.params.iter() {
            put(&p.value);
        }
        if let Some(state) = &self.training {
            state.first_moment.iter().for_each(&mut put);
            state.second_moment.iter().for_each(&mut put);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        header.config.validate()?;

        let layout = parameter_layout(&header.config);
        for entry in &header.params {
            if !layout.iter().any(|s| s.name == entry.name) {
                return Err(Error::Checkpoint(format!("unknown parameter `{}`", entry.name)));
            }
        }
        let mut params = ParamStore::new();
        let mut shapes = Vec::with_capacity(layout.len());
        for spec in &layout {
            let entry = header
                .params
                .iter()
                .find(|e| e.name == spec.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", spec.name)))?;
            if entry.shape != spec.shape {
                return Err(Error::ParamShape {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: entry.shape.clone(),
                });
            }
            shapes.push(entry.shape.clone());
        }
        // Payload follows header order; rebuild in layout order.
        let mut values: Vec<Option<Tensor>> = vec![None; layout.len()];
        for entry in &header.params {
            let idx = layout.iter().position(|s| s.name == entry.name).unwrap();
            values[idx] = Some(r.tensor(&entry.shape)?);
        }
        for (spec, value) in layout.iter().zip(values) {
            params.add(spec.name.clone(), value.expect("every entry read"), spec.decay)?;
        }
        let training = match header.optimizer_step {
            None => None,
            Some(step) => {
                let mut first = Vec::with_capacity(shapes.len());
                let mut second = Vec::with_capacity(shapes.len());
                for entry in &header.params {
                    first.push((entry.name.as_str(), r.tensor(&entry.shape)?));
                }
                for entry in &header.params {
                    second.push((entry.name.as_str(), r.tensor(&entry.shape)?));
                }
                let reorder = |v: Vec<(&str, Tensor)>| -> Vec<Tensor> {
                    layout
                        .iter()
                        .map(|s| v.iter().find(|(n, _)| *n == s.name).unwrap().1.clone())
                        .collect()
                };
                Some(TrainingState {
                    step,
                    first_moment: reorder(first),
                    second_moment: reorder(second),
                })
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config: header.config,
            params,
            rng_seed: header.rng_seed,
            training,
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
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}
