//! Binary checkpoint layout (all integers little endian):
//!
//! ```text
//! magic      8 bytes  "BEFLOWCK"
//! version    u32
//! header     u32 length + UTF-8 TOML (model config, rbf grid, element table)
//! tensors    u32 count, then per tensor:
//!              u16 name length + name, u32 rank, u64 per dimension,
//!              f64 values in row-major order
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{Layout, Parameters};
use super::Model;
use crate::chem::{ElementInfo, PeriodicTable};
use crate::error::ModelError;
use crate::flowcore::RbfGrid;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BEFLOWCK";

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    rbf: RbfHeader,
    element: Vec<ElementInfo>,
}

#[derive(Serialize, Deserialize)]
struct RbfHeader {
    low: f64,
    high: f64,
    step: f64,
    gamma: f64,
    count: usize,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), ModelError> {
    let centers = model.rbf.centers();
    let step = if centers.len() > 1 { centers[1] - centers[0] } else { 1.0 };
    let header = Header {
        model: model.config.clone(),
        rbf: RbfHeader {
            low: centers.first().copied().unwrap_or(0.0),
            high: centers.last().copied().unwrap_or(0.0),
            step,
            gamma: model.rbf.gamma(),
            count: centers.len(),
        },
        element: model.table.elements().cloned().collect(),
    };
    let text = toml::to_string(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    let layout = model.params.layout();
    buf.extend_from_slice(&(layout.tensors().len() as u32).to_le_bytes());
    for spec in layout.tensors() {
        buf.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(spec.name.as_bytes());
        buf.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
        for &d in &spec.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in model.params.tensor(&spec.name) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::Checkpoint(format!("truncated at byte {}", self.buf.len())));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model, ModelError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(ModelError::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::ConfigMismatch(format!(
            "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let hlen = c.u32()? as usize;
    let text = std::str::from_utf8(c.take(hlen)?).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let header: Header = toml::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    header.model.validate()?;
    let table = PeriodicTable::new(header.element).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let rbf = RbfGrid::new(header.rbf.low, header.rbf.high, header.rbf.step, header.rbf.gamma);
    if rbf.len() != header.rbf.count {
        return Err(ModelError::Checkpoint("rbf grid does not match its recorded size".into()));
    }
    let layout = Arc::new(Layout::new(&header.model, table.len(), rbf.len()));
    let count = c.u32()? as usize;
    if count != layout.tensors().len() {
        return Err(ModelError::ConfigMismatch(format!(
            "{count} tensors stored, configuration implies {}",
            layout.tensors().len()
        )));
    }
    let mut data = vec![0.0; layout.total()];
    for spec in layout.tensors() {
        let nlen = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(nlen)?).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if name != spec.name {
            return Err(ModelError::ConfigMismatch(format!("tensor '{name}' where '{}' expected", spec.name)));
        }
        let rank = c.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64()? as usize);
        }
        if shape != spec.shape {
            return Err(ModelError::ConfigMismatch(format!(
                "tensor '{name}' has shape {shape:?}, expected {:?}",
                spec.shape
            )));
        }
        for v in &mut data[spec.offset..spec.offset + spec.len()] {
            *v = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if c.pos != buf.len() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    Ok(Model { config: header.model, rbf, table, params: Parameters::from_data(layout, data) })
}

/// Load and insist on a given architecture.
pub fn load_checkpoint_expect(path: &Path, expected: &ModelConfig) -> Result<Model, ModelError> {
    let model = load_checkpoint(path)?;
    let arch = |c: &ModelConfig| (c.embed_dim, c.hidden_dim, c.ffn_dim, c.layers, c.heads);
    if arch(&model.config) != arch(expected) {
        return Err(ModelError::ConfigMismatch(format!(
            "checkpoint has (embed, hidden, ffn, layers, heads) = {:?}, expected {:?}",
            arch(&model.config),
            arch(expected)
        )));
    }
    Ok(model)
}
