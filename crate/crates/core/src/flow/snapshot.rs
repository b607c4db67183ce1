use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::context::ContextSpec;
use super::model::{ConditionalFlow, FlowConfig, Standardizer};
use crate::diff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BOEDFLW1";

/// JSON header stored next to a flow's binary parameter record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowHeader {
    pub config: FlowConfig,
    pub context: ContextSpec,
    pub standardizer: Standardizer,
    pub param_names: Vec<String>,
}

/// Writes tensors as: magic, `u32` tensor count, then per tensor a `u32`
/// rank, `u64` dimensions and little-endian `f64` data.
pub fn write_params<W: Write>(mut w: W, params: &[Tensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        w.write_all(&(p.shape().len() as u32).to_le_bytes())?;
        for &dim in p.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in p.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<Vec<Tensor>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(Error::Snapshot(format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut b = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        out.push(Tensor::new(&shape, data)?);
    }
    Ok(out)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

impl ConditionalFlow {
    pub fn header(&self) -> FlowHeader {
        FlowHeader {
            config: self.config().clone(),
            context: self.context_spec().clone(),
            standardizer: self.standardizer().clone(),
            param_names: self.param_names().to_vec(),
        }
    }

    /// Writes `<stem>.flow` (binary parameters) and `<stem>.json` (header).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut bin = Vec::new();
        write_params(&mut bin, self.params())?;
        fs::write(stem.with_extension("flow"), bin)?;
        fs::write(
            stem.with_extension("json"),
            serde_json::to_vec_pretty(&self.header())?,
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let header: FlowHeader = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
        let params = read_params(fs::File::open(stem.with_extension("flow"))?)?;
        let flow = ConditionalFlow::from_params(
            header.config,
            header.context,
            header.standardizer,
            params,
        )?;
        if flow.param_names() != header.param_names.as_slice() {
            return Err(Error::Snapshot("parameter names do not match layout".into()));
        }
        Ok(flow)
    }
}
