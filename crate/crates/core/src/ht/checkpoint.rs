//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "FDHTCKPT"
//! version      u32      FORMAT_VERSION
//! header_len   u32      byte length of the JSON header
//! header       JSON     CheckpointHeader
//! payload      f64 LE   node values: leaves 1..d, then internal nodes in
//!                       post-order (root last); each node row-major in its
//!                       core shape; then every extra section in header order
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{HtConfig, HtError, HtWeight};
use crate::tensor::DenseTensor;

const MAGIC: &[u8; 8] = b"FDHTCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub d: usize,
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    pub config: HtConfig,
    /// Rank of every node in serialization order.
    pub node_ranks: Vec<usize>,
    pub seed: Option<u64>,
    pub sections: Vec<Section>,
}

/// An HT weight plus named auxiliary vectors (biases, heads, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub weight: HtWeight,
    pub sections: Vec<(String, Vec<f64>)>,
}

pub fn write_checkpoint<W: Write>(mut out: W, ckpt: &Checkpoint) -> Result<(), HtError> {
    let w = &ckpt.weight;
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        d: w.order(),
        in_dims: w.config().in_dims.clone(),
        out_dims: w.config().out_dims.clone(),
        config: w.config().clone(),
        node_ranks: w.tree().nodes().iter().map(|n| n.rank).collect(),
        seed: w.seed(),
        sections: ckpt
            .sections
            .iter()
            .map(|(name, v)| Section {
                name: name.clone(),
                len: v.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| HtError::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let values = w
        .cores()
        .iter()
        .flat_map(|c| c.data())
        .chain(ckpt.sections.iter().flat_map(|(_, v)| v));
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, HtError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HtError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(HtError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let len = read_u32(&mut input)? as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| HtError::Checkpoint(e.to_string()))?;
    if header.version != version
        || header.d != header.config.order()
        || header.in_dims != header.config.in_dims
        || header.out_dims != header.config.out_dims
    {
        return Err(HtError::Checkpoint("inconsistent header".into()));
    }
    let template = HtWeight::zeros(header.config.clone())?;
    let ranks: Vec<usize> = template.tree().nodes().iter().map(|n| n.rank).collect();
    if ranks != header.node_ranks {
        return Err(HtError::Checkpoint("node ranks disagree with config".into()));
    }
    let mut cores = Vec::with_capacity(template.cores().len());
    for c in template.cores() {
        let data = read_f64s(&mut input, c.len())?;
        cores.push(DenseTensor::new(c.shape().to_vec(), data)?);
    }
    let mut weight = HtWeight::from_cores(header.config.clone(), cores)?;
    weight.set_seed(header.seed);
    let mut sections = Vec::with_capacity(header.sections.len());
    for s in &header.sections {
        sections.push((s.name.clone(), read_f64s(&mut input, s.len)?));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(HtError::Checkpoint(format!(
            "{} trailing bytes",
            rest.len()
        )));
    }
    Ok(Checkpoint { weight, sections })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, HtError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, HtError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = HtConfig::new(vec![3, 2, 2], vec![2, 1, 2], 2, 3, 2);
        let mut weight = HtWeight::random(cfg, 5).unwrap();
        weight.core_mut(0).data_mut()[0] = f64::from_bits(0x7ff0_0000_0000_0001); // NaN payload
        weight.core_mut(1).data_mut()[1] = -0.0;
        let ckpt = Checkpoint {
            weight,
            sections: vec![("bias".into(), vec![1.5, -2.0, 1e-300])],
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        let bits = |c: &Checkpoint| -> Vec<u64> {
            c.weight
                .cores()
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&back), bits(&ckpt));
        assert_eq!(back.sections, ckpt.sections);
        assert_eq!(back.weight.seed(), Some(5));
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn rejects_corruption() {
        let cfg = HtConfig::new(vec![2, 2], vec![1, 1], 1, 1, 1);
        let ckpt = Checkpoint {
            weight: HtWeight::zeros(cfg).unwrap(),
            sections: vec![],
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(read_checkpoint(truncated).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
    }
}
