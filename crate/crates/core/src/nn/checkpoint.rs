//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | offset      | size | content                                        |
//! |-------------|------|------------------------------------------------|
//! | 0           | 8    | magic `LRDSGCKP`                               |
//! | 8           | 4    | format version, `u32` (currently 1)            |
//! | 12          | 4    | header length `H` in bytes, `u32`              |
//! | 16          | H    | UTF-8 JSON header `{"meta": .., "blocks": [..]}` |
//! | 16 + H      | ..   | each block's `rows * cols` values as `f64`, in header order |
//!
//! Each header block entry is `{"name", "rows", "cols"}`; `meta` is free-form
//! JSON supplied by the caller (model configuration, data dimensions).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{NnError, ParamBlock, ParamStore};

pub const MAGIC: &[u8; 8] = b"LRDSGCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    blocks: Vec<BlockSpec>,
}

/// A decoded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub blocks: Vec<ParamBlock>,
}

impl Checkpoint {
    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Copies every block of this checkpoint into the same-named block of `store`.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<(), NnError> {
        for block in &self.blocks {
            let id = store
                .find(&block.name)
                .ok_or_else(|| NnError::Checkpoint(format!("unknown block {:?}", block.name)))?;
            let target = store.block(id);
            if (target.rows, target.cols) != (block.rows, block.cols) {
                return Err(NnError::Checkpoint(format!(
                    "block {:?} is {}x{}, model expects {}x{}",
                    block.name, block.rows, block.cols, target.rows, target.cols
                )));
            }
            store.data_mut(id).copy_from_slice(&block.data);
        }
        Ok(())
    }
}

/// Serializes the selected blocks.
pub fn write_checkpoint<'a, W: Write>(
    mut out: W,
    meta: serde_json::Value,
    blocks: impl IntoIterator<Item = &'a ParamBlock>,
) -> Result<(), NnError> {
    let blocks: Vec<&ParamBlock> = blocks.into_iter().collect();
    let header = Header {
        meta,
        blocks: blocks
            .iter()
            .map(|b| BlockSpec { name: b.name.clone(), rows: b.rows, cols: b.cols })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * blocks.iter().map(|b| b.data.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for b in blocks {
        for x in &b.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, NnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let bad = |m: &str| NnError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut offset = 16 + hlen;
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for spec in header.blocks {
        let n = spec.rows * spec.cols;
        let raw = bytes.get(offset..offset + 8 * n).ok_or_else(|| bad("truncated parameter data"))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        offset += 8 * n;
        blocks.push(ParamBlock { name: spec.name, rows: spec.rows, cols: spec.cols, data });
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after parameter data"));
    }
    Ok(Checkpoint { meta: header.meta, blocks })
}
