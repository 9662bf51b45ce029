//! Weight file format.
//!
//! ```text
//! "CINR"                      4 bytes magic
//! version                     u32 LE (currently 1)
//! header length               u32 LE
//! header                      JSON: {"config": InrConfig, "param_count": u64, "has_macro_cells": bool}
//! parameters                  param_count x f32 LE, flat parameter order
//! [macro-cell block]          grid_dims 3 x u32 LE, cell size u32 LE,
//!                             then (min, max) f32 LE pairs, x-fastest
//! ```

use super::{InrConfig, InrModel};
use crate::error::{Error, Result};
use crate::macrocell::MacroCellGrid;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CINR";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: InrConfig,
    param_count: u64,
    has_macro_cells: bool,
}

/// Contents of a weight file.
#[derive(Debug)]
pub struct WeightFile {
    pub model: InrModel<f32>,
    pub macro_cells: Option<MacroCellGrid>,
}

pub fn save_weights(
    model: &InrModel<f32>,
    macro_cells: Option<&MacroCellGrid>,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, encode(model, macro_cells)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightFile> {
    decode(&std::fs::read(path)?)
}

pub(crate) fn encode(
    model: &InrModel<f32>,
    macro_cells: Option<&MacroCellGrid>,
) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        config: model.config().clone(),
        param_count: model.params().len() as u64,
        has_macro_cells: macro_cells.is_some(),
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + model.params().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(grid) = macro_cells {
        for d in grid.grid_dims() {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&grid.cell_size().to_le_bytes());
        for &(lo, hi) in grid.ranges() {
            out.extend_from_slice(&lo.to_le_bytes());
            out.extend_from_slice(&hi.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<WeightFile> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a CINR weight file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let count = usize::try_from(header.param_count)
        .map_err(|_| Error::Format("parameter count overflows".into()))?;
    let raw = r.take(
        count
            .checked_mul(4)
            .ok_or_else(|| Error::Format("parameter count overflows".into()))?,
    )?;
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let model = InrModel::from_params(header.config, params)
        .map_err(|e| Error::Format(format!("parameters do not match architecture: {e}")))?;
    let macro_cells = if header.has_macro_cells {
        let grid_dims = [r.u32()?, r.u32()?, r.u32()?];
        let cell_size = r.u32()?;
        let cells = grid_dims.iter().map(|&d| d as usize).product::<usize>();
        let mut ranges = Vec::with_capacity(cells);
        for _ in 0..cells {
            ranges.push((r.f32()?, r.f32()?));
        }
        let grid = MacroCellGrid::from_ranges(model.config().domain.dims, cell_size, ranges)
            .map_err(|e| Error::Format(format!("bad macro-cell block: {e}")))?;
        if grid.grid_dims() != grid_dims {
            return Err(Error::Format(format!(
                "macro-cell grid {grid_dims:?} inconsistent with volume dims"
            )));
        }
        Some(grid)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after weight data",
            bytes.len() - r.pos
        )));
    }
    Ok(WeightFile { model, macro_cells })
}
