//! `PGLDFLD0` binary field files.
//!
//! Layout: the 8-byte magic `PGLDFLD0`, then `nx ny nz` as little-endian `u32`, then
//! `lx ly h` as little-endian `f64`, then `nx ny nz` little-endian `f64` values with `x`
//! varying fastest and `z` slowest.

use std::fs;
use std::path::Path;

use pgld_core::grid::{Grid, ScalarField};

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"PGLDFLD0";
const HEADER: usize = 8 + 3 * 4 + 3 * 8;

pub fn encode(field: &ScalarField) -> Vec<u8> {
    let g = field.grid;
    let mut out = Vec::with_capacity(HEADER + 8 * field.data.len());
    out.extend_from_slice(MAGIC);
    for n in [g.nx, g.ny, g.nz] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in [g.lx, g.ly, g.h] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &field.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ScalarField, String> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err("bad magic".into());
    }
    if bytes.len() < HEADER {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let f = |i: usize| f64::from_le_bytes(bytes[20 + 8 * i..28 + 8 * i].try_into().unwrap());
    let (nx, ny, nz) = (u(0), u(1), u(2));
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(format!("zero dimension in ({nx}, {ny}, {nz})"));
    }
    let n = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .filter(|n| n.checked_mul(8).and_then(|b| b.checked_add(HEADER)).is_some())
        .ok_or_else(|| format!("dimensions ({nx}, {ny}, {nz}) overflow"))?;
    let want = HEADER + 8 * n;
    if bytes.len() < want {
        return Err(format!("truncated: {} of {want} bytes", bytes.len()));
    }
    if bytes.len() > want {
        return Err(format!("{} trailing bytes", bytes.len() - want));
    }
    let grid = Grid::new(nx, ny, nz, f(0), f(1), f(2)).map_err(|e| e.to_string())?;
    let data = bytes[HEADER..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField::from_vec(grid, data).map_err(|e| e.to_string())
}

pub fn write_snapshot(field: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, encode(field)).map_err(|e| HarnessError::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<ScalarField> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes).map_err(|message| HarnessError::Snapshot { path: path.to_path_buf(), message })
}
