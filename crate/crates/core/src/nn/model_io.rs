//! Binary parameter files.
//!
//! Layout (little-endian): magic `ORNN`, architecture hash `u64`, parameter
//! count `u64`, then raw 32-bit floats. Loading refuses a file whose hash does
//! not match the network it is being loaded into.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::NnError;

const MAGIC: &[u8; 4] = b"ORNN";

pub fn save_params(path: &Path, spec_hash: u64, params: &[f32]) -> Result<(), NnError> {
    let file = File::create(path).map_err(|e| NnError::ModelIo(e.to_string()))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&spec_hash.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(params.len() as u64).to_le_bytes()).map_err(io_err)?;
    for v in params {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_params(path: &Path, expected_hash: u64) -> Result<Vec<f32>, NnError> {
    let file = File::open(path).map_err(|e| NnError::ModelIo(e.to_string()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(NnError::ModelIo("bad magic, not a model file".into()));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8).map_err(io_err)?;
    let hash = u64::from_le_bytes(buf8);
    if hash != expected_hash {
        return Err(NnError::ModelIo(format!(
            "spec hash mismatch: file {hash:#x}, expected {expected_hash:#x}"
        )));
    }
    r.read_exact(&mut buf8).map_err(io_err)?;
    let count = u64::from_le_bytes(buf8) as usize;
    let mut out = Vec::with_capacity(count);
    let mut buf4 = [0u8; 4];
    for _ in 0..count {
        r.read_exact(&mut buf4).map_err(io_err)?;
        out.push(f32::from_le_bytes(buf4));
    }
    Ok(out)
}

fn io_err(e: std::io::Error) -> NnError {
    NnError::ModelIo(e.to_string())
}
