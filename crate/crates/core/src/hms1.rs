//! `HMS1` binary heatmap format, the interchange contract with external
//! trainers.
//!
//! Layout (all little-endian):
//! - magic bytes `"HMS1"`
//! - `u32` K, `u32` H, `u32` W
//! - `f32` sigma, `f32` stride
//! - `K * H * W` `f32` values, row-major per channel

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::heatmap::HeatmapStack;
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"HMS1";

/// Largest element count accepted when reading, guarding against corrupt
/// headers.
const MAX_ELEMENTS: u64 = 1 << 28;

pub fn write<T: Scalar, W: Write>(stack: &HeatmapStack<T>, out: &mut W) -> Result<()> {
    out.write_all(&MAGIC)?;
    let (k, h, w) = stack.shape();
    for dim in [k, h, w] {
        out.write_all(&(dim as u32).to_le_bytes())?;
    }
    out.write_all(&(stack.sigma() as f32).to_le_bytes())?;
    out.write_all(&(stack.stride() as f32).to_le_bytes())?;
    for v in stack.data() {
        out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read<R: Read>(input: &mut R) -> Result<HeatmapStack<f32>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(short_file)?;
    if magic != MAGIC {
        return Err(Error::Input(format!(
            "not an HMS1 file (magic {magic:02x?})"
        )));
    }
    let mut quad = [0u8; 4];
    let mut read_u32 = |input: &mut R| -> Result<u32> {
        input.read_exact(&mut quad).map_err(short_file)?;
        Ok(u32::from_le_bytes(quad))
    };
    let k = read_u32(input)?;
    let h = read_u32(input)?;
    let w = read_u32(input)?;
    let count = u64::from(k) * u64::from(h) * u64::from(w);
    if count == 0 || count > MAX_ELEMENTS {
        return Err(Error::Input(format!(
            "HMS1 header describes an unreasonable stack {k}x{h}x{w}"
        )));
    }

    let mut quad = [0u8; 4];
    input.read_exact(&mut quad).map_err(short_file)?;
    let sigma = f32::from_le_bytes(quad);
    input.read_exact(&mut quad).map_err(short_file)?;
    let stride = f32::from_le_bytes(quad);

    let mut raw = vec![0u8; count as usize * 4];
    input.read_exact(&mut raw).map_err(short_file)?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    HeatmapStack::from_vec(
        data,
        k as usize,
        h as usize,
        w as usize,
        f64::from(sigma),
        f64::from(stride),
    )
    .map_err(|e| Error::Input(format!("invalid HMS1 payload: {e}")))
}

pub fn write_file<T: Scalar>(stack: &HeatmapStack<T>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write(stack, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<HeatmapStack<f32>> {
    read(&mut BufReader::new(File::open(path)?))
}

fn short_file(err: std::io::Error) -> Error {
    if err.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Input("HMS1 file is truncated".into())
    } else {
        Error::Io(err)
    }
}
