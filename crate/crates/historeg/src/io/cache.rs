//! Binary cache of a preprocessed image pyramid, so repeated registrations
//! of the same image skip decoding, preprocessing, and coarsening.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "HRCACHE1" | u32 level_count
//! per level: u32 width | u32 height | f64 spacing | f64 origin_x | f64 origin_y
//!            | width*height f32 samples (row-major)
//! ```
//!
//! Samples are stored exactly as held in memory, so a write/read cycle is
//! bitwise lossless.

use crate::error::{Error, Result};
use crate::image::{Image, Pyramid};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"HRCACHE1";

/// True when the file starts with the pyramid cache magic.
pub fn is_cache_file(path: &Path) -> Result<bool> {
    let mut file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(source) => {
            return Err(Error::Read {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut head = [0u8; 8];
    match file.read_exact(&mut head) {
        Ok(()) => Ok(&head == MAGIC),
        Err(_) => Ok(false),
    }
}

pub fn write_cache(path: &Path, pyramid: &Pyramid) -> Result<()> {
    let wrap = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(wrap)?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(wrap);
    write(MAGIC)?;
    write(&(pyramid.levels().len() as u32).to_le_bytes())?;
    for level in pyramid.levels() {
        write(&(level.width() as u32).to_le_bytes())?;
        write(&(level.height() as u32).to_le_bytes())?;
        write(&level.spacing().to_le_bytes())?;
        write(&level.origin().0.to_le_bytes())?;
        write(&level.origin().1.to_le_bytes())?;
        for &sample in level.data() {
            write(&sample.to_le_bytes())?;
        }
    }
    out.into_inner()
        .map_err(|e| wrap(e.into_error()))?
        .sync_all()
        .map_err(wrap)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<Pyramid> {
    let file = std::fs::File::open(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut input = BufReader::new(file);
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    };
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a pyramid cache file"));
    }
    let mut u32_buf = [0u8; 4];
    let mut f64_buf = [0u8; 8];
    let mut read_u32 = |input: &mut BufReader<std::fs::File>| -> Result<u32> {
        input
            .read_exact(&mut u32_buf)
            .map_err(|_| bad("truncated data"))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let level_count = read_u32(&mut input)? as usize;
    if level_count == 0 || level_count > 64 {
        return Err(bad("implausible level count"));
    }
    let mut levels = Vec::with_capacity(level_count);
    for _ in 0..level_count {
        let width = read_u32(&mut input)? as usize;
        let height = read_u32(&mut input)? as usize;
        let mut read_f64 = |input: &mut BufReader<std::fs::File>| -> Result<f64> {
            input
                .read_exact(&mut f64_buf)
                .map_err(|_| bad("truncated data"))?;
            Ok(f64::from_le_bytes(f64_buf))
        };
        let spacing = read_f64(&mut input)?;
        let ox = read_f64(&mut input)?;
        let oy = read_f64(&mut input)?;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| bad("implausible dimensions"))?;
        if n == 0 || n > (1 << 30) {
            return Err(bad("implausible dimensions"));
        }
        let mut bytes = vec![0u8; 4 * n];
        input
            .read_exact(&mut bytes)
            .map_err(|_| bad("truncated samples"))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        levels.push(Image::from_raw(width, height, spacing, (ox, oy), data)?);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|_| bad("read error"))? != 0 {
        return Err(bad("trailing bytes after pyramid data"));
    }
    Pyramid::from_levels(levels)
}
