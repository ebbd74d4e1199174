//! Binary file formats.
//!
//! Volume files (`.covf`):
//!
//! ```text
//! "COVF" | version: u32 = 1 | N, H, W, d: u32 | N·H·W·d × f32
//! ```
//!
//! Correspondence map files (`.covc`):
//!
//! ```text
//! "COVC" | version: u32 = 1 | N, H, W, K, l: u32 (l = 0 means full frame)
//!        | per anchor (row-major), per frame j != i ascending, K × (h: u16, w: u16)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::correspondence::{CorrespondenceMap, WindowSize};
use crate::error::{CoveError, Result};
use crate::volume::{FeatureVolume, LatentVolume, Shape};

pub const VOLUME_MAGIC: &[u8; 4] = b"COVF";
pub const MAP_MAGIC: &[u8; 4] = b"COVC";
pub const FORMAT_VERSION: u32 = 1;

fn read_header<R: Read>(reader: &mut R, magic: &[u8; 4], fields: usize) -> Result<Vec<u32>> {
    let mut buf = vec![0u8; 8 + 4 * fields];
    reader.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            CoveError::MalformedHeader(format!("header shorter than {} bytes", buf.len()))
        }
        _ => CoveError::Io(e),
    })?;
    if &buf[..4] != magic {
        return Err(CoveError::MalformedHeader(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let words: Vec<u32> = buf[4..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if words[0] != FORMAT_VERSION {
        return Err(CoveError::MalformedHeader(format!(
            "unsupported version {}",
            words[0]
        )));
    }
    Ok(words[1..].to_vec())
}

/// Reads a COVF stream into its shape and raw values.
pub fn read_volume<R: Read>(reader: &mut R) -> Result<(Shape, Vec<f32>)> {
    let dims = read_header(reader, VOLUME_MAGIC, 4)?;
    let shape = Shape {
        frames: dims[0] as usize,
        height: dims[1] as usize,
        width: dims[2] as usize,
        dim: dims[3] as usize,
    };
    shape
        .validate()
        .map_err(|e| CoveError::MalformedHeader(e.to_string()))?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected = shape.len();
    if payload.len() != expected * 4 {
        return Err(CoveError::LengthMismatch {
            expected,
            actual: payload.len() / 4,
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(CoveError::NonFinite { index });
    }
    Ok((shape, data))
}

pub fn write_volume<W: Write>(writer: &mut W, shape: Shape, data: &[f32]) -> Result<()> {
    shape.validate()?;
    if data.len() != shape.len() {
        return Err(CoveError::LengthMismatch {
            expected: shape.len(),
            actual: data.len(),
        });
    }
    let dims = [shape.frames, shape.height, shape.width, shape.dim];
    if dims.iter().any(|&v| v > u32::MAX as usize) {
        return Err(CoveError::param("extent does not fit in u32"));
    }
    writer.write_all(VOLUME_MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in dims {
        writer.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&bytes)?;
    Ok(())
}

/// Loads a feature volume. The result is not marked normalized.
pub fn load_feature_volume(path: impl AsRef<Path>) -> Result<FeatureVolume> {
    let mut r = BufReader::new(File::open(path)?);
    let (shape, data) = read_volume(&mut r)?;
    FeatureVolume::new(shape, data)
}

pub fn load_latent_volume(path: impl AsRef<Path>) -> Result<LatentVolume> {
    let mut r = BufReader::new(File::open(path)?);
    let (shape, data) = read_volume(&mut r)?;
    LatentVolume::new(shape, data)
}

pub fn save_volume(path: impl AsRef<Path>, shape: Shape, data: &[f32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_volume(&mut w, shape, data)?;
    w.flush()?;
    Ok(())
}

/// Serializes a volume to an in-memory COVF image.
pub fn volume_bytes(shape: Shape, data: &[f32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + data.len() * 4);
    write_volume(&mut out, shape, data)?;
    Ok(out)
}

pub fn read_map<R: Read>(reader: &mut R) -> Result<CorrespondenceMap> {
    let h = read_header(reader, MAP_MAGIC, 5)?;
    let (n, height, width, k) = (h[0] as usize, h[1] as usize, h[2] as usize, h[3] as usize);
    if n < 2 || height == 0 || width == 0 || k == 0 {
        return Err(CoveError::MalformedHeader(format!(
            "map header N={n} H={height} W={width} K={k} is degenerate"
        )));
    }
    let window = WindowSize::from_code(h[4]);
    let expected = CorrespondenceMap::expected_len(n, height, width, k);
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected * 4 {
        return Err(CoveError::LengthMismatch {
            expected,
            actual: payload.len() / 4,
        });
    }
    let coords = payload
        .chunks_exact(4)
        .map(|c| {
            [
                u16::from_le_bytes([c[0], c[1]]),
                u16::from_le_bytes([c[2], c[3]]),
            ]
        })
        .collect();
    CorrespondenceMap::from_parts(n, height, width, k, window, coords, None)
}

pub fn write_map<W: Write>(writer: &mut W, map: &CorrespondenceMap) -> Result<()> {
    writer.write_all(MAP_MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [
        map.frames() as u32,
        map.height() as u32,
        map.width() as u32,
        map.k() as u32,
        map.window().to_code(),
    ] {
        writer.write_all(&v.to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(map.coords().len() * 4);
    for [r, c] in map.coords() {
        bytes.extend_from_slice(&r.to_le_bytes());
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    writer.write_all(&bytes)?;
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<CorrespondenceMap> {
    read_map(&mut BufReader::new(File::open(path)?))
}

pub fn save_map(path: impl AsRef<Path>, map: &CorrespondenceMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_map(&mut w, map)?;
    w.flush()?;
    Ok(())
}

pub fn map_bytes(map: &CorrespondenceMap) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_map(&mut out, map)?;
    Ok(out)
}
