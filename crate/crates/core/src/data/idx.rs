//! The IDX container: a big-endian magic number whose low byte gives the rank,
//! one big-endian `u32` per dimension, then raw unsigned bytes.

use crate::error::{Error, Result};

pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<usize>,
}

impl IdxHeader {
    pub fn header_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Pixel images scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f32>,
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("header truncated at byte {at}")))
}

/// Reads the magic number and dimensions of an unsigned-byte IDX file.
pub fn parse_header(bytes: &[u8]) -> Result<IdxHeader> {
    let magic = read_u32(bytes, 0)?;
    if magic >> 8 != 0x08 {
        return Err(Error::Format(format!("magic {magic:#010x} is not an unsigned-byte IDX file")));
    }
    let rank = (magic & 0xff) as usize;
    if rank == 0 {
        return Err(Error::Format("IDX rank 0".into()));
    }
    let dims = (0..rank).map(|d| read_u32(bytes, 4 + 4 * d).map(|v| v as usize)).collect::<Result<_>>()?;
    Ok(IdxHeader { magic, dims })
}

fn payload(bytes: &[u8], expected_magic: u32) -> Result<(IdxHeader, &[u8])> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected_magic {
        return Err(Error::Format(format!("magic {magic:#010x}, expected {expected_magic:#010x}")));
    }
    let header = parse_header(bytes)?;
    let body = &bytes[header.header_len().min(bytes.len())..];
    if body.len() != header.payload_len() {
        return Err(Error::Length(format!(
            "header declares {} payload bytes, file has {}",
            header.payload_len(),
            body.len()
        )));
    }
    Ok((header, body))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageSet> {
    let (header, body) = payload(bytes, IMAGES_MAGIC)?;
    let (count, rows, cols) = (header.dims[0], header.dims[1], header.dims[2]);
    let pixels = body.iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(ImageSet { count, rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let (_, body) = payload(bytes, LABELS_MAGIC)?;
    Ok(body.to_vec())
}

/// Serializes labels as an IDX file.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Serializes `count` images of `rows × cols` bytes as an IDX file.
pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [count, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}
