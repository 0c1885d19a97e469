//! IDX file reader (the MNIST distribution format).
//!
//! Layout, all integers big-endian:
//! images: `0x00000803, count, rows, cols`, then `count*rows*cols` u8 pixels;
//! labels: `0x00000801, count`, then `count` u8 labels.

use std::io::{self, ErrorKind};
use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn truncated(what: &str, need: usize, have: usize) -> Error {
    Error::Io(io::Error::new(
        ErrorKind::UnexpectedEof,
        format!("truncated {what}: need {need} bytes, file has {have}"),
    ))
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| truncated(what, at + 4, bytes.len()))
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "image header")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4, "image header")? as usize;
    let rows = read_u32(bytes, 8, "image header")? as usize;
    let cols = read_u32(bytes, 12, "image header")? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(truncated("image data", need, bytes.len()));
    }
    Ok((count, rows, cols, &bytes[16..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0, "label header")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4, "label header")? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(truncated("label data", need, bytes.len()));
    }
    Ok(&bytes[8..need])
}

/// Loads an image/label file pair; pixels are scaled to `[0, 1]`.
pub fn load_idx<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if count != labels.len() {
        return Err(Error::Consistency(format!(
            "image file holds {count} items but label file holds {}",
            labels.len()
        )));
    }
    let dim = rows * cols;
    let scale = T::lit(255.0);
    let inputs = pixels.iter().map(|&p| T::lit(f64::from(p)) / scale).collect();
    let labels: Vec<usize> = labels.iter().map(|&y| usize::from(y)).collect();
    let classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(inputs, dim, labels, classes, Provenance::IdxFile)
}

/// Serializes images in IDX layout (fixtures, subsets).
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
