//! IDX files as distributed with MNIST.
//!
//! Images: big-endian `0x00000803`, count, rows, cols, then `count * rows * cols`
//! unsigned bytes. Labels: big-endian `0x00000801`, count, then `count` bytes.
//! Files must have exactly the declared length.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw image tensor with pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` values, image-major then row-major.
    pub pixels: Vec<f64>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[f64] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn header(bytes: &[u8], magic: u32, header_len: usize) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Length {
            expected: header_len,
            found: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::Format { expected: magic, found });
    }
    if bytes.len() < header_len {
        return Err(Error::Length {
            expected: header_len,
            found: bytes.len(),
        });
    }
    Ok(())
}

fn exact_length(bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    header(bytes, IMAGE_MAGIC, 16)?;
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let payload = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Domain("IDX dimensions overflow".into()))?;
    exact_length(bytes, 16 + payload)?;
    let pixels = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    header(bytes, LABEL_MAGIC, 8)?;
    let count = be_u32(bytes, 4) as usize;
    exact_length(bytes, 8 + count)?;
    Ok(bytes[8..].to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    parse_idx_images(&read(path)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read(path)?)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Domain(format!("{what} {v} does not fit in an IDX header")))
}

/// Encodes raw bytes as an IDX image file.
pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != count * rows * cols {
        return Err(Error::Length {
            expected: count * rows * cols,
            found: pixels.len(),
        });
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, to_u32(count, "count")?, to_u32(rows, "rows")?, to_u32(cols, "cols")?] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&to_u32(labels.len(), "count")?.to_be_bytes());
    out.extend_from_slice(labels);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_pixel_fixture() {
        let bytes = encode_idx_images(1, 2, 2, &[0, 255, 128, 64]).unwrap();
        let img = parse_idx_images(&bytes).unwrap();
        assert_eq!((img.count, img.rows, img.cols), (1, 2, 2));
        assert_eq!(img.pixels, vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn labels_fixture() {
        let bytes = encode_idx_labels(&[3, 7]).unwrap();
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![3, 7]);
    }

    #[test]
    fn wrong_magic_reports_found_value() {
        let bytes = encode_idx_labels(&[1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        match parse_idx_images(&bytes) {
            Err(Error::Format { expected, found }) => {
                assert_eq!(expected, IMAGE_MAGIC);
                assert_eq!(found, LABEL_MAGIC);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let bytes = encode_idx_images(2, 2, 2, &[1; 8]).unwrap();
        assert!(matches!(parse_idx_images(&bytes[..bytes.len() - 1]), Err(Error::Length { .. })));
        assert!(matches!(parse_idx_images(&bytes[..10]), Err(Error::Length { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(parse_idx_images(&long), Err(Error::Length { .. })));

        let mut labels = encode_idx_labels(&[1, 2, 3]).unwrap();
        labels[7] = 4;
        assert!(matches!(parse_idx_labels(&labels), Err(Error::Length { .. })));
        assert!(matches!(parse_idx_labels(&[0, 0]), Err(Error::Length { .. })));
    }
}
