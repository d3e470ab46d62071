//! IDX (MNIST) file ingestion.
//!
//! Big-endian headers: magic `0x00000803` for images followed by count, rows
//! and columns; magic `0x00000801` for labels followed by count. Payloads are
//! unsigned bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stream::Example;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Raw image pixels, one `rows * cols` byte vector per image.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(Vec<Vec<u8>>, usize)> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let dim = rows * cols;
    let images = (0..count)
        .map(|_| r.take(dim).map(<[u8]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    Ok((images, dim))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.to_vec())
}

/// Loads an image/label file pair with pixels scaled to `[0, 1]`.
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Vec<Example<T>>> {
    let (images, _) = parse_images(images_path, &read(images_path)?)?;
    let labels = parse_labels(labels_path, &read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let scale = T::one() / T::of(255.0);
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| Example {
            input: pixels.into_iter().map(|p| T::of(p as f64) * scale).collect(),
            label: label as usize,
        })
        .collect())
}

/// Encodes images in IDX format. Inverse of [`parse_images`].
pub fn encode_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size mismatch");
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
