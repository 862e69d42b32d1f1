//! Big-endian IDX files: `0x00000803` image tensors (u8, `n x rows x cols`)
//! and `0x00000801` label vectors (u8).

use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, IdxError, Result};
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], IdxError> {
        let available = self.bytes.len() - self.offset;
        if available < n {
            return Err(IdxError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), IdxError> {
        let offset = self.offset;
        let found = self.u32()?;
        if found != expected {
            return Err(IdxError::BadMagic {
                path: self.path.to_path_buf(),
                offset,
                expected,
                found,
            });
        }
        Ok(())
    }
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages, IdxError> {
    let mut r = Reader { bytes, offset: 0, path };
    r.magic(IMAGE_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.take(count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, IdxError> {
    let mut r = Reader { bytes, offset: 0, path };
    r.magic(LABEL_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load an image/label IDX pair; pixels are scaled to `[0, 1]` and the class
/// count is one past the largest label.
pub fn load_idx<T: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        }
        .into());
    }
    let width = images.rows * images.cols;
    let scale = T::one() / T::lit(255.0);
    let features = Array2::from_shape_vec(
        (images.count, width),
        images.pixels.iter().map(|&p| T::lit(p as f64) * scale).collect(),
    )
    .map_err(|e| Error::invalid(e.to_string()))?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for word in [IMAGE_MAGIC, count, rows, cols] {
            out.extend(word.to_be_bytes());
        }
        out.extend(pixels);
        out
    }

    #[test]
    fn truncated_header_and_body() {
        let p = Path::new("x");
        assert!(matches!(
            parse_idx_images(&[0, 0, 8], p),
            Err(IdxError::Truncated { offset: 0, .. })
        ));
        let bytes = image_bytes(2, 2, 2, &[1, 2, 3]);
        assert!(matches!(
            parse_idx_images(&bytes, p),
            Err(IdxError::Truncated { offset: 16, needed: 8, available: 3, .. })
        ));
    }

    #[test]
    fn swapped_magic_is_rejected() {
        let p = Path::new("labels");
        let bytes = image_bytes(0, 0, 0, &[]);
        assert!(matches!(
            parse_idx_labels(&bytes, p),
            Err(IdxError::BadMagic { offset: 0, expected: LABEL_MAGIC, found: IMAGE_MAGIC, .. })
        ));
    }
}
