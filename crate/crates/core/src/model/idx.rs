//! Reader for the big-endian IDX format used by the MNIST distribution.

use std::fs;
use std::path::Path;

use crate::error::{Error, IdxError, Result};
use crate::model::Sample;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Load an IDX image/label file pair into samples with pixels scaled to
/// `[0, 1]` (by 1/255). `limit` keeps only the first `limit` samples.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    limit: Option<usize>,
) -> Result<Vec<Sample>> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    parse_idx(&images, &labels, limit)
}

/// Parse already-read IDX bytes; split out so tests can run without files.
pub(crate) fn parse_idx(images: &[u8], labels: &[u8], limit: Option<usize>) -> Result<Vec<Sample>> {
    let image_magic = read_u32(images, 0)?;
    if image_magic != IMAGES_MAGIC {
        return Err(Error::Idx(IdxError::WrongMagic {
            expected: IMAGES_MAGIC,
            got: image_magic,
        }));
    }
    let label_magic = read_u32(labels, 0)?;
    if label_magic != LABELS_MAGIC {
        return Err(Error::Idx(IdxError::WrongMagic {
            expected: LABELS_MAGIC,
            got: label_magic,
        }));
    }

    let image_count = read_u32(images, 4)? as usize;
    let rows = read_u32(images, 8)? as usize;
    let cols = read_u32(images, 12)? as usize;
    let label_count = read_u32(labels, 4)? as usize;
    if image_count != label_count {
        return Err(Error::Idx(IdxError::CountMismatch {
            images: image_count,
            labels: label_count,
        }));
    }

    let pixels_per_image = rows * cols;
    let take = limit.map_or(image_count, |l| l.min(image_count));

    let needed_image_bytes = 16 + image_count * pixels_per_image;
    if images.len() < needed_image_bytes {
        return Err(Error::Idx(IdxError::Truncated {
            needed: needed_image_bytes,
            got: images.len(),
        }));
    }
    let needed_label_bytes = 8 + label_count;
    if labels.len() < needed_label_bytes {
        return Err(Error::Idx(IdxError::Truncated {
            needed: needed_label_bytes,
            got: labels.len(),
        }));
    }

    let mut samples = Vec::with_capacity(take);
    for i in 0..take {
        let start = 16 + i * pixels_per_image;
        let features = images[start..start + pixels_per_image]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        samples.push(Sample::new(features, labels[8 + i] as usize));
    }
    Ok(samples)
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Idx(IdxError::Truncated {
            needed: end,
            got: bytes.len(),
        }));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}
