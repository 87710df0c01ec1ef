//! Reader for the big-endian IDX container used by MNIST.

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::Shape;
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated {what} header")))
}

/// Decodes in-memory IDX image and label buffers. Pixels are scaled to
/// `[0, 1]`; the label space is `0..=max(label)`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = read_u32(images, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Idx(format!("bad images magic {magic:#010x}")));
    }
    let magic = read_u32(labels, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Idx(format!("bad labels magic {magic:#010x}")));
    }
    let count = read_u32(images, 4, "images")? as usize;
    let rows = read_u32(images, 8, "images")? as usize;
    let cols = read_u32(images, 12, "images")? as usize;
    let label_count = read_u32(labels, 4, "labels")? as usize;
    if count != label_count {
        return Err(Error::Idx(format!("{count} images but {label_count} labels")));
    }
    let pixels = &images[16..];
    let per_image = rows * cols;
    if pixels.len() < count * per_image {
        return Err(Error::Idx(format!(
            "truncated images: need {} pixel bytes, have {}",
            count * per_image,
            pixels.len()
        )));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() < count {
        return Err(Error::Idx(format!("truncated labels: need {count}, have {}", label_bytes.len())));
    }
    let samples: Vec<Sample> = (0..count)
        .map(|i| {
            let input = pixels[i * per_image..(i + 1) * per_image].iter().map(|&p| f64::from(p) / 255.0).collect();
            Sample::new(input, usize::from(label_bytes[i]))
        })
        .collect();
    let classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(1);
    Dataset::new(Shape::image(1, rows, cols), classes, samples)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    parse_idx(&std::fs::read(images_path)?, &std::fs::read(labels_path)?)
}

/// Encodes images (row-major bytes) in the IDX layout.
pub fn write_idx_images(rows: u32, cols: u32, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * (rows * cols) as usize);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let images = vec![vec![0, 255, 128, 64], vec![255, 255, 0, 0], vec![1, 2, 3, 4]];
        (write_idx_images(2, 2, &images), write_idx_labels(&[7, 0, 3]))
    }

    #[test]
    fn parses_hand_built_fixture() {
        let (img, lab) = fixture();
        // header bytes are big-endian
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        let ds = parse_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.shape(), Shape::image(1, 2, 2));
        assert_eq!(ds.samples()[0].input, vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(ds.samples()[1].input[0], 1.0);
        let labels: Vec<usize> = ds.samples().iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![7, 0, 3]);
        assert_eq!(ds.label_count(), 8);
    }

    #[test]
    fn count_mismatch() {
        let (img, _) = fixture();
        let err = parse_idx(&img, &write_idx_labels(&[1, 2])).unwrap_err();
        assert!(err.to_string().contains("3 images but 2 labels"));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let (mut img, lab) = fixture();
        assert!(parse_idx(&img[..img.len() - 1], &lab).is_err());
        assert!(parse_idx(&img[..10], &lab).is_err());
        img[3] = 0x01;
        assert!(parse_idx(&img, &lab).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn load_from_files() {
        let (img, lab) = fixture();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("i"), img).unwrap();
        std::fs::write(dir.path().join("l"), lab).unwrap();
        let ds = load_idx(&dir.path().join("i"), &dir.path().join("l")).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(load_idx(&dir.path().join("nope"), &dir.path().join("l")).is_err());
    }
}
