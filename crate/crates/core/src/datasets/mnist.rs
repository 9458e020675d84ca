use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw IDX image tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{what}: header ends at byte {}", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = read_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let count = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let len = count * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or_else(|| {
            Error::TruncatedFile(format!("images: need {len} pixel bytes, have {}", bytes.len().saturating_sub(16)))
        })?
        .to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let count = read_u32(bytes, 4, "labels")? as usize;
    bytes
        .get(8..8 + count)
        .map(<[u8]>::to_vec)
        .ok_or_else(|| Error::TruncatedFile(format!("labels: need {count} bytes, have {}", bytes.len().saturating_sub(8))))
}

/// Loads an IDX image/label pair, removes `crop` pixels from every border,
/// scales pixels to `[0, 1]`, and flattens row-major with an appended
/// intercept coordinate.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    crop: usize,
) -> Result<LabeledDataset<f64>> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = parse_idx_images(&read(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read(labels_path.as_ref())?)?;
    mnist_dataset(&images, &labels, crop)
}

pub(crate) fn mnist_dataset(images: &IdxImages, labels: &[u8], crop: usize) -> Result<LabeledDataset<f64>> {
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    if 2 * crop >= images.rows || 2 * crop >= images.cols {
        return Err(Error::InvalidConfig(format!(
            "crop {crop} leaves no pixels of a {}x{} image",
            images.rows, images.cols
        )));
    }
    let (h, w) = (images.rows - 2 * crop, images.cols - 2 * crop);
    let dim = h * w + 1;
    let mut features = Vec::with_capacity(images.count * dim);
    for img in images.pixels.chunks(images.rows * images.cols) {
        for r in crop..crop + h {
            let row = &img[r * images.cols + crop..r * images.cols + crop + w];
            features.extend(row.iter().map(|&b| f64::from(b) / 255.0));
        }
        features.push(1.0);
    }
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let k = labels.iter().max().map_or(2, |m| (m + 1).max(10));
    LabeledDataset::new(features, dim, labels, k, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn one_image_fixture_with_crop() {
        // 4x4 image, bytes 0..16 scaled by 17 so the centre is 5,6,9,10 × 17
        let pixels: Vec<u8> = (0..16u8).map(|v| v * 17).collect();
        let images = parse_idx_images(&idx_images(1, 4, 4, &pixels)).unwrap();
        let labels = parse_idx_labels(&idx_labels(&[7])).unwrap();
        let ds = mnist_dataset(&images, &labels, 1).unwrap();
        assert_eq!(ds.dim(), 5);
        let expected = [85.0 / 255.0, 102.0 / 255.0, 153.0 / 255.0, 170.0 / 255.0, 1.0];
        assert_eq!(ds.row(0), &expected);
        assert_eq!(ds.labels(), &[7]);
        assert_eq!(ds.num_classes(), 10);

        let full = mnist_dataset(&images, &labels, 0).unwrap();
        assert_eq!(full.raw_dim(), 16);
        assert_eq!(full.row(0)[15], 1.0);
    }

    #[test]
    fn mnist_sized_crop() {
        let images = IdxImages {
            count: 2,
            rows: 28,
            cols: 28,
            pixels: vec![255; 2 * 784],
        };
        let ds = mnist_dataset(&images, &[0, 9], 4).unwrap();
        assert_eq!(ds.raw_dim(), 400);
        assert_eq!(ds.dim(), 401);
        assert_eq!(mnist_dataset(&images, &[0, 9], 0).unwrap().raw_dim(), 784);
    }

    #[test]
    fn idx_errors() {
        let mut bad = idx_images(1, 2, 2, &[0; 4]);
        bad[3] = 0x01;
        assert!(matches!(parse_idx_images(&bad), Err(Error::BadMagic { found: 0x801, .. })));
        assert!(matches!(parse_idx_images(&idx_images(2, 2, 2, &[0; 4])), Err(Error::TruncatedFile(_))));
        assert!(matches!(parse_idx_images(&[0, 0, 8]), Err(Error::TruncatedFile(_))));
        assert!(matches!(parse_idx_labels(&idx_images(1, 1, 1, &[0])), Err(Error::BadMagic { .. })));
        let images = parse_idx_images(&idx_images(2, 2, 2, &[0; 8])).unwrap();
        assert!(matches!(mnist_dataset(&images, &[1], 0), Err(Error::CountMismatch { images: 2, labels: 1 })));
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        std::fs::write(&ip, idx_images(1, 2, 2, &[0, 255, 51, 0])).unwrap();
        std::fs::write(&lp, idx_labels(&[3])).unwrap();
        let ds = load_mnist_idx(&ip, &lp, 0).unwrap();
        assert_eq!(ds.row(0), &[0.0, 1.0, 0.2, 0.0, 1.0]);
        assert!(matches!(load_mnist_idx(dir.path().join("nope"), &lp, 0), Err(Error::Io { .. })));
    }
}
