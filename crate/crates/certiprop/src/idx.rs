//! MNIST IDX files: big-endian `u32` magic and dimensions followed by
//! unsigned bytes.

use std::path::Path;

use certiprop_core::data::Dataset;

use crate::error::{CliError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn bad(what: &str, msg: impl Into<String>) -> CliError {
    CliError::Format { what: what.into(), message: msg.into() }
}

fn header(bytes: &[u8], what: &str, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (dims + 1);
    if bytes.len() < need {
        return Err(bad(what, format!("header truncated: {} of {need} bytes", bytes.len())));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != magic {
        return Err(bad(what, format!("bad magic 0x{:08x}, expected 0x{magic:08x}", word(0))));
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn payload<'a>(bytes: &'a [u8], what: &str, offset: usize, len: usize) -> Result<&'a [u8]> {
    let have = bytes.len() - offset;
    if have < len {
        return Err(bad(what, format!("payload truncated: {have} of {len} bytes")));
    }
    if have > len {
        return Err(bad(what, format!("{} trailing bytes after payload", have - len)));
    }
    Ok(&bytes[offset..])
}

/// Parses an image file into `(rows, cols, pixels)` with one flattened
/// row-major image per entry.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, Vec<&[u8]>)> {
    let d = header(bytes, "images", IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (d[0], d[1], d[2]);
    let size = rows * cols;
    let data = payload(bytes, "images", 16, n * size)?;
    Ok((rows, cols, if size == 0 { vec![&data[..0]; n] } else { data.chunks(size).collect() }))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let n = header(bytes, "labels", LABELS_MAGIC, 1)?[0];
    payload(bytes, "labels", 8, n)
}

/// Builds a dataset from image and label file contents, keeping at most
/// `limit` instances. Pixels are scaled to `[0, 1]` by `/255`.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], limit: Option<usize>, name: &str) -> Result<Dataset> {
    let (_, _, imgs) = parse_images(images)?;
    let lbls = parse_labels(labels)?;
    if imgs.len() != lbls.len() {
        return Err(bad("mnist", format!("{} images but {} labels", imgs.len(), lbls.len())));
    }
    let n = limit.map_or(imgs.len(), |l| l.min(imgs.len()));
    if n == 0 {
        return Err(CliError::Validation(certiprop_core::Error::EmptyDataset));
    }
    let inputs = imgs[..n].iter().map(|img| img.iter().map(|&p| p as f64 / 255.0).collect()).collect();
    let labels = lbls[..n].iter().map(|&l| l as usize).collect();
    Ok(Dataset::new(inputs, labels, name)?)
}

pub fn load_mnist_idx(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let img = std::fs::read(images).map_err(|e| CliError::io(images, e))?;
    let lbl = std::fs::read(labels).map_err(|e| CliError::io(labels, e))?;
    let name = images.file_name().map_or("mnist".into(), |n| n.to_string_lossy().into_owned());
    dataset_from_idx(&img, &lbl, limit, &name)
}

pub fn encode_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for w in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols);
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

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> (Vec<u8>, Vec<u8>) {
        let imgs: Vec<Vec<u8>> = (0..n).map(|i| (0..784).map(|p| ((p + i) % 256) as u8).collect()).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        (encode_images(&imgs, 28, 28), encode_labels(&labels))
    }

    #[test]
    fn decodes_and_scales() {
        let (img, lbl) = sample(3);
        let d = dataset_from_idx(&img, &lbl, None, "t").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.input_dim(), 784);
        assert_eq!(d.labels, vec![0, 1, 2]);
        assert_eq!(d.inputs[1][0], 1.0 / 255.0);
        assert_eq!(d.inputs[0][255], 1.0);
        assert_eq!(dataset_from_idx(&img, &lbl, Some(2), "t").unwrap().len(), 2);
        assert_eq!(dataset_from_idx(&img, &lbl, Some(10), "t").unwrap().len(), 3);
    }

    #[test]
    fn all_zero_images_decode_to_zero() {
        let img = encode_images(&vec![vec![0; 784]; 4], 28, 28);
        let d = dataset_from_idx(&img, &encode_labels(&[7; 4]), None, "z").unwrap();
        assert!(d.inputs.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn corruption_is_rejected() {
        let (img, lbl) = sample(4);
        let mut bad_magic = img.clone();
        bad_magic[3] = 0x01;
        assert!(matches!(dataset_from_idx(&bad_magic, &lbl, None, "t"), Err(CliError::Format { .. })));
        let mut bad_label_magic = lbl.clone();
        bad_label_magic[3] = 0x03;
        assert!(dataset_from_idx(&img, &bad_label_magic, None, "t").is_err());
        assert!(dataset_from_idx(&img[..img.len() - 1], &lbl, None, "t").is_err());
        assert!(dataset_from_idx(&img[..10], &lbl, None, "t").is_err());
        assert!(dataset_from_idx(&img, &lbl[..lbl.len() - 1], None, "t").is_err());
        let mut extra = img.clone();
        extra.push(0);
        assert!(dataset_from_idx(&extra, &lbl, None, "t").is_err());
        let (_, short) = sample(3);
        assert!(dataset_from_idx(&img, &short, None, "t").is_err());
        assert!(matches!(dataset_from_idx(&img, &lbl, Some(0), "t"), Err(CliError::Validation(_))));
    }
}
