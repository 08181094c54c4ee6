//! IDX container parsing (the MNIST file format).
//!
//! Big-endian headers: images are `magic, count, rows, cols` followed by
//! unsigned bytes; labels are `magic, count` followed by unsigned bytes.
//! Files ending in `.gz` are decompressed transparently.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::DatasetSplit;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], offset: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(offset..offset + len).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        detail: format!(
            "expected {len} payload bytes, found {}",
            bytes.len().saturating_sub(offset)
        ),
    })
}

/// Raw images: `(count, rows, cols, pixels)`.
pub fn read_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read_all(path)?;
    check_magic(&bytes, IMAGES_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let pixels = payload(&bytes, 16, n * rows * cols, path)?.to_vec();
    Ok((n, rows, cols, pixels))
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_all(path)?;
    check_magic(&bytes, LABELS_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, n, path)?.to_vec())
}

/// Loads an image/label file pair, scaling pixels by `1/255`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<DatasetSplit> {
    let (n, rows, cols, pixels) = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DatasetSplit {
        name,
        width: rows * cols,
        images: pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        labels,
    })
}

/// Encodes images in IDX format (uncompressed).
pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Standard file names of a train or test split, preferring gzip archives
/// when present.
pub fn split_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    let pick = |stem: String| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(stem)
        }
    };
    (
        pick(format!("{prefix}-images-idx3-ubyte")),
        pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        if name.ends_with(".gz") {
            let mut enc = GzEncoder::new(File::create(&p).unwrap(), Compression::default());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap();
        } else {
            std::fs::write(&p, bytes).unwrap();
        }
        p
    }

    #[test]
    fn scales_pixels() {
        let d = tempfile::tempdir().unwrap();
        let px = [0u8, 255, 128, 64, 0, 255, 128, 64];
        let i = write(d.path(), "img", &encode_images(2, 2, &px));
        let l = write(d.path(), "lab", &encode_labels(&[3, 7]));
        let s = load_idx(&i, &l).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.width, 4);
        let expect = [0.0, 1.0, 0.501_96, 0.250_98];
        for (got, want) in s.images[..4].iter().zip(expect) {
            assert!((got - want).abs() < 1e-5);
        }
        assert_eq!(s.labels, vec![3, 7]);
    }

    #[test]
    fn gzip_is_transparent() {
        let d = tempfile::tempdir().unwrap();
        let px = [1u8, 2, 3, 4];
        let i = write(d.path(), "img.gz", &encode_images(2, 2, &px));
        let l = write(d.path(), "lab.gz", &encode_labels(&[5]));
        let i2 = write(d.path(), "img", &encode_images(2, 2, &px));
        let l2 = write(d.path(), "lab", &encode_labels(&[5]));
        assert_eq!(load_idx(&i, &l).unwrap().images, load_idx(&i2, &l2).unwrap().images);
    }

    #[test]
    fn distinct_errors() {
        let d = tempfile::tempdir().unwrap();
        let i = write(d.path(), "img", &encode_images(2, 2, &[0; 8]));
        let l = write(d.path(), "lab", &encode_labels(&[1, 2, 3]));
        assert!(matches!(load_idx(&i, &l), Err(Error::CountMismatch { images: 2, labels: 3 })));

        let mut bad = encode_images(2, 2, &[0; 4]);
        bad[..4].copy_from_slice(&0u32.to_be_bytes());
        let b = write(d.path(), "bad", &bad);
        assert!(matches!(load_idx(&b, &l), Err(Error::BadMagic { found: 0, .. })));

        let mut short = encode_images(2, 2, &[0; 8]);
        short.truncate(20);
        let s = write(d.path(), "short", &short);
        assert!(matches!(load_idx(&s, &l), Err(Error::Truncated { .. })));

        let s = write(d.path(), "tiny", &[0, 0, 8]);
        assert!(matches!(read_images(&s), Err(Error::Truncated { .. })));

        // Images file passed as labels.
        assert!(matches!(read_labels(&i), Err(Error::BadMagic { .. })));
    }
}
