//! MNIST in its native IDX format.
//!
//! All integers are big-endian `u32`. Image files start with magic 2051
//! (`0x00000803`) followed by count, rows and cols; label files with magic
//! 2049 (`0x00000801`) and count. Payloads are one unsigned byte per pixel or
//! label. Files may be gzip-compressed; that is detected from the first two
//! bytes.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::dataset::{DataSplit, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;

/// Raw bytes of a possibly gzipped file.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("bad gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let Some(chunk) = self.bytes.get(self.pos..self.pos + 4) else {
            return Err(Error::format(
                self.path,
                format!("truncated header: file ends before {what}"),
            ));
        };
        self.pos += 4;
        Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32("magic number")?;
        if found != expected {
            return Err(Error::format(
                self.path,
                format!("expected magic {expected} (0x{expected:08x}), found {found} (0x{found:08x})"),
            ));
        }
        Ok(())
    }

    fn payload(&self, len: usize) -> Result<&[u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < len {
            return Err(Error::format(
                self.path,
                format!("truncated payload: expected {len} bytes, found {}", rest.len()),
            ));
        }
        if rest.len() > len {
            return Err(Error::format(
                self.path,
                format!("{} trailing bytes after payload", rest.len() - len),
            ));
        }
        Ok(rest)
    }
}

/// Images as an `n × (rows·cols)` matrix scaled into `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Matrix> {
    let mut cur = Cursor { bytes, pos: 0, path };
    cur.magic(IMAGE_MAGIC)?;
    let n = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    let pixels = cur.payload(n * rows * cols)?;
    let values = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Matrix::from_vec(n, rows * cols, values)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let mut cur = Cursor { bytes, pos: 0, path };
    cur.magic(LABEL_MAGIC)?;
    let n = cur.u32("label count")? as usize;
    Ok(cur.payload(n)?.iter().map(|&b| b as usize).collect())
}

/// Loads a pair of IDX files into a 10-class dataset.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_idx_images(&read_maybe_gz(ip)?, ip)?;
    let labels = parse_idx_labels(&read_maybe_gz(lp)?, lp)?;
    if images.rows() != labels.len() {
        return Err(Error::format(
            lp,
            format!("{} labels for {} images", labels.len(), images.rows()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= MNIST_CLASSES) {
        return Err(Error::format(lp, format!("label {bad} is not a digit")));
    }
    Dataset::new(images, labels, MNIST_CLASSES)
}

/// `dir/stem` or `dir/stem.gz`, whichever exists.
fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::io(
        plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
    ))
}

/// Loads `train-*` and `t10k-*` IDX files (optionally `.gz`) from a directory.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<DataSplit> {
    let dir = dir.as_ref();
    let train = load_mnist_idx(
        locate(dir, "train-images-idx3-ubyte")?,
        locate(dir, "train-labels-idx1-ubyte")?,
    )?;
    let test = load_mnist_idx(
        locate(dir, "t10k-images-idx3-ubyte")?,
        locate(dir, "t10k-labels-idx1-ubyte")?,
    )?;
    DataSplit::new(train, test)
}

/// IDX image file bytes for `n` images of `rows × cols` pixels.
pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn parses_and_scales() {
        let bytes = encode_idx_images(2, 1, 2, &[0, 255, 51, 102]);
        let m = parse_idx_images(&bytes, p()).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.values(), &[0.0, 1.0, 0.2, 0.4]);
        let l = parse_idx_labels(&encode_idx_labels(&[3, 9]), p()).unwrap();
        assert_eq!(l, vec![3, 9]);
    }

    #[test]
    fn wrong_magic_names_both_values() {
        let mut bytes = encode_idx_labels(&[1]);
        bytes[3] = 0x03;
        let err = parse_idx_labels(&bytes, p()).unwrap_err().to_string();
        assert!(err.contains("2049") && err.contains("2051"), "{err}");
    }

    #[test]
    fn truncations_rejected() {
        let bytes = encode_idx_images(1, 2, 2, &[1, 2, 3, 4]);
        for cut in 0..bytes.len() {
            assert!(parse_idx_images(&bytes[..cut], p()).is_err(), "prefix {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(parse_idx_images(&long, p()).is_err());
    }
}
