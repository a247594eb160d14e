//! IDX files as distributed with MNIST: a big-endian `u32` magic, one
//! big-endian `u32` per dimension, then unsigned bytes. Files ending in `.gz`
//! (or starting with the gzip signature) are decompressed transparently.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_LABELS_MAGIC: u32 = 2049;
pub const IDX_IMAGES_MAGIC: u32 = 2051;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn rank_of(magic: u32) -> Option<usize> {
    match magic {
        IDX_LABELS_MAGIC => Some(1),
        IDX_IMAGES_MAGIC => Some(3),
        _ => None,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("gzip: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = read_bytes(path)?;
    parse_idx(&bytes, path)
}

pub(crate) fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| bad("truncated header".into()))
    };
    let magic = word(0)?;
    let rank = rank_of(magic).ok_or_else(|| bad(format!("unexpected IDX magic {magic}")))?;
    let dims = (1..=rank)
        .map(|i| word(i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 * (rank + 1);
    let expected: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() < expected {
        return Err(bad(format!(
            "truncated: expected {expected} data bytes, found {}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(bad(format!("{} trailing bytes", body.len() - expected)));
    }
    Ok(IdxArray {
        magic,
        dims,
        data: body.to_vec(),
    })
}

/// Writes an IDX file, gzip-compressed when `path` ends in `.gz`.
pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let rank = rank_of(array.magic)
        .ok_or_else(|| Error::invalid(format!("unexpected IDX magic {}", array.magic)))?;
    if array.dims.len() != rank || array.dims.iter().product::<usize>() != array.data.len() {
        return Err(Error::shape("IDX payload", &array.dims, array.data.len()));
    }
    let mut bytes = Vec::with_capacity(4 * (rank + 1) + array.data.len());
    bytes.extend_from_slice(&array.magic.to_be_bytes());
    for &d in &array.dims {
        bytes.extend_from_slice(&(d as u32).to_be_bytes());
    }
    bytes.extend_from_slice(&array.data);
    let io = |e| Error::io(path, e);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(io)?;
        bytes = enc.finish().map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

/// Images as an `N × (rows·cols)` tensor in `[0, 1]`, and their labels.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<(Tensor, Vec<u8>)> {
    let images = read_idx(images_path)?;
    if images.magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            message: format!(
                "expected image magic {IDX_IMAGES_MAGIC}, found {}",
                images.magic
            ),
        });
    }
    let labels = read_idx(labels_path)?;
    if labels.magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!(
                "expected label magic {IDX_LABELS_MAGIC}, found {}",
                labels.magic
            ),
        });
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::shape("MNIST label count", n, labels.dims[0]));
    }
    let pixels = images.dims[1] * images.dims[2];
    let x = Tensor::matrix(
        n,
        pixels,
        images.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    Ok((x, labels.data))
}

/// 2×2 average pooling of square images stored row-major, one per row.
pub fn downsample_2x(images: &Tensor) -> Result<Tensor> {
    let (n, p) = images.dims2();
    let side = (p as f64).sqrt().round() as usize;
    if side * side != p || side % 2 != 0 {
        return Err(Error::shape("square image with even side", p, side));
    }
    let half = side / 2;
    let mut out = Vec::with_capacity(n * half * half);
    for i in 0..n {
        let img = images.row(i);
        for r in 0..half {
            for c in 0..half {
                let at = |rr: usize, cc: usize| img[rr * side + cc];
                let s = at(2 * r, 2 * c)
                    + at(2 * r, 2 * c + 1)
                    + at(2 * r + 1, 2 * c)
                    + at(2 * r + 1, 2 * c + 1);
                out.push(0.25 * s);
            }
        }
    }
    Tensor::matrix(n, half * half, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut b = magic.to_be_bytes().to_vec();
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b
    }

    #[test]
    fn parses_train_header() {
        // Header of the published 60000-image training file, without the body.
        let mut bytes = header(2051, &[60000, 28, 28]);
        bytes.resize(bytes.len() + 60000 * 784, 0);
        let a = parse_idx(&bytes, Path::new("mem")).unwrap();
        assert_eq!(a.dims, vec![60000, 28, 28]);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let mut bytes = header(2052, &[1, 1, 1]);
        bytes.push(0);
        assert!(matches!(
            parse_idx(&bytes, Path::new("m")),
            Err(Error::Format { .. })
        ));
        let mut short = header(2049, &[3]);
        short.push(1);
        assert!(parse_idx(&short, Path::new("m")).is_err());
        assert!(parse_idx(&[0, 0], Path::new("m")).is_err());
    }

    #[test]
    fn pooling_averages_blocks() {
        let img = Tensor::matrix(1, 16, (0..16).map(f64::from).collect()).unwrap();
        let p = downsample_2x(&img).unwrap();
        // top-left block 0, 1, 4, 5
        assert_eq!(p.data(), &[2.5, 4.5, 10.5, 12.5]);
    }
}
