//! Big-endian IDX files as distributed for MNIST-family benchmarks.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::data::{Instance, LabelId, PartialDataset};
use crate::error::{Error, Result};

pub const IDX3_MAGIC: u32 = 0x0000_0803;
pub const IDX1_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// One row-major image per entry, pixels scaled to `[0, 1]`.
    pub images: Vec<Vec<f64>>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

fn bad_magic(expected: u32, got: u32) -> Error {
    Error::Parse {
        line: 0,
        message: format!("IDX magic {got:#010x}, expected {expected:#010x}"),
    }
}

pub fn read_idx_images<R: Read>(mut r: R) -> Result<IdxImages> {
    let magic = read_u32(&mut r)?;
    if magic != IDX3_MAGIC {
        return Err(bad_magic(IDX3_MAGIC, magic));
    }
    let n = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let mut raw = vec![0u8; n * rows * cols];
    r.read_exact(&mut raw)?;
    let images = raw
        .chunks(rows * cols)
        .map(|img| img.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    Ok(IdxImages { rows, cols, images })
}

pub fn read_idx_labels<R: Read>(mut r: R) -> Result<Vec<u8>> {
    let magic = read_u32(&mut r)?;
    if magic != IDX1_MAGIC {
        return Err(bad_magic(IDX1_MAGIC, magic));
    }
    let n = read_u32(&mut r)? as usize;
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)?;
    Ok(labels)
}

/// Precise oracle dataset from an image/label file pair, optionally keeping
/// only the first `limit` instances. `K` is the largest label plus one.
pub fn load_idx_dataset(images: &Path, labels: &Path, limit: Option<usize>) -> Result<PartialDataset> {
    let imgs = read_idx_images(BufReader::new(File::open(images)?))?;
    let labs = read_idx_labels(BufReader::new(File::open(labels)?))?;
    if imgs.images.len() != labs.len() {
        return Err(Error::LengthMismatch {
            left: imgs.images.len(),
            right: labs.len(),
        });
    }
    let n = limit.map_or(labs.len(), |l| l.min(labs.len()));
    let k = labs[..n].iter().copied().max().map_or(0, |m| m as usize + 1).max(2);
    let instances = imgs
        .images
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(id, features)| Instance { id, features })
        .collect();
    let truths = labs[..n].iter().map(|&l| LabelId(u32::from(l))).collect();
    PartialDataset::precise(instances, truths, k)
}
