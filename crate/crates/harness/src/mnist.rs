//! IDX reader for the MNIST image and label files.

use std::fmt;
use std::path::{Path, PathBuf};

use oesnn_core::learning::Dataset;
use serde::{Deserialize, Serialize};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: bad magic 0x{found:08x} at byte {offset}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        offset: usize,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated at byte {offset}: {needed} bytes required, file has {len}")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        len: usize,
    },
    #[error(
        "count mismatch: {images_path} declares {images} images (byte 4), \
         {labels_path} declares {labels} labels (byte 4)"
    )]
    CountMismatch {
        images_path: PathBuf,
        labels_path: PathBuf,
        images: usize,
        labels: usize,
    },
    #[error("{path}: label {value} at byte {offset} is outside 0-9")]
    BadLabel {
        path: PathBuf,
        offset: usize,
        value: u8,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistDataset {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub split: Option<Split>,
}

impl MnistDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.rows * self.cols;
        &self.images[i * d..(i + 1) * d]
    }

    /// Pixels of image `i` scaled to `[0, 1]`.
    pub fn normalized(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn into_dataset(self) -> Dataset {
        Dataset::new(self.rows * self.cols, self.images, self.labels)
            .expect("loader guarantees matching counts")
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn need(&self, offset: usize, n: usize) -> Result<&[u8], IdxError> {
        match offset.checked_add(n) {
            Some(end) if end <= self.bytes.len() => Ok(&self.bytes[offset..end]),
            _ => Err(IdxError::Truncated {
                path: self.path.to_path_buf(),
                offset: offset.min(self.bytes.len()),
                needed: offset.saturating_add(n),
                len: self.bytes.len(),
            }),
        }
    }

    fn u32_at(&self, offset: usize) -> Result<u32, IdxError> {
        let b = self.need(offset, 4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&self, expected: u32) -> Result<(), IdxError> {
        let found = self.u32_at(0)?;
        if found != expected {
            return Err(IdxError::BadMagic {
                path: self.path.to_path_buf(),
                offset: 0,
                found,
                expected,
            });
        }
        Ok(())
    }
}

/// `(count, rows, cols, pixels)` of an IDX image file.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), IdxError> {
    let r = Reader { path, bytes };
    r.magic(IMAGES_MAGIC)?;
    let n = r.u32_at(4)? as usize;
    let rows = r.u32_at(8)? as usize;
    let cols = r.u32_at(12)? as usize;
    let data = r.need(16, n * rows * cols)?;
    Ok((n, rows, cols, data.to_vec()))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let r = Reader { path, bytes };
    r.magic(LABELS_MAGIC)?;
    let n = r.u32_at(4)? as usize;
    let data = r.need(8, n)?;
    if let Some(k) = data.iter().position(|&v| v > 9) {
        return Err(IdxError::BadLabel {
            path: path.to_path_buf(),
            offset: 8 + k,
            value: data[k],
        });
    }
    Ok(data.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<MnistDataset, IdxError> {
    let (n, rows, cols, images) = parse_images(images_path, &read(images_path)?)?;
    let labels = parse_labels(labels_path, &read(labels_path)?)?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch {
            images_path: images_path.to_path_buf(),
            labels_path: labels_path.to_path_buf(),
            images: n,
            labels: labels.len(),
        });
    }
    Ok(MnistDataset {
        rows,
        cols,
        images,
        labels,
        split: None,
    })
}

/// Load `train` or `t10k` files from `dir`.
pub fn load_split(dir: &Path, split: Split) -> Result<MnistDataset, IdxError> {
    let p = split.prefix();
    let mut d = load_mnist(
        &dir.join(format!("{p}-images-idx3-ubyte")),
        &dir.join(format!("{p}-labels-idx1-ubyte")),
    )?;
    d.split = Some(split);
    Ok(d)
}

/// Directory holding the MNIST files: `explicit`, else `$MNIST_DIR`, else
/// `data/mnist` under the current directory or the workspace root.
pub fn locate(explicit: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os("MNIST_DIR") {
        return Some(PathBuf::from(p));
    }
    let candidates = [
        PathBuf::from("data/mnist"),
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
    ];
    candidates
        .into_iter()
        .find(|p| p.join("train-images-idx3-ubyte").is_file())
}

/// IDX bytes for `images` (each `rows * cols` long) and their labels.
pub fn write_idx(rows: usize, cols: usize, images: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + images.len());
    for v in [IMAGES_MAGIC, labels.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(images);
    let mut lab = Vec::with_capacity(8 + labels.len());
    for v in [LABELS_MAGIC, labels.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    (img, lab)
}
