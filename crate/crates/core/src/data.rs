//! Dataset ingestion, normalization and batching.
//!
//! The canonical on-disk format is IDX (big-endian header, unsigned
//! byte payload). A dataset directory holds
//! `train-images-idx3-ubyte` / `t10k-images-idx3-ubyte` and optional
//! matching label files. Pixels are normalized from [0,255] to [-1,+1]
//! for training and rescaled back for metric evaluation.

use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::SeededRng;

pub const IMAGE_ROWS: usize = 28;
pub const IMAGE_COLS: usize = 28;
pub const IMAGE_DIM: usize = IMAGE_ROWS * IMAGE_COLS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Raw images of one split: `count` images of `rows × cols` bytes.
#[derive(Clone)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub images: Vec<u8>,
    pub labels: Option<Vec<u8>>,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.rows * self.cols;
        &self.images[i * d..(i + 1) * d]
    }

    pub fn image_dim(&self) -> usize {
        self.rows * self.cols
    }

    /// Keeps only the first `n` images (deterministic subset).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.count);
        let d = self.image_dim();
        Dataset {
            name: self.name.clone(),
            split: self.split,
            images: self.images[..n * d].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            count: n,
            rows: self.rows,
            cols: self.cols,
        }
    }
}

// ---- IDX format ----------------------------------------------------------

/// Decoded IDX payload: dimension sizes plus the raw bytes.
#[derive(Debug)]
pub struct IdxData {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX buffer: magic `00 00`, type code `08` (unsigned
/// byte), dimension count, big-endian u32 dimension sizes, payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let fail = |offset: usize, msg: &str| Error::IdxFormat {
        offset,
        msg: msg.to_string(),
    };
    if bytes.len() < 4 {
        return Err(fail(0, "file shorter than the 4-byte header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(fail(0, "bad magic, expected 00 00"));
    }
    if bytes[2] != 0x08 {
        return Err(fail(2, "unsupported type code, expected 0x08 (ubyte)"));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(fail(3, "zero dimensions"));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(fail(bytes.len(), "truncated dimension table"));
    }
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        let off = 4 + 4 * d;
        let v = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        dims.push(v);
    }
    let expected: usize = dims.iter().product();
    let actual = bytes.len() - header_len;
    if actual < expected {
        return Err(fail(
            header_len + actual,
            &format!("truncated payload: expected {expected} bytes, found {actual}"),
        ));
    }
    if actual > expected {
        return Err(fail(
            header_len + expected,
            &format!("trailing bytes: expected {expected} payload bytes, found {actual}"),
        ));
    }
    Ok(IdxData {
        dims,
        data: bytes[header_len..].to_vec(),
    })
}

/// Writes an IDX image file (`00 00 08 03`, dims count/rows/cols).
pub fn write_idx_images(path: &Path, images: &[u8], count: usize, rows: usize, cols: usize) -> Result<()> {
    if images.len() != count * rows * cols {
        return Err(Error::Data {
            name: path.display().to_string(),
            msg: format!(
                "payload length {} does not match {count}x{rows}x{cols}",
                images.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&[0, 0, 0x08, 3]);
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(images);
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes an IDX label file (`00 00 08 01`).
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&[0, 0, 0x08, 1]);
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    std::fs::write(path, out)?;
    Ok(())
}

/// Builds a dataset from in-memory IDX image bytes (and optional label
/// bytes), enforcing the 28×28 image shape.
pub fn dataset_from_idx(
    name: &str,
    split: Split,
    image_bytes: &[u8],
    label_bytes: Option<&[u8]>,
) -> Result<Dataset> {
    let idx = parse_idx(image_bytes)?;
    if idx.dims.len() != 3 {
        return Err(Error::Data {
            name: name.to_string(),
            msg: format!("expected 3 dimensions for images, got {:?}", idx.dims),
        });
    }
    let (count, rows, cols) = (idx.dims[0], idx.dims[1], idx.dims[2]);
    if rows != IMAGE_ROWS || cols != IMAGE_COLS {
        return Err(Error::Data {
            name: name.to_string(),
            msg: format!("expected {IMAGE_ROWS}x{IMAGE_COLS} images, got {rows}x{cols}"),
        });
    }
    let labels = match label_bytes {
        Some(b) => {
            let l = parse_idx(b)?;
            if l.dims.len() != 1 || l.dims[0] != count {
                return Err(Error::Data {
                    name: name.to_string(),
                    msg: format!("label dims {:?} do not match {count} images", l.dims),
                });
            }
            Some(l.data)
        }
        None => None,
    };
    Ok(Dataset {
        name: name.to_string(),
        split,
        images: idx.data,
        labels,
        count,
        rows,
        cols,
    })
}

// ---- normalization -------------------------------------------------------

/// Pixel byte to training range: `v/127.5 - 1 ∈ [-1, +1]`.
#[inline]
pub fn normalize<T: Real>(v: u8) -> T {
    T::from_f64(f64::from(v) / 127.5 - 1.0)
}

/// Inverse of [`normalize`]: clamps to [-1,1], rescales and rounds to
/// the nearest byte.
#[inline]
pub fn denormalize<T: Real>(v: T) -> u8 {
    let c = v.to_f64().clamp(-1.0, 1.0);
    ((c + 1.0) * 127.5).round() as u8
}

pub fn normalize_image<T: Real>(bytes: &[u8]) -> Vec<T> {
    bytes.iter().map(|&b| normalize(b)).collect()
}

pub fn denormalize_image<T: Real>(reals: &[T]) -> Vec<u8> {
    reals.iter().map(|&v| denormalize(v)).collect()
}

// ---- batching --------------------------------------------------------------

/// One minibatch: normalized rows plus the source image indices.
pub struct Batch<T> {
    pub data: Tensor<T>,
    pub indices: Vec<usize>,
}

/// Lazy minibatch sequence over a dataset.
pub struct Batches<'a, T> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    drop_last: bool,
    pos: usize,
    _marker: std::marker::PhantomData<T>,
}

/// Splits the dataset into minibatches. With `shuffle`, the visit
/// order is a seeded permutation; otherwise file order. `drop_last`
/// discards a final short batch (training keeps batch statistics
/// uniform; evaluation keeps the tail).
pub fn batches<T: Real>(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
    drop_last: bool,
) -> Result<Batches<'_, T>> {
    if dataset.count == 0 {
        return Err(Error::Data {
            name: dataset.name.clone(),
            msg: "empty dataset".into(),
        });
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..dataset.count).collect();
    if shuffle {
        SeededRng::new(seed).shuffle(&mut order);
    }
    Ok(Batches {
        dataset,
        order,
        batch_size,
        drop_last,
        pos: 0,
        _marker: std::marker::PhantomData,
    })
}

impl<T: Real> Iterator for Batches<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        let remaining = self.order.len() - self.pos;
        if remaining == 0 || (self.drop_last && remaining < self.batch_size) {
            return None;
        }
        let take = remaining.min(self.batch_size);
        let indices: Vec<usize> = self.order[self.pos..self.pos + take].to_vec();
        self.pos += take;
        let dim = self.dataset.image_dim();
        let mut data = Vec::with_capacity(take * dim);
        for &i in &indices {
            data.extend(self.dataset.image(i).iter().map(|&b| normalize::<T>(b)));
        }
        Some(Batch {
            data: Tensor::matrix(take, dim, data).unwrap(),
            indices,
        })
    }
}

// ---- registry --------------------------------------------------------------

/// Declared class and sample counts for the known datasets. Counts for
/// the medical collection vary by release, so mismatches warn instead
/// of aborting.
#[derive(Debug)]
pub struct RegistryEntry {
    pub name: &'static str,
    pub classes: usize,
    pub train: usize,
    pub test: usize,
}

pub const REGISTRY: &[RegistryEntry] = &[
    RegistryEntry { name: "mnist", classes: 10, train: 60000, test: 10000 },
    RegistryEntry { name: "emnist-digits", classes: 10, train: 240000, test: 40000 },
    RegistryEntry { name: "emnist-letters", classes: 26, train: 124800, test: 20800 },
    RegistryEntry { name: "emnist-balanced", classes: 47, train: 112800, test: 18800 },
    RegistryEntry { name: "emnist-bymerge", classes: 47, train: 697932, test: 116323 },
    RegistryEntry { name: "emnist-byclass", classes: 62, train: 697932, test: 116323 },
    RegistryEntry { name: "fmnist", classes: 10, train: 60000, test: 10000 },
    RegistryEntry { name: "mmnist-breast", classes: 2, train: 546, test: 156 },
    RegistryEntry { name: "mmnist-chest", classes: 2, train: 78468, test: 22433 },
    RegistryEntry { name: "mmnist-derma", classes: 7, train: 7007, test: 2005 },
    RegistryEntry { name: "mmnist-oct", classes: 4, train: 97477, test: 1000 },
    RegistryEntry { name: "mmnist-organ-axial", classes: 11, train: 34581, test: 17778 },
    RegistryEntry { name: "mmnist-organ-coronal", classes: 11, train: 13000, test: 8268 },
    RegistryEntry { name: "mmnist-organ-sagittal", classes: 11, train: 13940, test: 8829 },
    RegistryEntry { name: "mmnist-pathology", classes: 9, train: 89996, test: 7180 },
    RegistryEntry { name: "mmnist-pneumonia", classes: 2, train: 4708, test: 624 },
    RegistryEntry { name: "mmnist-retina", classes: 5, train: 1080, test: 400 },
];

pub fn registry_entry(name: &str) -> Result<&'static RegistryEntry> {
    REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| {
        let known: Vec<&str> = REGISTRY.iter().map(|e| e.name).collect();
        Error::UnknownDataset {
            name: name.to_string(),
            known: known.join(", "),
        }
    })
}

/// Train/test pair plus any count-mismatch warnings.
pub struct LoadedPair {
    pub train: Dataset,
    pub test: Dataset,
    pub warnings: Vec<String>,
}

const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn read_optional(path: PathBuf) -> Option<Vec<u8>> {
    std::fs::read(path).ok()
}

/// Loads a registered dataset from `<root>/<name>/`. Image files are
/// required; label files are optional provenance.
pub fn load_registry(name: &str, root: &Path) -> Result<LoadedPair> {
    let entry = registry_entry(name)?;
    let dir = root.join(name);
    let read_required = |file: &str| -> Result<Vec<u8>> {
        let path = dir.join(file);
        std::fs::read(&path).map_err(|e| Error::Data {
            name: name.to_string(),
            msg: format!("cannot read {}: {e}", path.display()),
        })
    };
    let train = dataset_from_idx(
        name,
        Split::Train,
        &read_required(TRAIN_IMAGES)?,
        read_optional(dir.join(TRAIN_LABELS)).as_deref(),
    )?;
    let test = dataset_from_idx(
        name,
        Split::Test,
        &read_required(TEST_IMAGES)?,
        read_optional(dir.join(TEST_LABELS)).as_deref(),
    )?;
    let mut warnings = Vec::new();
    if train.count != entry.train {
        warnings.push(format!(
            "{name}: train count {} differs from the declared {}",
            train.count, entry.train
        ));
    }
    if test.count != entry.test {
        warnings.push(format!(
            "{name}: test count {} differs from the declared {}",
            test.count, entry.test
        ));
    }
    Ok(LoadedPair {
        train,
        test,
        warnings,
    })
}

/// Luminance grayscale for color sources, rounded to the nearest byte.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)).round() as u8
}
