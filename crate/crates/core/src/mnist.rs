//! MNIST IDX loading and preprocessing to the 29x29 network input.
//!
//! IDX files are big-endian: a 4-byte magic (`0x00000803` for images,
//! `0x00000801` for labels), one 4-byte count per dimension, then the raw
//! `u8` payload. Gzip-compressed files are detected by their magic bytes
//! and decompressed transparently.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Side length of a raw MNIST image.
pub const RAW_SIZE: usize = 28;
/// Side length of the network input.
pub const INPUT_SIZE: usize = 29;
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Row-major pixels, image after image.
    pub pixels: Vec<u8>,
}

impl ImageSet {
    pub fn image(&self, idx: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.pixels[idx * n..(idx + 1) * n]
    }

    pub fn truncate(&mut self, count: usize) {
        self.count = self.count.min(count);
        self.pixels.truncate(self.count * self.height * self.width);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub count: usize,
    pub labels: Vec<u8>,
}

/// A 29x29 network input in `[0, 1]` with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedImage {
    pub pixels: Vec<f32>,
    pub label: usize,
}

fn open(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], path: &Path, words: usize) -> Result<Vec<u32>> {
    if bytes.len() < 4 * words {
        return Err(Error::Format {
            path: path.into(),
            message: format!("file is {} bytes, shorter than its header", bytes.len()),
        });
    }
    Ok(bytes[..4 * words]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_magic(found: u32, want: u32, path: &Path) -> Result<()> {
    if found == want {
        Ok(())
    } else {
        Err(Error::Format {
            path: path.into(),
            message: format!("magic {found:#010x}, expected {want:#010x}"),
        })
    }
}

fn payload<'a>(bytes: &'a [u8], offset: usize, expected: usize, path: &Path) -> Result<&'a [u8]> {
    let found = bytes.len() - offset;
    if found < expected {
        return Err(Error::Length {
            path: path.into(),
            expected: expected as u64,
            found: found as u64,
        });
    }
    Ok(&bytes[offset..offset + expected])
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<ImageSet> {
    let path = path.as_ref();
    let bytes = open(path)?;
    let magic = header(&bytes, path, 1)?[0];
    check_magic(magic, IMAGES_MAGIC, path)?;
    let h = header(&bytes, path, 4)?;
    let (count, height, width) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let pixels = payload(&bytes, 16, count * height * width, path)?.to_vec();
    Ok(ImageSet {
        count,
        height,
        width,
        pixels,
    })
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    let path = path.as_ref();
    let bytes = open(path)?;
    let h = header(&bytes, path, 2)?;
    check_magic(h[0], LABELS_MAGIC, path)?;
    let count = h[1] as usize;
    let labels = payload(&bytes, 8, count, path)?.to_vec();
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= CLASSES) {
        return Err(Error::Data(format!(
            "{}: label {bad} at index {i} is not a digit",
            path.display()
        )));
    }
    Ok(LabelSet { count, labels })
}

/// Writes a 28x28 image into a 29x29 buffer scaled by 1/255. The extra
/// bottom row and right column are zero.
pub fn preprocess_into<T: Scalar>(raw: &[u8], out: &mut [T]) {
    debug_assert_eq!(raw.len(), RAW_SIZE * RAW_SIZE);
    debug_assert_eq!(out.len(), INPUT_SIZE * INPUT_SIZE);
    for (y, dst) in out.chunks_exact_mut(INPUT_SIZE).enumerate() {
        if y < RAW_SIZE {
            let src = &raw[y * RAW_SIZE..(y + 1) * RAW_SIZE];
            for (d, &p) in dst.iter_mut().zip(src) {
                *d = T::of(p as f64 / 255.0);
            }
            dst[RAW_SIZE] = T::zero();
        } else {
            dst.fill(T::zero());
        }
    }
}

pub fn preprocess(raw: &[u8], label: usize) -> PreprocessedImage {
    let mut pixels = vec![0.0f32; INPUT_SIZE * INPUT_SIZE];
    preprocess_into(raw, &mut pixels);
    PreprocessedImage { pixels, label }
}

/// Images paired with their labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSet {
    pub images: ImageSet,
    pub labels: LabelSet,
}

impl LabeledSet {
    pub fn new(images: ImageSet, labels: LabelSet) -> Result<Self> {
        if images.count != labels.count {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.count, labels.count
            )));
        }
        if (images.height, images.width) != (RAW_SIZE, RAW_SIZE) {
            return Err(Error::Data(format!(
                "images are {}x{}, expected {RAW_SIZE}x{RAW_SIZE}",
                images.height, images.width
            )));
        }
        Ok(LabeledSet { images, labels })
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_idx_images(images)?, load_idx_labels(labels)?)
    }

    pub fn len(&self) -> usize {
        self.images.count
    }

    pub fn is_empty(&self) -> bool {
        self.images.count == 0
    }

    pub fn raw(&self, idx: usize) -> &[u8] {
        self.images.image(idx)
    }

    pub fn label(&self, idx: usize) -> usize {
        self.labels.labels[idx] as usize
    }

    pub fn get(&self, idx: usize) -> PreprocessedImage {
        preprocess(self.raw(idx), self.label(idx))
    }

    /// The first `count` samples in file order.
    pub fn take(mut self, count: usize) -> Self {
        self.images.truncate(count);
        self.labels.count = self.labels.count.min(count);
        self.labels.labels.truncate(self.labels.count);
        self
    }
}

/// Training, validation and test sets. Validation defaults to the training
/// set.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: LabeledSet,
    pub validation: Option<LabeledSet>,
    pub test: LabeledSet,
}

/// File names tried, in order, for each of the four MNIST files.
const NAMES: [(&str, &str); 4] = [
    ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
    ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
    ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
];

fn find(dir: &Path, names: (&str, &str)) -> Result<PathBuf> {
    for base in [names.0, names.1] {
        for suffix in ["", ".gz"] {
            let p = dir.join(format!("{base}{suffix}"));
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(Error::io(
        dir.join(names.0),
        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
    ))
}

impl Dataset {
    /// Loads the standard MNIST file names (optionally `.gz`) from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let paths: Vec<PathBuf> = NAMES
            .iter()
            .map(|&n| find(dir, n))
            .collect::<Result<_>>()?;
        Ok(Dataset {
            train: LabeledSet::load(&paths[0], &paths[1])?,
            validation: None,
            test: LabeledSet::load(&paths[2], &paths[3])?,
        })
    }

    pub fn validation(&self) -> &LabeledSet {
        self.validation.as_ref().unwrap_or(&self.train)
    }

    /// Keeps the first `train` training images and the first `test` test
    /// images.
    pub fn subset(mut self, train: usize, test: usize) -> Self {
        self.train = self.train.take(train);
        self.test = self.test.take(test);
        self.validation = self.validation.map(|v| v.take(train));
        self
    }
}

/// Encodes an IDX image file; used to build synthetic datasets.
pub fn encode_idx_images(count: usize, height: usize, width: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, height as u32, width as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
