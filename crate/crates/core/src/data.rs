//! Synthetic datasets, IDX file loading and seeded mini-batching.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inputs `[B x d]` with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        let (rows, _) = inputs.dims2()?;
        if labels.len() != rows {
            return Err(Error::Shape(format!("{} labels for {rows} rows", labels.len())));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn select(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    TwoMoons,
    /// Three isotropic Gaussian classes centred on a circle of radius 5.
    GaussianBlobs,
    Spirals,
    IdxFiles {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub kind: DatasetKind,
    /// Total sample count (train + test). For IDX files, 0 means "all".
    pub size: usize,
    pub noise: f64,
    pub seed: u64,
    /// Train fraction in (0, 1).
    pub split: f64,
}

impl DatasetSpec {
    pub fn two_moons(size: usize, noise: f64, seed: u64) -> Self {
        Self {
            kind: DatasetKind::TwoMoons,
            size,
            noise,
            seed,
            split: 0.5,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.kind {
            DatasetKind::TwoMoons | DatasetKind::Spirals => Some(2),
            DatasetKind::GaussianBlobs => Some(3),
            DatasetKind::IdxFiles { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidDataset(format!("split {} outside (0,1)", self.split)));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidDataset(format!("noise {} must be >= 0", self.noise)));
        }
        let synthetic = !matches!(self.kind, DatasetKind::IdxFiles { .. });
        if synthetic && self.size < 2 * self.num_classes().unwrap_or(1) {
            return Err(Error::InvalidDataset(format!("size {} too small", self.size)));
        }
        Ok(())
    }
}

/// Materializes a dataset and splits it into disjoint train and test sets.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<(Batch, Batch)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (rows, labels, classes) = match &spec.kind {
        DatasetKind::TwoMoons => {
            let (r, l) = two_moons(spec.size, spec.noise, &mut rng);
            (r, l, 2)
        }
        DatasetKind::GaussianBlobs => {
            let (r, l) = gaussian_blobs(spec.size, spec.noise, &mut rng);
            (r, l, 3)
        }
        DatasetKind::Spirals => {
            let (r, l) = spirals(spec.size, spec.noise, &mut rng);
            (r, l, 2)
        }
        DatasetKind::IdxFiles { images, labels } => {
            let all = load_idx_pair(images, labels, spec.size)?;
            let mut idx: Vec<usize> = (0..all.len()).collect();
            idx.shuffle(&mut rng);
            let n_train = ((all.len() as f64) * spec.split).round() as usize;
            if n_train == 0 || n_train == all.len() {
                return Err(Error::InvalidDataset("split leaves an empty partition".into()));
            }
            let (tr, te) = idx.split_at(n_train);
            return Ok((all.select(tr), all.select(te)));
        }
    };
    let all = Batch::new(Tensor::from_rows(&rows)?, labels)?;
    stratified_split(&all, classes, spec.split, &mut rng)
}

fn stratified_split(all: &Batch, classes: usize, split: f64, rng: &mut ChaCha8Rng) -> Result<(Batch, Batch)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..all.len()).filter(|&i| all.labels[i] == c).collect();
        members.shuffle(rng);
        let k = ((members.len() as f64) * split).round() as usize;
        let k = k.clamp(1, members.len().saturating_sub(1).max(1));
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    if test.is_empty() {
        return Err(Error::InvalidDataset("split leaves an empty test set".into()));
    }
    train.shuffle(rng);
    test.shuffle(rng);
    Ok((all.select(&train), all.select(&test)))
}

fn balanced_counts(size: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|c| size / classes + usize::from(c < size % classes))
        .collect()
}

fn jitter(noise: f64, rng: &mut ChaCha8Rng) -> f64 {
    if noise == 0.0 {
        0.0
    } else {
        Normal::new(0.0, noise).expect("noise >= 0").sample(rng)
    }
}

/// Two interleaved half circles: the upper unit arc and a lower arc shifted
/// by (1, -0.5).
fn two_moons(size: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let counts = balanced_counts(size, 2);
    let mut rows = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for (class, &n) in counts.iter().enumerate() {
        for i in 0..n {
            let t = if n > 1 { PI * i as f64 / (n - 1) as f64 } else { 0.0 };
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            rows.push(vec![x + jitter(noise, rng), y + jitter(noise, rng)]);
            labels.push(class);
        }
    }
    (rows, labels)
}

fn gaussian_blobs(size: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let counts = balanced_counts(size, 3);
    let mut rows = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for (class, &n) in counts.iter().enumerate() {
        let angle = 2.0 * PI * class as f64 / 3.0;
        let (cx, cy) = (5.0 * angle.cos(), 5.0 * angle.sin());
        for _ in 0..n {
            rows.push(vec![cx + jitter(noise, rng), cy + jitter(noise, rng)]);
            labels.push(class);
        }
    }
    (rows, labels)
}

fn spirals(size: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let counts = balanced_counts(size, 2);
    let mut rows = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for (class, &n) in counts.iter().enumerate() {
        for i in 0..n {
            let t = 0.25 + 0.75 * i as f64 / n.max(2).saturating_sub(1) as f64;
            let angle = 3.0 * PI * t + PI * class as f64;
            rows.push(vec![
                t * angle.cos() + jitter(noise, rng),
                t * angle.sin() + jitter(noise, rng),
            ]);
            labels.push(class);
        }
    }
    (rows, labels)
}

/// Parses an IDX buffer: two zero bytes, a type code, a dimension count, the
/// big-endian `u32` extents, then the big-endian payload.
pub fn parse_idx(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 4 {
        return Err(Error::Idx("file shorter than the magic number".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Idx(format!("bad magic prefix {:02x}{:02x}", bytes[0], bytes[1])));
    }
    let width = match bytes[2] {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        t => return Err(Error::Idx(format!("unknown type code 0x{t:02x}"))),
    };
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::Idx("zero dimensions".into()));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Idx("truncated dimension table".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != count * width {
        return Err(Error::Idx(format!(
            "payload has {} bytes, dims {dims:?} need {}",
            payload.len(),
            count * width
        )));
    }
    let values: Vec<f64> = match bytes[2] {
        0x08 => payload.iter().map(|&b| b as f64).collect(),
        0x09 => payload.iter().map(|&b| b as i8 as f64).collect(),
        0x0B => payload
            .chunks_exact(2)
            .map(|c| i16::from_be_bytes([c[0], c[1]]) as f64)
            .collect(),
        0x0C => payload
            .chunks_exact(4)
            .map(|c| i32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        0x0D => payload
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Tensor::new(dims, values).map_err(|e| Error::Idx(e.to_string()))
}

pub fn read_idx(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_idx(&bytes)
}

/// Loads an image/label IDX pair. Image bytes are scaled to [0, 1] and
/// flattened to one row per sample. `limit = 0` keeps every sample.
pub fn load_idx_pair(images: &Path, labels: &Path, limit: usize) -> Result<Batch> {
    let img_bytes = std::fs::read(images).map_err(|e| Error::Io(format!("{}: {e}", images.display())))?;
    let scale = if img_bytes.get(2) == Some(&0x08) {
        1.0 / 255.0
    } else {
        1.0
    };
    let img = parse_idx(&img_bytes)?;
    let lab = read_idx(labels)?;
    if lab.shape().len() != 1 {
        return Err(Error::Idx(format!("labels must be 1-D, got {:?}", lab.shape())));
    }
    let n = img.shape()[0];
    if lab.len() != n {
        return Err(Error::Idx(format!("{n} images but {} labels", lab.len())));
    }
    let keep = if limit == 0 { n } else { limit.min(n) };
    let width = img.len() / n;
    let data: Vec<f64> = img.data()[..keep * width].iter().map(|v| v * scale).collect();
    let labels: Vec<usize> = lab.data()[..keep]
        .iter()
        .map(|&v| {
            if v < 0.0 || v.fract() != 0.0 {
                Err(Error::Idx(format!("invalid label {v}")))
            } else {
                Ok(v as usize)
            }
        })
        .collect::<Result<_>>()?;
    Batch::new(Tensor::new(vec![keep, width], data)?, labels)
}

/// Seeded permutation of `0..n` for one epoch.
pub fn epoch_permutation(n: usize, epoch_seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    idx
}

/// Mini-batches over one shuffled epoch; the last partial batch is kept.
#[derive(Debug, Clone)]
pub struct BatchIter<'a> {
    data: &'a Batch,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl<'a> BatchIter<'a> {
    pub fn indices(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.data.select(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }
}

pub fn batch_iter(data: &Batch, batch_size: usize, epoch_seed: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::InvalidDataset("batch size must be positive".into()));
    }
    if batch_size > data.len() {
        return Err(Error::InvalidDataset(format!(
            "batch size {batch_size} exceeds dataset size {}",
            data.len()
        )));
    }
    Ok(BatchIter {
        data,
        order: epoch_permutation(data.len(), epoch_seed),
        batch_size,
        pos: 0,
    })
}
