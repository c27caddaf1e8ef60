//! Datasets, client shards, and reproducible sampling.

use ndarray::Array2;

use crate::error::{Error, Result};

pub mod idx;
pub mod rng;
pub mod synthetic;

pub use rng::{RngStream, StreamDomain};

/// A labeled dataset with dense feature rows.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    /// Builds a dataset, validating shapes, label range, and finiteness.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a dataset needs at least 2 classes, got {classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    /// Loads an image/label IDX pair into a dataset with features scaled to
    /// [0, 1]. With `downsample` set, each 2x2 pixel block is average-pooled
    /// first, which maps 28x28 inputs to 14x14.
    pub fn from_idx_pair(
        images_path: &std::path::Path,
        labels_path: &std::path::Path,
        downsample: bool,
    ) -> Result<Self> {
        let images = idx::read_idx_images(images_path)?;
        let labels = idx::read_idx_labels(labels_path)?;
        let (n, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
        if labels.dims[0] != n {
            return Err(Error::IdxFormat(format!(
                "{n} images but {} labels",
                labels.dims[0]
            )));
        }
        let (out_rows, out_cols) = if downsample {
            if rows % 2 != 0 || cols % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "cannot 2x2-pool odd image dims {rows}x{cols}"
                )));
            }
            (rows / 2, cols / 2)
        } else {
            (rows, cols)
        };
        let mut features = Array2::zeros((n, out_rows * out_cols));
        for i in 0..n {
            let img = &images.data[i * rows * cols..(i + 1) * rows * cols];
            for r in 0..out_rows {
                for c in 0..out_cols {
                    let v = if downsample {
                        let (r2, c2) = (2 * r, 2 * c);
                        let sum = img[r2 * cols + c2] as f64
                            + img[r2 * cols + c2 + 1] as f64
                            + img[(r2 + 1) * cols + c2] as f64
                            + img[(r2 + 1) * cols + c2 + 1] as f64;
                        sum / 4.0
                    } else {
                        img[r * cols + c] as f64
                    };
                    features[[i, r * out_cols + c]] = v / 255.0;
                }
            }
        }
        let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
        let classes = labels.iter().max().map_or(0, |&m| m + 1).max(2);
        Dataset::new(features, labels, classes)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

/// The sorted, duplicate-free dataset indices owned by one client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientShard {
    pub client: usize,
    pub indices: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Splits `0..n` into `clients` disjoint shards of near-equal size by
/// dealing a seeded permutation round-robin. Shard sizes differ by at most
/// one; every index lands in exactly one shard.
pub fn partition_indices(n: usize, clients: usize, seed: u64) -> Result<Vec<ClientShard>> {
    if clients == 0 {
        return Err(Error::InvalidArgument("cannot partition to 0 clients".into()));
    }
    if n < clients {
        return Err(Error::InvalidArgument(format!(
            "cannot give {clients} clients nonempty shards from {n} samples"
        )));
    }
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut RngStream::new(seed, StreamDomain::Partition).rng());
    let mut shards: Vec<ClientShard> = (0..clients)
        .map(|client| ClientShard {
            client,
            indices: Vec::with_capacity(n / clients + 1),
        })
        .collect();
    for (pos, &index) in perm.iter().enumerate() {
        shards[pos % clients].indices.push(index);
    }
    for shard in &mut shards {
        shard.indices.sort_unstable();
    }
    Ok(shards)
}

/// IID partition of a dataset's index space.
pub fn partition_iid(dataset: &Dataset, clients: usize, seed: u64) -> Result<Vec<ClientShard>> {
    partition_indices(dataset.len(), clients, seed)
}

/// Draws `batch_size` distinct indices from the shard, uniformly without
/// replacement, keyed entirely by the stream. Returned indices are sorted so
/// downstream accumulation order is fixed.
pub fn sample_batch(shard: &ClientShard, batch_size: usize, stream: RngStream) -> Result<Vec<usize>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if batch_size > shard.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {batch_size} exceeds shard size {} of client {}",
            shard.len(),
            shard.client
        )));
    }
    let mut rng = stream.rng();
    let picks = rand::seq::index::sample(&mut rng, shard.len(), batch_size);
    let mut batch: Vec<usize> = picks.into_iter().map(|i| shard.indices[i]).collect();
    batch.sort_unstable();
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_disjoint_cover_with_balanced_sizes() {
        let shards = partition_indices(103, 7, 5).unwrap();
        assert_eq!(shards.len(), 7);
        let mut seen = vec![false; 103];
        let mut sizes = Vec::new();
        for s in &shards {
            sizes.push(s.len());
            for &i in &s.indices {
                assert!(!seen[i], "index {i} appears twice");
                seen[i] = true;
            }
            assert!(s.indices.windows(2).all(|w| w[0] < w[1]), "unsorted shard");
        }
        assert!(seen.iter().all(|&v| v));
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(max - min <= 1);
    }

    #[test]
    fn partition_deterministic_and_seed_sensitive() {
        let a = partition_indices(50, 4, 1).unwrap();
        let b = partition_indices(50, 4, 1).unwrap();
        let c = partition_indices(50, 4, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn partition_rejects_degenerate_inputs() {
        assert!(partition_indices(10, 0, 1).is_err());
        assert!(partition_indices(3, 4, 1).is_err());
    }

    #[test]
    fn batch_is_subset_without_replacement() {
        let shard = &partition_indices(100, 3, 9).unwrap()[1];
        let stream = RngStream::new(9, StreamDomain::Batch).for_client(1);
        for step in 0..20 {
            let batch = sample_batch(shard, 10, stream.at(step)).unwrap();
            assert_eq!(batch.len(), 10);
            assert!(batch.windows(2).all(|w| w[0] < w[1]), "dup or unsorted");
            assert!(batch.iter().all(|i| shard.indices.contains(i)));
        }
    }

    #[test]
    fn batch_errors() {
        let shard = ClientShard {
            client: 0,
            indices: vec![1, 2, 3],
        };
        let stream = RngStream::new(0, StreamDomain::Batch);
        assert!(sample_batch(&shard, 0, stream).is_err());
        assert!(sample_batch(&shard, 4, stream).is_err());
        assert_eq!(sample_batch(&shard, 3, stream).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn dataset_validation() {
        let f = Array2::zeros((3, 2));
        assert!(Dataset::new(f.clone(), vec![0, 1, 1], 2).is_ok());
        assert!(Dataset::new(f.clone(), vec![0, 1], 2).is_err());
        assert!(Dataset::new(f.clone(), vec![0, 1, 2], 2).is_err());
        let mut bad = f.clone();
        bad[[0, 0]] = f64::NAN;
        assert!(Dataset::new(bad, vec![0, 1, 1], 2).is_err());
    }

    #[test]
    fn idx_pair_downsamples_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("img.idx");
        let lab_path = dir.path().join("lab.idx");
        // Two 4x4 images: first all 255, second a gradient.
        let mut pixels = vec![255u8; 16];
        pixels.extend((0..16).map(|i| (i * 16) as u8));
        idx::write_idx(&img_path, &idx::IdxTensor::new(vec![2, 4, 4], pixels).unwrap()).unwrap();
        idx::write_idx(&lab_path, &idx::IdxTensor::new(vec![2], vec![3, 7]).unwrap()).unwrap();

        let ds = Dataset::from_idx_pair(&img_path, &lab_path, true).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim(), 4);
        assert_eq!(ds.classes(), 8);
        assert_eq!(ds.labels(), &[3, 7]);
        assert!((ds.features()[[0, 0]] - 1.0).abs() < 1e-12);
        // Top-left 2x2 block of the gradient image: 0, 16, 64, 80.
        let want = (0.0 + 16.0 + 64.0 + 80.0) / 4.0 / 255.0;
        assert!((ds.features()[[1, 0]] - want).abs() < 1e-12);

        let full = Dataset::from_idx_pair(&img_path, &lab_path, false).unwrap();
        assert_eq!(full.feature_dim(), 16);
    }

    #[test]
    fn mnist_files_load_when_available() {
        let Ok(dir) = std::env::var("LSGD_MNIST_DIR") else {
            return;
        };
        let dir = std::path::PathBuf::from(dir);
        let ds = Dataset::from_idx_pair(
            &dir.join("train-images-idx3-ubyte"),
            &dir.join("train-labels-idx1-ubyte"),
            true,
        )
        .unwrap();
        assert_eq!(ds.feature_dim(), 196);
        assert_eq!(ds.classes(), 10);
        assert!(ds.len() >= 10_000);
    }
}
