//! Datasets: ingestion, synthetic generators, splits and artifact files.

pub mod artifacts;
mod idx;
mod split;
mod synthetic;
mod table;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ImageShape;

pub use idx::{parse_idx, write_idx_images, write_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::{balance_classes, split_dataset};
pub use synthetic::{make_synthetic, Generator, SyntheticSpec};
pub use table::{parse_labeled_csv, write_labeled_csv};

/// Train / validation / test index lists into a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Hex SHA-256 over the source bytes (or generated features and labels).
    pub checksum: String,
}

/// `N × D` feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    pub split: Split,
    pub provenance: Provenance,
    pub image_shape: Option<ImageShape>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize, source: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch { expected: dim * labels.len(), found: features.len() });
        }
        if num_classes < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for {num_classes} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature matrix contains non-finite values".into()));
        }
        let checksum = checksum_of_contents(&features, &labels);
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
            split: Split::default(),
            provenance: Provenance { source: source.into(), checksum },
            image_shape: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self, indices: &[usize]) -> Vec<&[f64]> {
        indices.iter().map(|&i| self.row(i)).collect()
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn with_image_shape(mut self, shape: ImageShape) -> Result<Self> {
        if shape.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: shape.len() });
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    /// Keep only the given rows, in the given order. The split is cleared.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidInput(format!("row {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
        }
        let mut out = Dataset::new(features, self.dim, self.labels_of(indices), self.num_classes, self.provenance.source.clone())?;
        out.image_shape = self.image_shape;
        Ok(out)
    }

    /// Splits must be disjoint and reference existing rows.
    pub fn validate_split(&self) -> Result<()> {
        let mut seen = vec![false; self.len()];
        for (name, list) in [("train", &self.split.train), ("validation", &self.split.validation), ("test", &self.split.test)] {
            for &i in list {
                if i >= self.len() {
                    return Err(Error::InvalidInput(format!("{name} split references row {i} beyond {}", self.len())));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput(format!("row {i} appears in more than one split")));
                }
            }
        }
        Ok(())
    }

    /// Hash of the content checksum and the split, identifying the exact
    /// pool and evaluation sets a run was built on.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.provenance.checksum.as_bytes());
        for list in [&self.split.train, &self.split.validation, &self.split.test] {
            hasher.update((list.len() as u64).to_le_bytes());
            for i in list {
                hasher.update((*i as u64).to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

pub(crate) fn checksum_of_contents(features: &[f64], labels: &[usize]) -> String {
    let mut hasher = Sha256::new();
    for v in features {
        hasher.update(v.to_le_bytes());
    }
    for l in labels {
        hasher.update((*l as u64).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

pub(crate) fn checksum_of_bytes(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    hex::encode(hasher.finalize())
}

/// Split fractions, in the order train / validation / test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// IDX image and label files (the MNIST distribution format).
    Idx { images: PathBuf, labels: PathBuf },
    /// Labeled CSV with a `label,f1..fD` header.
    Csv {
        path: PathBuf,
        #[serde(default)]
        num_classes: Option<usize>,
    },
}

/// Where a run's dataset comes from and how it is split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    #[serde(default)]
    pub split: SplitSpec,
    /// Keep only the first `limit` rows of the source.
    #[serde(default)]
    pub limit: Option<usize>,
    /// Subsample every class down to the size of the smallest one.
    #[serde(default)]
    pub balance_classes: bool,
}

impl DatasetSpec {
    /// Load and split. Relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<Dataset> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let mut ds = match &self.source {
            DataSource::Synthetic(spec) => make_synthetic(spec)?,
            DataSource::Idx { images, labels } => {
                let img = std::fs::read(resolve(images))?;
                let lbl = std::fs::read(resolve(labels))?;
                parse_idx(&img, &lbl)?
            }
            DataSource::Csv { path, num_classes } => {
                let file = std::fs::File::open(resolve(path))?;
                parse_labeled_csv(file, *num_classes, &path.display().to_string())?
            }
        };
        if let Some(limit) = self.limit {
            if limit < ds.len() {
                let keep: Vec<usize> = (0..limit).collect();
                let source = ds.provenance.clone();
                ds = ds.subset(&keep)?;
                ds.provenance.source = format!("{} (first {limit})", source.source);
            }
        }
        if self.balance_classes {
            ds = balance_classes(&ds, None, self.split.seed)?;
        }
        let s = &self.split;
        split_dataset(ds, [s.train, s.validation, s.test], s.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_construction_checks() {
        assert!(Dataset::new(vec![0.0; 5], 2, vec![0, 1], 2, "t").is_err());
        assert!(Dataset::new(vec![0.0; 4], 2, vec![0, 2], 2, "t").is_err());
        assert!(Dataset::new(vec![0.0, f64::NAN], 1, vec![0, 1], 2, "t").is_err());
        assert!(Dataset::new(vec![0.0; 4], 2, vec![0, 1], 1, "t").is_err());
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![0, 1], 2, "t").unwrap();
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(ds.class_counts(), vec![1, 1]);
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let mut ds = Dataset::new(vec![0.0; 4], 1, vec![0, 1, 0, 1], 2, "t").unwrap();
        ds.split = Split { train: vec![0, 1], validation: vec![1], test: vec![] };
        assert!(ds.validate_split().is_err());
        ds.split = Split { train: vec![0, 1], validation: vec![], test: vec![7] };
        assert!(ds.validate_split().is_err());
        ds.split = Split { train: vec![0, 1], validation: vec![2], test: vec![3] };
        assert!(ds.validate_split().is_ok());
    }

    #[test]
    fn spec_loads_synthetic_and_missing_files_are_io_errors() {
        let toml_like = serde_json::json!({
            "source": { "kind": "synthetic", "n_samples": 100, "seed": 3,
                        "generator": { "kind": "two_moons", "noise": 0.1 } },
            "split": { "train": 0.6, "validation": 0.2, "test": 0.2, "seed": 1 }
        });
        let spec: DatasetSpec = serde_json::from_value(toml_like).unwrap();
        let ds = spec.load(Path::new(".")).unwrap();
        assert_eq!((ds.split.train.len(), ds.split.validation.len(), ds.split.test.len()), (60, 20, 20));

        let missing = DatasetSpec {
            source: DataSource::Idx { images: "nope-images".into(), labels: "nope-labels".into() },
            split: SplitSpec::default(),
            limit: None,
            balance_classes: false,
        };
        assert!(matches!(missing.load(Path::new("/nonexistent")), Err(Error::Io(_))));
    }
}
