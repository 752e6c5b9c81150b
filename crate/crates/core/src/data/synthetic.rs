use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Isotropic Gaussian clusters. Give either explicit `centers` or
    /// `num_classes` + `dim`, in which case centers are drawn from
    /// `U(-spread, spread)^dim`.
    GaussianBlobs {
        #[serde(default)]
        num_classes: Option<usize>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        centers: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_spread")]
        spread: f64,
        sigma: f64,
    },
    /// Two interleaving half circles in the plane.
    TwoMoons { noise: f64 },
}

fn default_spread() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn blobs(centers: Vec<Vec<f64>>, sigma: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            generator: Generator::GaussianBlobs { num_classes: None, dim: None, centers: Some(centers), spread: default_spread(), sigma },
            n_samples,
            seed,
        }
    }

    pub fn random_blobs(num_classes: usize, dim: usize, spread: f64, sigma: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            generator: Generator::GaussianBlobs { num_classes: Some(num_classes), dim: Some(dim), centers: None, spread, sigma },
            n_samples,
            seed,
        }
    }
}

/// Samples are assigned to classes round-robin, so class sizes differ by at most one.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n_samples == 0 {
        return Err(Error::config("dataset.n_samples", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.generator {
        Generator::GaussianBlobs { num_classes, dim, centers, spread, sigma } => {
            if !(*sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::config("dataset.sigma", "must be positive"));
            }
            let centers = match centers {
                Some(c) => {
                    if num_classes.is_some_and(|k| k != c.len()) {
                        return Err(Error::config("dataset.num_classes", "disagrees with the number of centers"));
                    }
                    c.clone()
                }
                None => {
                    let (Some(k), Some(d)) = (num_classes, dim) else {
                        return Err(Error::config("dataset.centers", "give centers or both num_classes and dim"));
                    };
                    if !(*spread > 0.0 && spread.is_finite()) || *d == 0 {
                        return Err(Error::config("dataset.spread", "spread and dim must be positive"));
                    }
                    (0..*k).map(|_| (0..*d).map(|_| rng.random_range(-spread..*spread)).collect()).collect()
                }
            };
            let k = centers.len();
            if k < 2 {
                return Err(Error::config("dataset.num_classes", "need at least 2 classes"));
            }
            let d = centers[0].len();
            if d == 0 || centers.iter().any(|c| c.len() != d) {
                return Err(Error::config("dataset.centers", "centers must share a positive dimension"));
            }
            let mut features = Vec::with_capacity(spec.n_samples * d);
            let mut labels = Vec::with_capacity(spec.n_samples);
            for i in 0..spec.n_samples {
                let class = i % k;
                for c in &centers[class] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    features.push(c + sigma * z);
                }
                labels.push(class);
            }
            Dataset::new(features, d, labels, k, format!("synthetic:gaussian_blobs(seed={})", spec.seed))
        }
        Generator::TwoMoons { noise } => {
            if !(*noise > 0.0 && noise.is_finite()) {
                return Err(Error::config("dataset.noise", "must be positive"));
            }
            let mut features = Vec::with_capacity(spec.n_samples * 2);
            let mut labels = Vec::with_capacity(spec.n_samples);
            for i in 0..spec.n_samples {
                let class = i % 2;
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let (x, y) = if class == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                features.extend_from_slice(&[x + noise * nx, y + noise * ny]);
                labels.push(class);
            }
            Dataset::new(features, 2, labels, 2, format!("synthetic:two_moons(seed={})", spec.seed))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_blobs_admit_a_perfect_linear_probe() {
        let spec = SyntheticSpec::blobs(vec![vec![3.0, 3.0], vec![-3.0, -3.0]], 0.5, 400, 11);
        let ds = make_synthetic(&spec).unwrap();
        assert_eq!(ds.len(), 400);
        assert_eq!(ds.class_counts(), vec![200, 200]);
        // Probe: sign of x1 + x2. The centers sit 6/√2 ≈ 8.5 sigma from the boundary.
        let correct = (0..ds.len())
            .filter(|&i| {
                let r = ds.row(i);
                usize::from(r[0] + r[1] < 0.0) == ds.label(i)
            })
            .count();
        assert!(correct as f64 / 400.0 >= 0.99);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec::random_blobs(10, 8, 3.0, 1.0, 500, 4);
        assert_eq!(make_synthetic(&spec).unwrap(), make_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 5, ..spec.clone() };
        assert_ne!(make_synthetic(&spec).unwrap().features(), make_synthetic(&other).unwrap().features());
        let moons = SyntheticSpec { generator: Generator::TwoMoons { noise: 0.1 }, n_samples: 50, seed: 1 };
        assert_eq!(make_synthetic(&moons).unwrap(), make_synthetic(&moons).unwrap());
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let bad = [
            SyntheticSpec::blobs(vec![vec![0.0]], 1.0, 10, 0),
            SyntheticSpec::blobs(vec![vec![0.0], vec![1.0]], 0.0, 10, 0),
            SyntheticSpec::blobs(vec![vec![0.0], vec![1.0, 2.0]], 1.0, 10, 0),
            SyntheticSpec::random_blobs(3, 2, 1.0, 1.0, 0, 0),
            SyntheticSpec { generator: Generator::TwoMoons { noise: -1.0 }, n_samples: 10, seed: 0 },
        ];
        for spec in bad {
            assert!(matches!(make_synthetic(&spec), Err(Error::Config(_))), "{spec:?}");
        }
    }
}
