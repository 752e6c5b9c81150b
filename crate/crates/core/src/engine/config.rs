use serde::{Deserialize, Serialize};

use crate::acquisition::StrategyKind;
use crate::data::DatasetSpec;
use crate::error::{Error, FieldError, Result};
use crate::model::{Architecture, Head, HiddenActivation, ImageShape, ModelConfig, TrainConfig};

pub const RUN_CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchitectureSpec {
    /// Hidden layer widths; input and output widths come from the dataset.
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
    SmallConv { channels: usize, kernel: usize, pooling: usize },
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec::Mlp { hidden: default_hidden() }
    }
}

/// Model description without the data-dependent sizes and seed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub architecture: ArchitectureSpec,
    /// Head used by strategies that work with either head. `deal_*`
    /// strategies always get an evidential head (keeping this activation if
    /// one is given) and `softmax_*` strategies a softmax head.
    #[serde(default)]
    pub head: Head,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
}

impl ModelSpec {
    pub fn head_for(&self, strategy: StrategyKind) -> Head {
        match (strategy.requires_evidential(), self.head) {
            (Some(true), Head::Softmax) => Head::default(),
            (Some(false), _) => Head::Softmax,
            (_, head) => head,
        }
    }

    pub fn bind(
        &self,
        strategy: StrategyKind,
        input_dim: usize,
        num_classes: usize,
        image_shape: Option<ImageShape>,
        seed: u64,
    ) -> Result<ModelConfig> {
        let architecture = match &self.architecture {
            ArchitectureSpec::Mlp { hidden } => {
                let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
                layer_sizes.push(input_dim);
                layer_sizes.extend_from_slice(hidden);
                layer_sizes.push(num_classes);
                Architecture::Mlp { layer_sizes }
            }
            ArchitectureSpec::SmallConv { channels, kernel, pooling } => {
                Architecture::SmallConv { channels: *channels, kernel: *kernel, pooling: *pooling }
            }
        };
        let config = ModelConfig {
            architecture,
            head: self.head_for(strategy),
            hidden_activation: self.hidden_activation,
            input_dim,
            num_classes,
            image_shape,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Labels come from the dataset's ground truth.
    #[default]
    Simulated,
    /// Labels come from a person through the session service.
    HumanSession,
}

/// A complete active-learning experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_strategy")]
    pub strategy: StrategyKind,
    /// Samples labeled per round (A).
    pub acquisition_size: usize,
    /// Labeling budget in samples (B). The initial batch comes on top.
    pub budget: usize,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    #[serde(default)]
    pub base_seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub oracle: OracleKind,
    /// Use the same initial random batch for every strategy in a repeat.
    #[serde(default = "yes")]
    pub shared_initial_draw: bool,
    /// Write wall-clock seconds into records. Off by default so that
    /// artifacts are byte-reproducible.
    #[serde(default)]
    pub record_timings: bool,
}

fn schema_version() -> u32 {
    RUN_CONFIG_SCHEMA_VERSION
}
fn default_strategy() -> StrategyKind {
    StrategyKind::DealMinMargin
}
fn default_repeats() -> u32 {
    5
}
fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(strategy: StrategyKind, acquisition_size: usize, budget: usize, dataset: DatasetSpec) -> Self {
        Self {
            schema_version: RUN_CONFIG_SCHEMA_VERSION,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            strategy,
            acquisition_size,
            budget,
            repeats: default_repeats(),
            base_seed: 0,
            dataset,
            oracle: OracleKind::Simulated,
            shared_initial_draw: true,
            record_timings: false,
        }
    }

    /// Checks that do not need the dataset. All field problems are reported together.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != RUN_CONFIG_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: self.schema_version, expected: RUN_CONFIG_SCHEMA_VERSION });
        }
        let mut errors = Vec::new();
        if self.acquisition_size == 0 {
            errors.push(FieldError::new("acquisition_size", "must be positive"));
        }
        if self.budget == 0 {
            errors.push(FieldError::new("budget", "must be positive"));
        }
        if self.acquisition_size > self.budget {
            errors.push(FieldError::new(
                "acquisition_size",
                format!("acquisition size {} exceeds the budget {}", self.acquisition_size, self.budget),
            ));
        }
        if self.repeats == 0 {
            errors.push(FieldError::new("repeats", "must be at least 1"));
        }
        match &self.model.architecture {
            ArchitectureSpec::Mlp { hidden } if hidden.contains(&0) => {
                errors.push(FieldError::new("model.architecture.hidden", "layer sizes must be positive"));
            }
            ArchitectureSpec::SmallConv { channels, kernel, pooling } if *channels == 0 || *kernel == 0 || *pooling == 0 => {
                errors.push(FieldError::new("model.architecture", "channels, kernel and pooling must be positive"));
            }
            _ => {}
        }
        if let Err(Error::Config(mut e)) = self.train.validate() {
            errors.append(&mut e);
        }
        let s = &self.dataset.split;
        if [s.train, s.validation, s.test].iter().any(|f| !(0.0..=1.0).contains(f)) || s.train + s.validation + s.test > 1.0 + 1e-9 {
            errors.push(FieldError::new("dataset.split", "fractions must lie in [0, 1] and sum to at most 1"));
        }
        if s.train <= 0.0 {
            errors.push(FieldError::new("dataset.split.train", "the unlabeled pool needs a positive fraction"));
        }
        if s.test <= 0.0 {
            errors.push(FieldError::new("dataset.split.test", "accuracy is measured on the test split, which must be non-empty"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::{DataSource, SyntheticSpec};
    use crate::model::EvidenceActivation;

    pub(crate) fn blob_config() -> RunConfig {
        let spec = DatasetSpec {
            source: DataSource::Synthetic(SyntheticSpec::random_blobs(3, 2, 4.0, 0.5, 150, 1)),
            split: crate::data::SplitSpec { train: 0.6, validation: 0.2, test: 0.2, seed: 0 },
            limit: None,
            balance_classes: false,
        };
        RunConfig::new(StrategyKind::DealMinMargin, 10, 30, spec)
    }

    #[test]
    fn a_above_b_is_rejected_with_field_name() {
        let mut cfg = blob_config();
        cfg.acquisition_size = 40;
        cfg.repeats = 0;
        match cfg.validate() {
            Err(Error::Config(fields)) => {
                let names: Vec<_> = fields.iter().map(|f| f.field.as_str()).collect();
                assert_eq!(names, ["acquisition_size", "repeats"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_version_is_checked_first() {
        let mut cfg = blob_config();
        cfg.schema_version = 2;
        assert!(matches!(cfg.validate(), Err(Error::SchemaVersion { found: 2, expected: 1 })));
    }

    #[test]
    fn head_follows_strategy() {
        let spec = ModelSpec { head: Head::Evidential { activation: EvidenceActivation::Relu }, ..ModelSpec::default() };
        assert_eq!(spec.head_for(StrategyKind::SoftmaxEntropy), Head::Softmax);
        assert_eq!(spec.head_for(StrategyKind::Random), spec.head);
        assert_eq!(spec.head_for(StrategyKind::DealMinMargin), spec.head);
        let soft = ModelSpec { head: Head::Softmax, ..ModelSpec::default() };
        assert_eq!(soft.head_for(StrategyKind::DealEntropy), Head::default());
        assert_eq!(soft.head_for(StrategyKind::LeastConfidence), Head::Softmax);
        let cfg = ModelSpec::default().bind(StrategyKind::Random, 784, 10, None, 0).unwrap();
        assert_eq!(cfg.architecture, Architecture::Mlp { layer_sizes: vec![784, 64, 10] });
    }

    #[test]
    fn json_defaults_fill_in() {
        let cfg: RunConfig = serde_json::from_value(serde_json::json!({
            "acquisition_size": 5, "budget": 20,
            "dataset": { "source": { "kind": "synthetic", "n_samples": 60,
                                     "generator": { "kind": "two_moons", "noise": 0.1 } } }
        }))
        .unwrap();
        assert_eq!(cfg.repeats, 5);
        assert_eq!(cfg.train.learning_rate, 0.0005);
        assert!(cfg.shared_initial_draw);
        assert_eq!(cfg.strategy, StrategyKind::DealMinMargin);
        let typo = serde_json::json!({ "acquisition_size": 5, "budgett": 20, "dataset": {} });
        assert!(serde_json::from_value::<RunConfig>(typo).is_err());
    }
}
