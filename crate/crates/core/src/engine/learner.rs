use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::pool::{compute_rounds, derive_seed, fnv1a, PoolState, SeedPurpose};
use super::record::{RepeatRecord, RoundRecord};
use super::RunConfig;
use crate::acquisition::{score_predictions, select_batch, AcquisitionStrategy};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{train_with_monitor, ModelConfig, Prediction, TrainConfig};

pub const LEARNER_STATE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// The current batch still has unlabeled items.
    AwaitingLabels,
    /// Every item of the batch is labeled and committed; the next step trains.
    ReadyToTrain,
    Finished,
}

/// One queried pool item of the current round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub pool_index: usize,
    /// Acquisition score; absent for the random initial batch.
    pub score: Option<f64>,
    /// Opinion of the model that selected the item; absent in round 0.
    pub prediction: Option<Prediction>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum LabelRejection {
    #[error("the session is not awaiting labels (phase {phase:?})")]
    NotAwaitingLabels { phase: Phase },
    #[error("pool index {pool_index} is not part of the current batch")]
    NotPending { pool_index: usize },
    #[error("pool index {pool_index} already has a label in this round")]
    AlreadyLabeled { pool_index: usize },
    #[error("pool index {pool_index} was labeled in an earlier round")]
    AlreadyCommitted { pool_index: usize },
    #[error("class {class} is outside 0..{num_classes}")]
    ClassOutOfRange { class: usize, num_classes: usize },
}

/// Training progress reported during [`ActiveLearner::advance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingProgress {
    pub round: usize,
    pub epoch: u32,
    pub epochs: u32,
    pub mean_loss: f64,
}

/// Everything needed to continue a repeat later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub schema_version: u32,
    pub config: RunConfig,
    pub repeat: u32,
    pub dataset_fingerprint: String,
    /// N, the number of acquisition rounds after the initial batch.
    pub num_rounds: usize,
    /// Round of the current batch (0 = initial random batch).
    pub round: usize,
    pub phase: Phase,
    pub pool: PoolState,
    pub batch: Vec<QueryItem>,
    pub rounds: Vec<RoundRecord>,
}

/// Algorithm-1 state machine for one repeat. Labels arrive through
/// [`submit_label`](Self::submit_label) from any oracle; once a batch is
/// complete, [`advance`](Self::advance) retrains from scratch, evaluates and
/// queries the next batch.
#[derive(Debug, Clone)]
pub struct ActiveLearner {
    dataset: Arc<Dataset>,
    state: LearnerState,
}

impl ActiveLearner {
    pub fn new(config: RunConfig, dataset: Arc<Dataset>, repeat: u32) -> Result<Self> {
        config.validate()?;
        check_dataset(&dataset)?;
        let pool = PoolState::new(dataset.split.train.iter().copied())?;
        let a = config.acquisition_size;
        if a > pool.len() {
            return Err(Error::config(
                "acquisition_size",
                format!("acquisition size {a} exceeds the unlabeled pool of {}", pool.len()),
            ));
        }
        let num_rounds = compute_rounds(config.budget, a, pool.len() - a)?;
        let learner_seed = initial_draw_seed(&config, repeat);
        let batch = pool
            .draw_uniform(a, learner_seed)?
            .into_iter()
            .map(|pool_index| QueryItem { pool_index, score: None, prediction: None, label: None })
            .collect();
        let state = LearnerState {
            schema_version: LEARNER_STATE_SCHEMA_VERSION,
            dataset_fingerprint: dataset.fingerprint(),
            config,
            repeat,
            num_rounds,
            round: 0,
            phase: Phase::AwaitingLabels,
            pool,
            batch,
            rounds: Vec::new(),
        };
        let learner = Self { dataset, state };
        learner.model_config(0)?;
        Ok(learner)
    }

    /// Continue from a saved state. The dataset must be the one the state was built on.
    pub fn resume(state: LearnerState, dataset: Arc<Dataset>) -> Result<Self> {
        if state.schema_version != LEARNER_STATE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: state.schema_version, expected: LEARNER_STATE_SCHEMA_VERSION });
        }
        state.config.validate()?;
        check_dataset(&dataset)?;
        if dataset.fingerprint() != state.dataset_fingerprint {
            return Err(Error::InvalidInput("checkpoint was taken on a different dataset or split".into()));
        }
        state.pool.check_invariants()?;
        if state.rounds.len() != state.round + usize::from(state.phase == Phase::Finished)
            || state.round > state.num_rounds
        {
            return Err(Error::InvalidInput("checkpoint round bookkeeping is inconsistent".into()));
        }
        Ok(Self { dataset, state })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn into_state(self) -> LearnerState {
        self.state
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn config(&self) -> &RunConfig {
        &self.state.config
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn round(&self) -> usize {
        self.state.round
    }

    pub fn num_rounds(&self) -> usize {
        self.state.num_rounds
    }

    pub fn pool(&self) -> &PoolState {
        &self.state.pool
    }

    /// The current query batch, in descending score order (ascending index in round 0).
    pub fn batch(&self) -> &[QueryItem] {
        &self.state.batch
    }

    pub fn remaining(&self) -> usize {
        match self.state.phase {
            Phase::AwaitingLabels => self.state.batch.iter().filter(|q| q.label.is_none()).count(),
            _ => 0,
        }
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.state.rounds
    }

    pub fn record(&self) -> RepeatRecord {
        RepeatRecord {
            repeat: self.state.repeat,
            complete: self.state.phase == Phase::Finished,
            failure: None,
            rounds: self.state.rounds.clone(),
        }
    }

    /// Record one label for the current batch. When it completes the batch,
    /// all its labels are committed to the pool and the phase becomes
    /// [`Phase::ReadyToTrain`].
    pub fn submit_label(&mut self, pool_index: usize, class: usize) -> Result<(), LabelRejection> {
        let s = &mut self.state;
        if s.phase != Phase::AwaitingLabels {
            return Err(LabelRejection::NotAwaitingLabels { phase: s.phase });
        }
        let num_classes = self.dataset.num_classes();
        if class >= num_classes {
            return Err(LabelRejection::ClassOutOfRange { class, num_classes });
        }
        let Some(item) = s.batch.iter_mut().find(|q| q.pool_index == pool_index) else {
            return Err(if s.pool.label_of(pool_index).is_some() {
                LabelRejection::AlreadyCommitted { pool_index }
            } else {
                LabelRejection::NotPending { pool_index }
            });
        };
        if item.label.is_some() {
            return Err(LabelRejection::AlreadyLabeled { pool_index });
        }
        item.label = Some(class);
        if s.batch.iter().all(|q| q.label.is_some()) {
            for q in &s.batch {
                s.pool.commit(q.pool_index, q.label.expect("checked above")).expect("batch items are unlabeled pool members");
            }
            s.phase = Phase::ReadyToTrain;
        }
        Ok(())
    }

    fn model_config(&self, round: usize) -> Result<ModelConfig> {
        let c = &self.state.config;
        c.model.bind(
            c.strategy,
            self.dataset.dim(),
            self.dataset.num_classes(),
            self.dataset.image_shape,
            derive_seed(c.base_seed, self.state.repeat, round, SeedPurpose::ModelInit),
        )
    }

    fn train_config(&self, round: usize) -> TrainConfig {
        let c = &self.state.config;
        TrainConfig { shuffle_seed: derive_seed(c.base_seed, self.state.repeat, round, SeedPurpose::Shuffle), ..c.train.clone() }
    }

    /// Train on the labeled set from scratch, evaluate, and either query the
    /// next batch or finish.
    pub fn advance(&mut self, mut progress: impl FnMut(TrainingProgress)) -> Result<()> {
        if self.state.phase != Phase::ReadyToTrain {
            return Err(Error::InvalidInput(format!("cannot train in phase {:?}", self.state.phase)));
        }
        let t = self.state.round;
        let ds = Arc::clone(&self.dataset);
        let timings = self.state.config.record_timings;
        let labeled = self.state.pool.labeled().to_vec();
        let classes = self.state.pool.labeled_classes();
        let model_config = self.model_config(t)?;
        let tcfg = self.train_config(t);

        let started = Instant::now();
        let model = train_with_monitor(&model_config, &ds.rows(&labeled), &classes, &tcfg, |report, _| {
            progress(TrainingProgress { round: t, epoch: report.epoch, epochs: tcfg.epochs, mean_loss: report.mean_loss })
        })?;
        let train_seconds = started.elapsed().as_secs_f64();

        let split = &ds.split;
        let test_accuracy = model.accuracy(&ds.rows(&split.test), &ds.labels_of(&split.test))?;
        let validation_accuracy = if split.validation.is_empty() {
            None
        } else {
            Some(model.accuracy(&ds.rows(&split.validation), &ds.labels_of(&split.validation))?)
        };

        let mut record = RoundRecord {
            round: t,
            labeled_count: labeled.len(),
            test_accuracy,
            validation_accuracy,
            train_seconds: if timings { train_seconds } else { 0.0 },
            acquisition_seconds: 0.0,
        };

        if t == self.state.num_rounds {
            self.state.rounds.push(record);
            self.state.batch.clear();
            self.state.phase = Phase::Finished;
            return Ok(());
        }

        let started = Instant::now();
        let c = &self.state.config;
        let strategy = AcquisitionStrategy {
            kind: c.strategy,
            rng_seed: derive_seed(c.base_seed, self.state.repeat, t + 1, SeedPurpose::Acquisition),
        };
        let unlabeled = self.state.pool.unlabeled().to_vec();
        let predictions = model.predict_batch(&ds.rows(&unlabeled))?;
        let scored = score_predictions(&unlabeled, &predictions, &strategy)?;
        let selected = select_batch(&scored, c.acquisition_size)?;
        let batch: Vec<QueryItem> = selected
            .into_iter()
            .map(|pool_index| {
                let at = unlabeled.binary_search(&pool_index).expect("selected from the pool");
                QueryItem {
                    pool_index,
                    score: Some(scored[at].score),
                    prediction: Some(predictions[at].clone()),
                    label: None,
                }
            })
            .collect();
        if timings {
            record.acquisition_seconds = started.elapsed().as_secs_f64();
        }

        self.state.rounds.push(record);
        self.state.batch = batch;
        self.state.round = t + 1;
        self.state.phase = Phase::AwaitingLabels;
        Ok(())
    }
}

fn check_dataset(ds: &Dataset) -> Result<()> {
    ds.validate_split()?;
    if ds.split.train.is_empty() {
        return Err(Error::InvalidInput("the train split (unlabeled pool) is empty".into()));
    }
    if ds.split.test.is_empty() {
        return Err(Error::InvalidInput("the test split is empty".into()));
    }
    Ok(())
}

/// Seed of the round-0 uniform draw for `repeat`.
pub fn initial_draw_seed(config: &RunConfig, repeat: u32) -> u64 {
    let base = if config.shared_initial_draw {
        config.base_seed
    } else {
        config.base_seed ^ fnv1a(config.strategy.name().as_bytes())
    };
    derive_seed(base, repeat, 0, SeedPurpose::InitialDraw)
}
