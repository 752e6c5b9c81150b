use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use deal_core::data::artifacts::write_atomically;
use deal_core::data::Dataset;
use deal_core::engine::{ActiveLearner, LabelRejection, LearnerState, Phase, RunRecord, TrainingProgress};

use crate::api::{
    AuditEntry, LabelPair, LabelsResponse, QueriesResponse, QueryItemView, RejectedLabel, SessionPhase, StatusResponse,
};

pub const SESSION_FILE_SCHEMA_VERSION: u32 = 1;

/// What is written to `<state_dir>/<id>/session.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SessionFile {
    pub schema_version: u32,
    pub learner: LearnerState,
    pub failure: Option<String>,
}

pub(crate) struct Session {
    pub learner: ActiveLearner,
    /// A training job for the committed batch is running.
    pub training: bool,
    pub failure: Option<String>,
    pub audit: Vec<AuditEntry>,
    pub dir: Option<PathBuf>,
}

/// Shared handle: the session behind an async lock (one request at a time)
/// plus the epoch counter the training thread updates.
pub(crate) struct SessionHandle {
    pub id: Uuid,
    pub session: tokio::sync::Mutex<Session>,
    pub progress: Arc<StdMutex<Option<TrainingProgress>>>,
}

impl Session {
    pub fn new(learner: ActiveLearner, dir: Option<PathBuf>) -> Self {
        Self { learner, training: false, failure: None, audit: Vec::new(), dir }
    }

    pub fn phase(&self) -> SessionPhase {
        if self.failure.is_some() {
            return SessionPhase::Failed;
        }
        match self.learner.phase() {
            Phase::AwaitingLabels => SessionPhase::AwaitingLabels,
            Phase::ReadyToTrain => SessionPhase::Training,
            Phase::Finished => SessionPhase::Finished,
        }
    }

    pub fn needs_training(&self) -> bool {
        self.failure.is_none() && !self.training && self.learner.phase() == Phase::ReadyToTrain
    }

    pub fn status(&self, id: Uuid, progress: Option<TrainingProgress>) -> StatusResponse {
        let pool = self.learner.pool();
        let phase = self.phase();
        StatusResponse {
            session_id: id.to_string(),
            phase,
            round: self.learner.round(),
            num_rounds: self.learner.num_rounds(),
            unlabeled: pool.unlabeled().len(),
            labeled: pool.labeled().len(),
            remaining: self.learner.remaining(),
            curve: self.learner.rounds().to_vec(),
            progress: if phase == SessionPhase::Training { progress } else { None },
            error: self.failure.clone(),
        }
    }

    /// The current batch, most informative first; unscored items keep index order.
    pub fn queries(&self, id: Uuid) -> QueriesResponse {
        let ds = self.learner.dataset();
        let mut items: Vec<QueryItemView> = self.learner.batch().iter().map(|q| QueryItemView::of(ds, q)).collect();
        items.sort_by(|a, b| match (a.score, b.score) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.pool_index.cmp(&b.pool_index)),
            _ => a.pool_index.cmp(&b.pool_index),
        });
        QueriesResponse {
            session_id: id.to_string(),
            round: self.learner.round(),
            num_classes: ds.num_classes(),
            remaining: self.learner.remaining(),
            items,
        }
    }

    /// Apply pairs in order. Each is accepted or rejected on its own.
    pub fn submit(&mut self, pairs: &[LabelPair]) -> LabelsResponse {
        let round = self.learner.round();
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        let mut entries = Vec::with_capacity(pairs.len());
        for &pair in pairs {
            let outcome = if self.failure.is_some() {
                Err(LabelRejection::NotAwaitingLabels { phase: self.learner.phase() })
            } else {
                self.learner.submit_label(pair.pool_index, pair.class)
            };
            let seq = (self.audit.len() + entries.len()) as u64;
            entries.push(AuditEntry {
                seq,
                round,
                pool_index: pair.pool_index,
                class: pair.class,
                accepted: outcome.is_ok(),
                rejection: outcome.clone().err(),
            });
            match outcome {
                Ok(()) => accepted.push(pair),
                Err(error) => rejected.push(RejectedLabel {
                    pool_index: pair.pool_index,
                    class: pair.class,
                    status: rejection_status(&error),
                    error,
                }),
            }
        }
        if let Err(e) = self.append_audit(&entries) {
            log::error!("cannot append to the audit log: {e}");
        }
        self.audit.extend(entries);
        LabelsResponse { accepted, rejected, remaining: self.learner.remaining(), phase: self.phase(), round }
    }

    pub fn record(&self) -> RunRecord {
        let c = self.learner.config();
        RunRecord {
            strategy: c.strategy,
            acquisition_size: c.acquisition_size,
            budget: c.budget,
            num_rounds: self.learner.num_rounds(),
            repeats: vec![self.learner.record()],
        }
    }

    pub fn persist(&self) -> std::io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let file = SessionFile {
            schema_version: SESSION_FILE_SCHEMA_VERSION,
            learner: self.learner.state().clone(),
            failure: self.failure.clone(),
        };
        let bytes = serde_json::to_vec(&file).map_err(std::io::Error::other)?;
        write_atomically(&dir.join("session.json"), &bytes).map_err(std::io::Error::other)
    }

    fn append_audit(&self, entries: &[AuditEntry]) -> std::io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join("audit.jsonl"))?;
        let mut buf = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut buf, e).map_err(std::io::Error::other)?;
            buf.push(b'\n');
        }
        f.write_all(&buf)?;
        f.sync_data()
    }
}

pub(crate) fn rejection_status(r: &LabelRejection) -> u16 {
    match r {
        LabelRejection::ClassOutOfRange { .. } => 422,
        _ => 409,
    }
}

/// Read a persisted session. `load_dataset` rebuilds the dataset from the stored config.
pub(crate) fn restore(
    dir: &Path,
    load_dataset: impl FnOnce(&LearnerState) -> deal_core::Result<Dataset>,
) -> Result<(Uuid, Session), String> {
    let id: Uuid = dir
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| format!("{} is not a session directory", dir.display()))?;
    let text = std::fs::read(dir.join("session.json")).map_err(|e| e.to_string())?;
    let file: SessionFile = serde_json::from_slice(&text).map_err(|e| e.to_string())?;
    if file.schema_version != SESSION_FILE_SCHEMA_VERSION {
        return Err(format!("session file version {} is not supported", file.schema_version));
    }
    let dataset = load_dataset(&file.learner).map_err(|e| e.to_string())?;
    let learner = ActiveLearner::resume(file.learner, Arc::new(dataset)).map_err(|e| e.to_string())?;
    let mut audit = Vec::new();
    if let Ok(f) = std::fs::File::open(dir.join("audit.jsonl")) {
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| e.to_string())?;
            if !line.trim().is_empty() {
                audit.push(serde_json::from_str(&line).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok((id, Session { learner, training: false, failure: file.failure, audit, dir: Some(dir.to_path_buf()) }))
}
