use serde::{Deserialize, Serialize};

use super::stats::{aggregate_runs, AggregatePoint};
use crate::acquisition::StrategyKind;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// |D_l=1| when the round's model was trained.
    pub labeled_count: usize,
    pub test_accuracy: f64,
    /// Absent when the dataset has no validation split.
    pub validation_accuracy: Option<f64>,
    pub train_seconds: f64,
    /// Time spent scoring the pool and selecting the next batch with this round's model.
    pub acquisition_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: u32,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub rounds: Vec<RoundRecord>,
}

impl RepeatRecord {
    pub fn test_curve(&self) -> Vec<(usize, f64)> {
        self.rounds.iter().map(|r| (r.labeled_count, r.test_accuracy)).collect()
    }
}

/// All repeats of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: StrategyKind,
    pub acquisition_size: usize,
    pub budget: usize,
    pub num_rounds: usize,
    pub repeats: Vec<RepeatRecord>,
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.repeats.iter().all(|r| r.complete)
    }

    /// Mean and standard deviation per round over the complete repeats.
    pub fn aggregate(&self) -> Result<Vec<AggregatePoint>> {
        let complete: Vec<RepeatRecord> = self.repeats.iter().filter(|r| r.complete).cloned().collect();
        aggregate_runs(&complete)
    }
}
