use std::sync::Arc;

use rayon::prelude::*;

use super::learner::{ActiveLearner, LearnerState, Phase};
use super::record::{RepeatRecord, RunRecord};
use super::pool::compute_rounds;
use super::{Oracle, RunConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Result of driving one repeat. `resume_state` is set when the oracle
/// failed; passing it to [`resume_repeat`] continues where it stopped.
#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub record: RepeatRecord,
    pub resume_state: Option<LearnerState>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// States of the repeats that did not finish.
    pub incomplete: Vec<LearnerState>,
}

/// Label every open batch item through `oracle` and train until finished.
/// Oracle failures stop the repeat without an error; anything else is an error.
pub fn drive(learner: &mut ActiveLearner, oracle: &dyn Oracle) -> Result<Option<String>> {
    loop {
        match learner.phase() {
            Phase::AwaitingLabels => {
                let open: Vec<usize> =
                    learner.batch().iter().filter(|q| q.label.is_none()).map(|q| q.pool_index).collect();
                for index in open {
                    let answer = oracle
                        .label(index)
                        .and_then(|class| learner.submit_label(index, class).map_err(|r| Error::Oracle(r.to_string())));
                    if let Err(e) = answer {
                        log::warn!("repeat {} round {}: {e}", learner.state().repeat, learner.round());
                        return Ok(Some(e.to_string()));
                    }
                }
            }
            Phase::ReadyToTrain => learner.advance(|_| {})?,
            Phase::Finished => return Ok(None),
        }
    }
}

fn finish(mut learner: ActiveLearner, oracle: &dyn Oracle) -> Result<RepeatOutcome> {
    let failure = drive(&mut learner, oracle)?;
    let mut record = learner.record();
    record.failure = failure.clone();
    let resume_state = failure.map(|_| learner.into_state());
    Ok(RepeatOutcome { record, resume_state })
}

pub fn run_repeat(config: &RunConfig, dataset: Arc<Dataset>, repeat: u32, oracle: &dyn Oracle) -> Result<RepeatOutcome> {
    finish(ActiveLearner::new(config.clone(), dataset, repeat)?, oracle)
}

pub fn resume_repeat(state: LearnerState, dataset: Arc<Dataset>, oracle: &dyn Oracle) -> Result<RepeatOutcome> {
    finish(ActiveLearner::resume(state, dataset)?, oracle)
}

/// All repeats of `config`, in parallel. Deterministic for a deterministic oracle.
pub fn run_active_learning(config: &RunConfig, dataset: Arc<Dataset>, oracle: &dyn Oracle) -> Result<RunOutcome> {
    config.validate()?;
    let pool = dataset.split.train.len();
    if config.acquisition_size > pool {
        return Err(Error::config(
            "acquisition_size",
            format!("acquisition size {} exceeds the unlabeled pool of {pool}", config.acquisition_size),
        ));
    }
    let num_rounds = compute_rounds(config.budget, config.acquisition_size, pool - config.acquisition_size)?;
    let outcomes: Vec<RepeatOutcome> = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_repeat(config, Arc::clone(&dataset), r, oracle))
        .collect::<Result<_>>()?;
    let mut incomplete = Vec::new();
    let mut repeats = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        repeats.push(o.record);
        incomplete.extend(o.resume_state);
    }
    Ok(RunOutcome {
        record: RunRecord {
            strategy: config.strategy,
            acquisition_size: config.acquisition_size,
            budget: config.budget,
            num_rounds,
            repeats,
        },
        incomplete,
    })
}
