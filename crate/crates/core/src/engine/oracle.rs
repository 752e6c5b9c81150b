use std::collections::HashMap;

use crate::error::{Error, Result};

/// Source of ground-truth labels for pool indices.
pub trait Oracle: Sync {
    fn label(&self, pool_index: usize) -> Result<usize>;
}

/// Answers from a label table indexed by dataset row.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    labels: Vec<usize>,
}

impl SimulatedOracle {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }
}

impl Oracle for SimulatedOracle {
    fn label(&self, pool_index: usize) -> Result<usize> {
        self.labels
            .get(pool_index)
            .copied()
            .ok_or_else(|| Error::Oracle(format!("no label for pool index {pool_index}")))
    }
}

/// Answers from a fixed map and refuses anything else, e.g. to replay the
/// labels a person gave in a session.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    answers: HashMap<usize, usize>,
}

impl ScriptedOracle {
    pub fn new(answers: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self { answers: answers.into_iter().collect() }
    }
}

impl Oracle for ScriptedOracle {
    fn label(&self, pool_index: usize) -> Result<usize> {
        self.answers
            .get(&pool_index)
            .copied()
            .ok_or_else(|| Error::Oracle(format!("script has no label for pool index {pool_index}")))
    }
}
