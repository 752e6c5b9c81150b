//! The pool-based active-learning loop: configuration, pool bookkeeping,
//! the per-repeat state machine, repeat orchestration and statistics.

mod config;
mod learner;
mod oracle;
mod pool;
mod record;
mod runner;
pub mod stats;

pub use config::{ArchitectureSpec, ModelSpec, OracleKind, RunConfig, RUN_CONFIG_SCHEMA_VERSION};
pub use learner::{initial_draw_seed, ActiveLearner, LabelRejection, LearnerState, Phase, QueryItem, TrainingProgress, LEARNER_STATE_SCHEMA_VERSION};
pub use oracle::{Oracle, ScriptedOracle, SimulatedOracle};
pub use pool::{compute_rounds, derive_seed, initial_draw, PoolState, SeedPurpose};
pub use record::{RepeatRecord, RoundRecord, RunRecord};
pub use runner::{drive, resume_repeat, run_active_learning, run_repeat, RepeatOutcome, RunOutcome};
pub use stats::{aggregate_runs, images_to_reach, paired_t_statistic, AggregatePoint, PairedTTest};
