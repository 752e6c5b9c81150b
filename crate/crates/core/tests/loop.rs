use std::path::Path;
use std::sync::Arc;

use deal_core::acquisition::StrategyKind;
use deal_core::data::{DataSource, Dataset, DatasetSpec, SplitSpec, SyntheticSpec};
use deal_core::engine::{
    resume_repeat, run_active_learning, run_repeat, ActiveLearner, LearnerState, Phase, RunConfig, ScriptedOracle,
    SimulatedOracle,
};
use deal_core::model::TrainConfig;

fn config(strategy: StrategyKind) -> RunConfig {
    let dataset = DatasetSpec {
        source: DataSource::Synthetic(SyntheticSpec::random_blobs(3, 2, 4.0, 0.7, 240, 11)),
        split: SplitSpec { train: 0.6, validation: 0.1, test: 0.3, seed: 3 },
        limit: None,
        balance_classes: false,
    };
    let mut c = RunConfig::new(strategy, 8, 40, dataset);
    c.train = TrainConfig { epochs: 5, batch_size: 8, learning_rate: 0.01, ..TrainConfig::default() };
    c.repeats = 2;
    c.base_seed = 21;
    c
}

fn load(c: &RunConfig) -> Arc<Dataset> {
    Arc::new(c.dataset.load(Path::new(".")).unwrap())
}

#[test]
fn resumed_state_finishes_like_an_uninterrupted_run() {
    let c = config(StrategyKind::DealMinMargin);
    let ds = load(&c);
    let oracle = SimulatedOracle::new(ds.labels().to_vec());
    let whole = run_repeat(&c, Arc::clone(&ds), 0, &oracle).unwrap();
    assert!(whole.resume_state.is_none());

    let mut learner = ActiveLearner::new(c.clone(), Arc::clone(&ds), 0).unwrap();
    while learner.round() < 2 || learner.phase() != Phase::AwaitingLabels {
        match learner.phase() {
            Phase::AwaitingLabels => {
                for q in learner.batch().to_vec() {
                    learner.submit_label(q.pool_index, ds.label(q.pool_index)).unwrap();
                }
            }
            Phase::ReadyToTrain => learner.advance(|_| {}).unwrap(),
            Phase::Finished => unreachable!(),
        }
    }
    // Through JSON, as a stopped process would store it.
    let json = serde_json::to_string(learner.state()).unwrap();
    let state: LearnerState = serde_json::from_str(&json).unwrap();
    let resumed = resume_repeat(state, ds, &oracle).unwrap();
    assert_eq!(resumed.record, whole.record);
}

#[test]
fn oracle_failure_leaves_a_resumable_state() {
    let c = config(StrategyKind::SoftmaxEntropy);
    let ds = load(&c);
    let full = SimulatedOracle::new(ds.labels().to_vec());
    let whole = run_repeat(&c, Arc::clone(&ds), 1, &full).unwrap();

    // Only the first 20 training indices are known to this oracle.
    let partial = ScriptedOracle::new(ds.split.train.iter().take(20).map(|&i| (i, ds.label(i))));
    let stopped = run_repeat(&c, Arc::clone(&ds), 1, &partial).unwrap();
    assert!(!stopped.record.complete);
    assert!(stopped.record.failure.is_some());
    assert!(stopped.record.rounds.len() < whole.record.rounds.len());

    let resumed = resume_repeat(stopped.resume_state.unwrap(), ds, &full).unwrap();
    assert_eq!(resumed.record.rounds, whole.record.rounds);
    assert!(resumed.record.complete);
}

#[test]
fn parallel_repeats_match_sequential_ones() {
    let c = config(StrategyKind::Random);
    let ds = load(&c);
    let oracle = SimulatedOracle::new(ds.labels().to_vec());
    let run = run_active_learning(&c, Arc::clone(&ds), &oracle).unwrap();
    assert!(run.incomplete.is_empty());
    assert_eq!(run.record.repeats.len(), 2);
    for repeat in 0..2 {
        let single = run_repeat(&c, Arc::clone(&ds), repeat, &oracle).unwrap();
        assert_eq!(run.record.repeats[repeat as usize], single.record);
    }
    assert_eq!(run.record.num_rounds, 5);
    assert!(run.record.repeats.iter().all(|r| r.rounds.len() == 6));
}
