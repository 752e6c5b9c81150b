use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Oracle;
use crate::error::{Error, Result};

/// Rounds after the initial batch: `min(⌊B/A⌋, ⌊pool/A⌋)`, where `pool` is
/// the unlabeled count left after the initial draw.
pub fn compute_rounds(budget: usize, acquisition_size: usize, pool_size: usize) -> Result<usize> {
    if acquisition_size == 0 {
        return Err(Error::config("acquisition_size", "must be positive"));
    }
    Ok((budget / acquisition_size).min(pool_size / acquisition_size))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPurpose {
    InitialDraw,
    ModelInit,
    Shuffle,
    Acquisition,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one purpose in one round of one repeat.
pub fn derive_seed(base_seed: u64, repeat: u32, round: usize, purpose: SeedPurpose) -> u64 {
    let mut h = splitmix64(base_seed);
    h = splitmix64(h ^ repeat as u64);
    h = splitmix64(h ^ round as u64);
    splitmix64(h ^ purpose as u64)
}

/// Stable 64-bit FNV-1a, used to separate seeds by strategy name.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Unlabeled and labeled index sets over the dataset rows of the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    /// Ascending.
    unlabeled: Vec<usize>,
    /// In the order the labels were committed.
    labeled: Vec<usize>,
    labels: BTreeMap<usize, usize>,
}

impl PoolState {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut unlabeled: Vec<usize> = indices.into_iter().collect();
        unlabeled.sort_unstable();
        if unlabeled.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("pool indices must be distinct".into()));
        }
        Ok(Self { unlabeled, labeled: Vec::new(), labels: BTreeMap::new() })
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn label_of(&self, index: usize) -> Option<usize> {
        self.labels.get(&index).copied()
    }

    /// Labels in the order of [`PoolState::labeled`].
    pub fn labeled_classes(&self) -> Vec<usize> {
        self.labeled.iter().map(|i| self.labels[i]).collect()
    }

    pub fn is_unlabeled(&self, index: usize) -> bool {
        self.unlabeled.binary_search(&index).is_ok()
    }

    pub fn len(&self) -> usize {
        self.unlabeled.len() + self.labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Move `index` from the unlabeled to the labeled set.
    pub fn commit(&mut self, index: usize, class: usize) -> Result<()> {
        let at = self
            .unlabeled
            .binary_search(&index)
            .map_err(|_| Error::InvalidInput(format!("pool index {index} is not unlabeled")))?;
        self.unlabeled.remove(at);
        self.labeled.push(index);
        self.labels.insert(index, class);
        Ok(())
    }

    /// `a` unlabeled indices drawn uniformly without replacement, ascending.
    pub fn draw_uniform(&self, a: usize, seed: u64) -> Result<Vec<usize>> {
        if a > self.unlabeled.len() {
            return Err(Error::InvalidInput(format!("cannot draw {a} from {} unlabeled samples", self.unlabeled.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> =
            rand::seq::index::sample(&mut rng, self.unlabeled.len(), a).into_iter().map(|i| self.unlabeled[i]).collect();
        picked.sort_unstable();
        Ok(picked)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let broken = |m: &str| Err(Error::InvalidInput(format!("pool state corrupt: {m}")));
        if self.unlabeled.windows(2).any(|w| w[0] >= w[1]) {
            return broken("unlabeled set not strictly ascending");
        }
        if self.labels.len() != self.labeled.len() {
            return broken("labeled set and label map disagree");
        }
        for i in &self.labeled {
            if !self.labels.contains_key(i) {
                return broken("labeled index without a label");
            }
            if self.is_unlabeled(*i) {
                return broken("index both labeled and unlabeled");
            }
        }
        Ok(())
    }
}

/// Draw `a` samples uniformly, label them through the oracle and commit them.
pub fn initial_draw(pool: &PoolState, a: usize, seed: u64, oracle: &dyn Oracle) -> Result<PoolState> {
    let mut next = pool.clone();
    for index in pool.draw_uniform(a, seed)? {
        let class = oracle.label(index)?;
        next.commit(index, class)?;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimulatedOracle;
    use proptest::prelude::*;

    #[test]
    fn rounds_examples() {
        assert_eq!(compute_rounds(2000, 100, 57_900).unwrap(), 20);
        assert_eq!(compute_rounds(500, 100, 300).unwrap(), 3);
        assert_eq!(compute_rounds(99, 100, 10_000).unwrap(), 0);
        assert!(compute_rounds(10, 0, 10).is_err());
    }

    #[test]
    fn seeds_differ_by_every_coordinate() {
        let base = derive_seed(7, 0, 0, SeedPurpose::ModelInit);
        assert_eq!(base, derive_seed(7, 0, 0, SeedPurpose::ModelInit));
        for other in [
            derive_seed(8, 0, 0, SeedPurpose::ModelInit),
            derive_seed(7, 1, 0, SeedPurpose::ModelInit),
            derive_seed(7, 0, 1, SeedPurpose::ModelInit),
            derive_seed(7, 0, 0, SeedPurpose::Shuffle),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn initial_draw_examples() {
        let oracle = SimulatedOracle::new((0..20).map(|i| i % 2).collect());
        let pool = PoolState::new(0..20).unwrap();
        let a = initial_draw(&pool, 5, 3, &oracle).unwrap();
        let b = initial_draw(&pool, 5, 3, &oracle).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labeled().len(), 5);
        assert_eq!(a.unlabeled().len(), 15);
        a.check_invariants().unwrap();
        for &i in a.labeled() {
            assert_eq!(a.label_of(i), Some(i % 2));
        }
        let all = initial_draw(&pool, 20, 3, &oracle).unwrap();
        assert!(all.unlabeled().is_empty());
        assert!(initial_draw(&pool, 21, 3, &oracle).is_err());
    }

    #[test]
    fn commit_rejects_unknown_and_repeated() {
        let mut pool = PoolState::new([4, 9]).unwrap();
        pool.commit(9, 1).unwrap();
        assert!(pool.commit(9, 1).is_err());
        assert!(pool.commit(5, 0).is_err());
        assert!(PoolState::new([1, 1]).is_err());
    }

    proptest! {
        #[test]
        fn draws_are_distinct_members(n in 1usize..300, frac in 0.0f64..=1.0, seed in any::<u64>()) {
            let a = ((n as f64) * frac) as usize;
            let pool = PoolState::new((0..n).map(|i| i * 3)).unwrap();
            let drawn = pool.draw_uniform(a, seed).unwrap();
            prop_assert_eq!(drawn.len(), a);
            prop_assert!(drawn.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(drawn.iter().all(|&i| pool.is_unlabeled(i)));
        }

        #[test]
        fn rounds_formula(b in 1usize..10_000, a in 1usize..500, pool in 0usize..10_000) {
            let n = compute_rounds(b, a, pool).unwrap();
            prop_assert!(n * a <= b && n * a <= pool);
            prop_assert!((n + 1) * a > b || (n + 1) * a > pool);
        }
    }
}
