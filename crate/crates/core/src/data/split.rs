use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Split};
use crate::error::{Error, Result};

/// Apportion `total` into parts proportional to `weights` (which sum to 1)
/// by largest remainder. Ties go to the earlier part.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Round the class × part matrix `n_c · T_s / N` to integers whose row sums
/// are the class sizes and whose column sums are the part totals, with every
/// cell at the floor or ceiling of its exact value. Starts from the floors,
/// hands out the leftover units greedily by remainder and completes with
/// augmenting paths when the greedy pass gets stuck.
fn controlled_rounding(class_sizes: &[usize], totals: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = class_sizes.iter().sum();
    let (rows, cols) = (class_sizes.len(), totals.len());
    let exact: Vec<Vec<f64>> = class_sizes
        .iter()
        .map(|&nc| totals.iter().map(|&t| if n == 0 { 0.0 } else { nc as f64 * t as f64 / n as f64 }).collect())
        .collect();
    let mut cells: Vec<Vec<usize>> = exact.iter().map(|r| r.iter().map(|e| (e + 1e-9).floor() as usize).collect()).collect();
    let mut bumped = vec![vec![false; cols]; rows];
    let mut row_need: Vec<usize> = (0..rows).map(|c| class_sizes[c] - cells[c].iter().sum::<usize>()).collect();
    let mut col_need: Vec<usize> = (0..cols).map(|s| totals[s] - cells.iter().map(|r| r[s]).sum::<usize>()).collect();
    let fractional = |c: usize, s: usize| exact[c][s] - (exact[c][s] + 1e-9).floor() > 1e-9;

    let mut candidates: Vec<(usize, usize)> =
        (0..rows).flat_map(|c| (0..cols).map(move |s| (c, s))).filter(|&(c, s)| fractional(c, s)).collect();
    candidates.sort_by(|a, b| {
        let ra = exact[a.0][a.1].fract();
        let rb = exact[b.0][b.1].fract();
        rb.total_cmp(&ra).then(a.cmp(b))
    });
    for (c, s) in candidates {
        if row_need[c] > 0 && col_need[s] > 0 {
            bumped[c][s] = true;
            row_need[c] -= 1;
            col_need[s] -= 1;
        }
    }

    // Augmenting path: row -> (unbumped fractional cell) -> column -> (bumped cell) -> row ...
    fn augment(
        c: usize,
        seen: &mut [bool],
        bumped: &mut [Vec<bool>],
        col_need: &mut [usize],
        fractional: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        let cols = col_need.len();
        for s in 0..cols {
            if bumped[c][s] || !fractional(c, s) || seen[s] {
                continue;
            }
            seen[s] = true;
            if col_need[s] > 0 {
                col_need[s] -= 1;
                bumped[c][s] = true;
                return true;
            }
            for other in 0..bumped.len() {
                if other != c && bumped[other][s] {
                    bumped[other][s] = false;
                    if augment(other, seen, bumped, col_need, fractional) {
                        bumped[c][s] = true;
                        return true;
                    }
                    bumped[other][s] = true;
                }
            }
        }
        false
    }
    for c in 0..rows {
        while row_need[c] > 0 {
            let mut seen = vec![false; cols];
            if !augment(c, &mut seen, &mut bumped, &mut col_need, &fractional) {
                break;
            }
            row_need[c] -= 1;
        }
    }
    for c in 0..rows {
        for s in 0..cols {
            cells[c][s] += usize::from(bumped[c][s]);
        }
    }
    cells
}

/// Stratified train / validation / test split. Split sizes come from the
/// fractions by largest remainder; each class then contributes its
/// proportional share of every split, rounded so that no class is off by
/// more than one sample.
pub fn split_dataset(mut ds: Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f) || !f.is_finite()) {
        return Err(Error::config("dataset.split", "fractions must lie in [0, 1]"));
    }
    let sum: f64 = fractions.iter().sum();
    if sum > 1.0 + 1e-9 {
        return Err(Error::config("dataset.split", "fractions must sum to at most 1"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let slots = fractions.iter().filter(|f| **f > 0.0).count();
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < slots {
            return Err(Error::InvalidInput(format!(
                "class {c} has {} samples, fewer than the {slots} non-empty splits",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }

    // A fourth, unused part absorbs whatever the fractions leave over.
    let weights = [fractions[0], fractions[1], fractions[2], (1.0 - sum).max(0.0)];
    let totals = largest_remainder(ds.len(), &weights);
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = controlled_rounding(&sizes, &totals);

    let mut split = Split::default();
    for (c, members) in by_class.iter().enumerate() {
        let mut it = members.iter().copied();
        split.train.extend(it.by_ref().take(quota[c][0]));
        split.validation.extend(it.by_ref().take(quota[c][1]));
        split.test.extend(it.by_ref().take(quota[c][2]));
    }
    for list in [&mut split.train, &mut split.validation, &mut split.test] {
        list.sort_unstable();
    }
    ds.split = split;
    ds.validate_split()?;
    Ok(ds)
}

/// Subsample every class to `per_class` rows (default: the smallest class size).
/// Row order of the result follows the original order.
pub fn balance_classes(ds: &Dataset, per_class: Option<usize>, seed: u64) -> Result<Dataset> {
    let counts = ds.class_counts();
    let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    let smallest = present.iter().copied().min().unwrap_or(0);
    let take = per_class.unwrap_or(smallest);
    if take > smallest {
        return Err(Error::InvalidInput(format!("cannot take {take} per class, smallest class has {smallest}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(take * present.len());
    for class in 0..ds.num_classes() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == class).collect();
        members.shuffle(&mut rng);
        keep.extend(members.into_iter().take(take));
    }
    keep.sort_unstable();
    let mut out = ds.subset(&keep)?;
    out.provenance.source = format!("{} (balanced {take}/class)", ds.provenance.source);
    Ok(out)
}
