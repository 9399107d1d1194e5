//! Deterministic stratified train/test/val splitting.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetIndex};

/// Partition ratios, ordered (train, test, val).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Ratios {
    pub const DEFAULT: Ratios = Ratios {
        train: 0.7,
        test: 0.2,
        val: 0.1,
    };

    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.test, self.val];
        if parts.iter().any(|&r| r <= 0.0) {
            return Err(DatasetError::RatioNonPositive);
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::RatioSum { sum });
        }
        Ok(())
    }
}

/// Disjoint partition of dataset entry indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: Ratios,
    pub seed: u64,
    /// Classes too small to stratify cleanly (fewer than 3 items).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SplitIndex {
    pub fn partition(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Largest-remainder apportionment of `n` items over the ratio triple,
/// remainder priority train > test > val. Returns (train, test, val).
fn apportion(n: usize, ratios: &Ratios) -> (usize, usize, usize) {
    let targets = [ratios.train, ratios.test, ratios.val];
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for i in 0..3 {
        let exact = targets[i] * n as f64;
        base[i] = exact.floor() as usize;
        frac[i] = exact - exact.floor();
    }
    let assigned: usize = base.iter().sum();
    // order: largest fraction first, ties by priority (index order)
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));
    for &i in order.iter().take(n - assigned) {
        base[i] += 1;
    }
    (base[0], base[1], base[2])
}

/// Shuffle each class independently (seeded) and cut it into
/// train/test/val by largest-remainder quotas. Identical
/// (index, ratios, seed) inputs produce identical output.
pub fn stratified_split(
    index: &DatasetIndex,
    ratios: Ratios,
    seed: u64,
) -> Result<SplitIndex, DatasetError> {
    ratios.validate()?;
    let k = index.class_names.len();
    // one subseed per class, drawn up front so class count is the only
    // thing that shifts the stream
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let subseeds: Vec<u64> = (0..k).map(|_| master.next_u64()).collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut val = Vec::new();
    let mut warnings = Vec::new();
    for class in 0..k {
        let mut members: Vec<usize> = index
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 3 {
            warnings.push(format!(
                "class '{}' has only {} item(s); some partitions will be empty",
                index.class_names[class],
                members.len()
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(subseeds[class]);
        members.shuffle(&mut rng);
        let (n_train, n_test, _n_val) = apportion(members.len(), &ratios);
        train.extend(&members[..n_train]);
        test.extend(&members[n_train..n_train + n_test]);
        val.extend(&members[n_train + n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    val.sort_unstable();
    Ok(SplitIndex {
        train,
        val,
        test,
        ratios,
        seed,
        warnings,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::{DatasetIndex, Entry};
    use std::collections::HashSet;
    use std::path::PathBuf;

    pub(crate) fn synthetic_index(per_class: &[usize]) -> DatasetIndex {
        let class_names: Vec<String> = (0..per_class.len()).map(|i| format!("class{i}")).collect();
        let mut entries = Vec::new();
        for (label, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                entries.push(Entry {
                    path: PathBuf::from(format!("class{label}/img{i:05}.png")),
                    label,
                });
            }
        }
        DatasetIndex {
            entries,
            counts: per_class.to_vec(),
            class_names,
            root: PathBuf::from("."),
            skipped: Vec::new(),
        }
    }

    fn class_counts(index: &DatasetIndex, part: &[usize], k: usize) -> Vec<usize> {
        let mut counts = vec![0usize; k];
        for &i in part {
            counts[index.entries[i].label] += 1;
        }
        counts
    }

    #[test]
    fn default_ratios_split_4200_exactly() {
        let index = synthetic_index(&[1050, 1050, 1050, 1050]);
        let split = stratified_split(&index, Ratios::DEFAULT, 17).unwrap();
        assert_eq!(split.train.len(), 2940);
        assert_eq!(split.test.len(), 840);
        assert_eq!(split.val.len(), 420);
        assert_eq!(class_counts(&index, &split.train, 4), vec![735; 4]);
        assert_eq!(class_counts(&index, &split.test, 4), vec![210; 4]);
        assert_eq!(class_counts(&index, &split.val, 4), vec![105; 4]);
    }

    #[test]
    fn ten_items_split_7_2_1() {
        let index = synthetic_index(&[10]);
        let split = stratified_split(&index, Ratios::DEFAULT, 3).unwrap();
        assert_eq!(
            (split.train.len(), split.test.len(), split.val.len()),
            (7, 2, 1)
        );
    }

    #[test]
    fn same_seed_is_identical() {
        let index = synthetic_index(&[31, 17, 52]);
        let a = stratified_split(&index, Ratios::DEFAULT, 99).unwrap();
        let b = stratified_split(&index, Ratios::DEFAULT, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_seeds_differ() {
        let index = synthetic_index(&[20, 20]);
        for pair in 0..10u64 {
            let a = stratified_split(&index, Ratios::DEFAULT, pair * 2).unwrap();
            let b = stratified_split(&index, Ratios::DEFAULT, pair * 2 + 1).unwrap();
            assert_ne!(a.train, b.train, "seed pair {pair} produced equal splits");
        }
    }

    #[test]
    fn bad_ratios_rejected() {
        let index = synthetic_index(&[10]);
        let bad = Ratios {
            train: 0.7,
            test: 0.2,
            val: 0.2,
        };
        assert!(matches!(
            stratified_split(&index, bad, 0),
            Err(DatasetError::RatioSum { .. })
        ));
        let nonpos = Ratios {
            train: 1.0,
            test: 0.0,
            val: 0.0,
        };
        assert!(matches!(
            stratified_split(&index, nonpos, 0),
            Err(DatasetError::RatioNonPositive)
        ));
    }

    #[test]
    fn tiny_class_warns_but_splits() {
        let index = synthetic_index(&[2, 10]);
        let split = stratified_split(&index, Ratios::DEFAULT, 0).unwrap();
        assert_eq!(split.warnings.len(), 1);
        assert!(split.warnings[0].contains("class0"));
        let total = split.train.len() + split.val.len() + split.test.len();
        assert_eq!(total, 12);
    }

    #[test]
    fn partition_is_exact() {
        let index = synthetic_index(&[13, 29, 7]);
        let split = stratified_split(&index, Ratios::DEFAULT, 5).unwrap();
        let all: HashSet<usize> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .copied()
            .collect();
        assert_eq!(
            all.len(),
            split.train.len() + split.val.len() + split.test.len()
        );
        assert_eq!(all, (0..49).collect::<HashSet<_>>());
    }

    #[test]
    fn stratification_within_one_item() {
        let index = synthetic_index(&[13, 29, 7, 41]);
        let ratios = Ratios {
            train: 0.6,
            test: 0.25,
            val: 0.15,
        };
        let split = stratified_split(&index, ratios, 11).unwrap();
        for (part, r) in [
            (&split.train, ratios.train),
            (&split.test, ratios.test),
            (&split.val, ratios.val),
        ] {
            let counts = class_counts(&index, part, 4);
            for (class, &n) in index.counts.iter().enumerate() {
                let target = (r * n as f64).round();
                assert!(
                    (counts[class] as f64 - target).abs() <= 1.0,
                    "class {class}: got {} want ~{target}",
                    counts[class]
                );
            }
        }
    }
}
