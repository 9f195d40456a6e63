use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// `(train, dev, test)` sizes for an 8:1:1 split of `n` items. Dev and test
/// each get `round(n/10)`; train takes the rest, which keeps every part
/// within one element of its exact share.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let tenth = (n + 5) / 10;
    (n - 2 * tenth, tenth, tenth)
}

/// Seeded shuffle followed by an 8:1:1 cut.
pub fn split_dataset<T>(mut items: Vec<T>, seed: u64) -> Result<Split<T>> {
    if items.len() < 10 {
        return Err(Error::TooFewFragments(items.len()));
    }
    let (n_train, n_dev, _) = split_sizes(items.len());
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = items.split_off(n_train + n_dev);
    let dev = items.split_off(n_train);
    Ok(Split {
        train: items,
        dev,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_one_arithmetic() {
        assert_eq!(split_sizes(302_650), (242_120, 30_265, 30_265));
    }

    #[test]
    fn ten_items() {
        let s = split_dataset((0..10).collect::<Vec<_>>(), 3).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn too_few() {
        assert!(matches!(split_dataset(vec![1; 9], 0), Err(Error::TooFewFragments(9))));
    }

    #[test]
    fn deterministic() {
        let a = split_dataset((0..50).collect::<Vec<_>>(), 42).unwrap();
        let b = split_dataset((0..50).collect::<Vec<_>>(), 42).unwrap();
        assert_eq!(a, b);
        let c = split_dataset((0..50).collect::<Vec<_>>(), 43).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_exhaustive(n in 10usize..600, seed in any::<u64>()) {
            let s = split_dataset((0..n).collect::<Vec<_>>(), seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.dev).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let exact = |share: f64| share * n as f64;
            prop_assert!((s.train.len() as f64 - exact(0.8)).abs() <= 1.0);
            prop_assert!((s.dev.len() as f64 - exact(0.1)).abs() <= 1.0);
            prop_assert!((s.test.len() as f64 - exact(0.1)).abs() <= 1.0);
        }
    }
}
