use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Split;

/// Seeded 80/10/10 partition of query ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, query_id: &str) -> Option<Split> {
        [
            (&self.train, Split::Train),
            (&self.valid, Split::Valid),
            (&self.test, Split::Test),
        ]
        .into_iter()
        .find(|(ids, _)| ids.iter().any(|id| id == query_id))
        .map(|(_, s)| s)
    }

    pub fn lookup(&self) -> HashMap<&str, Split> {
        let mut m = HashMap::new();
        for (ids, s) in [
            (&self.train, Split::Train),
            (&self.valid, Split::Valid),
            (&self.test, Split::Test),
        ] {
            for id in ids {
                m.insert(id.as_str(), s);
            }
        }
        m
    }
}

/// Shuffles the eligible ids with `seed` and cuts them into train (floor of
/// 80%), valid (floor of 10%) and test (the remainder). Each part is returned
/// sorted. Input order does not matter.
pub fn split_queries(eligible: &[String], seed: u64) -> SplitAssignment {
    let mut ids = eligible.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let mut test = ids.split_off(n_train + n_valid);
    let mut valid = ids.split_off(n_train);
    let mut train = ids;
    train.sort();
    valid.sort();
    test.sort();
    SplitAssignment { train, valid, test }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_arithmetic() {
        let ids: Vec<String> = (0..10_003).map(|i| format!("q{i}")).collect();
        let s = split_queries(&ids, 1);
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8002, 1000, 1001));
        let ids: Vec<String> = (0..1870).map(|i| format!("q{i}")).collect();
        let s = split_queries(&ids, 1);
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (1496, 187, 187));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let ids: Vec<String> = (0..97).map(|i| format!("q{i}")).collect();
        let a = split_queries(&ids, 42);
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(a, split_queries(&rev, 42));
        assert_ne!(a, split_queries(&ids, 43));
        let lookup = a.lookup();
        assert_eq!(lookup.len(), 97);
    }
}
