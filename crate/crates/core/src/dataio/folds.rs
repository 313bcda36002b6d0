use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Fold index of every utterance id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold(&self, id: &str) -> Option<usize> {
        self.fold_of.get(id).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.fold_of.values() {
            s[f] += 1;
        }
        s
    }
}

/// Splits ids into `k` folds, keeping every group (video) inside a single
/// fold.
///
/// Groups are sorted by name, shuffled with the seed, then placed largest
/// first into the currently smallest fold (lowest index on ties). With one
/// id per group this is a round-robin deal and fold sizes differ by at most
/// one.
pub fn kfold_split(ids: &[&str], groups: &[&str], k: usize, seed: u64) -> Result<FoldAssignment> {
    if ids.len() != groups.len() {
        return Err(Error::Shape("ids and groups differ in length".into()));
    }
    if k == 0 {
        return Err(Error::Invalid("fold count must be positive".into()));
    }
    let mut by_group: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (&id, &g) in ids.iter().zip(groups) {
        by_group.entry(g).or_default().push(id);
    }
    if k > by_group.len() {
        return Err(Error::Invalid(format!("{k} folds requested but only {} distinct groups", by_group.len())));
    }
    let mut order: Vec<Vec<&str>> = by_group.into_values().collect();
    order.shuffle(&mut rng_from_seed(seed));
    // stable: equal-sized groups keep their shuffled order
    order.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let mut sizes = vec![0usize; k];
    let mut fold_of = BTreeMap::new();
    for members in order {
        let f = (0..k).min_by_key(|&f| (sizes[f], f)).unwrap();
        sizes[f] += members.len();
        for id in members {
            if fold_of.insert(id.to_string(), f).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
    }
    Ok(FoldAssignment { k, fold_of })
}
