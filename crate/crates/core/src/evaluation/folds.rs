use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_participants: BTreeSet<String>,
    pub test_participants: BTreeSet<String>,
}

impl FoldSplit {
    pub fn is_disjoint(&self) -> bool {
        self.train_participants.is_disjoint(&self.test_participants)
    }
}

/// Participant-disjoint k-fold partition. Participants are sorted, shuffled
/// with `seed`, and dealt into `k` contiguous test groups whose sizes differ
/// by at most one (larger groups first).
pub fn split_folds(participants: &[String], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let mut ids: Vec<String> = participants.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() != participants.len() {
        return Err(Error::Config("participant ids must be unique".into()));
    }
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > ids.len() {
        return Err(Error::Config(format!(
            "cannot split {} participants into {k} folds",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold_index in 0..k {
        let size = base + usize::from(fold_index < extra);
        let test: BTreeSet<String> = ids[start..start + size].iter().cloned().collect();
        let train = ids
            .iter()
            .filter(|id| !test.contains(*id))
            .cloned()
            .collect();
        folds.push(FoldSplit {
            fold_index,
            train_participants: train,
            test_participants: test,
        });
        start += size;
    }
    Ok(folds)
}
