use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Seeded partition of pieces into `k` folds. Assignment is by piece id, so
/// every transposition of a piece lands in the same fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, piece_id: &str) -> Option<usize> {
        self.assignments.get(piece_id).copied()
    }

    /// Piece ids of every fold, each list sorted.
    pub fn members(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k];
        for (piece, &f) in &self.assignments {
            out[f].push(piece.clone());
        }
        out
    }
}

/// Shuffles the sorted, de-duplicated ids and deals them round-robin.
pub fn make_folds<S: AsRef<str>>(
    piece_ids: &[S],
    k: usize,
    seed: u64,
) -> Result<FoldPlan, ExperimentError> {
    let mut ids: Vec<&str> = piece_ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.dedup();
    if k == 0 || k > ids.len() {
        return Err(ExperimentError::TooFewPieces {
            pieces: ids.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let assignments = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_owned(), i % k))
        .collect();
    Ok(FoldPlan { k, assignments })
}
