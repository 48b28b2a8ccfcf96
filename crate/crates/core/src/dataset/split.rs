use serde::{Deserialize, Serialize};

use super::{DatasetError, PairKind, TrainingPair};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_count: usize,
    pub seed: u64,
}

/// Seeded validation split over core pairs.
///
/// Indices `0..n` are shuffled with [`SeededRng::shuffle`]; the first
/// `validation_count` shuffled indices form the validation set (in shuffled
/// order) and the rest form the training set in original input order.
pub fn split_validation(
    pairs: &[TrainingPair],
    spec: SplitSpec,
) -> Result<(Vec<TrainingPair>, Vec<TrainingPair>), DatasetError> {
    if let Some(index) = pairs.iter().position(|p| p.kind != PairKind::Core) {
        return Err(DatasetError::NotCore { index });
    }
    if spec.validation_count > pairs.len() {
        return Err(DatasetError::CountExceedsCorpus {
            requested: spec.validation_count,
            available: pairs.len(),
        });
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    SeededRng::new(spec.seed).shuffle(&mut order);
    let (val_idx, train_idx) = order.split_at_mut(spec.validation_count);
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>();
    Ok((pick(val_idx), pick(train_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn core(n: usize) -> Vec<TrainingPair> {
        (0..n)
            .map(|i| TrainingPair {
                kind: PairKind::Core,
                input_context: format!("ctx {i}"),
                target: format!("fixed {i}"),
                source_thought: format!("src {i}"),
                trajectory_id: format!("t{i}"),
                step: 0,
            })
            .collect()
    }

    #[test]
    fn zero_count_keeps_everything_in_train() {
        let pairs = core(5);
        let (v, t) = split_validation(&pairs, SplitSpec { validation_count: 0, seed: 3 }).unwrap();
        assert!(v.is_empty());
        assert_eq!(t, pairs);
    }

    #[test]
    fn seeds_matter() {
        let pairs = core(100);
        let a = split_validation(&pairs, SplitSpec { validation_count: 10, seed: 1 }).unwrap();
        let b = split_validation(&pairs, SplitSpec { validation_count: 10, seed: 1 }).unwrap();
        let c = split_validation(&pairs, SplitSpec { validation_count: 10, seed: 2 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn errors() {
        let pairs = core(3);
        assert!(matches!(
            split_validation(&pairs, SplitSpec { validation_count: 4, seed: 0 }),
            Err(DatasetError::CountExceedsCorpus { requested: 4, available: 3 })
        ));
        let mut mixed = core(3);
        mixed[2].kind = PairKind::Warmup;
        assert!(matches!(
            split_validation(&mixed, SplitSpec { validation_count: 1, seed: 0 }),
            Err(DatasetError::NotCore { index: 2 })
        ));
    }
}
