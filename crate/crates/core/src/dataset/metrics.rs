use std::collections::BTreeMap;

use super::ClassId;
use crate::error::{Error, Result};

/// Within-class accuracy for every class of `class_set` that occurs in
/// `truth`. Classes with no test instances are absent from the map.
pub fn per_class_accuracies(
    pred: &[ClassId],
    truth: &[ClassId],
    class_set: &[ClassId],
) -> Result<BTreeMap<ClassId, f64>> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut tally: BTreeMap<ClassId, (u64, u64)> =
        class_set.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &t) in pred.iter().zip(truth) {
        if let Some((hit, total)) = tally.get_mut(&t) {
            *total += 1;
            if p == t {
                *hit += 1;
            }
        }
    }
    Ok(tally
        .into_iter()
        .filter(|(_, (_, total))| *total > 0)
        .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
        .collect())
}

/// Mean over classes of within-class top-1 accuracy.
pub fn per_class_top1(pred: &[ClassId], truth: &[ClassId], class_set: &[ClassId]) -> Result<f64> {
    if class_set.is_empty() {
        return Err(Error::domain("per-class accuracy over an empty class set"));
    }
    let acc = per_class_accuracies(pred, truth, class_set)?;
    if acc.is_empty() {
        return Err(Error::domain("no instance belongs to the requested class set"));
    }
    Ok(acc.values().sum::<f64>() / acc.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_is_one() {
        let y = [1, 2, 2, 3];
        assert_eq!(per_class_top1(&y, &y, &[1, 2, 3]).unwrap(), 1.0);
    }

    #[test]
    fn per_class_not_per_instance() {
        let mut truth = vec![1; 10];
        truth.extend(vec![2; 1000]);
        let mut pred = vec![1; 10];
        pred.extend(vec![1; 1000]);
        assert_eq!(per_class_top1(&pred, &truth, &[1, 2]).unwrap(), 0.5);
    }

    #[test]
    fn empty_class_set_is_domain_error() {
        assert!(matches!(per_class_top1(&[1], &[1], &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn absent_classes_excluded() {
        assert_eq!(per_class_top1(&[1, 2], &[1, 1], &[1, 2, 3]).unwrap(), 0.5);
    }

    // brute-force tally over a random 3-class problem
    #[test]
    fn matches_direct_tally() {
        use rand::Rng;
        let mut rng = crate::rng_from_seed(9);
        let truth: Vec<ClassId> = (0..200).map(|_| rng.random_range(1..=3)).collect();
        let pred: Vec<ClassId> = (0..200).map(|_| rng.random_range(1..=3)).collect();
        let mut sum = 0.0;
        for c in 1..=3 {
            let idx: Vec<usize> = (0..200).filter(|&i| truth[i] == c).collect();
            let hits = idx.iter().filter(|&&i| pred[i] == c).count();
            sum += hits as f64 / idx.len() as f64;
        }
        let got = per_class_top1(&pred, &truth, &[1, 2, 3]).unwrap();
        assert!((got - sum / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn invariant_under_instance_permutation(
            pairs in prop::collection::vec((1u32..5, 1u32..5), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let (pred, truth): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let a = per_class_top1(&pred, &truth, &[1, 2, 3, 4]).unwrap();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::rng_from_seed(seed));
            let (p2, t2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            let b = per_class_top1(&p2, &t2, &[1, 2, 3, 4]).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
