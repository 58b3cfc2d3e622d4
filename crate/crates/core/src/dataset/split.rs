use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, DatasetError, Split};

/// How samples are assigned to train / validation / test.
///
/// Both rules first build a training set and an evaluation pool; the pool is
/// then halved per class with a seeded shuffle into validation and test, so
/// the two halves carry identical class counts.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Within each run, the first `train_per_class` samples of every class (in
    /// manifest order) train and the next `eval_per_class` go to the pool.
    PerRun {
        train_per_class: usize,
        eval_per_class: usize,
        runs: u32,
        classes: usize,
    },
    /// Samples whose phase tag equals `train_phase` train; `eval_phase`
    /// samples form the pool.
    Phase {
        train_phase: String,
        eval_phase: String,
    },
}

/// Returns a copy of `dataset` with split tags assigned by `rule`.
///
/// Samples matched by neither side of the rule are left untagged.
pub fn split_by_rule(
    dataset: &Dataset,
    rule: &SplitRule,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    let mut out = dataset.clone();
    let mut tags: Vec<Option<Split>> = vec![None; out.len()];
    // class -> pool indices, in manifest order
    let mut pool: BTreeMap<usize, Vec<usize>> = BTreeMap::new();

    match rule {
        SplitRule::PerRun {
            train_per_class,
            eval_per_class,
            runs,
            classes,
        } => {
            let needed = train_per_class + eval_per_class;
            for run in 0..*runs {
                for class in 0..*classes {
                    let members: Vec<usize> = out
                        .samples()
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.run == run && s.label == class)
                        .map(|(i, _)| i)
                        .collect();
                    if members.len() < needed {
                        return Err(DatasetError::ClassImbalance {
                            run,
                            class,
                            needed,
                            found: members.len(),
                        });
                    }
                    for &i in &members[..*train_per_class] {
                        tags[i] = Some(Split::Train);
                    }
                    pool.entry(class)
                        .or_default()
                        .extend_from_slice(&members[*train_per_class..needed]);
                }
            }
        }
        SplitRule::Phase {
            train_phase,
            eval_phase,
        } => {
            for phase in [train_phase, eval_phase] {
                if !out
                    .samples()
                    .iter()
                    .any(|s| s.phase.as_deref() == Some(phase.as_str()))
                {
                    return Err(DatasetError::UnknownPhase(phase.clone()));
                }
            }
            for (i, s) in out.samples().iter().enumerate() {
                match s.phase.as_deref() {
                    Some(p) if p == train_phase => tags[i] = Some(Split::Train),
                    Some(p) if p == eval_phase => pool.entry(s.label).or_default().push(i),
                    _ => {}
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (&class, members) in pool.iter_mut() {
        if members.len() % 2 != 0 {
            return Err(DatasetError::UnevenEvalPool {
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let half = members.len() / 2;
        for &i in &members[..half] {
            tags[i] = Some(Split::Validation);
        }
        for &i in &members[half..] {
            tags[i] = Some(Split::Test);
        }
    }

    for (s, t) in out.samples_mut().iter_mut().zip(tags) {
        s.split = t;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Sample, VolumeGeometry};
    use ndarray::Array2;

    fn visual_like() -> Dataset {
        // 6 runs x 36 samples, classes alternate within each run
        let g = VolumeGeometry::grid(1, 1, 2).unwrap();
        let mut samples = Vec::new();
        for run in 0..6u32 {
            for k in 0..36u64 {
                let mut s = Sample::new(
                    run as u64 * 36 + k,
                    (k % 2) as usize,
                    Array2::from_elem((3, 2), k as f64),
                );
                s.run = run;
                samples.push(s);
            }
        }
        Dataset::new(g, vec!["bird".into(), "flower".into()], samples).unwrap()
    }

    fn counts(ds: &Dataset) -> [usize; 3] {
        [Split::Train, Split::Validation, Split::Test].map(|s| ds.indices_in(s).len())
    }

    #[test]
    fn visual_rule_gives_144_36_36() {
        let rule = SplitRule::PerRun {
            train_per_class: 12,
            eval_per_class: 6,
            runs: 6,
            classes: 2,
        };
        let ds = split_by_rule(&visual_like(), &rule, 11).unwrap();
        assert_eq!(ds.len(), 216);
        assert_eq!(counts(&ds), [144, 36, 36]);
        for split in [Split::Validation, Split::Test] {
            let per_class = ds
                .indices_in(split)
                .iter()
                .filter(|&&i| ds.samples()[i].label == 0)
                .count();
            assert_eq!(per_class, 18);
        }
        // first 12 of each class in run 0 train
        let s = &ds.samples()[..24];
        assert!(s.iter().all(|s| s.split == Some(Split::Train)));
        assert!(ds.samples()[24..36].iter().all(|s| s.split != Some(Split::Train)));
    }

    #[test]
    fn phase_rule_trains_on_encoding() {
        let mut ds = visual_like();
        for (i, s) in ds.samples_mut().iter_mut().enumerate() {
            s.phase = Some(if i < 108 { "encoding" } else { "retrieval" }.to_string());
        }
        let rule = SplitRule::Phase {
            train_phase: "encoding".into(),
            eval_phase: "retrieval".into(),
        };
        let out = split_by_rule(&ds, &rule, 0).unwrap();
        for s in out.samples() {
            if s.phase.as_deref() == Some("encoding") {
                assert_eq!(s.split, Some(Split::Train));
            } else {
                assert_ne!(s.split, Some(Split::Train));
            }
        }
        assert_eq!(counts(&out), [108, 54, 54]);
    }

    #[test]
    fn unknown_phase_is_an_error() {
        let rule = SplitRule::Phase {
            train_phase: "encoding".into(),
            eval_phase: "retrieval".into(),
        };
        assert!(matches!(
            split_by_rule(&visual_like(), &rule, 0),
            Err(DatasetError::UnknownPhase(p)) if p == "encoding"
        ));
    }

    #[test]
    fn halving_is_stable_and_balanced() {
        let g = VolumeGeometry::grid(1, 1, 1).unwrap();
        let samples: Vec<Sample> = (0..8u64)
            .map(|k| {
                let mut s = Sample::new(k, (k % 2) as usize, Array2::zeros((1, 1)));
                s.phase = Some("eval".into());
                s
            })
            .chain(std::iter::once({
                let mut s = Sample::new(99, 0, Array2::zeros((1, 1)));
                s.phase = Some("enc".into());
                s
            }))
            .collect();
        let ds = Dataset::new(g, vec!["a".into(), "b".into()], samples).unwrap();
        let rule = SplitRule::Phase {
            train_phase: "enc".into(),
            eval_phase: "eval".into(),
        };
        let a = split_by_rule(&ds, &rule, 5).unwrap();
        let b = split_by_rule(&ds, &rule, 5).unwrap();
        assert_eq!(a, b);
        for split in [Split::Validation, Split::Test] {
            for class in 0..2 {
                let n = a
                    .indices_in(split)
                    .iter()
                    .filter(|&&i| a.samples()[i].label == class)
                    .count();
                assert_eq!(n, 2);
            }
        }
    }

    #[test]
    fn short_run_is_class_imbalance() {
        let rule = SplitRule::PerRun {
            train_per_class: 12,
            eval_per_class: 7,
            runs: 6,
            classes: 2,
        };
        assert!(matches!(
            split_by_rule(&visual_like(), &rule, 0),
            Err(DatasetError::ClassImbalance { run: 0, class: 0, needed: 19, found: 18 })
        ));
    }

    #[test]
    fn odd_pool_cannot_be_halved() {
        let rule = SplitRule::PerRun {
            train_per_class: 12,
            eval_per_class: 5,
            runs: 3,
            classes: 2,
        };
        assert!(matches!(
            split_by_rule(&visual_like(), &rule, 0),
            Err(DatasetError::UnevenEvalPool { class: 0, count: 15 })
        ));
    }
}
