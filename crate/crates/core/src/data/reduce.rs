use serde::{Deserialize, Serialize};

use super::{Cohort, EncodedSequence, Split};
use crate::error::{Error, Result};
use crate::numkernel::{Purpose, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionKind {
    Prior,
    Samples,
}

impl ReductionKind {
    fn purpose(self) -> Purpose {
        match self {
            ReductionKind::Prior => Purpose::PriorReduction,
            ReductionKind::Samples => Purpose::SampleReduction,
        }
    }
}

/// What a reduction kept, per reduced split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub kind: ReductionKind,
    pub fraction: f64,
    pub seed: u64,
    pub iteration: u64,
    /// Candidate count before reduction for train and valid.
    pub original: [usize; 2],
    /// Retained candidate admission ids for train and valid, in cohort order.
    pub retained: [Vec<String>; 2],
}

/// `round(fraction * n)`.
pub fn retained_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("fraction", format!("must lie in (0, 1], got {fraction}")));
    }
    Ok(())
}

/// Indices of `candidates` kept at `fraction`. One permutation per
/// (kind, seed, iteration, split) with prefixes taken, so smaller fractions
/// keep subsets of larger ones.
fn keep_prefix(candidates: &[usize], fraction: f64, kind: ReductionKind, seed: u64, iteration: u64, split: Split) -> Vec<usize> {
    let mut rng = RngStream::for_purpose(seed, kind.purpose(), &[iteration, split as u64]);
    let perm = rng.permutation(candidates.len());
    let k = retained_count(fraction, candidates.len());
    let mut kept: Vec<usize> = perm[..k].iter().map(|&i| candidates[i]).collect();
    kept.sort_unstable();
    kept
}

/// Down-samples positive admissions of train and valid.
///
/// An excluded positive admission stays in the split with its positive steps
/// masked, so its negative steps remain and no label is flipped. The test
/// split is never touched.
pub fn reduce_prior(cohort: &Cohort, fraction: f64, seed: u64, iteration: u64) -> Result<(Cohort, Reduction)> {
    check_fraction(fraction)?;
    let mut out = cohort.clone();
    let mut original = [0; 2];
    let mut retained: [Vec<String>; 2] = Default::default();
    for (slot, split) in [Split::Train, Split::Valid].into_iter().enumerate() {
        let seqs = out.split_mut(split);
        let candidates: Vec<usize> = (0..seqs.len()).filter(|&i| seqs[i].has_positive()).collect();
        let kept = keep_prefix(&candidates, fraction, ReductionKind::Prior, seed, iteration, split);
        if kept.is_empty() {
            return Err(Error::Data(format!(
                "prior reduction to {fraction} leaves no positive admissions in {split} (had {})",
                candidates.len()
            )));
        }
        for &i in &candidates {
            if kept.binary_search(&i).is_err() {
                mask_positives(&mut seqs[i]);
            }
        }
        original[slot] = candidates.len();
        retained[slot] = kept.iter().map(|&i| seqs[i].admission_id.clone()).collect();
    }
    Ok((
        out,
        Reduction {
            kind: ReductionKind::Prior,
            fraction,
            seed,
            iteration,
            original,
            retained,
        },
    ))
}

fn mask_positives(seq: &mut EncodedSequence) {
    for step in &mut seq.steps {
        if step.label {
            step.valid = false;
        }
    }
}

/// Keeps a uniform subset of train and valid admissions regardless of label.
pub fn reduce_samples(cohort: &Cohort, fraction: f64, seed: u64, iteration: u64) -> Result<(Cohort, Reduction)> {
    check_fraction(fraction)?;
    let mut out = cohort.clone();
    let mut original = [0; 2];
    let mut retained: [Vec<String>; 2] = Default::default();
    for (slot, split) in [Split::Train, Split::Valid].into_iter().enumerate() {
        let seqs = out.split_mut(split);
        let all: Vec<usize> = (0..seqs.len()).collect();
        let kept = keep_prefix(&all, fraction, ReductionKind::Samples, seed, iteration, split);
        let reduced: Vec<EncodedSequence> = kept.iter().map(|&i| seqs[i].clone()).collect();
        if !reduced.iter().any(|s| s.has_positive()) {
            return Err(Error::Data(format!(
                "sample reduction to {fraction} leaves no positive steps in {split} ({} of {} admissions kept)",
                reduced.len(),
                seqs.len()
            )));
        }
        original[slot] = seqs.len();
        retained[slot] = reduced.iter().map(|s| s.admission_id.clone()).collect();
        *seqs = reduced;
    }
    Ok((
        out,
        Reduction {
            kind: ReductionKind::Samples,
            fraction,
            seed,
            iteration,
            original,
            retained,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CohortMeta, ObservationSet, ObservationSpec, Step};

    fn seq(id: usize, positive: bool) -> EncodedSequence {
        EncodedSequence {
            admission_id: format!("a{id:04}"),
            steps: (0..3)
                .map(|k| Step {
                    time: k as f64 + 1.0,
                    input: vec![0.0, 1.0],
                    label: positive && k == 1,
                    gpsr: vec![0],
                    valid: true,
                })
                .collect(),
        }
    }

    /// `n` admissions per train/valid split, every `stride`-th positive.
    fn cohort(n: usize, stride: usize) -> Cohort {
        let meta = CohortMeta {
            id: "unit".into(),
            observations: ObservationSet::new(vec![ObservationSpec::new("a", 2, 0.0, 1.0).unwrap()]).unwrap(),
            interval: 1.0,
            horizon: 1.0,
        };
        let make = |base: usize| (0..n).map(|i| seq(base + i, i % stride == 0)).collect::<Vec<_>>();
        Cohort::new(meta, make(0), make(n), make(2 * n)).unwrap()
    }

    #[test]
    fn rounding_counts() {
        assert_eq!(retained_count(0.6, 100), 60);
        assert_eq!(retained_count(0.4, 1000), 400);
        assert_eq!(retained_count(0.2, 7), 1);
    }

    #[test]
    fn prior_reduction_keeps_sixty_of_hundred() {
        let c = cohort(500, 5);
        assert_eq!(c.stats(Split::Train).positives, 100);
        let (r, rec) = reduce_prior(&c, 0.6, 9, 0).unwrap();
        assert_eq!(r.stats(Split::Train).positives, 60);
        assert_eq!(rec.retained[0].len(), 60);
        assert_eq!(rec.original[0], 100);
        assert_eq!(r.test, c.test);
        // Excluded admissions keep their negative steps.
        assert_eq!(r.stats(Split::Train).negatives, c.stats(Split::Train).negatives);
        assert_eq!(r.train.len(), c.train.len());
    }

    #[test]
    fn full_fraction_is_identity() {
        let c = cohort(50, 4);
        assert_eq!(reduce_prior(&c, 1.0, 1, 3).unwrap().0, c);
        assert_eq!(reduce_samples(&c, 1.0, 1, 3).unwrap().0, c);
    }

    #[test]
    fn sample_reduction_counts() {
        let c = cohort(1000, 10);
        let (r, rec) = reduce_samples(&c, 0.4, 2, 1).unwrap();
        assert_eq!(r.train.len(), 400);
        assert_eq!(r.valid.len(), 400);
        assert_eq!(rec.retained[0].len(), 400);
        assert_eq!(r.test, c.test);
    }

    #[test]
    fn nested_and_deterministic() {
        let c = cohort(200, 3);
        for reduce in [reduce_prior, reduce_samples] {
            let mut prev: Option<Vec<String>> = None;
            for f in [0.2, 0.4, 0.6, 0.8, 1.0] {
                let (_, a) = reduce(&c, f, 4, 2).unwrap();
                let (_, b) = reduce(&c, f, 4, 2).unwrap();
                assert_eq!(a.retained, b.retained);
                if let Some(p) = prev {
                    assert!(p.iter().all(|id| a.retained[0].contains(id)));
                }
                prev = Some(a.retained[0].clone());
            }
            let (_, x) = reduce(&c, 0.5, 4, 2).unwrap();
            let (_, y) = reduce(&c, 0.5, 4, 3).unwrap();
            assert_ne!(x.retained, y.retained);
        }
    }

    #[test]
    fn rejects_bad_fraction_and_empty_result() {
        let c = cohort(10, 10);
        assert!(reduce_prior(&c, 0.0, 0, 0).is_err());
        assert!(reduce_prior(&c, 1.5, 0, 0).is_err());
        // One positive admission per split; 0.2 rounds to zero of it.
        assert!(reduce_prior(&c, 0.2, 0, 0).is_err());
    }
}
