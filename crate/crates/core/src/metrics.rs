//! Threshold-free ranking metrics with exact tie handling.
//!
//! AUPRC is average precision: the precision at each distinct score level,
//! weighted by the recall gained there. No interpolation between points.

use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPredictions {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape {
                op: "scored predictions",
                left: (scores.len(), 1),
                right: (labels.len(), 1),
            });
        }
        if scores.is_empty() {
            return Err(Error::invalid("scores", "at least one prediction is required"));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score {i}")));
        }
        Ok(ScoredPredictions { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn prior(&self) -> f64 {
        self.positives() as f64 / self.len() as f64
    }

    /// `(positives, negatives)` per distinct score, highest score first.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].partial_cmp(&self.scores[a]).unwrap_or(Ordering::Equal));
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut last = f64::NAN;
        for i in order {
            let s = self.scores[i];
            if groups.is_empty() || s != last {
                groups.push((0, 0));
                last = s;
            }
            let g = groups.last_mut().expect("pushed above");
            if self.labels[i] {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

/// Mann-Whitney AUROC: `(concordant + ties/2) / (P * N)`.
pub fn auroc(sp: &ScoredPredictions) -> Result<f64> {
    let (pos, neg) = (sp.positives(), sp.negatives());
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!(
            "AUROC needs both classes ({pos} positives, {neg} negatives)"
        )));
    }
    // Walk from the highest score down; every positive outranks the negatives
    // not yet seen and ties with those in its own group.
    let mut negatives_above = 0usize;
    let mut twice_concordant = 0u128;
    for (p, n) in sp.tie_groups() {
        let below = neg - negatives_above - n;
        twice_concordant += 2 * (p as u128) * (below as u128) + (p as u128) * (n as u128);
        negatives_above += n;
    }
    Ok(twice_concordant as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Average precision over tie groups.
pub fn auprc(sp: &ScoredPredictions) -> Result<f64> {
    let pos = sp.positives();
    if pos == 0 {
        return Err(Error::SingleClass("AUPRC needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    for (p, n) in sp.tie_groups() {
        tp += p;
        seen += p + n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::RngStream;
    use proptest::prelude::*;

    fn sp(scores: &[f64], labels: &[u8]) -> ScoredPredictions {
        ScoredPredictions::new(scores.to_vec(), labels.iter().map(|&l| l == 1).collect()).unwrap()
    }

    // Independent O(n^2) oracles.
    fn pairwise_auroc(s: &ScoredPredictions) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in s.scores().iter().enumerate() {
            for (j, &sj) in s.scores().iter().enumerate() {
                if s.labels()[i] && !s.labels()[j] {
                    den += 1.0;
                    if si > sj {
                        num += 1.0;
                    } else if si == sj {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    fn stepwise_ap(s: &ScoredPredictions) -> f64 {
        let mut thresholds: Vec<f64> = s.scores().to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let pos = s.positives() as f64;
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for t in thresholds {
            let sel: Vec<bool> = s
                .scores()
                .iter()
                .zip(s.labels())
                .filter(|(&x, _)| x >= t)
                .map(|(_, &l)| l)
                .collect();
            let tp = sel.iter().filter(|&&l| l).count() as f64;
            let recall = tp / pos;
            let precision = tp / sel.len() as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&sp(&[0.9, 0.6, 0.4], &[1, 1, 0])).unwrap(), 1.0);
        assert_eq!(auroc(&sp(&[0.3; 6], &[1, 0, 1, 0, 0, 0])).unwrap(), 0.5);
        let s = sp(&[0.8, 0.7, 0.6, 0.5], &[1, 0, 1, 0]);
        assert_eq!(pairwise_auroc(&s), 0.75);
        assert_eq!(auroc(&s).unwrap(), 0.75);
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&sp(&[0.9, 0.8, 0.1], &[1, 1, 0])).unwrap(), 1.0);
        let s = sp(&[0.9, 0.8, 0.1], &[1, 0, 1]);
        let expect = (1.0 + 2.0 / 3.0) / 2.0;
        assert!((stepwise_ap(&s) - expect).abs() < 1e-15);
        assert!((auprc(&s).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(auroc(&sp(&[0.1, 0.2], &[1, 1])), Err(Error::SingleClass(_))));
        assert!(matches!(auroc(&sp(&[0.1, 0.2], &[0, 0])), Err(Error::SingleClass(_))));
        assert!(matches!(auprc(&sp(&[0.1, 0.2], &[0, 0])), Err(Error::SingleClass(_))));
        assert!(auprc(&sp(&[0.1, 0.2], &[1, 1])).is_ok());
    }

    #[test]
    fn input_validation() {
        assert!(ScoredPredictions::new(vec![], vec![]).is_err());
        assert!(ScoredPredictions::new(vec![0.1], vec![true, false]).is_err());
        assert!(ScoredPredictions::new(vec![f64::NAN], vec![true]).is_err());
    }

    #[test]
    fn random_scores_give_prior_auprc() {
        // Mean AP of random rankings converges to the prior; 200 resamples.
        let mut rng = RngStream::new(5, 5);
        let n = 2000;
        let labels: Vec<bool> = (0..n).map(|i| i % 20 == 0).collect();
        let prior = 0.05;
        let vals: Vec<f64> = (0..200)
            .map(|_| {
                let scores: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
                auprc(&ScoredPredictions::new(scores, labels.clone()).unwrap()).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let se = (var / vals.len() as f64).sqrt();
        // Exact expectation for a uniformly random ranking of P positives among
        // N: a positive at rank r has expected precision (1 + (r-1)(P-1)/(N-1))/r,
        // so E[AP] = H_N/N + (P-1)/(N-1) (1 - H_N/N), which tends to the prior.
        let (nf, pf) = (n as f64, 100.0);
        let h_n: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        let expected = h_n / nf + (pf - 1.0) / (nf - 1.0) * (1.0 - h_n / nf);
        assert!((expected - prior).abs() < 0.1 * prior);
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean}, expected {expected}, se {se}");
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..=50).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..8).prop_map(|v| v as f64 / 8.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_brute_force_with_ties((scores, mut labels) in arb_instance()) {
            labels[0] = true;
            labels[1] = false;
            let s = ScoredPredictions::new(scores, labels).unwrap();
            prop_assert!((auroc(&s).unwrap() - pairwise_auroc(&s)).abs() <= 1e-12);
            prop_assert!((auprc(&s).unwrap() - stepwise_ap(&s)).abs() <= 1e-12);
        }

        #[test]
        fn monotone_transform_invariance((scores, mut labels) in arb_instance()) {
            labels[0] = true;
            labels[1] = false;
            let s = ScoredPredictions::new(scores.clone(), labels.clone()).unwrap();
            let t = ScoredPredictions::new(scores.iter().map(|v| (3.0 * v).exp() - 7.0).collect(), labels).unwrap();
            prop_assert_eq!(auroc(&s).unwrap().to_bits(), auroc(&t).unwrap().to_bits());
            prop_assert_eq!(auprc(&s).unwrap().to_bits(), auprc(&t).unwrap().to_bits());
        }

        #[test]
        fn label_complement((scores, mut labels) in arb_instance()) {
            labels[0] = true;
            labels[1] = false;
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let a = auroc(&ScoredPredictions::new(scores.clone(), labels).unwrap()).unwrap();
            let b = auroc(&ScoredPredictions::new(scores, flipped).unwrap()).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
        }
    }
}
