use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedSequence, ReductionKind, Split};
use crate::error::{Error, Result};
use crate::metrics::{auprc, auroc, ScoredPredictions};
use crate::model::{score_sequence, ArchitectureKind, ModelParams};

/// Where a report's numbers came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub cohort: String,
    pub kind: ArchitectureKind,
    pub p: f64,
    pub seed: u64,
    pub reduction: Option<ReductionKind>,
    pub fraction: f64,
    pub iteration: u64,
}

impl Provenance {
    pub fn unreduced(cohort: impl Into<String>, kind: ArchitectureKind, p: f64, seed: u64) -> Self {
        Provenance {
            cohort: cohort.into(),
            kind,
            p,
            seed,
            reduction: None,
            fraction: 1.0,
            iteration: 0,
        }
    }
}

/// Pooled per-step scores and labels of the valid steps of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoreSet {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("score,label\n");
        for (s, l) in self.scores.iter().zip(&self.labels) {
            out.push_str(&format!("{s},{}\n", u8::from(*l)));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for rec in reader.deserialize::<(f64, u8)>() {
            let (s, l) = rec?;
            if l > 1 {
                return Err(Error::Data(format!("label must be 0 or 1, got {l}")));
            }
            scores.push(s);
            labels.push(l == 1);
        }
        Ok(ScoreSet { scores, labels })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub split: Split,
    pub steps: usize,
    pub positives: usize,
    pub prior: f64,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    /// Why a metric is missing.
    pub note: Option<String>,
}

impl EvalReport {
    /// Metrics of a score set; single-class sets omit the undefined metrics
    /// and say why.
    pub fn from_scores(provenance: Provenance, split: Split, set: &ScoreSet) -> Result<Self> {
        let sp = ScoredPredictions::new(set.scores.clone(), set.labels.clone())?;
        let (auroc, auprc, note) = match (auroc(&sp), auprc(&sp)) {
            (Ok(a), Ok(b)) => (Some(a), Some(b), None),
            (Err(Error::SingleClass(why)), pr) => (None, pr.ok(), Some(why)),
            (Err(e), _) => return Err(e),
            (Ok(a), Err(e)) => (Some(a), None, Some(e.to_string())),
        };
        Ok(EvalReport {
            provenance,
            split,
            steps: sp.len(),
            positives: sp.positives(),
            prior: sp.prior(),
            auroc,
            auprc,
            note,
        })
    }
}

pub fn score_split(params: &ModelParams, seqs: &[EncodedSequence]) -> Result<ScoreSet> {
    let per_seq = seqs
        .par_iter()
        .filter(|s| s.n_valid() > 0)
        .map(|s| score_sequence(s, params).map(|scores| (s, scores)))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (seq, sc) in per_seq {
        labels.extend(seq.valid_steps().map(|st| st.label));
        scores.extend(sc);
    }
    if scores.is_empty() {
        return Err(Error::Data("split has no valid steps to evaluate".into()));
    }
    Ok(ScoreSet { scores, labels })
}

/// Scores every valid step of `seqs` and computes pooled AUROC and AUPRC.
pub fn evaluate(params: &ModelParams, seqs: &[EncodedSequence], split: Split, provenance: Provenance) -> Result<(EvalReport, ScoreSet)> {
    let set = score_split(params, seqs)?;
    Ok((EvalReport::from_scores(provenance, split, &set)?, set))
}
