use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalReport, Provenance, ScoreSet};
use super::train::{finetune, pretrain_embedding, train, RunHistory, TrainConfig, TrainOutcome};
use crate::data::{reduce_prior, reduce_samples, Cohort, Reduction, ReductionKind, Split};
use crate::error::{Error, Result};
use crate::model::{ArchitectureConfig, ArchitectureKind, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub kinds: Vec<ArchitectureKind>,
    pub fractions: Vec<f64>,
    pub iterations: u64,
    /// Loss weight shared by the single-phase GPSR kinds in every cell.
    pub p: f64,
    /// Seed of the reduction draws; model seeds come from the train config.
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            kinds: ArchitectureKind::ALL.to_vec(),
            fractions: vec![1.0, 0.8, 0.6, 0.4, 0.2],
            iterations: 7,
            p: 0.8,
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::invalid("kinds", "at least one architecture kind is required"));
        }
        if self.fractions.is_empty() {
            return Err(Error::invalid("fractions", "at least one fraction is required"));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::invalid("fractions", format!("fractions must lie in (0, 1], got {f}")));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid("p", format!("must lie in [0, 1], got {}", self.p)));
        }
        Ok(())
    }
}

/// Loss weight a kind is trained with in a study; Spv and the second phase of
/// the two-phase kinds use the target term only.
pub fn study_p(kind: ArchitectureKind, p: f64) -> f64 {
    if kind.has_gpsr_head() && !kind.is_two_phase() {
        p
    } else {
        1.0
    }
}

/// One trained and evaluated model of a study.
#[derive(Clone, Debug)]
pub struct StudyRun {
    pub reduction: Reduction,
    pub params: ModelParams,
    /// One history per training phase.
    pub histories: Vec<RunHistory>,
    pub report: EvalReport,
    pub scores: ScoreSet,
}

fn run_kind(
    kind: ArchitectureKind,
    arch: &ArchitectureConfig,
    reduced: &Cohort,
    pretrained: Option<&TrainOutcome>,
    config: &TrainConfig,
    p: f64,
) -> Result<(ModelParams, Vec<RunHistory>)> {
    if kind.is_two_phase() {
        let pre = pretrained.expect("pretrained when a two-phase kind is requested");
        let fine = finetune(kind, &pre.params, reduced, config)?;
        Ok((fine.params, vec![pre.history.clone(), fine.history]))
    } else {
        let out = train(&arch.with_kind(kind), reduced, &config.with_p(p))?;
        Ok((out.params, vec![out.history]))
    }
}

fn run_study(
    reduction: ReductionKind,
    arch: &ArchitectureConfig,
    cohort: &Cohort,
    study: &StudyConfig,
    config: &TrainConfig,
) -> Result<Vec<StudyRun>> {
    study.validate()?;
    config.validate()?;
    let needs_pretrain = study.kinds.iter().any(|k| k.is_two_phase());
    // Sample reduction never reduces the GPSR pretraining data.
    let shared_pretrain = match (reduction, needs_pretrain) {
        (ReductionKind::Samples, true) => Some(pretrain_embedding(arch, cohort, config)?),
        _ => None,
    };
    let cells: Vec<(f64, u64)> = study
        .fractions
        .iter()
        .flat_map(|&f| (0..study.iterations).map(move |it| (f, it)))
        .collect();
    let per_cell = cells
        .par_iter()
        .map(|&(fraction, iteration)| -> Result<Vec<StudyRun>> {
            let (reduced, record) = match reduction {
                ReductionKind::Prior => reduce_prior(cohort, fraction, study.seed, iteration)?,
                ReductionKind::Samples => reduce_samples(cohort, fraction, study.seed, iteration)?,
            };
            let own_pretrain = match (reduction, needs_pretrain) {
                (ReductionKind::Prior, true) => Some(pretrain_embedding(arch, &reduced, config)?),
                _ => None,
            };
            let pretrained = shared_pretrain.as_ref().or(own_pretrain.as_ref());
            let mut runs = Vec::with_capacity(study.kinds.len());
            for &kind in &study.kinds {
                let p = study_p(kind, study.p);
                let (params, histories) = run_kind(kind, arch, &reduced, pretrained, config, p)?;
                let provenance = Provenance {
                    cohort: cohort.meta.id.clone(),
                    kind,
                    p,
                    seed: config.seed,
                    reduction: Some(reduction),
                    fraction,
                    iteration,
                };
                let (report, scores) = evaluate(&params, &reduced.test, Split::Test, provenance)?;
                runs.push(StudyRun {
                    reduction: record.clone(),
                    params,
                    histories,
                    report,
                    scores,
                });
            }
            Ok(runs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Trains every kind on each (fraction, iteration) prior-reduced cohort and
/// evaluates on the untouched test split.
pub fn run_prior_reduction_study(
    arch: &ArchitectureConfig,
    cohort: &Cohort,
    study: &StudyConfig,
    config: &TrainConfig,
) -> Result<Vec<StudyRun>> {
    run_study(ReductionKind::Prior, arch, cohort, study, config)
}

/// As [`run_prior_reduction_study`] with sample reduction; the two-phase kinds
/// pretrain once on the full train split.
pub fn run_sample_reduction_study(
    arch: &ArchitectureConfig,
    cohort: &Cohort,
    study: &StudyConfig,
    config: &TrainConfig,
) -> Result<Vec<StudyRun>> {
    run_study(ReductionKind::Samples, arch, cohort, study, config)
}
