use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, EncodedSequence, Split};
use crate::error::{Error, Result};
use crate::metrics::{auroc, ScoredPredictions};
use crate::model::{
    backward_sequence, build_architecture, forward_sequence, ArchitectureConfig, ArchitectureKind, BlockGroup, Mode, ModelParams,
};
use crate::numkernel::{Purpose, RngStream};
use crate::optim::{AdamW, AdamWState, OptimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Minimum validation-loss decrease that counts as improvement when the
    /// stopping criterion is the validation loss.
    pub loss_tolerance: f64,
    /// Weight of the target term in the combined loss.
    pub p: f64,
    pub optim: OptimConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            loss_tolerance: 1e-4,
            p: 0.8,
            optim: OptimConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience", "must be at least 1"));
        }
        if !(self.loss_tolerance >= 0.0 && self.loss_tolerance.is_finite()) {
            return Err(Error::invalid(
                "loss_tolerance",
                format!("must be non-negative, got {}", self.loss_tolerance),
            ));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid("p", format!("must lie in [0, 1], got {}", self.p)));
        }
        self.optim.validate()
    }

    pub fn with_p(&self, p: f64) -> Self {
        TrainConfig { p, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// Keep the epoch with the highest validation AUROC.
    ValidAuroc,
    /// Keep the epoch with the lowest validation loss; improvements below the
    /// tolerance do not reset patience.
    ValidLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Patience-based stopping rule over one scalar per epoch.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    criterion: StopCriterion,
    patience: usize,
    tolerance: f64,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(criterion: StopCriterion, patience: usize, tolerance: f64) -> Self {
        EarlyStopper {
            criterion,
            patience: patience.max(1),
            tolerance,
            best: None,
            stale: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records one epoch's value.
    pub fn observe(&mut self, value: f64) -> Verdict {
        let improved = match (self.best, self.criterion) {
            (None, _) => true,
            (Some(b), StopCriterion::ValidAuroc) => value > b,
            (Some(b), StopCriterion::ValidLoss) => b - value > self.tolerance,
        };
        if improved {
            self.best = Some(value);
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub criterion: StopCriterion,
    pub p: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stop: StopReason,
}

impl RunHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn best_valid_auroc(&self) -> Option<f64> {
        self.best().valid_auroc
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: RunHistory,
    /// Optimizer state at the kept epoch.
    pub optimizer: AdamWState,
}

/// Options that differ between single-phase and phased training.
#[derive(Clone, Debug)]
pub(crate) struct Phase<'a> {
    pub criterion: StopCriterion,
    pub trainable: Option<&'a [BlockGroup]>,
    /// Separates the shuffle and dropout streams of different phases.
    pub tag: u64,
}

impl Phase<'_> {
    pub(crate) fn supervised() -> Self {
        Phase {
            criterion: StopCriterion::ValidAuroc,
            trainable: None,
            tag: 0,
        }
    }
}

/// Validation loss (eval mode) and AUROC of pooled step scores.
pub(crate) fn validate_split(params: &ModelParams, seqs: &[EncodedSequence], p: f64, with_auroc: bool) -> Result<(f64, Option<f64>)> {
    let outs = seqs
        .par_iter()
        .filter(|s| s.n_valid() > 0)
        .map(|s| forward_sequence(s, params, p, Mode::Eval).map(|f| (s, f)))
        .collect::<Result<Vec<_>>>()?;
    if outs.is_empty() {
        return Err(Error::Data("validation split has no valid steps".into()));
    }
    let loss = outs.iter().map(|(_, f)| f.loss).sum::<f64>() / outs.len() as f64;
    if !with_auroc {
        return Ok((loss, None));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (seq, f) in &outs {
        for o in &f.outputs {
            scores.push(o.y_hat);
            labels.push(seq.steps[o.step].label);
        }
    }
    Ok((loss, Some(auroc(&ScoredPredictions::new(scores, labels)?)?)))
}

fn check_cohort(cohort: &Cohort, needs_both_classes: bool) -> Result<()> {
    if !cohort.train.iter().any(|s| s.n_valid() > 0) {
        return Err(Error::Data("train split has no valid steps".into()));
    }
    let v = cohort.stats(Split::Valid);
    if v.positives + v.negatives == 0 {
        return Err(Error::Data("valid split has no valid steps".into()));
    }
    if needs_both_classes && (v.positives == 0 || v.negatives == 0) {
        return Err(Error::SingleClass(format!(
            "valid split has {} positive and {} negative steps; model selection needs both",
            v.positives, v.negatives
        )));
    }
    Ok(())
}

/// Mini-batch AdamW from `params` on `cohort.train`, selecting the epoch by
/// `phase.criterion` on `cohort.valid`.
pub(crate) fn fit(mut params: ModelParams, cohort: &Cohort, config: &TrainConfig, phase: &Phase<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    let with_auroc = phase.criterion == StopCriterion::ValidAuroc;
    check_cohort(cohort, with_auroc)?;
    let train: Vec<(usize, &EncodedSequence)> = cohort.train.iter().enumerate().filter(|(_, s)| s.n_valid() > 0).collect();

    let mut opt = AdamW::new(config.optim.clone(), &params);
    let mut stopper = EarlyStopper::new(phase.criterion, config.patience, config.loss_tolerance);
    let mut epochs = Vec::new();
    let mut best = (params.clone(), opt.state().clone(), 0usize);
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let e = epoch as u64;
        let order = RngStream::for_purpose(config.seed, Purpose::Shuffle, &[phase.tag, e]).permutation(train.len());
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&k| {
                    let (idx, seq) = train[k];
                    let mut rng = RngStream::for_purpose(config.seed, Purpose::Dropout, &[phase.tag, e, idx as u64]);
                    backward_sequence(seq, &params, config.p, Mode::Train(&mut rng))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = params.zeros_like();
            for (loss, g) in &results {
                loss_sum += loss;
                grads.add_assign(g)?;
            }
            grads.scale_assign(1.0 / results.len() as f64);
            opt.step(&mut params, &grads, phase.trainable)?;
        }
        if let Some(block) = params.first_non_finite() {
            return Err(Error::NonFinite(format!("parameters of block {block} after epoch {epoch}")));
        }
        let (valid_loss, valid_auroc) = validate_split(&params, &cohort.valid, config.p, with_auroc)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            valid_loss,
            valid_auroc,
        });
        let value = valid_auroc.unwrap_or(valid_loss);
        match stopper.observe(value) {
            Verdict::Improved => best = (params.clone(), opt.state().clone(), epoch),
            Verdict::Continue => {}
            Verdict::Stop => {
                stop = StopReason::Patience;
                break;
            }
        }
    }
    let (params, optimizer, best_epoch) = best;
    Ok(TrainOutcome {
        params,
        optimizer,
        history: RunHistory {
            criterion: phase.criterion,
            p: config.p,
            epochs,
            best_epoch,
            stop,
        },
    })
}

/// Trains a single-phase kind end to end with validation-AUROC selection.
pub fn train(arch: &ArchitectureConfig, cohort: &Cohort, config: &TrainConfig) -> Result<TrainOutcome> {
    if arch.kind.is_two_phase() {
        return Err(Error::invalid("kind", format!("{} is trained with train_two_phase", arch.kind)));
    }
    arch.validate()?;
    let params = build_architecture(arch, config.seed)?;
    fit(params, cohort, config, &Phase::supervised())
}

const PRETRAIN_GROUPS: &[BlockGroup] = &[BlockGroup::Lstm, BlockGroup::Embedding, BlockGroup::GpsrHead];
const EMBEDDING_FINETUNE: &[BlockGroup] = &[BlockGroup::TargetHead];
const RESIDUAL_FINETUNE: &[BlockGroup] = &[BlockGroup::TargetHead, BlockGroup::Residual, BlockGroup::Embedding];

/// Phase 1 of the two-phase kinds: the GPSR objective alone (`p = 0`) on an
/// Embedding-kind model, selected by validation-loss tolerance.
pub fn pretrain_embedding(arch: &ArchitectureConfig, cohort: &Cohort, config: &TrainConfig) -> Result<TrainOutcome> {
    let arch = arch.with_kind(ArchitectureKind::Embedding);
    arch.validate()?;
    let params = build_architecture(&arch, config.seed)?;
    let phase = Phase {
        criterion: StopCriterion::ValidLoss,
        trainable: Some(PRETRAIN_GROUPS),
        tag: 1,
    };
    fit(params, cohort, &config.with_p(0.0), &phase)
}

/// Phase 2: supervised training (`p = 1`) on top of a pretrained embedding.
///
/// Embedding updates the target layer only. Residual starts from the
/// pretrained blocks plus a fresh residual path and also updates the
/// embedding layer; the LSTM stays frozen in both.
pub fn finetune(kind: ArchitectureKind, pretrained: &ModelParams, cohort: &Cohort, config: &TrainConfig) -> Result<TrainOutcome> {
    let (params, groups) = match kind {
        ArchitectureKind::Embedding => (pretrained.clone(), EMBEDDING_FINETUNE),
        ArchitectureKind::Residual => {
            let arch = pretrained.config.with_kind(ArchitectureKind::Residual);
            let mut params = build_architecture(&arch, config.seed)?;
            params.lstm = pretrained.lstm.clone();
            params.embedding = pretrained.embedding.clone();
            params.target_head = pretrained.target_head.clone();
            params.gpsr_head = pretrained.gpsr_head.clone();
            (params, RESIDUAL_FINETUNE)
        }
        other => return Err(Error::invalid("kind", format!("{other} has no second phase"))),
    };
    let phase = Phase {
        criterion: StopCriterion::ValidAuroc,
        trainable: Some(groups),
        tag: 2,
    };
    fit(params, cohort, &config.with_p(1.0), &phase)
}

#[derive(Clone, Debug)]
pub struct TwoPhaseOutcome {
    pub pretrain: TrainOutcome,
    pub finetune: TrainOutcome,
}

/// Both phases on one cohort, or phase 1 on `pretrain_cohort` when given.
pub fn train_two_phase(
    arch: &ArchitectureConfig,
    cohort: &Cohort,
    pretrain_cohort: Option<&Cohort>,
    config: &TrainConfig,
) -> Result<TwoPhaseOutcome> {
    if !arch.kind.is_two_phase() {
        return Err(Error::invalid("kind", format!("{} is trained in a single phase", arch.kind)));
    }
    let pretrain = pretrain_embedding(arch, pretrain_cohort.unwrap_or(cohort), config)?;
    let finetune = finetune(arch.kind, &pretrain.params, cohort, config)?;
    Ok(TwoPhaseOutcome { pretrain, finetune })
}
