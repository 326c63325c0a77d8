use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{train, TrainConfig, TrainOutcome};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::model::ArchitectureConfig;

/// `{0.0, 0.1, ..., 1.0}`.
pub fn default_p_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub valid_auroc: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub outcomes: Vec<TrainOutcome>,
    pub best: usize,
}

impl SweepResult {
    pub fn best_p(&self) -> f64 {
        self.rows[self.best].p
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,valid_auroc,best_epoch\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.p, r.valid_auroc, r.best_epoch));
        }
        out
    }
}

/// Index of the highest AUROC; equal values go to the larger `p`.
pub fn select_best(rows: &[SweepRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        if r.valid_auroc > b.valid_auroc || (r.valid_auroc == b.valid_auroc && r.p > b.p) {
            best = i;
        }
    }
    best
}

/// Trains one model per `p` with the same seed and keeps the best by
/// validation AUROC.
pub fn sweep_loss_weight(arch: &ArchitectureConfig, cohort: &Cohort, grid: &[f64], config: &TrainConfig) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "at least one loss weight is required"));
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid("grid", format!("loss weights must lie in [0, 1], got {p}")));
    }
    let outcomes = grid
        .par_iter()
        .map(|&p| train(arch, cohort, &config.with_p(p)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = grid
        .iter()
        .zip(&outcomes)
        .map(|(&p, o)| SweepRow {
            p,
            valid_auroc: o.history.best_valid_auroc().expect("AUROC selection records AUROC"),
            best_epoch: o.history.best_epoch,
        })
        .collect();
    let best = select_best(&rows);
    Ok(SweepResult { rows, outcomes, best })
}
