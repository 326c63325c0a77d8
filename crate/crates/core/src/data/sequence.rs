use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One prediction point of an admission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Prediction time in hours from admission.
    pub time: f64,
    /// Concatenated one-hot encodings of the input observations.
    pub input: Vec<f64>,
    pub label: bool,
    /// True class index per GPSR task at the look-ahead horizon.
    pub gpsr: Vec<u16>,
    /// Masked steps carry no label, no loss and no state update.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub admission_id: String,
    pub steps: Vec<Step>,
}

impl EncodedSequence {
    pub fn valid_steps(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.valid)
    }

    pub fn n_valid(&self) -> usize {
        self.valid_steps().count()
    }

    pub fn positives(&self) -> usize {
        self.valid_steps().filter(|s| s.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.valid_steps().filter(|s| !s.label).count()
    }

    pub fn has_positive(&self) -> bool {
        self.valid_steps().any(|s| s.label)
    }

    /// Checks increasing times with a fixed separation and uniform widths.
    pub fn validate(&self, input_width: usize, n_tasks: usize) -> Result<()> {
        let ctx = |msg: String| Error::Data(format!("admission {}: {msg}", self.admission_id));
        if self.steps.is_empty() {
            return Err(ctx("no steps".into()));
        }
        let gap = if self.steps.len() > 1 {
            self.steps[1].time - self.steps[0].time
        } else {
            1.0
        };
        if gap <= 0.0 {
            return Err(ctx("step times must be strictly increasing".into()));
        }
        for (k, s) in self.steps.iter().enumerate() {
            if s.input.len() != input_width {
                return Err(ctx(format!("step {k} input width {} != {input_width}", s.input.len())));
            }
            if s.gpsr.len() != n_tasks {
                return Err(ctx(format!("step {k} has {} GPSR targets, expected {n_tasks}", s.gpsr.len())));
            }
            if k > 0 {
                let d = s.time - self.steps[k - 1].time;
                if (d - gap).abs() > 1e-9 * gap.max(1.0) {
                    return Err(ctx(format!("step {k} breaks the fixed separation interval")));
                }
            }
        }
        Ok(())
    }
}
