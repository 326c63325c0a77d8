use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EncodedSequence;
use crate::error::{Error, Result};
use crate::model::TaskLayout;

/// Discretization of one lab or vital sign against its normal range.
///
/// Class indices: `0` normal, `1` abnormal (two-class) or abnormal-low
/// (three-class), `2` abnormal-high.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub id: String,
    pub classes: u8,
    pub lo: f64,
    pub hi: f64,
    /// Whether the observation is also a GPSR forecasting task.
    #[serde(default = "yes")]
    pub task: bool,
}

fn yes() -> bool {
    true
}

pub const NORMAL: u16 = 0;

impl ObservationSpec {
    pub fn new(id: impl Into<String>, classes: u8, lo: f64, hi: f64) -> Result<Self> {
        let spec = ObservationSpec {
            id: id.into(),
            classes,
            lo,
            hi,
            task: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.classes == 2 || self.classes == 3) {
            return Err(Error::invalid(
                format!("observation {} classes", self.id),
                format!("must be 2 or 3, got {}", self.classes),
            ));
        }
        if self.lo.is_nan() || self.hi.is_nan() || self.lo >= self.hi {
            return Err(Error::invalid(
                format!("observation {} range", self.id),
                format!("lo ({}) must be below hi ({})", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    /// Class of a measured value; `None` for NaN.
    pub fn classify(&self, value: f64) -> Option<u16> {
        if value.is_nan() {
            return None;
        }
        Some(match self.classes {
            2 => u16::from(value < self.lo || value > self.hi),
            _ if value < self.lo => 1,
            _ if value > self.hi => 2,
            _ => NORMAL,
        })
    }
}

/// One-hot encoding; missing (or NaN) values encode as all zeros.
pub fn encode_observation(value: Option<f64>, spec: &ObservationSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.classes as usize];
    if let Some(c) = value.and_then(|v| spec.classify(v)) {
        out[c as usize] = 1.0;
    }
    out
}

/// Ordered input observations; the GPSR tasks are the subset flagged `task`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    specs: Vec<ObservationSpec>,
}

impl ObservationSet {
    pub fn new(specs: Vec<ObservationSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("observations", "at least one observation is required"));
        }
        let mut seen = HashMap::new();
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            if seen.insert(s.id.clone(), i).is_some() {
                return Err(Error::invalid("observations", format!("duplicate id {}", s.id)));
            }
        }
        if !specs.iter().any(|s| s.task) {
            return Err(Error::invalid("observations", "no observation is flagged as a GPSR task"));
        }
        Ok(ObservationSet { specs })
    }

    pub fn specs(&self) -> &[ObservationSpec] {
        &self.specs
    }

    pub fn input_width(&self) -> usize {
        self.specs.iter().map(|s| s.classes as usize).sum()
    }

    pub fn task_layout(&self) -> TaskLayout {
        TaskLayout::new(self.specs.iter().filter(|s| s.task).map(|s| s.classes as usize).collect()).expect("validated: at least one task")
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub observation: String,
    /// Hours from admission.
    pub time: f64,
    pub value: f64,
}

/// Inputs and GPSR targets of one admission, one entry per prediction time.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSteps {
    pub inputs: Vec<Vec<f64>>,
    pub gpsr: Vec<Vec<u16>>,
}

/// Last-value-carried-forward encoding.
///
/// The input at `t` uses the latest event at or before `t` (all zeros when
/// there is none). The GPSR target at `t` is the class of the latest event at
/// or before `t + horizon`, and the normal class when there is none.
pub fn lvcf_sequence(events: &[RawEvent], observations: &ObservationSet, times: &[f64], horizon: f64) -> Result<EncodedSteps> {
    let n_obs = observations.specs().len();
    let mut per_obs: Vec<Vec<(f64, u16)>> = vec![Vec::new(); n_obs];
    for ev in events {
        let idx = observations
            .index_of(&ev.observation)
            .ok_or_else(|| Error::Data(format!("unknown observation id `{}`", ev.observation)))?;
        if let Some(c) = observations.specs()[idx].classify(ev.value) {
            per_obs[idx].push((ev.time, c));
        }
    }
    // Stable sort keeps input order among events at the same time, so the
    // last one listed wins.
    for series in &mut per_obs {
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let latest = |series: &[(f64, u16)], t: f64| -> Option<u16> {
        let n = series.partition_point(|&(et, _)| et <= t);
        (n > 0).then(|| series[n - 1].1)
    };

    let width = observations.input_width();
    let mut inputs = Vec::with_capacity(times.len());
    let mut gpsr = Vec::with_capacity(times.len());
    for &t in times {
        let mut x = vec![0.0; width];
        let mut targets = Vec::new();
        let mut off = 0;
        for (spec, series) in observations.specs().iter().zip(&per_obs) {
            if let Some(c) = latest(series, t) {
                x[off + c as usize] = 1.0;
            }
            if spec.task {
                targets.push(latest(series, t + horizon).unwrap_or(NORMAL));
            }
            off += spec.classes as usize;
        }
        inputs.push(x);
        gpsr.push(targets);
    }
    Ok(EncodedSteps { inputs, gpsr })
}

/// Masks steps whose prediction time lies in `(e, e + holdout]` for any event
/// time `e`.
pub fn apply_holdout_mask(mut seq: EncodedSequence, event_times: &[f64], holdout: f64) -> EncodedSequence {
    if holdout <= 0.0 {
        return seq;
    }
    for step in &mut seq.steps {
        if event_times.iter().any(|&e| step.time > e && step.time <= e + holdout) {
            step.valid = false;
        }
    }
    seq
}
