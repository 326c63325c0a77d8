//! Flat-file ingestion.
//!
//! Per split, three files with a header row:
//!
//! * events: `admission_id,observation_id,time_hours,value`
//! * labels: `admission_id,event_time_hours` (one row per target event)
//! * admissions (optional): `admission_id,duration_hours`
//!
//! Prediction times are `k * interval` for `k >= 1` up to the admission's
//! duration, inclusive. Without an admissions file the duration is the latest
//! event or label time of the admission. Step `t` is positive when a target
//! event lies in `(t, t + horizon]`.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{apply_holdout_mask, lvcf_sequence, Cohort, CohortMeta, EncodedSequence, ObservationSet, RawEvent, Step};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub events: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub admissions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortFiles {
    pub train: SplitFiles,
    pub valid: SplitFiles,
    pub test: SplitFiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: String,
    pub interval: f64,
    pub horizon: f64,
    /// Hours after each target event during which steps are masked.
    #[serde(default)]
    pub holdout: f64,
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("interval", self.interval), ("horizon", self.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.holdout >= 0.0 && self.holdout.is_finite()) {
            return Err(Error::invalid("holdout", format!("must be non-negative, got {}", self.holdout)));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct EventRow {
    admission_id: String,
    observation_id: String,
    time_hours: f64,
    value: f64,
}

#[derive(Deserialize)]
struct LabelRow {
    admission_id: String,
    event_time_hours: f64,
}

#[derive(Deserialize)]
struct AdmissionRow {
    admission_id: String,
    duration_hours: f64,
}

fn read_rows<T: DeserializeOwned>(path: &Path, check: impl Fn(&T) -> Option<String>) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let malformed = |line: u64, message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let rec = rec.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec.deserialize(Some(&headers)).map_err(|e| malformed(line, e.to_string()))?;
        if let Some(msg) = check(&row) {
            return Err(malformed(line, msg));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn time_check(t: f64) -> Option<String> {
    (!(t >= 0.0 && t.is_finite())).then(|| format!("time must be a non-negative number, got {t}"))
}

fn encode_split(files: &SplitFiles, observations: &ObservationSet, task: &TaskConfig) -> Result<Vec<EncodedSequence>> {
    let events: Vec<EventRow> = read_rows(&files.events, |r: &EventRow| time_check(r.time_hours))?;
    let labels: Vec<LabelRow> = read_rows(&files.labels, |r: &LabelRow| time_check(r.event_time_hours))?;
    let durations: Option<Vec<AdmissionRow>> = files
        .admissions
        .as_deref()
        .map(|p| read_rows(p, |r: &AdmissionRow| time_check(r.duration_hours)))
        .transpose()?;

    #[derive(Default)]
    struct Acc {
        events: Vec<RawEvent>,
        label_times: Vec<f64>,
        duration: f64,
    }
    let mut by_adm: BTreeMap<String, Acc> = BTreeMap::new();
    for r in events {
        let acc = by_adm.entry(r.admission_id).or_default();
        acc.duration = acc.duration.max(r.time_hours);
        acc.events.push(RawEvent {
            observation: r.observation_id,
            time: r.time_hours,
            value: r.value,
        });
    }
    for r in labels {
        let acc = by_adm.entry(r.admission_id).or_default();
        acc.duration = acc.duration.max(r.event_time_hours);
        acc.label_times.push(r.event_time_hours);
    }
    if let Some(rows) = durations {
        for acc in by_adm.values_mut() {
            acc.duration = 0.0;
        }
        for r in rows {
            by_adm.entry(r.admission_id).or_default().duration = r.duration_hours;
        }
    }

    let mut seqs = Vec::with_capacity(by_adm.len());
    for (id, acc) in by_adm {
        let n_steps = (acc.duration / task.interval + 1e-9).floor() as usize;
        if n_steps == 0 {
            continue;
        }
        let times: Vec<f64> = (1..=n_steps).map(|k| k as f64 * task.interval).collect();
        let enc =
            lvcf_sequence(&acc.events, observations, &times, task.horizon).map_err(|e| Error::Data(format!("admission {id}: {e}")))?;
        let steps = times
            .iter()
            .zip(enc.inputs)
            .zip(enc.gpsr)
            .map(|((&t, input), gpsr)| Step {
                time: t,
                input,
                label: acc.label_times.iter().any(|&e| e > t && e <= t + task.horizon),
                gpsr,
                valid: true,
            })
            .collect();
        let seq = EncodedSequence { admission_id: id, steps };
        seqs.push(apply_holdout_mask(seq, &acc.label_times, task.holdout));
    }
    Ok(seqs)
}

/// Builds a cohort from per-split CSV files.
pub fn load_cohort_csv(files: &CohortFiles, observations: &ObservationSet, task: &TaskConfig) -> Result<Cohort> {
    task.validate()?;
    let train = encode_split(&files.train, observations, task)?;
    let valid = encode_split(&files.valid, observations, task)?;
    let test = encode_split(&files.test, observations, task)?;
    let mut seen = HashSet::new();
    for seq in train.iter().chain(&valid).chain(&test) {
        if !seen.insert(seq.admission_id.clone()) {
            return Err(Error::Data(format!(
                "admission {} appears in more than one split",
                seq.admission_id
            )));
        }
    }
    let meta = CohortMeta {
        id: task.id.clone(),
        observations: observations.clone(),
        interval: task.interval,
        horizon: task.horizon,
    };
    Cohort::new(meta, train, valid, test)
}
