use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncodedSequence, ObservationSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Step-level counts of one split. Steps are the instances; masked steps are
/// not counted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub admissions: usize,
    pub positives: usize,
    pub negatives: usize,
    pub prior: f64,
}

impl SplitStats {
    pub fn of(seqs: &[EncodedSequence]) -> Self {
        let positives: usize = seqs.iter().map(|s| s.positives()).sum();
        let negatives: usize = seqs.iter().map(|s| s.negatives()).sum();
        let total = positives + negatives;
        SplitStats {
            admissions: seqs.len(),
            positives,
            negatives,
            prior: if total == 0 { 0.0 } else { positives as f64 / total as f64 },
        }
    }
}

/// Shared description of how a cohort's sequences were encoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortMeta {
    /// Provenance label carried into evaluation reports.
    pub id: String,
    pub observations: ObservationSet,
    /// Hours between prediction steps.
    pub interval: f64,
    /// Look-ahead of the target and GPSR tasks, in hours.
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub meta: CohortMeta,
    pub train: Vec<EncodedSequence>,
    pub valid: Vec<EncodedSequence>,
    pub test: Vec<EncodedSequence>,
}

const META_FILE: &str = "cohort.json";
const STATS_FILE: &str = "stats.csv";

impl Cohort {
    /// Builds a cohort after checking widths, time grids and split disjointness.
    pub fn new(meta: CohortMeta, train: Vec<EncodedSequence>, valid: Vec<EncodedSequence>, test: Vec<EncodedSequence>) -> Result<Self> {
        let cohort = Cohort { meta, train, valid, test };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.meta.observations.input_width();
        let tasks = self.meta.observations.task_layout().n_tasks();
        let mut seen = HashSet::new();
        for split in Split::ALL {
            for seq in self.split(split) {
                seq.validate(width, tasks)?;
                if !seen.insert(seq.admission_id.as_str()) {
                    return Err(Error::Data(format!(
                        "admission {} appears more than once across splits",
                        seq.admission_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> &[EncodedSequence] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<EncodedSequence> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn stats(&self, split: Split) -> SplitStats {
        SplitStats::of(self.split(split))
    }

    /// Statistics table with one row per split.
    pub fn stats_csv(&self) -> String {
        let mut out = String::from("split,adms,pos,neg,prior\n");
        for split in Split::ALL {
            let s = self.stats(split);
            out.push_str(&format!("{split},{},{},{},{}\n", s.admissions, s.positives, s.negatives, s.prior));
        }
        out
    }

    /// Human-readable form of [`Cohort::stats_csv`].
    pub fn stats_table(&self) -> String {
        let mut out = format!("{:<6} {:>7} {:>7} {:>9} {:>8}\n", "split", "Adms", "#Pos", "#Neg", "Prior");
        for split in Split::ALL {
            let s = self.stats(split);
            out.push_str(&format!(
                "{:<6} {:>7} {:>7} {:>9} {:>8.4}\n",
                split.name(),
                s.admissions,
                s.positives,
                s.negatives,
                s.prior
            ));
        }
        out
    }

    /// Writes `cohort.json`, one JSONL file per split and `stats.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        for split in Split::ALL {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("{split}.jsonl")))?);
            for seq in self.split(split) {
                serde_json::to_writer(&mut w, seq)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        fs::write(dir.join(STATS_FILE), self.stats_csv())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        if !meta_path.is_file() {
            return Err(Error::Data(format!(
                "{} is not a cohort archive (missing {META_FILE})",
                dir.display()
            )));
        }
        let meta: CohortMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
        let mut splits = Vec::with_capacity(3);
        for split in Split::ALL {
            let path = dir.join(format!("{split}.jsonl"));
            let reader = BufReader::new(fs::File::open(&path)?);
            let mut seqs = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let seq = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                    path: path.clone(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })?;
                seqs.push(seq);
            }
            splits.push(seqs);
        }
        let test = splits.pop().expect("three splits");
        let valid = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Cohort::new(meta, train, valid, test)
    }
}
