//! Run directories and summary tables.
//!
//! A run directory holds
//!
//! ```text
//! config.json      everything needed to repeat the run
//! checkpoint.json  parameters and optimizer state
//! history.json     one RunHistory per training phase
//! report.json      EvalReport
//! scores.csv       score,label per evaluated step
//! ```
//!
//! Files carry no timestamps or host details, so a repeated run reproduces
//! them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::eval::{EvalReport, ScoreSet};
use super::train::RunHistory;
use crate::error::{Error, Result};
use crate::model::Checkpoint;

pub const REPORT_FILE: &str = "report.json";

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set, in
/// which case its contents are removed first.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        if !force {
            return Err(Error::Data(format!(
                "{} already exists and is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub struct RunArtifacts<'a, C: Serialize> {
    pub config: &'a C,
    pub checkpoint: &'a Checkpoint,
    pub histories: &'a [RunHistory],
    pub report: &'a EvalReport,
    pub scores: &'a ScoreSet,
}

pub fn write_run_dir<C: Serialize>(dir: &Path, run: &RunArtifacts<'_, C>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), run.config)?;
    run.checkpoint.save(&dir.join("checkpoint.json"))?;
    write_json(&dir.join("history.json"), &run.histories)?;
    write_json(&dir.join(REPORT_FILE), run.report)?;
    fs::write(dir.join("scores.csv"), run.scores.to_csv())?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Every `report.json` below `root`, in path order.
pub fn find_reports(root: &Path) -> Result<Vec<(PathBuf, EvalReport)>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == REPORT_FILE) {
                let report = read_report(&path)?;
                found.push((path, report));
            }
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per report keyed by kind, p, fraction and iteration.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("kind,p,reduction,fraction,iteration,seed,split,auroc,auprc,prior,steps,positives\n");
    for r in reports {
        let pv = &r.provenance;
        let reduction = pv
            .reduction
            .map(|k| format!("{k:?}").to_lowercase())
            .unwrap_or_else(|| "none".into());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            pv.kind,
            pv.p,
            reduction,
            pv.fraction,
            pv.iteration,
            pv.seed,
            r.split,
            opt(r.auroc),
            opt(r.auprc),
            r.prior,
            r.steps,
            r.positives
        ));
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Aggregated metric over the iterations of one (group, kind, x) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub group: String,
    pub kind: String,
    pub x: f64,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Mean test prior of the cell's reports.
    pub prior: f64,
}

/// Groups `reports` by (group, kind, x) and aggregates `metric`, skipping
/// reports where it is missing.
pub fn curve(
    reports: &[EvalReport],
    group: impl Fn(&EvalReport) -> Option<String>,
    x: impl Fn(&EvalReport) -> f64,
    metric: impl Fn(&EvalReport) -> Option<f64>,
) -> Vec<CurvePoint> {
    // (group, kind, x bits) -> (x, metric values, priors)
    type Cells = BTreeMap<(String, String, u64), (f64, Vec<f64>, Vec<f64>)>;
    let mut cells = Cells::new();
    for r in reports {
        let (Some(g), Some(m)) = (group(r), metric(r)) else {
            continue;
        };
        let xv = x(r);
        let entry = cells
            .entry((g, r.provenance.kind.to_string(), xv.to_bits()))
            .or_insert_with(|| (xv, Vec::new(), Vec::new()));
        entry.1.push(m);
        entry.2.push(r.prior);
    }
    let mut points: Vec<CurvePoint> = cells
        .into_iter()
        .map(|((group, kind, _), (x, vals, priors))| CurvePoint {
            group,
            kind,
            x,
            n: vals.len(),
            mean: mean(&vals),
            median: median(&vals),
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            prior: mean(&priors),
        })
        .collect();
    points.sort_by(|a, b| (&a.group, &a.kind).cmp(&(&b.group, &b.kind)).then(b.x.total_cmp(&a.x)));
    points
}

pub fn curve_csv(x_name: &str, points: &[CurvePoint]) -> String {
    let mut out = format!("group,kind,{x_name},n,mean,median,min,max,prior\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.group, p.kind, p.x, p.n, p.mean, p.median, p.min, p.max, p.prior
        ));
    }
    out
}
