//! Command-line front end.

mod config;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{load_toml, resolve, ExperimentConfig, ModelConfig, SweepConfig};

use crate::data::{generate_synthetic_cohort, Cohort, Reduction, ReductionKind, Split, SyntheticConfig};
use crate::error::{Error, Result};
use crate::experiment::{
    curve, curve_csv, evaluate, find_reports, prepare_dir, read_report, run_prior_reduction_study, run_sample_reduction_study, summary_csv,
    sweep_loss_weight, train, train_two_phase, write_json, write_run_dir, EvalReport, Provenance, RunArtifacts, StudyRun, REPORT_FILE,
};
use crate::model::{ArchitectureConfig, Checkpoint};

#[derive(Debug, Parser)]
#[command(
    name = "gpsr",
    version,
    about = "Recurrent rare-event prediction with an auxiliary patient-state objective"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for independent runs and per-batch gradients.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Progress messages on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort archive.
    Generate(Common),
    /// Train one model and evaluate it on the test split.
    Train(Common),
    /// Re-score a run directory's checkpoint on one split of a cohort archive.
    Evaluate {
        /// Run directory written by train, sweep-p or an ablation.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train one model per loss weight and select by validation AUROC.
    SweepP(Common),
    /// Prior-reduction study over fractions and iterations.
    AblatePrior(Common),
    /// Sample-reduction study over fractions and iterations.
    AblateSamples(Common),
    /// Aggregate the reports below a directory into plot-ready tables.
    Report {
        /// Directory searched recursively for report.json files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write SVG line plots.
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        force: bool,
    },
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "valid" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split `{other}` (expected train, valid or test)")),
    }
}

struct Ctx {
    verbose: u8,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        // Only the first call per process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx { verbose: cli.verbose };
    match cli.command {
        Command::Generate(c) => cmd_generate(&ctx, &c),
        Command::Train(c) => cmd_train(&ctx, &c),
        Command::Evaluate {
            run,
            cohort,
            split,
            out,
            force,
        } => cmd_evaluate(&run, &cohort, split, &out, force),
        Command::SweepP(c) => cmd_sweep(&ctx, &c),
        Command::AblatePrior(c) => cmd_ablate(&ctx, &c, ReductionKind::Prior),
        Command::AblateSamples(c) => cmd_ablate(&ctx, &c, ReductionKind::Samples),
        Command::Report { input, out, svg, force } => cmd_report(&input, &out, svg, force),
    }
}

fn cmd_generate(ctx: &Ctx, c: &Common) -> Result<()> {
    let mut cfg: SyntheticConfig = load_toml(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    prepare_dir(&c.out, c.force)?;
    ctx.note(format!("generating cohort with seed {}", cfg.seed));
    let g = generate_synthetic_cohort(&cfg)?;
    g.cohort.save(&c.out)?;
    write_json(&c.out.join("generator.json"), &cfg)?;
    print!("{}", g.cohort.stats_table());
    Ok(())
}

/// Experiment config with the cohort path resolved and the seed applied.
fn load_experiment(c: &Common) -> Result<(ExperimentConfig, Cohort)> {
    let mut cfg: ExperimentConfig = load_toml(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.train.seed = seed;
        cfg.study.seed = seed;
    }
    cfg.validate()?;
    let cohort_dir = resolve(&c.config, &cfg.cohort);
    let cohort = Cohort::load(&cohort_dir)?;
    Ok((cfg, cohort))
}

#[derive(Serialize)]
struct RunSnapshot<'a> {
    command: &'a str,
    cohort: &'a str,
    experiment: &'a ExperimentConfig,
    architecture: &'a ArchitectureConfig,
    reduction: Option<&'a Reduction>,
}

fn cmd_train(ctx: &Ctx, c: &Common) -> Result<()> {
    let (cfg, cohort) = load_experiment(c)?;
    let arch = cfg.model.architecture(cfg.kind, &cohort)?;
    prepare_dir(&c.out, c.force)?;
    ctx.note(format!("training {} on {}", cfg.kind, cohort.meta.id));
    let (params, optimizer, histories, p) = if cfg.kind.is_two_phase() {
        let out = train_two_phase(&arch, &cohort, None, &cfg.train)?;
        (
            out.finetune.params,
            out.finetune.optimizer,
            vec![out.pretrain.history, out.finetune.history],
            1.0,
        )
    } else {
        let out = train(&arch, &cohort, &cfg.train)?;
        let p = crate::experiment::study_p(cfg.kind, cfg.train.p);
        (out.params, out.optimizer, vec![out.history], p)
    };
    let provenance = Provenance::unreduced(cohort.meta.id.clone(), cfg.kind, p, cfg.train.seed);
    let (report, scores) = evaluate(&params, &cohort.test, Split::Test, provenance)?;
    let snapshot = RunSnapshot {
        command: "train",
        cohort: &cohort.meta.id,
        experiment: &cfg,
        architecture: &arch,
        reduction: None,
    };
    write_run_dir(
        &c.out,
        &RunArtifacts {
            config: &snapshot,
            checkpoint: &Checkpoint::new(params, cfg.train.seed, Some(optimizer)),
            histories: &histories,
            report: &report,
            scores: &scores,
        },
    )?;
    print_report(&report);
    Ok(())
}

fn print_report(r: &EvalReport) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} p={} fraction={} iteration={}: AUROC {} AUPRC {} (prior {:.4})",
        r.provenance.kind,
        r.provenance.p,
        r.provenance.fraction,
        r.provenance.iteration,
        fmt(r.auroc),
        fmt(r.auprc),
        r.prior
    );
    if let Some(note) = &r.note {
        println!("  note: {note}");
    }
}

fn cmd_evaluate(run: &Path, cohort_dir: &Path, split: Split, out: &Path, force: bool) -> Result<()> {
    let ck = Checkpoint::load(&run.join("checkpoint.json"))?;
    let provenance = read_report(&run.join(REPORT_FILE))?.provenance;
    let cohort = Cohort::load(cohort_dir)?;
    prepare_dir(out, force)?;
    let (report, scores) = evaluate(&ck.params, cohort.split(split), split, provenance)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    fs::write(out.join("scores.csv"), scores.to_csv())?;
    print_report(&report);
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, c: &Common) -> Result<()> {
    let (cfg, cohort) = load_experiment(c)?;
    if cfg.kind.is_two_phase() {
        return Err(Error::invalid("kind", format!("{} has no loss weight to sweep", cfg.kind)));
    }
    let arch = cfg.model.architecture(cfg.kind, &cohort)?;
    prepare_dir(&c.out, c.force)?;
    ctx.note(format!("sweeping p over {:?}", cfg.sweep.grid));
    let result = sweep_loss_weight(&arch, &cohort, &cfg.sweep.grid, &cfg.train)?;
    for (row, outcome) in result.rows.iter().zip(&result.outcomes) {
        let provenance = Provenance::unreduced(cohort.meta.id.clone(), cfg.kind, row.p, cfg.train.seed);
        let (report, scores) = evaluate(&outcome.params, &cohort.test, Split::Test, provenance)?;
        let snapshot = RunSnapshot {
            command: "sweep-p",
            cohort: &cohort.meta.id,
            experiment: &cfg,
            architecture: &arch,
            reduction: None,
        };
        write_run_dir(
            &c.out.join(format!("p{}", row.p)),
            &RunArtifacts {
                config: &snapshot,
                checkpoint: &Checkpoint::new(outcome.params.clone(), cfg.train.seed, Some(outcome.optimizer.clone())),
                histories: std::slice::from_ref(&outcome.history),
                report: &report,
                scores: &scores,
            },
        )?;
    }
    fs::write(c.out.join("sweep.csv"), result.to_csv())?;
    print!("{}", result.to_csv());
    println!("best p = {}", result.best_p());
    Ok(())
}

fn cmd_ablate(ctx: &Ctx, c: &Common, kind: ReductionKind) -> Result<()> {
    let (cfg, cohort) = load_experiment(c)?;
    let arch = cfg.model.architecture(cfg.study.kinds[0], &cohort)?;
    prepare_dir(&c.out, c.force)?;
    ctx.note(format!(
        "{kind:?} study: {} kinds x {} fractions x {} iterations",
        cfg.study.kinds.len(),
        cfg.study.fractions.len(),
        cfg.study.iterations
    ));
    let runs: Vec<StudyRun> = match kind {
        ReductionKind::Prior => run_prior_reduction_study(&arch, &cohort, &cfg.study, &cfg.train)?,
        ReductionKind::Samples => run_sample_reduction_study(&arch, &cohort, &cfg.study, &cfg.train)?,
    };
    let command = match kind {
        ReductionKind::Prior => "ablate-prior",
        ReductionKind::Samples => "ablate-samples",
    };
    for run in &runs {
        let pv = &run.report.provenance;
        let dir = c
            .out
            .join(pv.kind.name())
            .join(format!("f{}", pv.fraction))
            .join(format!("i{}", pv.iteration));
        let run_arch = ArchitectureConfig {
            kind: pv.kind,
            ..arch.clone()
        };
        let snapshot = RunSnapshot {
            command,
            cohort: &cohort.meta.id,
            experiment: &cfg,
            architecture: &run_arch,
            reduction: Some(&run.reduction),
        };
        write_run_dir(
            &dir,
            &RunArtifacts {
                config: &snapshot,
                checkpoint: &Checkpoint::new(run.params.clone(), cfg.train.seed, None),
                histories: &run.histories,
                report: &run.report,
                scores: &run.scores,
            },
        )?;
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    fs::write(c.out.join("summary.csv"), summary_csv(&reports))?;
    let points = curve(&reports, |_| Some(command.to_string()), |r| r.provenance.fraction, |r| r.auprc);
    let table = curve_csv("fraction", &points);
    fs::write(c.out.join("auprc_vs_fraction.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn reduction_group(r: &EvalReport) -> Option<String> {
    r.provenance.reduction.map(|k| match k {
        ReductionKind::Prior => "prior".to_string(),
        ReductionKind::Samples => "samples".to_string(),
    })
}

fn cmd_report(input: &Path, out: &Path, svg: bool, force: bool) -> Result<()> {
    let found = if input.is_dir() { find_reports(input)? } else { Vec::new() };
    if found.is_empty() {
        return Err(Error::Data(format!("no reports found under {}", input.display())));
    }
    prepare_dir(out, force)?;
    let reports: Vec<EvalReport> = found.into_iter().map(|(_, r)| r).collect();
    fs::write(out.join("summary.csv"), summary_csv(&reports))?;

    let auprc_f = curve(&reports, reduction_group, |r| r.provenance.fraction, |r| r.auprc);
    let auroc_f = curve(&reports, reduction_group, |r| r.provenance.fraction, |r| r.auroc);
    let unreduced = |r: &EvalReport| r.provenance.reduction.is_none().then(|| "none".to_string());
    let auroc_p = curve(&reports, unreduced, |r| r.provenance.p, |r| r.auroc);
    let tables = [
        ("auprc_vs_fraction", "fraction", &auprc_f, "AUPRC"),
        ("auroc_vs_fraction", "fraction", &auroc_f, "AUROC"),
        ("auroc_vs_p", "p", &auroc_p, "AUROC"),
    ];
    for (name, x, points, metric) in tables {
        fs::write(out.join(format!("{name}.csv")), curve_csv(x, points))?;
        if svg && !points.is_empty() {
            fs::write(out.join(format!("{name}.svg")), svg::line_plot(points, x, metric))?;
        }
    }
    println!("aggregated {} reports into {}", reports.len(), out.display());
    Ok(())
}
