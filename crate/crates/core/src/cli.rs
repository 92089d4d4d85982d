//! Command-line surface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{aggregate, SegmentationReport, SliceOutcome};
use crate::image::BinaryMask;
use crate::io::{list_pgm, load_mask, load_stack, save_mask, save_slice, write_experiments, write_report};
use crate::phantom::{generate_phantom, PhantomParams};
use crate::pipeline::{run_experiments, segment_stack, PipelineConfig, PipelineMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_STRICT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sliceprop", version, about = "Propagate a first-slice segmentation through an image stack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment every slice after the first.
    Segment(SegmentArgs),
    /// Score a directory of predicted masks against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic stack with ground truth.
    Phantom(PhantomArgs),
    /// Run all three modes on one stack and summarize.
    Experiments(ExperimentsArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Trees per forest.
    #[arg(long, default_value_t = 50)]
    trees: usize,
    /// Minimum samples per leaf for both forests.
    #[arg(long = "min-leaf", default_value_t = 2)]
    min_leaf: usize,
    #[arg(long, env = "SLICEPROP_SEED", default_value_t = 0)]
    seed: u64,
    /// Exit with status 4 if the pipeline emitted warnings.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Directory of slice PGMs, ordered by file name.
    #[arg(long)]
    stack: PathBuf,
    /// Mask of the first slice.
    #[arg(long = "first-mask")]
    first_mask: PathBuf,
    /// basic, post or full.
    #[arg(long)]
    mode: PipelineMode,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth mask directory; enables the report.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Report path (default: OUT/report.json). Requires --gt.
    #[arg(long, requires = "gt")]
    report: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "SLICEPROP_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    slices: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
}

#[derive(Debug, Args)]
struct ExperimentsArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long = "first-mask")]
    first_mask: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Phantom(a) => phantom(a),
        Command::Experiments(a) => experiments(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidInput(_) => EXIT_USAGE,
                _ => EXIT_IO,
            }
        }
    }
}

fn config_for(mode: PipelineMode, m: &ModelArgs) -> Result<PipelineConfig> {
    let config = PipelineConfig::new(mode, m.seed).with_trees(m.trees).with_min_leaf(m.min_leaf);
    config.rf_params.validate()?;
    config.mf_params.validate()?;
    Ok(config)
}

fn load_truth(dir: &Path, expected: usize) -> Result<Vec<BinaryMask>> {
    let files = list_pgm(dir)?;
    if files.len() != expected {
        return Err(Error::Validation {
            path: dir.to_path_buf(),
            message: format!("{} ground-truth masks for {expected} slices", files.len()),
        });
    }
    files.iter().map(|f| load_mask(f)).collect()
}

fn mask_name(slice: usize) -> String {
    format!("lv_{slice:04}.pgm")
}

fn warnings_exit(strict: bool, warnings: &[String]) -> i32 {
    for w in warnings {
        log::warn!("{w}");
    }
    if strict && !warnings.is_empty() {
        eprintln!("{} pipeline warning(s) with --strict", warnings.len());
        EXIT_STRICT
    } else {
        EXIT_OK
    }
}

fn segment(a: SegmentArgs) -> Result<i32> {
    let stack = load_stack(&a.stack)?;
    let first = load_mask(&a.first_mask)?;
    let truth = a.gt.as_deref().map(|d| load_truth(d, stack.len())).transpose()?;
    let config = config_for(a.mode, &a.model)?;

    let started = Instant::now();
    let result = segment_stack(&stack, &first, &config)?;
    let secs = started.elapsed().as_secs_f64();

    fs::create_dir_all(&a.out)?;
    for (k, m) in result.masks.iter().enumerate().skip(1) {
        save_mask(m, &a.out.join(mask_name(k + 1)))?;
    }
    let warnings: Vec<String> = result
        .warnings
        .iter()
        .map(|w| format!("slice {}: {}", w.slice + 1, w.message))
        .collect();
    if let Some(truth) = truth {
        let report = SegmentationReport::from_result(&result, &truth, &config, secs)?;
        let path = a.report.unwrap_or_else(|| a.out.join("report.json"));
        write_report(&report, &path)?;
        println!(
            "mode {}: mean combined Dice {:.4} over {} slices",
            config.mode,
            report.overall_mean.combined,
            report.per_slice.len()
        );
    }
    Ok(warnings_exit(a.model.strict, &warnings))
}

fn eval(a: EvalArgs) -> Result<i32> {
    let gt_files = list_pgm(&a.gt)?;
    if gt_files.is_empty() {
        return Err(Error::Validation {
            path: a.gt.clone(),
            message: "no ground-truth masks".into(),
        });
    }
    let mut pairs = Vec::new();
    for (i, g) in gt_files.iter().enumerate() {
        let p = a.pred.join(g.file_name().expect("listed files have names"));
        if p.is_file() {
            pairs.push((i + 1, load_mask(&p)?, load_mask(g)?));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Validation {
            path: a.pred.clone(),
            message: "no prediction shares a file name with the ground truth".into(),
        });
    }
    let outcomes: Vec<SliceOutcome<'_>> = pairs
        .iter()
        .map(|(slice, pred, truth)| SliceOutcome {
            slice: *slice,
            truth,
            combined: pred,
            mf: None,
            rf: None,
        })
        .collect();
    let report = SegmentationReport::from_outcomes(&outcomes, None, 0.0, Vec::new())?;
    write_report(&report, &a.report)?;
    println!(
        "mean Dice {:.4} over {} slices",
        report.overall_mean.combined,
        report.per_slice.len()
    );
    Ok(EXIT_OK)
}

fn phantom(a: PhantomArgs) -> Result<i32> {
    let params = PhantomParams {
        seed: a.seed,
        n_slices: a.slices,
        size: a.size,
        ..PhantomParams::default()
    };
    let ph = generate_phantom(&params)?;
    let slices = a.out.join("slices");
    let gt = a.out.join("gt");
    fs::create_dir_all(&slices)?;
    fs::create_dir_all(&gt)?;
    for (k, (s, m)) in ph.stack.slices().iter().zip(&ph.truth).enumerate() {
        save_slice(s, &slices.join(format!("slice_{:04}.pgm", k + 1)))?;
        save_mask(m, &gt.join(mask_name(k + 1)))?;
    }
    save_mask(&ph.truth[0], &a.out.join("first_mask.pgm"))?;
    Ok(EXIT_OK)
}

fn experiments(a: ExperimentsArgs) -> Result<i32> {
    let stack = load_stack(&a.stack)?;
    let first = load_mask(&a.first_mask)?;
    let truth = load_truth(&a.gt, stack.len())?;
    let base = config_for(PipelineMode::Full, &a.model)?;

    let started = Instant::now();
    let runs = run_experiments(&stack, &first, &base)?;
    let secs = started.elapsed().as_secs_f64() / runs.len() as f64;

    let mut reports = Vec::with_capacity(runs.len());
    let mut warnings = Vec::new();
    for (config, result) in &runs {
        let r = SegmentationReport::from_result(result, &truth, config, secs)?;
        warnings.extend(r.warnings.iter().map(|w| format!("{}: {w}", config.mode)));
        reports.push(r);
    }
    let summary = aggregate(&reports)?;
    print!("{summary}");
    write_experiments(reports, summary, &a.report)?;
    Ok(warnings_exit(a.model.strict, &warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["sliceprop"]), EXIT_USAGE);
        assert_eq!(run(["sliceprop", "segment", "--stack", "s", "--mode", "basic", "--out", "o"]), EXIT_USAGE);
        assert_eq!(
            run(["sliceprop", "segment", "--stack", "s", "--first-mask", "m", "--mode", "sideways", "--out", "o"]),
            EXIT_USAGE
        );
        assert_eq!(run(["sliceprop", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_files_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("nope");
        let code = run([
            "sliceprop".as_ref(),
            "segment".as_ref(),
            "--stack".as_ref(),
            s.as_os_str(),
            "--first-mask".as_ref(),
            s.as_os_str(),
            "--mode".as_ref(),
            "basic".as_ref(),
            "--out".as_ref(),
            dir.path().as_os_str(),
        ]);
        assert_eq!(code, EXIT_IO);
    }
}
