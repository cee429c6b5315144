//! Command-line front end: `train`, `sample`, `evaluate`, `ablate`, `render`, `generate`.
//!
//! Exit codes: 0 on success, 2 for usage and configuration problems, 1 for
//! runtime failures.

mod commands;
mod config;
pub mod render;

pub use commands::{
    ablation_variants, build_evaluator, cmd_ablate, cmd_evaluate, cmd_generate, cmd_render, cmd_sample, cmd_train,
    AblationRow, AblationTable, SampleOutcome, SampleRequest, Sweep, TrainOutcome, Variant, ARCH_GRID, RATIO_GRID,
    TABLE_COLUMNS,
};
pub use config::{parse_override, DataConfig, Dataset, PathsConfig, RunConfig, DATA_DIR_ENV, PRESETS};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use render::{RenderOptions, View};

#[derive(Debug, Parser)]
#[command(name = "mmdm", about = "Text-to-motion diffusion with masked embeddings", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file layered over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base preset: micro, desk or paper.
    #[arg(long, global = true, default_value = "desk")]
    pub preset: String,
    /// Overrides `train.seed` and `eval.seed`; the sampling seed for `sample`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output location (run directory, file or frame directory depending on the command).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Extra `section.key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes checkpoints and `train_log.jsonl` to the run directory.
    Train {
        /// Continue from a checkpoint's weights, optimizer state and step.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides `train.total_steps`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate one motion clip for a caption.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        caption: String,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        guidance_scale: Option<f64>,
        #[arg(long)]
        inference_mask_ratio: Option<f64>,
    },
    /// Compute the metric suite for a checkpoint (or for the test split with `--real`).
    Evaluate {
        #[arg(long, required_unless_present = "real")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        real: bool,
        /// Overrides `eval.repeats`.
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value = "Model")]
        label: String,
    },
    /// Train and evaluate a grid of variants and tabulate the results.
    Ablate {
        #[arg(long, value_enum)]
        sweep: Sweep,
        /// Mask ratios for the ratio sweep.
        #[arg(long, value_delimiter = ',', default_values_t = RATIO_GRID)]
        ratios: Vec<f64>,
        /// `ENCxDEC` depths for the architecture sweep, e.g. `6x2,8x4`.
        #[arg(long, value_delimiter = ',', value_parser = parse_arch)]
        archs: Vec<(usize, usize)>,
    },
    /// Render a `.mmot` clip as one PPM image per frame.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = View::Front)]
        view: View,
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Only `ppm` is supported.
        #[arg(long, default_value = "ppm")]
        format: String,
    },
    /// Write the configured synthetic corpus as `train/` and `test/` directories.
    Generate,
}

fn parse_arch(s: &str) -> std::result::Result<(usize, usize), String> {
    let (e, d) = s.split_once('x').ok_or_else(|| format!("{s:?} is not ENCxDEC"))?;
    Ok((e.trim().parse().map_err(|e| format!("{e}"))?, d.trim().parse().map_err(|e| format!("{e}"))?))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::Incompatible(_) => 2,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<RunConfig, (i32, String)> {
    if let Some(path) = &common.config {
        if !path.is_file() {
            return Err((2, format!("config file not found: {}", path.display())));
        }
    }
    let mut run = RunConfig::load(&common.preset, common.config.as_deref(), &common.overrides)
        .map_err(|e| (2, e.to_string()))?;
    if let Some(seed) = common.seed {
        run.train.seed = seed;
        run.eval.seed = seed;
    }
    Ok(run)
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn execute(cli: Cli) -> Result<(), (i32, String)> {
    let common = &cli.common;
    let fail = |e: Error| (exit_code(&e), e.to_string());
    match cli.command {
        Command::Train { resume, steps } => {
            let mut run = load_config(common)?;
            if let Some(s) = steps {
                run.train.total_steps = s;
            }
            if let Some(out) = &common.out {
                run.paths.out = out.clone();
            }
            let outcome = cmd_train(&run, resume.as_deref()).map_err(fail)?;
            println!("trained {} steps; checkpoint {}", outcome.steps, outcome.checkpoint.display());
            if let Some(r) = outcome.last {
                println!(
                    "final loss: total {:.6} simple {:.6} pos {:.6} foot {:.6} vel {:.6}",
                    r.total, r.simple, r.pos, r.foot, r.vel
                );
            }
        }
        Command::Sample { checkpoint, caption, length, guidance_scale, inference_mask_ratio } => {
            let mut run = load_config(common)?;
            if let Some(g) = guidance_scale {
                run.sampling.guidance_scale = g;
            }
            if let Some(r) = inference_mask_ratio {
                run.sampling.inference_mask_ratio = r;
            }
            run.sampling.validate().map_err(fail)?;
            let req = SampleRequest {
                checkpoint,
                caption,
                length,
                seed: common.seed.unwrap_or(0),
                out: common.out.clone().unwrap_or_else(|| PathBuf::from("sample.mmot")),
            };
            let expected = common.config.as_ref().map(|_| &run.model);
            let outcome = cmd_sample(&run, &req, expected).map_err(fail)?;
            println!("{}", serde_json::to_string(&outcome).map_err(|e| (1, e.to_string()))?);
        }
        Command::Evaluate { checkpoint, real, repeats, label } => {
            let mut run = load_config(common)?;
            if let Some(r) = repeats {
                run.eval.repeats = r;
            }
            let target = if real { None } else { checkpoint.as_deref() };
            let report = cmd_evaluate(&run, target, &label).map_err(fail)?;
            let out = common.out.clone().unwrap_or_else(|| run.paths.out.join("report.json"));
            report.save(&out).map_err(fail)?;
            let ci = |m: &crate::evaluation::MetricSummary| m.ci95.map(|c| format!(" ± {c:.4}")).unwrap_or_default();
            println!("{} ({} repeats) written to {}", report.label, report.repeats, out.display());
            println!("  FID            {:.4}{}", report.fid.mean, ci(&report.fid));
            println!("  R-Precision@3  {:.4}{}", report.r_precision_top3.mean, ci(&report.r_precision_top3));
            println!("  MM-Dist        {:.4}{}", report.mm_dist.mean, ci(&report.mm_dist));
            println!("  Diversity      {:.4}{}", report.diversity.mean, ci(&report.diversity));
            if let Some(mm) = &report.multimodality {
                println!("  Multimodality  {:.4}{}", mm.mean, ci(mm));
            }
        }
        Command::Ablate { sweep, ratios, archs } => {
            let mut run = load_config(common)?;
            if let Some(out) = &common.out {
                run.paths.out = out.clone();
            }
            let archs = if archs.is_empty() { ARCH_GRID.to_vec() } else { archs };
            let variants = ablation_variants(&run, sweep, &ratios, &archs);
            let table = cmd_ablate(&run, sweep, &variants).map_err(fail)?;
            let (md, json) = table.save(&run.paths.out).map_err(fail)?;
            print!("{}", table.to_markdown());
            println!("tables written to {} and {}", md.display(), json.display());
        }
        Command::Render { input, view, size, format } => {
            if format != "ppm" {
                return Err((2, format!("unsupported image format {format:?}; only ppm is available")));
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("frames"));
            let paths = cmd_render(&input, &out, &RenderOptions { view, size }).map_err(fail)?;
            println!("wrote {} frames to {}", paths.len(), out.display());
        }
        Command::Generate => {
            let run = load_config(common)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("data"));
            let (train, test) = cmd_generate(&run, &out).map_err(fail)?;
            println!("wrote {train} training and {test} test clips to {}", out.display());
        }
    }
    Ok(())
}
