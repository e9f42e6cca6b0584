//! `orgsynth`: decompose labeled scans, collect relation statistics, sample
//! target graphs, synthesize scenes and validate them.
//!
//! Exit status is 0 on success, 1 when a batch partly fails and 2 on bad
//! input or configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use orgsynth::decompose::{save_repository, CategoryTaxonomy};
use orgsynth::org::Anchors;
use orgsynth::pipeline::{
    count_for_ratio, decompose_dataset, open_repository, parse_boost, repository_stats, save_report, synthesize_batch,
    validate_dir, write_sampled_graphs, PipelineConfig, PipelineError,
};
use orgsynth::relations::RelationStats;

#[derive(Parser)]
#[command(name = "orgsynth", version, about = "Graph-guided point-cloud scene synthesis")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `optimizer.max_iters=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Base seed, overriding the config.
    #[arg(long, global = true, env = "ORGSYNTH_SEED")]
    seed: Option<u64>,
    /// More logging; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Split labeled PLY scenes into an instance repository.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        /// Taxonomy JSON; defaults to the config's manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip boundary completion of floors and walls.
        #[arg(long)]
        no_complete: bool,
    },
    /// Collect relation statistics from a repository.
    Stats {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample target graphs from statistics.
    SampleGraph {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Multiply a category's mean count, e.g. `picture=3`.
        #[arg(long = "gt-boost", value_name = "NAME=FACTOR")]
        gt_boost: Vec<String>,
    },
    /// Synthesize scenes with sidecars and a batch summary.
    Synthesize {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "ratio")]
        count: Option<usize>,
        /// Scenes per source scene; defaults to the config's augmentation ratio.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long = "gt-boost", value_name = "NAME=FACTOR")]
        gt_boost: Vec<String>,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Check synthesized scenes against their sidecars.
    Validate {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let base = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut cfg = base.with_overrides(&common.sets)?;
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    Ok(cfg)
}

fn taxonomy(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<CategoryTaxonomy, PipelineError> {
    let path = flag
        .as_ref()
        .or(cfg.manifest.as_ref())
        .ok_or_else(|| PipelineError::Config("no taxonomy: pass --manifest or set manifest".into()))?;
    Ok(CategoryTaxonomy::load(path)?)
}

fn boost(cfg: &mut PipelineConfig, taxonomy: &CategoryTaxonomy, flags: &[String]) -> Result<(), PipelineError> {
    for f in flags {
        let (name, factor) = parse_boost(f)?;
        cfg.boost(taxonomy, &name, factor)?;
    }
    Ok(())
}

fn load_stats(path: &Path) -> Result<RelationStats, PipelineError> {
    Ok(RelationStats::load(path)?)
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    let mut cfg = config(&cli.common)?;
    match cli.command {
        Command::Decompose {
            input,
            manifest,
            out,
            no_complete,
        } => {
            let t = taxonomy(&manifest, &cfg)?;
            let completion = (!no_complete).then_some(&cfg.completion);
            let (repo, counts) = decompose_dataset(&input, &t, completion, cfg.base_seed)?;
            save_repository(&repo, &out)?;
            for c in &counts {
                println!(
                    "{}\tfloor {}\tbackground {}\tforeground {}\tcompleted {}",
                    c.scene, c.floors, c.backgrounds, c.foregrounds, c.completed_points
                );
            }
            println!("{} instances from {} scenes", repo.len(), counts.len());
        }
        Command::Stats { repo, out } => {
            let stats = repository_stats(&open_repository(&repo)?, &cfg.thresholds)?;
            stats.save(&out)?;
            info!("{} scenes, {} pairs", stats.scene_count, stats.pairs.len());
        }
        Command::SampleGraph {
            stats,
            manifest,
            count,
            out,
            gt_boost,
        } => {
            let t = taxonomy(&manifest, &cfg)?;
            boost(&mut cfg, &t, &gt_boost)?;
            cfg.sampling.rng_seed = cfg.base_seed;
            let graphs = write_sampled_graphs(&load_stats(&stats)?, &Anchors::from_taxonomy(&t), &cfg.sampling, count, &out)?;
            println!("{} graphs written", graphs.len());
        }
        Command::Synthesize {
            repo,
            stats,
            out,
            count,
            ratio,
            gt_boost,
            jobs,
        } => {
            let repo = open_repository(&repo)?;
            let stats = load_stats(&stats)?;
            if let Some(r) = ratio {
                cfg.augmentation_ratio = r;
                cfg.validate()?;
            }
            boost(&mut cfg, &repo.taxonomy, &gt_boost)?;
            let count = count.unwrap_or_else(|| count_for_ratio(cfg.augmentation_ratio, repo.scene_names().len()));
            let summary = synthesize_batch(&repo, &stats, &cfg, count, jobs, &out)?;
            println!(
                "{} of {} scenes written, {} failed, {} not converged, mean loss {:.4e}",
                summary.written, summary.requested, summary.failed, summary.not_converged, summary.mean_loss.total
            );
            if summary.failed_batch() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Validate { scenes, out } => {
            let report = validate_dir(&scenes, &cfg.thresholds, &cfg.weights)?;
            save_report(&report, &out)?;
            let js = report.js_divergence.map_or("n/a".into(), |j| format!("{j:.4}"));
            println!(
                "{} scenes, {} inconsistent, category JS divergence {js}",
                report.scenes.len(),
                report.mismatched_scenes
            );
            if !report.all_consistent() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("orgsynth: {e}");
            ExitCode::from(2)
        }
    }
}
