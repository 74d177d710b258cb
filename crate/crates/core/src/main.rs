use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use frostnet::checkpoint::load_checkpoint;
use frostnet::data::{self, SynthSpec};
use frostnet::experiment::{self, EvalReport, ExperimentConfig, LossMode, Preset, Weighting};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "frostnet", version, about = "Cost-sensitive 1D-CNN for imbalanced spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write report, checkpoint and test split
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = parse_mode)]
        loss_mode: Option<LossMode>,
    },
    /// Evaluate a checkpoint on a CSV dataset
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train all four loss modes for each seed
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated seeds
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Concurrent runs (defaults to the number of cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// KNN on the same split and standardization as a network run
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Write a synthetic dataset as CSV
    Synth {
        /// JSON synthetic spec
        #[arg(long)]
        synth: Option<PathBuf>,
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n0: Option<usize>,
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Output CSV file
        #[arg(long, default_value = "synth.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset (features then label)
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// JSON synthetic spec used instead of a CSV dataset
    #[arg(long)]
    synth: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_ratio: Option<f64>,
    /// Divisor in the fixed class factor
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<LossMode, String> {
    s.parse().map_err(|e: frostnet::Error| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: frostnet::Error| e.to_string())
}

fn load_synth(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl CommonArgs {
    /// Config file, then preset, then individual flags.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.apply_preset(p);
        }
        if let Some(p) = &self.synth {
            cfg.synth = load_synth(p)?;
            cfg.data = None;
        }
        if let Some(p) = &self.data {
            cfg.data = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(r) = self.max_ratio {
            cfg.max_ratio = r;
        }
        if let Some(c) = self.c {
            cfg.train.c = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, loss_mode } => {
            let mut cfg = common.config()?;
            if let Some(m) = loss_mode {
                cfg.loss_mode = m;
            }
            let dataset = cfg.load_dataset()?;
            let outcome = experiment::train_run(&cfg, &dataset, Weighting::Mode(cfg.loss_mode))?;
            experiment::write_train_outputs(&outcome, &common.out)?;
            print!("{}", experiment::render_report(&outcome.report));
        }
        Command::Eval {
            checkpoint,
            data: path,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let dataset = data::load_csv(&path)?;
            let metrics = experiment::eval_checkpoint(&ckpt, &dataset)?;
            let report = EvalReport {
                checkpoint,
                data: path,
                samples: dataset.len(),
                metrics,
            };
            match out {
                Some(dir) => experiment::write_eval(&report, &dir)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            let m = &report.metrics;
            eprintln!(
                "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
                m.accuracy, m.precision, m.recall, m.f1
            );
        }
        Command::Ablate { common, seeds, threads } => {
            let cfg = common.config()?;
            if seeds.is_empty() {
                bail!("--seeds needs at least one seed");
            }
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let dataset = cfg.load_dataset()?;
            let outcome = experiment::run_ablation(&cfg, &dataset, &seeds, threads)?;
            experiment::write_ablation(&outcome, &common.out)?;
            print!("{}", experiment::render_ablation(&outcome.table));
        }
        Command::Baseline { common, k } => {
            let mut cfg = common.config()?;
            if let Some(k) = k {
                cfg.knn_k = k;
            }
            let dataset = cfg.load_dataset()?;
            let report = experiment::baseline_run(&cfg, &dataset)?;
            experiment::write_report(&report, &common.out)?;
            print!("{}", experiment::render_report(&report));
        }
        Command::Synth {
            synth,
            preset,
            seed,
            n0,
            n1,
            noise,
            out,
        } => {
            let mut spec = match synth {
                Some(p) => load_synth(&p)?,
                None => SynthSpec::default(),
            };
            if let Some(p) = preset {
                let mut cfg = ExperimentConfig {
                    synth: spec,
                    ..ExperimentConfig::default()
                };
                cfg.apply_preset(p);
                spec = cfg.synth;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = n0 {
                spec.n_per_class[0] = n;
            }
            if let Some(n) = n1 {
                spec.n_per_class[1] = n;
            }
            if let Some(s) = noise {
                spec.noise_scale = s;
            }
            let dataset = data::synth_generate(&spec)?;
            data::save_csv(&dataset, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "wrote {} samples x {} bands to {}",
                dataset.len(),
                dataset.dim(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
