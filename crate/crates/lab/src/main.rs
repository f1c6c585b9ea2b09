use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcbnn::config::{Cell, RunConfig};
use qcbnn::error::{LabError, Result};
use qcbnn::formats::{self, DataFormat};
use qcbnn::{harness, report, OUT_ENV};
use qcbnn_core::data::{synth_generate, SynthSpec};
use qcbnn_core::train::ToyConfig;

#[derive(Parser)]
#[command(name = "qcbnn", version, about = "Hybrid quantum-classical Bayesian CNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (cell, seed) of the sweep and write per-run artifacts.
    Train(RunArgs),
    /// Evaluate a checkpoint on the configured test split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Draw weight samples from a checkpoint's generator.
    SampleWeights {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'n', long, default_value_t = 100)]
        count: usize,
    },
    /// Match a 1-D uniform prior with the classical generator, no data.
    ToyAdversarial {
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        lr_generator: f64,
        #[arg(long, default_value_t = 1e-2)]
        lr_discriminator: f64,
        /// Offset added to the generator's initial output biases.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        init_shift: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit figure CSVs and SVGs from a results directory.
    Report {
        /// Results directory; defaults to the output root.
        dir: Option<PathBuf>,
    },
    /// Convert a dataset between the binary container and CSV.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 28)]
        height: usize,
        #[arg(long, default_value_t = 28)]
        width: usize,
    },
    /// Write a synthetic blob-versus-stripes dataset.
    Synth {
        output: PathBuf,
        #[arg(short = 'n', long, default_value_t = 250)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 28)]
        height: usize,
        #[arg(long, default_value_t = 28)]
        width: usize,
        #[arg(long, default_value_t = 0.27)]
        imbalance: f64,
    },
}

/// Config file plus flag overrides; list flags take comma-separated values.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    reupload: Option<String>,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    ensemble: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Extra `key=value` settings, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        let flags = [
            ("arch", &self.arch),
            ("seed", &self.seed),
            ("layers", &self.layers),
            ("reupload", &self.reupload),
            ("generator", &self.generator),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("ensemble", &self.ensemble),
            ("epochs", &self.epochs),
            ("threads", &self.threads),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| LabError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Ok(out) = std::env::var(OUT_ENV) {
            cfg.out = PathBuf::from(out);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_root(explicit: Option<PathBuf>) -> PathBuf {
    std::env::var(OUT_ENV).map(PathBuf::from).ok().or(explicit).unwrap_or_else(|| RunConfig::default().out)
}

fn single_cell(cfg: &RunConfig) -> Result<(Cell, u64)> {
    let cells = cfg.cells()?;
    match (cells.as_slice(), cfg.seeds.as_slice()) {
        ([cell], [seed]) => Ok((cell.clone(), *seed)),
        _ => Err(LabError::Config(format!(
            "this command needs exactly one cell and one seed, got {} cells and {} seeds",
            cells.len(),
            cfg.seeds.len()
        ))),
    }
}

fn restore(cfg: &RunConfig, checkpoint: &Path) -> Result<(qcbnn_core::train::ModelState, u64)> {
    let (cell, seed) = single_cell(cfg)?;
    let model = harness::load_model(cfg, &cell, seed, cfg.data.height, cfg.data.width, checkpoint)?;
    Ok((model, seed))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            let outcome = harness::run_sweep(&cfg)?;
            println!("{} runs finished; summary at {}", outcome.runs.len(), cfg.out.join("summary.csv").display());
        }
        Command::Evaluate { run, checkpoint } => {
            let cfg = run.load()?;
            let (model, seed) = restore(&cfg, &checkpoint)?;
            let data = harness::prepare_data(&cfg.data)?;
            let test = data.test.ok_or_else(|| LabError::Config(String::from("no test split configured")))?;
            let report = harness::evaluate_model(&cfg, &model, seed, &test, &cfg.out)?;
            for (metric, subset, value) in report.rows() {
                println!("{metric:>18} {subset:>9} {}", harness::fmt_value(value));
            }
        }
        Command::SampleWeights { run, checkpoint, count } => {
            let cfg = run.load()?;
            let (model, seed) = restore(&cfg, &checkpoint)?;
            let path = cfg.out.join("weights.csv");
            let w = harness::sample_weights(&model, count, seed, &path)?;
            println!("{} weights from {count} passes written to {}", w.len(), path.display());
        }
        Command::ToyAdversarial { steps, seed, lr_generator, lr_discriminator, init_shift, out } => {
            let config = ToyConfig { steps, seed, lr_generator, lr_discriminator, init_shift, ..ToyConfig::default() };
            let dir = out_root(out);
            let r = harness::run_toy(&config, &dir)?;
            let reached = r.first_below(0.1).map_or_else(|| String::from("never"), |c| format!("step {}", c.step));
            println!("KS initial {:.4}, final {:.4}, below 0.1 at {reached}", r.initial_ks(), r.final_ks());
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| out_root(None));
            let outcome = report::run_report(&dir)?;
            for n in &outcome.notices {
                eprintln!("notice: {n}");
            }
            println!("{} report files written to {}", outcome.files.len(), dir.join("report").display());
        }
        Command::Convert { input, output, height, width } => {
            let data = formats::load_dataset(&input, DataFormat::from_path(&input), Some((height, width)))?;
            formats::save_dataset(&output, &data, DataFormat::from_path(&output))?;
            println!("{} samples of {}x{} written to {}", data.len(), data.height(), data.width(), output.display());
        }
        Command::Synth { output, samples, seed, height, width, imbalance } => {
            let spec = SynthSpec { n_samples: samples, seed, height, width, imbalance, ..SynthSpec::default() };
            let data = formats::quantize(&synth_generate(&spec)?)?;
            formats::save_dataset(&output, &data, DataFormat::from_path(&output))?;
            println!("{} samples written to {}", data.len(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
