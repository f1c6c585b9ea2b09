//! Seeded sweeps: every (cell, seed) run trains in its own directory, then
//! a summary aggregates the final metrics across seeds.
//!
//! Layout under the output root:
//!
//! ```text
//! config.txt
//! summary.csv                     cell,metric,subset,n_seeds,mean,std
//! cells/<cell>/seed_<k>/
//!     epochs.csv                  epoch,split,likelihood,kl_term,discriminator,combined,accuracy
//!     eval.csv                    metric,subset,value
//!     predictions.csv             index,label,predicted,p0,p1,confidence,ensemble_fraction
//!     calibration.csv             bin,lower,upper,count,mean_confidence,accuracy
//!     weights.csv                 pass_index,chunk,qubit,value
//!     checkpoint.qbnn
//!     INCOMPLETE                  present only while running or after a failure
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use qcbnn_core::data::{normalize, split, synth_generate, Dataset, Split, SynthSpec};
use qcbnn_core::metrics::{mean_std, EvalReport};
use qcbnn_core::train::{
    draw_ensemble, image_refs, predict_with_samples, toy_adversarial, train_with, EnsemblePrediction, EpochRecord, ModelState,
    ToyConfig, ToyReport,
};
use qcbnn_core::Error as CoreError;

use crate::config::{Cell, DataConfig, DataSource, RunConfig};
use crate::error::{LabError, Result};
use crate::formats::{self, DataFormat};

/// Evaluation round of the final ensemble; per-epoch rounds count up from 1.
pub const FINAL_ROUND: u64 = 0xFFFF_FFFF;

pub const EPOCHS_HEADER: [&str; 7] = ["epoch", "split", "likelihood", "kl_term", "discriminator", "combined", "accuracy"];
pub const EVAL_HEADER: [&str; 3] = ["metric", "subset", "value"];
pub const PREDICTIONS_HEADER: [&str; 7] = ["index", "label", "predicted", "p0", "p1", "confidence", "ensemble_fraction"];
pub const CALIBRATION_HEADER: [&str; 6] = ["bin", "lower", "upper", "count", "mean_confidence", "accuracy"];
pub const WEIGHTS_HEADER: [&str; 4] = ["pass_index", "chunk", "qubit", "value"];
pub const SUMMARY_HEADER: [&str; 6] = ["cell", "metric", "subset", "n_seeds", "mean", "std"];
pub const INCOMPLETE: &str = "INCOMPLETE";

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Option<Dataset>,
}

/// Loads or synthesizes the data, normalizes it and splits it.
pub fn prepare_data(cfg: &DataConfig) -> Result<Splits> {
    match &cfg.source {
        DataSource::Synth => {
            let make = |n: usize, offset: u64| -> Result<Option<Dataset>> {
                if n == 0 {
                    return Ok(None);
                }
                let spec = SynthSpec {
                    n_samples: n,
                    height: cfg.height,
                    width: cfg.width,
                    imbalance: cfg.imbalance,
                    noise_std: cfg.pixel_noise,
                    seed: cfg.seed.wrapping_add(offset),
                    ..SynthSpec::default()
                };
                Ok(Some(normalize(&synth_generate(&spec)?, cfg.normalization)))
            };
            let train = make(cfg.n_train, 0)?.ok_or_else(|| LabError::Config(String::from("n_train must be positive")))?;
            Ok(Splits { train, validation: make(cfg.n_validation, 1)?, test: make(cfg.n_test, 2)? })
        }
        DataSource::File(path) => {
            let format = cfg.format.unwrap_or_else(|| DataFormat::from_path(path));
            let raw = formats::load_dataset(path, format, Some((cfg.height, cfg.width)))?;
            let tagged = split(&normalize(&raw, cfg.normalization), cfg.fractions, cfg.seed)?;
            let part = |s: Split| Some(tagged.subset(s)).filter(|d| !d.is_empty());
            Ok(Splits { train: tagged.subset(Split::Train), validation: part(Split::Validation), test: part(Split::Test) })
        }
    }
}

/// Everything a finished (cell, seed) run produced.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub cell: String,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    pub eval: Option<EvalReport>,
    /// Final ensemble predictions on the test split, with its labels.
    pub predictions: Vec<EnsemblePrediction>,
    pub labels: Vec<u8>,
    /// All sampled conv weights of the final ensemble, pass-major.
    pub weights: Vec<f64>,
    pub model: ModelState,
}

impl SeedOutcome {
    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_accuracy)
    }

    /// `(metric, subset, value)` rows aggregated into the summary.
    pub fn summary_rows(&self) -> Vec<(&'static str, &'static str, Option<f64>)> {
        let mut rows = vec![
            ("final_accuracy", "train", self.final_train_accuracy()),
            ("final_accuracy", "validation", self.records.last().and_then(|r| r.validation_accuracy)),
        ];
        if let Some(e) = &self.eval {
            rows.extend(e.rows().into_iter().map(|(m, s, v)| (m, if s == "all" { "test" } else { s }, v)));
        }
        rows
    }
}

pub fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(LabError::from)
}

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn seed_dir(root: &Path, cell: &str, seed: u64) -> PathBuf {
    root.join("cells").join(cell).join(format!("seed_{seed}"))
}

/// Trains one (cell, seed) run. With `dir` set, artifacts are written there
/// and an `INCOMPLETE` marker remains if anything fails.
pub fn run_seed(cfg: &RunConfig, cell: &Cell, seed: u64, data: &Splits, dir: Option<&Path>) -> Result<SeedOutcome> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        formats::write_file(&dir.join(INCOMPLETE), b"")?;
    }
    let outcome = train_and_evaluate(cfg, cell, seed, data, dir);
    if let (Some(dir), Err(e)) = (dir, &outcome) {
        formats::write_file(&dir.join(INCOMPLETE), format!("{e}\n").as_bytes())?;
    }
    let outcome = outcome?;
    if let Some(dir) = dir {
        write_artifacts(dir, &outcome)?;
        let marker = dir.join(INCOMPLETE);
        fs::remove_file(&marker).map_err(|e| LabError::io(&marker, e))?;
    }
    Ok(outcome)
}

fn train_and_evaluate(cfg: &RunConfig, cell: &Cell, seed: u64, data: &Splits, dir: Option<&Path>) -> Result<SeedOutcome> {
    let tc = cfg.train_config(cell, seed);
    let mut epochs = match dir {
        Some(d) => {
            let mut w = csv_writer(&d.join("epochs.csv"))?;
            w.write_record(EPOCHS_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let mut write_err: Option<LabError> = None;
    let (model, records) = train_with(&tc, &data.train, data.validation.as_ref(), |r| {
        if let (Some(w), None) = (epochs.as_mut(), &write_err) {
            if let Err(e) = write_epoch(w, r) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some(mut w) = epochs {
        w.flush().map_err(|e| LabError::Format(e.to_string()))?;
    }
    let samples = draw_ensemble(&model, tc.ensemble, seed, FINAL_ROUND)?;
    let (eval, predictions) = match &data.test {
        Some(test) => {
            let preds = predict_with_samples(&model, &image_refs(test), &samples)?;
            let report = EvalReport::from_predictions(&preds, test.labels(), cfg.report.confidence, cfg.report.bins)?;
            (Some(report), preds)
        }
        None => (None, Vec::new()),
    };
    let weights = samples.iter().flat_map(|s| s.flat()).collect();
    let labels = data.test.as_ref().map(|t| t.labels().to_vec()).unwrap_or_default();
    Ok(SeedOutcome { cell: cell.name.clone(), seed, records, eval, predictions, labels, weights, model })
}

fn write_epoch(w: &mut csv::Writer<fs::File>, r: &EpochRecord) -> Result<()> {
    let l = &r.losses;
    w.write_record([
        r.epoch.to_string(),
        String::from("train"),
        l.likelihood.to_string(),
        l.kl_term.to_string(),
        l.discriminator.to_string(),
        l.combined().to_string(),
        r.train_accuracy.to_string(),
    ])?;
    if let Some(acc) = r.validation_accuracy {
        w.write_record([r.epoch.to_string(), String::from("validation"), String::new(), String::new(), String::new(), String::new(), acc.to_string()])?;
    }
    w.flush().map_err(|e| LabError::Format(e.to_string()))
}

fn write_artifacts(dir: &Path, out: &SeedOutcome) -> Result<()> {
    if let Some(eval) = &out.eval {
        write_eval(dir, eval, &out.predictions, &out.labels)?;
    }
    write_weights(&dir.join("weights.csv"), &out.weights)?;
    formats::write_file(&dir.join("checkpoint.qbnn"), &formats::encode_checkpoint(&out.model.named_tensors()))
}

/// Writes `eval.csv`, `predictions.csv` and `calibration.csv` into `dir`.
pub fn write_eval(dir: &Path, eval: &EvalReport, predictions: &[EnsemblePrediction], labels: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    write_rows(
        &dir.join("predictions.csv"),
        PREDICTIONS_HEADER,
        predictions.iter().zip(labels).enumerate().map(|(i, (p, l))| {
            [
                i.to_string(),
                l.to_string(),
                p.predicted.to_string(),
                p.probabilities[0].to_string(),
                p.probabilities[1].to_string(),
                p.confidence().to_string(),
                p.ensemble_fraction().to_string(),
            ]
        }),
    )?;
    write_rows(
        &dir.join("eval.csv"),
        EVAL_HEADER,
        eval.rows().into_iter().map(|(m, s, v)| [m.to_string(), s.to_string(), fmt_value(v)]),
    )?;
    write_rows(
        &dir.join("calibration.csv"),
        CALIBRATION_HEADER,
        eval.calibration.iter().enumerate().map(|(i, b)| {
            [
                i.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
                b.count.to_string(),
                fmt_value(b.mean_confidence),
                fmt_value(b.accuracy),
            ]
        }),
    )
}

/// Rebuilds a trained model of `cell` from a checkpoint.
pub fn load_model(cfg: &RunConfig, cell: &Cell, seed: u64, height: usize, width: usize, checkpoint: &Path) -> Result<ModelState> {
    let bytes = fs::read(checkpoint).map_err(|e| LabError::io(checkpoint, e))?;
    let mut model = ModelState::init(&cfg.train_config(cell, seed), height, width)?;
    model.load_named(&formats::decode_checkpoint(&bytes)?)?;
    Ok(model)
}

/// Final-ensemble evaluation of a restored model, written into `dir`.
pub fn evaluate_model(cfg: &RunConfig, model: &ModelState, seed: u64, test: &Dataset, dir: &Path) -> Result<EvalReport> {
    let samples = draw_ensemble(model, cfg.train.ensemble, seed, FINAL_ROUND)?;
    let preds = predict_with_samples(model, &image_refs(test), &samples)?;
    let report = EvalReport::from_predictions(&preds, test.labels(), cfg.report.confidence, cfg.report.bins)?;
    write_eval(dir, &report, &preds, test.labels())?;
    Ok(report)
}

/// `n` weight draws of a model, as written to `weights.csv`.
pub fn sample_weights(model: &ModelState, n: usize, seed: u64, path: &Path) -> Result<Vec<f64>> {
    let samples = draw_ensemble(model, n, seed, FINAL_ROUND)?;
    let flat: Vec<f64> = samples.iter().flat_map(|s| s.flat()).collect();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    write_weights(path, &flat)?;
    Ok(flat)
}

pub const TOY_HEADER: [&str; 4] = ["step", "ks", "discriminator", "generator"];

/// Runs the one-dimensional distribution-matching check and writes
/// `toy.csv` and `toy_samples.csv` into `dir`.
pub fn run_toy(config: &ToyConfig, dir: &Path) -> Result<ToyReport> {
    let report = toy_adversarial(config)?;
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    write_rows(
        &dir.join("toy.csv"),
        TOY_HEADER,
        report.trace.iter().map(|c| [c.step.to_string(), c.ks.to_string(), c.discriminator.to_string(), c.generator.to_string()]),
    )?;
    write_rows(
        &dir.join("toy_samples.csv"),
        ["index", "generated", "prior"],
        report.generated.iter().zip(&report.prior).enumerate().map(|(i, (g, p))| [i.to_string(), g.to_string(), p.to_string()]),
    )?;
    Ok(report)
}

/// `pass_index,chunk,qubit,value` rows from pass-major flat weights.
pub fn write_weights(path: &Path, weights: &[f64]) -> Result<()> {
    use qcbnn_core::samplers::{CHUNK_DIM, N_CHUNKS};
    let per_pass = CHUNK_DIM * N_CHUNKS;
    write_rows(
        path,
        WEIGHTS_HEADER,
        weights.iter().enumerate().map(|(i, v)| {
            [(i / per_pass).to_string(), ((i % per_pass) / CHUNK_DIM).to_string(), (i % CHUNK_DIM).to_string(), v.to_string()]
        }),
    )
}

/// Result of a whole sweep, in cell-major, seed-minor order.
#[derive(Debug)]
pub struct SweepOutcome {
    pub cells: Vec<Cell>,
    pub runs: Vec<(usize, u64, Result<SeedOutcome>)>,
}

impl SweepOutcome {
    pub fn successes(&self) -> impl Iterator<Item = &SeedOutcome> {
        self.runs.iter().filter_map(|(_, _, r)| r.as_ref().ok())
    }
}

/// Runs every (cell, seed) pair on a worker pool and writes the summary.
/// Fails after writing everything that succeeded if any run failed.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    let root = cfg.out.as_path();
    fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
    formats::write_file(&root.join("config.txt"), cfg.echo().as_bytes())?;
    let data = prepare_data(&cfg.data)?;
    let tasks: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<SeedOutcome>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, s)| {
                let dir = seed_dir(root, &cells[c].name, s);
                run_seed(cfg, &cells[c], s, &data, Some(&dir))
            })
            .collect()
    });
    let runs: Vec<_> = tasks.into_iter().zip(results).map(|((c, s), r)| (c, s, r)).collect();
    let outcome = SweepOutcome { cells, runs };
    write_summary(&root.join("summary.csv"), &outcome)?;
    let failures: Vec<&LabError> = outcome.runs.iter().filter_map(|(_, _, r)| r.as_ref().err()).collect();
    if let Some(first) = failures.first() {
        return Err(LabError::RunsFailed {
            failed: failures.len(),
            total: outcome.runs.len(),
            diverged: failures.iter().any(|e| matches!(e, LabError::Core(CoreError::Diverged { .. }))),
            first: first.to_string(),
        });
    }
    Ok(outcome)
}

/// Mean and sample standard deviation across seeds of every final metric.
pub fn write_summary(path: &Path, outcome: &SweepOutcome) -> Result<()> {
    let mut rows = Vec::new();
    for (ci, cell) in outcome.cells.iter().enumerate() {
        let seeds: Vec<&SeedOutcome> =
            outcome.runs.iter().filter(|(c, _, _)| *c == ci).filter_map(|(_, _, r)| r.as_ref().ok()).collect();
        let Some(first) = seeds.first() else { continue };
        for (k, (metric, subset, _)) in first.summary_rows().into_iter().enumerate() {
            let values: Vec<f64> = seeds.iter().filter_map(|s| s.summary_rows()[k].2).collect();
            let (mean, std) = if values.is_empty() { (None, None) } else { let (m, s) = mean_std(&values); (Some(m), Some(s)) };
            rows.push([
                cell.name.clone(),
                metric.to_string(),
                subset.to_string(),
                values.len().to_string(),
                fmt_value(mean),
                fmt_value(std),
            ]);
        }
    }
    write_rows(path, SUMMARY_HEADER, rows)
}
