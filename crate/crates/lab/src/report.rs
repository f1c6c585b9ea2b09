//! Figure families from a finished results directory. Each family is a CSV
//! with the plotted numbers plus an SVG rendering, written to
//! `<results>/report/`. The output depends only on the directory contents.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qcbnn_core::metrics::{kde_density, linspace, mean_std};

use crate::error::{LabError, Result};
use crate::formats::write_file;
use crate::harness::{fmt_value, INCOMPLETE};
use crate::svg::{BoxStat, Chart, Mark, Series};

/// Half-width of the window around zero used for the weight peak density.
pub const PEAK_RADIUS: f64 = 0.1;
pub const KDE_POINTS: usize = 201;

#[derive(Debug, Default)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| LabError::Missing(format!("{}: {e}", path.display())))?;
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr.records().map(|r| r.map(|r| r.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
        Ok(Table { path: path.to_path_buf(), header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::Missing(format!("{}: no column `{name}`", self.path.display())))
    }

    fn num(&self, row: &[String], col: usize) -> Result<Option<f64>> {
        let v = row[col].trim();
        if v.is_empty() {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|_| LabError::Format(format!("{}: bad number {v:?} in column `{}`", self.path.display(), self.header[col])))
    }
}

#[derive(Debug, Default)]
struct SeedRun {
    seed: u64,
    /// `(epoch, split, combined, accuracy)`.
    epochs: Vec<(usize, String, Option<f64>, f64)>,
    eval: BTreeMap<(String, String), Option<f64>>,
    /// `(correct, confidence, ensemble_fraction)` per test sample.
    predictions: Vec<(bool, f64, f64)>,
    /// `(bin, lower, upper, count, mean_confidence, accuracy)`.
    calibration: Vec<(usize, f64, f64, usize, Option<f64>, Option<f64>)>,
    weights: Vec<f64>,
}

impl SeedRun {
    fn metric(&self, metric: &str, subset: &str) -> Option<f64> {
        self.eval.get(&(metric.to_string(), subset.to_string())).copied().flatten()
    }
}

fn load_seed(dir: &Path, seed: u64) -> Result<SeedRun> {
    let mut run = SeedRun { seed, ..SeedRun::default() };
    let t = Table::read(&dir.join("epochs.csv"))?;
    let (ce, cs, cc, ca) = (t.col("epoch")?, t.col("split")?, t.col("combined")?, t.col("accuracy")?);
    for r in &t.rows {
        let epoch = t.num(r, ce)?.unwrap_or(0.0) as usize;
        let acc = t.num(r, ca)?.unwrap_or(f64::NAN);
        run.epochs.push((epoch, r[cs].clone(), t.num(r, cc)?, acc));
    }
    let eval_path = dir.join("eval.csv");
    if eval_path.is_file() {
        let t = Table::read(&eval_path)?;
        let (cm, cs, cv) = (t.col("metric")?, t.col("subset")?, t.col("value")?);
        for r in &t.rows {
            run.eval.insert((r[cm].clone(), r[cs].clone()), t.num(r, cv)?);
        }
    }
    let pred_path = dir.join("predictions.csv");
    if pred_path.is_file() {
        let t = Table::read(&pred_path)?;
        let (cl, cp, cc, cf) = (t.col("label")?, t.col("predicted")?, t.col("confidence")?, t.col("ensemble_fraction")?);
        for r in &t.rows {
            run.predictions.push((r[cl] == r[cp], t.num(r, cc)?.unwrap_or(f64::NAN), t.num(r, cf)?.unwrap_or(f64::NAN)));
        }
    }
    let cal_path = dir.join("calibration.csv");
    if cal_path.is_file() {
        let t = Table::read(&cal_path)?;
        let cols = [t.col("bin")?, t.col("lower")?, t.col("upper")?, t.col("count")?, t.col("mean_confidence")?, t.col("accuracy")?];
        for r in &t.rows {
            run.calibration.push((
                t.num(r, cols[0])?.unwrap_or(0.0) as usize,
                t.num(r, cols[1])?.unwrap_or(0.0),
                t.num(r, cols[2])?.unwrap_or(0.0),
                t.num(r, cols[3])?.unwrap_or(0.0) as usize,
                t.num(r, cols[4])?,
                t.num(r, cols[5])?,
            ));
        }
    }
    let t = Table::read(&dir.join("weights.csv"))?;
    let cv = t.col("value")?;
    for r in &t.rows {
        if let Some(v) = t.num(r, cv)? {
            run.weights.push(v);
        }
    }
    Ok(run)
}

/// Cells in name order, each with its completed seeds in seed order.
fn load_results(root: &Path, notices: &mut Vec<String>) -> Result<Vec<(String, Vec<SeedRun>)>> {
    let summary = root.join("summary.csv");
    if !summary.is_file() {
        return Err(LabError::Missing(format!("{} (not a completed results directory)", summary.display())));
    }
    let cells_dir = root.join("cells");
    let list = |dir: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| LabError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        v.sort();
        Ok(v)
    };
    let mut cells = Vec::new();
    for cell_dir in list(&cells_dir)? {
        let name = cell_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let mut seeds = Vec::new();
        for seed_dir in list(&cell_dir)? {
            let Some(seed) = seed_dir.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_prefix("seed_")).and_then(|n| n.parse().ok())
            else {
                continue;
            };
            if seed_dir.join(INCOMPLETE).exists() {
                notices.push(format!("skipping incomplete run {}", seed_dir.display()));
                continue;
            }
            seeds.push(load_seed(&seed_dir, seed)?);
        }
        seeds.sort_by_key(|s| s.seed);
        if !seeds.is_empty() {
            cells.push((name, seeds));
        }
    }
    if cells.is_empty() {
        return Err(LabError::Missing(format!("no completed runs under {}", cells_dir.display())));
    }
    Ok(cells)
}

struct Emitter {
    dir: PathBuf,
    outcome: ReportOutcome,
}

impl Emitter {
    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Format(e.to_string()))?;
        self.file(name, &bytes)
    }

    fn svg(&mut self, name: &str, chart: &Chart) -> Result<()> {
        self.file(name, chart.render().as_bytes())
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_file(&path, bytes)?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn notice(&mut self, msg: String) {
        self.outcome.notices.push(msg);
    }
}

fn stats(values: &[f64]) -> (String, String) {
    if values.is_empty() {
        return (String::new(), String::new());
    }
    let (m, s) = mean_std(values);
    (m.to_string(), s.to_string())
}

/// Density on `grid`; `None` when every sample is identical.
fn density(samples: &[f64], grid: &[f64]) -> Option<Vec<f64>> {
    kde_density(samples, grid).ok().map(|d| d.density)
}

/// Parses `<arch>_L<layers>[_re]` cell names.
pub fn parse_cell_name(name: &str) -> Option<(&str, usize, bool)> {
    let (stem, re) = match name.strip_suffix("_re") {
        Some(s) => (s, true),
        None => (name, false),
    };
    let (arch, layers) = stem.rsplit_once("_L")?;
    Some((arch, layers.parse().ok()?, re))
}

/// Writes every figure family for `root` into `root/report`.
pub fn run_report(root: &Path) -> Result<ReportOutcome> {
    let mut em = Emitter { dir: root.join("report"), outcome: ReportOutcome::default() };
    let cells = load_results(root, &mut em.outcome.notices)?;
    curves(&mut em, &cells)?;
    test_metrics(&mut em, &cells)?;
    confidence(&mut em, &cells)?;
    calibration(&mut em, &cells)?;
    weights(&mut em, &cells)?;
    difference(&mut em, &cells)?;
    depth(&mut em, &cells)?;
    let notes: String = em.outcome.notices.iter().map(|n| format!("{n}\n")).collect();
    em.file("NOTICES.txt", notes.as_bytes())?;
    Ok(em.outcome)
}

type Cells = [(String, Vec<SeedRun>)];

fn curves(em: &mut Emitter, cells: &Cells) -> Result<()> {
    let mut rows = Vec::new();
    let mut acc_chart = Chart::new("Accuracy per epoch (mean ± std over seeds)", "epoch", "accuracy");
    let mut loss_chart = Chart::new("Combined loss per epoch (mean ± std over seeds)", "epoch", "combined loss");
    for (name, seeds) in cells {
        let mut by_key: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for s in seeds {
            for (epoch, split, combined, acc) in &s.epochs {
                let e = by_key.entry((split.clone(), *epoch)).or_default();
                e.0.push(*acc);
                e.1.extend(combined);
            }
        }
        let mut lines: BTreeMap<&str, (Vec<(f64, f64)>, Vec<(f64, f64, f64)>, Vec<(f64, f64)>, Vec<(f64, f64, f64)>)> = BTreeMap::new();
        for ((split, epoch), (acc, loss)) in &by_key {
            let (am, asd) = stats(acc);
            let (lm, lsd) = stats(loss);
            rows.push(vec![name.clone(), epoch.to_string(), split.clone(), acc.len().to_string(), am, asd, lm, lsd]);
            let l = lines.entry(split.as_str()).or_default();
            let x = *epoch as f64;
            let (m, sd) = mean_std(acc);
            l.0.push((x, m));
            l.1.push((x, m - sd, m + sd));
            if !loss.is_empty() {
                let (m, sd) = mean_std(loss);
                l.2.push((x, m));
                l.3.push((x, m - sd, m + sd));
            }
        }
        for (split, (acc, acc_band, loss, loss_band)) in lines {
            let mut s = Series::line(format!("{name} {split}"), acc).with_band(acc_band);
            if split != "train" {
                s.mark = Mark::Dashed;
            }
            acc_chart.series.push(s);
            if !loss.is_empty() {
                loss_chart.series.push(Series::line(format!("{name} {split}"), loss).with_band(loss_band));
            }
        }
    }
    em.csv(
        "curves.csv",
        &["cell", "epoch", "split", "n_seeds", "accuracy_mean", "accuracy_std", "combined_mean", "combined_std"],
        rows,
    )?;
    em.svg("curves_accuracy.svg", &acc_chart)?;
    em.svg("curves_loss.svg", &loss_chart)
}

fn has_eval(cells: &Cells) -> bool {
    cells.iter().any(|(_, s)| s.iter().any(|r| !r.eval.is_empty()))
}

fn test_metrics(em: &mut Emitter, cells: &Cells) -> Result<()> {
    if !has_eval(cells) {
        em.notice(String::from("test metrics figure skipped: no test evaluation in the results"));
        return Ok(());
    }
    let metrics = [("accuracy", "all"), ("f1", "all"), ("difference", "all"), ("mean_confidence", "all")];
    let mut rows = Vec::new();
    let mut chart = Chart::new("Test accuracy across seeds", "", "test accuracy");
    for (name, seeds) in cells {
        let mut acc = Vec::new();
        for s in seeds {
            let mut row = vec![name.clone(), s.seed.to_string()];
            row.extend(metrics.iter().map(|(m, sub)| fmt_value(s.metric(m, sub))));
            rows.push(row);
            acc.extend(s.metric("accuracy", "all"));
        }
        chart.boxes.extend(BoxStat::from_values(name.clone(), &acc));
    }
    em.csv("test_metrics.csv", &["cell", "seed", "accuracy", "f1", "difference", "mean_confidence"], rows)?;
    em.svg("test_metrics.svg", &chart)
}

fn confidence(em: &mut Emitter, cells: &Cells) -> Result<()> {
    if !cells.iter().any(|(_, s)| s.iter().any(|r| !r.predictions.is_empty())) {
        em.notice(String::from("confidence-error and ensemble-size figures skipped: no test predictions in the results"));
        return Ok(());
    }
    let ce_grid = linspace(-1.0, 1.0, KDE_POINTS);
    let ef_grid = linspace(0.0, 1.0, KDE_POINTS);
    let mut rows = Vec::new();
    let mut ce_chart = Chart::new("Confidence error density", "mean confidence − accuracy", "density");
    let mut ef_chart = Chart::new("Ensemble size density", "ensemble fraction", "density");
    for (name, seeds) in cells {
        for (subset, want) in [("correct", true), ("incorrect", false)] {
            let mut ce = Vec::new();
            let mut ef = Vec::new();
            for s in seeds {
                let acc = s.metric("accuracy", "all").unwrap_or(f64::NAN);
                for &(_, conf, frac) in s.predictions.iter().filter(|p| p.0 == want) {
                    ce.push(conf - acc);
                    ef.push(frac);
                }
            }
            if ce.is_empty() {
                continue;
            }
            for (kind, values, grid, chart) in
                [("confidence_error", &ce, &ce_grid, &mut ce_chart), ("ensemble_fraction", &ef, &ef_grid, &mut ef_chart)]
            {
                let label = format!("{name} {subset}");
                match density(values, grid) {
                    Some(d) => {
                        for (x, y) in grid.iter().zip(&d) {
                            rows.push(vec![name.clone(), subset.to_string(), kind.to_string(), x.to_string(), y.to_string()]);
                        }
                        chart.series.push(Series::line(label, grid.iter().copied().zip(d).collect()));
                    }
                    None => {
                        let v = values[0];
                        em.notice(format!("{label}: every {kind} equals {v}; drawn as a spike"));
                        rows.push(vec![name.clone(), subset.to_string(), kind.to_string(), v.to_string(), String::from("inf")]);
                        chart.series.push(Series::line(label, vec![(v, 0.0), (v, 1.0)]));
                    }
                }
            }
        }
    }
    em.csv("confidence.csv", &["cell", "subset", "quantity", "x", "density"], rows)?;
    em.svg("confidence_error.svg", &ce_chart)?;
    em.svg("ensemble_size.svg", &ef_chart)
}

fn calibration(em: &mut Emitter, cells: &Cells) -> Result<()> {
    if !cells.iter().any(|(_, s)| s.iter().any(|r| !r.calibration.is_empty())) {
        em.notice(String::from("calibration figure skipped: no test evaluation in the results"));
        return Ok(());
    }
    let mut rows = Vec::new();
    let mut chart = Chart::new("Calibration (pooled over seeds)", "mean confidence", "accuracy");
    chart.x_range = Some((0.0, 1.0));
    chart.y_range = Some((0.0, 1.0));
    chart.series.push(Series { mark: Mark::Dashed, ..Series::line("ideal", vec![(0.0, 0.0), (1.0, 1.0)]) });
    for (name, seeds) in cells {
        let mut bins: BTreeMap<usize, (f64, f64, usize, f64, f64)> = BTreeMap::new();
        for s in seeds {
            for &(b, lo, hi, n, conf, acc) in &s.calibration {
                let e = bins.entry(b).or_insert((lo, hi, 0, 0.0, 0.0));
                e.2 += n;
                e.3 += conf.unwrap_or(0.0) * n as f64;
                e.4 += acc.unwrap_or(0.0) * n as f64;
            }
        }
        let mut pts = Vec::new();
        for (b, (lo, hi, n, conf, acc)) in bins {
            let (mc, ma) = if n > 0 { (Some(conf / n as f64), Some(acc / n as f64)) } else { (None, None) };
            if let (Some(c), Some(a)) = (mc, ma) {
                pts.push((c, a));
            }
            rows.push(vec![name.clone(), b.to_string(), lo.to_string(), hi.to_string(), n.to_string(), fmt_value(mc), fmt_value(ma)]);
        }
        let mut s = Series::line(name.clone(), pts);
        s.mark = Mark::Line;
        chart.series.push(s);
    }
    em.csv("calibration.csv", &["cell", "bin", "lower", "upper", "count", "mean_confidence", "accuracy"], rows)?;
    em.svg("calibration.svg", &chart)
}

fn weights(em: &mut Emitter, cells: &Cells) -> Result<()> {
    let grid = linspace(-1.0, 1.0, KDE_POINTS);
    let mut rows = Vec::new();
    let mut peaks = Vec::new();
    let mut chart = Chart::new("Sampled conv-weight density (seed average)", "weight", "density");
    for (name, seeds) in cells {
        let mut acc = vec![0.0; grid.len()];
        let mut used = 0usize;
        let mut seed_peaks = Vec::new();
        for s in seeds {
            match kde_density(&s.weights, &grid) {
                Ok(d) => {
                    for (a, v) in acc.iter_mut().zip(&d.density) {
                        *a += v;
                    }
                    used += 1;
                    let p = d.peak_near(0.0, PEAK_RADIUS);
                    seed_peaks.extend(p);
                    peaks.push(vec![name.clone(), s.seed.to_string(), fmt_value(p)]);
                }
                Err(e) => em.notice(format!("{name} seed {}: weight density unavailable ({e})", s.seed)),
            }
        }
        if used == 0 {
            continue;
        }
        let mean: Vec<f64> = acc.iter().map(|a| a / used as f64).collect();
        for (x, y) in grid.iter().zip(&mean) {
            rows.push(vec![name.clone(), x.to_string(), y.to_string()]);
        }
        let (pm, ps) = stats(&seed_peaks);
        peaks.push(vec![name.clone(), String::from("mean"), pm]);
        peaks.push(vec![name.clone(), String::from("std"), ps]);
        chart.series.push(Series::line(name.clone(), grid.iter().copied().zip(mean).collect()));
    }
    em.csv("weights_kde.csv", &["cell", "x", "density"], rows)?;
    em.csv("weights_peak.csv", &["cell", "seed", "peak_density_near_zero"], peaks)?;
    em.svg("weights_kde.svg", &chart)
}

fn difference(em: &mut Emitter, cells: &Cells) -> Result<()> {
    if !has_eval(cells) {
        em.notice(String::from("difference figure skipped: no test evaluation in the results"));
        return Ok(());
    }
    let mut rows = Vec::new();
    let mut chart = Chart::new("Certainty difference versus test accuracy", "test accuracy", "difference");
    for (name, seeds) in cells {
        let mut pts = Vec::new();
        for s in seeds {
            let (a, d) = (s.metric("accuracy", "all"), s.metric("difference", "all"));
            rows.push(vec![name.clone(), s.seed.to_string(), fmt_value(a), fmt_value(d)]);
            if let (Some(a), Some(d)) = (a, d) {
                pts.push((a, d));
            }
        }
        chart.series.push(Series::scatter(name.clone(), pts));
    }
    em.csv("difference.csv", &["cell", "seed", "accuracy", "difference"], rows)?;
    em.svg("difference.svg", &chart)
}

fn depth(em: &mut Emitter, cells: &Cells) -> Result<()> {
    let mut by_arch: BTreeMap<&str, Vec<(usize, bool, &str, &[SeedRun])>> = BTreeMap::new();
    for (name, seeds) in cells {
        if let Some((arch, layers, re)) = parse_cell_name(name) {
            by_arch.entry(arch).or_default().push((layers, re, name.as_str(), seeds.as_slice()));
        }
    }
    by_arch.retain(|_, v| v.len() > 1);
    if by_arch.is_empty() {
        em.notice(String::from("depth comparison skipped: no architecture was run at more than one depth"));
        return Ok(());
    }
    let mut rows = Vec::new();
    for (arch, mut variants) in by_arch {
        variants.sort_by_key(|v| (v.0, v.1));
        let mut chart = Chart::new(format!("{arch}: train accuracy by depth"), "epoch", "train accuracy");
        for (layers, re, name, seeds) in variants {
            let last = |s: &SeedRun| s.epochs.iter().rev().find(|e| e.1 == "train").map(|e| e.3);
            let train: Vec<f64> = seeds.iter().filter_map(last).collect();
            let test: Vec<f64> = seeds.iter().filter_map(|s| s.metric("accuracy", "all")).collect();
            let (tm, ts) = stats(&train);
            let (xm, xs) = stats(&test);
            rows.push(vec![arch.to_string(), layers.to_string(), re.to_string(), seeds.len().to_string(), tm, ts, xm, xs]);
            let mut per_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for s in seeds {
                for e in s.epochs.iter().filter(|e| e.1 == "train") {
                    per_epoch.entry(e.0).or_default().push(e.3);
                }
            }
            let (mut pts, mut band) = (Vec::new(), Vec::new());
            for (epoch, v) in per_epoch {
                let (m, sd) = mean_std(&v);
                pts.push((epoch as f64, m));
                band.push((epoch as f64, m - sd, m + sd));
            }
            chart.series.push(Series::line(name, pts).with_band(band));
        }
        em.svg(&format!("depth_{arch}.svg"), &chart)?;
    }
    em.csv(
        "depth.csv",
        &["arch", "layers", "reupload", "n_seeds", "train_accuracy_mean", "train_accuracy_std", "test_accuracy_mean", "test_accuracy_std"],
        rows,
    )
}
