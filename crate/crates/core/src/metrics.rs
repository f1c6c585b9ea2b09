//! Predictive and uncertainty metrics for binary ensemble classifiers.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::train::EnsemblePrediction;

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `None` marks an undefined score (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn classification_scores(predictions: &[usize], labels: &[u8]) -> Result<Scores> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(alloc::format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("classification scores"));
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == 1, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Scores { confusion: c, accuracy: (c.tp + c.tn) as f64 / c.total() as f64, precision, recall, f1 })
}

/// Mean confidence minus accuracy; negative means underconfident.
pub fn confidence_error(mean_confidence: f64, accuracy: f64) -> f64 {
    mean_confidence - accuracy
}

/// Share of ensemble members whose vote equals the final prediction.
pub fn ensemble_fraction(votes: &[usize], final_class: usize) -> Result<f64> {
    if votes.is_empty() {
        return Err(Error::Empty("ensemble votes"));
    }
    Ok(votes.iter().filter(|&&v| v == final_class).count() as f64 / votes.len() as f64)
}

/// `conf_c · frac_c − conf_i · frac_i`.
pub fn difference_metric(conf_correct: f64, frac_correct: f64, conf_incorrect: f64, frac_incorrect: f64) -> f64 {
    conf_correct * frac_correct - conf_incorrect * frac_incorrect
}

/// Difference metric over possibly empty subsets; a missing subset contributes 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Difference {
    pub value: f64,
    pub correct_missing: bool,
    pub incorrect_missing: bool,
}

pub fn subset_difference(correct: Option<(f64, f64)>, incorrect: Option<(f64, f64)>) -> Difference {
    let (cc, fc) = correct.unwrap_or((0.0, 0.0));
    let (ci, fi) = incorrect.unwrap_or((0.0, 0.0));
    Difference {
        value: difference_metric(cc, fc, ci, fi),
        correct_missing: correct.is_none(),
        incorrect_missing: incorrect.is_none(),
    }
}

/// One equal-width confidence bin; `mean_confidence`/`accuracy` are `None`
/// for an empty bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

impl CalibrationBin {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Bins are `[k/n, (k+1)/n)` except the last, which is closed at 1.
pub fn calibration_curve(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    if n_bins < 2 {
        return Err(Error::InvalidSpec(alloc::format!("need at least 2 calibration bins, got {n_bins}")));
    }
    if confidences.len() != correct.len() {
        return Err(Error::Shape(alloc::format!("{} confidences vs {} outcomes", confidences.len(), correct.len())));
    }
    let mut sums = vec![(0usize, 0.0f64, 0usize); n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Domain { what: "confidence", value: c });
        }
        let k = ((c * n_bins as f64) as usize).min(n_bins - 1);
        sums[k].0 += 1;
        sums[k].1 += c;
        sums[k].2 += ok as usize;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(k, (count, conf, hits))| CalibrationBin {
            lower: k as f64 / n_bins as f64,
            upper: (k + 1) as f64 / n_bins as f64,
            count,
            mean_confidence: (count > 0).then(|| conf / count as f64),
            accuracy: (count > 0).then(|| hits as f64 / count as f64),
        })
        .collect())
}

/// How per-subset confidence errors pick their accuracy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfidenceMode {
    /// Subset mean confidence minus overall accuracy.
    #[default]
    OverallAccuracy,
    /// Subset mean confidence minus the subset's own accuracy (1 or 0).
    SubsetAccuracy,
}

/// Evaluation of one model on one labelled set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_samples: usize,
    pub scores: Scores,
    pub mean_confidence: f64,
    pub mean_confidence_correct: Option<f64>,
    pub mean_confidence_incorrect: Option<f64>,
    pub confidence_error_correct: Option<f64>,
    pub confidence_error_incorrect: Option<f64>,
    pub ensemble_fraction_correct: Option<f64>,
    pub ensemble_fraction_incorrect: Option<f64>,
    pub calibration: Vec<CalibrationBin>,
    pub difference: Difference,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    pub fn from_predictions(
        predictions: &[EnsemblePrediction],
        labels: &[u8],
        mode: ConfidenceMode,
        n_bins: usize,
    ) -> Result<Self> {
        let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
        let scores = classification_scores(&predicted, labels)?;
        let correct: Vec<bool> = predicted.iter().zip(labels).map(|(&p, &l)| p == l as usize).collect();
        let conf: Vec<f64> = predictions.iter().map(|p| p.confidence()).collect();
        let frac: Vec<f64> = predictions.iter().map(|p| p.ensemble_fraction()).collect();
        let subset = |want: bool, values: &[f64]| {
            mean_of(values.iter().zip(&correct).filter(|(_, &c)| c == want).map(|(&v, _)| v))
        };
        let mean_confidence_correct = subset(true, &conf);
        let mean_confidence_incorrect = subset(false, &conf);
        let ensemble_fraction_correct = subset(true, &frac);
        let ensemble_fraction_incorrect = subset(false, &frac);
        let (acc_c, acc_i) = match mode {
            ConfidenceMode::OverallAccuracy => (scores.accuracy, scores.accuracy),
            ConfidenceMode::SubsetAccuracy => (1.0, 0.0),
        };
        let difference = subset_difference(
            mean_confidence_correct.zip(ensemble_fraction_correct),
            mean_confidence_incorrect.zip(ensemble_fraction_incorrect),
        );
        Ok(EvalReport {
            n_samples: predictions.len(),
            scores,
            mean_confidence: mean_of(conf.iter().copied()).unwrap_or(0.0),
            mean_confidence_correct,
            mean_confidence_incorrect,
            confidence_error_correct: mean_confidence_correct.map(|c| confidence_error(c, acc_c)),
            confidence_error_incorrect: mean_confidence_incorrect.map(|c| confidence_error(c, acc_i)),
            ensemble_fraction_correct,
            ensemble_fraction_incorrect,
            calibration: calibration_curve(&conf, &correct, n_bins)?,
            difference,
        })
    }

    /// Flat `(metric, subset, value)` rows; `None` marks an undefined value.
    pub fn rows(&self) -> Vec<(&'static str, &'static str, Option<f64>)> {
        let s = &self.scores;
        vec![
            ("accuracy", "all", Some(s.accuracy)),
            ("precision", "all", s.precision),
            ("recall", "all", s.recall),
            ("f1", "all", s.f1),
            ("mean_confidence", "all", Some(self.mean_confidence)),
            ("mean_confidence", "correct", self.mean_confidence_correct),
            ("mean_confidence", "incorrect", self.mean_confidence_incorrect),
            ("confidence_error", "correct", self.confidence_error_correct),
            ("confidence_error", "incorrect", self.confidence_error_incorrect),
            ("ensemble_fraction", "correct", self.ensemble_fraction_correct),
            ("ensemble_fraction", "incorrect", self.ensemble_fraction_incorrect),
            ("difference", "all", Some(self.difference.value)),
            ("n_samples", "all", Some(self.n_samples as f64)),
            ("tp", "all", Some(s.confusion.tp as f64)),
            ("fp", "all", Some(s.confusion.fp as f64)),
            ("fn", "all", Some(s.confusion.fn_ as f64)),
            ("tn", "all", Some(s.confusion.tn as f64)),
        ]
    }
}

/// Gaussian kernel density estimate on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Largest density over grid points with `|x − centre| ≤ radius`.
    pub fn peak_near(&self, centre: f64, radius: f64) -> Option<f64> {
        self.grid
            .iter()
            .zip(&self.density)
            .filter(|(x, _)| libm::fabs(**x - centre) <= radius)
            .map(|(_, &d)| d)
            .reduce(f64::max)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}

/// Scott's rule `σ̂ · n^(−1/5)` with the maximum-likelihood `σ̂` (divisor `n`).
pub fn scott_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let (_, sd) = mean_std(samples);
    sd * libm::sqrt((n - 1.0) / n) * libm::pow(n, -0.2)
}

pub fn kde_density(samples: &[f64], grid: &[f64]) -> Result<DensityEstimate> {
    if samples.len() < 2 {
        return Err(Error::Empty("kde needs at least 2 samples"));
    }
    let bandwidth = scott_bandwidth(samples);
    if bandwidth <= 0.0 || !bandwidth.is_finite() {
        return Err(Error::PointMass { value: samples[0] });
    }
    let norm = 1.0 / (samples.len() as f64 * bandwidth * libm::sqrt(2.0 * PI));
    let density = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let u = (x - s) / bandwidth;
                    libm::exp(-0.5 * u * u)
                })
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate { grid: grid.to_vec(), density, bandwidth })
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2).zip(values.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("ks samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(libm::fabs(i as f64 / a.len() as f64 - j as f64 / b.len() as f64));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn all_correct_scores() {
        let s = classification_scores(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn confusion_example() {
        // TP=2, FP=1, FN=1, TN=6
        let pred = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let lab = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
        let s = classification_scores(&pred, &lab).unwrap();
        assert_eq!(s.confusion, Confusion { tp: 2, fp: 1, fn_: 1, tn: 6 });
        assert_eq!(s.precision, Some(2.0 / 3.0));
        assert_eq!(s.recall, Some(2.0 / 3.0));
        assert!((s.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.accuracy, 0.8);
    }

    #[test]
    fn undefined_precision() {
        let s = classification_scores(&[0, 0, 0], &[1, 0, 0]).unwrap();
        assert_eq!(s.precision, None);
        assert_eq!(s.recall, Some(0.0));
        assert_eq!(s.f1, None);
        assert!(classification_scores(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn confidence_error_examples() {
        assert_eq!(confidence_error(0.8, 0.8), 0.0);
        assert!((confidence_error(0.6, 0.8) + 0.2).abs() < 1e-15);
        assert!((confidence_error(0.9, 0.7) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ensemble_fraction_examples() {
        assert_eq!(ensemble_fraction(&[1; 7], 1).unwrap(), 1.0);
        let votes: Vec<usize> = (0..100).map(|i| (i >= 60) as usize).collect();
        assert_eq!(ensemble_fraction(&votes, 0).unwrap(), 0.6);
        assert_eq!(ensemble_fraction(&[0], 0).unwrap(), 1.0);
        assert!(ensemble_fraction(&[], 0).is_err());
    }

    #[test]
    fn difference_examples() {
        assert!((difference_metric(0.9, 0.8, 0.6, 0.2) - 0.60).abs() < 1e-12);
        assert_eq!(difference_metric(0.7, 0.5, 0.7, 0.5), 0.0);
        assert_eq!(difference_metric(1.0, 1.0, 0.0, 0.37), 1.0);
        let d = subset_difference(Some((0.9, 1.0)), None);
        assert!(d.incorrect_missing && !d.correct_missing);
        assert_eq!(d.value, 0.9);
    }

    #[test]
    fn calibration_edge_bins() {
        let bins = calibration_curve(&[1.0, 1.0, 1.0], &[true; 3], 10).unwrap();
        assert_eq!(bins.iter().filter(|b| !b.is_empty()).count(), 1);
        let top = bins[9];
        assert_eq!((top.count, top.mean_confidence, top.accuracy), (3, Some(1.0), Some(1.0)));
        let bins = calibration_curve(&[1.0, 1.0], &[false, false], 10).unwrap();
        assert_eq!((bins[9].mean_confidence, bins[9].accuracy), (Some(1.0), Some(0.0)));
        let bins = calibration_curve(&[0.0, 0.1, 0.0999], &[true; 3], 10).unwrap();
        assert_eq!((bins[0].count, bins[1].count), (2, 1));
        assert!(calibration_curve(&[0.5], &[true], 1).is_err());
        assert!(calibration_curve(&[1.5], &[true], 10).is_err());
    }

    #[test]
    fn calibration_on_calibrated_data() {
        let mut rng = stream(5, Purpose::Inspection, 0);
        let n = 20_000;
        let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..=1.0)).collect();
        let hit: Vec<bool> = conf.iter().map(|&c| rng.random_bool(c)).collect();
        let bins = calibration_curve(&conf, &hit, 10).unwrap();
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), n);
        for b in bins.iter().filter(|b| !b.is_empty()) {
            let gap = (b.mean_confidence.unwrap() - b.accuracy.unwrap()).abs();
            assert!(gap < 3.0 / libm::sqrt(b.count as f64), "{b:?}");
        }
    }

    #[test]
    fn kde_standard_normal() {
        let mut rng = stream(1, Purpose::Inspection, 1);
        let xs: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let grid = linspace(-6.0, 6.0, 601);
        let est = kde_density(&xs, &grid).unwrap();
        let at0 = est.density[300];
        assert!((at0 - 1.0 / libm::sqrt(2.0 * PI)).abs() < 0.03, "{at0}");
        assert!((trapezoid(&est.grid, &est.density) - 1.0).abs() < 1e-2);
        assert!(est.density.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn kde_symmetry_and_bimodality() {
        let xs = [-1.0, 1.0];
        let grid = linspace(-3.0, 3.0, 61);
        let est = kde_density(&xs, &grid).unwrap();
        for k in 0..61 {
            assert!((est.density[k] - est.density[60 - k]).abs() < 1e-6);
        }
        assert!((est.density[20] - est.density[40]).abs() < 1e-12);
        assert!(est.density[20] > est.density[30], "two points should give two modes");
        let mode = crate::train::argmax(&est.density[..31]);
        assert!(mode < 30 && est.density[mode] > est.density[30]);
        let sym = [-2.0, -0.5, 0.3, -0.3, 0.5, 2.0];
        let e = kde_density(&sym, &grid).unwrap();
        for k in 0..61 {
            assert!((e.density[k] - e.density[60 - k]).abs() < 1e-6);
        }
    }

    #[test]
    fn kde_point_mass() {
        assert!(matches!(kde_density(&[0.3, 0.3, 0.3], &[0.0]), Err(Error::PointMass { .. })));
    }

    #[test]
    fn ks_identical_and_disjoint() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0, 0.1], &[1.0, 1.1]).unwrap(), 1.0);
        assert!((ks_statistic(&[0.0, 1.0], &[0.5]).unwrap() - 0.5).abs() < 1e-15);
    }
}
