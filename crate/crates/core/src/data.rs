//! Binary-label image datasets: container, normalisation, deterministic
//! splits and a synthetic blob-versus-stripes generator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Grayscale images with binary labels (1 = positive / malignant).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    height: usize,
    width: usize,
    images: Vec<Vec<f64>>,
    labels: Vec<u8>,
    splits: Vec<Split>,
}

impl Dataset {
    /// All samples start tagged [`Split::Train`].
    pub fn new(height: usize, width: usize, images: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidSpec(format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some((i, img)) = images.iter().enumerate().find(|(_, im)| im.len() != height * width) {
            return Err(Error::Shape(format!("image {i} has {} pixels, expected {}x{}", img.len(), height, width)));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::InvalidSpec(format!("label {l} at index {i} is not 0 or 1")));
        }
        let splits = vec![Split::Train; labels.len()];
        Ok(Dataset { height, width, images, labels, splits })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.len().max(1) as f64
    }

    /// Samples tagged `split`, re-tagged as-is.
    pub fn subset(&self, split: Split) -> Dataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.splits[i] == split).collect();
        Dataset {
            height: self.height,
            width: self.width,
            images: keep.iter().map(|&i| self.images[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            splits: vec![split; keep.len()],
        }
    }

    /// Retags every sample.
    pub fn with_split(mut self, split: Split) -> Dataset {
        self.splits.iter_mut().for_each(|s| *s = split);
        self
    }

    pub fn pixel_range(&self) -> Option<(f64, f64)> {
        let mut it = self.images.iter().flatten().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Min-max scaling of each image on its own.
    #[default]
    PerImage,
    /// Min-max scaling with the dataset-wide extremes.
    Global,
}

/// Min-max scaling to `[0, 1]`. Constant images (or a constant dataset under
/// [`Normalization::Global`]) become all zeros.
pub fn normalize(dataset: &Dataset, mode: Normalization) -> Dataset {
    let scale = |img: &[f64], lo: f64, hi: f64| -> Vec<f64> {
        if hi > lo {
            img.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
        } else {
            vec![0.0; img.len()]
        }
    };
    let images = match mode {
        Normalization::PerImage => dataset
            .images
            .iter()
            .map(|img| {
                let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                scale(img, lo, hi)
            })
            .collect(),
        Normalization::Global => {
            let (lo, hi) = dataset.pixel_range().unwrap_or((0.0, 0.0));
            dataset.images.iter().map(|img| scale(img, lo, hi)).collect()
        }
    };
    Dataset { images, ..dataset.clone() }
}

/// Parameters of the synthetic blob-versus-stripes dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub height: usize,
    pub width: usize,
    /// Fraction of positive (stripe) samples.
    pub imbalance: f64,
    /// Additive Gaussian pixel noise.
    pub noise_std: f64,
    /// Blob width range in pixels.
    pub blob_sigma: (f64, f64),
    /// Stripe period range in pixels.
    pub stripe_period: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_samples: 250,
            height: 28,
            width: 28,
            imbalance: 0.27,
            noise_std: 0.1,
            blob_sigma: (3.0, 6.0),
            stripe_period: (4.0, 8.0),
            seed: 0,
        }
    }
}

/// Class 0: a roughly centred Gaussian blob. Class 1: diagonal stripes with
/// random period, phase and orientation. Pixels are clipped to `[0, 1]`.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n_samples < 2 || spec.height < 2 || spec.width < 2 {
        return Err(Error::InvalidSpec(format!(
            "synthetic dataset needs >= 2 samples of at least 2x2 pixels, got {} of {}x{}",
            spec.n_samples, spec.height, spec.width
        )));
    }
    if !(spec.imbalance > 0.0 && spec.imbalance < 1.0) {
        return Err(Error::InvalidSpec(format!("imbalance must be in (0,1), got {}", spec.imbalance)));
    }
    let n = spec.n_samples;
    let positives = libm::round(n as f64 * spec.imbalance).clamp(1.0, (n - 1) as f64) as usize;
    let mut rng = stream(spec.seed, Purpose::Data, 0);
    let mut labels: Vec<u8> = (0..n).map(|i| (i < positives) as u8).collect();
    labels.shuffle(&mut rng);
    let (h, w) = (spec.height, spec.width);
    let images = labels
        .iter()
        .map(|&label| {
            let mut img = vec![0.0; h * w];
            if label == 0 {
                let cy = (h as f64 - 1.0) / 2.0 + rng.random_range(-2.0..2.0);
                let cx = (w as f64 - 1.0) / 2.0 + rng.random_range(-2.0..2.0);
                let sigma = rng.random_range(spec.blob_sigma.0..=spec.blob_sigma.1);
                let amp = rng.random_range(0.7..1.0);
                for y in 0..h {
                    for x in 0..w {
                        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                        let r2 = dy * dy + dx * dx;
                        img[y * w + x] = amp * libm::exp(-r2 / (2.0 * sigma * sigma));
                    }
                }
            } else {
                let period = rng.random_range(spec.stripe_period.0..=spec.stripe_period.1);
                let phase = rng.random_range(0.0..2.0 * PI);
                let orient = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let amp = rng.random_range(0.7..1.0);
                for y in 0..h {
                    for x in 0..w {
                        let t = (x as f64 + orient * y as f64) / period;
                        img[y * w + x] = amp * (0.5 + 0.5 * libm::sin(2.0 * PI * t + phase));
                    }
                }
            }
            for v in img.iter_mut() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *v = (*v + spec.noise_std * noise).clamp(0.0, 1.0);
            }
            img
        })
        .collect();
    Dataset::new(h, w, images, labels)
}

/// Partition sizes for `fractions` (train, validation, test) of `n` samples,
/// by floor plus largest remainder.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || libm::fabs(fractions.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(Error::InvalidSpec(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for k in 0..3 {
        sizes[k] = libm::floor(raw[k] + 1e-9) as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (raw[b] - sizes[b] as f64).total_cmp(&(raw[a] - sizes[a] as f64)));
    let mut leftover = n.saturating_sub(sizes.iter().sum());
    for &k in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[k] += 1;
        leftover -= 1;
    }
    if let Some(k) = (0..3).find(|&k| sizes[k] == 0) {
        return Err(Error::InvalidSpec(format!("empty partition: {} split would hold 0 samples", Split::ALL[k].name())));
    }
    Ok(sizes)
}

/// Deterministic shuffled partition into train / validation / test tags.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    let sizes = split_sizes(dataset.len(), fractions)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut stream(seed, Purpose::Split, 0));
    let mut out = dataset.clone();
    for (rank, &i) in order.iter().enumerate() {
        out.splits[i] = if rank < sizes[0] {
            Split::Train
        } else if rank < sizes[0] + sizes[1] {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(2, 2, vec![vec![0.0, 64.0, 128.0, 255.0], vec![7.0; 4]], vec![1, 0]).unwrap()
    }

    #[test]
    fn min_max_examples() {
        let n = normalize(&tiny(), Normalization::PerImage);
        assert_eq!(n.images()[0], vec![0.0, 64.0 / 255.0, 128.0 / 255.0, 1.0]);
        assert_eq!(n.images()[1], vec![0.0; 4]);
        let again = normalize(&n, Normalization::PerImage);
        for (a, b) in again.images().iter().flatten().zip(n.images().iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = normalize(&tiny(), Normalization::Global);
        assert!((g.images()[1][0] - 7.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(2, 2, vec![vec![0.0; 4]], vec![2]).is_err());
        assert!(Dataset::new(2, 2, vec![vec![0.0; 3]], vec![0]).is_err());
        assert!(Dataset::new(2, 2, vec![vec![0.0; 4]], vec![]).is_err());
    }

    #[test]
    fn split_sizes_780() {
        assert_eq!(split_sizes(780, [0.7, 0.1, 0.2]).unwrap(), [546, 78, 156]);
        assert_eq!(split_sizes(10, [0.34, 0.33, 0.33]).unwrap().iter().sum::<usize>(), 10);
        let err = split_sizes(780, [1.0, 0.0, 0.0]).unwrap_err();
        assert!(format!("{err}").contains("empty partition"));
        assert!(split_sizes(10, [0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn split_is_deterministic_disjoint_exhaustive() {
        let ds = synth_generate(&SynthSpec { n_samples: 60, ..SynthSpec::default() }).unwrap();
        let a = split(&ds, [0.7, 0.1, 0.2], 3).unwrap();
        let b = split(&ds, [0.7, 0.1, 0.2], 3).unwrap();
        assert_eq!(a, b);
        let sizes: Vec<usize> = Split::ALL.iter().map(|&s| a.subset(s).len()).collect();
        assert_eq!(sizes, [42, 6, 12]);
        assert_eq!(sizes.iter().sum::<usize>(), ds.len());
        let c = split(&ds, [0.7, 0.1, 0.2], 4).unwrap();
        assert_ne!(a.splits(), c.splits());
    }

    #[test]
    fn synth_is_deterministic_and_imbalanced() {
        let spec = SynthSpec { n_samples: 200, seed: 11, ..SynthSpec::default() };
        let a = synth_generate(&spec).unwrap();
        assert_eq!(a, synth_generate(&spec).unwrap());
        assert!((a.positive_fraction() - 0.27).abs() <= 1.0 / 200.0);
        let (lo, hi) = a.pixel_range().unwrap();
        assert!(lo >= 0.0 && hi <= 1.0);
        assert!(synth_generate(&SynthSpec { n_samples: 1, ..spec }).is_err());
        assert!(synth_generate(&SynthSpec { imbalance: 0.0, ..spec }).is_err());
    }
}
