//! Adversarial variational inference for the stochastic-weight classifier,
//! the plain-VI baseline, and ensemble prediction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{softmax, Adam, AdamConfig, Tape, Tensor, Var};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::ks_statistic;
use crate::rng::{stream, Purpose};
use crate::samplers::{
    prior_sample, ClassicalGenerator, Discriminator, GaussianPosterior, NoiseLaw, PriorSpec, QuantumGenerator,
    Sampler, WeightSample, CHUNK_DIM, KERNEL_SHAPE, N_CHUNKS,
};
use crate::zoo::{assemble_pqc, PqcSpec};

/// Binary classification.
pub const CLASSES: usize = 2;

/// Which weight source the model trains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorKind {
    Quantum(PqcSpec),
    Classical { noise_dim: usize },
    /// Mean-field Gaussian with analytic KL, used by the plain-VI baseline.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub generator: GeneratorKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight samples per step for the Monte Carlo expectations.
    pub mc_samples: usize,
    /// Ensemble size for per-epoch accuracy.
    pub eval_ensemble: usize,
    /// Ensemble size for final evaluation.
    pub ensemble: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lr_classifier: f64,
    pub disc_steps: usize,
    pub noise: NoiseLaw,
    pub prior: PriorSpec,
    /// Prior standard deviation for the Gaussian posterior's KL.
    pub vi_prior_std: f64,
    pub stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            generator: GeneratorKind::Quantum(PqcSpec::default()),
            epochs: 50,
            batch_size: 16,
            mc_samples: 1,
            eval_ensemble: 10,
            ensemble: 100,
            alpha: 1.0,
            beta: 1.0,
            lr_generator: 1e-3,
            lr_discriminator: 1e-2,
            lr_classifier: 1e-3,
            disc_steps: 1,
            noise: NoiseLaw::default(),
            prior: PriorSpec::default(),
            vi_prior_std: 0.5,
            stride: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("mc_samples", self.mc_samples),
            ("eval_ensemble", self.eval_ensemble),
            ("ensemble", self.ensemble),
            ("disc_steps", self.disc_steps),
            ("stride", self.stride),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidSpec(format!("{name} must be positive")));
        }
        let weights = [("alpha", self.alpha), ("beta", self.beta)];
        if let Some((name, v)) = weights.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidSpec(format!("{name} must be a non-negative number, got {v}")));
        }
        let rates = [
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_classifier", self.lr_classifier),
            ("vi_prior_std", self.vi_prior_std),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
        }
        if let GeneratorKind::Classical { noise_dim: 0 } = self.generator {
            return Err(Error::InvalidSpec(String::from("noise_dim must be positive")));
        }
        self.noise.validate()?;
        self.prior.validate()
    }
}

/// Loss terms of one step or the mean over an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// `−E[log p(D|w)]`, minibatch-scaled to the full training set.
    pub likelihood: f64,
    /// Adversarial KL estimate (mean chunk logit) or analytic KL per chunk,
    /// plus the likelihood term.
    pub kl_term: f64,
    /// Discriminator objective before its update.
    pub discriminator: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossBreakdown {
    pub fn combined(&self) -> f64 {
        self.alpha * self.likelihood + self.beta * self.kl_term
    }

    fn mean_of(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let first = items.first().copied().unwrap_or_default();
        LossBreakdown {
            likelihood: items.iter().map(|l| l.likelihood).sum::<f64>() / n,
            kl_term: items.iter().map(|l| l.kl_term).sum::<f64>() / n,
            discriminator: items.iter().map(|l| l.discriminator).sum::<f64>() / n,
            alpha: first.alpha,
            beta: first.beta,
        }
    }
}

/// Conv (stochastic kernels, no bias) → ReLU → dense with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub weight: Tensor,
    pub bias: Tensor,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
}

impl Classifier {
    pub fn feature_shape(height: usize, width: usize, stride: usize) -> Result<[usize; 3]> {
        let [f, kh, kw] = KERNEL_SHAPE;
        if height < kh || width < kw || stride == 0 {
            return Err(Error::Shape(format!("{height}x{width} image cannot take {kh}x{kw} kernels at stride {stride}")));
        }
        Ok([f, (height - kh) / stride + 1, (width - kw) / stride + 1])
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize, stride: usize) -> Result<Self> {
        let n: usize = Self::feature_shape(height, width, stride)?.iter().product();
        let std = libm::sqrt(2.0 / (n + CLASSES) as f64);
        let data = (0..CLASSES * n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
            .collect();
        Ok(Classifier {
            weight: Tensor::new(vec![CLASSES, n], data)?,
            bias: Tensor::zeros(vec![CLASSES]),
            height,
            width,
            stride,
        })
    }

    /// Logits for one image under flat kernels `[16·2·2]`.
    pub fn logits(&self, kernels: &[f64], image: &[f64]) -> Vec<f64> {
        let [f, kh, kw] = KERNEL_SHAPE;
        let (oh, ow) = ((self.height - kh) / self.stride + 1, (self.width - kw) / self.stride + 1);
        let n = f * oh * ow;
        let w = self.weight.data();
        let mut out: Vec<f64> = self.bias.data().to_vec();
        for fi in 0..f {
            let k = &kernels[fi * kh * kw..(fi + 1) * kh * kw];
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = 0.0;
                    for a in 0..kh {
                        let row = (r * self.stride + a) * self.width + c * self.stride;
                        for b in 0..kw {
                            acc += k[a * kw + b] * image[row + b];
                        }
                    }
                    if acc > 0.0 {
                        let j = (fi * oh + r) * ow + c;
                        for (cls, o) in out.iter_mut().enumerate() {
                            *o += w[cls * n + j] * acc;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Every trainable tensor plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub sampler: Sampler,
    pub classifier: Classifier,
    pub discriminator: Discriminator,
    pub noise: NoiseLaw,
    pub opt_sampler: Adam,
    pub opt_classifier: Adam,
    pub opt_discriminator: Adam,
    pub step: u64,
}

impl ModelState {
    pub fn init(config: &TrainConfig, height: usize, width: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, Purpose::Init, 0);
        let sampler = match config.generator {
            GeneratorKind::Quantum(spec) => Sampler::Quantum(QuantumGenerator::init(&mut rng, assemble_pqc(&spec)?)?),
            GeneratorKind::Classical { noise_dim } => {
                Sampler::Classical(ClassicalGenerator::init(&mut rng, noise_dim, &config.noise))
            }
            GeneratorKind::Gaussian => Sampler::Gaussian(GaussianPosterior::init(&mut rng, config.vi_prior_std, 0.1)),
        };
        let classifier = Classifier::init(&mut stream(config.seed, Purpose::Init, 1), height, width, config.stride)?;
        let discriminator = Discriminator::init(&mut stream(config.seed, Purpose::Init, 2));
        Ok(ModelState {
            sampler,
            classifier,
            discriminator,
            noise: config.noise,
            opt_sampler: Adam::new(AdamConfig::with_rate(config.lr_generator)),
            opt_classifier: Adam::new(AdamConfig::with_rate(config.lr_classifier)),
            opt_discriminator: Adam::new(AdamConfig::with_rate(config.lr_discriminator)),
            step: 0,
        })
    }

    /// Parameters as `(name, tensor)` pairs for checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .sampler
            .params()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (format!("sampler.{}.{i}", self.sampler.name()), t.clone()))
            .collect();
        out.push((String::from("classifier.weight"), self.classifier.weight.clone()));
        out.push((String::from("classifier.bias"), self.classifier.bias.clone()));
        for (i, t) in self.discriminator.params.iter().enumerate() {
            out.push((format!("discriminator.{i}"), t.clone()));
        }
        out.push((String::from("step"), Tensor::scalar(self.step as f64)));
        out
    }

    /// Inverse of [`named_tensors`](Self::named_tensors); names and shapes must match.
    pub fn load_named(&mut self, items: &[(String, Tensor)]) -> Result<()> {
        let current = self.named_tensors();
        if items.len() != current.len() {
            return Err(Error::Shape(format!("checkpoint holds {} tensors, model has {}", items.len(), current.len())));
        }
        for ((name, t), (want, cur)) in items.iter().zip(&current) {
            if name != want || t.shape() != cur.shape() {
                return Err(Error::Shape(format!("checkpoint tensor {name} {:?}, expected {want} {:?}", t.shape(), cur.shape())));
            }
        }
        let ns = self.sampler.params().len();
        self.sampler.with_params_mut(|p| {
            for (dst, (_, src)) in p.iter_mut().zip(items) {
                *dst = src.clone();
            }
        });
        self.classifier.weight = items[ns].1.clone();
        self.classifier.bias = items[ns + 1].1.clone();
        for (k, dst) in self.discriminator.params.iter_mut().enumerate() {
            *dst = items[ns + 2 + k].1.clone();
        }
        self.step = items[items.len() - 1].1.data()[0] as u64;
        Ok(())
    }
}

/// Gradients of the combined loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGrads {
    pub sampler: Vec<Tensor>,
    pub classifier: [Tensor; 2],
}

/// Combined loss `α·lik + β·kl_term` on a minibatch under the given weight
/// samples, and its gradients for the sampler and classifier. The
/// likelihood is scaled by `n_total / batch`.
pub fn combined_objective(
    model: &ModelState,
    images: &[&[f64]],
    labels: &[u8],
    samples: &[WeightSample],
    n_total: usize,
    alpha: f64,
    beta: f64,
    vi_prior_std: f64,
) -> Result<(LossBreakdown, ObjectiveGrads)> {
    if images.len() != labels.len() {
        return Err(Error::Shape(format!("{} images vs {} labels", images.len(), labels.len())));
    }
    if samples.is_empty() {
        return Err(Error::Empty("weight samples"));
    }
    let cls = &model.classifier;
    let mut tape = Tape::new();
    let cw = tape.param(cls.weight.clone());
    let cb = tape.param(cls.bias.clone());
    let dp: Vec<Var> = model.discriminator.params.iter().map(|t| tape.constant(t.clone())).collect();
    let image_vars: Vec<Var> = images
        .iter()
        .map(|im| Tensor::new(vec![cls.height, cls.width], im.to_vec()).map(|t| tape.constant(t)))
        .collect::<Result<_>>()?;
    let vi_kl = match &model.sampler {
        Sampler::Gaussian(g) => Some(g.kl_to_gaussian(vi_prior_std)),
        _ => None,
    };
    let scale = if images.is_empty() { 0.0 } else { n_total as f64 / images.len() as f64 };
    let (mut lik_sum, mut kl_sum) = (0.0, 0.0);
    let mut weight_vars = Vec::with_capacity(samples.len());
    let mut totals = Vec::with_capacity(samples.len());
    for s in samples {
        let wv = tape.param(Tensor::vector(s.flat()));
        weight_vars.push(wv);
        let k = tape.reshape(wv, KERNEL_SHAPE.to_vec())?;
        let lik = if images.is_empty() {
            tape.constant(Tensor::scalar(0.0))
        } else {
            let mut ce = Vec::with_capacity(images.len());
            for (&x, &y) in image_vars.iter().zip(labels) {
                let c = tape.conv2d(x, k, cls.stride)?;
                let r = tape.relu(c)?;
                let z = tape.dense(r, cw, cb)?;
                ce.push(tape.softmax_cross_entropy(z, y as usize)?);
            }
            let all = tape.concat(&ce)?;
            let nll = tape.sum(all)?;
            tape.scale(nll, scale)?
        };
        let reg = match &vi_kl {
            Some((kl, _)) => tape.constant(Tensor::scalar(kl / N_CHUNKS as f64)),
            None => {
                let mut logits = Vec::with_capacity(s.chunks.len());
                for c in 0..s.chunks.len() {
                    let chunk = tape.slice(wv, c * CHUNK_DIM, CHUNK_DIM)?;
                    let d = Discriminator::on_tape(&mut tape, &dp, chunk)?;
                    logits.push(tape.logit(d)?);
                }
                let all = tape.concat(&logits)?;
                tape.mean(all)?
            }
        };
        let kl = tape.add(reg, lik)?;
        lik_sum += tape.scalar(lik)?;
        kl_sum += tape.scalar(kl)?;
        let a = tape.scale(lik, alpha)?;
        let b = tape.scale(kl, beta)?;
        totals.push(tape.add(a, b)?);
    }
    let all = tape.concat(&totals)?;
    let loss = tape.mean(all)?;
    let n = samples.len() as f64;
    let breakdown =
        LossBreakdown { likelihood: lik_sum / n, kl_term: kl_sum / n, discriminator: 0.0, alpha, beta };
    let grads = tape.backward(loss)?;
    let mut sampler_grads: Vec<Tensor> =
        model.sampler.params().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    for (s, &wv) in samples.iter().zip(&weight_vars) {
        let up = grads.get_or_zeros(wv, &tape)?;
        for (acc, g) in sampler_grads.iter_mut().zip(model.sampler.pullback(s, up.data())?) {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
    }
    if let Some((_, kl_grads)) = &vi_kl {
        let w = beta / N_CHUNKS as f64;
        for (acc, g) in sampler_grads.iter_mut().zip(kl_grads) {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += w * v;
            }
        }
    }
    let classifier = [grads.get_or_zeros(cw, &tape)?, grads.get_or_zeros(cb, &tape)?];
    Ok((breakdown, ObjectiveGrads { sampler: sampler_grads, classifier }))
}

/// `L_KL = E_w[mean_chunks logit d(chunk) − log p(D|w)]` with the likelihood
/// under the minibatch scaling; this is the `kl_term` of the breakdown.
pub fn generator_loss(
    model: &ModelState,
    images: &[&[f64]],
    labels: &[u8],
    samples: &[WeightSample],
    n_total: usize,
) -> Result<f64> {
    Ok(combined_objective(model, images, labels, samples, n_total, 0.0, 1.0, 1.0)?.0.kl_term)
}

/// `mean log d(generated) + mean log(1 − d(prior))`.
pub fn discriminator_loss(
    discriminator: &Discriminator,
    prior: &[[f64; CHUNK_DIM]],
    generated: &[[f64; CHUNK_DIM]],
) -> Result<f64> {
    discriminator.objective(prior, generated)
}

fn negate(ts: &mut [Tensor]) {
    for t in ts {
        for v in t.data_mut() {
            *v = -*v;
        }
    }
}

/// Ascends the discriminator objective `steps` times; returns the value
/// before the first update.
fn discriminator_phase(
    model: &mut ModelState,
    generated: &[[f64; CHUNK_DIM]],
    prior_spec: &PriorSpec,
    seed: u64,
    steps: usize,
) -> Result<f64> {
    let mut first = 0.0;
    for j in 0..steps {
        let mut rng = stream(seed, Purpose::Prior, model.step * steps as u64 + j as u64);
        let prior: Vec<_> = (0..generated.len()).map(|_| prior_sample(prior_spec, &mut rng)).collect();
        let (value, mut g) = model.discriminator.objective_with_grad(&prior, generated, true)?;
        if j == 0 {
            first = value;
        }
        negate(&mut g);
        model.opt_discriminator.step(&mut model.discriminator.params, &g)?;
    }
    Ok(first)
}

/// One minibatch update: draw weights, ascend the discriminator, then descend
/// sampler and classifier on the combined loss.
pub fn train_step(
    model: &mut ModelState,
    images: &[&[f64]],
    labels: &[u8],
    n_total: usize,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let mc = config.mc_samples as u64;
    let samples = (0..mc)
        .map(|s| model.sampler.sample(&mut stream(config.seed, Purpose::Noise, model.step * mc + s), &model.noise))
        .collect::<Result<Vec<_>>>()?;
    let adversarial = !matches!(model.sampler, Sampler::Gaussian(_));
    let disc = if adversarial {
        let generated: Vec<_> = samples.iter().flat_map(|s| s.chunks.iter().copied()).collect();
        discriminator_phase(model, &generated, &config.prior, config.seed, config.disc_steps)?
    } else {
        0.0
    };
    let (mut breakdown, grads) =
        combined_objective(model, images, labels, &samples, n_total, config.alpha, config.beta, config.vi_prior_std)?;
    breakdown.discriminator = disc;
    let combined = breakdown.combined();
    if !combined.is_finite() {
        return Err(Error::Diverged { step: model.step as usize, value: combined });
    }
    let ModelState { sampler, classifier, opt_sampler, opt_classifier, .. } = model;
    sampler.with_params_mut(|p| opt_sampler.step(p, &grads.sampler))?;
    let mut cp = [core::mem::take(&mut classifier.weight), core::mem::take(&mut classifier.bias)];
    let res = opt_classifier.step(&mut cp, &grads.classifier);
    let [w, b] = cp;
    classifier.weight = w;
    classifier.bias = b;
    res?;
    model.step += 1;
    Ok(breakdown)
}

/// Per-step losses of one epoch and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub steps: Vec<LossBreakdown>,
    pub mean: LossBreakdown,
}

/// One pass over `data` in a shuffled order fixed by `(seed, epoch)`.
pub fn train_epoch(model: &mut ModelState, data: &Dataset, config: &TrainConfig, epoch: usize) -> Result<EpochTrace> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream(config.seed, Purpose::Shuffle, epoch as u64));
    let mut steps = Vec::with_capacity(data.len().div_ceil(config.batch_size));
    for batch in order.chunks(config.batch_size) {
        let images: Vec<&[f64]> = batch.iter().map(|&i| data.images()[i].as_slice()).collect();
        let labels: Vec<u8> = batch.iter().map(|&i| data.labels()[i]).collect();
        steps.push(train_step(model, &images, &labels, data.len(), config)?);
    }
    let mean = LossBreakdown::mean_of(&steps);
    Ok(EpochTrace { steps, mean })
}

/// Ensemble-averaged prediction for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub probabilities: Vec<f64>,
    pub predicted: usize,
    pub member_votes: Vec<usize>,
}

impl EnsemblePrediction {
    pub fn ensemble_size(&self) -> usize {
        self.member_votes.len()
    }

    /// Averaged probability of the predicted class.
    pub fn confidence(&self) -> f64 {
        self.probabilities[self.predicted]
    }

    /// Share of members voting for the final class.
    pub fn ensemble_fraction(&self) -> f64 {
        crate::metrics::ensemble_fraction(&self.member_votes, self.predicted).unwrap_or(0.0)
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// `N` weight draws for evaluation; member `i` of round `r` always uses the
/// same random stream.
pub fn draw_ensemble(model: &ModelState, n: usize, seed: u64, round: u64) -> Result<Vec<WeightSample>> {
    (0..n as u64)
        .map(|i| model.sampler.sample(&mut stream(seed, Purpose::Evaluation, (round << 32) | i), &model.noise))
        .collect()
}

/// Averages member softmax outputs over the given weight samples.
pub fn predict_with_samples(
    model: &ModelState,
    images: &[&[f64]],
    samples: &[WeightSample],
) -> Result<Vec<EnsemblePrediction>> {
    if samples.is_empty() {
        return Err(Error::Empty("ensemble members"));
    }
    let cls = &model.classifier;
    let pixels = cls.height * cls.width;
    let kernels: Vec<Vec<f64>> = samples.iter().map(WeightSample::flat).collect();
    images
        .iter()
        .map(|im| {
            if im.len() != pixels {
                return Err(Error::Shape(format!("image has {} pixels, classifier expects {pixels}", im.len())));
            }
            let mut sum = [0.0; CLASSES];
            let mut votes = Vec::with_capacity(kernels.len());
            for k in &kernels {
                let p = softmax(&cls.logits(k, im));
                votes.push(argmax(&p));
                for (s, v) in sum.iter_mut().zip(&p) {
                    *s += v;
                }
            }
            let probabilities: Vec<f64> = sum.iter().map(|s| s / kernels.len() as f64).collect();
            Ok(EnsemblePrediction { predicted: argmax(&probabilities), probabilities, member_votes: votes })
        })
        .collect()
}

/// Ensemble of `n` fresh weight draws.
pub fn predict_ensemble(
    model: &ModelState,
    images: &[&[f64]],
    n: usize,
    seed: u64,
    round: u64,
) -> Result<Vec<EnsemblePrediction>> {
    if n == 0 {
        return Err(Error::Empty("ensemble size"));
    }
    predict_with_samples(model, images, &draw_ensemble(model, n, seed, round)?)
}

pub fn accuracy(predictions: &[EnsemblePrediction], labels: &[u8]) -> f64 {
    let hits = predictions.iter().zip(labels).filter(|(p, &l)| p.predicted == l as usize).count();
    hits as f64 / labels.len().max(1) as f64
}

pub fn image_refs(data: &Dataset) -> Vec<&[f64]> {
    data.images().iter().map(Vec::as_slice).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

/// Full training run; `on_epoch` sees each record as soon as it exists.
pub fn train_with(
    config: &TrainConfig,
    train_set: &Dataset,
    validation: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelState, Vec<EpochRecord>)> {
    let mut model = ModelState::init(config, train_set.height(), train_set.width())?;
    let train_images = image_refs(train_set);
    let val_images = validation.map(image_refs);
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let trace = train_epoch(&mut model, train_set, config, epoch)?;
        let round = epoch as u64 + 1;
        let preds = predict_ensemble(&model, &train_images, config.eval_ensemble, config.seed, round)?;
        let train_accuracy = accuracy(&preds, train_set.labels());
        let validation_accuracy = match (validation, &val_images) {
            (Some(v), Some(imgs)) if !v.is_empty() => {
                let p = predict_ensemble(&model, imgs, config.eval_ensemble, config.seed, round)?;
                Some(accuracy(&p, v.labels()))
            }
            _ => None,
        };
        let record = EpochRecord { epoch, losses: trace.mean, train_accuracy, validation_accuracy };
        on_epoch(&record);
        records.push(record);
    }
    Ok((model, records))
}

pub fn train(
    config: &TrainConfig,
    train_set: &Dataset,
    validation: Option<&Dataset>,
) -> Result<(ModelState, Vec<EpochRecord>)> {
    train_with(config, train_set, validation, |_| {})
}

/// Same machinery with a mean-field Gaussian posterior and analytic KL in
/// place of the classical generator and discriminator.
pub fn plain_vi_baseline(
    config: &TrainConfig,
    train_set: &Dataset,
    validation: Option<&Dataset>,
) -> Result<(ModelState, Vec<EpochRecord>)> {
    match config.generator {
        GeneratorKind::Quantum(_) => Err(Error::Unsupported("plain VI baseline needs the classical generator")),
        _ => train(&TrainConfig { generator: GeneratorKind::Gaussian, ..*config }, train_set, validation),
    }
}

/// Settings for the data-free distribution-matching check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub steps: usize,
    /// Weight samples (16 chunks each) per step.
    pub batch_samples: usize,
    pub noise_dim: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub disc_steps: usize,
    pub noise: NoiseLaw,
    pub prior: PriorSpec,
    /// Chunks drawn from each side for the KS statistic.
    pub eval_draws: usize,
    pub eval_every: usize,
    /// Added to the generator's output biases at initialization, moving the
    /// starting distribution away from the prior.
    pub init_shift: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            steps: 2000,
            batch_samples: 4,
            noise_dim: 4,
            lr_generator: 1e-3,
            lr_discriminator: 1e-2,
            disc_steps: 1,
            noise: NoiseLaw::default(),
            prior: PriorSpec::default(),
            eval_draws: 1000,
            eval_every: 100,
            init_shift: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCheckpoint {
    pub step: usize,
    pub ks: f64,
    pub discriminator: f64,
    pub generator: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyReport {
    pub trace: Vec<ToyCheckpoint>,
    /// Pooled components of the final generated and prior draws.
    pub generated: Vec<f64>,
    pub prior: Vec<f64>,
}

impl ToyReport {
    pub fn final_ks(&self) -> f64 {
        self.trace.last().map_or(1.0, |c| c.ks)
    }

    pub fn initial_ks(&self) -> f64 {
        self.trace.first().map_or(1.0, |c| c.ks)
    }

    /// First checkpoint after training started whose KS statistic is below
    /// `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<&ToyCheckpoint> {
        self.trace.iter().skip(1).find(|c| c.ks < threshold)
    }
}

fn toy_ks(sampler: &Sampler, config: &ToyConfig, step: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n_samples = config.eval_draws.div_ceil(N_CHUNKS);
    let mut generated = Vec::with_capacity(n_samples * N_CHUNKS * CHUNK_DIM);
    for i in 0..n_samples as u64 {
        let s = sampler.sample(&mut stream(config.seed, Purpose::Evaluation, ((step as u64) << 32) | i), &config.noise)?;
        generated.extend(s.chunks.iter().take(config.eval_draws - (i as usize) * N_CHUNKS).flatten());
    }
    let mut rng = stream(config.seed, Purpose::Inspection, step as u64);
    let prior: Vec<f64> = (0..config.eval_draws).flat_map(|_| prior_sample(&config.prior, &mut rng)).collect();
    Ok((ks_statistic(&generated, &prior)?, generated, prior))
}

/// Trains a classical generator against the prior with the adversarial KL
/// estimate alone and tracks the KS distance between pooled generated and
/// prior components.
pub fn toy_adversarial(config: &ToyConfig) -> Result<ToyReport> {
    if config.steps == 0 || config.batch_samples == 0 || config.eval_every == 0 || config.eval_draws == 0 || !config.init_shift.is_finite() {
        return Err(Error::InvalidSpec(String::from("toy steps, batch, eval interval and draws must be positive")));
    }
    config.noise.validate()?;
    config.prior.validate()?;
    let train_config = TrainConfig {
        generator: GeneratorKind::Classical { noise_dim: config.noise_dim },
        noise: config.noise,
        prior: config.prior,
        lr_generator: config.lr_generator,
        lr_discriminator: config.lr_discriminator,
        disc_steps: config.disc_steps,
        mc_samples: config.batch_samples,
        alpha: 0.0,
        beta: 1.0,
        seed: config.seed,
        ..TrainConfig::default()
    };
    let mut model = ModelState::init(&train_config, KERNEL_SHAPE[1], KERNEL_SHAPE[2])?;
    model.sampler.with_params_mut(|params| {
        if let Some(bias) = params.last_mut() {
            bias.data_mut().iter_mut().for_each(|b| *b += config.init_shift);
        }
    });
    let (ks, g, p) = toy_ks(&model.sampler, config, 0)?;
    let mut trace = vec![ToyCheckpoint { step: 0, ks, discriminator: f64::NAN, generator: f64::NAN }];
    let mut last = (g, p);
    for step in 0..config.steps {
        let losses = train_step(&mut model, &[], &[], 0, &train_config)?;
        let done = step + 1;
        if done % config.eval_every == 0 || done == config.steps {
            let (ks, g, p) = toy_ks(&model.sampler, config, done)?;
            trace.push(ToyCheckpoint { step: done, ks, discriminator: losses.discriminator, generator: losses.kl_term });
            last = (g, p);
        }
    }
    Ok(ToyReport { trace, generated: last.0, prior: last.1 })
}
