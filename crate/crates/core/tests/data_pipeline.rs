//! The synthetic data, after normalization and splitting, must be learnable
//! by a small classical reference model on handcrafted features.

use rand::Rng;
use rand::seq::SliceRandom;

use qcbnn_core::data::{normalize, split, synth_generate, Normalization, Split, SynthSpec};
use qcbnn_core::rng::{stream, Purpose};

const HIDDEN: usize = 8;

fn features(img: &[f64], h: usize, w: usize) -> [f64; 4] {
    let n = img.len() as f64;
    let mean = img.iter().sum::<f64>() / n;
    let var = img.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let (mut dx, mut dy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                dx += (img[y * w + x + 1] - img[y * w + x]).abs();
            }
            if y + 1 < h {
                dy += (img[(y + 1) * w + x] - img[y * w + x]).abs();
            }
        }
    }
    [mean, var, dx / (h * (w - 1)) as f64, dy / ((h - 1) * w) as f64]
}

struct Mlp {
    w1: [[f64; 4]; HIDDEN],
    b1: [f64; HIDDEN],
    w2: [[f64; HIDDEN]; 2],
    b2: [f64; 2],
}

impl Mlp {
    fn init(seed: u64) -> Self {
        let mut rng = stream(seed, Purpose::Init, 99);
        let mut u = |scale: f64| rng.random_range(-scale..scale);
        Mlp {
            w1: core::array::from_fn(|_| core::array::from_fn(|_| u(0.5))),
            b1: [0.0; HIDDEN],
            w2: core::array::from_fn(|_| core::array::from_fn(|_| u(0.35))),
            b2: [0.0; 2],
        }
    }

    fn forward(&self, x: &[f64; 4]) -> ([f64; HIDDEN], [f64; 2]) {
        let hidden: [f64; HIDDEN] =
            core::array::from_fn(|j| (self.b1[j] + (0..4).map(|i| self.w1[j][i] * x[i]).sum::<f64>()).tanh());
        let logits = core::array::from_fn(|k| self.b2[k] + (0..HIDDEN).map(|j| self.w2[k][j] * hidden[j]).sum::<f64>());
        (hidden, logits)
    }

    fn sgd_step(&mut self, x: &[f64; 4], label: usize, lr: f64) {
        let (hidden, logits) = self.forward(x);
        let m = logits[0].max(logits[1]);
        let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
        let z = e[0] + e[1];
        let dlogit = [e[0] / z - f64::from(label == 0), e[1] / z - f64::from(label == 1)];
        let mut dhidden = [0.0; HIDDEN];
        for k in 0..2 {
            for j in 0..HIDDEN {
                dhidden[j] += dlogit[k] * self.w2[k][j];
                self.w2[k][j] -= lr * dlogit[k] * hidden[j];
            }
            self.b2[k] -= lr * dlogit[k];
        }
        for j in 0..HIDDEN {
            let g = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
            for i in 0..4 {
                self.w1[j][i] -= lr * g * x[i];
            }
            self.b1[j] -= lr * g;
        }
    }

    fn predict(&self, x: &[f64; 4]) -> usize {
        let (_, l) = self.forward(x);
        usize::from(l[1] > l[0])
    }
}

#[test]
fn reference_classifier_learns_synthetic_train_split() {
    let raw = synth_generate(&SynthSpec { n_samples: 250, seed: 3, ..SynthSpec::default() }).unwrap();
    let data = split(&normalize(&raw, Normalization::PerImage), [0.8, 0.04, 0.16], 3).unwrap();
    let train = data.subset(Split::Train);
    assert_eq!(train.len(), 200);
    let mut xs: Vec<[f64; 4]> = train.images().iter().map(|img| features(img, train.height(), train.width())).collect();
    for i in 0..4 {
        let mean = xs.iter().map(|x| x[i]).sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt().max(1e-12);
        xs.iter_mut().for_each(|x| x[i] = (x[i] - mean) / sd);
    }
    let labels: Vec<usize> = train.labels().iter().map(|&l| usize::from(l)).collect();
    let mut mlp = Mlp::init(0);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = stream(0, Purpose::Shuffle, 0);
    for _ in 0..50 {
        order.shuffle(&mut rng);
        for &i in &order {
            mlp.sgd_step(&xs[i], labels[i], 0.05);
        }
    }
    let correct = xs.iter().zip(&labels).filter(|(x, &l)| mlp.predict(x) == l).count();
    let acc = correct as f64 / xs.len() as f64;
    assert!(acc >= 0.9, "train accuracy {acc}");
}

#[test]
fn split_is_a_deterministic_partition() {
    let raw = synth_generate(&SynthSpec { n_samples: 50, height: 6, width: 6, ..SynthSpec::default() }).unwrap();
    let a = split(&raw, [0.7, 0.1, 0.2], 9).unwrap();
    let b = split(&raw, [0.7, 0.1, 0.2], 9).unwrap();
    assert_eq!(a.splits(), b.splits());
    let sizes: Vec<usize> = [Split::Train, Split::Validation, Split::Test].iter().map(|&s| a.subset(s).len()).collect();
    assert_eq!(sizes, vec![35, 5, 10]);
}
