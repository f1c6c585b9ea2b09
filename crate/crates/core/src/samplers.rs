//! Stochastic weight generators and their adversarial trainers: quantum and
//! classical samplers, a Gaussian posterior for plain VI, the prior and the
//! discriminator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::circuit::CircuitTemplate;
use crate::error::{Error, Result};

/// Components per sampler pass.
pub const CHUNK_DIM: usize = 4;
/// Passes per weight sample.
pub const N_CHUNKS: usize = 16;
/// Conv kernel tensor shape `[F, kh, kw]`.
pub const KERNEL_SHAPE: [usize; 3] = [16, 2, 2];
/// Discriminator output is clamped to `[ε, 1 − ε]`.
pub const DISC_EPSILON: f64 = 1e-7;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLaw {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl Default for NoiseLaw {
    fn default() -> Self {
        NoiseLaw::Uniform { lo: 0.0, hi: 2.0 * PI }
    }
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            NoiseLaw::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("bad noise law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            NoiseLaw::Gaussian { mean, .. } => mean,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseLaw::Uniform { lo, hi } if lo < hi => rng.random_range(lo..hi),
            NoiseLaw::Uniform { lo, .. } => lo,
            NoiseLaw::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
        }
    }
}

/// One noise input for one sampler pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector {
    pub values: Vec<f64>,
}

pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, law: &NoiseLaw, dim: usize) -> NoiseVector {
    NoiseVector { values: (0..dim).map(|_| law.draw(rng)).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PriorSpec {
    #[default]
    Uniform,
    ClippedGaussian { mean: f64, std: f64 },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorSpec::ClippedGaussian { mean, std } if !(mean.is_finite() && std.is_finite() && std >= 0.0) => {
                Err(Error::InvalidSpec(format!("bad prior {self:?}")))
            }
            _ => Ok(()),
        }
    }
}

/// One chunk from the prior, inside `[−1, 1]⁴`.
pub fn prior_sample<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> [f64; CHUNK_DIM] {
    let mut out = [0.0; CHUNK_DIM];
    for v in &mut out {
        *v = match *spec {
            PriorSpec::Uniform => rng.random_range(-1.0..=1.0),
            PriorSpec::ClippedGaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                (mean + std * z).clamp(-1.0, 1.0)
            }
        };
    }
    out
}

/// `ln(p / (1 − p))` on the open unit interval.
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain { what: "logit", value: p });
    }
    Ok(libm::log(p / (1.0 - p)))
}

/// One draw of the 64 convolution weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample {
    pub chunks: Vec<[f64; CHUNK_DIM]>,
    pub noise: Vec<NoiseVector>,
}

impl WeightSample {
    pub fn flat(&self) -> Vec<f64> {
        self.chunks.iter().flatten().copied().collect()
    }

    /// Kernels as a `[16, 2, 2]` tensor.
    pub fn kernels(&self) -> Tensor {
        Tensor::from_parts(KERNEL_SHAPE.to_vec(), self.flat())
    }

    pub fn from_flat(flat: &[f64], noise: Vec<NoiseVector>) -> Result<Self> {
        if !flat.len().is_multiple_of(CHUNK_DIM) {
            return Err(Error::Shape(format!("{} weights do not split into chunks of {CHUNK_DIM}", flat.len())));
        }
        let chunks = flat.chunks(CHUNK_DIM).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        Ok(WeightSample { chunks, noise })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Tanh,
    Leaky,
    Sigmoid,
}

fn act(a: Act, x: f64) -> f64 {
    match a {
        Act::Tanh => libm::tanh(x),
        Act::Leaky => {
            if x > 0.0 {
                x
            } else {
                LEAKY_SLOPE * x
            }
        }
        Act::Sigmoid => crate::autodiff::sigmoid(x).clamp(DISC_EPSILON, 1.0 - DISC_EPSILON),
    }
}

fn tape_act(tape: &mut Tape, a: Act, v: Var) -> Result<Var> {
    match a {
        Act::Tanh => tape.tanh(v),
        Act::Leaky => tape.leaky_relu(v, LEAKY_SLOPE),
        Act::Sigmoid => {
            let s = tape.sigmoid(v)?;
            tape.clamp(s, DISC_EPSILON, 1.0 - DISC_EPSILON)
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    Tensor::from_parts(vec![rows, cols], data)
}

/// Two-layer perceptron `out(W2·hidden(W1·x + b1) + b2)` over the parameter
/// list `[W1, b1, W2, b2]`.
fn mlp_forward(p: &[Tensor], x: &[f64], hidden: Act, out: Act) -> Vec<f64> {
    let layer = |w: &Tensor, b: &Tensor, x: &[f64], a: Act| -> Vec<f64> {
        let n = w.shape()[1];
        w.data()
            .chunks(n)
            .zip(b.data())
            .map(|(row, &bias)| act(a, bias + row.iter().zip(x).map(|(u, v)| u * v).sum::<f64>()))
            .collect()
    };
    let h = layer(&p[0], &p[1], x, hidden);
    layer(&p[2], &p[3], &h, out)
}

fn mlp_tape(tape: &mut Tape, p: &[Var], x: Var, hidden: Act, out: Act) -> Result<Var> {
    let z = tape.dense(x, p[0], p[1])?;
    let h = tape_act(tape, hidden, z)?;
    let z = tape.dense(h, p[2], p[3])?;
    tape_act(tape, out, z)
}

/// Per-chunk binary classifier `4 → 16 → 1`; output near 1 means "generated".
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub params: Vec<Tensor>,
}

impl Discriminator {
    pub const HIDDEN: usize = 16;

    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let h = Self::HIDDEN;
        Discriminator {
            params: vec![
                gaussian_matrix(rng, h, CHUNK_DIM, libm::sqrt(2.0 / CHUNK_DIM as f64)),
                Tensor::zeros(vec![h]),
                gaussian_matrix(rng, 1, h, libm::sqrt(1.0 / h as f64)),
                Tensor::zeros(vec![1]),
            ],
        }
    }

    pub fn zeros() -> Self {
        let h = Self::HIDDEN;
        Discriminator {
            params: vec![
                Tensor::zeros(vec![h, CHUNK_DIM]),
                Tensor::zeros(vec![h]),
                Tensor::zeros(vec![1, h]),
                Tensor::zeros(vec![1]),
            ],
        }
    }

    /// Probability in `[ε, 1 − ε]` that `chunk` came from the generator.
    pub fn discriminate(&self, chunk: &[f64]) -> f64 {
        mlp_forward(&self.params, chunk, Act::Leaky, Act::Sigmoid)[0]
    }

    /// Records the forward pass on `tape` with the given parameter handles.
    pub fn on_tape(tape: &mut Tape, params: &[Var], chunk: Var) -> Result<Var> {
        mlp_tape(tape, params, chunk, Act::Leaky, Act::Sigmoid)
    }

    /// `mean log d(generated) + mean log(1 − d(prior))`.
    pub fn objective(&self, prior: &[[f64; CHUNK_DIM]], generated: &[[f64; CHUNK_DIM]]) -> Result<f64> {
        Ok(self.objective_with_grad(prior, generated, false)?.0)
    }

    /// Objective value and, if requested, its gradient with respect to the
    /// parameters.
    pub fn objective_with_grad(
        &self,
        prior: &[[f64; CHUNK_DIM]],
        generated: &[[f64; CHUNK_DIM]],
        with_grad: bool,
    ) -> Result<(f64, Vec<Tensor>)> {
        if prior.is_empty() || generated.is_empty() {
            return Err(Error::Empty("discriminator needs prior and generated chunks"));
        }
        let mut tape = Tape::new();
        let p: Vec<Var> = self.params.iter().map(|t| tape.param(t.clone())).collect();
        let mut gen_terms = Vec::with_capacity(generated.len());
        for c in generated {
            let x = tape.constant(Tensor::vector(c.to_vec()));
            let d = Self::on_tape(&mut tape, &p, x)?;
            gen_terms.push(tape.ln(d)?);
        }
        let mut prior_terms = Vec::with_capacity(prior.len());
        for c in prior {
            let x = tape.constant(Tensor::vector(c.to_vec()));
            let d = Self::on_tape(&mut tape, &p, x)?;
            let one_minus = tape.affine(d, -1.0, 1.0)?;
            prior_terms.push(tape.ln(one_minus)?);
        }
        let g = tape.concat(&gen_terms)?;
        let g = tape.mean(g)?;
        let q = tape.concat(&prior_terms)?;
        let q = tape.mean(q)?;
        let total = tape.add(g, q)?;
        let value = tape.scalar(total)?;
        if !with_grad {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(total)?;
        let g = p.iter().map(|&v| grads.get_or_zeros(v, &tape)).collect::<Result<_>>()?;
        Ok((value, g))
    }
}

/// Classical benchmark generator `noise_dim → 8 → 4` with tanh activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalGenerator {
    pub params: Vec<Tensor>,
}

impl ClassicalGenerator {
    pub const HIDDEN: usize = 8;

    /// Random weights; hidden biases cancel the mean noise input so the tanh
    /// units start unsaturated.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, noise_dim: usize, law: &NoiseLaw) -> Self {
        let h = Self::HIDDEN;
        let w1 = gaussian_matrix(rng, h, noise_dim, libm::sqrt(1.0 / noise_dim as f64));
        let m = law.mean();
        let b1 = Tensor::vector(w1.data().chunks(noise_dim).map(|row| -m * row.iter().sum::<f64>()).collect());
        let w2 = gaussian_matrix(rng, CHUNK_DIM, h, libm::sqrt(1.0 / h as f64));
        ClassicalGenerator { params: vec![w1, b1, w2, Tensor::zeros(vec![CHUNK_DIM])] }
    }

    pub fn noise_dim(&self) -> usize {
        self.params[0].shape()[1]
    }

    pub fn forward(&self, noise: &[f64]) -> [f64; CHUNK_DIM] {
        let o = mlp_forward(&self.params, noise, Act::Tanh, Act::Tanh);
        [o[0], o[1], o[2], o[3]]
    }
}

/// PQC sampler: the template's `⟨Z⟩` values for one noise vector form one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumGenerator {
    pub template: CircuitTemplate,
    pub theta: Tensor,
}

impl QuantumGenerator {
    pub fn new(template: CircuitTemplate, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != template.param_count() {
            return Err(Error::SlotCount { what: "parameter", expected: template.param_count(), got: theta.len() });
        }
        if template.n_qubits() != CHUNK_DIM {
            return Err(Error::SlotCount { what: "sampler output", expected: CHUNK_DIM, got: template.n_qubits() });
        }
        Ok(QuantumGenerator { template, theta: Tensor::vector(theta) })
    }

    /// Angles drawn uniformly from `[0, 2π)`.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, template: CircuitTemplate) -> Result<Self> {
        let theta = (0..template.param_count()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self::new(template, theta)
    }

    pub fn forward(&self, noise: &[f64]) -> Result<[f64; CHUNK_DIM]> {
        let o = self.template.run(self.theta.data(), noise)?;
        Ok([o[0], o[1], o[2], o[3]])
    }
}

/// Mean-field Gaussian over the 64 weights, `σ = softplus(ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Tensor,
    pub rho: Tensor,
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// `ln(eˣ − 1)`, the inverse of [`softplus`].
pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        libm::log(libm::expm1(y))
    }
}

impl GaussianPosterior {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, mean_std: f64, sigma: f64) -> Self {
        let n = N_CHUNKS * CHUNK_DIM;
        let mu = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                mean_std * z
            })
            .collect();
        GaussianPosterior { mu: Tensor::vector(mu), rho: Tensor::vector(vec![inverse_softplus(sigma); n]) }
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.data().iter().map(|&r| softplus(r)).collect()
    }

    /// Analytic `KL(q ‖ N(0, s²))` summed over all weights, with its gradient
    /// with respect to `(μ, ρ)`.
    pub fn kl_to_gaussian(&self, prior_std: f64) -> (f64, [Tensor; 2]) {
        let s2 = prior_std * prior_std;
        let mut kl = 0.0;
        let n = self.mu.len();
        let (mut gm, mut gr) = (vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            let (m, r) = (self.mu.data()[k], self.rho.data()[k]);
            let s = softplus(r);
            kl += libm::log(prior_std / s) + (s * s + m * m) / (2.0 * s2) - 0.5;
            gm[k] = m / s2;
            gr[k] = (-1.0 / s + s / s2) * crate::autodiff::sigmoid(r);
        }
        (kl, [Tensor::vector(gm), Tensor::vector(gr)])
    }
}

/// `KL(N(m1, s1²) ‖ N(m2, s2²))`.
pub fn gaussian_kl(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    libm::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5
}

/// Interchangeable weight sources behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    Quantum(QuantumGenerator),
    Classical(ClassicalGenerator),
    Gaussian(GaussianPosterior),
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Quantum(_) => "quantum",
            Sampler::Classical(_) => "classical",
            Sampler::Gaussian(_) => "gaussian",
        }
    }

    /// Noise components consumed per chunk.
    pub fn noise_dim(&self) -> usize {
        match self {
            Sampler::Quantum(q) => q.template.input_count(),
            Sampler::Classical(c) => c.noise_dim(),
            Sampler::Gaussian(_) => CHUNK_DIM,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Sampler::Quantum(q) => vec![&q.theta],
            Sampler::Classical(c) => c.params.iter().collect(),
            Sampler::Gaussian(g) => vec![&g.mu, &g.rho],
        }
    }

    /// Runs `f` on the parameter tensors as one mutable slice.
    pub fn with_params_mut<T>(&mut self, f: impl FnOnce(&mut [Tensor]) -> T) -> T {
        match self {
            Sampler::Quantum(q) => f(core::slice::from_mut(&mut q.theta)),
            Sampler::Classical(c) => f(&mut c.params),
            Sampler::Gaussian(g) => {
                let mut pair = [core::mem::take(&mut g.mu), core::mem::take(&mut g.rho)];
                let out = f(&mut pair);
                let [mu, rho] = pair;
                g.mu = mu;
                g.rho = rho;
                out
            }
        }
    }

    /// Draws 16 noise vectors and maps each to one chunk. The Gaussian
    /// posterior always uses standard normal noise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, law: &NoiseLaw) -> Result<WeightSample> {
        let dim = self.noise_dim();
        let noise: Vec<NoiseVector> = match self {
            Sampler::Gaussian(_) => {
                let std_normal = NoiseLaw::Gaussian { mean: 0.0, std: 1.0 };
                (0..N_CHUNKS).map(|_| sample_noise(rng, &std_normal, dim)).collect()
            }
            _ => (0..N_CHUNKS).map(|_| sample_noise(rng, law, dim)).collect(),
        };
        self.evaluate(noise)
    }

    /// Deterministic map from recorded noise to weights.
    pub fn evaluate(&self, noise: Vec<NoiseVector>) -> Result<WeightSample> {
        let chunks = noise
            .iter()
            .enumerate()
            .map(|(k, n)| self.chunk(k, &n.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightSample { chunks, noise })
    }

    fn chunk(&self, k: usize, noise: &[f64]) -> Result<[f64; CHUNK_DIM]> {
        if noise.len() != self.noise_dim() {
            return Err(Error::SlotCount { what: "noise", expected: self.noise_dim(), got: noise.len() });
        }
        match self {
            Sampler::Quantum(q) => q.forward(noise),
            Sampler::Classical(c) => Ok(c.forward(noise)),
            Sampler::Gaussian(g) => {
                let base = k * CHUNK_DIM;
                if base + CHUNK_DIM > g.mu.len() {
                    return Err(Error::Shape(format!("chunk {k} beyond {} posterior weights", g.mu.len())));
                }
                let mut out = [0.0; CHUNK_DIM];
                for (j, o) in out.iter_mut().enumerate() {
                    let i = base + j;
                    *o = g.mu.data()[i] + softplus(g.rho.data()[i]) * noise[j];
                }
                Ok(out)
            }
        }
    }

    /// Pulls `∂L/∂flat` (64 values, one per weight of `sample`) back to the
    /// sampler parameters: parameter shift for the PQC, backprop otherwise.
    pub fn pullback(&self, sample: &WeightSample, upstream: &[f64]) -> Result<Vec<Tensor>> {
        let n = sample.chunks.len() * CHUNK_DIM;
        if upstream.len() != n {
            return Err(Error::Shape(format!("pullback: {} upstream values for {n} weights", upstream.len())));
        }
        match self {
            Sampler::Quantum(q) => {
                let mut g = vec![0.0; q.theta.len()];
                for (k, nv) in sample.noise.iter().enumerate() {
                    let up = &upstream[k * CHUNK_DIM..(k + 1) * CHUNK_DIM];
                    if up.iter().all(|&u| u == 0.0) {
                        continue;
                    }
                    let jac = q.template.parameter_shift_jacobian(q.theta.data(), &nv.values)?;
                    for (gi, v) in g.iter_mut().zip(jac.vjp(up)?) {
                        *gi += v;
                    }
                }
                Ok(vec![Tensor::vector(g)])
            }
            Sampler::Classical(c) => {
                let mut tape = Tape::new();
                let p: Vec<Var> = c.params.iter().map(|t| tape.param(t.clone())).collect();
                let mut terms = Vec::with_capacity(sample.noise.len());
                for (k, nv) in sample.noise.iter().enumerate() {
                    let x = tape.constant(Tensor::vector(nv.values.clone()));
                    let y = mlp_tape(&mut tape, &p, x, Act::Tanh, Act::Tanh)?;
                    let u = tape.constant(Tensor::vector(upstream[k * CHUNK_DIM..(k + 1) * CHUNK_DIM].to_vec()));
                    let prod = tape.mul(y, u)?;
                    terms.push(tape.sum(prod)?);
                }
                let all = tape.concat(&terms)?;
                let total = tape.sum(all)?;
                let grads = tape.backward(total)?;
                p.iter().map(|&v| grads.get_or_zeros(v, &tape)).collect()
            }
            Sampler::Gaussian(g) => {
                let mut gm = vec![0.0; g.mu.len()];
                let mut gr = vec![0.0; g.rho.len()];
                for (k, nv) in sample.noise.iter().enumerate() {
                    for j in 0..CHUNK_DIM {
                        let i = k * CHUNK_DIM + j;
                        let u = upstream[i];
                        gm[i] += u;
                        gr[i] += u * nv.values[j] * crate::autodiff::sigmoid(g.rho.data()[i]);
                    }
                }
                Ok(vec![Tensor::vector(gm), Tensor::vector(gr)])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use crate::zoo::{assemble_pqc, ArchitectureId, PqcSpec};

    fn quantum(arch: ArchitectureId, seed: u64) -> Sampler {
        let t = assemble_pqc(&PqcSpec::new(arch, 4, 1, false)).unwrap();
        Sampler::Quantum(QuantumGenerator::init(&mut stream(seed, Purpose::Init, 0), t).unwrap())
    }

    fn classical(seed: u64) -> Sampler {
        Sampler::Classical(ClassicalGenerator::init(&mut stream(seed, Purpose::Init, 0), 4, &NoiseLaw::default()))
    }

    #[test]
    fn noise_is_deterministic_and_centred() {
        let law = NoiseLaw::default();
        let a = sample_noise(&mut stream(42, Purpose::Noise, 0), &law, 4);
        let b = sample_noise(&mut stream(42, Purpose::Noise, 0), &law, 4);
        assert_eq!(a, b);
        let mut rng = stream(42, Purpose::Noise, 1);
        let draws = sample_noise(&mut rng, &law, 10_000);
        let mean = draws.values.iter().sum::<f64>() / 1e4;
        assert!((mean - PI).abs() < 0.05, "{mean}");
        assert!(draws.values.iter().all(|&v| (0.0..2.0 * PI).contains(&v)));
        let constant = sample_noise(&mut rng, &NoiseLaw::Gaussian { mean: 0.3, std: 0.0 }, 5);
        assert!(constant.values.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn prior_statistics() {
        let mut rng = stream(3, Purpose::Prior, 0);
        let mut sums = [0.0; 4];
        for _ in 0..100_000 {
            let s = prior_sample(&PriorSpec::Uniform, &mut rng);
            for (acc, v) in sums.iter_mut().zip(s) {
                assert!((-1.0..=1.0).contains(&v));
                *acc += v;
            }
        }
        assert!(sums.iter().all(|s| (s / 1e5).abs() < 0.02), "{sums:?}");
        let fixed = prior_sample(&PriorSpec::ClippedGaussian { mean: 0.4, std: 0.0 }, &mut rng);
        assert_eq!(fixed, [0.4; 4]);
        for _ in 0..1000 {
            let s = prior_sample(&PriorSpec::ClippedGaussian { mean: 0.9, std: 2.0 }, &mut rng);
            assert!(s.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn logit_values() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        assert!((logit(0.7310586).unwrap() - 1.0).abs() < 1e-6);
        assert!(logit(1.0).is_err());
        assert!(logit(0.0).is_err());
    }

    #[test]
    fn discriminator_zero_and_clamp() {
        let mut d = Discriminator::zeros();
        assert_eq!(d.discriminate(&[0.3, -0.2, 0.9, 1.0]), 0.5);
        d.params[3] = Tensor::vector(vec![1e3]);
        assert_eq!(d.discriminate(&[0.0; 4]), 1.0 - DISC_EPSILON);
        d.params[3] = Tensor::vector(vec![-1e3]);
        assert_eq!(d.discriminate(&[0.0; 4]), DISC_EPSILON);
        let p = [[0.1, 0.2, 0.3, 0.4]];
        let g = Discriminator::zeros().objective(&p, &p).unwrap();
        assert!((g - 2.0 * libm::log(0.5)).abs() < 1e-12);
        assert!(Discriminator::zeros().objective(&[], &p).is_err());
    }

    #[test]
    fn discriminator_objective_matches_direct_sum() {
        let mut rng = stream(9, Purpose::Init, 1);
        let d = Discriminator::init(&mut rng);
        let prior: Vec<_> = (0..7).map(|_| prior_sample(&PriorSpec::Uniform, &mut rng)).collect();
        let gen: Vec<_> = (0..5).map(|_| prior_sample(&PriorSpec::ClippedGaussian { mean: 0.5, std: 0.2 }, &mut rng)).collect();
        let direct = gen.iter().map(|c| libm::log(d.discriminate(c))).sum::<f64>() / 5.0
            + prior.iter().map(|c| libm::log(1.0 - d.discriminate(c))).sum::<f64>() / 7.0;
        assert!((d.objective(&prior, &gen).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn discriminator_gradient_matches_fd() {
        let mut rng = stream(11, Purpose::Init, 2);
        let d = Discriminator::init(&mut rng);
        let prior: Vec<_> = (0..6).map(|_| prior_sample(&PriorSpec::Uniform, &mut rng)).collect();
        let gen: Vec<_> = (0..6).map(|_| prior_sample(&PriorSpec::Uniform, &mut rng)).collect();
        let (_, g) = d.objective_with_grad(&prior, &gen, true).unwrap();
        let h = 1e-5;
        for (pi, gt) in g.iter().enumerate() {
            for k in 0..gt.len() {
                let mut a = d.clone();
                a.params[pi].data_mut()[k] += h;
                let mut b = d.clone();
                b.params[pi].data_mut()[k] -= h;
                let fd = (a.objective(&prior, &gen).unwrap() - b.objective(&prior, &gen).unwrap()) / (2.0 * h);
                assert!((fd - gt.data()[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {pi}[{k}]: {fd} vs {}", gt.data()[k]);
            }
        }
    }

    #[test]
    fn quantum_weights_in_range_and_deterministic() {
        for arch in ArchitectureId::ALL {
            let s = quantum(arch, 1);
            for i in 0..63 {
                let w = s.sample(&mut stream(1, Purpose::Noise, i), &NoiseLaw::default()).unwrap();
                assert_eq!(w.chunks.len(), N_CHUNKS);
                assert!(w.flat().iter().all(|v| (-1.0..=1.0).contains(v)));
            }
            let a = s.sample(&mut stream(5, Purpose::Noise, 0), &NoiseLaw::default()).unwrap();
            let b = s.sample(&mut stream(5, Purpose::Noise, 0), &NoiseLaw::default()).unwrap();
            assert_eq!(a, b);
            assert_eq!(s.evaluate(a.noise.clone()).unwrap(), a);
        }
    }

    #[test]
    fn flat_round_trip() {
        let w = classical(2).sample(&mut stream(2, Purpose::Noise, 0), &NoiseLaw::default()).unwrap();
        let k = w.kernels();
        assert_eq!(k.shape(), &KERNEL_SHAPE);
        assert_eq!(WeightSample::from_flat(k.data(), w.noise.clone()).unwrap(), w);
    }

    #[test]
    fn classical_zero_and_bounded() {
        let mut g = ClassicalGenerator::init(&mut stream(0, Purpose::Init, 0), 4, &NoiseLaw::default());
        for p in &mut g.params {
            *p = Tensor::zeros(p.shape().to_vec());
        }
        assert_eq!(g.forward(&[1.0, 2.0, 3.0, 4.0]), [0.0; 4]);
        let s = classical(4);
        let w = s.sample(&mut stream(4, Purpose::Noise, 0), &NoiseLaw::Gaussian { mean: 0.0, std: 50.0 }).unwrap();
        assert!(w.flat().iter().all(|v| v.abs() <= 1.0));
    }

    fn check_pullback(s: &Sampler, tol: f64) {
        let w = s.sample(&mut stream(8, Purpose::Noise, 0), &NoiseLaw::default()).unwrap();
        let mut rng = stream(8, Purpose::Inspection, 0);
        let up: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = s.pullback(&w, &up).unwrap();
        let f = |s: &Sampler| -> f64 {
            s.evaluate(w.noise.clone()).unwrap().flat().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        for (pi, gt) in g.iter().enumerate() {
            for k in 0..gt.len() {
                let (mut a, mut b) = (s.clone(), s.clone());
                a.with_params_mut(|p| p[pi].data_mut()[k] += h);
                b.with_params_mut(|p| p[pi].data_mut()[k] -= h);
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                assert!((fd - gt.data()[k]).abs() < tol * (1.0 + fd.abs()), "{} param {pi}[{k}]: {fd} vs {}", s.name(), gt.data()[k]);
            }
        }
    }

    #[test]
    fn pullbacks_match_fd() {
        check_pullback(&classical(6), 1e-6);
        check_pullback(&quantum(ArchitectureId::CircuitIII, 6), 1e-6);
        check_pullback(&quantum(ArchitectureId::MaticII, 6), 1e-6);
        let g = GaussianPosterior::init(&mut stream(6, Purpose::Init, 0), 0.5, 0.1);
        check_pullback(&Sampler::Gaussian(g), 1e-6);
    }

    #[test]
    fn gaussian_kl_closed_forms() {
        assert_eq!(gaussian_kl(0.0, 1.0, 0.0, 1.0), 0.0);
        assert!((gaussian_kl(1.0, 1.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        let g = GaussianPosterior { mu: Tensor::vector(vec![0.0, 1.0]), rho: Tensor::vector(vec![inverse_softplus(1.0); 2]) };
        let (kl, [gm, gr]) = g.kl_to_gaussian(1.0);
        assert!((kl - 0.5).abs() < 1e-12);
        assert!((gm.data()[1] - 1.0).abs() < 1e-12);
        assert!(gr.data()[0].abs() < 1e-12);
        let g2 = GaussianPosterior { mu: Tensor::vector(vec![0.3]), rho: Tensor::vector(vec![-0.7]) };
        let (_, [gm, gr]) = g2.kl_to_gaussian(0.5);
        let h = 1e-6;
        let kl_at = |m: f64, r: f64| GaussianPosterior { mu: Tensor::vector(vec![m]), rho: Tensor::vector(vec![r]) }.kl_to_gaussian(0.5).0;
        assert!(((kl_at(0.3 + h, -0.7) - kl_at(0.3 - h, -0.7)) / (2.0 * h) - gm.data()[0]).abs() < 1e-6);
        assert!(((kl_at(0.3, -0.7 + h) - kl_at(0.3, -0.7 - h)) / (2.0 * h) - gr.data()[0]).abs() < 1e-6);
        assert!((softplus(inverse_softplus(0.05)) - 0.05).abs() < 1e-15);
    }
}
