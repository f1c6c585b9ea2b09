//! Text run configuration: `key = value` lines, `#` comments and
//! `[section]` headers. Keys are unique across sections, so they may also
//! appear before any header.

use std::fmt::Write as _;
use std::path::PathBuf;

use qcbnn_core::data::Normalization;
use qcbnn_core::metrics::ConfidenceMode;
use qcbnn_core::samplers::{NoiseLaw, PriorSpec};
use qcbnn_core::train::{GeneratorKind, TrainConfig};
use qcbnn_core::zoo::{ArchitectureId, CrAxis, PairTopology, PqcSpec};

use crate::error::{LabError, Result};
use crate::formats::DataFormat;

pub const SECTIONS: [&str; 6] = ["model", "train", "data", "sweep", "report", "output"];
pub const N_QUBITS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorChoice {
    Quantum,
    Classical,
    /// Mean-field Gaussian posterior with analytic KL.
    Vi,
}

impl GeneratorChoice {
    pub fn id(self) -> &'static str {
        match self {
            GeneratorChoice::Quantum => "quantum",
            GeneratorChoice::Classical => "classical",
            GeneratorChoice::Vi => "vi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Inferred from the file extension when unset.
    pub format: Option<DataFormat>,
    pub height: usize,
    pub width: usize,
    pub normalization: Normalization,
    /// Synthetic split sizes; a zero validation or test size drops that split.
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub imbalance: f64,
    pub pixel_noise: f64,
    pub seed: u64,
    /// Train/validation/test fractions for file sources.
    pub fractions: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synth,
            format: None,
            height: 28,
            width: 28,
            normalization: Normalization::PerImage,
            n_train: 200,
            n_validation: 0,
            n_test: 50,
            imbalance: 0.27,
            pixel_noise: 0.1,
            seed: 0,
            fractions: [0.7, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub bins: usize,
    pub confidence: ConfidenceMode,
    pub kde_points: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { bins: 10, confidence: ConfidenceMode::OverallAccuracy, kde_points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub archs: Vec<ArchitectureId>,
    pub layers: Vec<usize>,
    pub reupload: Vec<bool>,
    pub generators: Vec<GeneratorChoice>,
    pub seeds: Vec<u64>,
    pub topology: PairTopology,
    pub cr_axis: CrAxis,
    pub noise_dim: usize,
    /// Everything except `generator` and `seed`, which come from the sweep.
    pub train: TrainConfig,
    pub data: DataConfig,
    pub report: ReportConfig,
    pub out: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            archs: vec![ArchitectureId::CircuitIII],
            layers: vec![1],
            reupload: vec![false],
            generators: vec![GeneratorChoice::Quantum],
            seeds: vec![0, 1, 2, 3],
            topology: PairTopology::Full,
            cr_axis: CrAxis::X,
            noise_dim: 4,
            train: TrainConfig::default(),
            data: DataConfig::default(),
            report: ReportConfig::default(),
            out: PathBuf::from("results"),
            threads: 0,
        }
    }
}

/// One sweep cell: a generator, and for the quantum generator a circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub choice: GeneratorChoice,
    pub generator: GeneratorKind,
}

impl Cell {
    pub fn pqc(&self) -> Option<&PqcSpec> {
        match &self.generator {
            GeneratorKind::Quantum(spec) => Some(spec),
            _ => None,
        }
    }
}

type Setter = fn(&mut RunConfig, &str) -> std::result::Result<(), String>;
type Getter = fn(&RunConfig) -> String;

struct Key {
    section: &'static str,
    name: &'static str,
    set: Setter,
    get: Getter,
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn list<T>(v: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    let items = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect::<std::result::Result<Vec<_>, _>>()?;
    if items.is_empty() {
        return Err(String::from("empty list"));
    }
    Ok(items)
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn noise_field(c: &mut RunConfig, which: usize, v: &str) -> std::result::Result<(), String> {
    let x: f64 = num(v)?;
    match (&mut c.train.noise, which) {
        (NoiseLaw::Uniform { lo, .. }, 0) | (NoiseLaw::Gaussian { mean: lo, .. }, 0) => *lo = x,
        (NoiseLaw::Uniform { hi, .. }, _) | (NoiseLaw::Gaussian { std: hi, .. }, _) => *hi = x,
    }
    Ok(())
}

fn noise_pair(c: &RunConfig) -> (f64, f64) {
    match c.train.noise {
        NoiseLaw::Uniform { lo, hi } => (lo, hi),
        NoiseLaw::Gaussian { mean, std } => (mean, std),
    }
}

fn prior_pair(c: &RunConfig) -> (f64, f64) {
    match c.train.prior {
        PriorSpec::ClippedGaussian { mean, std } => (mean, std),
        PriorSpec::Uniform => (0.0, 0.5),
    }
}

#[allow(clippy::unit_arg)]
const KEYS: &[Key] = &[
    Key {
        section: "model",
        name: "arch",
        set: |c, v| {
            c.archs = list(v, |s| s.parse::<ArchitectureId>().map_err(|e| e.to_string()))?;
            Ok(())
        },
        get: |c| join(&c.archs, |a| a.id().to_string()),
    },
    Key {
        section: "model",
        name: "layers",
        set: |c, v| {
            c.layers = list(v, num)?;
            Ok(())
        },
        get: |c| join(&c.layers, usize::to_string),
    },
    Key {
        section: "model",
        name: "reupload",
        set: |c, v| {
            c.reupload = list(v, flag)?;
            Ok(())
        },
        get: |c| join(&c.reupload, bool::to_string),
    },
    Key {
        section: "model",
        name: "generator",
        set: |c, v| {
            c.generators = list(v, |s| match s {
                "quantum" => Ok(GeneratorChoice::Quantum),
                "classical" => Ok(GeneratorChoice::Classical),
                "vi" => Ok(GeneratorChoice::Vi),
                _ => Err(format!("unknown generator {s:?}; valid: quantum, classical, vi")),
            })?;
            Ok(())
        },
        get: |c| join(&c.generators, |g| g.id().to_string()),
    },
    Key {
        section: "model",
        name: "noise_dim",
        set: |c, v| {
            c.noise_dim = num(v)?;
            Ok(())
        },
        get: |c| c.noise_dim.to_string(),
    },
    Key {
        section: "model",
        name: "embedding",
        set: |c, v| {
            c.topology = match v {
                "full" => PairTopology::Full,
                "adjacent" => PairTopology::Adjacent,
                _ => return Err(format!("expected full or adjacent, got {v:?}")),
            };
            Ok(())
        },
        get: |c| String::from(if c.topology == PairTopology::Full { "full" } else { "adjacent" }),
    },
    Key {
        section: "model",
        name: "cr_axis",
        set: |c, v| {
            c.cr_axis = match v {
                "x" => CrAxis::X,
                "y" => CrAxis::Y,
                "z" => CrAxis::Z,
                _ => return Err(format!("expected x, y or z, got {v:?}")),
            };
            Ok(())
        },
        get: |c| String::from(match c.cr_axis {
            CrAxis::X => "x",
            CrAxis::Y => "y",
            CrAxis::Z => "z",
        }),
    },
    Key { section: "train", name: "epochs", set: |c, v| Ok(c.train.epochs = num(v)?), get: |c| c.train.epochs.to_string() },
    Key {
        section: "train",
        name: "batch_size",
        set: |c, v| Ok(c.train.batch_size = num(v)?),
        get: |c| c.train.batch_size.to_string(),
    },
    Key {
        section: "train",
        name: "mc_samples",
        set: |c, v| Ok(c.train.mc_samples = num(v)?),
        get: |c| c.train.mc_samples.to_string(),
    },
    Key {
        section: "train",
        name: "eval_ensemble",
        set: |c, v| Ok(c.train.eval_ensemble = num(v)?),
        get: |c| c.train.eval_ensemble.to_string(),
    },
    Key { section: "train", name: "alpha", set: |c, v| Ok(c.train.alpha = num(v)?), get: |c| c.train.alpha.to_string() },
    Key { section: "train", name: "beta", set: |c, v| Ok(c.train.beta = num(v)?), get: |c| c.train.beta.to_string() },
    Key {
        section: "train",
        name: "lr_generator",
        set: |c, v| Ok(c.train.lr_generator = num(v)?),
        get: |c| c.train.lr_generator.to_string(),
    },
    Key {
        section: "train",
        name: "lr_discriminator",
        set: |c, v| Ok(c.train.lr_discriminator = num(v)?),
        get: |c| c.train.lr_discriminator.to_string(),
    },
    Key {
        section: "train",
        name: "lr_classifier",
        set: |c, v| Ok(c.train.lr_classifier = num(v)?),
        get: |c| c.train.lr_classifier.to_string(),
    },
    Key {
        section: "train",
        name: "disc_steps",
        set: |c, v| Ok(c.train.disc_steps = num(v)?),
        get: |c| c.train.disc_steps.to_string(),
    },
    Key {
        section: "train",
        name: "noise",
        set: |c, v| {
            let (a, b) = noise_pair(c);
            c.train.noise = match v {
                "uniform" => NoiseLaw::Uniform { lo: a, hi: b },
                "gaussian" => NoiseLaw::Gaussian { mean: a, std: b },
                _ => return Err(format!("expected uniform or gaussian, got {v:?}")),
            };
            Ok(())
        },
        get: |c| String::from(if matches!(c.train.noise, NoiseLaw::Uniform { .. }) { "uniform" } else { "gaussian" }),
    },
    Key { section: "train", name: "noise_a", set: |c, v| noise_field(c, 0, v), get: |c| noise_pair(c).0.to_string() },
    Key { section: "train", name: "noise_b", set: |c, v| noise_field(c, 1, v), get: |c| noise_pair(c).1.to_string() },
    Key {
        section: "train",
        name: "prior",
        set: |c, v| {
            let (mean, std) = prior_pair(c);
            c.train.prior = match v {
                "uniform" => PriorSpec::Uniform,
                "clipped_gaussian" => PriorSpec::ClippedGaussian { mean, std },
                _ => return Err(format!("expected uniform or clipped_gaussian, got {v:?}")),
            };
            Ok(())
        },
        get: |c| String::from(if c.train.prior == PriorSpec::Uniform { "uniform" } else { "clipped_gaussian" }),
    },
    Key {
        section: "train",
        name: "prior_mean",
        set: |c, v| {
            let x = num(v)?;
            if let PriorSpec::ClippedGaussian { mean, .. } = &mut c.train.prior {
                *mean = x;
            }
            Ok(())
        },
        get: |c| prior_pair(c).0.to_string(),
    },
    Key {
        section: "train",
        name: "prior_std",
        set: |c, v| {
            let x = num(v)?;
            if let PriorSpec::ClippedGaussian { std, .. } = &mut c.train.prior {
                *std = x;
            }
            Ok(())
        },
        get: |c| prior_pair(c).1.to_string(),
    },
    Key {
        section: "train",
        name: "vi_prior_std",
        set: |c, v| Ok(c.train.vi_prior_std = num(v)?),
        get: |c| c.train.vi_prior_std.to_string(),
    },
    Key { section: "train", name: "stride", set: |c, v| Ok(c.train.stride = num(v)?), get: |c| c.train.stride.to_string() },
    Key {
        section: "data",
        name: "source",
        set: |c, v| {
            c.data.source = if v == "synth" { DataSource::Synth } else { DataSource::File(PathBuf::from(v)) };
            Ok(())
        },
        get: |c| match &c.data.source {
            DataSource::Synth => String::from("synth"),
            DataSource::File(p) => p.display().to_string(),
        },
    },
    Key {
        section: "data",
        name: "format",
        set: |c, v| {
            c.data.format = match v {
                "auto" => None,
                "binary" => Some(DataFormat::Binary),
                "csv" => Some(DataFormat::Csv),
                _ => return Err(format!("expected auto, binary or csv, got {v:?}")),
            };
            Ok(())
        },
        get: |c| String::from(match c.data.format {
            None => "auto",
            Some(DataFormat::Binary) => "binary",
            Some(DataFormat::Csv) => "csv",
        }),
    },
    Key { section: "data", name: "height", set: |c, v| Ok(c.data.height = num(v)?), get: |c| c.data.height.to_string() },
    Key { section: "data", name: "width", set: |c, v| Ok(c.data.width = num(v)?), get: |c| c.data.width.to_string() },
    Key {
        section: "data",
        name: "normalization",
        set: |c, v| {
            c.data.normalization = match v {
                "per_image" => Normalization::PerImage,
                "global" => Normalization::Global,
                _ => return Err(format!("expected per_image or global, got {v:?}")),
            };
            Ok(())
        },
        get: |c| String::from(if c.data.normalization == Normalization::PerImage { "per_image" } else { "global" }),
    },
    Key { section: "data", name: "n_train", set: |c, v| Ok(c.data.n_train = num(v)?), get: |c| c.data.n_train.to_string() },
    Key {
        section: "data",
        name: "n_validation",
        set: |c, v| Ok(c.data.n_validation = num(v)?),
        get: |c| c.data.n_validation.to_string(),
    },
    Key { section: "data", name: "n_test", set: |c, v| Ok(c.data.n_test = num(v)?), get: |c| c.data.n_test.to_string() },
    Key {
        section: "data",
        name: "imbalance",
        set: |c, v| Ok(c.data.imbalance = num(v)?),
        get: |c| c.data.imbalance.to_string(),
    },
    Key {
        section: "data",
        name: "pixel_noise",
        set: |c, v| Ok(c.data.pixel_noise = num(v)?),
        get: |c| c.data.pixel_noise.to_string(),
    },
    Key { section: "data", name: "data_seed", set: |c, v| Ok(c.data.seed = num(v)?), get: |c| c.data.seed.to_string() },
    Key {
        section: "data",
        name: "fractions",
        set: |c, v| {
            let f: Vec<f64> = list(v, num)?;
            c.data.fractions = f.try_into().map_err(|_| String::from("expected three fractions"))?;
            Ok(())
        },
        get: |c| join(&c.data.fractions, f64::to_string),
    },
    Key {
        section: "sweep",
        name: "seed",
        set: |c, v| {
            c.seeds = list(v, num)?;
            Ok(())
        },
        get: |c| join(&c.seeds, u64::to_string),
    },
    Key {
        section: "report",
        name: "ensemble",
        set: |c, v| Ok(c.train.ensemble = num(v)?),
        get: |c| c.train.ensemble.to_string(),
    },
    Key { section: "report", name: "bins", set: |c, v| Ok(c.report.bins = num(v)?), get: |c| c.report.bins.to_string() },
    Key {
        section: "report",
        name: "confidence",
        set: |c, v| {
            c.report.confidence = match v {
                "overall" => ConfidenceMode::OverallAccuracy,
                "subset" => ConfidenceMode::SubsetAccuracy,
                _ => return Err(format!("expected overall or subset, got {v:?}")),
            };
            Ok(())
        },
        get: |c| {
            String::from(if c.report.confidence == ConfidenceMode::OverallAccuracy { "overall" } else { "subset" })
        },
    },
    Key {
        section: "report",
        name: "kde_points",
        set: |c, v| Ok(c.report.kde_points = num(v)?),
        get: |c| c.report.kde_points.to_string(),
    },
    Key {
        section: "output",
        name: "out",
        set: |c, v| {
            c.out = PathBuf::from(v);
            Ok(())
        },
        get: |c| c.out.display().to_string(),
    },
    Key { section: "output", name: "threads", set: |c, v| Ok(c.threads = num(v)?), get: |c| c.threads.to_string() },
];

impl RunConfig {
    /// Parses a config text on top of the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies config lines without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section: Option<&str> = None;
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| LabError::Config(format!("line {}: {msg}", n + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| at(format!("malformed section header {line:?}")))?.trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|s| **s == name)
                        .ok_or_else(|| at(format!("unknown section [{name}]; valid: {}", SECTIONS.join(", "))))?,
                );
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let spec = KEYS.iter().find(|k| k.name == key).ok_or_else(|| at(format!("unknown key `{key}`")))?;
            if let Some(s) = section {
                if spec.section != s {
                    return Err(at(format!("key `{key}` belongs in [{}], not [{s}]", spec.section)));
                }
            }
            if seen.contains(&spec.name) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            seen.push(spec.name);
            (spec.set)(self, value).map_err(|e| at(format!("{key}: {e}")))?;
        }
        Ok(())
    }

    /// Sets one key, as from a command-line flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let spec = KEYS.iter().find(|k| k.name == key).ok_or_else(|| LabError::Config(format!("unknown key `{key}`")))?;
        (spec.set)(self, value.trim()).map_err(|e| LabError::Config(format!("{key}: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| LabError::Config(m);
        self.depth_pairs()?;
        self.train.validate().map_err(|e| cfg(e.to_string()))?;
        if self.layers.contains(&0) {
            return Err(cfg(String::from("layers must be positive")));
        }
        if self.noise_dim == 0 {
            return Err(cfg(String::from("noise_dim must be positive")));
        }
        if self.report.bins < 2 {
            return Err(cfg(String::from("bins must be at least 2")));
        }
        if self.report.kde_points < 2 {
            return Err(cfg(String::from("kde_points must be at least 2")));
        }
        let d = &self.data;
        if d.source == DataSource::Synth && d.n_train < 2 {
            return Err(cfg(String::from("n_train must be at least 2")));
        }
        if !(d.imbalance > 0.0 && d.imbalance < 1.0) {
            return Err(cfg(format!("imbalance must lie in (0, 1), got {}", d.imbalance)));
        }
        let sum: f64 = d.fractions.iter().sum();
        if d.fractions.iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(cfg(format!("fractions must be non-negative and sum to 1, got {:?}", d.fractions)));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(cfg(String::from("duplicate seeds in sweep")));
        }
        Ok(())
    }

    /// `layers` and `reupload` zipped, broadcasting a length-1 list.
    pub fn depth_pairs(&self) -> Result<Vec<(usize, bool)>> {
        let (nl, nr) = (self.layers.len(), self.reupload.len());
        if nl != nr && nl != 1 && nr != 1 {
            return Err(LabError::Config(format!("conflicting sweep lengths: layers has {nl} entries, reupload {nr}")));
        }
        let n = nl.max(nr);
        Ok((0..n).map(|i| (self.layers[i.min(nl - 1)], self.reupload[i.min(nr - 1)])).collect())
    }

    /// Sweep cells in deterministic order: generators, then architectures,
    /// then depth variants. Non-quantum generators form a single cell.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let depths = self.depth_pairs()?;
        let mut cells = Vec::new();
        for &choice in &self.generators {
            match choice {
                GeneratorChoice::Quantum => {
                    for &arch in &self.archs {
                        for &(layers, reupload) in &depths {
                            let spec = PqcSpec {
                                topology: self.topology,
                                cr_axis: self.cr_axis,
                                ..PqcSpec::new(arch, N_QUBITS, layers, reupload)
                            };
                            let name = format!("{}_L{layers}{}", arch.id(), if reupload { "_re" } else { "" });
                            cells.push(Cell { name, choice, generator: GeneratorKind::Quantum(spec) });
                        }
                    }
                }
                GeneratorChoice::Classical => cells.push(Cell {
                    name: String::from("classical"),
                    choice,
                    generator: GeneratorKind::Classical { noise_dim: self.noise_dim },
                }),
                GeneratorChoice::Vi => {
                    cells.push(Cell { name: String::from("vi"), choice, generator: GeneratorKind::Gaussian })
                }
            }
        }
        let mut names: Vec<&str> = cells.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(LabError::Config(String::from("sweep lists repeat a cell")));
        }
        Ok(cells)
    }

    /// Training settings of one (cell, seed) run.
    pub fn train_config(&self, cell: &Cell, seed: u64) -> TrainConfig {
        TrainConfig { generator: cell.generator, seed, ..self.train }
    }

    /// Effective configuration in the same text format; parsing it back
    /// yields an equal config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for section in SECTIONS {
            let _ = writeln!(out, "[{section}]");
            for key in KEYS.iter().filter(|k| k.section == section) {
                let _ = writeln!(out, "{} = {}", key.name, (key.get)(self));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# only a comment\n\n").unwrap(), RunConfig::default());
        let d = RunConfig::default();
        assert_eq!(d.seeds, vec![0, 1, 2, 3]);
        assert_eq!(d.archs, vec![ArchitectureId::CircuitIII]);
    }

    #[test]
    fn arch_parsing() {
        let c = RunConfig::parse("arch = circuit_iii").unwrap();
        assert_eq!(c.archs, vec![ArchitectureId::CircuitIII]);
        let err = RunConfig::parse("[model]\narch = circuit_v").unwrap_err();
        let msg = err.to_string();
        for a in ArchitectureId::ALL {
            assert!(msg.contains(a.id()), "{msg}");
        }
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("learning_rate = 1").unwrap_err().to_string().contains("unknown key"));
        assert!(RunConfig::parse("[train]\narch = matic_i").unwrap_err().to_string().contains("belongs in [model]"));
        assert!(RunConfig::parse("[nope]").is_err());
        assert!(RunConfig::parse("epochs = ten").unwrap_err().to_string().contains("line 1"));
        assert!(RunConfig::parse("epochs = 0").is_err());
        assert!(RunConfig::parse("epochs = 3\nepochs = 4").unwrap_err().to_string().contains("duplicate"));
        assert!(RunConfig::parse("fractions = 0.5, 0.5").is_err());
    }

    #[test]
    fn sweep_zipping() {
        let c = RunConfig::parse("layers = 1, 2\nreupload = false, true").unwrap();
        assert_eq!(c.depth_pairs().unwrap(), vec![(1, false), (2, true)]);
        let c = RunConfig::parse("layers = 1, 2, 3\nreupload = true").unwrap();
        assert_eq!(c.depth_pairs().unwrap(), vec![(1, true), (2, true), (3, true)]);
        let err = RunConfig::parse("layers = 1, 2, 3\nreupload = true, false").unwrap_err();
        assert!(err.to_string().contains("conflicting sweep lengths"));
    }

    #[test]
    fn cells_enumerate_the_zoo() {
        let ids: Vec<&str> = ArchitectureId::ALL.iter().map(|a| a.id()).collect();
        let c = RunConfig::parse(&format!("arch = {}\ngenerator = quantum, classical, vi", ids.join(","))).unwrap();
        let cells = c.cells().unwrap();
        assert_eq!(cells.len(), 10);
        assert_eq!(cells[6].name, "circuit_iii_L1");
        assert_eq!(cells[8].name, "classical");
        assert_eq!(c.train_config(&cells[9], 7).seed, 7);
        assert!(RunConfig::parse("arch = matic_i, matic_i").unwrap().cells().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = "[model]\narch = matic_i, circuit_iv\nlayers = 2\nreupload = true\n[train]\nnoise = gaussian\n\
                    noise_a = 0.5\nnoise_b = 2\nprior = clipped_gaussian\nprior_std = 0.3\nlr_generator = 0.05\n\
                    [data]\nsource = data/x.csv\nformat = csv\n[sweep]\nseed = 5, 9\n[output]\nout = /tmp/o\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.train.noise, NoiseLaw::Gaussian { mean: 0.5, std: 2.0 });
        assert_eq!(c.train.prior, PriorSpec::ClippedGaussian { mean: 0.0, std: 0.3 });
        assert_eq!(RunConfig::parse(&c.echo()).unwrap(), c);
        assert_eq!(RunConfig::parse(&RunConfig::default().echo()).unwrap(), RunConfig::default());
    }

    #[test]
    fn set_mirrors_file_keys() {
        let mut c = RunConfig::default();
        c.set("arch", "romero").unwrap();
        c.set("alpha", "0.5").unwrap();
        c.set("ensemble", "20").unwrap();
        assert_eq!(c.archs, vec![ArchitectureId::Romero]);
        assert_eq!((c.train.alpha, c.train.ensemble), (0.5, 20));
        assert!(c.set("bogus", "1").is_err());
    }
}
